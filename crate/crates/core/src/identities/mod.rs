//! Registry of identity checks and the reports they produce.

mod delta_kappa;
mod first_order;
mod hyperkahler;
mod quadrature;
mod registry;
mod report;
mod support;
mod weitzenbock;

pub use registry::{find_check, registry, run_check, sample_point, select_checks, CheckInput, CheckSpec, Domain, Family};
pub use report::{IdentityReport, OracleMeta, Verdict};
