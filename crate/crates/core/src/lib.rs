//! Numerical laboratory for Kähler angles of 2n-dimensional submanifolds in
//! Kähler and Kähler–Einstein manifolds.

pub mod angles;
pub mod error;
pub mod fd;
pub mod flow;
pub mod identities;
pub mod immersion;
pub mod runner;
pub mod scalar;
pub mod target;
pub mod tensor;

pub use error::{KalError, Result};
pub use fd::FdSettings;
pub use identities::{IdentityReport, OracleMeta, Verdict};
pub use immersion::{ImmersionChart, JetMode};
pub use target::TargetGeometry;
pub use tensor::MetricTensor;
