//! Central finite differences of vector-valued fields on ℝ^d.

use serde::{Deserialize, Serialize};

use crate::error::{KalError, Result};

/// Step and order for central differences.
///
/// The step is relative: along coordinate i the actual step is
/// `step·(1 + |x_i|)`. Second derivatives use one Richardson level when
/// `order == 4`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdSettings {
    pub step: f64,
    pub order: u8,
}

impl Default for FdSettings {
    fn default() -> Self {
        FdSettings { step: 1e-3, order: 4 }
    }
}

impl FdSettings {
    pub fn new(step: f64, order: u8) -> Result<Self> {
        let s = FdSettings { step, order };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite()) || self.step < 1e-10 {
            return Err(KalError::StepUnderflow(self.step));
        }
        if self.order != 2 && self.order != 4 {
            return Err(KalError::InvalidParameter(format!(
                "fd order must be 2 or 4, got {}",
                self.order
            )));
        }
        Ok(())
    }

    pub fn step_at(&self, x: f64) -> f64 {
        self.step * (1.0 + x.abs())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        FdSettings { step: self.step * factor, order: self.order }
    }
}

fn shifted(x: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut y = x.to_vec();
    for &(i, d) in moves {
        y[i] += d;
    }
    y
}

fn axpy(acc: &mut [f64], a: f64, v: &[f64]) {
    for (s, vi) in acc.iter_mut().zip(v) {
        *s += a * vi;
    }
}

/// First derivatives, indexed `[direction][component]`.
pub fn gradient<F>(f: &F, x: &[f64], fd: &FdSettings) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
{
    fd.validate()?;
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = fd.step_at(x[i]);
        let fp = f(&shifted(x, &[(i, h)]))?;
        let fm = f(&shifted(x, &[(i, -h)]))?;
        let mut d = vec![0.0; fp.len()];
        if fd.order == 2 {
            axpy(&mut d, 0.5 / h, &fp);
            axpy(&mut d, -0.5 / h, &fm);
        } else {
            let fpp = f(&shifted(x, &[(i, 2.0 * h)]))?;
            let fmm = f(&shifted(x, &[(i, -2.0 * h)]))?;
            let c = 1.0 / (12.0 * h);
            axpy(&mut d, 8.0 * c, &fp);
            axpy(&mut d, -8.0 * c, &fm);
            axpy(&mut d, -c, &fpp);
            axpy(&mut d, c, &fmm);
        }
        out.push(d);
    }
    Ok(out)
}

fn hessian_order2<F>(f: &F, x: &[f64], f0: &[f64], hs: &[f64]) -> Result<Vec<Vec<Vec<f64>>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
{
    let d = x.len();
    let mut out = vec![vec![vec![0.0; f0.len()]; d]; d];
    for i in 0..d {
        let hi = hs[i];
        let fp = f(&shifted(x, &[(i, hi)]))?;
        let fm = f(&shifted(x, &[(i, -hi)]))?;
        let mut v = vec![0.0; f0.len()];
        axpy(&mut v, 1.0 / (hi * hi), &fp);
        axpy(&mut v, -2.0 / (hi * hi), f0);
        axpy(&mut v, 1.0 / (hi * hi), &fm);
        out[i][i] = v;
        for j in 0..i {
            let hj = hs[j];
            let c = 1.0 / (4.0 * hi * hj);
            let mut v = vec![0.0; f0.len()];
            axpy(&mut v, c, &f(&shifted(x, &[(i, hi), (j, hj)]))?);
            axpy(&mut v, -c, &f(&shifted(x, &[(i, hi), (j, -hj)]))?);
            axpy(&mut v, -c, &f(&shifted(x, &[(i, -hi), (j, hj)]))?);
            axpy(&mut v, c, &f(&shifted(x, &[(i, -hi), (j, -hj)]))?);
            out[j][i] = v.clone();
            out[i][j] = v;
        }
    }
    Ok(out)
}

/// Second derivatives, indexed `[i][j][component]` and symmetric in (i, j).
pub fn hessian<F>(f: &F, x: &[f64], fd: &FdSettings) -> Result<Vec<Vec<Vec<f64>>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
{
    fd.validate()?;
    let f0 = f(x)?;
    let hs: Vec<f64> = x.iter().map(|&xi| fd.step_at(xi)).collect();
    let fine = hessian_order2(f, x, &f0, &hs)?;
    if fd.order == 2 {
        return Ok(fine);
    }
    let hs2: Vec<f64> = hs.iter().map(|h| 2.0 * h).collect();
    let coarse = hessian_order2(f, x, &f0, &hs2)?;
    let mut out = fine;
    for (ri, ci) in out.iter_mut().zip(&coarse) {
        for (rij, cij) in ri.iter_mut().zip(ci) {
            for (a, b) in rij.iter_mut().zip(cij) {
                *a = (4.0 * *a - b) / 3.0;
            }
        }
    }
    Ok(out)
}

/// Directional second derivative along `v` (scalar field case helper).
pub fn second_along<F>(f: &F, x: &[f64], v: &[f64], fd: &FdSettings) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + ?Sized,
{
    fd.validate()?;
    let at = |t: f64| -> Result<f64> {
        let y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + t * b).collect();
        f(&y)
    };
    let scale = x.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let h = fd.step * (1.0 + scale);
    let f0 = at(0.0)?;
    let d2 = |h: f64| -> Result<f64> { Ok((at(h)? - 2.0 * f0 + at(-h)?) / (h * h)) };
    let fine = d2(h)?;
    if fd.order == 2 {
        return Ok(fine);
    }
    Ok((4.0 * fine - d2(2.0 * h)?) / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(x: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![x[0].sin() * x[1].exp(), x[0] * x[0] * x[1]])
    }

    #[test]
    fn gradient_order4_is_accurate() {
        let x = [0.4, -0.3];
        let g = gradient(&field, &x, &FdSettings::default()).unwrap();
        assert!((g[0][0] - 0.4f64.cos() * (-0.3f64).exp()).abs() < 1e-11);
        assert!((g[1][1] - 0.16).abs() < 1e-11);
    }

    #[test]
    fn hessian_richardson_is_accurate_and_symmetric() {
        let x = [0.4, -0.3];
        let h = hessian(&field, &x, &FdSettings::default()).unwrap();
        let exact_01 = 0.4f64.cos() * (-0.3f64).exp();
        assert!((h[0][1][0] - exact_01).abs() < 1e-9);
        assert_eq!(h[0][1], h[1][0]);
        assert!((h[0][0][1] - 2.0 * -0.3).abs() < 1e-9);
    }

    #[test]
    fn tiny_step_is_rejected() {
        let fd = FdSettings { step: 1e-14, order: 4 };
        assert!(matches!(gradient(&field, &[0.0, 0.0], &fd), Err(KalError::StepUnderflow(_))));
    }
}
