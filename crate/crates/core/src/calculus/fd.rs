use nalgebra::{DMatrix, DVector};

use super::{FieldMode, Jet2, ScalarField};
use crate::algebra::GroupPoint;
use crate::error::{Error, Result};

/// Declared relative tolerance of finite-difference jets.
pub const FD_TOLERANCE: f64 = 1e-6;

/// Central differences with step `h = 1e-4 (1 + ‖p‖)` and one Richardson level.
pub struct FiniteDifference<F> {
    f: F,
}

#[derive(Debug, Clone)]
pub struct FdEstimate {
    pub jet: Jet2,
    /// Largest change between the extrapolated and the half-step estimates,
    /// relative to `1 + |entry|`.
    pub richardson_error: f64,
}

pub fn finite_difference<S: ScalarField>(field: S) -> FiniteDifference<impl Fn(&GroupPoint) -> Result<f64> + Sync> {
    FiniteDifference::from_fn(move |p: &GroupPoint| field.value(p))
}

struct Raw {
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl<F: Fn(&GroupPoint) -> Result<f64> + Sync> FiniteDifference<F> {
    pub fn from_fn(f: F) -> Self {
        FiniteDifference { f }
    }

    fn eval(&self, c: &DVector<f64>, m: usize) -> Result<f64> {
        let v = (self.f)(&GroupPoint::from_coords(c, m))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("finite-difference sample"))
        }
    }

    fn raw(&self, c: &DVector<f64>, m: usize, f0: f64, h: f64) -> Result<Raw> {
        let n = c.len();
        let shifted = |i: usize, si: f64, j: usize, sj: f64| -> Result<f64> {
            let mut d = c.clone();
            d[i] += si;
            d[j] += sj;
            self.eval(&d, m)
        };
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        for i in 0..n {
            let fp = shifted(i, h, i, 0.0)?;
            let fm = shifted(i, -h, i, 0.0)?;
            grad[i] = (fp - fm) / (2.0 * h);
            hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        }
        for i in 0..n {
            for j in i + 1..n {
                let v = (shifted(i, h, j, h)? - shifted(i, h, j, -h)? - shifted(i, -h, j, h)? + shifted(i, -h, j, -h)?) / (4.0 * h * h);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        Ok(Raw { grad, hess })
    }

    pub fn estimate(&self, p: &GroupPoint) -> Result<FdEstimate> {
        let m = p.x.len();
        let c = p.coords();
        let f0 = self.eval(&c, m)?;
        let h = 1e-4 * (1.0 + c.norm());
        let coarse = self.raw(&c, m, f0, h)?;
        let fine = self.raw(&c, m, f0, h / 2.0)?;
        let grad = (&fine.grad * 4.0 - &coarse.grad) / 3.0;
        let hess = (&fine.hess * 4.0 - &coarse.hess) / 3.0;
        let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + a.abs());
        let richardson_error = grad
            .iter()
            .zip(fine.grad.iter())
            .chain(hess.iter().zip(fine.hess.iter()))
            .map(|(a, b)| rel(*a, *b))
            .fold(0.0, f64::max);
        Ok(FdEstimate { jet: Jet2::new(f0, grad, hess), richardson_error })
    }
}

impl<F: Fn(&GroupPoint) -> Result<f64> + Sync> ScalarField for FiniteDifference<F> {
    fn value(&self, p: &GroupPoint) -> Result<f64> {
        (self.f)(p)
    }

    fn jet(&self, p: &GroupPoint) -> Result<Jet2> {
        Ok(self.estimate(p)?.jet)
    }

    fn mode(&self) -> FieldMode {
        FieldMode::FiniteDifference
    }
}
