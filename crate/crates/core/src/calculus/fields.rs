use nalgebra::{DMatrix, DVector};

use super::{FieldMode, Jet2, ScalarField};
use crate::algebra::{GroupPoint, StepTwoAlgebra};
use crate::error::{check_dim, Error, Result};
use crate::metric::VerticalMetric;

fn zero_jet(p: &GroupPoint) -> Jet2 {
    let n = p.x.len() + p.t.len();
    Jet2::new(0.0, DVector::zeros(n), DMatrix::zeros(n, n))
}

/// A single exponential coordinate `x_i` or `t_q`.
#[derive(Debug, Clone, Copy)]
pub enum Coordinate {
    Horizontal(usize),
    Vertical(usize),
}

impl Coordinate {
    pub fn vertical(q: usize) -> Self {
        Coordinate::Vertical(q)
    }

    fn index(&self, p: &GroupPoint) -> Result<usize> {
        match *self {
            Coordinate::Horizontal(i) if i < p.x.len() => Ok(i),
            Coordinate::Vertical(q) if q < p.t.len() => Ok(p.x.len() + q),
            _ => Err(Error::Dimension { expected: p.x.len() + p.t.len(), got: usize::MAX }),
        }
    }
}

impl ScalarField for Coordinate {
    fn value(&self, p: &GroupPoint) -> Result<f64> {
        Ok(p.coords()[self.index(p)?])
    }

    fn jet(&self, p: &GroupPoint) -> Result<Jet2> {
        let k = self.index(p)?;
        let mut j = zero_jet(p);
        j.value = p.coords()[k];
        j.grad[k] = 1.0;
        Ok(j)
    }

    fn mode(&self) -> FieldMode {
        FieldMode::ClosedForm
    }
}

/// `b = ‖x‖²`.
#[derive(Debug, Clone, Copy)]
pub struct HorizontalNormSq;

impl ScalarField for HorizontalNormSq {
    fn value(&self, p: &GroupPoint) -> Result<f64> {
        Ok(p.x.norm_squared())
    }

    fn jet(&self, p: &GroupPoint) -> Result<Jet2> {
        let m = p.x.len();
        let mut j = zero_jet(p);
        j.value = p.x.norm_squared();
        for i in 0..m {
            j.grad[i] = 2.0 * p.x[i];
            j.hess[(i, i)] = 2.0;
        }
        Ok(j)
    }

    fn mode(&self) -> FieldMode {
        FieldMode::ClosedForm
    }
}

/// `c_v = tᵀ G t`.
#[derive(Debug, Clone)]
pub struct VerticalNormSq {
    metric: VerticalMetric,
}

impl VerticalNormSq {
    pub fn new(metric: VerticalMetric) -> Self {
        VerticalNormSq { metric }
    }
}

impl ScalarField for VerticalNormSq {
    fn value(&self, p: &GroupPoint) -> Result<f64> {
        check_dim(self.metric.dim(), p.t.len())?;
        Ok(self.metric.norm_sq(&p.t))
    }

    fn jet(&self, p: &GroupPoint) -> Result<Jet2> {
        check_dim(self.metric.dim(), p.t.len())?;
        let (m, m2) = (p.x.len(), p.t.len());
        let g = self.metric.g();
        let gt = g * &p.t;
        let mut j = zero_jet(p);
        j.value = p.t.dot(&gt);
        j.grad.rows_mut(m, m2).copy_from(&(gt * 2.0));
        j.hess.view_mut((m, m), (m2, m2)).copy_from(&(g * 2.0));
        Ok(j)
    }

    fn mode(&self) -> FieldMode {
        FieldMode::ClosedForm
    }
}

/// `a_v = ‖x‖⁴ + 16 tᵀ G t`.
#[derive(Debug, Clone)]
pub struct KaplanGauge {
    metric: VerticalMetric,
}

impl KaplanGauge {
    pub fn new(metric: VerticalMetric) -> Self {
        KaplanGauge { metric }
    }
}

impl ScalarField for KaplanGauge {
    fn value(&self, p: &GroupPoint) -> Result<f64> {
        check_dim(self.metric.dim(), p.t.len())?;
        Ok(p.x.norm_squared().powi(2) + 16.0 * self.metric.norm_sq(&p.t))
    }

    fn jet(&self, p: &GroupPoint) -> Result<Jet2> {
        check_dim(self.metric.dim(), p.t.len())?;
        let (m, m2) = (p.x.len(), p.t.len());
        let g = self.metric.g();
        let gt = g * &p.t;
        let b = p.x.norm_squared();
        let mut j = zero_jet(p);
        j.value = b * b + 16.0 * p.t.dot(&gt);
        j.grad.rows_mut(0, m).copy_from(&(&p.x * (4.0 * b)));
        j.grad.rows_mut(m, m2).copy_from(&(gt * 32.0));
        let hxx = DMatrix::identity(m, m) * (4.0 * b) + &p.x * p.x.transpose() * 8.0;
        j.hess.view_mut((0, 0), (m, m)).copy_from(&hxx);
        j.hess.view_mut((m, m), (m2, m2)).copy_from(&(g * 32.0));
        Ok(j)
    }

    fn mode(&self) -> FieldMode {
        FieldMode::ClosedForm
    }
}

/// `N_v^k = a_v^{k/4}`; `k = 1` is the Kaplan quasinorm, `k = 2 − Q` the
/// fundamental-solution candidate.
#[derive(Debug, Clone)]
pub struct Kaplan {
    gauge: KaplanGauge,
    exponent: f64,
}

impl Kaplan {
    pub fn new(metric: VerticalMetric, exponent: f64) -> Self {
        Kaplan { gauge: KaplanGauge::new(metric), exponent }
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }
}

impl ScalarField for Kaplan {
    fn value(&self, p: &GroupPoint) -> Result<f64> {
        let a = self.gauge.value(p)?;
        if !(a > 0.0) {
            return Err(Error::Origin(a.max(0.0).powf(0.25)));
        }
        Ok(a.powf(self.exponent / 4.0))
    }

    fn jet(&self, p: &GroupPoint) -> Result<Jet2> {
        let ja = self.gauge.jet(p)?;
        if !(ja.value > 0.0) {
            return Err(Error::Origin(ja.value.max(0.0).powf(0.25)));
        }
        ja.powf(self.exponent / 4.0)
    }

    fn mode(&self) -> FieldMode {
        FieldMode::ClosedForm
    }
}

pub fn kaplan_field(algebra: &StepTwoAlgebra, metric: &VerticalMetric) -> Result<Kaplan> {
    check_dim(algebra.m2(), metric.dim())?;
    Ok(Kaplan::new(metric.clone(), 1.0))
}

/// `log f` for a positive field.
#[derive(Debug, Clone)]
pub struct Log<F>(F);

impl<F: ScalarField> Log<F> {
    pub fn new(inner: F) -> Self {
        Log(inner)
    }
}

impl<F: ScalarField> ScalarField for Log<F> {
    fn value(&self, p: &GroupPoint) -> Result<f64> {
        let v = self.0.value(p)?;
        if !(v > 0.0) {
            return Err(Error::InvalidParameter(format!("logarithm of non-positive value {v}")));
        }
        Ok(v.ln())
    }

    fn jet(&self, p: &GroupPoint) -> Result<Jet2> {
        self.0.jet(p)?.ln()
    }

    fn mode(&self) -> FieldMode {
        self.0.mode()
    }
}

/// `f^k` for a positive field.
#[derive(Debug, Clone)]
pub struct Power<F>(F, f64);

impl<F: ScalarField> Power<F> {
    pub fn new(inner: F, k: f64) -> Self {
        Power(inner, k)
    }
}

impl<F: ScalarField> ScalarField for Power<F> {
    fn value(&self, p: &GroupPoint) -> Result<f64> {
        let v = self.0.value(p)?;
        if !(v > 0.0) {
            return Err(Error::InvalidParameter(format!("power of non-positive value {v}")));
        }
        Ok(v.powf(self.1))
    }

    fn jet(&self, p: &GroupPoint) -> Result<Jet2> {
        self.0.jet(p)?.powf(self.1)
    }

    fn mode(&self) -> FieldMode {
        self.0.mode()
    }
}
