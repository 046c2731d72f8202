//! Horizontal calculus on step-two groups through 2-jets in exponential
//! coordinates `(x, t)`.

mod defects;
mod fd;
mod fields;
pub mod lemmas;

pub use defects::{
    defect_sample, defect_scan, eikonal_defect, harmonic_defect, scaled_harmonic_defect, sup_defect, DefectKind, DefectSample,
    SupDefect,
};
pub use fd::{finite_difference, FdEstimate, FiniteDifference, FD_TOLERANCE};
pub use fields::{kaplan_field, Coordinate, HorizontalNormSq, Kaplan, KaplanGauge, Log, Power, VerticalNormSq};

use nalgebra::{DMatrix, DVector};

use crate::algebra::{GroupPoint, StepTwoAlgebra};
use crate::error::{Error, Result};

/// Value, gradient and Hessian of a scalar field at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl Jet2 {
    pub fn new(value: f64, grad: DVector<f64>, hess: DMatrix<f64>) -> Self {
        Jet2 { value, grad, hess }
    }

    /// Jet of `φ∘f` given `φ(f), φ'(f), φ''(f)`.
    pub fn compose(&self, f0: f64, f1: f64, f2: f64) -> Jet2 {
        let grad = &self.grad * f1;
        let hess = &self.hess * f1 + (&self.grad * self.grad.transpose()) * f2;
        Jet2 { value: f0, grad, hess }
    }

    pub fn ln(&self) -> Result<Jet2> {
        let v = self.value;
        if !(v > 0.0) {
            return Err(Error::InvalidParameter(format!("logarithm of non-positive value {v}")));
        }
        Ok(self.compose(v.ln(), 1.0 / v, -1.0 / (v * v)))
    }

    pub fn powf(&self, k: f64) -> Result<Jet2> {
        let v = self.value;
        if !(v > 0.0) {
            return Err(Error::InvalidParameter(format!("power of non-positive value {v}")));
        }
        Ok(self.compose(v.powf(k), k * v.powf(k - 1.0), k * (k - 1.0) * v.powf(k - 2.0)))
    }

    pub fn constant(value: f64, dim: usize) -> Jet2 {
        Jet2 { value, grad: DVector::zeros(dim), hess: DMatrix::zeros(dim, dim) }
    }

    pub fn add(&self, other: &Jet2) -> Jet2 {
        Jet2 { value: self.value + other.value, grad: &self.grad + &other.grad, hess: &self.hess + &other.hess }
    }

    pub fn scale(&self, k: f64) -> Jet2 {
        Jet2 { value: self.value * k, grad: &self.grad * k, hess: &self.hess * k }
    }

    pub fn mul(&self, other: &Jet2) -> Jet2 {
        let cross = &self.grad * other.grad.transpose();
        Jet2 {
            value: self.value * other.value,
            grad: &self.grad * other.value + &other.grad * self.value,
            hess: &self.hess * other.value + &other.hess * self.value + &cross + cross.transpose(),
        }
    }

    pub fn exp(&self) -> Jet2 {
        let e = self.value.exp();
        self.compose(e, e, e)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (&self.hess - self.hess.transpose()).amax() <= tol * (1.0 + self.hess.amax())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldMode {
    ClosedForm,
    FiniteDifference,
}

/// A function on the group that can report its 2-jet.
pub trait ScalarField: Sync {
    fn value(&self, p: &GroupPoint) -> Result<f64>;
    fn jet(&self, p: &GroupPoint) -> Result<Jet2>;
    fn mode(&self) -> FieldMode;
}

/// Columns are the coefficient vectors of `X_i = ∂x_i + ½ Σ_q β_i^q ∂t_q`.
pub fn horizontal_frame(algebra: &StepTwoAlgebra, p: &GroupPoint) -> DMatrix<f64> {
    let (m, m2) = (algebra.m(), algebra.m2());
    let beta = algebra.beta(&p.x);
    let mut frame = DMatrix::zeros(m + m2, m);
    for i in 0..m {
        frame[(i, i)] = 1.0;
        for q in 0..m2 {
            frame[(m + q, i)] = 0.5 * beta[(i, q)];
        }
    }
    frame
}

fn checked_jet<F: ScalarField + ?Sized>(field: &F, algebra: &StepTwoAlgebra, p: &GroupPoint) -> Result<Jet2> {
    algebra.check_point(p)?;
    let jet = field.jet(p)?;
    if !jet.value.is_finite() || jet.grad.iter().chain(jet.hess.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("field jet"));
    }
    Ok(jet)
}

fn gradient_from_jet(algebra: &StepTwoAlgebra, p: &GroupPoint, jet: &Jet2) -> DVector<f64> {
    horizontal_frame(algebra, p).transpose() * &jet.grad
}

/// `X_i X_j f = frameᵢᵀ H frameⱼ + ½ Σ_q b_ij^q ∂t_q f`.
fn hessian_from_jet(algebra: &StepTwoAlgebra, p: &GroupPoint, jet: &Jet2) -> DMatrix<f64> {
    let m = algebra.m();
    let frame = horizontal_frame(algebra, p);
    let mut h = frame.transpose() * &jet.hess * &frame;
    for (q, bq) in algebra.b().iter().enumerate() {
        let dt = jet.grad[m + q];
        h += bq * (0.5 * dt);
    }
    h
}

/// `∇₀f = (X_1 f, ..., X_m f)`.
pub fn horizontal_gradient<F: ScalarField + ?Sized>(field: &F, algebra: &StepTwoAlgebra, p: &GroupPoint) -> Result<DVector<f64>> {
    let jet = checked_jet(field, algebra, p)?;
    Ok(gradient_from_jet(algebra, p, &jet))
}

pub fn norm_sq_horizontal_gradient<F: ScalarField + ?Sized>(field: &F, algebra: &StepTwoAlgebra, p: &GroupPoint) -> Result<f64> {
    Ok(horizontal_gradient(field, algebra, p)?.norm_squared())
}

/// Matrix of `X_i X_j f` (not symmetric in general).
pub fn horizontal_hessian<F: ScalarField + ?Sized>(field: &F, algebra: &StepTwoAlgebra, p: &GroupPoint) -> Result<DMatrix<f64>> {
    let jet = checked_jet(field, algebra, p)?;
    Ok(hessian_from_jet(algebra, p, &jet))
}

/// Symmetrized horizontal Hessian `(D²_H)* f`.
pub fn symmetric_horizontal_hessian<F: ScalarField + ?Sized>(field: &F, algebra: &StepTwoAlgebra, p: &GroupPoint) -> Result<DMatrix<f64>> {
    let h = horizontal_hessian(field, algebra, p)?;
    Ok((&h + h.transpose()) * 0.5)
}

/// `𝓛f = Σ X_i² f`. The first-order part `½ Σ_q b_ii^q ∂t_q f` is
/// accumulated explicitly and is zero for skew structure constants.
pub fn sub_laplacian<F: ScalarField + ?Sized>(field: &F, algebra: &StepTwoAlgebra, p: &GroupPoint) -> Result<f64> {
    let jet = checked_jet(field, algebra, p)?;
    Ok(hessian_from_jet(algebra, p, &jet).trace())
}

/// `𝓛_∞f = ½⟨∇₀‖∇₀f‖², ∇₀f⟩ = Σ_ij (X_i X_j f)(X_i f)(X_j f)`.
pub fn infinity_laplacian<F: ScalarField + ?Sized>(field: &F, algebra: &StepTwoAlgebra, p: &GroupPoint) -> Result<f64> {
    let jet = checked_jet(field, algebra, p)?;
    let g = gradient_from_jet(algebra, p, &jet);
    let h = hessian_from_jet(algebra, p, &jet);
    Ok(g.dot(&(h * &g)))
}
