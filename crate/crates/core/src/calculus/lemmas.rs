//! Closed forms for horizontal derivatives of `b`, `t_q`, `c_v`, `a_v` and `N_v`.
//! They serve as fast paths and as oracles for the jet operators.

use nalgebra::{DMatrix, DVector};

use crate::algebra::{GroupPoint, StepTwoAlgebra};
use crate::error::{check_dim, Error, Result};
use crate::metric::{j_from_covector, j_matrix, VerticalMetric};

/// `∇₀b = 2x`.
pub fn grad_b(p: &GroupPoint) -> DVector<f64> {
    &p.x * 2.0
}

/// `(D²_H)* b = 2 Id`.
pub fn sym_hessian_b(m: usize) -> DMatrix<f64> {
    DMatrix::identity(m, m) * 2.0
}

/// `𝓛b = 2m`.
pub fn sub_laplacian_b(m: usize) -> f64 {
    2.0 * m as f64
}

/// Entry `(i, q)` is `X_i(t_q) = ½ β_i^q`.
pub fn frame_of_t(algebra: &StepTwoAlgebra, p: &GroupPoint) -> DMatrix<f64> {
    algebra.beta(&p.x) * 0.5
}

/// `X_i X_j (t_q) = ½ b_ij^q`.
pub fn second_frame_of_t(algebra: &StepTwoAlgebra, q: usize) -> DMatrix<f64> {
    &algebra.b()[q] * 0.5
}

/// `(c_v)_{,ij} = ½ β_iᵀ G β_j`, the symmetric part of `X_i X_j c_v`.
pub fn sym_hessian_c(algebra: &StepTwoAlgebra, metric: &VerticalMetric, p: &GroupPoint) -> DMatrix<f64> {
    let beta = algebra.beta(&p.x);
    &beta * metric.g() * beta.transpose() * 0.5
}

/// `𝓛c_v = ½ Σ_i β_iᵀ G β_i`.
pub fn sub_laplacian_c(algebra: &StepTwoAlgebra, metric: &VerticalMetric, p: &GroupPoint) -> f64 {
    sym_hessian_c(algebra, metric, p).trace()
}

/// `∇₀c_v = J_t x`.
pub fn grad_c(algebra: &StepTwoAlgebra, metric: &VerticalMetric, p: &GroupPoint) -> Result<DVector<f64>> {
    Ok(j_matrix(algebra, metric, &p.t)?.apply(&p.x))
}

/// `∇₀a_v = 4‖x‖² x + 16 J_t x`.
pub fn grad_a(algebra: &StepTwoAlgebra, metric: &VerticalMetric, p: &GroupPoint) -> Result<DVector<f64>> {
    Ok(&p.x * (4.0 * p.x.norm_squared()) + grad_c(algebra, metric, p)? * 16.0)
}

/// `‖∇₀a_v‖² = 16 (‖x‖⁶ + 16 ‖J_t x‖²)`.
pub fn norm_sq_grad_a(algebra: &StepTwoAlgebra, metric: &VerticalMetric, p: &GroupPoint) -> Result<f64> {
    let jx = grad_c(algebra, metric, p)?;
    Ok(16.0 * (p.x.norm_squared().powi(3) + 16.0 * jx.norm_squared()))
}

/// `K = Σ_k (J_{ε_k}² + Id)` over a g_v-orthonormal basis `ε_k`.
pub fn vertical_trace_operator(algebra: &StepTwoAlgebra, metric: &VerticalMetric) -> Result<DMatrix<f64>> {
    check_dim(algebra.m2(), metric.dim())?;
    let m = algebra.m();
    let e = metric.orthonormal_basis();
    let mut k = DMatrix::zeros(m, m);
    for col in e.column_iter() {
        let j = j_from_covector(algebra, &(metric.g() * col));
        k += &j * &j + DMatrix::identity(m, m);
    }
    Ok(k)
}

/// `𝓛a_v = 4(Q+2) b − 8 Σ_k ⟨(J_{ε_k}² + Id) x, x⟩`.
pub fn sub_laplacian_a(algebra: &StepTwoAlgebra, metric: &VerticalMetric, p: &GroupPoint) -> Result<f64> {
    let k = vertical_trace_operator(algebra, metric)?;
    let q = algebra.homogeneous_dimension() as f64;
    Ok(4.0 * (q + 2.0) * p.x.norm_squared() - 8.0 * p.x.dot(&(k * &p.x)))
}

fn kaplan_norm(metric: &VerticalMetric, p: &GroupPoint) -> Result<f64> {
    let n = (p.x.norm_squared().powi(2) + 16.0 * metric.norm_sq(&p.t)).powf(0.25);
    if n > 0.0 && n.is_finite() {
        Ok(n)
    } else {
        Err(Error::Origin(n))
    }
}

/// `∇₀N_v = N_v^{-3} (‖x‖² x + 4 J_t x)`.
pub fn grad_n(algebra: &StepTwoAlgebra, metric: &VerticalMetric, p: &GroupPoint) -> Result<DVector<f64>> {
    let n = kaplan_norm(metric, p)?;
    Ok((&p.x * p.x.norm_squared() + grad_c(algebra, metric, p)? * 4.0) / n.powi(3))
}

/// `‖∇₀N_v‖² = N_v^{-6} (‖x‖⁶ + 16 ‖J_t x‖²)`.
pub fn norm_sq_grad_n(algebra: &StepTwoAlgebra, metric: &VerticalMetric, p: &GroupPoint) -> Result<f64> {
    let n = kaplan_norm(metric, p)?;
    let jx = grad_c(algebra, metric, p)?;
    Ok((p.x.norm_squared().powi(3) + 16.0 * jx.norm_squared()) / n.powi(6))
}
