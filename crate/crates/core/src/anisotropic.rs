//! Fundamental solution and ∞-Laplacian of its homogeneous norm on the
//! anisotropic Heisenberg group with brackets `[X_1,Y_1] = T`,
//! `[X_j,Y_j] = 2T` (`j ≥ 2`).
//!
//! Points are `(z, t) ∈ ℂⁿ × ℝ` with real layout `(x_1, y_1, x_2, y_2, …, t)`.
//! Every closed form is expressed through `A = ¼|z_1|²`,
//! `B = ¼|z_1|² + ½‖z′‖²`, `C = √(B² + t²)` and the horizontal fields
//! `u⃗ = ∇₀A`, `v⃗ = ∇₀B`, `w⃗ = ∇₀t`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{make_heisenberg_aniso, GroupPoint, StepTwoAlgebra};
use crate::calculus::{horizontal_gradient, infinity_laplacian, FieldMode, FiniteDifference, Jet2, ScalarField};
use crate::deviation::SolverConfig;
use crate::error::{Error, Result};
use crate::optim::{bisect_increasing, branch_rng, golden_max, sphere_sample};

/// Radial bracket and tolerance for landing on the unit `N`-sphere.
const SLICE_BRACKET: (f64, f64) = (1e-3, 10.0);
const SLICE_TOL: f64 = 1e-12;
/// Allowed change of `|N 𝓛_∞N|` under rotations that fix `(|z_1|, ‖z′‖)`.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("anisotropic family needs n >= 2, got {n}")));
    }
    Ok(())
}

/// `n̄ = n − ½`.
pub fn nbar(n: usize) -> f64 {
    n as f64 - 0.5
}

/// Homogeneous dimension `Q = 2n + 2`.
pub fn homogeneous_dimension(n: usize) -> usize {
    2 * n + 2
}

/// The group as a step-two algebra: `b = (1, 2, …, 2)` in the standard frame.
pub fn anisotropic_algebra(n: usize) -> Result<StepTwoAlgebra> {
    check_n(n)?;
    let mut b = vec![2.0; n];
    b[0] = 1.0;
    make_heisenberg_aniso(&b)
}

/// `δ² = 9(n−1) / (n(16n−15))`.
pub fn deviation_sq(n: usize) -> f64 {
    let nf = n as f64;
    9.0 * (nf - 1.0) / (nf * (16.0 * nf - 15.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnisoPoint {
    pub z1: [f64; 2],
    pub zprime: Vec<f64>,
    pub t: f64,
}

impl AnisoPoint {
    pub fn new(z1: [f64; 2], zprime: Vec<f64>, t: f64) -> Result<Self> {
        if zprime.len() < 2 || !zprime.len().is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("z' needs 2(n-1) >= 2 real entries, got {}", zprime.len())));
        }
        let p = AnisoPoint { z1, zprime, t };
        if !p.is_finite() {
            return Err(Error::NonFinite("anisotropic point"));
        }
        Ok(p)
    }

    pub fn n(&self) -> usize {
        1 + self.zprime.len() / 2
    }

    pub fn is_finite(&self) -> bool {
        self.z1.iter().chain(&self.zprime).all(|v| v.is_finite()) && self.t.is_finite()
    }

    /// Real horizontal coordinates `(x_1, y_1, x_2, y_2, …)`.
    pub fn horizontal(&self) -> DVector<f64> {
        DVector::from_iterator(2 * self.n(), self.z1.iter().chain(&self.zprime).copied())
    }

    pub fn to_group_point(&self) -> GroupPoint {
        GroupPoint::new(self.horizontal(), DVector::from_element(1, self.t))
    }

    pub fn from_group_point(p: &GroupPoint) -> Result<Self> {
        if p.t.len() != 1 {
            return Err(Error::Dimension { expected: 1, got: p.t.len() });
        }
        if p.x.len() < 4 {
            return Err(Error::Dimension { expected: 4, got: p.x.len() });
        }
        AnisoPoint::new([p.x[0], p.x[1]], p.x.iter().skip(2).copied().collect(), p.t[0])
    }

    /// `(λz, λ²t)`.
    pub fn dilate(&self, lambda: f64) -> AnisoPoint {
        AnisoPoint {
            z1: [lambda * self.z1[0], lambda * self.z1[1]],
            zprime: self.zprime.iter().map(|v| lambda * v).collect(),
            t: lambda * lambda * self.t,
        }
    }

    pub fn abs_z1(&self) -> f64 {
        self.z1[0].hypot(self.z1[1])
    }

    pub fn norm_zprime(&self) -> f64 {
        self.zprime.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn check_point(n: usize, p: &AnisoPoint) -> Result<()> {
    check_n(n)?;
    if p.n() != n {
        return Err(Error::Dimension { expected: 2 * (n - 1), got: p.zprime.len() });
    }
    if !p.is_finite() {
        return Err(Error::NonFinite("anisotropic point"));
    }
    Ok(())
}

/// Horizontal vector field in the `(u⃗, v⃗, w⃗)` span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Uvw {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbcFrame {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub t: f64,
    #[serde(with = "crate::ser::vector")]
    pub uvec: DVector<f64>,
    #[serde(with = "crate::ser::vector")]
    pub vvec: DVector<f64>,
    #[serde(with = "crate::ser::vector")]
    pub wvec: DVector<f64>,
}

/// Partial derivatives of a function of `(A, B, C, t)` taken as independent.
#[derive(Debug, Clone, Copy)]
struct Partials {
    a: f64,
    b: f64,
    c: f64,
    t: f64,
}

impl Partials {
    fn scaled(self, k: f64) -> Partials {
        Partials { a: k * self.a, b: k * self.b, c: k * self.c, t: k * self.t }
    }

    fn plus(self, o: Partials) -> Partials {
        Partials { a: self.a + o.a, b: self.b + o.b, c: self.c + o.c, t: self.t + o.t }
    }
}

pub fn abc_frame(n: usize, p: &AnisoPoint) -> Result<AbcFrame> {
    check_point(n, p)?;
    let (x1, y1) = (p.z1[0], p.z1[1]);
    let a = 0.25 * (x1 * x1 + y1 * y1);
    let b = a + 0.5 * p.zprime.iter().map(|v| v * v).sum::<f64>();
    let c = b.hypot(p.t);
    let m = 2 * n;
    let mut uvec = DVector::zeros(m);
    let mut vvec = DVector::zeros(m);
    let mut wvec = DVector::zeros(m);
    uvec[0] = 0.5 * x1;
    uvec[1] = 0.5 * y1;
    vvec[0] = 0.5 * x1;
    vvec[1] = 0.5 * y1;
    wvec[0] = -0.5 * y1;
    wvec[1] = 0.5 * x1;
    for j in 0..n - 1 {
        let (x, y) = (p.zprime[2 * j], p.zprime[2 * j + 1]);
        vvec[2 + 2 * j] = x;
        vvec[3 + 2 * j] = y;
        wvec[2 + 2 * j] = -y;
        wvec[3 + 2 * j] = x;
    }
    Ok(AbcFrame { a, b, c, t: p.t, uvec, vvec, wvec })
}

impl AbcFrame {
    /// Largest violation of the Gram identities of `u⃗, v⃗, w⃗` and of the
    /// orderings `0 ≤ A ≤ B ≤ C`.
    pub fn identity_residual(&self) -> f64 {
        let (u, v, w) = (&self.uvec, &self.vvec, &self.wvec);
        let s = 1.0 + self.b.abs();
        let gram = [
            v.norm_squared() - (2.0 * self.b - self.a),
            w.norm_squared() - (2.0 * self.b - self.a),
            u.norm_squared() - self.a,
            u.dot(v) - self.a,
            v.dot(w),
            u.dot(w),
        ];
        let order = [(-self.a).max(0.0), (self.a - self.b).max(0.0), (self.b - self.c).max(0.0)];
        gram.iter().map(|g| g.abs() / s).chain(order).fold(0.0, f64::max)
    }

    pub fn vector(&self, f: Uvw) -> DVector<f64> {
        &self.uvec * f.u + &self.vvec * f.v + &self.wvec * f.w
    }

    /// Inner product from the Gram identities.
    pub fn dot(&self, f: Uvw, g: Uvw) -> f64 {
        let vv = 2.0 * self.b - self.a;
        self.a * (f.u * g.u + f.u * g.v + f.v * g.u) + vv * (f.v * g.v + f.w * g.w)
    }

    /// `∇₀f = f_A u⃗ + f_B v⃗ + f_t w⃗ + f_C ∇₀C` with `∇₀C = (B/C) v⃗ + (t/C) w⃗`.
    fn gradient(&self, d: Partials) -> Uvw {
        Uvw { u: d.a, v: d.b + d.c * self.b / self.c, w: d.t + d.c * self.t / self.c }
    }

    pub fn grad_c(&self) -> Uvw {
        self.gradient(Partials { a: 0.0, b: 0.0, c: 1.0, t: 0.0 })
    }

    fn require_off_origin(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::Origin(0.0));
        }
        Ok(())
    }
}

fn frame_off_origin(n: usize, p: &AnisoPoint) -> Result<AbcFrame> {
    let f = abc_frame(n, p)?;
    f.require_off_origin()?;
    Ok(f)
}

/// `u = (B+C)^{1/2} / (C (A+C)^{n−½})`.
pub fn fundamental_u(n: usize, p: &AnisoPoint) -> Result<f64> {
    let f = frame_off_origin(n, p)?;
    Ok((f.b + f.c).sqrt() / (f.c * (f.a + f.c).powf(nbar(n))))
}

/// `N = 2^{½ + 1/(4n)} C^{1/(2n)} (A+C)^{½ − 1/(4n)} / (B+C)^{1/(4n)}`.
pub fn homogeneous_n(n: usize, p: &AnisoPoint) -> Result<f64> {
    let f = frame_off_origin(n, p)?;
    let k = 1.0 / (4.0 * n as f64);
    Ok(2f64.powf(0.5 + k) * f.c.powf(2.0 * k) * (f.a + f.c).powf(0.5 - k) / (f.b + f.c).powf(k))
}

/// Constant `c` with `N = (c·u)^{1/(2−Q)}`, i.e. `c = 2^{−n−½}`.
pub fn normalization(n: usize) -> f64 {
    2f64.powf(-nbar(n) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pqr {
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

fn pqr_of(f: &AbcFrame) -> Pqr {
    let (b, c, t) = (f.b, f.c, f.t);
    Pqr { p: (c - 2.0 * b) / (2.0 * c * c), q: (c + 2.0 * b) * t / (2.0 * c * c * (c + b)), r: 1.0 / (c + f.a) }
}

pub fn pqr(n: usize, p: &AnisoPoint) -> Result<Pqr> {
    Ok(pqr_of(&frame_off_origin(n, p)?))
}

impl Pqr {
    /// Residuals of `P² + Q² = 1/(2C(C+B))` and `tQ − BP = ½`.
    pub fn identity_residuals(&self, frame: &AbcFrame) -> (f64, f64) {
        let (b, c) = (frame.b, frame.c);
        let lhs = self.p * self.p + self.q * self.q;
        let rhs = 1.0 / (2.0 * c * (c + b));
        ((lhs - rhs).abs() / (1.0 + rhs), (frame.t * self.q - b * self.p - 0.5).abs())
    }
}

/// Coefficients of `∇₀u/u = α v⃗ + β w⃗ + γ u⃗` for exponent `s` in place of `n̄`.
fn grad_log_coefficients(f: &AbcFrame, s: f64) -> Uvw {
    let k = pqr_of(f);
    Uvw { v: k.p - s * f.b / f.c * k.r, w: -(k.q + s * f.t / f.c * k.r), u: -s * k.r }
}

/// `∇₀u / u` in the `(u⃗, v⃗, w⃗)` span.
pub fn grad_log_u_uvw(n: usize, p: &AnisoPoint) -> Result<Uvw> {
    Ok(grad_log_coefficients(&frame_off_origin(n, p)?, nbar(n)))
}

pub fn grad_log_u(n: usize, p: &AnisoPoint) -> Result<DVector<f64>> {
    let f = frame_off_origin(n, p)?;
    Ok(f.vector(grad_log_coefficients(&f, nbar(n))))
}

/// `‖∇₀u‖²/u² = G₀ + G₁ n̄ + G₂ n̄²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradSq {
    pub g0: f64,
    pub g1: f64,
    pub g2: f64,
}

impl GradSq {
    pub fn at(&self, s: f64) -> f64 {
        self.g0 + s * (self.g1 + s * self.g2)
    }
}

fn grad_sq_of(f: &AbcFrame) -> GradSq {
    let (a, b, c) = (f.a, f.b, f.c);
    GradSq {
        g0: (2.0 * b - a) / (2.0 * c * (c + b)),
        g1: 2.0 * (a * b - a * c + b * c) / (c * c * (c + a)),
        g2: 2.0 * b / (c * (c + a)),
    }
}

pub fn grad_sq_coefficients(n: usize, p: &AnisoPoint) -> Result<GradSq> {
    Ok(grad_sq_of(&frame_off_origin(n, p)?))
}

/// `(∂_A, ∂_B, ∂_C)` of `G₀`, `G₁`, `G₂`.
fn grad_sq_partials(f: &AbcFrame) -> [Partials; 3] {
    let (a, b, c) = (f.a, f.b, f.c);
    let cb = c + b;
    let ca = c + a;
    let g0 = Partials {
        a: -1.0 / (2.0 * c * cb),
        b: (2.0 * c + a) / (2.0 * c * cb * cb),
        c: -(2.0 * b - a) * (2.0 * c + b) / (2.0 * c * c * cb * cb),
        t: 0.0,
    };
    let g1 = Partials {
        a: -2.0 / (ca * ca),
        b: 2.0 / (c * c),
        c: 2.0 * ((b - a) * c * ca - (a * b - a * c + b * c) * (3.0 * c + 2.0 * a)) / (c.powi(3) * ca * ca),
        t: 0.0,
    };
    let g2 = Partials {
        a: -2.0 * b / (c * ca * ca),
        b: 2.0 / (c * ca),
        c: -2.0 * b * (2.0 * c + a) / (c * c * ca * ca),
        t: 0.0,
    };
    [g0, g1, g2]
}

/// `∇₀(‖∇₀u‖²/u²) = E_v v⃗ + E_w t w⃗ + E_u u⃗`; each coefficient is a
/// quadratic in `n̄`, stored as `[c₀, c₁, c₂]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EDecomposition {
    pub e_v: [f64; 3],
    pub e_w: [f64; 3],
    pub e_u: [f64; 3],
    pub nbar: f64,
}

fn quad(c: [f64; 3], s: f64) -> f64 {
    c[0] + s * (c[1] + s * c[2])
}

impl EDecomposition {
    pub fn ev(&self) -> f64 {
        quad(self.e_v, self.nbar)
    }

    pub fn ew(&self) -> f64 {
        quad(self.e_w, self.nbar)
    }

    pub fn eu(&self) -> f64 {
        quad(self.e_u, self.nbar)
    }

    pub fn uvw(&self, t: f64) -> Uvw {
        Uvw { u: self.eu(), v: self.ev(), w: self.ew() * t }
    }
}

fn e_decomposition_of(f: &AbcFrame, s: f64) -> EDecomposition {
    let parts = grad_sq_partials(f);
    let ratio = f.b / f.c;
    let mut d = EDecomposition { e_v: [0.0; 3], e_w: [0.0; 3], e_u: [0.0; 3], nbar: s };
    for (k, g) in parts.iter().enumerate() {
        d.e_u[k] = g.a;
        d.e_v[k] = g.b + ratio * g.c;
        d.e_w[k] = g.c / f.c;
    }
    d
}

pub fn grad_normsq_decomposition(n: usize, p: &AnisoPoint) -> Result<EDecomposition> {
    Ok(e_decomposition_of(&frame_off_origin(n, p)?, nbar(n)))
}

/// `𝓛_∞(log u_s) = ½⟨∇₀(‖∇₀u_s‖²/u_s²), ∇₀u_s/u_s⟩`.
fn linf_log_at(f: &AbcFrame, s: f64) -> f64 {
    let e = e_decomposition_of(f, s);
    0.5 * f.dot(e.uvw(f.t), grad_log_coefficients(f, s))
}

/// `F₃ = (AB² + 2B²C − AC²) / (C³(C+A)²)`.
pub fn f3_closed_form(f: &AbcFrame) -> f64 {
    let (a, b, c) = (f.a, f.b, f.c);
    (a * b * b + 2.0 * b * b * c - a * c * c) / (c.powi(3) * (c + a).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfinityLaplacianReport {
    /// `‖∇₀u‖²/u²`.
    pub grad_sq: f64,
    /// `𝓛_∞(log u)`.
    pub linf_log_u: f64,
    /// `𝓛_∞N / N³`.
    pub linf_n_over_n3: f64,
    pub norm: f64,
    /// `N 𝓛_∞N`.
    pub n_linf_n: f64,
}

pub fn infinity_laplacian_n(n: usize, p: &AnisoPoint) -> Result<InfinityLaplacianReport> {
    let f = frame_off_origin(n, p)?;
    let s = nbar(n);
    let grad_sq = grad_sq_of(&f).at(s);
    let linf_log_u = linf_log_at(&f, s);
    // log N = log(c u) / (2 − Q) with 1/(2 − Q) = −1/(2n)
    let k = -1.0 / (2.0 * n as f64);
    let linf_n_over_n3 = k.powi(4) * grad_sq * grad_sq + k.powi(3) * linf_log_u;
    let norm = homogeneous_n(n, p)?;
    Ok(InfinityLaplacianReport { grad_sq, linf_log_u, linf_n_over_n3, norm, n_linf_n: norm.powi(4) * linf_n_over_n3 })
}

// ---------------------------------------------------------------------------
// Exact jets of the closed-form fields, usable with the calculus module.

struct AbcJets {
    a: Jet2,
    b: Jet2,
    c: Jet2,
}

fn abc_jets(p: &GroupPoint) -> Result<AbcJets> {
    if p.t.len() != 1 || p.x.len() < 4 || !p.x.len().is_multiple_of(2) {
        return Err(Error::Dimension { expected: 1, got: p.t.len() });
    }
    let m = p.x.len();
    let dim = m + 1;
    let mut a = Jet2::constant(0.25 * (p.x[0] * p.x[0] + p.x[1] * p.x[1]), dim);
    let mut b = Jet2::constant(a.value + 0.5 * p.x.rows(2, m - 2).norm_squared(), dim);
    for i in 0..m {
        let w = if i < 2 { 0.5 } else { 1.0 };
        b.grad[i] = w * p.x[i];
        b.hess[(i, i)] = w;
        if i < 2 {
            a.grad[i] = 0.5 * p.x[i];
            a.hess[(i, i)] = 0.5;
        }
    }
    let mut t = Jet2::constant(p.t[0], dim);
    t.grad[m] = 1.0;
    let c = b.mul(&b).add(&t.mul(&t)).powf(0.5).map_err(|_| Error::Origin(0.0))?;
    Ok(AbcJets { a, b, c })
}

fn log_u_jet(p: &GroupPoint, s: f64) -> Result<Jet2> {
    let j = abc_jets(p)?;
    let bc = j.b.add(&j.c).ln()?;
    let ac = j.a.add(&j.c).ln()?;
    Ok(bc.scale(0.5).add(&j.c.ln()?.scale(-1.0)).add(&ac.scale(-s)))
}

fn log_u_value(p: &GroupPoint, s: f64) -> Result<f64> {
    let q = AnisoPoint::from_group_point(p)?;
    let f = frame_off_origin(q.n(), &q)?;
    Ok(0.5 * (f.b + f.c).ln() - f.c.ln() - s * (f.a + f.c).ln())
}

/// `log u_s = ½ log(B+C) − log C − s log(A+C)`; `s = n̄` gives `log u`.
#[derive(Debug, Clone, Copy)]
pub struct LogFundamental {
    pub exponent: f64,
}

impl LogFundamental {
    pub fn new(n: usize) -> Self {
        LogFundamental { exponent: nbar(n) }
    }

    pub fn with_exponent(exponent: f64) -> Self {
        LogFundamental { exponent }
    }
}

impl ScalarField for LogFundamental {
    fn value(&self, p: &GroupPoint) -> Result<f64> {
        log_u_value(p, self.exponent)
    }

    fn jet(&self, p: &GroupPoint) -> Result<Jet2> {
        log_u_jet(p, self.exponent)
    }

    fn mode(&self) -> FieldMode {
        FieldMode::ClosedForm
    }
}

/// Normalized fundamental solution `c·u = N^{2−Q}`.
#[derive(Debug, Clone, Copy)]
pub struct Fundamental {
    n: usize,
}

impl Fundamental {
    pub fn new(n: usize) -> Self {
        Fundamental { n }
    }
}

impl ScalarField for Fundamental {
    fn value(&self, p: &GroupPoint) -> Result<f64> {
        Ok(normalization(self.n) * fundamental_u(self.n, &AnisoPoint::from_group_point(p)?)?)
    }

    fn jet(&self, p: &GroupPoint) -> Result<Jet2> {
        Ok(log_u_jet(p, nbar(self.n))?.add(&Jet2::constant(normalization(self.n).ln(), p.x.len() + 1)).exp())
    }

    fn mode(&self) -> FieldMode {
        FieldMode::ClosedForm
    }
}

/// Homogeneous norm `N`.
#[derive(Debug, Clone, Copy)]
pub struct AnisotropicNorm {
    n: usize,
}

impl AnisotropicNorm {
    pub fn new(n: usize) -> Self {
        AnisotropicNorm { n }
    }
}

impl ScalarField for AnisotropicNorm {
    fn value(&self, p: &GroupPoint) -> Result<f64> {
        homogeneous_n(self.n, &AnisoPoint::from_group_point(p)?)
    }

    fn jet(&self, p: &GroupPoint) -> Result<Jet2> {
        let q = homogeneous_dimension(self.n) as f64;
        let log_cu = log_u_jet(p, nbar(self.n))?.add(&Jet2::constant(normalization(self.n).ln(), p.x.len() + 1));
        Ok(log_cu.scale(1.0 / (2.0 - q)).exp())
    }

    fn mode(&self) -> FieldMode {
        FieldMode::ClosedForm
    }
}

// ---------------------------------------------------------------------------
// Finite-difference cross-checks.

fn rel_residual(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}

fn fd_gradient<F>(n: usize, p: &AnisoPoint, f: F) -> Result<DVector<f64>>
where
    F: Fn(&AnisoPoint) -> Result<f64> + Sync,
{
    let alg = anisotropic_algebra(n)?;
    let fd = FiniteDifference::from_fn(move |g: &GroupPoint| f(&AnisoPoint::from_group_point(g)?));
    horizontal_gradient(&fd, &alg, &p.to_group_point())
}

/// `div₀ V = Σ_i X_i V_i` by finite differences of each component.
fn fd_divergence<F>(n: usize, p: &AnisoPoint, field: F) -> Result<f64>
where
    F: Fn(&AnisoPoint) -> Result<DVector<f64>> + Sync,
{
    let mut div = 0.0;
    for i in 0..2 * n {
        div += fd_gradient(n, p, |q| Ok(field(q)?[i]))?[i];
    }
    Ok(div)
}

/// Residuals of the closed-form gradients of `A`, `B`, `t`, `C` against
/// finite differences.
pub fn frame_fd_residual(n: usize, p: &AnisoPoint) -> Result<f64> {
    let f = frame_off_origin(n, p)?;
    let grad_a = fd_gradient(n, p, |q| Ok(abc_frame(n, q)?.a))?;
    let grad_b = fd_gradient(n, p, |q| Ok(abc_frame(n, q)?.b))?;
    let grad_t = fd_gradient(n, p, |q| Ok(q.t))?;
    let grad_c = fd_gradient(n, p, |q| Ok(abc_frame(n, q)?.c))?;
    Ok([
        rel_residual(&f.uvec, &grad_a),
        rel_residual(&f.vvec, &grad_b),
        rel_residual(&f.wvec, &grad_t),
        rel_residual(&f.vector(f.grad_c()), &grad_c),
    ]
    .into_iter()
    .fold(0.0, f64::max))
}

pub fn grad_log_u_fd_residual(n: usize, p: &AnisoPoint) -> Result<f64> {
    let exact = grad_log_u(n, p)?;
    let fd = fd_gradient(n, p, |q| Ok(fundamental_u(n, q)?.ln()))?;
    Ok(rel_residual(&exact, &fd))
}

pub fn decomposition_fd_residual(n: usize, p: &AnisoPoint) -> Result<f64> {
    let f = frame_off_origin(n, p)?;
    let exact = f.vector(e_decomposition_of(&f, nbar(n)).uvw(f.t));
    let fd = fd_gradient(n, p, |q| Ok(grad_sq_coefficients(n, q)?.at(nbar(n))))?;
    Ok(rel_residual(&exact, &fd))
}

fn grad_p(f: &AbcFrame) -> Partials {
    let (b, c) = (f.b, f.c);
    Partials { a: 0.0, b: -1.0 / (c * c), c: (4.0 * b - c) / (2.0 * c.powi(3)), t: 0.0 }
}

fn grad_q(f: &AbcFrame) -> Partials {
    let (b, c, t) = (f.b, f.c, f.t);
    let cb = c + b;
    Partials {
        a: 0.0,
        b: t / (2.0 * c * cb * cb),
        c: -t * (2.0 * c * c + 7.0 * b * c + 4.0 * b * b) / (2.0 * c.powi(3) * cb * cb),
        t: (c + 2.0 * b) / (2.0 * c * c * cb),
    }
}

fn grad_r(f: &AbcFrame) -> Partials {
    let d = -1.0 / (f.c + f.a).powi(2);
    Partials { a: d, b: 0.0, c: d, t: 0.0 }
}

/// `B R / C`.
fn grad_brc(f: &AbcFrame) -> Partials {
    let (a, b, c) = (f.a, f.b, f.c);
    let ca = c + a;
    Partials { a: -b / (c * ca * ca), b: 1.0 / (c * ca), c: -b * (2.0 * c + a) / (c * c * ca * ca), t: 0.0 }
}

/// `t R / C`.
fn grad_trc(f: &AbcFrame) -> Partials {
    let (a, c, t) = (f.a, f.c, f.t);
    let ca = c + a;
    Partials { a: -t / (c * ca * ca), b: 0.0, c: -t * (2.0 * c + a) / (c * c * ca * ca), t: 1.0 / (c * ca) }
}

/// Closed-form horizontal gradients of `P`, `Q`, `R`.
pub fn grad_pqr(n: usize, p: &AnisoPoint) -> Result<[Uvw; 3]> {
    let f = frame_off_origin(n, p)?;
    Ok([f.gradient(grad_p(&f)), f.gradient(grad_q(&f)), f.gradient(grad_r(&f))])
}

/// `div₀(∇₀u_s/u_s)` from `div₀(αv⃗ + βw⃗ + γu⃗) = 2n̄α + γ + ⟨∇₀α,v⃗⟩ + ⟨∇₀β,w⃗⟩ + ⟨∇₀γ,u⃗⟩`.
fn div_grad_log(f: &AbcFrame, n: usize) -> f64 {
    let s = nbar(n);
    let g = grad_log_coefficients(f, s);
    let d_alpha = grad_p(f).plus(grad_brc(f).scaled(-s));
    let d_beta = grad_q(f).plus(grad_trc(f).scaled(s)).scaled(-1.0);
    let d_gamma = grad_r(f).scaled(-s);
    let unit = |u, v, w| Uvw { u, v, w };
    2.0 * s * g.v
        + g.u
        + f.dot(f.gradient(d_alpha), unit(0.0, 1.0, 0.0))
        + f.dot(f.gradient(d_beta), unit(0.0, 0.0, 1.0))
        + f.dot(f.gradient(d_gamma), unit(1.0, 0.0, 0.0))
}

/// `N^Q 𝓛(c·u) = N² (div₀(∇₀u/u) + ‖∇₀u‖²/u²)` from closed forms.
pub fn scaled_sub_laplacian_u(n: usize, p: &AnisoPoint) -> Result<f64> {
    let f = frame_off_origin(n, p)?;
    let norm = homogeneous_n(n, p)?;
    Ok(norm * norm * (div_grad_log(&f, n) + grad_sq_of(&f).at(nbar(n))))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub div_u: f64,
    pub div_v: f64,
    pub div_w: f64,
    pub grad_p: f64,
    pub grad_q: f64,
    pub grad_r: f64,
    /// `N^Q |𝓛(c·u)|` from closed forms.
    pub harmonic: f64,
}

impl DivergenceReport {
    /// Largest finite-difference residual.
    pub fn max_fd_residual(&self) -> f64 {
        [self.div_u, self.div_v, self.div_w, self.grad_p, self.grad_q, self.grad_r].into_iter().fold(0.0, f64::max)
    }
}

/// Residuals of `div₀u⃗ = 1`, `div₀v⃗ = 2n̄`, `div₀w⃗ = 0` and of the
/// gradients of `P, Q, R` against finite differences, plus the
/// harmonicity residual of `u`.
pub fn divergence_identities(n: usize, p: &AnisoPoint) -> Result<DivergenceReport> {
    let f = frame_off_origin(n, p)?;
    let div_u = fd_divergence(n, p, |q| Ok(abc_frame(n, q)?.uvec))?;
    let div_v = fd_divergence(n, p, |q| Ok(abc_frame(n, q)?.vvec))?;
    let div_w = fd_divergence(n, p, |q| Ok(abc_frame(n, q)?.wvec))?;
    let check = |closed: Partials, get: fn(&Pqr) -> f64| -> Result<f64> {
        let fd = fd_gradient(n, p, |q| Ok(get(&pqr(n, q)?)))?;
        Ok(rel_residual(&f.vector(f.gradient(closed)), &fd))
    };
    Ok(DivergenceReport {
        div_u: (div_u - 1.0).abs(),
        div_v: (div_v - 2.0 * nbar(n)).abs() / (1.0 + 2.0 * nbar(n)),
        div_w: div_w.abs(),
        grad_p: check(grad_p(&f), |k| k.p)?,
        grad_q: check(grad_q(&f), |k| k.q)?,
        grad_r: check(grad_r(&f), |k| k.r)?,
        harmonic: scaled_sub_laplacian_u(n, p)?.abs(),
    })
}

/// Largest residuals over seeded random points for one `n`.
#[derive(Debug, Clone, Serialize)]
pub struct FundamentalCheck {
    pub n: usize,
    pub points: usize,
    pub frame_identity: f64,
    pub pqr_identity: f64,
    /// `max N^Q |𝓛u|` from closed forms.
    pub harmonic: f64,
    pub fd_frame: f64,
    pub fd_grad_log_u: f64,
    pub fd_decomposition: f64,
    pub fd_divergence: f64,
    /// `‖∇₀u‖²/u²`, `𝓛_∞ log u`, `𝓛_∞N/N³` at `(0, z′, 0)`, `‖z′‖ = 1`.
    pub slice_grad_sq: f64,
    pub slice_linf_log_u: f64,
    pub slice_linf_n_over_n3: f64,
}

/// Seeded point with uniform direction in `[-1, 1]^{2n+1}` and `N ∈ [0.5, 2]`.
pub fn random_point(n: usize, seed: u64, index: u64) -> Result<AnisoPoint> {
    check_n(n)?;
    let mut rng = branch_rng(seed, index);
    let mut v = || rng.random_range(-1.0..1.0);
    let p = AnisoPoint::new([v(), v()], (0..2 * (n - 1)).map(|_| v()).collect(), v())?;
    let target = rng.random_range(0.5..2.0);
    Ok(p.dilate(target / homogeneous_n(n, &p)?))
}

pub fn verify_family(n: usize, points: usize, seed: u64) -> Result<FundamentalCheck> {
    let mut c = FundamentalCheck {
        n,
        points,
        frame_identity: 0.0,
        pqr_identity: 0.0,
        harmonic: 0.0,
        fd_frame: 0.0,
        fd_grad_log_u: 0.0,
        fd_decomposition: 0.0,
        fd_divergence: 0.0,
        slice_grad_sq: 0.0,
        slice_linf_log_u: 0.0,
        slice_linf_n_over_n3: 0.0,
    };
    for k in 0..points {
        let p = random_point(n, seed, k as u64)?;
        let f = abc_frame(n, &p)?;
        c.frame_identity = c.frame_identity.max(f.identity_residual());
        let (r1, r2) = pqr(n, &p)?.identity_residuals(&f);
        c.pqr_identity = c.pqr_identity.max(r1).max(r2);
        let d = divergence_identities(n, &p)?;
        c.harmonic = c.harmonic.max(d.harmonic);
        c.fd_divergence = c.fd_divergence.max(d.max_fd_residual());
        c.fd_frame = c.fd_frame.max(frame_fd_residual(n, &p)?);
        c.fd_grad_log_u = c.fd_grad_log_u.max(grad_log_u_fd_residual(n, &p)?);
        c.fd_decomposition = c.fd_decomposition.max(decomposition_fd_residual(n, &p)?);
    }
    let mut zp = vec![0.0; 2 * (n - 1)];
    zp[0] = 1.0;
    let s = infinity_laplacian_n(n, &AnisoPoint::new([0.0, 0.0], zp, 0.0)?)?;
    c.slice_grad_sq = s.grad_sq;
    c.slice_linf_log_u = s.linf_log_u;
    c.slice_linf_n_over_n3 = s.linf_n_over_n3;
    Ok(c)
}

// ---------------------------------------------------------------------------
// Cubic structure in the exponent.

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F3Fit {
    /// Cubic coefficients of `s ↦ 𝓛_∞(log u_s)` fitted at `s = 1, 2, 3, 4`.
    pub coefficients: [f64; 4],
    pub f3_fit: f64,
    pub f3_closed: f64,
    /// Largest relative misfit of the cubic at the held-out exponents.
    pub residual: f64,
    /// `G₂² − 2F₃`.
    pub g2_sq_minus_2f3: f64,
    /// `2At² / (C³(C+A)²)`.
    pub g2_identity_rhs: f64,
}

/// Evaluates `𝓛_∞(log u_s)` through exact jets at `s = 1..4`, interpolates the
/// cubic in `s` and checks it at `held_out` further exponents `s = 5, 6, …`.
pub fn f3_fit(held_out: usize, p: &AnisoPoint) -> Result<F3Fit> {
    let n = p.n();
    let f = frame_off_origin(n, p)?;
    let alg = anisotropic_algebra(n)?;
    let g = p.to_group_point();
    let linf = |s: f64| infinity_laplacian(&LogFundamental::with_exponent(s), &alg, &g);
    let vand = DMatrix::from_fn(4, 4, |i, j| ((i + 1) as f64).powi(j as i32));
    let rhs = DVector::from_iterator(4, (1..=4).map(|s| linf(s as f64)).collect::<Result<Vec<_>>>()?);
    let coef = vand.lu().solve(&rhs).ok_or(Error::NonFinite("cubic interpolation"))?;
    let mut residual: f64 = 0.0;
    for k in 0..held_out {
        let s = (5 + k) as f64;
        let fit = coef[0] + s * (coef[1] + s * (coef[2] + s * coef[3]));
        let val = linf(s)?;
        residual = residual.max((fit - val).abs() / (1.0 + val.abs()));
    }
    let g2 = grad_sq_of(&f).g2;
    let f3 = f3_closed_form(&f);
    Ok(F3Fit {
        coefficients: [coef[0], coef[1], coef[2], coef[3]],
        f3_fit: coef[3],
        f3_closed: f3,
        residual,
        g2_sq_minus_2f3: g2 * g2 - 2.0 * f3,
        g2_identity_rhs: 2.0 * f.a * f.t * f.t / (f.c.powi(3) * (f.c + f.a).powi(2)),
    })
}

// ---------------------------------------------------------------------------
// Scan of `|N 𝓛_∞N|` over the unit sphere in the plane t = 0.

/// Point `(r cos φ, 0; r sin φ, 0, …; 0)` on the unit `N`-sphere.
pub fn slice_point(n: usize, phi: f64) -> Result<AnisoPoint> {
    check_n(n)?;
    let mut zp = vec![0.0; 2 * (n - 1)];
    zp[0] = phi.sin();
    let dir = AnisoPoint::new([phi.cos(), 0.0], zp, 0.0)?;
    land_on_sphere(n, &dir)
}

fn land_on_sphere(n: usize, dir: &AnisoPoint) -> Result<AnisoPoint> {
    let r = bisect_increasing(
        |r| homogeneous_n(n, &dir.dilate(r)).map(|v| v - 1.0).unwrap_or(f64::NAN),
        SLICE_BRACKET.0,
        SLICE_BRACKET.1,
        SLICE_TOL,
    )
    .ok_or_else(|| Error::InvalidParameter("unit sphere not bracketed along direction".into()))?;
    Ok(dir.dilate(r))
}

/// `4ⁿ B (A+B)^{2n−1} − 1`, zero on the sphere when `t = 0`.
pub fn slice_equation(n: usize, p: &AnisoPoint) -> Result<f64> {
    let f = abc_frame(n, p)?;
    Ok(4f64.powi(n as i32) * f.b * (f.a + f.b).powi(2 * n as i32 - 1) - 1.0)
}

fn slice_defect(n: usize, phi: f64) -> Result<f64> {
    Ok(infinity_laplacian_n(n, &slice_point(n, phi)?)?.n_linf_n.abs())
}

/// `|N 𝓛_∞N|` through exact jets of `N` and the calculus module.
pub fn jet_n_linf_n(n: usize, p: &AnisoPoint) -> Result<f64> {
    let alg = anisotropic_algebra(n)?;
    let g = p.to_group_point();
    let field = AnisotropicNorm::new(n);
    Ok((field.value(&g)? * infinity_laplacian(&field, &alg, &g)?).abs())
}

/// Largest change of `|N 𝓛_∞N|` between random points of the unit sphere in
/// `t = 0` and their representatives `slice_point(n, φ)` with the same
/// `(|z_1|, ‖z′‖)` direction.
pub fn symmetry_residual(n: usize, checks: usize, seed: u64) -> Result<f64> {
    check_n(n)?;
    let mut worst: f64 = 0.0;
    for k in 0..checks {
        let mut rng = branch_rng(seed, 1_000 + k as u64);
        let phi = rng.random_range(0.0..FRAC_PI_2);
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let zp: Vec<f64> = sphere_sample(&mut rng, 2 * (n - 1)).iter().map(|v| v * phi.sin()).collect();
        let dir = AnisoPoint::new([phi.cos() * theta.cos(), phi.cos() * theta.sin()], zp, 0.0)?;
        let full = land_on_sphere(n, &dir)?;
        let reduced = slice_point(n, phi)?;
        let a = jet_n_linf_n(n, &full)?;
        let b = infinity_laplacian_n(n, &reduced)?.n_linf_n.abs();
        worst = worst.max((a - b).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjectureReport {
    pub n: usize,
    pub sup: f64,
    pub witness: AnisoPoint,
    /// Angle with `|z_1| = r cos φ`, `‖z′‖ = r sin φ`.
    pub witness_phi: f64,
    pub delta_sq: f64,
    pub ratio: f64,
    /// Value at `(0, z′, 0)`.
    pub value_at_zprime: f64,
    pub symmetry_residual: f64,
    pub samples: usize,
}

/// Supremum of `|N 𝓛_∞N|` over the unit `N`-sphere inside `t = 0`.
///
/// The value depends only on `φ`; this reduction is checked at random points
/// first. A grid in `φ ∈ [0, π/2]` of `grid_density` points is refined by
/// golden-section search around the best grid cells.
pub fn conjecture_scan(n: usize, cfg: &SolverConfig) -> Result<ConjectureReport> {
    check_n(n)?;
    cfg.validate()?;
    let symmetry = symmetry_residual(n, 8, cfg.seed)?;
    if symmetry > SYMMETRY_TOLERANCE {
        return Err(Error::InvalidParameter(format!("rotational reduction failed: residual {symmetry:e}")));
    }
    let k = cfg.grid_density.max(16);
    let step = FRAC_PI_2 / (k - 1) as f64;
    let values = (0..k).into_par_iter().map(|i| slice_defect(n, i as f64 * step)).collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let (mut best_phi, mut best) = (order[0] as f64 * step, values[order[0]]);
    for &i in order.iter().take(4) {
        let lo = (i as f64 - 1.0).max(0.0) * step;
        let hi = ((i + 1).min(k - 1)) as f64 * step;
        let (phi, v) = golden_max(|phi| slice_defect(n, phi).unwrap_or(f64::NEG_INFINITY), lo, hi, 1e-10);
        if v > best {
            best = v;
            best_phi = phi;
        }
    }
    let delta_sq = deviation_sq(n);
    Ok(ConjectureReport {
        n,
        sup: best,
        witness: slice_point(n, best_phi)?,
        witness_phi: best_phi,
        delta_sq,
        ratio: best / delta_sq,
        value_at_zprime: values[k - 1],
        symmetry_residual: symmetry,
        samples: k,
    })
}
