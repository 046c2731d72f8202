use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lemmas::vertical_trace_operator;
use crate::algebra::{dilate, GroupPoint, StepTwoAlgebra};
use crate::deviation::{sphere_grid, SolverConfig, SphereProblem};
use crate::error::{check_dim, Error, Result};
use crate::metric::{j_matrix, VerticalMetric};
use crate::optim::{branch_rng, golden_max, sphere_sample};

/// Smallest admissible quasinorm after dilation normalization.
const MIN_NORM: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    Eikonal,
    Harmonic,
    ScaledHarmonic,
}

impl DefectKind {
    pub const ALL: [DefectKind; 3] = [DefectKind::Eikonal, DefectKind::Harmonic, DefectKind::ScaledHarmonic];

    pub fn name(&self) -> &'static str {
        match self {
            DefectKind::Eikonal => "eikonal",
            DefectKind::Harmonic => "harmonic",
            DefectKind::ScaledHarmonic => "scaled_harmonic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefectSample {
    pub point: GroupPoint,
    pub eikonal: f64,
    pub harmonic: f64,
    pub scaled_harmonic: f64,
}

impl DefectSample {
    pub fn get(&self, kind: DefectKind) -> f64 {
        match kind {
            DefectKind::Eikonal => self.eikonal,
            DefectKind::Harmonic => self.harmonic,
            DefectKind::ScaledHarmonic => self.scaled_harmonic,
        }
    }
}

/// Dilates `p` to the unit quasinorm sphere.
fn normalize(metric: &VerticalMetric, p: &GroupPoint) -> Result<GroupPoint> {
    let n = (p.x.norm_squared().powi(2) + 16.0 * metric.norm_sq(&p.t)).powf(0.25);
    if !(n > 0.0) || !n.is_finite() || !p.is_finite() {
        return Err(Error::Origin(n));
    }
    let q = dilate(p, 1.0 / n)?;
    let nq = (q.x.norm_squared().powi(2) + 16.0 * metric.norm_sq(&q.t)).powf(0.25);
    if nq < MIN_NORM {
        return Err(Error::Origin(nq));
    }
    Ok(q)
}

/// `⟨(J_t² + ‖t‖_v² Id) x, x⟩ = ‖t‖_v² ‖x‖² − ‖J_t x‖²`.
fn h_type_form(algebra: &StepTwoAlgebra, metric: &VerticalMetric, p: &GroupPoint) -> Result<f64> {
    let jx = j_matrix(algebra, metric, &p.t)?.apply(&p.x);
    Ok(metric.norm_sq(&p.t) * p.x.norm_squared() - jx.norm_squared())
}

/// `‖x‖²/N² − ‖∇₀N‖² = 16 ⟨(J_t² + ‖t‖_v² Id) x, x⟩ / N⁶`.
pub fn eikonal_defect(algebra: &StepTwoAlgebra, metric: &VerticalMetric, p: &GroupPoint) -> Result<f64> {
    algebra.check_point(p)?;
    check_dim(algebra.m2(), metric.dim())?;
    let q = normalize(metric, p)?;
    Ok(16.0 * h_type_form(algebra, metric, &q)?)
}

fn harmonic_with(algebra: &StepTwoAlgebra, metric: &VerticalMetric, k: &DMatrix<f64>, p: &GroupPoint) -> Result<f64> {
    let q = normalize(metric, p)?;
    let qd = algebra.homogeneous_dimension() as f64;
    Ok(16.0 * (qd + 2.0) * h_type_form(algebra, metric, &q)? - 2.0 * q.x.dot(&(k * &q.x)))
}

/// `N 𝓛N − (Q−1) ‖∇₀N‖² = 16(Q+2) ⟨(J_t² + ‖t‖_v² Id) x, x⟩ / N⁶ − 2 ⟨K x, x⟩ / N²`
/// with `K = Σ_k (J_{ε_k}² + Id)`.
pub fn harmonic_defect(algebra: &StepTwoAlgebra, metric: &VerticalMetric, p: &GroupPoint) -> Result<f64> {
    algebra.check_point(p)?;
    let k = vertical_trace_operator(algebra, metric)?;
    harmonic_with(algebra, metric, &k, p)
}

/// `N^Q 𝓛(N^{2−Q}) = (2 − Q) (N 𝓛N − (Q−1) ‖∇₀N‖²)`.
pub fn scaled_harmonic_defect(algebra: &StepTwoAlgebra, metric: &VerticalMetric, p: &GroupPoint) -> Result<f64> {
    let q = algebra.homogeneous_dimension() as f64;
    Ok((2.0 - q) * harmonic_defect(algebra, metric, p)?)
}

pub fn defect_sample(algebra: &StepTwoAlgebra, metric: &VerticalMetric, p: &GroupPoint) -> Result<DefectSample> {
    let harmonic = harmonic_defect(algebra, metric, p)?;
    Ok(DefectSample {
        point: p.clone(),
        eikonal: eikonal_defect(algebra, metric, p)?,
        harmonic,
        scaled_harmonic: (2.0 - algebra.homogeneous_dimension() as f64) * harmonic,
    })
}

/// Seeded samples on the slice `‖t‖_v = 1`, `‖x‖ ∈ (0, 4]`.
pub fn defect_scan(algebra: &StepTwoAlgebra, metric: &VerticalMetric, samples: usize, seed: u64) -> Result<Vec<DefectSample>> {
    check_dim(algebra.m2(), metric.dim())?;
    let mut rng = branch_rng(seed, 0);
    let points: Vec<GroupPoint> = (0..samples)
        .map(|_| {
            let s = sphere_sample(&mut rng, algebra.m2());
            let x = sphere_sample(&mut rng, algebra.m()) * (4.0 * (1.0 - rng.random::<f64>()));
            GroupPoint::new(x, metric.from_euclidean(&s))
        })
        .collect();
    points.par_iter().map(|p| defect_sample(algebra, metric, p)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupDefect {
    pub kind: DefectKind,
    pub sup: f64,
    pub witness: GroupPoint,
    /// `‖x‖` of the witness on the slice `‖t‖_v = 1`; `None` when the witness
    /// lies on `t = 0`, the limit `‖x‖ → ∞` of the slice.
    pub slice_radius: Option<f64>,
    /// Whether the witness radius lies strictly inside `(0, 4)`.
    pub interior: bool,
    pub samples: u64,
}

/// On the slice, every kind is the quadratic form of `α(L) A(s) − β(L) K`
/// with `A(s) = J_s² + Id` and `L = ‖x‖`.
struct SliceForm {
    kind: DefectKind,
    q: f64,
    problem: SphereProblem,
    k: DMatrix<f64>,
    m: usize,
}

fn abs_spectral_max(m: DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = m.symmetric_eigen();
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i].abs() > eig.eigenvalues[best].abs() {
            best = i;
        }
    }
    (eig.eigenvalues[best].abs(), eig.eigenvectors.column(best).into_owned())
}

impl SliceForm {
    fn coefficients(&self, l: f64) -> (f64, f64) {
        let r = l.powi(4) + 16.0;
        let (alpha, beta) = match self.kind {
            DefectKind::Eikonal => (16.0 / r.powf(1.5), 0.0),
            _ => (16.0 * (self.q + 2.0) / r.powf(1.5), 2.0 / r.sqrt()),
        };
        if self.kind == DefectKind::ScaledHarmonic {
            ((2.0 - self.q) * alpha, (2.0 - self.q) * beta)
        } else {
            (alpha, beta)
        }
    }

    fn a(&self, s: &DVector<f64>) -> DMatrix<f64> {
        let j = self.problem.j(s);
        &j * &j + DMatrix::identity(self.m, self.m) * s.norm_squared()
    }

    fn form(&self, a: &DMatrix<f64>, l: f64) -> DMatrix<f64> {
        let (alpha, beta) = self.coefficients(l);
        a * alpha - &self.k * beta
    }

    fn value(&self, a: &DMatrix<f64>, l: f64) -> f64 {
        l * l * abs_spectral_max(self.form(a, l)).0
    }

    /// Limit of the slice as `L → ∞`, attained on `t = 0`.
    fn equator(&self) -> (f64, DVector<f64>) {
        match self.kind {
            DefectKind::Eikonal => (0.0, DVector::from_fn(self.m, |i, _| if i == 0 { 1.0 } else { 0.0 })),
            _ => {
                let scale = if self.kind == DefectKind::ScaledHarmonic { 2.0 * (self.q - 2.0) } else { 2.0 };
                let (v, x) = abs_spectral_max(self.k.clone());
                (scale * v, x)
            }
        }
    }
}

fn radial_grid(m: usize, m2: usize) -> Vec<f64> {
    let q = (m + 2 * m2) as f64;
    let l0 = 2f64.powf(0.75) * ((m + 2) as f64).powf(0.25) / (q + 2.0 + m2 as f64).powf(0.25);
    let mut g: Vec<f64> = (1..=64).map(|i| 4.0 * i as f64 / 64.0).collect();
    g.extend([2f64.powf(0.75), l0]);
    g.extend([5.0, 6.0, 8.0, 11.0, 16.0, 23.0, 32.0, 64.0]);
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// Refines `L` by golden section within the neighbouring grid cells.
fn refine_radius(form: &SliceForm, a: &DMatrix<f64>, grid: &[f64], l: f64) -> (f64, f64) {
    let idx = grid.iter().position(|&g| g == l).unwrap_or(0);
    let lo = if idx == 0 { grid[0] * 0.5 } else { grid[idx - 1] };
    let hi = if idx + 1 < grid.len() { grid[idx + 1] } else { grid[idx] * 2.0 };
    let (lr, vr) = golden_max(|x| form.value(a, x), lo, hi, 1e-10 * hi);
    let v0 = form.value(a, l);
    if vr >= v0 {
        (lr, vr)
    } else {
        (l, v0)
    }
}

/// Coordinate pattern search over the unit sphere of `s` at fixed `L`.
fn refine_direction(form: &SliceForm, s: &DVector<f64>, l: f64) -> (DVector<f64>, f64) {
    let mut s = s.clone();
    let mut best = form.value(&form.a(&s), l);
    if s.len() == 1 {
        return (s, best);
    }
    let mut step = 0.05;
    while step > 1e-9 {
        let mut improved = false;
        for k in 0..s.len() {
            for sign in [1.0, -1.0] {
                let mut trial = s.clone();
                trial[k] += sign * step;
                let trial = trial.normalize();
                let v = form.value(&form.a(&trial), l);
                if v > best {
                    best = v;
                    s = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (s, best)
}

/// Estimates `sup |defect|` over `G \ {0}` on the slice `‖t‖_v = 1` using
/// 0-homogeneity. For fixed `(s, L)` the sup over `‖x‖ = L` is exact
/// (largest absolute eigenvalue); `s` and `L` are searched on grids and
/// polished. The `t = 0` limit is included.
pub fn sup_defect(algebra: &StepTwoAlgebra, metric: &VerticalMetric, kind: DefectKind, sampler: &SolverConfig) -> Result<SupDefect> {
    check_dim(algebra.m2(), metric.dim())?;
    sampler.validate()?;
    let (m, m2) = (algebra.m(), algebra.m2());
    let form = SliceForm {
        kind,
        q: algebra.homogeneous_dimension() as f64,
        problem: SphereProblem::new(algebra, metric),
        k: vertical_trace_operator(algebra, metric)?,
        m,
    };
    let radii = radial_grid(m, m2);
    let directions = sphere_grid(m2, sampler);
    let scored: Vec<(f64, f64)> = directions
        .par_iter()
        .map(|s| {
            let a = form.a(s);
            radii
                .iter()
                .map(|&l| (form.value(&a, l), l))
                .fold((f64::NEG_INFINITY, 0.0), |acc, v| if v.0 > acc.0 { v } else { acc })
        })
        .collect();
    let mut samples = (directions.len() * radii.len()) as u64;
    let mut order: Vec<usize> = (0..directions.len()).collect();
    order.sort_by(|&i, &j| scored[j].0.total_cmp(&scored[i].0).then(i.cmp(&j)));
    let polished: Vec<(f64, DVector<f64>, f64)> = order
        .iter()
        .take(4)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&&i| {
            let mut s = directions[i].clone();
            let (mut l, mut v) = refine_radius(&form, &form.a(&s), &radii, scored[i].1);
            for _ in 0..3 {
                let (s2, _) = refine_direction(&form, &s, l);
                s = s2;
                let (l2, v2) = refine_radius(&form, &form.a(&s), &radii, l);
                let gain = v2 - v;
                l = l2;
                v = v2;
                if gain <= 1e-14 * (1.0 + v.abs()) {
                    break;
                }
            }
            (v, s, l)
        })
        .collect();
    samples += polished.len() as u64 * 64;
    let best = polished
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.0.total_cmp(&b.0).then(j.cmp(i)))
        .map(|(_, r)| r.clone())
        .expect("at least one direction");
    let (eq_value, eq_x) = form.equator();
    let (witness, slice_radius) = if eq_value > best.0 {
        (GroupPoint::new(eq_x, DVector::zeros(m2)), None)
    } else {
        let (_, s, l) = best;
        let (_, x) = abs_spectral_max(form.form(&form.a(&s), l));
        (GroupPoint::new(crate::deviation::sign_normalize(x) * l, metric.from_euclidean(&s)), Some(l))
    };
    let value = match kind {
        DefectKind::Eikonal => eikonal_defect(algebra, metric, &witness)?,
        DefectKind::Harmonic => harmonic_defect(algebra, metric, &witness)?,
        DefectKind::ScaledHarmonic => scaled_harmonic_defect(algebra, metric, &witness)?,
    };
    Ok(SupDefect {
        kind,
        sup: value.abs(),
        interior: slice_radius.is_some_and(|l| l > 0.0 && l < 4.0),
        witness,
        slice_radius,
        samples,
    })
}
