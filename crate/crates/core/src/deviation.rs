//! H-type deviation: sup over the vertical unit sphere, inf over vertical metrics.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::StepTwoAlgebra;
use crate::error::{check_dim, Error, Result};
use crate::metric::{h_type_defect, j_matrix, VerticalMetric, J_SIGN};
use crate::optim::{self, branch_rng, fibonacci_sphere, half_circle, nelder_mead, sphere_ascent, sphere_sample};
use crate::ser;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub grid_density: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { restarts: 4, max_iters: 400, tol: 1e-10, seed: 0, grid_density: 2000 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol <= 1e-2) {
            return Err(Error::InvalidParameter(format!("tol must lie in (0, 1e-2], got {}", self.tol)));
        }
        if self.restarts == 0 || self.max_iters == 0 || self.grid_density == 0 {
            return Err(Error::InvalidParameter("restarts, max_iters and grid_density must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub value: f64,
    #[serde(with = "ser::vector")]
    pub witness_t: DVector<f64>,
    pub metric: VerticalMetric,
    pub inner_converged: bool,
    pub outer_converged: bool,
    pub evaluations: u64,
}

/// Squared defect on the Euclidean sphere `s = Lᵀ t`, where
/// `J = J_SIGN sum_k s_k K_k` and `K_k = sum_q L_qk B^q`.
pub(crate) struct SphereProblem {
    m: usize,
    k: Vec<DMatrix<f64>>,
}

impl SphereProblem {
    pub(crate) fn new(algebra: &StepTwoAlgebra, metric: &VerticalMetric) -> Self {
        let l = metric.factor();
        let m = algebra.m();
        let k = (0..algebra.m2())
            .map(|kk| {
                let mut acc = DMatrix::zeros(m, m);
                for (q, bq) in algebra.b().iter().enumerate() {
                    if l[(q, kk)] != 0.0 {
                        acc += bq * l[(q, kk)];
                    }
                }
                acc
            })
            .collect();
        SphereProblem { m, k }
    }

    pub(crate) fn j(&self, s: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.m, self.m);
        for (kk, &sk) in self.k.iter().zip(s.iter()) {
            j += kk * (J_SIGN * sk);
        }
        j
    }

    fn residual(&self, j: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
        let mut r = j * j;
        let c = s.norm_squared();
        for i in 0..self.m {
            r[(i, i)] += c;
        }
        r
    }

    pub(crate) fn value(&self, s: &DVector<f64>) -> f64 {
        self.residual(&self.j(s), s).norm_squared()
    }

    /// `∂F/∂s_k = 4 J_SIGN tr(K_k J M) + 4 s_k tr(M)`, `M = J² + |s|² Id`.
    pub(crate) fn value_grad(&self, s: &DVector<f64>) -> (f64, DVector<f64>) {
        let j = self.j(s);
        let r = self.residual(&j, s);
        let jr = &j * &r;
        let tr = r.trace();
        let grad = DVector::from_fn(self.k.len(), |kk, _| {
            4.0 * J_SIGN * self.k[kk].dot(&jr.transpose()) + 4.0 * s[kk] * tr
        });
        (r.norm_squared(), grad)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct InnerResult {
    pub value_sq: f64,
    pub s: DVector<f64>,
    pub converged: bool,
    pub evaluations: u64,
}

/// Coarse directions on the Euclidean unit sphere of dimension m2.
pub(crate) fn sphere_grid(m2: usize, cfg: &SolverConfig) -> Vec<DVector<f64>> {
    match m2 {
        1 => vec![DVector::from_element(1, 1.0)],
        2 => half_circle(cfg.grid_density),
        3 => fibonacci_sphere(cfg.grid_density),
        _ => {
            let mut rng = branch_rng(cfg.seed, u64::MAX);
            (0..cfg.grid_density).map(|_| sphere_sample(&mut rng, m2)).collect()
        }
    }
}

fn lex_abs_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let o = x.abs().total_cmp(&y.abs());
        if o != std::cmp::Ordering::Equal {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

/// Flips the sign so the first non-negligible coordinate is positive.
pub(crate) fn sign_normalize(mut v: DVector<f64>) -> DVector<f64> {
    let scale = v.amax();
    if let Some(first) = v.iter().copied().find(|c| c.abs() > 1e-9 * scale) {
        if first < 0.0 {
            v.neg_mut();
        }
    }
    v
}

/// Maximizes the squared defect over the sphere: coarse grid then polish of
/// the best `polish` candidates. Ties go to the lexicographically largest |t|.
pub(crate) fn inner_sup(problem: &SphereProblem, metric: &VerticalMetric, grid: &[DVector<f64>], cfg: &SolverConfig, polish: usize) -> InnerResult {
    let m2 = grid[0].len();
    if m2 == 1 {
        let s = DVector::from_element(1, 1.0);
        return InnerResult { value_sq: problem.value(&s), s, converged: true, evaluations: 1 };
    }
    let values: Vec<f64> = grid.par_iter().map(|s| problem.value(s)).collect();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let picks: Vec<usize> = order.into_iter().take(polish.max(1)).collect();
    let polished: Vec<optim::AscentResult> = picks
        .par_iter()
        .map(|&i| sphere_ascent(|s| problem.value_grad(s), &grid[i], cfg.max_iters, cfg.tol))
        .collect();
    let evaluations = grid.len() as u64 + polished.iter().map(|r| r.evaluations).sum::<u64>();
    let best = polished.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
    let window = cfg.tol * (1.0 + best.abs());
    let mut chosen: Option<(&optim::AscentResult, DVector<f64>)> = None;
    for r in polished.iter().filter(|r| r.value >= best - window) {
        let t = metric.from_euclidean(&r.point);
        let better = match &chosen {
            None => true,
            Some((_, ct)) => lex_abs_cmp(&t, ct) == std::cmp::Ordering::Greater,
        };
        if better {
            chosen = Some((r, t));
        }
    }
    let (r, _) = chosen.expect("at least one candidate");
    let converged = polished.iter().filter(|p| p.value >= best - window).all(|p| p.converged);
    InnerResult { value_sq: r.value, s: sign_normalize(r.point.clone()), converged, evaluations }
}

/// Distinct local maximizers at the identity metric plus a few seeded
/// directions; they seed the inner ascent while the outer loop moves the metric.
fn anchor_directions(algebra: &StepTwoAlgebra, grid: &[DVector<f64>], cfg: &SolverConfig) -> Vec<DVector<f64>> {
    let id = VerticalMetric::identity(algebra.m2());
    let problem = SphereProblem::new(algebra, &id);
    let values: Vec<f64> = grid.par_iter().map(|s| problem.value(s)).collect();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let polished: Vec<optim::AscentResult> = order
        .iter()
        .take(4 * cfg.restarts)
        .map(|&i| sphere_ascent(|s| problem.value_grad(s), &grid[i], cfg.max_iters, cfg.tol))
        .collect();
    let best = polished.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
    let mut anchors: Vec<DVector<f64>> = Vec::new();
    for r in polished.iter().filter(|r| r.value >= best * (1.0 - 1e-6)) {
        if anchors.len() < cfg.restarts && anchors.iter().all(|a| a.dot(&r.point).abs() < 1.0 - 1e-6) {
            anchors.push(r.point.clone());
        }
    }
    let mut rng = branch_rng(cfg.seed, u64::MAX - 1);
    anchors.extend((0..cfg.restarts.div_ceil(2)).map(|_| sphere_sample(&mut rng, algebra.m2())));
    anchors
}

fn polish_count(m2: usize, cfg: &SolverConfig) -> usize {
    if m2 <= 3 {
        4
    } else {
        2 * cfg.restarts
    }
}

fn report_at(algebra: &StepTwoAlgebra, metric: &VerticalMetric, cfg: &SolverConfig) -> DeviationReport {
    let problem = SphereProblem::new(algebra, metric);
    let grid = sphere_grid(algebra.m2(), cfg);
    let r = inner_sup(&problem, metric, &grid, cfg, polish_count(algebra.m2(), cfg));
    let witness_t = sign_normalize(metric.from_euclidean(&r.s));
    let value = h_type_defect(algebra, metric, &witness_t).unwrap_or(f64::NAN) / (algebra.m() as f64).sqrt();
    DeviationReport {
        value,
        witness_t,
        metric: metric.clone(),
        inner_converged: r.converged,
        outer_converged: true,
        evaluations: r.evaluations + 1,
    }
}

/// `δ(G, g_v)`: sup over g_v-unit t of `‖J_t² + Id‖_HS / √m`.
pub fn deviation_at_metric(algebra: &StepTwoAlgebra, metric: &VerticalMetric, cfg: &SolverConfig) -> Result<DeviationReport> {
    check_dim(algebra.m2(), metric.dim())?;
    cfg.validate()?;
    Ok(report_at(algebra, metric, cfg))
}

/// `δ(G)`: inf over vertical metrics, by simplex descent on the log-Cholesky
/// parameters with `restarts` seeded starts (the first is the identity).
pub fn deviation(algebra: &StepTwoAlgebra, cfg: &SolverConfig) -> Result<DeviationReport> {
    cfg.validate()?;
    let m2 = algebra.m2();
    let dim = m2 * (m2 + 1) / 2;
    let sqrt_m = (algebra.m() as f64).sqrt();
    let grid = sphere_grid(m2, cfg);
    // the outer loop uses a lighter inner solve; the final report redoes the full one
    let outer_cfg = SolverConfig { max_iters: cfg.max_iters.min(60), tol: cfg.tol.max(1e-9), ..cfg.clone() };
    let anchors = if m2 > 3 { anchor_directions(algebra, &grid, cfg) } else { Vec::new() };
    let objective = |p: &[f64]| -> f64 {
        let Ok(metric) = VerticalMetric::from_log_cholesky(p, m2) else {
            return f64::INFINITY;
        };
        let problem = SphereProblem::new(algebra, &metric);
        let value_sq = if m2 <= 3 {
            inner_sup(&problem, &metric, &grid, &outer_cfg, 2).value_sq
        } else {
            anchors
                .iter()
                .map(|t| sphere_ascent(|s| problem.value_grad(s), &metric.to_euclidean(t), outer_cfg.max_iters, outer_cfg.tol).value)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        value_sq.sqrt() / sqrt_m
    };
    let starts: Vec<Vec<f64>> = (0..cfg.restarts)
        .map(|b| {
            if b == 0 {
                VerticalMetric::identity(m2).to_log_cholesky()
            } else {
                let mut rng = branch_rng(cfg.seed, b as u64);
                optim::gaussian_vec(&mut rng, dim).iter().map(|v| 0.5 * v).collect()
            }
        })
        .collect();
    let runs: Vec<(optim::SimplexResult, u64)> = starts
        .par_iter()
        .map(|x0| {
            let mut r = nelder_mead(objective, x0, 0.5, cfg.max_iters, cfg.tol);
            let mut evals = r.evaluations;
            // restart from the incumbent until the simplex stops improving
            for _ in 0..3 {
                let again = nelder_mead(objective, &r.point, 0.05, cfg.max_iters, cfg.tol);
                evals += again.evaluations;
                let improved = again.value < r.value - cfg.tol * (1.0 + r.value.abs());
                if again.value <= r.value {
                    r = again;
                }
                if !improved {
                    break;
                }
            }
            (r, evals)
        })
        .collect();
    let best = (0..runs.len())
        .min_by(|&a, &b| runs[a].0.value.total_cmp(&runs[b].0.value).then(a.cmp(&b)))
        .expect("restarts >= 1");
    let metric = VerticalMetric::from_log_cholesky(&runs[best].0.point, m2)?;
    let mut report = report_at(algebra, &metric, cfg);
    report.outer_converged = runs[best].0.converged;
    report.evaluations += runs.iter().map(|(_, e)| *e).sum::<u64>();
    Ok(report)
}

/// `λ₀ = ‖b‖₂ / ‖b‖₄²`; the metric `G = [λ₀²]` minimizes `δ(ℍⁿ(b), G)`.
pub fn optimal_lambda_heis(b: &[f64]) -> f64 {
    let n = b.len() as f64;
    let s2 = b.iter().map(|v| v * v).sum::<f64>() / n;
    let s4 = b.iter().map(|v| v.powi(4)).sum::<f64>() / n;
    s2.sqrt() / s4.sqrt()
}

/// `δ(ℍⁿ(b), [λ²]) = √(1 − 2λ²‖b‖₂² + λ⁴‖b‖₄⁴)` with averaged norms.
pub fn heis_deviation_curve(b: &[f64], lambda: f64) -> f64 {
    let n = b.len() as f64;
    let s2 = b.iter().map(|v| v * v).sum::<f64>() / n;
    let s4 = b.iter().map(|v| v.powi(4)).sum::<f64>() / n;
    let l2 = lambda * lambda;
    (1.0 - 2.0 * l2 * s2 + l2 * l2 * s4).max(0.0).sqrt()
}

/// `√(1 − (‖b‖₂/‖b‖₄)⁴)` with averaged norms.
pub fn heis_deviation_closed_form(b: &[f64]) -> f64 {
    heis_deviation_curve(b, optimal_lambda_heis(b))
}

/// Pointwise defect for `Gⁿ_ε` with `ε` absorbed into `q`.
pub fn eval_dgen(n: usize, p: f64, q: f64, alpha: f64, theta: f64) -> Result<f64> {
    if n < 2 || !(p > 0.0) || !(q > 0.0) || !alpha.is_finite() || !theta.is_finite() {
        return Err(Error::InvalidParameter(format!("eval_dgen needs n >= 2, p, q > 0; got n={n}, p={p}, q={q}")));
    }
    let nf = n as f64;
    let c2 = (theta - alpha).cos().powi(2);
    let ct2 = theta.cos().powi(2);
    let a = 1.0 - p * p * c2;
    let v = a * a + (2.0 / nf) * (2.0 * p * p * c2 - 1.0) * ct2 * q * q + (1.0 / nf) * ct2 * ct2 * q.powi(4);
    Ok(v.max(0.0).sqrt())
}

/// Least-squares `S` with `J_t² ≈ −‖t‖_v² S` over a fixed probe set, and the
/// largest probe residual `‖S + J_t²/‖t‖_v²‖_HS`.
pub fn generalized_s_matrix(algebra: &StepTwoAlgebra, metric: &VerticalMetric) -> Result<(DMatrix<f64>, f64)> {
    check_dim(algebra.m2(), metric.dim())?;
    let e = metric.orthonormal_basis();
    let m2 = algebra.m2();
    let mut probes: Vec<DVector<f64>> = (0..m2).map(|k| e.column(k).into_owned()).collect();
    for i in 0..m2 {
        for j in i + 1..m2 {
            probes.push((e.column(i) + e.column(j)) / 2f64.sqrt());
        }
    }
    let samples = probes
        .iter()
        .map(|t| j_matrix(algebra, metric, t).map(|j| -j.squared() / metric.norm_sq(t)))
        .collect::<Result<Vec<_>>>()?;
    let m = algebra.m();
    let s = samples.iter().fold(DMatrix::zeros(m, m), |acc, x| acc + x) / samples.len() as f64;
    let residual = samples.iter().map(|x| (x - &s).norm()).fold(0.0, f64::max);
    Ok((s, residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{make_free_step_two, make_g_bar_eps, make_g_eps, make_heisenberg, make_heisenberg_aniso};
    use approx::assert_relative_eq;

    fn quick() -> SolverConfig {
        SolverConfig { restarts: 2, max_iters: 300, tol: 1e-10, seed: 1, grid_density: 400 }
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig { tol: 0.1, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { restarts: 0, ..Default::default() }.validate().is_err());
        let c: SolverConfig = serde_json::from_str("{\"seed\": 9}").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.restarts, SolverConfig::default().restarts);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let a = make_free_step_two(4).unwrap();
        let g = VerticalMetric::from_log_cholesky(&[0.1, 0.2, -0.1, 0.0, 0.3, 0.2, 0.1, -0.2, 0.05, 0.1, 0.0, 0.1, 0.2, -0.3, 0.1, 0.0, 0.2, 0.1, 0.0, 0.1, -0.1], 6).unwrap();
        let p = SphereProblem::new(&a, &g);
        let s = DVector::from_vec(vec![0.3, -0.5, 0.2, 0.7, -0.1, 0.4]);
        let (_, grad) = p.value_grad(&s);
        for k in 0..6 {
            let h = 1e-6;
            let mut sp = s.clone();
            let mut sm = s.clone();
            sp[k] += h;
            sm[k] -= h;
            let fd = (p.value(&sp) - p.value(&sm)) / (2.0 * h);
            assert_relative_eq!(grad[k], fd, epsilon = 1e-6, max_relative = 1e-6);
        }
    }

    #[test]
    fn sphere_value_matches_defect() {
        let a = make_g_eps(2, 1.0).unwrap();
        let g = VerticalMetric::new(DMatrix::from_row_slice(2, 2, &[1.3, 0.2, 0.2, 0.6])).unwrap();
        let p = SphereProblem::new(&a, &g);
        let s = DVector::from_vec(vec![0.6, 0.8]);
        let t = g.from_euclidean(&s);
        assert_relative_eq!(p.value(&s).sqrt(), h_type_defect(&a, &g, &t).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn fixed_metric_examples() {
        let a = make_heisenberg_aniso(&[1.0, 2.0]).unwrap();
        let r = deviation_at_metric(&a, &VerticalMetric::identity(1), &quick()).unwrap();
        assert_relative_eq!(r.value, 18f64.sqrt() / 2.0, epsilon = 1e-12);
        let r = deviation_at_metric(&make_heisenberg(3).unwrap(), &VerticalMetric::identity(1), &quick()).unwrap();
        assert_eq!(r.value, 0.0);
        for m in 3..6 {
            let a = make_free_step_two(m).unwrap();
            let r = deviation_at_metric(&a, &VerticalMetric::identity(a.m2()), &quick()).unwrap();
            assert_relative_eq!(r.value, ((m as f64 - 2.0) / m as f64).sqrt(), epsilon = 1e-8);
            assert!(r.inner_converged);
        }
    }

    #[test]
    fn witness_is_unit_and_reproduces_value() {
        let a = make_g_eps(2, 1.0).unwrap();
        let g = VerticalMetric::new(DMatrix::from_row_slice(2, 2, &[1.3, 0.2, 0.2, 0.6])).unwrap();
        let r = deviation_at_metric(&a, &g, &quick()).unwrap();
        assert_relative_eq!(g.norm_sq(&r.witness_t), 1.0, epsilon = 1e-8);
        let v = h_type_defect(&a, &g, &r.witness_t).unwrap() / 2.0;
        assert_relative_eq!(v, r.value, max_relative = 1e-8);
        let s = serde_json::to_value(&r).unwrap();
        let keys: Vec<_> = s.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["evaluations", "inner_converged", "metric", "outer_converged", "value", "witness_t"]);
    }

    #[test]
    fn reports_are_deterministic() {
        let a = make_free_step_two(4).unwrap();
        let cfg = SolverConfig { restarts: 2, max_iters: 40, ..quick() };
        let r1 = deviation(&a, &cfg).unwrap();
        let r2 = deviation(&a, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&r1).unwrap(), serde_json::to_string(&r2).unwrap());
    }

    #[test]
    fn heisenberg_optimum_matches_closed_form() {
        for b in [vec![1.0, 2.0], vec![0.5, 1.0, 1.0], vec![1.0, 1.0]] {
            let a = make_heisenberg_aniso(&b).unwrap();
            let r = deviation(&a, &quick()).unwrap();
            assert_relative_eq!(r.value, heis_deviation_closed_form(&b), epsilon = 1e-6);
            assert_relative_eq!(r.metric.g()[(0, 0)].sqrt(), optimal_lambda_heis(&b), epsilon = 1e-3);
            let id = deviation_at_metric(&a, &VerticalMetric::identity(1), &quick()).unwrap();
            assert!(r.value <= id.value + 1e-8);
        }
    }

    #[test]
    fn heisenberg_curve_matches_fixed_metric() {
        let b = [0.5, 1.0, 1.0];
        let a = make_heisenberg_aniso(&b).unwrap();
        for lambda in [0.3, 0.8, 1.0, 1.7, 2.5] {
            let g = VerticalMetric::new(DMatrix::from_element(1, 1, lambda * lambda)).unwrap();
            let r = deviation_at_metric(&a, &g, &quick()).unwrap();
            assert_relative_eq!(r.value, heis_deviation_curve(&b, lambda), epsilon = 1e-8, max_relative = 1e-8);
        }
    }

    #[test]
    fn lambda_examples() {
        assert_relative_eq!(optimal_lambda_heis(&[1.0, 1.0, 1.0]), 1.0);
        assert_relative_eq!(optimal_lambda_heis(&[1.0, 2.0]), (2.5f64 / 8.5).sqrt(), epsilon = 1e-15);
        let b = [0.5, 1.0, 1.0];
        let l0 = optimal_lambda_heis(&b);
        let (lbest, _) = optim::golden_max(|l| -heis_deviation_curve(&b, l), 0.1, 3.0, 1e-12);
        assert_relative_eq!(l0, lbest, epsilon = 1e-6);
        assert_relative_eq!(heis_deviation_closed_form(&[1.0, 2.0]), (1.0f64 - 6.25 / 8.5).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn g_bar_closed_form() {
        for (n, eps) in [(2usize, 1.0f64), (3, 0.5)] {
            let nf = n as f64;
            let want = eps * ((2.0 + (nf - 1.0) / nf * eps * eps) / (nf + 4.0 * eps * eps + eps.powi(4))).sqrt();
            let r = deviation(&make_g_bar_eps(n, eps).unwrap(), &quick()).unwrap();
            assert_relative_eq!(r.value, want, epsilon = 1e-6);
        }
    }

    #[test]
    fn dgen_examples() {
        for n in [2usize, 3, 5] {
            for &(p, q, al) in &[(0.7, 1.3, 0.4), (1.2, 0.5, -1.0)] {
                let th = al + std::f64::consts::FRAC_PI_2;
                let s2 = al.sin().powi(2);
                let want = (1.0 - 2.0 / n as f64 * s2 * q * q + s2 * s2 * q.powi(4) / n as f64).sqrt();
                assert_relative_eq!(eval_dgen(n, p, q, al, th).unwrap(), want, epsilon = 1e-12);
            }
        }
        assert!(eval_dgen(2, 1.0, 1e-12, 0.0, 0.0).unwrap() < 1e-10);
        assert!(eval_dgen(1, 1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn dgen_matches_pointwise_defect() {
        // metric with Cholesky-type factor C = [[p cos α, p sin α], [q, 0]] and t = C^{-T}(cos θ, sin θ)
        let (n, p, q, al, th) = (2usize, 1.0f64, 1.0f64, 0.3f64, 1.1f64);
        let a = make_g_eps(n, 1.0).unwrap();
        let c = DMatrix::from_row_slice(2, 2, &[p * al.cos(), p * al.sin(), q, 0.0]);
        let g = VerticalMetric::new(&c * c.transpose()).unwrap();
        let s = DVector::from_vec(vec![th.cos(), th.sin()]);
        let t = c.transpose().try_inverse().unwrap() * s;
        assert_relative_eq!(g.norm_sq(&t), 1.0, epsilon = 1e-12);
        let d = h_type_defect(&a, &g, &t).unwrap() / (2.0 * n as f64).sqrt();
        assert_relative_eq!(d, eval_dgen(n, p, q, al, th).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn s_matrix_examples() {
        let a = make_heisenberg_aniso(&[1.0, 2.0, 0.5]).unwrap();
        let (s, res) = generalized_s_matrix(&a, &VerticalMetric::identity(1)).unwrap();
        assert_eq!(s, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 4.0, 4.0, 0.25, 0.25])));
        assert_eq!(res, 0.0);
        let (s, res) = generalized_s_matrix(&make_heisenberg(2).unwrap(), &VerticalMetric::identity(1)).unwrap();
        assert_eq!(s, DMatrix::identity(4, 4));
        assert_eq!(res, 0.0);
        let id = DMatrix::<f64>::identity(6, 6);
        let (s, _) = generalized_s_matrix(&a, &VerticalMetric::identity(1)).unwrap();
        let r = deviation_at_metric(&a, &VerticalMetric::identity(1), &quick()).unwrap();
        assert_relative_eq!((id - s).norm() / 6f64.sqrt(), r.value, epsilon = 1e-12);
        let (_, res) = generalized_s_matrix(&make_free_step_two(3).unwrap(), &VerticalMetric::identity(3)).unwrap();
        assert!(res > 0.1);
    }
}
