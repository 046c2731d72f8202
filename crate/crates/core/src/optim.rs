//! Small deterministic optimizers shared by the solvers.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// RNG stream for branch `branch` of a run seeded with `seed`.
pub fn branch_rng(seed: u64, branch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(branch);
    rng
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Uniform sample from the Euclidean unit sphere in `ℝⁿ`.
pub fn sphere_sample(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = gaussian_vec(rng, n);
        let r = v.norm();
        if r > 1e-12 {
            return v / r;
        }
    }
}

/// `count` points of the Fibonacci lattice on the unit sphere in `ℝ³`.
pub fn fibonacci_sphere(count: usize) -> Vec<DVector<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            DVector::from_vec(vec![r * phi.cos(), r * phi.sin(), z])
        })
        .collect()
}

/// `count` equally spaced directions on the upper half circle.
pub fn half_circle(count: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|i| {
            let th = std::f64::consts::PI * i as f64 / count as f64;
            DVector::from_vec(vec![th.cos(), th.sin()])
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct AscentResult {
    pub value: f64,
    pub point: DVector<f64>,
    pub converged: bool,
    pub evaluations: u64,
}

/// Projected gradient ascent on the unit sphere with Armijo backtracking.
/// `f` returns the value and the Euclidean gradient.
pub fn sphere_ascent<F>(f: F, start: &DVector<f64>, max_iters: usize, tol: f64) -> AscentResult
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut s = start.normalize();
    let (mut val, mut grad) = f(&s);
    let mut evaluations = 1;
    let mut step = 1.0 / (1.0 + grad.norm());
    let gtol = tol.sqrt();
    let mut converged = false;
    for _ in 0..max_iters {
        let rg = &grad - &s * grad.dot(&s);
        let gn2 = rg.norm_squared();
        if gn2.sqrt() <= gtol * (1.0 + val.abs()) {
            converged = true;
            break;
        }
        let mut alpha = step;
        let mut accepted = None;
        while alpha > 1e-18 {
            let trial = (&s + &rg * alpha).normalize();
            let (tv, tg) = f(&trial);
            evaluations += 1;
            if tv >= val + 1e-4 * alpha * gn2 {
                accepted = Some((trial, tv, tg));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((trial, tv, tg)) => {
                let gain = tv - val;
                s = trial;
                val = tv;
                grad = tg;
                step = alpha * 2.0;
                if gain <= tol * 1e-3 * (1.0 + val.abs()) {
                    converged = true;
                    break;
                }
            }
            None => {
                converged = true;
                break;
            }
        }
    }
    AscentResult { value: val, point: s, converged, evaluations }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: u64,
}

/// Nelder-Mead minimization with dimension-adaptive coefficients.
/// Converges when both the value spread and the simplex diameter fall below
/// `tol`-scaled thresholds.
pub fn nelder_mead<F>(f: F, x0: &[f64], step: f64, max_iters: usize, tol: f64) -> SimplexResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = if n > 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evaluations = (n + 1) as u64;
    let xtol = tol.sqrt();
    let mut converged = false;
    let mut iterations = 0;
    let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };
    while iterations < max_iters {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let spread = values[n] - values[0];
        let diameter = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= tol * (1.0 + values[0].abs()) && diameter <= xtol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / nf;
            }
        }
        let reflected = combine(&centroid, &simplex[n], -alpha);
        let fr = f(&reflected);
        evaluations += 1;
        if fr < values[0] {
            let expanded = combine(&centroid, &simplex[n], -alpha * beta);
            let fe = f(&expanded);
            evaluations += 1;
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[n] {
            let c = combine(&centroid, &simplex[n], -alpha * gamma);
            let fc = f(&c);
            (c, fc)
        } else {
            let c = combine(&centroid, &simplex[n], gamma);
            let fc = f(&c);
            (c, fc)
        };
        evaluations += 1;
        if fc < values[n].min(fr) {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            simplex[i] = combine(&best, &simplex[i], delta);
            values[i] = f(&simplex[i]);
        }
        evaluations += n as u64;
    }
    let best = (0..=n).min_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j))).unwrap_or(0);
    SimplexResult { point: simplex[best].clone(), value: values[best], converged, iterations, evaluations }
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Bisection root of an increasing function on `[a, b]`.
pub fn bisect_increasing<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    if f(a) > 0.0 || f(b) < 0.0 {
        return None;
    }
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if f(mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Some(0.5 * (a + b))
}
