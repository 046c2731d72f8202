#![allow(dead_code)]

use htype::algebra::{GroupPoint, StepTwoAlgebra};
use htype::calculus::lemmas::*;
use htype::calculus::{
    finite_difference, horizontal_gradient, horizontal_hessian, norm_sq_horizontal_gradient, sub_laplacian,
    symmetric_horizontal_hessian, Coordinate, HorizontalNormSq, Kaplan, KaplanGauge, ScalarField, VerticalNormSq,
};
use htype::metric::VerticalMetric;
use htype::optim::branch_rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn random_points(algebra: &StepTwoAlgebra, count: usize, seed: u64) -> Vec<GroupPoint> {
    let mut rng = branch_rng(seed, 17);
    (0..count)
        .map(|_| {
            GroupPoint::new(
                DVector::from_fn(algebra.m(), |_, _| rng.random_range(-1.0..1.0)),
                DVector::from_fn(algebra.m2(), |_, _| rng.random_range(-1.0..1.0)),
            )
        })
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

fn rel_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| rel(*x, *y)).fold(0.0, f64::max)
}

fn rel_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| rel(*x, *y)).fold(0.0, f64::max)
}

/// Per-identity worst residual of the closed-form lemmas against
/// finite-difference jets.
#[derive(Debug, Default, Clone)]
pub struct LemmaResiduals {
    pub entries: Vec<(&'static str, f64)>,
}

impl LemmaResiduals {
    fn record(&mut self, name: &'static str, value: f64) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(e) => e.1 = e.1.max(value),
            None => self.entries.push((name, value)),
        }
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().map(|e| e.1).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> (&'static str, f64) {
        self.entries.iter().copied().fold(("none", 0.0), |a, b| if b.1 > a.1 { b } else { a })
    }
}

pub fn lemma_residuals(algebra: &StepTwoAlgebra, metric: &VerticalMetric, points: &[GroupPoint]) -> LemmaResiduals {
    let mut r = LemmaResiduals::default();
    let m = algebra.m();
    let fd_b = finite_difference(HorizontalNormSq);
    let fd_c = finite_difference(VerticalNormSq::new(metric.clone()));
    let fd_a = finite_difference(KaplanGauge::new(metric.clone()));
    let fd_n = finite_difference(Kaplan::new(metric.clone(), 1.0));
    for p in points {
        r.record("grad b", rel_vec(&grad_b(p), &horizontal_gradient(&fd_b, algebra, p).unwrap()));
        r.record("sym hessian b", rel_mat(&sym_hessian_b(m), &symmetric_horizontal_hessian(&fd_b, algebra, p).unwrap()));
        r.record("sub-laplacian b", rel(sub_laplacian_b(m), sub_laplacian(&fd_b, algebra, p).unwrap()));
        let xt = frame_of_t(algebra, p);
        for q in 0..algebra.m2() {
            let fd_t = finite_difference(Coordinate::vertical(q));
            r.record("X_i t_q", rel_vec(&xt.column(q).into_owned(), &horizontal_gradient(&fd_t, algebra, p).unwrap()));
            r.record("X_i X_j t_q", rel_mat(&second_frame_of_t(algebra, q), &horizontal_hessian(&fd_t, algebra, p).unwrap()));
        }
        r.record("sym hessian c", rel_mat(&sym_hessian_c(algebra, metric, p), &symmetric_horizontal_hessian(&fd_c, algebra, p).unwrap()));
        r.record("sub-laplacian c", rel(sub_laplacian_c(algebra, metric, p), sub_laplacian(&fd_c, algebra, p).unwrap()));
        r.record("grad c", rel_vec(&grad_c(algebra, metric, p).unwrap(), &horizontal_gradient(&fd_c, algebra, p).unwrap()));
        r.record("grad a", rel_vec(&grad_a(algebra, metric, p).unwrap(), &horizontal_gradient(&fd_a, algebra, p).unwrap()));
        r.record("|grad a|^2", rel(norm_sq_grad_a(algebra, metric, p).unwrap(), norm_sq_horizontal_gradient(&fd_a, algebra, p).unwrap()));
        r.record("sub-laplacian a", rel(sub_laplacian_a(algebra, metric, p).unwrap(), sub_laplacian(&fd_a, algebra, p).unwrap()));
        r.record("grad N", rel_vec(&grad_n(algebra, metric, p).unwrap(), &horizontal_gradient(&fd_n, algebra, p).unwrap()));
        r.record("|grad N|^2", rel(norm_sq_grad_n(algebra, metric, p).unwrap(), norm_sq_horizontal_gradient(&fd_n, algebra, p).unwrap()));
    }
    r
}

/// `max |𝓛b − 2m|` through exact jets.
pub fn sub_laplacian_b_exact(algebra: &StepTwoAlgebra, points: &[GroupPoint]) -> f64 {
    let target = 2.0 * algebra.m() as f64;
    points.iter().map(|p| (sub_laplacian(&HorizontalNormSq, algebra, p).unwrap() - target).abs()).fold(0.0, f64::max)
}

/// `max N^Q |𝓛(N^{2−Q})|` through exact jets.
pub fn kaplan_harmonicity(algebra: &StepTwoAlgebra, metric: &VerticalMetric, points: &[GroupPoint]) -> f64 {
    let q = algebra.homogeneous_dimension() as f64;
    let u = Kaplan::new(metric.clone(), 2.0 - q);
    let n = Kaplan::new(metric.clone(), 1.0);
    points
        .iter()
        .map(|p| n.value(p).unwrap().powf(q) * sub_laplacian(&u, algebra, p).unwrap().abs())
        .fold(0.0, f64::max)
}
