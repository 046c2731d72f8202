//! Vertical metrics, the J operator and the pointwise H-type defect.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebra::StepTwoAlgebra;
use crate::error::{check_dim, Error, Result};
use crate::ser;

/// Sign in `J_t = J_SIGN * sum_q (G t)_q B^q`, fixed by `<J_t u, v> = [u, v]ᵀ G t`.
pub const J_SIGN: f64 = -1.0;

/// Gram matrix `G` of the standard vertical basis, `‖t‖_v² = tᵀ G t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MetricSpec", into = "MetricSpec")]
pub struct VerticalMetric {
    g: DMatrix<f64>,
    l: DMatrix<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSpec {
    #[serde(rename = "G", with = "ser::matrix")]
    pub g: DMatrix<f64>,
}

impl TryFrom<MetricSpec> for VerticalMetric {
    type Error = Error;

    fn try_from(spec: MetricSpec) -> Result<Self> {
        VerticalMetric::new(spec.g)
    }
}

impl From<VerticalMetric> for MetricSpec {
    fn from(m: VerticalMetric) -> Self {
        MetricSpec { g: m.g }
    }
}

/// Lower-triangular factor with pivot threshold `1e-12 trace(G) / m2`.
fn cholesky(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    let threshold = 1e-12 * g.trace() / n as f64;
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = g[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > threshold) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = g[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

impl VerticalMetric {
    pub fn new(g: DMatrix<f64>) -> Result<Self> {
        check_dim(g.nrows(), g.ncols())?;
        if g.nrows() == 0 {
            return Err(Error::InvalidParameter("empty metric".into()));
        }
        let scale = g.abs().max().max(1.0);
        for i in 0..g.nrows() {
            for j in 0..i {
                if (g[(i, j)] - g[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::NotSymmetric(i, j));
                }
            }
        }
        let g = (&g + g.transpose()) * 0.5;
        let l = cholesky(&g)?;
        Ok(VerticalMetric { g, l })
    }

    pub fn identity(m2: usize) -> Self {
        VerticalMetric { g: DMatrix::identity(m2, m2), l: DMatrix::identity(m2, m2) }
    }

    /// `G = L Lᵀ` where `L` is lower triangular with diagonal `exp(p_kk)`;
    /// `p` lists the lower triangle row by row.
    pub fn from_log_cholesky(p: &[f64], m2: usize) -> Result<Self> {
        check_dim(m2 * (m2 + 1) / 2, p.len())?;
        let mut l = DMatrix::zeros(m2, m2);
        let mut k = 0;
        for i in 0..m2 {
            for j in 0..=i {
                l[(i, j)] = if i == j { p[k].exp() } else { p[k] };
                k += 1;
            }
        }
        if l.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("log-Cholesky parameters"));
        }
        VerticalMetric::new(&l * l.transpose())
    }

    pub fn to_log_cholesky(&self) -> Vec<f64> {
        let n = self.dim();
        let mut p = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                p.push(if i == j { self.l[(i, j)].ln() } else { self.l[(i, j)] });
            }
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// Lower-triangular `L` with `G = L Lᵀ`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn norm_sq(&self, t: &DVector<f64>) -> f64 {
        t.dot(&(&self.g * t))
    }

    pub fn norm(&self, t: &DVector<f64>) -> f64 {
        self.norm_sq(t).max(0.0).sqrt()
    }

    /// Maps a Euclidean vector `s` to `t = L^{-T} s`, so `‖t‖_v = |s|`.
    pub fn from_euclidean(&self, s: &DVector<f64>) -> DVector<f64> {
        self.l
            .transpose()
            .solve_upper_triangular(s)
            .expect("factor has a positive diagonal")
    }

    /// Inverse of [`from_euclidean`]: `s = Lᵀ t`.
    pub fn to_euclidean(&self, t: &DVector<f64>) -> DVector<f64> {
        self.l.transpose() * t
    }

    /// Columns form a g_v-orthonormal basis of the vertical layer.
    pub fn orthonormal_basis(&self) -> DMatrix<f64> {
        let n = self.dim();
        self.l
            .transpose()
            .solve_upper_triangular(&DMatrix::identity(n, n))
            .expect("factor has a positive diagonal")
    }
}

/// Matrix of `J_t` in the orthonormal horizontal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct JMatrix {
    pub matrix: DMatrix<f64>,
}

impl JMatrix {
    pub fn squared(&self) -> DMatrix<f64> {
        &self.matrix * &self.matrix
    }

    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.matrix * u
    }
}

/// `J_SIGN * sum_q c_q B^q` for a covector `c = G t`.
pub fn j_from_covector(algebra: &StepTwoAlgebra, c: &DVector<f64>) -> DMatrix<f64> {
    let m = algebra.m();
    let mut j = DMatrix::zeros(m, m);
    for (bq, &cq) in algebra.b().iter().zip(c.iter()) {
        j += bq * (J_SIGN * cq);
    }
    j
}

pub fn j_matrix(algebra: &StepTwoAlgebra, metric: &VerticalMetric, t: &DVector<f64>) -> Result<JMatrix> {
    check_dim(algebra.m2(), metric.dim())?;
    check_dim(algebra.m2(), t.len())?;
    Ok(JMatrix { matrix: j_from_covector(algebra, &(metric.g() * t)) })
}

pub fn hs_norm(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Largest singular value.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// `‖J_t² + ‖t‖_v² Id‖_HS`.
pub fn h_type_defect(algebra: &StepTwoAlgebra, metric: &VerticalMetric, t: &DVector<f64>) -> Result<f64> {
    let j = j_matrix(algebra, metric, t)?;
    let mut s = j.squared();
    let c = metric.norm_sq(t);
    for i in 0..algebra.m() {
        s[(i, i)] += c;
    }
    Ok(hs_norm(&s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{make_free_step_two, make_g_eps, make_heisenberg, make_heisenberg_aniso, pair_index};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0))
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> VerticalMetric {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        VerticalMetric::new(&a * a.transpose() + DMatrix::identity(n, n) * 0.3).unwrap()
    }

    #[test]
    fn heis1_j_is_rotation() {
        let a = make_heisenberg(1).unwrap();
        let j = j_matrix(&a, &VerticalMetric::identity(1), &DVector::from_vec(vec![1.0])).unwrap();
        assert_eq!(j.matrix, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        assert_eq!(j.squared(), -DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn zero_t_gives_zero() {
        let a = make_free_step_two(4).unwrap();
        let j = j_matrix(&a, &VerticalMetric::identity(6), &DVector::zeros(6)).unwrap();
        assert_eq!(j.matrix, DMatrix::zeros(4, 4));
    }

    #[test]
    fn free_group_single_block() {
        for m in 3..6 {
            let a = make_free_step_two(m).unwrap();
            let m2 = a.m2();
            let mut t = DVector::zeros(m2);
            t[pair_index(m, 0, 1)] = 1.0;
            let j = j_matrix(&a, &VerticalMetric::identity(m2), &t).unwrap();
            let nonzero: Vec<_> = j.matrix.iter().filter(|v| **v != 0.0).collect();
            assert_eq!(nonzero.len(), 2);
            assert_eq!(j.matrix[(1, 0)], 1.0);
            let d = h_type_defect(&a, &VerticalMetric::identity(m2), &t).unwrap();
            assert_relative_eq!(d, ((m - 2) as f64).sqrt(), epsilon = 1e-14);
        }
    }

    #[test]
    fn norms() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_relative_eq!(hs_norm(&id), 3f64.sqrt());
        assert_relative_eq!(op_norm(&id), 1.0, epsilon = 1e-14);
        let r = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert_relative_eq!(hs_norm(&r), 2f64.sqrt());
        assert_relative_eq!(op_norm(&r), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn defect_examples() {
        let one = DVector::from_vec(vec![1.0]);
        let g = VerticalMetric::identity(1);
        assert_eq!(h_type_defect(&make_heisenberg(3).unwrap(), &g, &one).unwrap(), 0.0);
        let a = make_heisenberg_aniso(&[1.0, 2.0]).unwrap();
        let j2 = j_matrix(&a, &g, &one).unwrap().squared();
        assert_eq!(j2, DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -1.0, -4.0, -4.0])));
        assert_relative_eq!(h_type_defect(&a, &g, &one).unwrap(), 18f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn defining_identity_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let algebras = [
            make_free_step_two(4).unwrap(),
            make_g_eps(3, 0.7).unwrap(),
            make_heisenberg_aniso(&[0.5, 1.0, 2.0]).unwrap(),
        ];
        for a in &algebras {
            let g = random_spd(&mut rng, a.m2());
            for _ in 0..200 {
                let (u, v, t) = (random_vec(&mut rng, a.m()), random_vec(&mut rng, a.m()), random_vec(&mut rng, a.m2()));
                let j = j_matrix(a, &g, &t).unwrap();
                let lhs = j.apply(&u).dot(&v);
                let rhs = a.bracket(&u, &v).unwrap().dot(&(g.g() * &t));
                assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + u.norm() * v.norm() * t.norm()));
                assert!(j.apply(&u).dot(&u).abs() <= 1e-10);
                assert!((&j.matrix + j.matrix.transpose()).norm() <= 1e-12 * (1.0 + j.matrix.norm()));
            }
        }
    }

    #[test]
    fn metric_validation() {
        assert!(VerticalMetric::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(VerticalMetric::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).is_err());
        assert!(VerticalMetric::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).is_err());
        let g: VerticalMetric = serde_json::from_str("{\"G\": [[2.0, 0.5], [0.5, 1.0]]}").unwrap();
        assert_eq!(serde_json::to_string(&g).unwrap(), "{\"G\":[[2.0,0.5],[0.5,1.0]]}");
    }

    #[test]
    fn euclidean_maps_and_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..5 {
            let g = random_spd(&mut rng, n);
            let s = random_vec(&mut rng, n);
            let t = g.from_euclidean(&s);
            assert_relative_eq!(g.norm_sq(&t), s.norm_squared(), epsilon = 1e-10, max_relative = 1e-10);
            assert_relative_eq!(g.to_euclidean(&t), s, epsilon = 1e-10);
            let e = g.orthonormal_basis();
            assert_relative_eq!(e.transpose() * g.g() * &e, DMatrix::identity(n, n), epsilon = 1e-10);
            let back = VerticalMetric::from_log_cholesky(&g.to_log_cholesky(), n).unwrap();
            assert_relative_eq!(back.g(), g.g(), epsilon = 1e-12);
        }
    }

    fn skew_strategy(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-2.0f64..2.0, n * n).prop_map(move |v| {
            let a = DMatrix::from_vec(n, n, v);
            &a - a.transpose()
        })
    }

    proptest! {
        #[test]
        fn hs_square_bounds_for_skew(a in skew_strategy(4)) {
            let hs2 = hs_norm(&a).powi(2);
            let sq = hs_norm(&(&a * &a));
            prop_assert!(hs2 / 2.0 <= sq * (1.0 + 1e-12) + 1e-12);
            prop_assert!(sq <= hs2 / 2f64.sqrt() * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn op_hs_sandwich(v in proptest::collection::vec(-3.0f64..3.0, 25)) {
            let a = DMatrix::from_vec(5, 5, v);
            let (op, hs) = (op_norm(&a), hs_norm(&a));
            prop_assert!(op <= hs * (1.0 + 1e-12));
            prop_assert!(hs <= 5f64.sqrt() * op * (1.0 + 1e-12));
        }

        #[test]
        fn defect_two_homogeneous(t in proptest::collection::vec(-2.0f64..2.0, 3), lam in 0.1f64..4.0) {
            let a = make_free_step_two(3).unwrap();
            let g = VerticalMetric::new(DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5])).unwrap();
            let t = DVector::from_vec(t);
            let d1 = h_type_defect(&a, &g, &(&t * lam)).unwrap();
            let d0 = h_type_defect(&a, &g, &t).unwrap();
            prop_assert!((d1 - lam * lam * d0).abs() <= 1e-10 * (1.0 + d1));
        }

        #[test]
        fn j_is_linear_in_t(t1 in proptest::collection::vec(-2.0f64..2.0, 2), t2 in proptest::collection::vec(-2.0f64..2.0, 2), c in -3.0f64..3.0) {
            let a = make_g_eps(2, 1.0).unwrap();
            let g = VerticalMetric::new(DMatrix::from_row_slice(2, 2, &[1.5, -0.2, -0.2, 0.7])).unwrap();
            let (t1, t2) = (DVector::from_vec(t1), DVector::from_vec(t2));
            let lhs = j_matrix(&a, &g, &(&t1 * c + &t2)).unwrap().matrix;
            let rhs = j_matrix(&a, &g, &t1).unwrap().matrix * c + j_matrix(&a, &g, &t2).unwrap().matrix;
            prop_assert!((lhs - &rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
        }
    }
}
