//! Step-two stratified Lie algebras given by structure constants.
//!
//! The horizontal basis `X_1..X_m` is orthonormal and the vertical basis is
//! `T_1..T_m2`, with `[X_i, X_j] = sum_q b_ij^q T_q` and `B^q = (b_ij^q)`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::ser;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GroupSpec", into = "GroupSpec")]
pub struct StepTwoAlgebra {
    m: usize,
    m2: usize,
    b: Vec<DMatrix<f64>>,
}

/// Wire format: `{"m": .., "m2": .., "B": [m2 x (m x m)]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSpec {
    pub m: usize,
    pub m2: usize,
    #[serde(rename = "B")]
    pub b: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<GroupSpec> for StepTwoAlgebra {
    type Error = Error;

    fn try_from(spec: GroupSpec) -> Result<Self> {
        let b = spec
            .b
            .iter()
            .map(|rows| ser::matrix_from_rows(rows).map_err(Error::InvalidParameter))
            .collect::<Result<Vec<_>>>()?;
        StepTwoAlgebra::new(spec.m, spec.m2, b)
    }
}

impl From<StepTwoAlgebra> for GroupSpec {
    fn from(a: StepTwoAlgebra) -> Self {
        GroupSpec {
            m: a.m,
            m2: a.m2,
            b: a.b.iter().map(ser::matrix_rows).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPoint {
    #[serde(with = "ser::vector")]
    pub x: DVector<f64>,
    #[serde(with = "ser::vector")]
    pub t: DVector<f64>,
}

impl GroupPoint {
    pub fn new(x: DVector<f64>, t: DVector<f64>) -> Self {
        GroupPoint { x, t }
    }

    pub fn from_slices(x: &[f64], t: &[f64]) -> Self {
        GroupPoint::new(DVector::from_column_slice(x), DVector::from_column_slice(t))
    }

    pub fn origin(m: usize, m2: usize) -> Self {
        GroupPoint::new(DVector::zeros(m), DVector::zeros(m2))
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.t.iter()).all(|v| v.is_finite())
    }

    /// Coordinates stacked as `(x, t)`.
    pub fn coords(&self) -> DVector<f64> {
        let m = self.x.len();
        DVector::from_fn(m + self.t.len(), |k, _| if k < m { self.x[k] } else { self.t[k - m] })
    }

    pub fn from_coords(c: &DVector<f64>, m: usize) -> Self {
        GroupPoint::new(c.rows(0, m).into_owned(), c.rows(m, c.len() - m).into_owned())
    }
}

/// Dilation `(x, t) -> (λx, λ²t)`.
pub fn dilate(p: &GroupPoint, lambda: f64) -> Result<GroupPoint> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("dilation factor must be positive, got {lambda}")));
    }
    Ok(GroupPoint::new(&p.x * lambda, &p.t * (lambda * lambda)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    HorizontalTooSmall { m: usize },
    NoVerticalLayer,
    VerticalTooLarge { m2: usize, max: usize },
    Shape { q: usize, rows: usize, cols: usize },
    NonFinite { q: usize, i: usize, j: usize },
    NotSkew { q: usize, i: usize, j: usize },
    RankDeficient { rank: usize, m2: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::HorizontalTooSmall { m } => write!(f, "m={m} < 2"),
            Violation::NoVerticalLayer => write!(f, "m2=0"),
            Violation::VerticalTooLarge { m2, max } => write!(f, "m2={m2} > m(m-1)/2={max}"),
            Violation::Shape { q, rows, cols } => write!(f, "B^{q} has shape {rows}x{cols}"),
            Violation::NonFinite { q, i, j } => write!(f, "non-finite entry at (q={q},i={i},j={j})"),
            Violation::NotSkew { q, i, j } => write!(f, "not skew-symmetric at (q={q},i={i},j={j})"),
            Violation::RankDeficient { rank, m2 } => write!(f, "rank {rank} < m2={m2}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }
}

impl StepTwoAlgebra {
    /// Builds an algebra after checking only the container shape.
    /// Use [`validate`] for the Lie-algebra invariants.
    pub fn new(m: usize, m2: usize, b: Vec<DMatrix<f64>>) -> Result<Self> {
        check_dim(m2, b.len())?;
        for bq in &b {
            check_dim(m, bq.nrows())?;
            check_dim(m, bq.ncols())?;
        }
        Ok(StepTwoAlgebra { m, m2, b })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn m2(&self) -> usize {
        self.m2
    }

    pub fn b(&self) -> &[DMatrix<f64>] {
        &self.b
    }

    /// Homogeneous dimension `Q = m + 2 m2`.
    pub fn homogeneous_dimension(&self) -> usize {
        self.m + 2 * self.m2
    }

    /// Rows are `(b_ij^q)_{i<j}` for each q.
    pub fn constant_matrix(&self) -> DMatrix<f64> {
        let pairs = self.m * (self.m.saturating_sub(1)) / 2;
        let mut out = DMatrix::zeros(self.m2, pairs);
        for (q, bq) in self.b.iter().enumerate() {
            let mut k = 0;
            for i in 0..self.m {
                for j in i + 1..self.m {
                    out[(q, k)] = bq[(i, j)];
                    k += 1;
                }
            }
        }
        out
    }

    pub fn bracket(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.m, u.len())?;
        check_dim(self.m, v.len())?;
        Ok(DVector::from_iterator(self.m2, self.b.iter().map(|bq| u.dot(&(bq * v)))))
    }

    /// `β_i^q(x) = -sum_j b_ij^q x_j`, returned as an `m x m2` matrix.
    pub fn beta(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.m, self.m2);
        for (q, bq) in self.b.iter().enumerate() {
            out.set_column(q, &(-(bq * x)));
        }
        out
    }

    pub fn check_point(&self, p: &GroupPoint) -> Result<()> {
        check_dim(self.m, p.x.len())?;
        check_dim(self.m2, p.t.len())
    }
}

pub fn validate(algebra: &StepTwoAlgebra) -> ValidationReport {
    let (m, m2) = (algebra.m, algebra.m2);
    let mut violations = Vec::new();
    if m < 2 {
        violations.push(Violation::HorizontalTooSmall { m });
    }
    if m2 == 0 {
        violations.push(Violation::NoVerticalLayer);
    }
    let max = m * m.saturating_sub(1) / 2;
    if m2 > max {
        violations.push(Violation::VerticalTooLarge { m2, max });
    }
    let mut entries_ok = true;
    for (q, bq) in algebra.b.iter().enumerate() {
        if bq.nrows() != m || bq.ncols() != m {
            violations.push(Violation::Shape { q: q + 1, rows: bq.nrows(), cols: bq.ncols() });
            entries_ok = false;
            continue;
        }
        for i in 0..m {
            for j in 0..m {
                if !bq[(i, j)].is_finite() {
                    violations.push(Violation::NonFinite { q: q + 1, i: i + 1, j: j + 1 });
                    entries_ok = false;
                } else if j >= i && bq[(i, j)] != -bq[(j, i)] {
                    violations.push(Violation::NotSkew { q: q + 1, i: i + 1, j: j + 1 });
                }
            }
        }
    }
    if entries_ok && m2 > 0 && max > 0 {
        let c = algebra.constant_matrix();
        let svd = c.svd(false, false);
        let smax = svd.singular_values.max();
        let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax && s > 0.0).count();
        if rank < m2 {
            violations.push(Violation::RankDeficient { rank, m2 });
        }
    } else if m2 > 0 && max == 0 {
        violations.push(Violation::RankDeficient { rank: 0, m2 });
    }
    ValidationReport { violations }
}

fn skew_pair(m: usize, i: usize, j: usize, value: f64) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(m, m);
    b[(i, j)] = value;
    b[(j, i)] = -value;
    b
}

/// `ℍⁿ(b)`: `[X_j, Y_j] = b_j T` in the basis `X_1, Y_1, ..., X_n, Y_n`.
pub fn make_heisenberg_aniso(b: &[f64]) -> Result<StepTwoAlgebra> {
    if b.is_empty() {
        return Err(Error::InvalidParameter("empty anisotropy vector".into()));
    }
    if let Some(bad) = b.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(format!("anisotropy entries must be positive, got {bad}")));
    }
    let m = 2 * b.len();
    let mut b1 = DMatrix::zeros(m, m);
    for (j, &bj) in b.iter().enumerate() {
        b1[(2 * j, 2 * j + 1)] = bj;
        b1[(2 * j + 1, 2 * j)] = -bj;
    }
    StepTwoAlgebra::new(m, 1, vec![b1])
}

pub fn make_heisenberg(n: usize) -> Result<StepTwoAlgebra> {
    make_heisenberg_aniso(&vec![1.0; n])
}

/// Index of the pair `(i, j)`, `i < j`, in lexicographic order.
pub fn pair_index(m: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < m);
    i * m - i * (i + 1) / 2 + (j - i - 1)
}

/// Free step-two algebra of rank m, with `[X_i, X_j] = T_ij` for `i < j`.
pub fn make_free_step_two(m: usize) -> Result<StepTwoAlgebra> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("free group rank must be >= 2, got {m}")));
    }
    let mut b = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            b.push(skew_pair(m, i, j, 1.0));
        }
    }
    StepTwoAlgebra::new(m, b.len(), b)
}

fn check_n_eps(n: usize, eps: f64, strict: bool) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n must be >= 2, got {n}")));
    }
    let ok = if strict { eps > 0.0 } else { eps >= 0.0 };
    if !ok || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!("invalid epsilon {eps}")));
    }
    Ok(())
}

/// `Gⁿ_ε`: `[X_j, Y_j] = T` and `[X_1, X_2] = ε U`; collapses to `Heisⁿ` at ε = 0.
pub fn make_g_eps(n: usize, eps: f64) -> Result<StepTwoAlgebra> {
    check_n_eps(n, eps, false)?;
    let heis = make_heisenberg(n)?;
    if eps == 0.0 {
        return Ok(heis);
    }
    let m = 2 * n;
    let b1 = heis.b[0].clone();
    StepTwoAlgebra::new(m, 2, vec![b1, skew_pair(m, 0, 2, eps)])
}

/// `Ḡⁿ_ε`: `[X_j, Y_j] = T` and `[X_1, X_2] = ε T` in an orthonormal frame.
pub fn make_g_bar_eps(n: usize, eps: f64) -> Result<StepTwoAlgebra> {
    check_n_eps(n, eps, true)?;
    let mut b1 = make_heisenberg(n)?.b[0].clone();
    b1[(0, 2)] = eps;
    b1[(2, 0)] = -eps;
    StepTwoAlgebra::new(2 * n, 1, vec![b1])
}

fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::InvalidParameter(format!("cannot parse number '{s}'"));
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            a / b
        }
        None => s.parse().map_err(|_| bad())?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

fn parse_count(s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("cannot parse integer '{}'", s.trim())))
}

/// Resolves `heis(b1,...,bn)`, `free(m)`, `geps(n,eps)` or `gbar(n,eps)`.
/// Entries may be written as fractions, e.g. `heis(1/2,1,1)`.
pub fn from_catalog_name(name: &str) -> Result<StepTwoAlgebra> {
    let unknown = || Error::InvalidParameter(format!("unknown group '{name}'"));
    let name = name.trim();
    let open = name.find('(').ok_or_else(unknown)?;
    let inner = name[open + 1..].strip_suffix(')').ok_or_else(unknown)?;
    let args: Vec<&str> = inner.split(',').collect();
    let two = || -> Result<(usize, f64)> {
        match args.as_slice() {
            [n, e] => Ok((parse_count(n)?, parse_number(e)?)),
            _ => Err(Error::InvalidParameter(format!("'{name}' expects two arguments"))),
        }
    };
    match name[..open].trim() {
        "heis" => {
            let b = args.iter().map(|a| parse_number(a)).collect::<Result<Vec<_>>>()?;
            make_heisenberg_aniso(&b)
        }
        "free" => match args.as_slice() {
            [m] => make_free_step_two(parse_count(m)?),
            _ => Err(Error::InvalidParameter(format!("'{name}' expects one argument"))),
        },
        "geps" => two().and_then(|(n, e)| make_g_eps(n, e)),
        "gbar" => two().and_then(|(n, e)| make_g_bar_eps(n, e)),
        _ => Err(unknown()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn heis1() -> StepTwoAlgebra {
        StepTwoAlgebra::new(2, 1, vec![DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])]).unwrap()
    }

    #[test]
    fn heis1_is_valid() {
        assert!(validate(&heis1()).is_valid());
        assert_eq!(make_heisenberg_aniso(&[1.0]).unwrap(), heis1());
    }

    #[test]
    fn non_skew_reported_with_indices() {
        let mut b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        b[(0, 0)] = 1.0;
        let a = StepTwoAlgebra::new(2, 1, vec![b]).unwrap();
        let r = validate(&a);
        assert_eq!(r.messages(), vec!["not skew-symmetric at (q=1,i=1,j=1)".to_string()]);
    }

    #[test]
    fn zero_matrix_is_rank_deficient() {
        let b1 = skew_pair(4, 0, 1, 1.0);
        let a = StepTwoAlgebra::new(4, 2, vec![b1, DMatrix::zeros(4, 4)]).unwrap();
        assert_eq!(validate(&a).messages(), vec!["rank 1 < m2=2".to_string()]);
    }

    #[test]
    fn dimension_bounds_reported() {
        let a = StepTwoAlgebra::new(2, 2, vec![skew_pair(2, 0, 1, 1.0); 2]).unwrap();
        let r = validate(&a);
        assert!(r.violations.contains(&Violation::VerticalTooLarge { m2: 2, max: 1 }));
    }

    #[test]
    fn bracket_examples() {
        let e = |m: usize, i: usize| DVector::from_fn(m, |k, _| if k == i { 1.0 } else { 0.0 });
        assert_eq!(heis1().bracket(&e(2, 0), &e(2, 1)).unwrap(), DVector::from_vec(vec![1.0]));
        let f3 = make_free_step_two(3).unwrap();
        assert_eq!(f3.bracket(&e(3, 0), &e(3, 1)).unwrap(), e(3, 0));
        assert_eq!(f3.bracket(&e(3, 1), &e(3, 2)).unwrap(), e(3, 2));
        assert!(heis1().bracket(&e(3, 0), &e(2, 0)).is_err());
    }

    #[test]
    fn dilate_examples() {
        let p = GroupPoint::from_slices(&[1.0, 0.0], &[2.0]);
        assert_eq!(dilate(&p, 2.0).unwrap(), GroupPoint::from_slices(&[2.0, 0.0], &[8.0]));
        assert_eq!(dilate(&p, 1.0).unwrap(), p);
        let p = GroupPoint::from_slices(&[3.0, 4.0], &[5.0]);
        assert_eq!(dilate(&p, 0.5).unwrap(), GroupPoint::from_slices(&[1.5, 2.0], &[1.25]));
        assert!(dilate(&p, 0.0).is_err());
        assert!(dilate(&p, -1.0).is_err());
    }

    #[test]
    fn catalog_shapes() {
        let f2 = make_free_step_two(2).unwrap();
        assert_eq!(f2, heis1());
        let f3 = make_free_step_two(3).unwrap();
        assert_eq!((f3.m(), f3.m2()), (3, 3));
        let f5 = make_free_step_two(5).unwrap();
        assert_eq!(f5.m2(), 10);
        assert!(validate(&f5).is_valid());
        assert_eq!(make_g_eps(2, 0.0).unwrap(), make_heisenberg(2).unwrap());
        let g = make_g_eps(2, 1.0).unwrap();
        assert_eq!(g.m2(), 2);
        assert!(validate(&g).is_valid());
        assert!(validate(&make_g_eps(3, 0.5).unwrap()).is_valid());
        assert!(validate(&make_g_bar_eps(3, 0.25).unwrap()).is_valid());
        assert!(make_free_step_two(1).is_err());
        assert!(make_g_eps(1, 1.0).is_err());
        assert!(make_g_eps(2, -1.0).is_err());
        assert!(make_g_bar_eps(2, 0.0).is_err());
        assert!(make_heisenberg_aniso(&[]).is_err());
        assert!(make_heisenberg_aniso(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn g_bar_tends_to_heisenberg() {
        let h = make_heisenberg(2).unwrap();
        let g = make_g_bar_eps(2, 1e-12).unwrap();
        assert!((&g.b()[0] - &h.b()[0]).abs().max() <= 1e-12);
    }

    #[test]
    fn pair_index_is_lexicographic() {
        let mut k = 0;
        for i in 0..6 {
            for j in i + 1..6 {
                assert_eq!(pair_index(6, i, j), k);
                k += 1;
            }
        }
    }

    #[test]
    fn catalog_names_resolve() {
        assert_eq!(from_catalog_name("heis(1/2,1)").unwrap(), make_heisenberg_aniso(&[0.5, 1.0]).unwrap());
        assert_eq!(from_catalog_name("free(4)").unwrap(), make_free_step_two(4).unwrap());
        assert_eq!(from_catalog_name(" geps(3, 0.5) ").unwrap(), make_g_eps(3, 0.5).unwrap());
        assert_eq!(from_catalog_name("gbar(2,1)").unwrap(), make_g_bar_eps(2, 1.0).unwrap());
        assert!(from_catalog_name("nope(2)").is_err());
        assert!(from_catalog_name("free(x)").is_err());
        assert!(from_catalog_name("geps(2)").is_err());
    }

    #[test]
    fn json_round_trip() {
        let a = make_g_eps(2, 1.0).unwrap();
        let s = serde_json::to_string(&a).unwrap();
        assert!(s.starts_with("{\"m\":4,\"m2\":2,\"B\":[[[0.0,1.0"));
        let back: StepTwoAlgebra = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<StepTwoAlgebra>("{\"m\":2,\"m2\":2,\"B\":[[[0,1],[-1,0]]]}").is_err());
    }

    fn vec_strategy(n: usize) -> impl Strategy<Value = DVector<f64>> {
        proptest::collection::vec(-3.0f64..3.0, n).prop_map(DVector::from_vec)
    }

    proptest! {
        #[test]
        fn bracket_antisymmetric_and_bilinear(
            u in vec_strategy(4), v in vec_strategy(4), w in vec_strategy(4),
            a in -2.0f64..2.0, c in -2.0f64..2.0,
        ) {
            let alg = make_free_step_two(4).unwrap();
            let uv = alg.bracket(&u, &v).unwrap();
            let vu = alg.bracket(&v, &u).unwrap();
            prop_assert!((&uv + &vu).abs().max() <= 1e-12 * (1.0 + uv.abs().max()));
            prop_assert!(alg.bracket(&u, &u).unwrap().abs().max() <= 1e-12 * (1.0 + u.norm_squared()));
            let lhs = alg.bracket(&(&u * a + &w * c), &v).unwrap();
            let rhs = uv * a + alg.bracket(&w, &v).unwrap() * c;
            prop_assert!((&lhs - &rhs).norm() <= 1e-12 * (1.0 + rhs.norm()) * 10.0);
        }

        #[test]
        fn dilation_composes(x in vec_strategy(3), t in vec_strategy(2), l in 0.1f64..5.0, mu in 0.1f64..5.0) {
            let p = GroupPoint::new(x, t);
            let a = dilate(&dilate(&p, l).unwrap(), mu).unwrap();
            let b = dilate(&p, l * mu).unwrap();
            let scale = 1.0 + b.coords().norm();
            prop_assert!((a.coords() - b.coords()).norm() <= 1e-12 * scale);
        }

        #[test]
        fn catalog_outputs_validate(n in 2usize..5, eps in 0.0f64..2.0, m in 2usize..7) {
            prop_assert!(validate(&make_g_eps(n, eps).unwrap()).is_valid());
            prop_assert!(validate(&make_g_bar_eps(n, eps + 1e-3).unwrap()).is_valid());
            prop_assert!(validate(&make_free_step_two(m).unwrap()).is_valid());
            let b: Vec<f64> = (0..n).map(|k| 0.5 + k as f64 * eps).collect();
            prop_assert!(validate(&make_heisenberg_aniso(&b).unwrap()).is_valid());
        }
    }
}
