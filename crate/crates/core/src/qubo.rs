//! QUBO problems, soft-constraint folding and the robust max-coverage QUBO.
//!
//! A problem is `E(w) = wᵀ Q w + sᵀ w + offset` over binary `w`. Diagonal
//! entries of `Q` are kept apart from `s` even though `w_i² = w_i`, so a
//! built problem keeps the block layout it was constructed with.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preference::PreferenceMatrix;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarSplit {
    pub n_points: usize,
    pub n_models: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuboParams {
    /// Cost per selected model.
    pub lambda1: f64,
    /// Weight of the exact-coverage penalty.
    pub lambda2: f64,
}

impl Default for QuboParams {
    fn default() -> Self {
        Self {
            lambda1: 1.7,
            lambda2: 0.1,
        }
    }
}

impl QuboParams {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        let p = Self { lambda1, lambda2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(Error::InvalidConfig("lambda1 must be >= 0".into()));
        }
        if !(self.lambda2 > 0.0 && self.lambda2.is_finite()) {
            return Err(Error::InvalidConfig("lambda2 must be > 0".into()));
        }
        Ok(())
    }
}

/// Soft constraint `weight · ‖A w − b‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub weight: f64,
}

/// Column-compressed copy of one soft constraint.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SparseConstraint {
    pub weight: f64,
    pub b: Vec<f64>,
    /// Nonzero `(row, value)` pairs of each column of `A`.
    pub columns: Vec<Vec<(usize, f64)>>,
}

impl SparseConstraint {
    fn from_dense(c: &LinearConstraint) -> Self {
        let columns = (0..c.a.ncols())
            .map(|j| {
                (0..c.a.nrows())
                    .filter_map(|i| {
                        let v = c.a[(i, j)];
                        (v != 0.0).then_some((i, v))
                    })
                    .collect()
            })
            .collect();
        Self {
            weight: c.weight,
            b: c.b.iter().copied().collect(),
            columns,
        }
    }

    /// `‖A w − b‖²`.
    pub fn residual_norm2(&self, w: &[u8]) -> f64 {
        let mut r: Vec<f64> = self.b.iter().map(|v| -v).collect();
        for (j, col) in self.columns.iter().enumerate() {
            if w[j] == 1 {
                for &(i, v) in col {
                    r[i] += v;
                }
            }
        }
        r.iter().map(|v| v * v).sum()
    }
}

/// The unfolded form `wᵀ Q0 w + s0ᵀ w + Σ weight ‖A w − b‖²` a problem was
/// built from. Lets the annealer evaluate flips in O(column nnz).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PenaltyForm {
    /// `s0 + diag(Q0)`.
    pub linear: Vec<f64>,
    /// Off-diagonal entries of `Q0` per row, `(col, q0[row, col])`.
    pub coupling: Vec<Vec<(usize, f64)>>,
    pub terms: Vec<SparseConstraint>,
}

impl PenaltyForm {
    pub fn has_coupling(&self) -> bool {
        self.coupling.iter().any(|r| !r.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuboProblem {
    q: DMatrix<f64>,
    s: DVector<f64>,
    offset: f64,
    var_split: Option<VarSplit>,
    penalty: Option<PenaltyForm>,
}

impl QuboProblem {
    pub fn new(q: DMatrix<f64>, s: DVector<f64>, offset: f64) -> Result<Self> {
        let d = s.len();
        if q.nrows() != d || q.ncols() != d {
            return Err(Error::ShapeMismatch(format!(
                "Q is {}x{}, s has {d} entries",
                q.nrows(),
                q.ncols()
            )));
        }
        if q.iter().chain(s.iter()).any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err(Error::InvalidConfig("non-finite coefficient".into()));
        }
        check_symmetric(&q)?;
        Ok(Self {
            q,
            s,
            offset,
            var_split: None,
            penalty: None,
        })
    }

    pub fn with_var_split(mut self, split: VarSplit) -> Result<Self> {
        if split.n_points + split.n_models != self.d() {
            return Err(Error::ShapeMismatch(format!(
                "split {}+{} does not match {} variables",
                split.n_points,
                split.n_models,
                self.d()
            )));
        }
        self.var_split = Some(split);
        Ok(self)
    }

    pub fn d(&self) -> usize {
        self.s.len()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn s(&self) -> &DVector<f64> {
        &self.s
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn var_split(&self) -> Option<VarSplit> {
        self.var_split
    }

    pub(crate) fn penalty_form(&self) -> Option<&PenaltyForm> {
        self.penalty.as_ref()
    }

    fn check_assignment(&self, w: &[u8]) -> Result<()> {
        if w.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: w.len(),
            });
        }
        if w.iter().any(|&v| v > 1) {
            return Err(Error::InvalidConfig(
                "assignment entries must be 0 or 1".into(),
            ));
        }
        Ok(())
    }

    /// `wᵀ Q w + sᵀ w + offset`; cost grows with the number of ones in `w`,
    /// not with `d²`.
    pub fn energy(&self, w: &[u8]) -> Result<f64> {
        self.check_assignment(w)?;
        Ok(self.energy_unchecked(w))
    }

    pub(crate) fn energy_unchecked(&self, w: &[u8]) -> f64 {
        let active: Vec<usize> = (0..w.len()).filter(|&i| w[i] == 1).collect();
        let mut e = self.offset;
        for &i in &active {
            e += self.s[i];
            let col = self.q.column(i);
            for &j in &active {
                e += col[j];
            }
        }
        e
    }

    /// `sᵀ w`.
    pub fn linear_energy(&self, w: &[u8]) -> Result<f64> {
        self.check_assignment(w)?;
        Ok(w.iter()
            .zip(self.s.iter())
            .map(|(&b, v)| f64::from(b) * v)
            .sum())
    }

    /// Serializable upper-triangle view.
    pub fn to_json_model(&self) -> QuboJson {
        let d = self.d();
        let mut quadratic = Vec::new();
        for i in 0..d {
            for j in i..d {
                let v = self.q[(i, j)];
                if v != 0.0 {
                    let c = if i == j { v } else { 2.0 * v };
                    quadratic.push((i, j, c));
                }
            }
        }
        QuboJson {
            d,
            var_split: self.var_split,
            offset: self.offset,
            linear: self.s.iter().copied().collect(),
            quadratic,
        }
    }

    pub fn from_json_model(m: &QuboJson) -> Result<Self> {
        if m.linear.len() != m.d {
            return Err(Error::ShapeMismatch("linear length differs from d".into()));
        }
        let mut q = DMatrix::zeros(m.d, m.d);
        for &(i, j, c) in &m.quadratic {
            if i > j || j >= m.d {
                return Err(Error::ShapeMismatch(format!(
                    "bad quadratic index ({i}, {j})"
                )));
            }
            if i == j {
                q[(i, i)] += c;
            } else {
                q[(i, j)] += c / 2.0;
                q[(j, i)] += c / 2.0;
            }
        }
        let p = Self::new(q, DVector::from_vec(m.linear.clone()), m.offset)?;
        match m.var_split {
            Some(split) => p.with_var_split(split),
            None => Ok(p),
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string(&self.to_json_model())?;
        std::fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_model(&serde_json::from_str(&s)?)
    }
}

/// Interchange form: `E(w) = Σ linear[i] w_i + Σ c w_i w_j + offset` over the
/// `(i, j, c)` triples, `i ≤ j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboJson {
    pub d: usize,
    pub var_split: Option<VarSplit>,
    pub offset: f64,
    pub linear: Vec<f64>,
    pub quadratic: Vec<(usize, usize, f64)>,
}

fn check_symmetric(q: &DMatrix<f64>) -> Result<()> {
    let d = q.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let (a, b) = (q[(i, j)], q[(j, i)]);
            if (a - b).abs() > SYMMETRY_TOL * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::InvalidConfig(format!(
                    "quadratic matrix not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Folds soft linear constraints into an unconstrained problem:
/// `Q = Q0 + Σ weight·AᵀA`, `s = s0 − 2 Σ weight·Aᵀb`, `offset = Σ weight·bᵀb`.
pub fn fold_constraints(
    q0: &DMatrix<f64>,
    s0: &DVector<f64>,
    constraints: &[LinearConstraint],
) -> Result<QuboProblem> {
    let d = s0.len();
    if q0.nrows() != d || q0.ncols() != d {
        return Err(Error::ShapeMismatch(format!(
            "Q0 is {}x{}, s0 has {d} entries",
            q0.nrows(),
            q0.ncols()
        )));
    }
    check_symmetric(q0)?;
    let mut q = q0.clone();
    let mut s = s0.clone();
    let mut offset = 0.0;
    for (k, c) in constraints.iter().enumerate() {
        if c.a.ncols() != d {
            return Err(Error::ShapeMismatch(format!(
                "constraint {k}: A has {} columns, expected {d}",
                c.a.ncols()
            )));
        }
        if c.a.nrows() != c.b.len() {
            return Err(Error::ShapeMismatch(format!(
                "constraint {k}: A has {} rows, b has {}",
                c.a.nrows(),
                c.b.len()
            )));
        }
        if !(c.weight >= 0.0 && c.weight.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "constraint {k}: negative weight"
            )));
        }
        let at = c.a.transpose();
        q += (&at * &c.a) * c.weight;
        s -= (&at * &c.b) * (2.0 * c.weight);
        offset += c.weight * c.b.dot(&c.b);
    }
    // products like AᵀA are symmetric up to rounding; make it exact
    let q = (&q + q.transpose()) * 0.5;
    let mut problem = QuboProblem::new(q, s, offset)?;
    problem.penalty = Some(PenaltyForm {
        linear: (0..d).map(|i| s0[i] + q0[(i, i)]).collect(),
        coupling: (0..d)
            .map(|i| {
                (0..d)
                    .filter(|&j| j != i && q0[(i, j)] != 0.0)
                    .map(|j| (j, q0[(i, j)]))
                    .collect()
            })
            .collect(),
        terms: constraints
            .iter()
            .map(SparseConstraint::from_dense)
            .collect(),
    });
    Ok(problem)
}

/// `[−I, P]`, the exact-coverage constraint matrix over `w = (y; z)`.
pub fn coverage_constraint_matrix(p: &PreferenceMatrix) -> DMatrix<f64> {
    let (n, m) = (p.n_points(), p.n_models());
    DMatrix::from_fn(n, n + m, |i, j| {
        if j < n {
            if i == j {
                -1.0
            } else {
                0.0
            }
        } else if p.get(i, j - n) {
            1.0
        } else {
            0.0
        }
    })
}

/// `(−1_n; λ1·1_m)`.
pub fn rqumf_linear(p: &PreferenceMatrix, params: &QuboParams) -> DVector<f64> {
    let (n, m) = (p.n_points(), p.n_models());
    DVector::from_fn(n + m, |i, _| if i < n { -1.0 } else { params.lambda1 })
}

/// Robust multi-model fitting QUBO over `w = (y; z)`:
///
/// ```text
/// Q = λ2 · [  I   −P  ]      s = ( −1_n   )
///          [ −Pᵀ  PᵀP ]          ( λ1·1_m )
/// ```
///
/// Minimizing it trades covered points against selected models while
/// penalizing `‖P z − y‖²`.
pub fn build_rqumf_qubo(p: &PreferenceMatrix, params: &QuboParams) -> Result<QuboProblem> {
    params.validate()?;
    let (n, m) = (p.n_points(), p.n_models());
    let d = n + m;
    let l2 = params.lambda2;
    let supports: Vec<Vec<usize>> = (0..m).map(|j| p.column_support(j)).collect();

    let mut q = DMatrix::zeros(d, d);
    for i in 0..n {
        q[(i, i)] = l2;
    }
    for (j, sup) in supports.iter().enumerate() {
        for &i in sup {
            q[(i, n + j)] = -l2;
            q[(n + j, i)] = -l2;
        }
    }
    let mut in_col = vec![false; n];
    for j in 0..m {
        for &i in &supports[j] {
            in_col[i] = true;
        }
        for k in j..m {
            let shared = supports[k].iter().filter(|&&i| in_col[i]).count();
            if shared > 0 {
                q[(n + j, n + k)] = l2 * shared as f64;
                q[(n + k, n + j)] = l2 * shared as f64;
            }
        }
        for &i in &supports[j] {
            in_col[i] = false;
        }
    }
    let s = rqumf_linear(p, params);

    let columns = (0..n)
        .map(|i| vec![(i, -1.0)])
        .chain(
            supports
                .iter()
                .map(|sup| sup.iter().map(|&i| (i, 1.0)).collect()),
        )
        .collect();
    let mut problem = QuboProblem::new(q, s.clone(), 0.0)?;
    problem.penalty = Some(PenaltyForm {
        linear: s.iter().copied().collect(),
        coupling: vec![Vec::new(); d],
        terms: vec![SparseConstraint {
            weight: l2,
            b: vec![0.0; n],
            columns,
        }],
    });
    problem.with_var_split(VarSplit {
        n_points: n,
        n_models: m,
    })
}

/// `‖P z − y‖²` at `w = (y; z)`.
pub fn penalty_residual(problem: &QuboProblem, w: &[u8]) -> Result<f64> {
    problem.var_split.ok_or(Error::MissingVarSplit)?;
    problem.check_assignment(w)?;
    let form = problem.penalty.as_ref().ok_or(Error::MissingVarSplit)?;
    Ok(form.terms.iter().map(|t| t.residual_norm2(w)).sum())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_assignments(d: usize) -> impl Iterator<Item = Vec<u8>> {
        (0u32..(1 << d)).map(move |mask| (0..d).map(|i| ((mask >> i) & 1) as u8).collect())
    }

    fn toy() -> QuboProblem {
        let p = PreferenceMatrix::from_rows(&[vec![1], vec![1]]).unwrap();
        build_rqumf_qubo(&p, &QuboParams::new(0.5, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn fold_without_constraints_is_identity() {
        let q0 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, -1.0]);
        let s0 = DVector::from_vec(vec![0.5, -0.5]);
        let p = fold_constraints(&q0, &s0, &[]).unwrap();
        assert_eq!(p.q(), &q0);
        assert_eq!(p.s(), &s0);
        assert_eq!(p.offset(), 0.0);
    }

    #[test]
    fn fold_single_exact_cover_row() {
        let c = LinearConstraint {
            a: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            b: DVector::from_vec(vec![1.0]),
            weight: 1.0,
        };
        let p = fold_constraints(&DMatrix::zeros(2, 2), &DVector::zeros(2), &[c]).unwrap();
        assert_eq!(p.q(), &DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert_eq!(p.s().as_slice(), &[-2.0, -2.0]);
        assert_eq!(p.offset(), 1.0);
        assert_eq!(p.energy(&[1, 0]).unwrap(), 0.0);
        assert_eq!(p.energy(&[1, 1]).unwrap(), 1.0);
        assert_eq!(p.energy(&[0, 0]).unwrap(), 1.0);
    }

    #[test]
    fn fold_rejects_bad_shapes() {
        let c = LinearConstraint {
            a: DMatrix::zeros(2, 3),
            b: DVector::zeros(1),
            weight: 1.0,
        };
        assert!(matches!(
            fold_constraints(&DMatrix::zeros(3, 3), &DVector::zeros(3), &[c]),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(fold_constraints(&DMatrix::zeros(2, 3), &DVector::zeros(3), &[]).is_err());
    }

    #[test]
    fn rqumf_toy_coefficients() {
        let p = toy();
        let expected =
            DMatrix::from_row_slice(3, 3, &[1.0, 0.0, -1.0, 0.0, 1.0, -1.0, -1.0, -1.0, 2.0]);
        assert_eq!(p.q(), &expected);
        assert_eq!(p.s().as_slice(), &[-1.0, -1.0, 0.5]);
        assert_eq!(p.offset(), 0.0);
        assert_eq!(
            p.var_split(),
            Some(VarSplit {
                n_points: 2,
                n_models: 1
            })
        );
    }

    #[test]
    fn rqumf_zero_preference() {
        let p = PreferenceMatrix::zeros(3, 2).unwrap();
        let q = build_rqumf_qubo(&p, &QuboParams::new(1.0, 2.5).unwrap()).unwrap();
        let mut expected = DMatrix::zeros(5, 5);
        for i in 0..3 {
            expected[(i, i)] = 2.5;
        }
        assert_eq!(q.q(), &expected);
    }

    #[test]
    fn toy_energies() {
        let p = toy();
        assert_eq!(p.energy(&[0, 0, 0]).unwrap(), 0.0);
        assert_eq!(p.energy(&[1, 1, 1]).unwrap(), -1.5);
        assert_eq!(p.energy(&[1, 1, 0]).unwrap(), 0.0);
        assert!(matches!(
            p.energy(&[1, 1]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(p.energy(&[1, 2, 0]).is_err());
    }

    #[test]
    fn penalty_examples() {
        let p = toy();
        assert_eq!(penalty_residual(&p, &[1, 1, 1]).unwrap(), 0.0);
        assert_eq!(penalty_residual(&p, &[1, 1, 0]).unwrap(), 2.0);

        let two = PreferenceMatrix::from_rows(&[vec![1, 1]]).unwrap();
        let q = build_rqumf_qubo(&two, &QuboParams::new(0.5, 1.0).unwrap()).unwrap();
        assert_eq!(penalty_residual(&q, &[1, 1, 1]).unwrap(), 1.0);

        let plain = QuboProblem::new(DMatrix::zeros(1, 1), DVector::zeros(1), 0.0).unwrap();
        assert!(matches!(
            penalty_residual(&plain, &[0]),
            Err(Error::MissingVarSplit)
        ));
    }

    #[test]
    fn rqumf_is_positive_semidefinite() {
        let mut rng = crate::rng::rng_from(5);
        for _ in 0..20 {
            let p = random_preference(&mut rng, 6, 8);
            let q = build_rqumf_qubo(&p, &QuboParams::new(0.7, 1.3).unwrap()).unwrap();
            let eig = q.q().clone().symmetric_eigen();
            assert!(eig.eigenvalues.min() >= -1e-9);
        }
    }

    #[test]
    fn rqumf_sparsity_pattern() {
        let mut rng = crate::rng::rng_from(6);
        let p = random_preference(&mut rng, 7, 9);
        let q = build_rqumf_qubo(&p, &QuboParams::new(1.0, 1.0).unwrap()).unwrap();
        let (n, m) = (7, 9);
        for i in 0..n {
            for k in 0..n {
                assert_eq!(q.q()[(i, k)] != 0.0, i == k);
            }
            for j in 0..m {
                assert_eq!(q.q()[(i, n + j)] != 0.0, p.get(i, j));
            }
        }
        for j in 0..m {
            for k in 0..m {
                let meet = (0..n).any(|i| p.get(i, j) && p.get(i, k));
                assert_eq!(q.q()[(n + j, n + k)] != 0.0, meet);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let p = toy();
        let back = QuboProblem::from_json_model(&p.to_json_model()).unwrap();
        assert_eq!(back.q(), p.q());
        assert_eq!(back.s(), p.s());
        assert_eq!(back.var_split(), p.var_split());
        let json = serde_json::to_value(p.to_json_model()).unwrap();
        assert_eq!(json["quadratic"][0], serde_json::json!([0, 0, 1.0]));
        assert_eq!(json["quadratic"][1], serde_json::json!([0, 2, -2.0]));
    }

    pub(crate) fn random_preference(
        rng: &mut crate::rng::Rng,
        n: usize,
        m: usize,
    ) -> PreferenceMatrix {
        use rand::Rng as _;
        let rows: Vec<Vec<u8>> = (0..n)
            .map(|_| (0..m).map(|_| u8::from(rng.random_bool(0.35))).collect())
            .collect();
        PreferenceMatrix::from_rows(&rows).unwrap()
    }

    fn arb_preference(max_d: usize) -> impl Strategy<Value = PreferenceMatrix> {
        (1usize..6, 1usize..7)
            .prop_filter("small", move |(n, m)| n + m <= max_d)
            .prop_flat_map(|(n, m)| {
                proptest::collection::vec(proptest::collection::vec(0u8..2, m), n)
            })
            .prop_map(|rows| PreferenceMatrix::from_rows(&rows).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn folded_energy_matches_penalty_formula(
            q0 in proptest::collection::vec(-2.0f64..2.0, 16),
            s0 in proptest::collection::vec(-2.0f64..2.0, 4),
            a in proptest::collection::vec(-1.5f64..1.5, 12),
            b in proptest::collection::vec(-1.0f64..1.0, 3),
            weight in 0.0f64..3.0,
        ) {
            let q0 = DMatrix::from_row_slice(4, 4, &q0);
            let q0 = (&q0 + q0.transpose()) * 0.5;
            let s0 = DVector::from_vec(s0);
            let c = LinearConstraint {
                a: DMatrix::from_row_slice(3, 4, &a),
                b: DVector::from_vec(b),
                weight,
            };
            let folded = fold_constraints(&q0, &s0, std::slice::from_ref(&c)).unwrap();
            for w in all_assignments(4) {
                let wv = DVector::from_iterator(4, w.iter().map(|&v| f64::from(v)));
                let r = &c.a * &wv - &c.b;
                let direct = wv.dot(&(&q0 * &wv)) + s0.dot(&wv) + weight * r.dot(&r);
                prop_assert!((folded.energy(&w).unwrap() - direct).abs() < 1e-9);
            }
        }

        #[test]
        fn direct_build_matches_folding(p in arb_preference(11), l1 in 0.0f64..4.0, l2 in 0.01f64..4.0) {
            let params = QuboParams::new(l1, l2).unwrap();
            let direct = build_rqumf_qubo(&p, &params).unwrap();
            let d = p.n_points() + p.n_models();
            let folded = fold_constraints(
                &DMatrix::zeros(d, d),
                &rqumf_linear(&p, &params),
                &[LinearConstraint {
                    a: coverage_constraint_matrix(&p),
                    b: DVector::zeros(p.n_points()),
                    weight: l2,
                }],
            )
            .unwrap();
            for (x, y) in direct.q().iter().zip(folded.q().iter()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
            prop_assert_eq!(direct.s(), folded.s());
            prop_assert_eq!(folded.offset(), 0.0);
        }

        #[test]
        fn energy_decomposes(p in arb_preference(12), l1 in 0.0f64..4.0, l2 in 0.01f64..4.0) {
            let params = QuboParams::new(l1, l2).unwrap();
            let q = build_rqumf_qubo(&p, &params).unwrap();
            for w in all_assignments(q.d()) {
                let lhs = q.energy(&w).unwrap();
                let rhs = q.linear_energy(&w).unwrap() + l2 * penalty_residual(&q, &w).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-9);
            }
        }

        #[test]
        fn penalty_scales_linearly_in_lambda2(p in arb_preference(10), l2 in 0.1f64..3.0, k in 0.5f64..4.0) {
            let a = build_rqumf_qubo(&p, &QuboParams::new(1.0, l2).unwrap()).unwrap();
            let b = build_rqumf_qubo(&p, &QuboParams::new(1.0, k * l2).unwrap()).unwrap();
            for w in all_assignments(a.d()) {
                let qa = a.energy(&w).unwrap() - a.linear_energy(&w).unwrap();
                let qb = b.energy(&w).unwrap() - b.linear_energy(&w).unwrap();
                prop_assert!((qb - k * qa).abs() <= 1e-9 * (1.0 + qb.abs()));
            }
        }
    }
}
