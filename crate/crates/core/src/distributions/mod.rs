//! Joint distributions over categorical `X = (X_1..X_p)` and binary `Y`,
//! datasets, and the pairwise marginal sets that define a distribution class.
//!
//! X-states are flattened in mixed-radix order with `x_1` least significant.
//! A joint table stores atom `(x, y)` at index `2 * x + y`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

mod fixtures;
pub mod io;

pub use fixtures::{
    additive_fixture, copy_fixture, independent_uniform_fixture, nonadditive_fixture,
    perturb_joint, product_joint, random_joint, uniform_joint, AdditiveFixture,
};

/// Full-joint operations are limited to `m^p * 2` atoms.
pub const MAX_ATOMS: usize = 1 << 22;
/// Normalization tolerance for user-supplied probabilities.
pub const INPUT_TOL: f64 = 1e-9;
/// Normalization tolerance for objects built by this crate.
pub const INTERNAL_TOL: f64 = 1e-12;

/// Number of X-variables and the common alphabet size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AlphabetSpec {
    p: usize,
    m: usize,
}

impl AlphabetSpec {
    pub fn new(p: usize, m: usize) -> Result<Self> {
        if p < 1 {
            return Err(Error::InvalidAlphabet(
                "need at least one X-variable".into(),
            ));
        }
        if m < 2 {
            return Err(Error::InvalidAlphabet(format!("alphabet size {m} < 2")));
        }
        Ok(Self { p, m })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Length of the indicator vector `w`.
    pub fn dim(&self) -> usize {
        self.p * self.m
    }

    /// `m^p`, or `None` if it does not fit in the joint-atom cap.
    pub fn x_states(&self) -> Option<usize> {
        let mut n: u128 = 1;
        for _ in 0..self.p {
            n *= self.m as u128;
            if 2 * n > MAX_ATOMS as u128 {
                return None;
            }
        }
        Some(n as usize)
    }

    /// Like [`x_states`](Self::x_states) but fails with `AtomCapExceeded`.
    pub fn require_x_states(&self) -> Result<usize> {
        self.x_states().ok_or_else(|| {
            let atoms = (self.m as u128)
                .checked_pow(self.p.min(u32::MAX as usize) as u32)
                .map(|n| n.saturating_mul(2))
                .unwrap_or(u128::MAX);
            Error::AtomCapExceeded {
                atoms,
                cap: MAX_ATOMS,
            }
        })
    }

    pub fn encode(&self, labels: &[usize]) -> Result<usize> {
        if labels.len() != self.p {
            return Err(Error::DimensionMismatch(format!(
                "expected {} X-labels, got {}",
                self.p,
                labels.len()
            )));
        }
        let mut idx = 0usize;
        for &k in labels.iter().rev() {
            if k >= self.m {
                return Err(Error::LabelOutOfRange(format!(
                    "X-label {k} with m = {}",
                    self.m
                )));
            }
            idx = idx * self.m + k;
        }
        Ok(idx)
    }

    pub fn decode(&self, mut idx: usize) -> Vec<usize> {
        let mut labels = Vec::with_capacity(self.p);
        for _ in 0..self.p {
            labels.push(idx % self.m);
            idx /= self.m;
        }
        labels
    }

    /// Label of variable `i` (0-based) in state `idx`.
    pub fn label(&self, idx: usize, i: usize) -> usize {
        (idx / self.m.pow(i as u32)) % self.m
    }

    /// Offset of `(variable i, label k)` in the indicator vector.
    pub fn offset(&self, i: usize, k: usize) -> usize {
        self.m * i + k
    }
}

fn check_sum(sum: f64, tol: f64) -> Result<()> {
    if (sum - 1.0).abs() > tol || !sum.is_finite() {
        Err(Error::NotNormalized { sum })
    } else {
        Ok(())
    }
}

/// Dense probability table `P(X = x, Y = y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    spec: AlphabetSpec,
    prob: Vec<f64>,
}

impl DiscreteJoint {
    /// Builds a joint from a dense table in `2 * x + y` layout.
    pub fn from_dense(spec: AlphabetSpec, prob: Vec<f64>) -> Result<Self> {
        Self::from_dense_with_tol(spec, prob, INPUT_TOL)
    }

    pub(crate) fn from_dense_with_tol(
        spec: AlphabetSpec,
        prob: Vec<f64>,
        tol: f64,
    ) -> Result<Self> {
        let states = spec.require_x_states()?;
        if prob.len() != 2 * states {
            return Err(Error::DimensionMismatch(format!(
                "joint table has {} entries, expected {}",
                prob.len(),
                2 * states
            )));
        }
        for (i, &v) in prob.iter().enumerate() {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::NegativeProbability {
                    location: format!("x = {:?}, y = {}", spec.decode(i / 2), i % 2),
                    value: v,
                });
            }
        }
        check_sum(prob.iter().sum(), tol)?;
        Ok(Self { spec, prob })
    }

    /// Builds a joint from sparse `(x-labels, y, probability)` rows; missing
    /// atoms are zero.
    pub fn from_table(spec: AlphabetSpec, rows: &[(Vec<usize>, usize, f64)]) -> Result<Self> {
        let states = spec.require_x_states()?;
        let mut prob = vec![0.0; 2 * states];
        let mut seen = vec![false; 2 * states];
        for (labels, y, pr) in rows {
            if *y > 1 {
                return Err(Error::LabelOutOfRange(format!("Y-label {y}")));
            }
            let idx = 2 * spec.encode(labels)? + y;
            if std::mem::replace(&mut seen[idx], true) {
                return Err(Error::DuplicateEntry(format!("x = {labels:?}, y = {y}")));
            }
            prob[idx] = *pr;
        }
        Self::from_dense(spec, prob)
    }

    pub fn spec(&self) -> AlphabetSpec {
        self.spec
    }

    pub fn x_states(&self) -> usize {
        self.prob.len() / 2
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.prob
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.prob[2 * x + y]
    }

    pub fn prob_at(&self, labels: &[usize], y: usize) -> Result<f64> {
        Ok(self.prob(self.spec.encode(labels)?, y))
    }

    /// `P(X = x)`.
    pub fn p_x(&self, x: usize) -> f64 {
        self.prob[2 * x] + self.prob[2 * x + 1]
    }

    pub fn p_y1(&self) -> f64 {
        self.prob.iter().skip(1).step_by(2).sum()
    }

    /// True when `P(Y = 1)` is 0 or 1.
    pub fn is_degenerate_y(&self) -> bool {
        let p1 = self.p_y1();
        p1 <= INTERNAL_TOL || p1 >= 1.0 - INTERNAL_TOL
    }

    pub(crate) fn require_nondegenerate_y(&self) -> Result<f64> {
        let p1 = self.p_y1();
        if self.is_degenerate_y() {
            Err(Error::DegenerateY(p1))
        } else {
            Ok(p1)
        }
    }

    /// Largest absolute entrywise difference to another joint over the same alphabet.
    pub fn max_abs_diff(&self, other: &DiscreteJoint) -> f64 {
        self.prob
            .iter()
            .zip(&other.prob)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn l1_distance(&self, other: &DiscreteJoint) -> f64 {
        self.prob
            .iter()
            .zip(&other.prob)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// Applies a relabeling `perm` (old label -> new label) to variable `i`.
    pub fn relabel(&self, i: usize, perm: &[usize]) -> Result<DiscreteJoint> {
        let m = self.spec.m;
        if i >= self.spec.p || perm.len() != m || !is_permutation(perm) {
            return Err(Error::InvalidArgument(
                "relabeling must permute 0..m".into(),
            ));
        }
        let mut prob = vec![0.0; self.prob.len()];
        for x in 0..self.x_states() {
            let mut labels = self.spec.decode(x);
            labels[i] = perm[labels[i]];
            let nx = self.spec.encode(&labels)?;
            prob[2 * nx] = self.prob[2 * x];
            prob[2 * nx + 1] = self.prob[2 * x + 1];
        }
        Ok(Self {
            spec: self.spec,
            prob,
        })
    }
}

fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    perm.iter()
        .all(|&k| k < perm.len() && !std::mem::replace(&mut seen[k], true))
}

/// Samples `(x_1..x_p, y)` with categorical labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    spec: AlphabetSpec,
    xs: Vec<usize>,
    ys: Vec<u8>,
}

impl Dataset {
    pub fn new(spec: AlphabetSpec, rows: &[(Vec<usize>, usize)]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut xs = Vec::with_capacity(rows.len() * spec.p);
        let mut ys = Vec::with_capacity(rows.len());
        for (r, (labels, y)) in rows.iter().enumerate() {
            if labels.len() != spec.p {
                return Err(Error::DimensionMismatch(format!(
                    "row {r} has {} X-labels, expected {}",
                    labels.len(),
                    spec.p
                )));
            }
            if let Some(k) = labels.iter().find(|&&k| k >= spec.m) {
                return Err(Error::LabelOutOfRange(format!("row {r}: X-label {k}")));
            }
            if *y > 1 {
                return Err(Error::LabelOutOfRange(format!("row {r}: Y-label {y}")));
            }
            xs.extend_from_slice(labels);
            ys.push(*y as u8);
        }
        Ok(Self { spec, xs, ys })
    }

    pub fn spec(&self) -> AlphabetSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn row(&self, j: usize) -> (&[usize], usize) {
        let p = self.spec.p;
        (&self.xs[j * p..(j + 1) * p], self.ys[j] as usize)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[usize], usize)> + '_ {
        (0..self.len()).map(move |j| self.row(j))
    }

    /// Empirical joint; subject to the atom cap.
    pub fn empirical_joint(&self) -> Result<DiscreteJoint> {
        let states = self.spec.require_x_states()?;
        let mut counts = vec![0usize; 2 * states];
        for (labels, y) in self.rows() {
            counts[2 * self.spec.encode(labels)? + y] += 1;
        }
        let n = self.len() as f64;
        let prob = counts.into_iter().map(|c| c as f64 / n).collect();
        DiscreteJoint::from_dense_with_tol(self.spec, prob, INTERNAL_TOL)
    }
}

/// Two-variable marginal tables `mu^{ij}` (m x m) and `mu^i` (m x 2).
///
/// Pair tables are keyed by 0-based `(i, j)` with `i != j`; both orientations
/// may be present (as read from a file), in which case they are checked for
/// symmetry. Lookups fall back to the transpose of the other orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMarginalSet {
    spec: AlphabetSpec,
    xx: BTreeMap<(usize, usize), DMatrix<f64>>,
    xy: Vec<DMatrix<f64>>,
}

impl PairwiseMarginalSet {
    /// Assembles a marginal set without validating it; run
    /// [`validate_marginals`] before trusting the tables.
    pub fn from_parts(
        spec: AlphabetSpec,
        xx: BTreeMap<(usize, usize), DMatrix<f64>>,
        xy: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let m = spec.m;
        if xy.len() != spec.p {
            return Err(Error::DimensionMismatch(format!(
                "{} X-Y tables for p = {}",
                xy.len(),
                spec.p
            )));
        }
        if let Some(t) = xy.iter().find(|t| t.shape() != (m, 2)) {
            return Err(Error::DimensionMismatch(format!(
                "X-Y table of shape {:?}",
                t.shape()
            )));
        }
        for (&(i, j), t) in &xx {
            if i >= spec.p || j >= spec.p || i == j {
                return Err(Error::InvalidArgument(format!(
                    "bad pair index ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
            if t.shape() != (m, m) {
                return Err(Error::DimensionMismatch(format!(
                    "X-X table of shape {:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self { spec, xx, xy })
    }

    pub fn spec(&self) -> AlphabetSpec {
        self.spec
    }

    /// `P(X_i = k)`, read from the row sums of `mu^i`.
    pub fn univariate(&self, i: usize) -> Vec<f64> {
        let t = &self.xy[i];
        (0..self.spec.m).map(|k| t[(k, 0)] + t[(k, 1)]).collect()
    }

    /// `mu^{ij}` for any `i, j`; the diagonal case is `diag(P(X_i = k))`.
    pub fn pair(&self, i: usize, j: usize) -> Option<DMatrix<f64>> {
        if i == j {
            return Some(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(
                self.univariate(i),
            )));
        }
        self.xx
            .get(&(i, j))
            .cloned()
            .or_else(|| self.xx.get(&(j, i)).map(|t| t.transpose()))
    }

    /// `mu^i`, indexed `(k, y)`.
    pub fn xy(&self, i: usize) -> &DMatrix<f64> {
        &self.xy[i]
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&(usize, usize), &DMatrix<f64>)> {
        self.xx.iter()
    }

    pub fn p_y1(&self) -> f64 {
        self.xy[0].column(1).sum()
    }

    /// Largest entrywise deviation over all pair and X-Y tables.
    pub fn max_abs_diff(&self, other: &PairwiseMarginalSet) -> f64 {
        let p = self.spec.p;
        let mut worst: f64 = 0.0;
        for i in 0..p {
            worst = worst.max((&self.xy[i] - &other.xy[i]).abs().max());
            for j in (i + 1)..p {
                match (self.pair(i, j), other.pair(i, j)) {
                    (Some(a), Some(b)) => worst = worst.max((a - b).abs().max()),
                    _ => return f64::INFINITY,
                }
            }
        }
        worst
    }
}

/// `P(X = x, Y = y)` to `mu^{ij}`, `mu^i`.
pub fn pairwise_from_joint(joint: &DiscreteJoint) -> PairwiseMarginalSet {
    let spec = joint.spec;
    let (p, m) = (spec.p, spec.m);
    let mut xx = BTreeMap::new();
    for i in 0..p {
        for j in (i + 1)..p {
            xx.insert((i, j), DMatrix::zeros(m, m));
        }
    }
    let mut xy = vec![DMatrix::zeros(m, 2); p];
    for x in 0..joint.x_states() {
        let labels = spec.decode(x);
        for y in 0..2 {
            let pr = joint.prob(x, y);
            if pr == 0.0 {
                continue;
            }
            for i in 0..p {
                xy[i][(labels[i], y)] += pr;
                for j in (i + 1)..p {
                    if let Some(t) = xx.get_mut(&(i, j)) {
                        t[(labels[i], labels[j])] += pr;
                    }
                }
            }
        }
    }
    PairwiseMarginalSet { spec, xx, xy }
}

/// Empirical pairwise frequencies; identical to
/// `pairwise_from_joint(&d.empirical_joint())` but with no atom cap.
pub fn pairwise_from_dataset(data: &Dataset) -> PairwiseMarginalSet {
    let spec = data.spec;
    let (p, m) = (spec.p, spec.m);
    let mut xx_counts: BTreeMap<(usize, usize), DMatrix<f64>> = BTreeMap::new();
    for i in 0..p {
        for j in (i + 1)..p {
            xx_counts.insert((i, j), DMatrix::zeros(m, m));
        }
    }
    let mut xy_counts = vec![DMatrix::<f64>::zeros(m, 2); p];
    for (labels, y) in data.rows() {
        for i in 0..p {
            xy_counts[i][(labels[i], y)] += 1.0;
            for j in (i + 1)..p {
                if let Some(t) = xx_counts.get_mut(&(i, j)) {
                    t[(labels[i], labels[j])] += 1.0;
                }
            }
        }
    }
    let n = data.len() as f64;
    let xx = xx_counts.into_iter().map(|(k, t)| (k, t / n)).collect();
    let xy = xy_counts.into_iter().map(|t| t / n).collect();
    PairwiseMarginalSet { spec, xx, xy }
}

/// `E[Y | X = x]` on the support of `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    spec: AlphabetSpec,
    values: Vec<Option<f64>>,
}

impl ConditionalTable {
    pub fn spec(&self) -> AlphabetSpec {
        self.spec
    }

    /// `None` off the support.
    pub fn get(&self, x: usize) -> Option<f64> {
        self.values[x]
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(x, v)| v.map(|v| (x, v)))
    }
}

pub fn conditional_expectation(joint: &DiscreteJoint) -> ConditionalTable {
    let values = (0..joint.x_states())
        .map(|x| {
            let px = joint.p_x(x);
            (px > 0.0).then(|| (joint.prob(x, 1) / px).clamp(0.0, 1.0))
        })
        .collect();
    ConditionalTable {
        spec: joint.spec,
        values,
    }
}

/// One violated marginal-set invariant. Variable indices are 1-based, as in files.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeEntry {
        table: String,
        value: f64,
    },
    NotNormalized {
        table: String,
        sum: f64,
    },
    Asymmetric {
        i: usize,
        j: usize,
        deviation: f64,
    },
    MissingPair {
        i: usize,
        j: usize,
    },
    InconsistentUnivariate {
        table: String,
        variable: usize,
        deviation: f64,
    },
    InconsistentY {
        variable: usize,
        deviation: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeEntry { table, value } => {
                write!(f, "table {table} has negative entry {value}")
            }
            Violation::NotNormalized { table, sum } => write!(f, "table {table} sums to {sum}"),
            Violation::Asymmetric { i, j, deviation } => {
                write!(
                    f,
                    "tables {i},{j} and {j},{i} are not transposes (deviation {deviation:e})"
                )
            }
            Violation::MissingPair { i, j } => write!(f, "missing table for pair {i},{j}"),
            Violation::InconsistentUnivariate {
                table,
                variable,
                deviation,
            } => write!(
                f,
                "table {table} disagrees with the marginal of X{variable} (deviation {deviation:e})"
            ),
            Violation::InconsistentY {
                variable,
                deviation,
            } => write!(
                f,
                "table {variable} gives a different P(Y) than table 1 (deviation {deviation:e})"
            ),
        }
    }
}

/// Outcome of [`validate_marginals`]. Passing is necessary, not sufficient,
/// for the marginals to be realizable by some joint.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// `P(Y = 1)` is 0 or 1; allowed here, rejected by HGR operations.
    pub degenerate_y: bool,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            let msgs: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
            Err(Error::InconsistentMarginals(msgs.join("; ")))
        }
    }
}

pub fn validate_marginals(marginals: &PairwiseMarginalSet) -> ValidationReport {
    validate_marginals_with_tol(marginals, INPUT_TOL)
}

pub fn validate_marginals_with_tol(marginals: &PairwiseMarginalSet, tol: f64) -> ValidationReport {
    let spec = marginals.spec;
    let (p, m) = (spec.p, spec.m);
    let mut report = ValidationReport::default();
    let v = &mut report.violations;

    let check_table = |name: String, t: &DMatrix<f64>, v: &mut Vec<Violation>| {
        let min = t.min();
        if min < 0.0 || !min.is_finite() {
            v.push(Violation::NegativeEntry {
                table: name.clone(),
                value: min,
            });
        }
        let sum = t.sum();
        if (sum - 1.0).abs() > tol || !sum.is_finite() {
            v.push(Violation::NotNormalized { table: name, sum });
        }
    };
    for i in 0..p {
        check_table(format!("{}", i + 1), &marginals.xy[i], v);
    }
    for (&(i, j), t) in &marginals.xx {
        check_table(format!("{},{}", i + 1, j + 1), t, v);
    }

    let uni: Vec<Vec<f64>> = (0..p).map(|i| marginals.univariate(i)).collect();
    let y_ref: Vec<f64> = (0..2).map(|y| marginals.xy[0].column(y).sum()).collect();
    for i in 1..p {
        let dev = (0..2)
            .map(|y| (marginals.xy[i].column(y).sum() - y_ref[y]).abs())
            .fold(0.0, f64::max);
        if dev > tol {
            v.push(Violation::InconsistentY {
                variable: i + 1,
                deviation: dev,
            });
        }
    }

    for i in 0..p {
        for j in (i + 1)..p {
            let fwd = marginals.xx.get(&(i, j));
            let bwd = marginals.xx.get(&(j, i));
            if let (Some(a), Some(b)) = (fwd, bwd) {
                let dev = (a - b.transpose()).abs().max();
                if dev > tol {
                    v.push(Violation::Asymmetric {
                        i: i + 1,
                        j: j + 1,
                        deviation: dev,
                    });
                }
            }
            let Some(t) = marginals.pair(i, j) else {
                v.push(Violation::MissingPair { i: i + 1, j: j + 1 });
                continue;
            };
            let name = format!("{},{}", i + 1, j + 1);
            let row_dev = (0..m)
                .map(|k| (t.row(k).sum() - uni[i][k]).abs())
                .fold(0.0, f64::max);
            if row_dev > tol {
                v.push(Violation::InconsistentUnivariate {
                    table: name.clone(),
                    variable: i + 1,
                    deviation: row_dev,
                });
            }
            let col_dev = (0..m)
                .map(|k| (t.column(k).sum() - uni[j][k]).abs())
                .fold(0.0, f64::max);
            if col_dev > tol {
                v.push(Violation::InconsistentUnivariate {
                    table: name,
                    variable: j + 1,
                    deviation: col_dev,
                });
            }
        }
    }

    let p1 = y_ref[1];
    report.degenerate_y = p1 <= INTERNAL_TOL || p1 >= 1.0 - INTERNAL_TOL;
    report
}
