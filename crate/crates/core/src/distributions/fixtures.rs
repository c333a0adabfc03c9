use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::{AlphabetSpec, DiscreteJoint, INTERNAL_TOL};
use crate::error::{Error, Result};

/// Every atom gets `1 / (2 m^p)`.
pub fn uniform_joint(spec: AlphabetSpec) -> Result<DiscreteJoint> {
    let states = spec.require_x_states()?;
    let v = 1.0 / (2 * states) as f64;
    DiscreteJoint::from_dense_with_tol(spec, vec![v; 2 * states], INTERNAL_TOL)
}

/// Moves `joint` by a random zero-sum perturbation of L1 norm at most `eps`.
///
/// The perturbation direction is Gaussian, centered to sum to zero, scaled to
/// L1 norm just under `eps`, then shrunk (never clipped) until every atom
/// stays non-negative.
pub fn perturb_joint(joint: &DiscreteJoint, eps: f64, seed: u64) -> Result<DiscreteJoint> {
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::InvalidEpsilon(eps));
    }
    if eps == 0.0 {
        return Ok(joint.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = joint.as_slice();
    let mut dir: Vec<f64> = (0..base.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mean = dir.iter().sum::<f64>() / dir.len() as f64;
    dir.iter_mut().for_each(|v| *v -= mean);
    let norm: f64 = dir.iter().map(|v| v.abs()).sum();
    if norm == 0.0 {
        return Ok(joint.clone());
    }
    let mut scale = eps * (1.0 - 1e-9) / norm;
    for (&b, &v) in base.iter().zip(&dir) {
        if v < 0.0 {
            scale = scale.min(b / -v * (1.0 - 1e-12));
        }
    }
    let prob: Vec<f64> = base
        .iter()
        .zip(&dir)
        .map(|(&b, &v)| (b + scale * v).max(0.0))
        .collect();
    DiscreteJoint::from_dense_with_tol(joint.spec(), prob, INTERNAL_TOL)
}

/// The binary `(X_1, X_2, Y)` distribution whose pairwise class is a single
/// point and whose conditional expectation is not additive.
pub fn nonadditive_fixture() -> DiscreteJoint {
    let spec = AlphabetSpec::new(2, 2).expect("valid alphabet");
    let rows = [
        (vec![0, 0], 0, 0.0),
        (vec![0, 0], 1, 0.1),
        (vec![1, 0], 0, 0.2),
        (vec![1, 0], 1, 0.2),
        (vec![0, 1], 0, 0.1),
        (vec![0, 1], 1, 0.3),
        (vec![1, 1], 0, 0.1),
        (vec![1, 1], 1, 0.0),
    ];
    DiscreteJoint::from_table(spec, &rows).expect("fixture is a valid joint")
}

/// `p = 1, m = 2` with `Y = X_1`.
pub fn copy_fixture() -> DiscreteJoint {
    let spec = AlphabetSpec::new(1, 2).expect("valid alphabet");
    DiscreteJoint::from_table(spec, &[(vec![0], 0, 0.5), (vec![1], 1, 0.5)])
        .expect("fixture is a valid joint")
}

/// `p = 2, m = 2`, all eight atoms `1/8`.
pub fn independent_uniform_fixture() -> DiscreteJoint {
    uniform_joint(AlphabetSpec::new(2, 2).expect("valid alphabet")).expect("small alphabet")
}

/// Independent `X_1, ..., X_p, Y` with the given univariate marginals.
pub fn product_joint(x_marginals: &[Vec<f64>], p_y1: f64) -> Result<DiscreteJoint> {
    let p = x_marginals.len();
    let m = x_marginals.first().map_or(0, Vec::len);
    let spec = AlphabetSpec::new(p, m)?;
    if x_marginals.iter().any(|v| v.len() != m) {
        return Err(Error::DimensionMismatch(
            "marginals of unequal length".into(),
        ));
    }
    let states = spec.require_x_states()?;
    let mut prob = Vec::with_capacity(2 * states);
    for x in 0..states {
        let px: f64 = (0..p).map(|i| x_marginals[i][spec.label(x, i)]).product();
        prob.push(px * (1.0 - p_y1));
        prob.push(px * p_y1);
    }
    DiscreteJoint::from_dense(spec, prob)
}

fn dirichlet_ones(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|v| v / total).collect()
}

/// Uniformly random point of the probability simplex over all atoms.
pub fn random_joint(spec: AlphabetSpec, seed: u64) -> Result<DiscreteJoint> {
    let states = spec.require_x_states()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DiscreteJoint::from_dense_with_tol(spec, dirichlet_ones(&mut rng, 2 * states), INTERNAL_TOL)
}

/// A joint with `E[Y | X = x] = sum_i f_i(x_i)` by construction.
#[derive(Debug, Clone)]
pub struct AdditiveFixture {
    pub joint: DiscreteJoint,
    /// `f[i][k]` is `f_i(k)`.
    pub f: Vec<Vec<f64>>,
}

/// Keeps every conditional probability in `[δ, 1 − δ]`.
pub const ADDITIVE_MARGIN: f64 = 0.05;

/// Draws `f_i(k)` uniformly in `[δ/p, (1−δ)/p]`, so the sum always lies in
/// `[δ, 1−δ]`. `X` is uniform when `uniform_x`, otherwise a random
/// full-support distribution.
pub fn additive_fixture(spec: AlphabetSpec, seed: u64, uniform_x: bool) -> Result<AdditiveFixture> {
    let states = spec.require_x_states()?;
    let (p, m) = (spec.p(), spec.m());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = ADDITIVE_MARGIN / p as f64;
    let hi = (1.0 - ADDITIVE_MARGIN) / p as f64;
    let f: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..m).map(|_| rng.gen_range(lo..=hi)).collect())
        .collect();
    let px = if uniform_x {
        vec![1.0 / states as f64; states]
    } else {
        dirichlet_ones(&mut rng, states)
    };
    let mut prob = Vec::with_capacity(2 * states);
    for (x, &w) in px.iter().enumerate() {
        let e: f64 = (0..p).map(|i| f[i][spec.label(x, i)]).sum();
        prob.push(w * (1.0 - e));
        prob.push(w * e);
    }
    let joint = DiscreteJoint::from_dense_with_tol(spec, prob, INTERNAL_TOL)?;
    Ok(AdditiveFixture { joint, f })
}
