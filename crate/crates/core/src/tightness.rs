//! When the separable lower bound is attained, and the distribution that
//! attains it.
//!
//! The bound is tight for a class iff some minimizer `z` of the quadratic has
//! `h(z) <= 1/2` and `h(-z) <= 1/2`, where `h` sums the per-block maxima.
//! Minimizers form the affine set `z0 + N c` (`N` spans the null space of
//! `Q`), so the check is a small LP over `c`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distributions::{
    pairwise_from_joint, perturb_joint, uniform_joint, AlphabetSpec, DiscreteJoint,
    PairwiseMarginalSet, INTERNAL_TOL,
};
use crate::error::{Error, Result};
use crate::hgr::hgr_svd;
use crate::lowerbound::{rho_lb, QdSystem};
use crate::numerics::{
    nullspace_basis, pseudoinverse, solve_lp, Bound, LinearProgram, LpStatus, Vector,
    DEFAULT_RANK_TOL,
};

/// Default slack on the `1/2` boundary.
pub const TIGHT_TOL: f64 = 1e-9;
/// `|2 Q z - d|` above this is not a stationary point.
pub const STATIONARY_TOL: f64 = 1e-8;
/// Largest joint (in atoms) handed to the dense feasibility LP.
pub const LP_ATOM_CAP: usize = 1 << 12;

/// Sum over blocks of the largest entry.
pub fn h_value(z: &Vector, spec: AlphabetSpec) -> Result<f64> {
    if z.len() != spec.dim() {
        return Err(Error::DimensionMismatch(format!(
            "z has length {}, expected {}",
            z.len(),
            spec.dim()
        )));
    }
    let m = spec.m();
    Ok((0..spec.p())
        .map(|i| {
            z.rows(i * m, m)
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Tight,
    NotTight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TightnessCertificate {
    pub verdict: Verdict,
    /// The LP minimizer; a feasible witness when tight.
    pub z_star: Vector,
    pub h_pos: f64,
    pub h_neg: f64,
    /// `max(h(z*), h(-z*))`, minimized over all minimizers of the quadratic.
    pub lp_value: f64,
    pub tol: f64,
    pub gamma_lb: f64,
}

impl TightnessCertificate {
    pub fn is_tight(&self) -> bool {
        self.verdict == Verdict::Tight
    }
}

pub fn check_tightness(system: &QdSystem, tol: f64) -> Result<TightnessCertificate> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be non-negative, got {tol}"
        )));
    }
    system.require_nondegenerate_y()?;
    let spec = system.spec();
    let (p, m) = (spec.p(), spec.m());
    let z0 = system.min_norm_minimizer()?;
    let null = nullspace_basis(system.q(), DEFAULT_RANK_TOL)?;
    let k = null.ncols();

    // Variables: c (k), t (p), s (p), u.
    let nv = k + 2 * p + 1;
    let u = nv - 1;
    let mut obj = vec![0.0; nv];
    obj[u] = 1.0;
    let mut lp = LinearProgram::minimize(obj);
    for v in 0..nv {
        lp = lp.bound(v, Bound::FREE);
    }
    for i in 0..p {
        for kk in 0..m {
            let r = spec.offset(i, kk);
            // z_r - t_i <= 0 and -z_r - s_i <= 0 with z_r = z0_r + N_r c.
            let mut pos = vec![0.0; nv];
            let mut neg = vec![0.0; nv];
            for c in 0..k {
                pos[c] = null[(r, c)];
                neg[c] = -null[(r, c)];
            }
            pos[k + i] = -1.0;
            neg[k + p + i] = -1.0;
            lp = lp.leq(pos, -z0[r]).leq(neg, z0[r]);
        }
    }
    let mut sum_t = vec![0.0; nv];
    let mut sum_s = vec![0.0; nv];
    for i in 0..p {
        sum_t[k + i] = 1.0;
        sum_s[k + p + i] = 1.0;
    }
    sum_t[u] = -1.0;
    sum_s[u] = -1.0;
    lp = lp.leq(sum_t, 0.0).leq(sum_s, 0.0);

    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::LpFailure(format!(
            "tightness LP ended {:?}",
            sol.status
        )));
    }
    let c = Vector::from_column_slice(&sol.x[..k]);
    let z_star = if k > 0 { &z0 + &null * c } else { z0 };
    let h_pos = h_value(&z_star, spec)?;
    let h_neg = h_value(&-&z_star, spec)?;
    let lp_value = h_pos.max(h_neg);
    let verdict = if lp_value <= 0.5 + tol {
        Verdict::Tight
    } else {
        Verdict::NotTight
    };
    let gamma_lb = system.objective(&z_star)?.clamp(0.0, 0.25);
    Ok(TightnessCertificate {
        verdict,
        z_star,
        h_pos,
        h_neg,
        lp_value,
        tol,
        gamma_lb,
    })
}

/// `E[Y | X = x] = sum_i f_i(x_i)` on the support, up to `residual`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveDecomposition {
    /// `f[i][k] = f_i(k)`.
    pub f: Vec<Vec<f64>>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Additivity {
    Additive(AdditiveDecomposition),
    NotAdditive { residual: f64 },
}

impl Additivity {
    pub fn is_additive(&self) -> bool {
        matches!(self, Additivity::Additive(_))
    }

    pub fn residual(&self) -> f64 {
        match self {
            Additivity::Additive(dec) => dec.residual,
            Additivity::NotAdditive { residual } => *residual,
        }
    }
}

/// Largest `|E[Y | x] - sum_i f_i(x_i)|` over states with `P(x) > 0`.
pub fn additive_residual(joint: &DiscreteJoint, f: &[Vec<f64>]) -> Result<f64> {
    let spec = joint.spec();
    if f.len() != spec.p() || f.iter().any(|fi| fi.len() != spec.m()) {
        return Err(Error::DimensionMismatch(
            "f must hold p tables of size m".into(),
        ));
    }
    let mut worst: f64 = 0.0;
    for x in 0..joint.x_states() {
        let px = joint.p_x(x);
        if px <= 0.0 {
            continue;
        }
        let fit: f64 = (0..spec.p()).map(|i| f[i][spec.label(x, i)]).sum();
        worst = worst.max((joint.prob(x, 1) / px - fit).abs());
    }
    Ok(worst)
}

/// Probability-weighted least-squares fit of an additive function to
/// `E[Y | X]`. The normal equations are `Q f = r` with
/// `r_ik = P(X_i = k, Y = 1)`.
pub fn is_additive(joint: &DiscreteJoint, tol: f64) -> Result<Additivity> {
    joint.require_nondegenerate_y()?;
    let system = QdSystem::from_joint(joint)?;
    let spec = joint.spec();
    let r = (system.ew() + system.d()) * 0.5;
    let flat = pseudoinverse(system.q(), DEFAULT_RANK_TOL)? * r;
    let f: Vec<Vec<f64>> = (0..spec.p())
        .map(|i| (0..spec.m()).map(|k| flat[spec.offset(i, k)]).collect())
        .collect();
    let residual = additive_residual(joint, &f)?;
    if residual <= tol {
        Ok(Additivity::Additive(AdditiveDecomposition { f, residual }))
    } else {
        Ok(Additivity::NotAdditive { residual })
    }
}

/// `f_i(k) = z_ik + 1/(2p)`, the additive form of `1/2 + z^T w_x`.
pub fn decomposition_from_z(z: &Vector, spec: AlphabetSpec) -> Result<Vec<Vec<f64>>> {
    if z.len() != spec.dim() {
        return Err(Error::DimensionMismatch("z length".into()));
    }
    let shift = 0.5 / spec.p() as f64;
    Ok((0..spec.p())
        .map(|i| {
            (0..spec.m())
                .map(|k| z[spec.offset(i, k)] + shift)
                .collect()
        })
        .collect())
}

/// Builds `P*(x, 1) = (1/2 + z^T w_x) Q(x)`, `P*(x, 0) = (1/2 - z^T w_x) Q(x)`
/// from a member `base` of the class. `z` must be stationary for the
/// marginals of `base` and satisfy the `h` constraints.
pub fn construct_additive(z: &Vector, base: &DiscreteJoint, tol: f64) -> Result<DiscreteJoint> {
    let system = QdSystem::from_joint(base)?;
    let spec = base.spec();
    system.check_len(z)?;
    let res = system.stationarity_residual(z)?;
    if !(res <= STATIONARY_TOL) {
        return Err(Error::NotStationary(res));
    }
    let h_pos = h_value(z, spec)?;
    let h_neg = h_value(&-z, spec)?;
    if h_pos > 0.5 + tol || h_neg > 0.5 + tol {
        return Err(Error::HConstraintViolated { h_pos, h_neg });
    }
    let states = base.x_states();
    let mut prob = vec![0.0; 2 * states];
    for x in 0..states {
        let qx = base.p_x(x);
        let zw: f64 = (0..spec.p())
            .map(|i| z[spec.offset(i, spec.label(x, i))])
            .sum();
        // The h constraints put this in [-tol, 1 + tol].
        let c = (0.5 + zw).clamp(0.0, 1.0);
        prob[2 * x + 1] = c * qx;
        prob[2 * x] = (1.0 - c) * qx;
    }
    let out = DiscreteJoint::from_dense_with_tol(spec, prob, INTERNAL_TOL.max(tol))?;
    let mismatch = pairwise_from_joint(&out).max_abs_diff(&pairwise_from_joint(base));
    if mismatch > 1e-10 {
        return Err(Error::MarginalMismatch(mismatch));
    }
    Ok(out)
}

fn class_lp(marginals: &PairwiseMarginalSet, objective: Vec<f64>) -> Result<LinearProgram> {
    let spec = marginals.spec();
    let states = spec.require_x_states()?;
    let atoms = 2 * states;
    if atoms > LP_ATOM_CAP {
        return Err(Error::AtomCapExceeded {
            atoms: atoms as u128,
            cap: LP_ATOM_CAP,
        });
    }
    let (p, m) = (spec.p(), spec.m());
    let mut lp = LinearProgram::minimize(objective);
    for i in 0..p {
        for j in (i + 1)..p {
            let t = marginals.pair(i, j).ok_or_else(|| {
                Error::InconsistentMarginals(format!("missing pair {},{}", i + 1, j + 1))
            })?;
            for k in 0..m {
                for l in 0..m {
                    let mut row = vec![0.0; atoms];
                    for x in (0..states).filter(|&x| spec.label(x, i) == k && spec.label(x, j) == l)
                    {
                        row[2 * x] = 1.0;
                        row[2 * x + 1] = 1.0;
                    }
                    lp = lp.eq(row, t[(k, l)]);
                }
            }
        }
        let t = marginals.xy(i);
        for k in 0..m {
            for y in 0..2 {
                let mut row = vec![0.0; atoms];
                for x in (0..states).filter(|&x| spec.label(x, i) == k) {
                    row[2 * x + y] = 1.0;
                }
                lp = lp.eq(row, t[(k, y)]);
            }
        }
    }
    Ok(lp)
}

/// Some joint whose pairwise marginals are `marginals`, found by a
/// feasibility LP over all atoms.
pub fn find_member_of_class(marginals: &PairwiseMarginalSet) -> Result<DiscreteJoint> {
    let spec = marginals.spec();
    let atoms = 2 * spec.require_x_states()?;
    let sol = solve_lp(&class_lp(marginals, vec![0.0; atoms])?)?;
    match sol.status {
        LpStatus::Optimal => {
            let prob: Vec<f64> = sol.x.iter().map(|v| v.max(0.0)).collect();
            DiscreteJoint::from_dense_with_tol(spec, prob, 1e-8)
        }
        LpStatus::Infeasible => Err(Error::EmptyClass),
        LpStatus::Unbounded => Err(Error::LpFailure("feasibility LP unbounded".into())),
    }
}

/// Whether exactly one joint has these pairwise marginals: every atom's
/// minimum and maximum over the class agree within `tol`.
pub fn class_is_singleton(marginals: &PairwiseMarginalSet, tol: f64) -> Result<bool> {
    let atoms = 2 * marginals.spec().require_x_states()?;
    for a in 0..atoms {
        let mut lo = vec![0.0; atoms];
        lo[a] = 1.0;
        let hi: Vec<f64> = lo.iter().map(|v| -v).collect();
        let min = solve_lp(&class_lp(marginals, lo)?)?;
        if min.status == LpStatus::Infeasible {
            return Err(Error::EmptyClass);
        }
        let max = solve_lp(&class_lp(marginals, hi)?)?;
        if min.status != LpStatus::Optimal || max.status != LpStatus::Optimal {
            return Err(Error::LpFailure("atom range LP did not solve".into()));
        }
        if -max.value - min.value > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TightnessGap {
    pub rho_oracle: f64,
    pub rho_lb: f64,
    pub gap: f64,
}

/// Exact maximal correlation of `joint` against the bound for its class.
pub fn tightness_gap(joint: &DiscreteJoint) -> Result<TightnessGap> {
    joint.require_nondegenerate_y()?;
    let rho_oracle = hgr_svd(&joint.flatten())?.rho;
    let lb = rho_lb(&QdSystem::from_joint(joint)?)?;
    Ok(TightnessGap {
        rho_oracle,
        rho_lb: lb,
        gap: rho_oracle - lb,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    pub trials: usize,
    pub tight: usize,
}

impl ProbeResult {
    pub fn fraction(&self) -> f64 {
        self.tight as f64 / self.trials as f64
    }
}

/// Runs `check_tightness` on the pairwise class of each joint.
pub fn probe_joints<'a>(
    joints: impl IntoIterator<Item = &'a DiscreteJoint>,
    tol: f64,
) -> Result<ProbeResult> {
    let mut out = ProbeResult {
        trials: 0,
        tight: 0,
    };
    for j in joints {
        out.trials += 1;
        if check_tightness(&QdSystem::from_joint(j)?, tol)?.is_tight() {
            out.tight += 1;
        }
    }
    Ok(out)
}

/// The perturbed uniform joints used by [`near_uniform_probe`]; trial `t`
/// draws its own seed from a generator seeded with `seed`.
pub fn near_uniform_joints(
    spec: AlphabetSpec,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<DiscreteJoint>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let base = uniform_joint(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|_| perturb_joint(&base, eps, rng.gen()))
        .collect()
}

/// Fraction of random joints within L1 distance `eps` of uniform whose class
/// is tight.
pub fn near_uniform_probe(
    spec: AlphabetSpec,
    eps: f64,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<ProbeResult> {
    probe_joints(&near_uniform_joints(spec, eps, trials, seed)?, tol)
}
