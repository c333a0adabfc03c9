//! The separable-function lower bound on HGR correlation.
//!
//! With `w` the one-hot encoding of `X` (block `i` holds the indicators of
//! `X_i`) and `b = Y - 1/2`, the best additive predictor of `b` solves
//!
//! ```text
//! gamma = min_z E[(w^T z - b)^2] = min_z z^T Q z - d^T z + 1/4,
//! Q = E[w w^T],  d_{ik} = P(X_i = k, Y = 1) - P(X_i = k, Y = 0),
//! ```
//!
//! and the bound is `rho_lb = sqrt(1 - gamma / (P(Y=0) P(Y=1)))`. Both `Q`
//! and `d` depend only on pairwise marginals.
//!
//! The linear term is `-d^T z` throughout this crate, so stationary points
//! satisfy `2 Q z = d` and `1/2 + z^T w_x` is a conditional probability.
//! Flipping the sign maps `z` to `-z` and leaves `gamma` unchanged.

use log::warn;

use crate::distributions::{
    pairwise_from_dataset, pairwise_from_joint, validate_marginals, AlphabetSpec, Dataset,
    DiscreteJoint, PairwiseMarginalSet, INTERNAL_TOL,
};
use crate::error::{Error, Result};
use crate::numerics::{pseudoinverse, Matrix, Vector, DEFAULT_RANK_TOL};

/// `d` counts as outside the column space of `Q` above this relative residual.
pub const COLUMN_SPACE_TOL: f64 = 1e-8;
/// Clamping `gamma` by more than this is logged.
const CLAMP_WARN: f64 = 1e-10;

/// `Q`, `d`, `P(Y = 1)` and `E[w]` for one pairwise marginal set.
#[derive(Debug, Clone, PartialEq)]
pub struct QdSystem {
    spec: AlphabetSpec,
    q: Matrix,
    d: Vector,
    p_y1: f64,
    ew: Vector,
}

impl QdSystem {
    pub fn spec(&self) -> AlphabetSpec {
        self.spec
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn d(&self) -> &Vector {
        &self.d
    }

    pub fn p_y1(&self) -> f64 {
        self.p_y1
    }

    /// Univariate marginals stacked in indicator order.
    pub fn ew(&self) -> &Vector {
        &self.ew
    }

    pub fn from_joint(joint: &DiscreteJoint) -> Result<Self> {
        assemble_qd(&pairwise_from_joint(joint))
    }

    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        assemble_qd(&pairwise_from_dataset(data))
    }

    /// `z^T Q z - d^T z + 1/4`.
    pub fn objective(&self, z: &Vector) -> Result<f64> {
        self.check_len(z)?;
        Ok(z.dot(&(&self.q * z)) - self.d.dot(z) + 0.25)
    }

    /// `|2 Q z - d|`.
    pub fn stationarity_residual(&self, z: &Vector) -> Result<f64> {
        self.check_len(z)?;
        Ok((&self.q * z * 2.0 - &self.d).norm())
    }

    pub(crate) fn check_len(&self, z: &Vector) -> Result<()> {
        if z.len() != self.d.len() {
            return Err(Error::DimensionMismatch(format!(
                "z has length {}, expected {}",
                z.len(),
                self.d.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn require_nondegenerate_y(&self) -> Result<()> {
        if self.p_y1 <= INTERNAL_TOL || self.p_y1 >= 1.0 - INTERNAL_TOL {
            Err(Error::DegenerateY(self.p_y1))
        } else {
            Ok(())
        }
    }

    /// Minimum-norm stationary point `Q^+ d / 2`, after checking that `d` lies
    /// in the column space of `Q`.
    pub fn min_norm_minimizer(&self) -> Result<Vector> {
        let pinv = pseudoinverse(&self.q, DEFAULT_RANK_TOL)?;
        let u = &pinv * &self.d;
        self.check_column_space(&u)?;
        Ok(u * 0.5)
    }

    fn check_column_space(&self, u: &Vector) -> Result<()> {
        let dn = self.d.norm();
        if dn > 0.0 {
            let rel = (&self.q * u - &self.d).norm() / dn;
            if !(rel <= COLUMN_SPACE_TOL) {
                return Err(Error::DInconsistentWithQ(rel));
            }
        }
        Ok(())
    }
}

/// Builds `Q` and `d` from validated pairwise marginals.
pub fn assemble_qd(marginals: &PairwiseMarginalSet) -> Result<QdSystem> {
    validate_marginals(marginals).into_result()?;
    let spec = marginals.spec();
    let (p, m) = (spec.p(), spec.m());
    let mut q = Matrix::zeros(p * m, p * m);
    for i in 0..p {
        for j in 0..p {
            let t = marginals.pair(i, j).ok_or_else(|| {
                Error::InconsistentMarginals(format!("missing pair {},{}", i + 1, j + 1))
            })?;
            q.view_mut((i * m, j * m), (m, m)).copy_from(&t);
        }
    }
    let mut d = Vector::zeros(p * m);
    let mut ew = Vector::zeros(p * m);
    for i in 0..p {
        let t = marginals.xy(i);
        for k in 0..m {
            d[spec.offset(i, k)] = t[(k, 1)] - t[(k, 0)];
            ew[spec.offset(i, k)] = t[(k, 0)] + t[(k, 1)];
        }
    }
    Ok(QdSystem {
        spec,
        q,
        d,
        p_y1: marginals.p_y1(),
        ew,
    })
}

fn clamp_gamma(gamma: f64) -> f64 {
    let clamped = gamma.clamp(0.0, 0.25);
    if (clamped - gamma).abs() > CLAMP_WARN {
        warn!("gamma_lb {gamma} clamped to {clamped}");
    }
    clamped
}

/// `gamma = (1 - d^T Q^+ d) / 4`.
pub fn gamma_lb_closed(system: &QdSystem) -> Result<f64> {
    let pinv = pseudoinverse(&system.q, DEFAULT_RANK_TOL)?;
    let u = &pinv * &system.d;
    system.check_column_space(&u)?;
    Ok(clamp_gamma(0.25 * (1.0 - system.d.dot(&u))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    Iterative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundResult {
    pub gamma_lb: f64,
    /// `None` when `Y` is degenerate.
    pub rho_lb: Option<f64>,
    /// Minimum-norm minimizer of the quadratic.
    pub z_star: Vector,
    pub method: Method,
}

/// `gamma`, `rho_lb` and `z* = Q^+ d / 2` via the pseudoinverse.
pub fn lower_bound_closed(system: &QdSystem) -> Result<LowerBoundResult> {
    let z_star = system.min_norm_minimizer()?;
    let gamma_lb = clamp_gamma(0.25 - 0.5 * system.d.dot(&z_star));
    Ok(LowerBoundResult {
        gamma_lb,
        rho_lb: rho_from_gamma(gamma_lb, system.p_y1).ok(),
        z_star,
        method: Method::ClosedForm,
    })
}

/// Minimizes the quadratic by conjugate gradients on `2 Q z = d` from `z = 0`
/// and evaluates the objective at the result. Starting at zero keeps the
/// iterates in the range of `Q`, so the limit is the minimum-norm solution.
pub fn gamma_lb_iterative(system: &QdSystem) -> Result<LowerBoundResult> {
    let n = system.d.len();
    let rhs = &system.d * 0.5;
    let bn = rhs.norm();
    let mut z = Vector::zeros(n);
    if bn > 0.0 {
        for _restart in 0..8 {
            let mut r = &rhs - &system.q * &z;
            if r.norm() <= 1e-15 * bn {
                break;
            }
            let mut dir = r.clone();
            let mut rr = r.dot(&r);
            for _ in 0..(2 * n + 2) {
                let qd = &system.q * &dir;
                let curv = dir.dot(&qd);
                if !(curv > 0.0) {
                    break;
                }
                let alpha = rr / curv;
                z.axpy(alpha, &dir, 1.0);
                r.axpy(-alpha, &qd, 1.0);
                let rr_next = r.dot(&r);
                if rr_next.sqrt() <= 1e-15 * bn {
                    break;
                }
                dir = &r + &dir * (rr_next / rr);
                rr = rr_next;
            }
        }
        let rel = (&system.q * &z * 2.0 - &system.d).norm() / system.d.norm();
        if !(rel <= COLUMN_SPACE_TOL) {
            return Err(Error::DInconsistentWithQ(rel));
        }
    }
    let gamma_lb = clamp_gamma(system.objective(&z)?);
    Ok(LowerBoundResult {
        gamma_lb,
        rho_lb: rho_from_gamma(gamma_lb, system.p_y1).ok(),
        z_star: z,
        method: Method::Iterative,
    })
}

/// `sqrt(1 - gamma / (P(Y=0) P(Y=1)))`, clamped to `[0, 1]`.
pub fn rho_from_gamma(gamma: f64, p_y1: f64) -> Result<f64> {
    if p_y1 <= INTERNAL_TOL || p_y1 >= 1.0 - INTERNAL_TOL {
        return Err(Error::DegenerateY(p_y1));
    }
    let ratio = gamma / (p_y1 * (1.0 - p_y1));
    Ok((1.0 - ratio).max(0.0).sqrt().min(1.0))
}

pub fn rho_lb(system: &QdSystem) -> Result<f64> {
    system.require_nondegenerate_y()?;
    rho_from_gamma(gamma_lb_closed(system)?, system.p_y1)
}

/// Quadratic forms of `E[w]`, `d` and the normalized `d'` under `Q^+`.
/// Expected values are 1, `P(Y=1) - P(Y=0)` and 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoinverseIdentities {
    pub ew_ew: f64,
    pub ew_d: f64,
    pub ew_d_prime: f64,
}

pub fn pseudoinverse_identities(system: &QdSystem) -> Result<PseudoinverseIdentities> {
    system.require_nondegenerate_y()?;
    let pinv = pseudoinverse(&system.q, DEFAULT_RANK_TOL)?;
    let p1 = system.p_y1;
    let d_prime = (&system.d * 0.5 + &system.ew * (0.5 - p1)) / (p1 * (1.0 - p1)).sqrt();
    let pe = &pinv * &system.ew;
    Ok(PseudoinverseIdentities {
        ew_ew: pe.dot(&system.ew),
        ew_d: pe.dot(&system.d),
        ew_d_prime: pe.dot(&d_prime),
    })
}

/// One-hot design matrix `W` and targets `b = y - 1/2` of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSystem {
    pub w: Matrix,
    pub b: Vector,
}

pub fn design_matrix(data: &Dataset) -> DesignSystem {
    let spec = data.spec();
    let mut w = Matrix::zeros(data.len(), spec.dim());
    let mut b = Vector::zeros(data.len());
    for (j, (labels, y)) in data.rows().enumerate() {
        for (i, &k) in labels.iter().enumerate() {
            w[(j, spec.offset(i, k))] = 1.0;
        }
        b[j] = if y == 1 { 0.5 } else { -0.5 };
    }
    DesignSystem { w, b }
}

/// `|W z - b|^2`.
pub fn lsq_objective(design: &DesignSystem, z: &Vector) -> Result<f64> {
    if z.len() != design.w.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "z has length {}, design has {} columns",
            z.len(),
            design.w.ncols()
        )));
    }
    Ok((&design.w * z - &design.b).norm_squared())
}
