//! Continuous `(X, Y)` with fixed first and second moments.
//!
//! Among all distributions with mean `mu` and second-moment matrix `Lambda`,
//! the jointly Gaussian one has the smallest maximal correlation, equal to
//! `sqrt(Var(a^T X) / Var(Y))` for the regression vector
//! `a = Sigma_XX^+ Sigma_XY`.

use std::io::{Read, Write};
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hgr::GenericJoint;
use crate::numerics::{pseudoinverse, symmetric_eigenvalues, Matrix, Vector, DEFAULT_RANK_TOL};

const PSD_TOL: f64 = 1e-10;
const RANGE_TOL: f64 = 1e-8;
const EXCESS_TOL: f64 = 1e-9;
/// Gauss-Legendre nodes per grid cell.
const QUAD_NODES: usize = 12;

/// `mu = E[(X, Y)]` and `Lambda = E[(X, Y)(X, Y)^T]`, `Y` last.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    mu: Vector,
    lambda: Matrix,
    sigma: Matrix,
}

impl GaussianMoments {
    pub fn new(mu: Vector, lambda: Matrix) -> Result<Self> {
        let n = mu.len();
        if n < 2 {
            return Err(Error::DimensionMismatch("need at least one X and Y".into()));
        }
        if lambda.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "lambda is {:?}, expected {n}x{n}",
                lambda.shape()
            )));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let sigma = &lambda - &mu * mu.transpose();
        let min_eig = symmetric_eigenvalues(&sigma)?[0];
        let scale = sigma.abs().max().max(1.0);
        if min_eig < -PSD_TOL * scale {
            return Err(Error::InconsistentMoments(format!(
                "covariance has eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self { mu, lambda, sigma })
    }

    /// From mean and covariance rather than raw second moments.
    pub fn from_covariance(mu: Vector, sigma: Matrix) -> Result<Self> {
        let lambda = &sigma + &mu * mu.transpose();
        Self::new(mu, lambda)
    }

    /// Number of `X` coordinates.
    pub fn p(&self) -> usize {
        self.mu.len() - 1
    }

    pub fn mu(&self) -> &Vector {
        &self.mu
    }

    pub fn lambda(&self) -> &Matrix {
        &self.lambda
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    pub fn sigma_xx(&self) -> Matrix {
        let p = self.p();
        self.sigma.view((0, 0), (p, p)).into_owned()
    }

    pub fn sigma_xy(&self) -> Vector {
        let p = self.p();
        self.sigma.view((0, p), (p, 1)).column(0).into_owned()
    }

    pub fn var_y(&self) -> f64 {
        let p = self.p();
        self.sigma[(p, p)]
    }
}

/// `a = Sigma_XX^+ Sigma_XY`, so that `Y - a^T X` is uncorrelated with `X`.
pub fn regression_vector(moments: &GaussianMoments) -> Result<Vector> {
    let sxx = moments.sigma_xx();
    let sxy = moments.sigma_xy();
    let a = pseudoinverse(&sxx, DEFAULT_RANK_TOL)? * &sxy;
    let res = (&sxx * &a - &sxy).norm();
    if !(res <= RANGE_TOL) {
        return Err(Error::InconsistentMoments(format!(
            "Sigma_XY is outside the range of Sigma_XX (residual {res:e})"
        )));
    }
    Ok(a)
}

/// `sqrt(a^T Sigma_XX a / Var(Y))`.
pub fn min_hgr_gaussian(moments: &GaussianMoments) -> Result<f64> {
    let var_y = moments.var_y();
    if !(var_y > 0.0) {
        return Err(Error::DegenerateY(var_y));
    }
    let a = regression_vector(moments)?;
    let explained = a.dot(&(moments.sigma_xx() * &a)).max(0.0);
    let rho = (explained / var_y).sqrt();
    if rho > 1.0 + EXCESS_TOL {
        return Err(Error::InconsistentMoments(format!(
            "explained variance exceeds Var(Y) (ratio {rho})"
        )));
    }
    if rho > 1.0 {
        warn!("min HGR {rho} clamped to 1");
    }
    Ok(rho.min(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedGaussian {
    pub joint: GenericJoint,
    /// Probability outside the grid, removed by renormalization.
    pub tail_mass: f64,
}

/// Standard bivariate normal with correlation `rho` on a `grid_n x grid_n`
/// grid over `[-half_width, half_width]^2`, renormalized to the grid.
///
/// Each cell holds its exact probability (the `y`-integral in closed form,
/// the `x`-integral by Gauss-Legendre), so the grid variables are functions
/// of the truncated continuous pair and refining a grid can only move the
/// maximal correlation up towards the truncated value.
pub fn discretize_bivariate_gaussian(
    rho: f64,
    grid_n: usize,
    half_width: f64,
) -> Result<DiscretizedGaussian> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidRho(rho));
    }
    if grid_n < 16 {
        return Err(Error::InvalidArgument(format!(
            "grid_n must be at least 16, got {grid_n}"
        )));
    }
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "half_width must be positive, got {half_width}"
        )));
    }
    let h = 2.0 * half_width / grid_n as f64;
    let edge = |i: usize| -half_width + i as f64 * h;
    let s = (1.0 - rho * rho).sqrt();
    let gl = GaussLegendre::new(NonZeroUsize::new(QUAD_NODES).expect("nonzero"));
    let mass = Matrix::from_fn(grid_n, grid_n, |i, j| {
        let (lo, hi) = (edge(j), edge(j + 1));
        gl.integrate(edge(i), edge(i + 1), |x| {
            let band = normal_cdf((hi - rho * x) / s) - normal_cdf((lo - rho * x) / s);
            normal_pdf(x) * band.max(0.0)
        })
    });
    let total = mass.sum();
    let joint = GenericJoint::new(mass / total)?;
    Ok(DiscretizedGaussian {
        joint,
        tail_mass: (1.0 - total).max(0.0),
    })
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Serialize, Deserialize)]
struct MomentsFile {
    mu: Vec<f64>,
    lambda: Vec<f64>,
}

/// `{"mu": [...], "lambda": [...]}` with `lambda` flat row-major.
pub fn read_moments_json<R: Read>(r: R) -> Result<GaussianMoments> {
    let file: MomentsFile = serde_json::from_reader(r)?;
    let n = file.mu.len();
    if file.lambda.len() != n * n {
        return Err(Error::Parse(format!(
            "lambda has {} entries, expected {}",
            file.lambda.len(),
            n * n
        )));
    }
    GaussianMoments::new(
        Vector::from_vec(file.mu),
        Matrix::from_row_slice(n, n, &file.lambda),
    )
}

pub fn write_moments_json<W: Write>(moments: &GaussianMoments, w: W) -> Result<()> {
    let n = moments.mu.len();
    let file = MomentsFile {
        mu: moments.mu.iter().copied().collect(),
        lambda: (0..n * n).map(|k| moments.lambda[(k / n, k % n)]).collect(),
    };
    serde_json::to_writer_pretty(w, &file)?;
    Ok(())
}
