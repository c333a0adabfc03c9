//! Exact HGR maximal correlation for finite alphabets.
//!
//! For a joint table `P(x, y)`, the matrix `B = P(x,y) / sqrt(P(x) P(y))` has
//! top singular value 1 with singular vectors `sqrt(P(x))`, `sqrt(P(y))`.
//! The maximal correlation is the next singular value, and the optimal `f`,
//! `g` are the corresponding singular vectors divided by `sqrt` of the
//! marginals. Here the top pair is removed explicitly by deflation so that
//! ties `sigma_1 = sigma_2 = 1` need no special handling.

use log::warn;

use crate::distributions::{conditional_expectation, DiscreteJoint, INPUT_TOL};
use crate::error::{Error, Result};
use crate::numerics::{svd, Matrix, Vector};

/// Joint table over two finite alphabets.
#[derive(Debug, Clone, PartialEq)]
pub struct GenericJoint {
    prob: Matrix,
}

impl GenericJoint {
    pub fn new(prob: Matrix) -> Result<Self> {
        if prob.nrows() == 0 || prob.ncols() == 0 {
            return Err(Error::DimensionMismatch("empty joint table".into()));
        }
        if let Some(&v) = prob.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::NegativeProbability {
                location: "generic joint".into(),
                value: v,
            });
        }
        let sum = prob.sum();
        if (sum - 1.0).abs() > INPUT_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self { prob })
    }

    /// From `(x, y, prob)` triples; missing cells are zero.
    pub fn from_triples(nx: usize, ny: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        let mut prob = Matrix::zeros(nx, ny);
        let mut seen = vec![false; nx * ny];
        for &(x, y, v) in triples {
            if x >= nx || y >= ny {
                return Err(Error::LabelOutOfRange(format!("cell ({x}, {y})")));
            }
            if std::mem::replace(&mut seen[x * ny + y], true) {
                return Err(Error::DuplicateEntry(format!("cell ({x}, {y})")));
            }
            prob[(x, y)] = v;
        }
        Self::new(prob)
    }

    pub fn nx(&self) -> usize {
        self.prob.nrows()
    }

    pub fn ny(&self) -> usize {
        self.prob.ncols()
    }

    pub fn prob(&self) -> &Matrix {
        &self.prob
    }

    pub fn px(&self) -> Vector {
        Vector::from_iterator(self.nx(), self.prob.row_iter().map(|r| r.sum()))
    }

    pub fn py(&self) -> Vector {
        Vector::from_iterator(self.ny(), self.prob.column_iter().map(|c| c.sum()))
    }

    /// Recodes X-states: old state `x` becomes `perm[x]`.
    pub fn permute_x(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.nx() {
            return Err(Error::DimensionMismatch("permutation length".into()));
        }
        let mut prob = Matrix::zeros(self.nx(), self.ny());
        for (x, &nx) in perm.iter().enumerate() {
            prob.set_row(nx, &self.prob.row(x));
        }
        Self::new(prob)
    }

    pub fn transpose(&self) -> Self {
        Self {
            prob: self.prob.transpose(),
        }
    }
}

impl DiscreteJoint {
    /// The joint of the flattened `X` (all `m^p` states) and `Y`.
    pub fn flatten(&self) -> GenericJoint {
        let states = self.x_states();
        GenericJoint {
            prob: Matrix::from_row_slice(states, 2, self.as_slice()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HgrResult {
    pub rho: f64,
    /// `f*(x)`; `None` off the X-support. Empty when degenerate.
    pub f_star: Vec<Option<f64>>,
    /// `g*(y)`; `None` off the Y-support. Empty when degenerate.
    pub g_star: Vec<Option<f64>>,
    /// One side has a single support point; `rho` is reported as 0.
    pub degenerate: bool,
}

impl HgrResult {
    fn degenerate() -> Self {
        Self {
            rho: 0.0,
            f_star: Vec::new(),
            g_star: Vec::new(),
            degenerate: true,
        }
    }
}

/// Mean-zero, unit-variance function from a unit vector `u` in
/// `sqrt(marginal)` coordinates. Falls back to a fixed direction when `u` is
/// (numerically) the Perron vector itself.
fn feasible_function(u: &Vector, sqrt_marg: &Vector) -> Vector {
    let mut v = u - sqrt_marg * sqrt_marg.dot(u);
    if v.norm() < 1e-8 {
        v = -sqrt_marg * sqrt_marg[0];
        v[0] += 1.0;
    }
    v /= v.norm();
    v.component_div(sqrt_marg)
}

pub fn hgr_svd(joint: &GenericJoint) -> Result<HgrResult> {
    let (px, py) = (joint.px(), joint.py());
    let sx: Vec<usize> = (0..joint.nx()).filter(|&x| px[x] > 0.0).collect();
    let sy: Vec<usize> = (0..joint.ny()).filter(|&y| py[y] > 0.0).collect();
    if sx.len() < 2 || sy.len() < 2 {
        return Ok(HgrResult::degenerate());
    }
    let rx = Vector::from_iterator(sx.len(), sx.iter().map(|&x| px[x].sqrt()));
    let ry = Vector::from_iterator(sy.len(), sy.iter().map(|&y| py[y].sqrt()));
    let b = Matrix::from_fn(sx.len(), sy.len(), |i, j| {
        joint.prob[(sx[i], sy[j])] / (rx[i] * ry[j])
    });
    let deflated = b - &rx * ry.transpose();
    let dec = svd(&deflated)?;
    let raw = dec.singular_values[0];
    if raw > 1.0 + 1e-9 {
        warn!("maximal correlation {raw} exceeds 1 before clamping");
    }
    // ||B|| = 1, so anything below the usual numerical-rank cutoff is zero.
    let noise = f64::EPSILON * sx.len().max(sy.len()) as f64;
    let rho = if raw <= noise { 0.0 } else { raw.min(1.0) };

    let f = feasible_function(&dec.u.column(0).into_owned(), &rx);
    let mut g = feasible_function(&dec.v.column(0).into_owned(), &ry);
    let fg: f64 = (0..sx.len())
        .flat_map(|i| (0..sy.len()).map(move |j| (i, j)))
        .map(|(i, j)| joint.prob[(sx[i], sy[j])] * f[i] * g[j])
        .sum();
    if fg < 0.0 {
        g.neg_mut();
    }

    let mut f_star = vec![None; joint.nx()];
    for (i, &x) in sx.iter().enumerate() {
        f_star[x] = Some(f[i]);
    }
    let mut g_star = vec![None; joint.ny()];
    for (j, &y) in sy.iter().enumerate() {
        g_star[y] = Some(g[j]);
    }
    Ok(HgrResult {
        rho,
        f_star,
        g_star,
        degenerate: false,
    })
}

/// `sqrt(Var(E[Y | X]) / Var(Y))`, the maximal correlation when `Y` is binary.
pub fn hgr_binary(joint: &DiscreteJoint) -> Result<f64> {
    let p1 = joint.require_nondegenerate_y()?;
    let ce = conditional_expectation(joint);
    let var_ce: f64 = ce
        .support()
        .map(|(x, e)| joint.p_x(x) * (e - p1).powi(2))
        .sum();
    Ok((var_ce / (p1 * (1.0 - p1))).sqrt().min(1.0))
}

/// Pearson correlation of numeric embeddings of the two alphabets.
pub fn pearson(joint: &GenericJoint, x_values: &[f64], y_values: &[f64]) -> Result<f64> {
    if x_values.len() != joint.nx() || y_values.len() != joint.ny() {
        return Err(Error::DimensionMismatch(
            "embedding length differs from alphabet".into(),
        ));
    }
    let xv = Vector::from_column_slice(x_values);
    let yv = Vector::from_column_slice(y_values);
    let (px, py) = (joint.px(), joint.py());
    let mx = px.dot(&xv);
    let my = py.dot(&yv);
    let xc = xv.add_scalar(-mx);
    let yc = yv.add_scalar(-my);
    let var_x = px.dot(&xc.component_mul(&xc));
    let var_y = py.dot(&yc.component_mul(&yc));
    if var_x <= 0.0 || var_y <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let cov = xc.dot(&(&joint.prob * &yc));
    Ok(cov / (var_x * var_y).sqrt())
}
