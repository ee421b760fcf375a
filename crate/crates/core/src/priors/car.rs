//! Circular conditionally autoregressive prior on the transformed weights.
//!
//! Each block's log-odds depend on the blocks one step and one day away,
//! wrapping around the weekly cycle. With adjacency `A` the joint precision of
//! a column is `Q = (I - ρA) / ν²`; every row of `A` sums to 4, so `Q` is
//! positive definite exactly when `|ρ| < 1/4`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RHO_MAX: f64 = 0.25;
pub const C_PRIOR_VAR: f64 = 1e4;
pub const NU2_MAX: f64 = 1e4;

/// Lag-1 and lag-`d` circular neighbourhood on `B` blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct CarNeighborhood {
    block: usize,
    lag: usize,
    eigenvalues: Vec<f64>,
}

impl CarNeighborhood {
    pub fn new(block: usize, lag: usize) -> Result<Self> {
        if lag == 0 || block <= 2 * lag {
            return Err(Error::Config(format!("CAR neighbourhood needs B > 2d (B = {block}, d = {lag})")));
        }
        // A is circulant with unit entries at offsets ±1 and ±d
        let eigenvalues = (0..block)
            .map(|k| {
                let w = std::f64::consts::TAU * k as f64 / block as f64;
                2.0 * w.cos() + 2.0 * (w * lag as f64).cos()
            })
            .collect();
        Ok(Self { block, lag, eigenvalues })
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    /// 0-based neighbours of 0-based block `b`: previous, next, a day before, a day after.
    #[inline]
    pub fn neighbors(&self, b: usize) -> [usize; 4] {
        let n = self.block;
        [(b + n - 1) % n, (b + 1) % n, (b + n - self.lag) % n, (b + self.lag) % n]
    }

    /// Eigenvalues of the adjacency matrix.
    pub fn adjacency_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `log det(I - ρA)`.
    pub fn log_det_unit(&self, rho: f64) -> f64 {
        self.eigenvalues.iter().map(|&l| (1.0 - rho * l).ln()).sum()
    }
}

/// Transformed weights and per-column CAR parameters.
///
/// `pi` is stored block-major: entry `(b, r)` at `b * cols + r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarState {
    pub blocks: usize,
    pub cols: usize,
    pub pi: Vec<f64>,
    pub c: Vec<f64>,
    pub rho: Vec<f64>,
    pub nu2: Vec<f64>,
}

impl CarState {
    pub fn new(blocks: usize, pi: Vec<f64>, c: Vec<f64>, rho: Vec<f64>, nu2: Vec<f64>) -> Result<Self> {
        let cols = c.len();
        let s = Self { blocks, cols, pi, c, rho, nu2 };
        s.validate()?;
        Ok(s)
    }

    /// Zero columns (the K = 1 case).
    pub fn empty(blocks: usize) -> Self {
        Self { blocks, cols: 0, pi: Vec::new(), c: Vec::new(), rho: Vec::new(), nu2: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pi.len() != self.blocks * self.cols
            || self.rho.len() != self.cols
            || self.nu2.len() != self.cols
            || self.c.len() != self.cols
        {
            return Err(Error::Input("CAR state dimensions are inconsistent".into()));
        }
        for r in 0..self.cols {
            if !(self.rho[r] >= 0.0 && self.rho[r] < RHO_MAX) {
                return Err(Error::Propriety { rho: self.rho[r] });
            }
            if !(self.nu2[r] > 0.0) || !self.nu2[r].is_finite() {
                return Err(Error::Domain(format!("nu2[{r}] = {} must be positive", self.nu2[r])));
            }
            if !self.c[r].is_finite() {
                return Err(Error::Domain(format!("c[{r}] is not finite")));
            }
        }
        if self.pi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("transformed weights must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn pi_at(&self, b: usize, r: usize) -> f64 {
        self.pi[b * self.cols + r]
    }

    pub fn pi_row(&self, b: usize) -> &[f64] {
        &self.pi[b * self.cols..(b + 1) * self.cols]
    }

    pub fn column(&self, r: usize) -> Vec<f64> {
        (0..self.blocks).map(|b| self.pi_at(b, r)).collect()
    }
}

/// Conditional mean and variance of `π_{b,r}` given the rest of its column.
pub fn car_conditional(b: usize, r: usize, state: &CarState, nb: &CarNeighborhood) -> (f64, f64) {
    let c = state.c[r];
    let sum: f64 = nb.neighbors(b).iter().map(|&n| state.pi_at(n, r) - c).sum();
    (c + state.rho[r] * sum, state.nu2[r])
}

/// Dense joint precision `Q = (I - ρA) / ν²` of column `r`.
pub fn car_joint_precision(r: usize, state: &CarState, nb: &CarNeighborhood) -> Result<DMatrix<f64>> {
    precision_matrix(state.rho[r], state.nu2[r], nb)
}

pub fn precision_matrix(rho: f64, nu2: f64, nb: &CarNeighborhood) -> Result<DMatrix<f64>> {
    if !(rho.abs() < RHO_MAX) {
        return Err(Error::Propriety { rho });
    }
    let n = nb.block();
    let mut q = DMatrix::<f64>::identity(n, n) / nu2;
    for b in 0..n {
        for nbr in nb.neighbors(b) {
            q[(b, nbr)] -= rho / nu2;
        }
    }
    Ok(q)
}

/// `(x - c)ᵀ (I - ρA) (x - c)`.
pub fn car_quadratic(column: &[f64], c: f64, rho: f64, nb: &CarNeighborhood) -> f64 {
    let mut own = 0.0;
    let mut cross = 0.0;
    for b in 0..column.len() {
        let xb = column[b] - c;
        own += xb * xb;
        let s: f64 = nb.neighbors(b).iter().map(|&n| column[n] - c).sum();
        cross += xb * s;
    }
    own - rho * cross
}

/// Joint normal log density of one column under `N(c·1, Q⁻¹)`; `-∞` when improper.
pub fn car_log_density(column: &[f64], c: f64, rho: f64, nu2: f64, nb: &CarNeighborhood) -> f64 {
    if !(rho.abs() < RHO_MAX) || !(nu2 > 0.0) {
        return f64::NEG_INFINITY;
    }
    let n = column.len() as f64;
    let log_det = nb.log_det_unit(rho) - n * nu2.ln();
    -0.5 * n * std::f64::consts::TAU.ln() + 0.5 * log_det - 0.5 * car_quadratic(column, c, rho, nb) / nu2
}
