use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Event, SpatialPoint, Sym2};

/// Hyperparameters of the component priors:
/// `μ_j ~ N(ξ, κ⁻¹)`, `Σ_j⁻¹ | β ~ Wishart(2α, (2β)⁻¹)`, `β ~ Wishart(2g, (2h)⁻¹)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub xi: SpatialPoint<f64>,
    pub kappa: Sym2<f64>,
    pub alpha: f64,
    pub g: f64,
    pub h: Sym2<f64>,
}

impl Hyperparams {
    pub const ALPHA: f64 = 3.0;
    pub const G: f64 = 1.0;

    /// Prior centred at `xi` with per-axis data ranges `ranges`.
    pub fn from_ranges(xi: SpatialPoint<f64>, ranges: [f64; 2]) -> Result<Self> {
        if !(ranges[0] > 0.0 && ranges[1] > 0.0) {
            return Err(Error::DegenerateData(format!("zero coordinate range {ranges:?}")));
        }
        let (r1, r2) = (ranges[0] * ranges[0], ranges[1] * ranges[1]);
        Ok(Self {
            xi,
            kappa: Sym2::diag(1.0 / r1, 1.0 / r2),
            alpha: Self::ALPHA,
            g: Self::G,
            h: Sym2::diag(10.0 / r1, 10.0 / r2),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let diag_ok = |m: &Sym2<f64>| m.xy == 0.0 && m.xx > 0.0 && m.yy > 0.0;
        if !diag_ok(&self.kappa) || !diag_ok(&self.h) {
            return Err(Error::Input("kappa and h must be diagonal with positive entries".into()));
        }
        if !(self.alpha > 0.5 && self.g > 0.5) {
            return Err(Error::Input("Wishart half degrees of freedom must exceed 1/2".into()));
        }
        Ok(())
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Data-driven hyperparameters: ξ = coordinate medians, κ = diag(1/R²), h = diag(10/R²).
pub fn hyperparams_from_data(events: &[Event]) -> Result<Hyperparams> {
    if events.len() < 2 {
        return Err(Error::DegenerateData(format!("{} events; need at least 2", events.len())));
    }
    let mut xs: Vec<f64> = events.iter().map(|e| e.location.x).collect();
    let mut ys: Vec<f64> = events.iter().map(|e| e.location.y).collect();
    let range = |v: &[f64]| {
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        hi - lo
    };
    let ranges = [range(&xs), range(&ys)];
    Hyperparams::from_ranges(SpatialPoint::new(median(&mut xs), median(&mut ys)), ranges)
}
