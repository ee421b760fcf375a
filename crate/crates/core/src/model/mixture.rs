//! Seasonal block indexing, weight matrices and the block-constrained mixture density.

use serde::{Deserialize, Serialize};

use super::gaussian::{Component, GaussianKernel};
use super::geometry::{Axis, IntegrationGrid, SpatialPoint, StudyRegion};
use super::quadrature::StripQuadrature;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Time discretization: `periods` bins, weights repeating every `block`
/// bins, `per_day` bins in a day.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonalityConfig {
    pub periods: usize,
    pub block: usize,
    pub per_day: usize,
}

impl Default for SeasonalityConfig {
    /// Four weeks of two-hour bins with a weekly cycle.
    fn default() -> Self {
        Self { periods: 336, block: 84, per_day: 12 }
    }
}

impl SeasonalityConfig {
    pub fn new(periods: usize, block: usize, per_day: usize) -> Result<Self> {
        let s = Self { periods, block, per_day };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.block == 0 || self.per_day == 0 {
            return Err(Error::Config("block length and periods per day must be positive".into()));
        }
        if self.block > self.periods {
            return Err(Error::Config(format!("block length {} exceeds {} periods", self.block, self.periods)));
        }
        if self.block % self.per_day != 0 {
            return Err(Error::Config(format!(
                "periods per day {} does not divide block length {}",
                self.per_day, self.block
            )));
        }
        Ok(())
    }

    /// Same cycle with a different horizon (used for forecasting beyond the fit window).
    pub fn with_horizon(&self, periods: usize) -> Self {
        Self { periods: periods.max(self.block), ..*self }
    }

    /// 1-based block `b` with `b ≡ t (mod B)`.
    pub fn block_of(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.periods {
            return Err(Error::Input(format!("period {t} outside 1..={}", self.periods)));
        }
        Ok(self.block_index(t) + 1)
    }

    /// 0-based row of the weight matrix for period `t ≥ 1` (no range check).
    #[inline]
    pub fn block_index(&self, t: usize) -> usize {
        (t - 1) % self.block
    }
}

/// Row-stochastic `B × K` matrix of mixture weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> WeightMatrix<T> {
    pub fn row_tolerance() -> T {
        T::lit(1e-12).max(T::epsilon() * T::lit(64.0))
    }

    /// Validates nonnegativity and unit row sums.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols || cols == 0 || rows == 0 {
            return Err(Error::Input(format!("weight matrix shape {rows}x{cols} does not match {} entries", data.len())));
        }
        let m = Self { rows, cols, data };
        for b in 0..rows {
            let row = m.row(b);
            if row.iter().any(|&v| !(v >= T::zero()) || !v.is_finite()) {
                return Err(Error::Domain(format!("weight row {b} has a negative or non-finite entry")));
            }
            let s = row.iter().fold(T::zero(), |a, &v| a + v);
            if (s - T::one()).abs() > Self::row_tolerance() {
                return Err(Error::Domain(format!("weight row {b} sums to {s}")));
            }
        }
        Ok(m)
    }

    /// Every row equal to `row`.
    pub fn repeated(rows: usize, row: &[T]) -> Result<Self> {
        let data = (0..rows).flat_map(|_| row.iter().copied()).collect();
        Self::new(rows, row.len(), data)
    }

    /// Skips validation; the caller guarantees the invariants.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, b: usize) -> &[T] {
        &self.data[b * self.cols..(b + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, b: usize) -> &mut [T] {
        &mut self.data[b * self.cols..(b + 1) * self.cols]
    }

    pub fn get(&self, b: usize, j: usize) -> T {
        self.data[b * self.cols + j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Same weights with columns reordered: new column `i` is old column `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for b in 0..self.rows {
            let row = self.row(b);
            data.extend(perm.iter().map(|&j| row[j]));
        }
        Self::from_raw(self.rows, self.cols, data)
    }
}

/// Components shared across time plus one weight row per seasonal block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureState<T> {
    pub components: Vec<Component<T>>,
    pub weights: WeightMatrix<T>,
    pub season: SeasonalityConfig,
}

impl<T: Real> MixtureState<T> {
    pub fn new(components: Vec<Component<T>>, weights: WeightMatrix<T>, season: SeasonalityConfig) -> Result<Self> {
        if weights.cols() != components.len() {
            return Err(Error::Input(format!(
                "{} weight columns for {} components",
                weights.cols(),
                components.len()
            )));
        }
        if weights.rows() != season.block {
            return Err(Error::Input(format!("{} weight rows for block length {}", weights.rows(), season.block)));
        }
        Ok(Self { components, weights, season })
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn kernels(&self) -> Result<Vec<GaussianKernel<T>>> {
        self.components.iter().map(|c| c.kernel()).collect()
    }

    /// Evaluator with cached component kernels.
    pub fn evaluator(&self) -> Result<MixtureEvaluator<'_, T>> {
        Ok(MixtureEvaluator { state: self, kernels: self.kernels()? })
    }

    /// Relabels components: new component `i` is old component `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            components: perm.iter().map(|&j| self.components[j]).collect(),
            weights: self.weights.permuted(perm),
            season: self.season,
        }
    }
}

/// Mixture density with precomputed kernels.
#[derive(Clone, Debug)]
pub struct MixtureEvaluator<'a, T> {
    state: &'a MixtureState<T>,
    kernels: Vec<GaussianKernel<T>>,
}

impl<T: Real> MixtureEvaluator<'_, T> {
    pub fn kernels(&self) -> &[GaussianKernel<T>] {
        &self.kernels
    }

    /// Density for 0-based block row `b`.
    pub fn block_density(&self, s: &SpatialPoint<T>, b: usize) -> T {
        let row = self.state.weights.row(b);
        row.iter().zip(&self.kernels).fold(T::zero(), |acc, (&w, k)| acc + w * k.pdf(s))
    }

    pub fn density(&self, s: &SpatialPoint<T>, t: usize) -> Result<T> {
        let b = self.state.season.block_of(t)? - 1;
        Ok(self.block_density(s, b))
    }
}

/// `Σ_j p_{block(t), j} φ(s; μ_j, Σ_j)`.
pub fn mixture_density<T: Real>(s: &SpatialPoint<T>, t: usize, m: &MixtureState<T>) -> Result<T> {
    m.evaluator()?.density(s, t)
}

/// Integral of each component density over the region's quadrature nodes.
pub fn component_masses<T: Real>(kernels: &[GaussianKernel<T>], grid: &IntegrationGrid<T>) -> Vec<T> {
    kernels.iter().map(|k| grid.integrate(|s| k.pdf(s))).collect()
}

/// Per-block normalizing constants from precomputed component masses.
pub fn block_constants<T: Real>(weights: &WeightMatrix<T>, masses: &[T]) -> Result<Vec<T>> {
    let floor = T::lit(1e-10);
    (0..weights.rows())
        .map(|b| {
            let z = weights.row(b).iter().zip(masses).fold(T::zero(), |acc, (&w, &m)| acc + w * m);
            if z < floor {
                Err(Error::DegenerateRegion { block: b + 1, mass: z.as_f64() })
            } else {
                Ok(z)
            }
        })
        .collect()
}

/// Per-block mass of the untruncated mixture inside `region`; the truncated
/// density for block `b` is `f_b(s) 1[s ∈ region] / constant[b]`.
pub fn normalize_to_region<T: Real>(m: &MixtureState<T>, region: &StudyRegion<T>) -> Result<Vec<T>> {
    m.kernels()?;
    let quad = StripQuadrature::new(region, Axis::X);
    block_constants(&m.weights, &region_masses(&m.components, &quad))
}

/// Mass of each component inside the region by strip quadrature.
pub fn region_masses<T: Real>(components: &[Component<T>], quad: &StripQuadrature) -> Vec<T> {
    components.iter().map(|c| T::lit(quad.mass(c))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::linalg::Sym2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn season(b: usize) -> SeasonalityConfig {
        SeasonalityConfig::new(4 * b, b, 1).unwrap()
    }

    #[test]
    fn block_indexing() {
        let s = SeasonalityConfig::default();
        assert_eq!(s.block_of(1).unwrap(), 1);
        assert_eq!(s.block_of(85).unwrap(), 1);
        assert_eq!(s.block_of(336).unwrap(), 84);
        assert!(s.block_of(0).is_err());
        assert!(s.block_of(337).is_err());
    }

    #[test]
    fn seasonality_validation() {
        assert!(SeasonalityConfig::new(336, 84, 11).is_err());
        assert!(SeasonalityConfig::new(80, 84, 12).is_err());
    }

    #[test]
    fn single_component_equals_gaussian() {
        let c = Component::new(SpatialPoint::new(1.0, -1.0), Sym2::new(1.5, 0.3, 0.7));
        let m = MixtureState::new(vec![c], WeightMatrix::repeated(2, &[1.0]).unwrap(), season(2)).unwrap();
        let s = SpatialPoint::new(0.4, 0.2);
        let a = mixture_density(&s, 3, &m).unwrap();
        let b = crate::model::gaussian::gaussian_pdf2d(&s, &c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_components_collapse() {
        let c = Component::new(SpatialPoint::new(0.0, 2.0), Sym2::<f64>::new(1.0, 0.2, 2.0));
        let m = MixtureState::new(vec![c, c], WeightMatrix::repeated(1, &[0.4, 0.6]).unwrap(), season(1)).unwrap();
        let s = SpatialPoint::new(0.7, 1.1);
        let a = mixture_density(&s, 1, &m).unwrap();
        let b = crate::model::gaussian::gaussian_pdf2d(&s, &c).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    fn random_state(rng: &mut ChaCha8Rng, k: usize, blocks: usize) -> MixtureState<f64> {
        let components = (0..k)
            .map(|_| {
                let a: f64 = rng.random_range(0.3..2.0);
                let d: f64 = rng.random_range(0.3..2.0);
                let r: f64 = rng.random_range(-0.8..0.8);
                Component::new(
                    SpatialPoint::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
                    Sym2::new(a, r * (a * d).sqrt(), d),
                )
            })
            .collect();
        let mut data = Vec::new();
        for _ in 0..blocks {
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            data.extend(raw.iter().map(|v| v / s));
        }
        let season = SeasonalityConfig::new(2 * blocks, blocks, 1).unwrap();
        MixtureState::new(components, WeightMatrix::new(blocks, k, data).unwrap(), season).unwrap()
    }

    #[test]
    fn matches_term_by_term_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_state(&mut rng, 3, 4);
        for _ in 0..10 {
            let s = SpatialPoint::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
            let t = rng.random_range(1..=8);
            let b = (t - 1) % 4;
            let mut want = 0.0;
            for (j, c) in m.components.iter().enumerate() {
                let det = c.sigma.xx * c.sigma.yy - c.sigma.xy * c.sigma.xy;
                let (dx, dy) = (s.x - c.mu.x, s.y - c.mu.y);
                let q = (c.sigma.yy * dx * dx - 2.0 * c.sigma.xy * dx * dy + c.sigma.xx * dy * dy) / det;
                want += m.weights.get(b, j) * (-0.5 * q).exp() / (std::f64::consts::TAU * det.sqrt());
            }
            let got = mixture_density(&s, t, &m).unwrap();
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_and_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_state(&mut rng, 4, 3);
        let p = m.permuted(&[2, 0, 3, 1]);
        for _ in 0..20 {
            let s = SpatialPoint::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
            let t = rng.random_range(1..=3);
            let a = mixture_density(&s, t, &m).unwrap();
            assert_eq!(a, mixture_density(&s, t + 3, &m).unwrap());
            let b = mixture_density(&s, t, &p).unwrap();
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn untruncated_mass_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_state(&mut rng, 3, 2);
        // every component has σ ≤ 1.5 and |μ| ≤ 3: a ±15 box holds 1 - 1e-6 of the mass
        let region = StudyRegion::rectangle(-15.0, -15.0, 15.0, 15.0, 0.5).unwrap();
        for z in normalize_to_region(&m, &region).unwrap() {
            assert!((z - 1.0).abs() < 1e-3, "{z}");
        }
    }

    #[test]
    fn half_plane_holds_half() {
        let m = MixtureState::new(
            vec![Component::standard()],
            WeightMatrix::repeated(1, &[1.0]).unwrap(),
            season(1),
        )
        .unwrap();
        let region = StudyRegion::<f64>::rectangle(-12.0, -12.0, 0.0, 12.0, 0.5).unwrap();
        let z = normalize_to_region(&m, &region).unwrap();
        assert!((z[0] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn matches_finer_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_state(&mut rng, 3, 2);
        let poly = vec![
            SpatialPoint::new(-5.0, -4.0),
            SpatialPoint::new(4.5, -5.5),
            SpatialPoint::new(6.0, 3.0),
            SpatialPoint::new(0.5, 6.5),
            SpatialPoint::new(-4.5, 3.5),
        ];
        let region = StudyRegion::new(poly.clone(), 0.5).unwrap();
        let z = normalize_to_region(&m, &region).unwrap();
        // oracle: 0.05 km columns in x, exact normal CDF along each column's chord
        let h = 0.05;
        let n = Normal::new(0.0, 1.0).unwrap();
        let chord = |x: f64| {
            let mut ys = Vec::new();
            for i in 0..poly.len() {
                let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
                if (a.x - x) * (b.x - x) <= 0.0 && a.x != b.x {
                    ys.push(a.y + (x - a.x) / (b.x - a.x) * (b.y - a.y));
                }
            }
            let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        };
        let (xlo, xhi) = (-5.0f64, 6.0);
        let nx = ((xhi - xlo) / h).round() as usize;
        for b in 0..2 {
            let mut acc = 0.0;
            for ix in 0..nx {
                let x = xlo + (ix as f64 + 0.5) * h;
                let (ylo, yhi) = chord(x);
                for (j, c) in m.components.iter().enumerate() {
                    let (sx, sy) = (c.sigma.xx.sqrt(), c.sigma.yy.sqrt());
                    let r = c.sigma.xy / (sx * sy);
                    let fx = (-(x - c.mu.x).powi(2) / (2.0 * sx * sx)).exp() / (sx * std::f64::consts::TAU.sqrt());
                    let cm = c.mu.y + r * sy / sx * (x - c.mu.x);
                    let cs = sy * (1.0 - r * r).sqrt();
                    let mass = n.cdf((yhi - cm) / cs) - n.cdf((ylo - cm) / cs);
                    acc += m.weights.get(b, j) * fx * mass * h;
                }
            }
            assert!((z[b] - acc).abs() < 1e-4, "block {b}: {} vs {acc}", z[b]);
        }
    }

    #[test]
    fn degenerate_region_rejected() {
        let m = MixtureState::new(
            vec![Component::standard()],
            WeightMatrix::repeated(1, &[1.0]).unwrap(),
            season(1),
        )
        .unwrap();
        let far = StudyRegion::rectangle(100.0, 100.0, 101.0, 101.0, 0.5).unwrap();
        assert!(matches!(normalize_to_region(&m, &far), Err(Error::DegenerateRegion { .. })));
    }
}
