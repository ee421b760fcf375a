//! Strip quadrature of Gaussian components over the study region.
//!
//! The region is sliced perpendicular to an outer axis. Along each slice the
//! component's conditional normal is integrated exactly over the chord
//! intervals; the outer axis uses 5-point Gauss–Legendre on sub-intervals that
//! break at every vertex coordinate, so the integrand is smooth on each piece.

use libm::erfc;

use super::gaussian::Component;
use super::geometry::{Axis, StudyRegion};
use crate::scalar::Real;

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// Standard normal probability of `(lo, hi)`, accurate in both tails.
pub fn normal_interval(lo: f64, hi: f64) -> f64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    if lo >= 0.0 {
        0.5 * (erfc(lo * s) - erfc(hi * s))
    } else if hi <= 0.0 {
        0.5 * (erfc(-hi * s) - erfc(-lo * s))
    } else {
        1.0 - 0.5 * (erfc(-lo * s) + erfc(hi * s))
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

#[derive(Clone, Copy, Debug)]
struct Slices {
    // outer marginal and inner conditional of one component
    mu_o: f64,
    sd_o: f64,
    mu_i: f64,
    slope: f64,
    sd_i: f64,
}

impl Slices {
    fn new<T: Real>(c: &Component<T>, outer: Axis) -> Self {
        let (so, si, soi) = match outer {
            Axis::X => (c.sigma.xx, c.sigma.yy, c.sigma.xy),
            Axis::Y => (c.sigma.yy, c.sigma.xx, c.sigma.xy),
        };
        let (so, si, soi) = (so.as_f64(), si.as_f64(), soi.as_f64());
        Self {
            mu_o: c.mu.coord(outer).as_f64(),
            sd_o: so.sqrt(),
            mu_i: c.mu.coord(outer.other()).as_f64(),
            slope: soi / so,
            sd_i: (si - soi * soi / so).max(0.0).sqrt(),
        }
    }

    fn density(&self, u: f64, chords: &[(f64, f64)]) -> f64 {
        let z = (u - self.mu_o) / self.sd_o;
        let fo = (-0.5 * z * z).exp() / (self.sd_o * std::f64::consts::TAU.sqrt());
        if fo == 0.0 {
            return 0.0;
        }
        let m = self.mu_i + self.slope * (u - self.mu_o);
        let p: f64 = chords.iter().map(|&(lo, hi)| normal_interval((lo - m) / self.sd_i, (hi - m) / self.sd_i)).sum();
        fo * p
    }
}

/// Outer-axis partition of a region with cached chord intervals at every node.
#[derive(Clone, Debug)]
pub struct StripQuadrature {
    outer: Axis,
    breaks: Vec<f64>,
    // per sub-interval: (node coordinate, weight, chords)
    nodes: Vec<Vec<(f64, f64, Vec<(f64, f64)>)>>,
    polygon: Vec<(f64, f64)>,
}

impl StripQuadrature {
    /// Slices perpendicular to `outer`; sub-intervals are at most the region's grid resolution wide.
    pub fn new<T: Real>(region: &StudyRegion<T>, outer: Axis) -> Self {
        let region: StudyRegion<f64> = StudyRegion::new(
            region.polygon().iter().map(|p| p.cast()).collect(),
            region.grid_resolution().as_f64(),
        )
        .expect("validated region");
        let h = region.grid_resolution();
        let mut vs: Vec<f64> = region.polygon().iter().map(|p| p.coord(outer)).collect();
        vs.sort_by(f64::total_cmp);
        vs.dedup();
        let mut breaks = vec![vs[0]];
        for w in vs.windows(2) {
            let n = ((w[1] - w[0]) / h).ceil().max(1.0) as usize;
            for i in 1..=n {
                breaks.push(if i == n { w[1] } else { w[0] + (w[1] - w[0]) * i as f64 / n as f64 });
            }
        }
        let nodes = breaks
            .windows(2)
            .map(|w| {
                gl_nodes(w[0], w[1]).map(|(u, wt)| (u, wt, region.scanline(outer.other(), u))).to_vec()
            })
            .collect();
        let polygon = region.polygon().iter().map(|p| (p.x, p.y)).collect();
        Self { outer, breaks, nodes, polygon }
    }

    pub fn outer(&self) -> Axis {
        self.outer
    }

    /// Sub-interval edges along the outer axis.
    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    /// Probability mass of the component inside the region.
    pub fn mass<T: Real>(&self, c: &Component<T>) -> f64 {
        let s = Slices::new(c, self.outer);
        self.nodes.iter().flatten().map(|(u, w, ch)| w * s.density(*u, ch)).sum()
    }

    /// Mass inside the region below each break: `out[i]` covers `outer < breaks[i]`.
    pub fn cumulative_masses<T: Real>(&self, c: &Component<T>) -> Vec<f64> {
        let s = Slices::new(c, self.outer);
        let mut out = Vec::with_capacity(self.breaks.len());
        let mut acc = 0.0;
        out.push(0.0);
        for seg in &self.nodes {
            acc += seg.iter().map(|(u, w, ch)| w * s.density(*u, ch)).sum::<f64>();
            out.push(acc);
        }
        out
    }

    /// Mass inside the region with `outer ≤ v`, given [`Self::cumulative_masses`].
    pub fn mass_below<T: Real>(&self, c: &Component<T>, cumulative: &[f64], v: f64) -> f64 {
        let n = self.breaks.len();
        if v <= self.breaks[0] {
            return 0.0;
        }
        if v >= self.breaks[n - 1] {
            return cumulative[n - 1];
        }
        // index of the sub-interval containing v
        let i = self.breaks.partition_point(|&b| b <= v) - 1;
        let s = Slices::new(c, self.outer);
        let partial: f64 = gl_nodes(self.breaks[i], v)
            .iter()
            .map(|&(u, w)| w * s.density(u, &self.chords(u)))
            .sum();
        cumulative[i] + partial
    }

    fn chords(&self, u: f64) -> Vec<(f64, f64)> {
        let inner = self.outer.other();
        let n = self.polygon.len();
        let pick = |p: (f64, f64), a: Axis| if a == Axis::X { p.0 } else { p.1 };
        let mut hits = Vec::new();
        for i in 0..n {
            let (a, b) = (self.polygon[i], self.polygon[(i + 1) % n]);
            let (al, bl) = (pick(a, self.outer), pick(b, self.outer));
            if (al <= u) != (bl <= u) {
                let t = (u - al) / (bl - al);
                hits.push(pick(a, inner) + t * (pick(b, inner) - pick(a, inner)));
            }
        }
        hits.sort_by(f64::total_cmp);
        hits.chunks_exact(2).map(|c| (c[0], c[1])).collect()
    }
}

fn gl_nodes(a: f64, b: f64) -> [(f64, f64); 5] {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    std::array::from_fn(|k| (mid + half * GL_NODES[k], half * GL_WEIGHTS[k]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SpatialPoint, Sym2};

    #[test]
    fn normal_interval_tails() {
        assert!((normal_interval(-1.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-15);
        // upper tail mass of (8, ∞) is 6.22096e-16
        let t = normal_interval(8.0, f64::INFINITY);
        assert!((t / 6.220_960_574_271_785e-16 - 1.0).abs() < 1e-10);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn rectangle_mass_factorizes() {
        // axis-aligned covariance: mass = product of 1-D interval probabilities
        let c = Component::new(SpatialPoint::new(0.3, -0.2), Sym2::diag(0.49, 1.44));
        let r = StudyRegion::rectangle(-1.0, -2.0, 2.0, 1.0, 0.5).unwrap();
        let want = normal_interval((-1.0 - 0.3) / 0.7, (2.0 - 0.3) / 0.7) * normal_interval(-1.8 / 1.2, 1.2 / 1.2);
        for axis in [Axis::X, Axis::Y] {
            let q = StripQuadrature::new(&r, axis);
            assert!((q.mass(&c) - want).abs() < 1e-13);
        }
    }

    #[test]
    fn cumulative_is_monotone_and_consistent() {
        let c = Component::new(SpatialPoint::new(1.0, 1.0), Sym2::new(1.0, 0.6, 2.0));
        let r = StudyRegion::new(
            vec![SpatialPoint::new(-2.0, -1.0), SpatialPoint::new(4.0, 0.0), SpatialPoint::new(1.0, 5.0)],
            0.5,
        )
        .unwrap();
        let q = StripQuadrature::new(&r, Axis::X);
        let cum = q.cumulative_masses(&c);
        assert!(cum.windows(2).all(|w| w[1] >= w[0]));
        assert!((cum[cum.len() - 1] - q.mass(&c)).abs() < 1e-14);
        for (i, &b) in q.breaks().iter().enumerate() {
            assert!((q.mass_below(&c, &cum, b) - cum[i]).abs() < 1e-14);
        }
        // both slicing directions agree
        let qy = StripQuadrature::new(&r, Axis::Y);
        assert!((qy.mass(&c) - q.mass(&c)).abs() < 1e-7);
    }
}
