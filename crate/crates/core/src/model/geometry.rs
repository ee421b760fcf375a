//! Planar points, the study-region polygon, and its integration grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A location in projected planar coordinates (km).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpatialPoint<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> SpatialPoint<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn coord(&self, axis: Axis) -> T {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
        }
    }

    pub fn as_array(&self) -> [T; 2] {
        [self.x, self.y]
    }

    pub fn sub(&self, other: &Self) -> [T; 2] {
        [self.x - other.x, self.y - other.y]
    }

    pub fn l1_distance(&self, other: &Self) -> T {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    pub fn cast<U: Real>(&self) -> SpatialPoint<U> {
        SpatialPoint::new(U::lit(self.x.as_f64()), U::lit(self.y.as_f64()))
    }
}

/// Coordinate axis of the plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn other(self) -> Axis {
        match self {
            Axis::X => Axis::Y,
            Axis::Y => Axis::X,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

/// Signed shoelace area (positive for counter-clockwise rings).
pub fn signed_area<T: Real>(ring: &[SpatialPoint<T>]) -> T {
    let n = ring.len();
    if n < 3 {
        return T::zero();
    }
    let mut acc = T::zero();
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        acc = acc + (a.x * b.y - b.x * a.y);
    }
    acc * T::lit(0.5)
}

/// Area centroid of a ring; `None` for zero-area rings.
pub fn centroid<T: Real>(ring: &[SpatialPoint<T>]) -> Option<SpatialPoint<T>> {
    let a = signed_area(ring);
    if a == T::zero() {
        return None;
    }
    let n = ring.len();
    let (mut cx, mut cy) = (T::zero(), T::zero());
    for i in 0..n {
        let p = ring[i];
        let q = ring[(i + 1) % n];
        let cross = p.x * q.y - q.x * p.y;
        cx = cx + (p.x + q.x) * cross;
        cy = cy + (p.y + q.y) * cross;
    }
    let six_a = a * T::lit(6.0);
    Some(SpatialPoint::new(cx / six_a, cy / six_a))
}

/// Clips `ring` to the half-plane `nx·x + ny·y ≤ c` (Sutherland–Hodgman step).
pub fn clip_half_plane<T: Real>(ring: &[SpatialPoint<T>], nx: T, ny: T, c: T) -> Vec<SpatialPoint<T>> {
    let n = ring.len();
    let mut out = Vec::with_capacity(n + 2);
    if n == 0 {
        return out;
    }
    let side = |p: &SpatialPoint<T>| nx * p.x + ny * p.y - c;
    for i in 0..n {
        let cur = ring[i];
        let next = ring[(i + 1) % n];
        let sc = side(&cur);
        let sn = side(&next);
        if sc <= T::zero() {
            out.push(cur);
        }
        if (sc < T::zero() && sn > T::zero()) || (sc > T::zero() && sn < T::zero()) {
            let t = sc / (sc - sn);
            out.push(SpatialPoint::new(cur.x + t * (next.x - cur.x), cur.y + t * (next.y - cur.y)));
        }
    }
    out
}

/// Clips a ring to the axis-aligned box `[x0, x1] × [y0, y1]`.
pub fn clip_box<T: Real>(ring: &[SpatialPoint<T>], x0: T, y0: T, x1: T, y1: T) -> Vec<SpatialPoint<T>> {
    let one = T::one();
    let r = clip_half_plane(ring, -one, T::zero(), -x0);
    let r = clip_half_plane(&r, one, T::zero(), x1);
    let r = clip_half_plane(&r, T::zero(), -one, -y0);
    clip_half_plane(&r, T::zero(), one, y1)
}

/// Clips a ring to the L1 ball `|x - cx| + |y - cy| ≤ radius`.
pub fn clip_diamond<T: Real>(ring: &[SpatialPoint<T>], center: SpatialPoint<T>, radius: T) -> Vec<SpatialPoint<T>> {
    let one = T::one();
    let mut r = ring.to_vec();
    for (sx, sy) in [(one, one), (-one, one), (-one, -one), (one, -one)] {
        let c = radius + sx * center.x + sy * center.y;
        r = clip_half_plane(&r, sx, sy, c);
        if r.is_empty() {
            break;
        }
    }
    r
}

fn segments_properly_intersect<T: Real>(
    a: SpatialPoint<T>,
    b: SpatialPoint<T>,
    c: SpatialPoint<T>,
    d: SpatialPoint<T>,
) -> bool {
    let orient = |p: SpatialPoint<T>, q: SpatialPoint<T>, r: SpatialPoint<T>| {
        (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x)
    };
    let on_segment = |p: SpatialPoint<T>, q: SpatialPoint<T>, r: SpatialPoint<T>| {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    let z = T::zero();
    if ((o1 > z && o2 < z) || (o1 < z && o2 > z)) && ((o3 > z && o4 < z) || (o3 < z && o4 > z)) {
        return true;
    }
    (o1 == z && on_segment(a, b, c))
        || (o2 == z && on_segment(a, b, d))
        || (o3 == z && on_segment(c, d, a))
        || (o4 == z && on_segment(c, d, b))
}

/// Simple polygon plus the resolution of the grid used to integrate over it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRegion<T> {
    polygon: Vec<SpatialPoint<T>>,
    grid_resolution: T,
}

impl<T: Real> StudyRegion<T> {
    /// Validates the ring: at least three finite vertices, no self-intersection,
    /// positive area. A repeated closing vertex is dropped.
    pub fn new(mut polygon: Vec<SpatialPoint<T>>, grid_resolution: T) -> Result<Self> {
        if polygon.len() > 1 && polygon.first() == polygon.last() {
            polygon.pop();
        }
        if polygon.len() < 3 {
            return Err(Error::Input("region polygon needs at least 3 vertices".into()));
        }
        if !(grid_resolution > T::zero()) || !grid_resolution.is_finite() {
            return Err(Error::Input("grid resolution must be positive".into()));
        }
        if polygon.iter().any(|p| !p.is_finite()) {
            return Err(Error::Input("region polygon has non-finite vertices".into()));
        }
        let n = polygon.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_properly_intersect(polygon[i], polygon[(i + 1) % n], polygon[j], polygon[(j + 1) % n]) {
                    return Err(Error::Input(format!("region polygon self-intersects at edges {i} and {j}")));
                }
            }
        }
        if signed_area(&polygon).abs() <= T::zero() {
            return Err(Error::Input("region polygon has zero area".into()));
        }
        Ok(Self { polygon, grid_resolution })
    }

    /// Axis-aligned rectangle region.
    pub fn rectangle(x0: T, y0: T, x1: T, y1: T, grid_resolution: T) -> Result<Self> {
        Self::new(
            vec![
                SpatialPoint::new(x0, y0),
                SpatialPoint::new(x1, y0),
                SpatialPoint::new(x1, y1),
                SpatialPoint::new(x0, y1),
            ],
            grid_resolution,
        )
    }

    pub fn polygon(&self) -> &[SpatialPoint<T>] {
        &self.polygon
    }

    pub fn grid_resolution(&self) -> T {
        self.grid_resolution
    }

    pub fn area(&self) -> T {
        signed_area(&self.polygon).abs()
    }

    /// `(min, max)` corners of the bounding box.
    pub fn bounds(&self) -> (SpatialPoint<T>, SpatialPoint<T>) {
        let mut lo = self.polygon[0];
        let mut hi = self.polygon[0];
        for p in &self.polygon[1..] {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    pub fn contains(&self, s: &SpatialPoint<T>) -> bool {
        point_in_polygon(s, self)
    }

    /// Intervals of `axis` coordinate where the line `other-axis = level`
    /// lies inside the polygon, sorted and disjoint.
    pub fn scanline(&self, axis: Axis, level: T) -> Vec<(T, T)> {
        let n = self.polygon.len();
        let mut hits = Vec::new();
        for i in 0..n {
            let a = self.polygon[i];
            let b = self.polygon[(i + 1) % n];
            let (a_along, a_level) = (a.coord(axis), a.coord(axis.other()));
            let (b_along, b_level) = (b.coord(axis), b.coord(axis.other()));
            // half-open rule: each crossing counted once
            if (a_level <= level) != (b_level <= level) {
                let t = (level - a_level) / (b_level - a_level);
                hits.push(a_along + t * (b_along - a_along));
            }
        }
        hits.sort_by(|p, q| p.partial_cmp(q).unwrap_or(std::cmp::Ordering::Equal));
        hits.chunks_exact(2).map(|c| (c[0], c[1])).collect()
    }

    /// Builds the integration nodes: every grid cell clipped to the polygon,
    /// represented by the centroid and area of the clipped piece.
    pub fn integration_grid(&self) -> IntegrationGrid<T> {
        IntegrationGrid::new(self)
    }
}

/// Point-in-polygon test; points on the boundary count as inside.
pub fn point_in_polygon<T: Real>(s: &SpatialPoint<T>, region: &StudyRegion<T>) -> bool {
    let poly = &region.polygon;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let cross = (b.x - a.x) * (s.y - a.y) - (b.y - a.y) * (s.x - a.x);
        if cross == T::zero()
            && s.x >= a.x.min(b.x)
            && s.x <= a.x.max(b.x)
            && s.y >= a.y.min(b.y)
            && s.y <= a.y.max(b.y)
        {
            return true;
        }
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let a = poly[i];
        let b = poly[j];
        if (a.y > s.y) != (b.y > s.y) {
            let x_cross = (b.x - a.x) * (s.y - a.y) / (b.y - a.y) + a.x;
            if s.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// One quadrature node: a grid cell intersected with the region.
#[derive(Clone, Debug)]
pub struct IntegrationNode<T> {
    pub ix: usize,
    pub iy: usize,
    pub centroid: SpatialPoint<T>,
    pub area: T,
    /// Clipped piece; `None` when the whole cell lies inside the region.
    pub piece: Option<Vec<SpatialPoint<T>>>,
}

/// Quadrature over a [`StudyRegion`] built from its grid cells.
#[derive(Clone, Debug)]
pub struct IntegrationGrid<T> {
    pub origin: SpatialPoint<T>,
    pub cell: T,
    pub nx: usize,
    pub ny: usize,
    pub nodes: Vec<IntegrationNode<T>>,
}

impl<T: Real> IntegrationGrid<T> {
    fn new(region: &StudyRegion<T>) -> Self {
        let h = region.grid_resolution;
        let (lo, hi) = region.bounds();
        let x0 = (lo.x / h).floor() * h;
        let y0 = (lo.y / h).floor() * h;
        let nx = ((hi.x - x0) / h).ceil().to_usize().unwrap_or(0).max(1);
        let ny = ((hi.y - y0) / h).ceil().to_usize().unwrap_or(0).max(1);
        let full_area = h * h;
        let tol = full_area * T::lit(1e-9);
        let mut nodes = Vec::new();
        for iy in 0..ny {
            for ix in 0..nx {
                let cx0 = x0 + T::from_usize(ix).unwrap() * h;
                let cy0 = y0 + T::from_usize(iy).unwrap() * h;
                let piece = clip_box(region.polygon(), cx0, cy0, cx0 + h, cy0 + h);
                let area = signed_area(&piece).abs();
                if area <= tol {
                    continue;
                }
                let half = T::lit(0.5);
                if (full_area - area).abs() <= tol {
                    nodes.push(IntegrationNode {
                        ix,
                        iy,
                        centroid: SpatialPoint::new(cx0 + h * half, cy0 + h * half),
                        area: full_area,
                        piece: None,
                    });
                } else {
                    let c = centroid(&piece).unwrap_or(SpatialPoint::new(cx0 + h * half, cy0 + h * half));
                    nodes.push(IntegrationNode { ix, iy, centroid: c, area, piece: Some(piece) });
                }
            }
        }
        Self { origin: SpatialPoint::new(x0, y0), cell: h, nx, ny, nodes }
    }

    /// Polygon of the node: the clipped piece or the full cell square.
    pub fn node_polygon(&self, node: &IntegrationNode<T>) -> Vec<SpatialPoint<T>> {
        match &node.piece {
            Some(p) => p.clone(),
            None => {
                let x0 = self.origin.x + T::from_usize(node.ix).unwrap() * self.cell;
                let y0 = self.origin.y + T::from_usize(node.iy).unwrap() * self.cell;
                let h = self.cell;
                vec![
                    SpatialPoint::new(x0, y0),
                    SpatialPoint::new(x0 + h, y0),
                    SpatialPoint::new(x0 + h, y0 + h),
                    SpatialPoint::new(x0, y0 + h),
                ]
            }
        }
    }

    /// `Σ f(centroid) · area` over all nodes.
    pub fn integrate<F: FnMut(&SpatialPoint<T>) -> T>(&self, mut f: F) -> T {
        self.nodes.iter().fold(T::zero(), |acc, n| acc + f(&n.centroid) * n.area)
    }

    pub fn total_area(&self) -> T {
        self.nodes.iter().fold(T::zero(), |acc, n| acc + n.area)
    }
}
