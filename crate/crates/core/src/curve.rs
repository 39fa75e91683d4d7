//! Closed planar polygons and their discrete differential geometry.
//!
//! Curves are stored counter-clockwise, so the inward normal is the tangent
//! rotated by +90 degrees and convex curves have positive curvature.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Smallest node count accepted by the constructor.
pub const MIN_NODES: usize = 3;
/// Smallest node count an evolving or resampled curve may have.
pub const MIN_EVOLVE_NODES: usize = 8;
const MIN_SEGMENT: f64 = 1e-9;

#[inline]
pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
#[cfg(test)]
pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedCurve {
    points: Vec<Point>,
}

impl ClosedCurve {
    /// Validates the polygon and reorders it counter-clockwise if needed.
    /// Node 0 keeps its identity under reordering.
    pub fn new(mut points: Vec<Point>) -> Result<Self> {
        let n = points.len();
        if n < MIN_NODES {
            return Err(Error::InvalidCurve(format!("need at least {MIN_NODES} nodes, got {n}")));
        }
        if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidCurve("non-finite coordinate".into()));
        }
        for i in 0..n {
            let seg = norm(sub(points[(i + 1) % n], points[i]));
            if seg <= MIN_SEGMENT {
                return Err(Error::InvalidCurve(format!("nodes {i} and {} coincide", (i + 1) % n)));
            }
        }
        if signed_area(&points) < 0.0 {
            points[1..].reverse();
        }
        Ok(Self { points })
    }

    /// Regular polygon inscribed in a circle, node 0 on the +x axis.
    pub fn circle(center: Point, radius: f64, n: usize) -> Result<Self> {
        Self::ellipse(center, radius, radius, n)
    }

    /// Ellipse sampled uniformly in the angle parameter.
    pub fn ellipse(center: Point, a: f64, b: f64, n: usize) -> Result<Self> {
        Self::new(
            (0..n)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / n as f64;
                    [center[0] + a * t.cos(), center[1] + b * t.sin()]
                })
                .collect(),
        )
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Coordinates flattened as `[x0, y0, x1, y1, ...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p[0], p[1]]).collect()
    }

    pub fn from_flat(coords: &[f64]) -> Result<Self> {
        if coords.len() % 2 != 0 {
            return Err(Error::InvalidCurve("odd number of coordinates".into()));
        }
        Self::new(coords.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
    }

    pub fn segment_lengths(&self) -> Vec<f64> {
        let n = self.len();
        (0..n).map(|i| norm(sub(self.points[(i + 1) % n], self.points[i]))).collect()
    }

    /// Perimeter of the polygon.
    pub fn length(&self) -> f64 {
        self.segment_lengths().iter().sum()
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.points)
    }

    /// Vertex average.
    pub fn centroid(&self) -> Point {
        let n = self.len() as f64;
        let (sx, sy) = self.points.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
        [sx / n, sy / n]
    }

    pub fn geometry(&self) -> Result<CurveGeometry> {
        CurveGeometry::of(self)
    }

    /// Point at arclength `s` along the polyline, measured from node 0.
    fn point_at(&self, table: &ArclengthTable, s: f64) -> Point {
        let n = self.len();
        let s = s.rem_euclid(table.total);
        // last segment whose start is <= s
        let k = match table.starts.binary_search_by(|v| v.total_cmp(&s)) {
            Ok(k) => k,
            Err(k) => k - 1,
        };
        let a = self.points[k];
        let b = self.points[(k + 1) % n];
        let t = ((s - table.starts[k]) / table.lengths[k]).clamp(0.0, 1.0);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    /// Redistributes nodes at equal arclength intervals along the polyline,
    /// starting from node 0. The node count is `max(8, round(length / spacing))`.
    pub fn resample(&self, target_spacing: f64) -> Result<Self> {
        if !(target_spacing > 0.0 && target_spacing.is_finite()) {
            return Err(Error::InvalidParameter(format!("target spacing must be positive, got {target_spacing}")));
        }
        let table = ArclengthTable::new(self);
        let count = ((table.total / target_spacing).round() as usize).max(MIN_EVOLVE_NODES);
        self.resample_count(&table, count)
    }

    /// Equal-arclength redistribution onto exactly `count` nodes.
    pub fn resample_to_count(&self, count: usize) -> Result<Self> {
        self.resample_count(&ArclengthTable::new(self), count)
    }

    fn resample_count(&self, table: &ArclengthTable, count: usize) -> Result<Self> {
        let step = table.total / count as f64;
        Self::new((0..count).map(|m| self.point_at(table, m as f64 * step)).collect())
    }

    /// Places the same number of nodes at normalized arclength `phi(i / n)`.
    pub fn reparameterize(&self, phi: impl Fn(f64) -> f64) -> Result<Self> {
        self.reparameterize_with_count(phi, self.len())
    }

    /// Like [`reparameterize`](Self::reparameterize) but with `count` output nodes.
    pub fn reparameterize_with_count(&self, phi: impl Fn(f64) -> f64, count: usize) -> Result<Self> {
        if count < MIN_NODES {
            return Err(Error::InvalidParameter(format!("need at least {MIN_NODES} nodes")));
        }
        let params: Vec<f64> = (0..=count).map(|i| phi(i as f64 / count as f64)).collect();
        if params[0].abs() > 1e-12 || (params[count] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("reparameterization must map 0 to 0 and 1 to 1".into()));
        }
        if params.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("reparameterization must be strictly increasing".into()));
        }
        let table = ArclengthTable::new(self);
        Self::new(params[..count].iter().map(|&t| self.point_at(&table, t * table.total)).collect())
    }

    /// Returns the curve with every node moved by `dt * velocity`. Fails if
    /// the moved polygon is degenerate or has turned clockwise.
    pub fn advanced(&self, velocity: &[Point], dt: f64) -> Result<Self> {
        if velocity.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: velocity.len() });
        }
        let points: Vec<Point> =
            self.points.iter().zip(velocity).map(|(p, v)| [p[0] + dt * v[0], p[1] + dt * v[1]]).collect();
        if !(signed_area(&points) > 0.0) {
            return Err(Error::Degenerate("curve turned inside out".into()));
        }
        Self::new(points)
    }
}

fn signed_area(points: &[Point]) -> f64 {
    let n = points.len();
    0.5 * (0..n).map(|i| cross(points[i], points[(i + 1) % n])).sum::<f64>()
}

struct ArclengthTable {
    starts: Vec<f64>,
    lengths: Vec<f64>,
    total: f64,
}

impl ArclengthTable {
    fn new(c: &ClosedCurve) -> Self {
        let lengths = c.segment_lengths();
        let mut starts = Vec::with_capacity(lengths.len());
        let mut acc = 0.0;
        for l in &lengths {
            starts.push(acc);
            acc += l;
        }
        Self { starts, lengths, total: acc }
    }
}

/// Per-node differential quantities of a closed polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveGeometry {
    pub tangents: Vec<Point>,
    /// Unit inward normals.
    pub normals: Vec<Point>,
    /// Menger curvature, positive where the curve turns left.
    pub curvature: Vec<f64>,
    /// Discrete arclength element attached to each node: half the sum of
    /// the two adjacent segment lengths.
    pub node_weights: Vec<f64>,
    pub total_length: f64,
}

impl CurveGeometry {
    pub fn of(c: &ClosedCurve) -> Result<Self> {
        let p = c.points();
        let n = p.len();
        let seg = c.segment_lengths();
        let mut tangents = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        let mut curvature = Vec::with_capacity(n);
        let mut node_weights = Vec::with_capacity(n);
        for i in 0..n {
            let prev = p[(i + n - 1) % n];
            let next = p[(i + 1) % n];
            let chord = sub(next, prev);
            let chord_len = norm(chord);
            if chord_len <= MIN_SEGMENT {
                return Err(Error::Degenerate(format!("neighbors of node {i} coincide")));
            }
            let t = [chord[0] / chord_len, chord[1] / chord_len];
            tangents.push(t);
            normals.push([-t[1], t[0]]);
            let a = sub(p[i], prev);
            let b = sub(next, p[i]);
            let (la, lb) = (seg[(i + n - 1) % n], seg[i]);
            curvature.push(2.0 * cross(a, b) / (la * lb * chord_len));
            node_weights.push(0.5 * (la + lb));
        }
        Ok(Self { tangents, normals, curvature, node_weights, total_length: seg.iter().sum() })
    }

    pub fn min_weight(&self) -> f64 {
        self.node_weights.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_square() -> ClosedCurve {
        ClosedCurve::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
    }

    /// Distance from `q` to the closed polyline `c`.
    fn polyline_distance(c: &ClosedCurve, q: Point) -> f64 {
        let p = c.points();
        let n = p.len();
        (0..n)
            .map(|i| {
                let (a, b) = (p[i], p[(i + 1) % n]);
                let ab = sub(b, a);
                let t = (dot(sub(q, a), ab) / dot(ab, ab)).clamp(0.0, 1.0);
                norm(sub(q, [a[0] + t * ab[0], a[1] + t * ab[1]]))
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Arclength position of `q` along `c`, by projection onto the nearest segment.
    fn arclength_of(c: &ClosedCurve, q: Point) -> f64 {
        let p = c.points();
        let n = p.len();
        let seg = c.segment_lengths();
        let mut best = (f64::INFINITY, 0.0);
        let mut acc = 0.0;
        for i in 0..n {
            let (a, b) = (p[i], p[(i + 1) % n]);
            let ab = sub(b, a);
            let t = (dot(sub(q, a), ab) / dot(ab, ab)).clamp(0.0, 1.0);
            let d = norm(sub(q, [a[0] + t * ab[0], a[1] + t * ab[1]]));
            if d < best.0 {
                best = (d, acc + t * seg[i]);
            }
            acc += seg[i];
        }
        best.1
    }

    #[test]
    fn constructor_validation() {
        assert!(ClosedCurve::new(vec![[0.0, 0.0], [1.0, 0.0]]).is_err());
        assert!(ClosedCurve::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).is_err());
        assert!(ClosedCurve::new(vec![[0.0, 0.0], [f64::NAN, 0.0], [0.0, 1.0]]).is_err());
    }

    #[test]
    fn orientation_is_canonicalized() {
        let cw = vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]];
        let c = ClosedCurve::new(cw).unwrap();
        assert!(c.signed_area() > 0.0);
        assert_eq!(c.points()[0], [0.0, 0.0]);
    }

    #[test]
    fn length_examples() {
        assert_abs_diff_eq!(unit_square().length(), 4.0, epsilon = 1e-15);
        let r = 7.0;
        let c = ClosedCurve::circle([0.0, 0.0], r, 1024).unwrap();
        assert!((c.length() - 2.0 * PI * r).abs() / (2.0 * PI * r) < 1e-4);
        let mut rev = c.points().to_vec();
        rev.reverse();
        let mut flipped = ClosedCurve { points: rev };
        assert_abs_diff_eq!(flipped.length(), c.length(), epsilon = 1e-9);
        flipped = ClosedCurve::new(flipped.into_points()).unwrap();
        assert_abs_diff_eq!(flipped.length(), c.length(), epsilon = 1e-9);
    }

    #[test]
    fn circle_geometry() {
        let (center, r) = ([3.0, -2.0], 25.0);
        let c = ClosedCurve::circle(center, r, 256).unwrap();
        let g = c.geometry().unwrap();
        for k in &g.curvature {
            assert!((k - 1.0 / r).abs() * r < 1e-3);
        }
        assert!((g.total_length - 2.0 * PI * r).abs() / (2.0 * PI * r) < 1e-3);
        for (i, nrm) in g.normals.iter().enumerate() {
            assert!(dot(*nrm, sub(center, c.points()[i])) > 0.0);
            assert_abs_diff_eq!(norm(*nrm), 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(norm(g.tangents[i]), 1.0, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(g.node_weights.iter().sum::<f64>(), g.total_length, epsilon = 1e-10);
    }

    #[test]
    fn circle_curvature_error_is_second_order() {
        for &n in &[32usize, 64, 128, 256] {
            let r = 10.0;
            let c = ClosedCurve::circle([0.0, 0.0], r, n).unwrap();
            let spacing = c.length() / n as f64;
            let err = c.geometry().unwrap().curvature.iter().map(|k| (k - 1.0 / r).abs()).fold(0.0, f64::max);
            assert!(err <= 10.0 * (spacing / r).powi(2) / r + 1e-14, "n={n} err={err}");
        }
    }

    #[test]
    fn collinear_nodes_have_zero_curvature() {
        // square with extra nodes sampled along each side
        let mut pts = Vec::new();
        for s in 0..4 {
            for k in 0..4 {
                let t = k as f64 / 4.0;
                pts.push(match s {
                    0 => [t, 0.0],
                    1 => [1.0, t],
                    2 => [1.0 - t, 1.0],
                    _ => [0.0, 1.0 - t],
                });
            }
        }
        let g = ClosedCurve::new(pts).unwrap().geometry().unwrap();
        for (i, k) in g.curvature.iter().enumerate() {
            if i % 4 != 0 {
                assert_abs_diff_eq!(*k, 0.0, epsilon = 1e-12);
            } else {
                assert!(*k > 0.0);
            }
        }
    }

    #[test]
    fn resample_dense_circle() {
        let c = ClosedCurve::circle([60.0, 60.0], 50.0, 1000).unwrap();
        let out = c.resample(2.0).unwrap();
        assert_eq!(out.len(), (c.length() / 2.0).round() as usize);
        assert_eq!(out.len(), 157);
        // positions along the input polyline are uniform (arclength table oracle)
        let pos: Vec<f64> = out.points().iter().map(|q| arclength_of(&c, *q)).collect();
        let step = c.length() / out.len() as f64;
        for (m, s) in pos.iter().enumerate() {
            assert!((s - m as f64 * step).abs() < 1e-9, "node {m}: {s}");
        }
        let seg = out.segment_lengths();
        let (lo, hi) = seg.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &s| (a.min(s), b.max(s)));
        assert!((hi - lo) / hi < 1e-4);
        assert!((out.length() - c.length()).abs() / c.length() <= 1e-3);
    }

    #[test]
    fn resample_is_fixed_point_on_uniform_curve() {
        let c = ClosedCurve::circle([0.0, 0.0], 20.0, 64).unwrap();
        let spacing = c.length() / 64.0;
        let out = c.resample(spacing).unwrap();
        assert_eq!(out.len(), 64);
        for (a, b) in c.points().iter().zip(out.points()) {
            assert!(norm(sub(*a, *b)) < 1e-9);
        }
    }

    #[test]
    fn resample_keeps_minimum_node_count() {
        let c = ClosedCurve::circle([0.0, 0.0], 1.0, 40).unwrap();
        assert_eq!(c.resample(100.0).unwrap().len(), MIN_EVOLVE_NODES);
        assert!(c.resample(0.0).is_err());
    }

    fn skew(t: f64) -> f64 {
        t + 0.1 * (2.0 * PI * t).sin() / (2.0 * PI)
    }

    #[test]
    fn reparameterize_identity_and_trace() {
        // nodes already at uniform arclength stay put
        let c = ClosedCurve::circle([3.0, -1.0], 30.0, 200).unwrap();
        let same = c.reparameterize(|t| t).unwrap();
        for (a, b) in c.points().iter().zip(same.points()) {
            assert!(norm(sub(*a, *b)) < 1e-12);
        }
        let c = ClosedCurve::ellipse([0.0, 0.0], 30.0, 12.0, 200).unwrap();
        let moved = c.reparameterize(skew).unwrap();
        for q in moved.points() {
            assert!(polyline_distance(&c, *q) <= 1e-9);
        }
    }

    #[test]
    fn reparameterize_rejects_invalid_maps() {
        let c = ClosedCurve::circle([0.0, 0.0], 5.0, 32).unwrap();
        assert!(c.reparameterize(|t| 1.0 - t).is_err());
        assert!(c.reparameterize(|t| t * t * 0.5).is_err());
        assert!(c.reparameterize(|t| t + 0.3 * (2.0 * PI * t).sin()).is_err());
    }

    #[test]
    fn reparameterize_preserves_length_of_dense_curve() {
        let c = ClosedCurve::circle([0.0, 0.0], 40.0, 4096).unwrap();
        let out = c.reparameterize(skew).unwrap();
        assert!((out.length() - c.length()).abs() / c.length() <= 1e-6);
    }

    #[test]
    fn geometry_survives_reparameterization() {
        let r = 30.0;
        let dense = ClosedCurve::circle([0.0, 0.0], r, 8192).unwrap();
        let a = dense.resample_to_count(256).unwrap();
        let b = dense.reparameterize(skew).unwrap().resample_to_count(256).unwrap();
        let ga = a.geometry().unwrap();
        let gb = b.geometry().unwrap();
        for i in 0..256 {
            assert!((ga.curvature[i] - gb.curvature[i]).abs() * r < 1e-2);
            assert!(norm(sub(ga.normals[i], gb.normals[i])) < 1e-2);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn node_weights_sum_to_length(
                a in 5.0f64..50.0, b in 5.0f64..50.0, n in 8usize..300, wobble in 0.0f64..0.3,
            ) {
                let pts = (0..n).map(|i| {
                    let t = 2.0 * PI * i as f64 / n as f64;
                    let r = 1.0 + wobble * (3.0 * t).sin();
                    [a * r * t.cos(), b * r * t.sin()]
                }).collect();
                let c = ClosedCurve::new(pts).unwrap();
                let g = c.geometry().unwrap();
                prop_assert!((g.node_weights.iter().sum::<f64>() - g.total_length).abs() < 1e-10);
                prop_assert!(g.node_weights.iter().all(|w| *w > 0.0));
            }
        }
    }
}
