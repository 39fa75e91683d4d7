//! Scalar and vector fields on a regular 2D grid, with the finite-difference
//! operators shared by every PDE module.
//!
//! Storage is row-major: pixel `(i, j)` (column `i`, row `j`) lives at
//! `values[j * nx + i]`, and sits at physical position `x = i * hx`,
//! `y = j * hy`. Every stencil treats the boundary as Neumann by replicating
//! edge pixels.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
}

impl GridSpec {
    /// Unit-spacing grid.
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        Self::with_spacing(nx, ny, 1.0, 1.0)
    }

    pub fn with_spacing(nx: usize, ny: usize, hx: f64, hy: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3x3 pixels, got {nx}x{ny}")));
        }
        if !(hx > 0.0 && hx.is_finite() && hy > 0.0 && hy.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got ({hx}, {hy})")));
        }
        Ok(Self { nx, ny, hx, hy })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn min_spacing(&self) -> f64 {
        self.hx.min(self.hy)
    }

    /// Physical extent `((nx - 1) hx, (ny - 1) hy)`.
    pub fn extent(&self) -> (f64, f64) {
        ((self.nx - 1) as f64 * self.hx, (self.ny - 1) as f64 * self.hy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::LengthMismatch { expected: spec.len(), got: values.len() });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(Self { spec, values })
    }

    pub fn constant(spec: GridSpec, value: f64) -> Self {
        assert!(value.is_finite());
        Self { spec, values: vec![value; spec.len()] }
    }

    /// Builds a field by evaluating `f(x, y)` at every pixel's physical position.
    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(spec.len());
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                values.push(f(spec.x(i), spec.y(j)));
            }
        }
        Self::new(spec, values)
    }

    /// Internal constructor for operator outputs whose finiteness follows from finite inputs.
    pub(crate) fn from_raw(spec: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        Self { spec, values }
    }

    #[inline]
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.index(i, j)]
    }

    /// Value with indices clamped into the grid (edge replication).
    #[inline]
    pub fn get_clamped(&self, i: isize, j: isize) -> f64 {
        let i = i.clamp(0, self.spec.nx as isize - 1) as usize;
        let j = j.clamp(0, self.spec.ny as isize - 1) as usize;
        self.get(i, j)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.spec, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub u: ScalarField,
    pub v: ScalarField,
}

impl VectorField {
    pub fn new(u: ScalarField, v: ScalarField) -> Result<Self> {
        if u.spec != v.spec {
            return Err(Error::SpecMismatch);
        }
        Ok(Self { u, v })
    }

    #[inline]
    pub fn spec(&self) -> &GridSpec {
        self.u.spec()
    }

    /// Pointwise Euclidean norm.
    pub fn norm(&self) -> ScalarField {
        let values = self
            .u
            .values()
            .iter()
            .zip(self.v.values())
            .map(|(a, b)| a.hypot(*b))
            .collect();
        ScalarField::from_raw(*self.spec(), values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffScheme {
    Central,
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceScheme {
    Central,
    /// Backward differences, to be paired with a forward-difference gradient.
    UpwindPair,
}

#[derive(Debug, Clone, Copy)]
enum Axis {
    X,
    Y,
}

/// Difference quotient along one axis with replicated edges.
fn axis_diff(f: &ScalarField, axis: Axis, scheme: DiffScheme) -> Vec<f64> {
    let spec = *f.spec();
    let (n, h) = match axis {
        Axis::X => (spec.nx, spec.hx),
        Axis::Y => (spec.ny, spec.hy),
    };
    let at = |i: usize, j: usize, k: usize| match axis {
        Axis::X => f.get(k, j),
        Axis::Y => f.get(i, k),
    };
    let mut out = Vec::with_capacity(spec.len());
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let k = match axis {
                Axis::X => i,
                Axis::Y => j,
            };
            let next = at(i, j, (k + 1).min(n - 1));
            let prev = at(i, j, k.saturating_sub(1));
            let here = at(i, j, k);
            out.push(match scheme {
                DiffScheme::Central => (next - prev) / (2.0 * h),
                DiffScheme::Forward => (next - here) / h,
                DiffScheme::Backward => (here - prev) / h,
            });
        }
    }
    out
}

/// Gradient by difference quotients; edges are replicated.
pub fn gradient(f: &ScalarField, scheme: DiffScheme) -> VectorField {
    let spec = *f.spec();
    VectorField {
        u: ScalarField::from_raw(spec, axis_diff(f, Axis::X, scheme)),
        v: ScalarField::from_raw(spec, axis_diff(f, Axis::Y, scheme)),
    }
}

/// `du/dx + dv/dy` with replicated edges, so constant vector fields have zero
/// divergence everywhere.
pub fn divergence(w: &VectorField, scheme: DivergenceScheme) -> ScalarField {
    let diff = match scheme {
        DivergenceScheme::Central => DiffScheme::Central,
        DivergenceScheme::UpwindPair => DiffScheme::Backward,
    };
    let du = axis_diff(&w.u, Axis::X, diff);
    let dv = axis_diff(&w.v, Axis::Y, diff);
    ScalarField::from_raw(*w.spec(), du.iter().zip(&dv).map(|(a, b)| a + b).collect())
}

/// Negative adjoint of the matching gradient operator: for every pair of
/// fields, `sum(conservative_divergence(w) * f) == -sum(w . gradient(f))`.
///
/// Agrees with [`divergence`] away from the boundary. At the boundary the
/// normal flux is reflected antisymmetrically, which is what makes discrete
/// energies built on [`gradient`] have exact first variations written with
/// this operator.
pub fn conservative_divergence(w: &VectorField, scheme: DivergenceScheme) -> ScalarField {
    let spec = *w.spec();
    let mut out = vec![0.0; spec.len()];
    let (nx, ny) = (spec.nx, spec.ny);
    for j in 0..ny {
        for i in 0..nx {
            let k = spec.index(i, j);
            let dx = adjoint_1d(scheme, i, nx, spec.hx, |m| w.u.get(m, j));
            let dy = adjoint_1d(scheme, j, ny, spec.hy, |m| w.v.get(i, m));
            out[k] = dx + dy;
        }
    }
    ScalarField::from_raw(spec, out)
}

/// One axis of `-D^T f` where `D` is the replicated-edge difference operator.
fn adjoint_1d(scheme: DivergenceScheme, k: usize, n: usize, h: f64, f: impl Fn(usize) -> f64) -> f64 {
    match scheme {
        DivergenceScheme::Central => {
            // interior rows of D contribute +-1/2h; the replicated edge rows put
            // an extra -1/2h at (0,0) and +1/2h at (n-1,n-1)
            let mut s = 0.0;
            if k + 1 < n {
                s += f(k + 1);
            }
            if k >= 1 {
                s -= f(k - 1);
            }
            if k == 0 {
                s += f(0);
            }
            if k == n - 1 {
                s -= f(n - 1);
            }
            s / (2.0 * h)
        }
        DivergenceScheme::UpwindPair => {
            // forward differences vanish on the last row, so its flux never enters
            let here = if k + 1 < n { f(k) } else { 0.0 };
            let prev = if k >= 1 { f(k - 1) } else { 0.0 };
            (here - prev) / h
        }
    }
}

/// Gradient magnitude built from the larger one-sided difference on each axis.
///
/// Unlike the central or forward magnitude it stays near 1 at the ridges and
/// extrema of a distance function, where symmetric stencils can cancel to zero.
pub fn one_sided_max_norm(f: &ScalarField) -> ScalarField {
    let fx = axis_diff(f, Axis::X, DiffScheme::Forward);
    let bx = axis_diff(f, Axis::X, DiffScheme::Backward);
    let fy = axis_diff(f, Axis::Y, DiffScheme::Forward);
    let by = axis_diff(f, Axis::Y, DiffScheme::Backward);
    let values = (0..f.spec().len())
        .map(|k| {
            let gx = fx[k].abs().max(bx[k].abs());
            let gy = fy[k].abs().max(by[k].abs());
            gx.hypot(gy)
        })
        .collect();
    ScalarField::from_raw(*f.spec(), values)
}

/// Normalized 1D Gaussian kernel with radius `ceil(3 sigma)` (in samples).
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian blur with replicated edges. `sigma` is in pixels.
pub fn gaussian_smooth(f: &ScalarField, sigma: f64) -> Result<ScalarField> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(f.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let spec = *f.spec();

    let mut tmp = vec![0.0; spec.len()];
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let mut acc = 0.0;
            for (t, w) in kernel.iter().enumerate() {
                acc += w * f.get_clamped(i as isize + t as isize - r, j as isize);
            }
            tmp[spec.index(i, j)] = acc;
        }
    }
    let tmp = ScalarField::from_raw(spec, tmp);
    let mut out = vec![0.0; spec.len()];
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let mut acc = 0.0;
            for (t, w) in kernel.iter().enumerate() {
                acc += w * tmp.get_clamped(i as isize, j as isize + t as isize - r);
            }
            out[spec.index(i, j)] = acc;
        }
    }
    Ok(ScalarField::from_raw(spec, out))
}

/// Cell lookup for a physical coordinate: (lower index, fraction, inside-range flag).
#[inline]
fn locate(coord: f64, h: f64, n: usize) -> (usize, f64, bool) {
    let g = coord / h;
    let max = (n - 1) as f64;
    let inside = (0.0..=max).contains(&g);
    let g = g.clamp(0.0, max);
    let i0 = (g.floor() as usize).min(n - 2);
    (i0, g - i0 as f64, inside)
}

/// Bilinear interpolation at physical position `(x, y)`; coordinates outside
/// the grid are clamped to it.
pub fn bilinear_sample(f: &ScalarField, x: f64, y: f64) -> f64 {
    let spec = f.spec();
    let (i0, tx, _) = locate(x, spec.hx, spec.nx);
    let (j0, ty, _) = locate(y, spec.hy, spec.ny);
    let f00 = f.get(i0, j0);
    let f10 = f.get(i0 + 1, j0);
    let f01 = f.get(i0, j0 + 1);
    let f11 = f.get(i0 + 1, j0 + 1);
    (1.0 - ty) * ((1.0 - tx) * f00 + tx * f10) + ty * ((1.0 - tx) * f01 + tx * f11)
}

/// Exact derivative of [`bilinear_sample`] with respect to `(x, y)`.
///
/// Zero along an axis where the coordinate was clamped. On a cell boundary the
/// derivative of the cell above/right of the line is returned.
pub fn bilinear_gradient(f: &ScalarField, x: f64, y: f64) -> [f64; 2] {
    let spec = f.spec();
    let (i0, tx, in_x) = locate(x, spec.hx, spec.nx);
    let (j0, ty, in_y) = locate(y, spec.hy, spec.ny);
    let f00 = f.get(i0, j0);
    let f10 = f.get(i0 + 1, j0);
    let f01 = f.get(i0, j0 + 1);
    let f11 = f.get(i0 + 1, j0 + 1);
    let gx = ((1.0 - ty) * (f10 - f00) + ty * (f11 - f01)) / spec.hx;
    let gy = ((1.0 - tx) * (f01 - f00) + tx * (f11 - f10)) / spec.hy;
    [if in_x { gx } else { 0.0 }, if in_y { gy } else { 0.0 }]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n, n).unwrap()
    }

    fn interior(spec: &GridSpec, margin: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        (margin..spec.ny - margin).flat_map(move |j| (margin..spec.nx - margin).map(move |i| (i, j)))
    }

    #[test]
    fn rejects_bad_grids_and_values() {
        assert!(GridSpec::new(2, 5).is_err());
        assert!(GridSpec::with_spacing(4, 4, 0.0, 1.0).is_err());
        let spec = grid(3);
        assert!(matches!(ScalarField::new(spec, vec![0.0; 8]), Err(Error::LengthMismatch { .. })));
        let mut v = vec![0.0; 9];
        v[4] = f64::NAN;
        assert!(matches!(ScalarField::new(spec, v), Err(Error::NonFinite(4))));
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let f = ScalarField::constant(grid(7), 3.5);
        for scheme in [DiffScheme::Central, DiffScheme::Forward, DiffScheme::Backward] {
            let g = gradient(&f, scheme);
            assert!(g.u.values().iter().chain(g.v.values()).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn gradient_of_linear_field() {
        let spec = grid(8);
        let f = ScalarField::from_fn(spec, |x, y| 2.0 * x + 3.0 * y).unwrap();
        let g = gradient(&f, DiffScheme::Central);
        for (i, j) in interior(&spec, 1) {
            assert_abs_diff_eq!(g.u.get(i, j), 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(g.v.get(i, j), 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn central_gradient_exact_on_quadratic() {
        let spec = grid(16);
        let f = ScalarField::from_fn(spec, |x, _| x * x).unwrap();
        let g = gradient(&f, DiffScheme::Central);
        for (i, j) in interior(&spec, 1) {
            // symbolic derivative of x^2
            let exact = 2.0 * spec.x(i);
            assert_abs_diff_eq!(g.u.get(i, j), exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn central_gradient_is_second_order() {
        let max_err = |n: usize| {
            let h = std::f64::consts::PI / (n - 1) as f64;
            let spec = GridSpec::with_spacing(n, n, h, h).unwrap();
            let f = ScalarField::from_fn(spec, |x, y| x.sin() * y.sin()).unwrap();
            let g = gradient(&f, DiffScheme::Central);
            interior(&spec, 1)
                .map(|(i, j)| {
                    let (x, y) = (spec.x(i), spec.y(j));
                    let eu = (g.u.get(i, j) - x.cos() * y.sin()).abs();
                    let ev = (g.v.get(i, j) - x.sin() * y.cos()).abs();
                    eu.max(ev)
                })
                .fold(0.0, f64::max)
        };
        let ratio = max_err(17) / max_err(33);
        assert!(ratio >= 3.5, "ratio {ratio}");
    }

    #[test]
    fn divergence_of_constant_and_linear_fields() {
        let spec = grid(9);
        let w = VectorField::new(ScalarField::constant(spec, 1.5), ScalarField::constant(spec, -2.0)).unwrap();
        for scheme in [DivergenceScheme::Central, DivergenceScheme::UpwindPair] {
            assert!(divergence(&w, scheme).values().iter().all(|&v| v == 0.0));
        }
        let w = VectorField::new(
            ScalarField::from_fn(spec, |x, _| x).unwrap(),
            ScalarField::from_fn(spec, |_, y| y).unwrap(),
        )
        .unwrap();
        for scheme in [DivergenceScheme::Central, DivergenceScheme::UpwindPair] {
            let d = divergence(&w, scheme);
            let c = conservative_divergence(&w, scheme);
            for (i, j) in interior(&spec, 1) {
                assert_abs_diff_eq!(d.get(i, j), 2.0, epsilon = 1e-12);
                assert_abs_diff_eq!(c.get(i, j), 2.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_vector_components_rejected() {
        let a = ScalarField::constant(grid(4), 0.0);
        let b = ScalarField::constant(grid(5), 0.0);
        assert!(matches!(VectorField::new(a, b), Err(Error::SpecMismatch)));
    }

    #[test]
    fn divergence_of_unit_normal_gives_circle_curvature() {
        let spec = grid(64);
        let (cx, cy, r) = (31.7, 32.2, 20.0);
        let phi = ScalarField::from_fn(spec, |x, y| (x - cx).hypot(y - cy) - r).unwrap();
        let g = gradient(&phi, DiffScheme::Central);
        let n = g.norm();
        let unit = VectorField::new(
            ScalarField::new(spec, g.u.values().iter().zip(n.values()).map(|(a, m)| a / m).collect()).unwrap(),
            ScalarField::new(spec, g.v.values().iter().zip(n.values()).map(|(a, m)| a / m).collect()).unwrap(),
        )
        .unwrap();
        let div = divergence(&unit, DivergenceScheme::Central);
        let tol = 2.0 / (r * r);
        let mut checked = 0;
        for (i, j) in interior(&spec, 2) {
            if phi.get(i, j).abs() < 0.5 {
                assert!((div.get(i, j) - 1.0 / r).abs() <= tol, "{} at ({i},{j})", div.get(i, j));
                checked += 1;
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn conservative_divergence_is_negative_adjoint() {
        let spec = GridSpec::with_spacing(7, 5, 0.7, 1.3).unwrap();
        let f = ScalarField::from_fn(spec, |x, y| (0.3 * x).sin() + y * y * 0.1 + x * y).unwrap();
        let w = VectorField::new(
            ScalarField::from_fn(spec, |x, y| (x + 2.0 * y).cos()).unwrap(),
            ScalarField::from_fn(spec, |x, y| x - y * 0.5 + 1.0).unwrap(),
        )
        .unwrap();
        for (grad, div) in [
            (DiffScheme::Central, DivergenceScheme::Central),
            (DiffScheme::Forward, DivergenceScheme::UpwindPair),
        ] {
            let g = gradient(&f, grad);
            let d = conservative_divergence(&w, div);
            let lhs: f64 = d.values().iter().zip(f.values()).map(|(a, b)| a * b).sum();
            let rhs: f64 = -(0..spec.len())
                .map(|k| w.u.values()[k] * g.u.values()[k] + w.v.values()[k] * g.v.values()[k])
                .sum::<f64>();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
        }
    }

    #[test]
    fn smoothing_identity_and_constants() {
        let spec = grid(10);
        let f = ScalarField::from_fn(spec, |x, y| x * y).unwrap();
        assert_eq!(gaussian_smooth(&f, 0.0).unwrap(), f);
        let c = ScalarField::constant(spec, 0.37);
        let s = gaussian_smooth(&c, 1.7).unwrap();
        assert!(s.values().iter().all(|v| (v - 0.37).abs() < 1e-14));
        assert!(gaussian_smooth(&c, -1.0).is_err());
    }

    #[test]
    fn smoothing_impulse_matches_dense_convolution() {
        let spec = grid(33);
        let mut v = vec![0.0; spec.len()];
        v[spec.index(16, 16)] = 1.0;
        let f = ScalarField::new(spec, v).unwrap();
        let sigma = 2.0;
        let s = gaussian_smooth(&f, sigma).unwrap();

        // dense 2D convolution with an independently built kernel
        let radius = (3.0 * sigma).ceil() as i64;
        let w1 = |t: i64| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp();
        let norm: f64 = (-radius..=radius).map(w1).sum();
        for j in 0..33i64 {
            for i in 0..33i64 {
                let (di, dj) = (i - 16, j - 16);
                let expected =
                    if di.abs() <= radius && dj.abs() <= radius { w1(di) * w1(dj) / (norm * norm) } else { 0.0 };
                assert_abs_diff_eq!(s.get(i as usize, j as usize), expected, epsilon = 1e-15);
            }
        }
        let k0 = gaussian_kernel(sigma)[radius as usize];
        assert_abs_diff_eq!(s.get(16, 16), k0 * k0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bilinear_exact_cases() {
        let spec = grid(6);
        let f = ScalarField::from_fn(spec, |x, y| 2.0 * x + 3.0 * y).unwrap();
        assert_abs_diff_eq!(bilinear_sample(&f, 1.5, 2.25), 9.75, epsilon = 1e-12);
        assert_eq!(bilinear_sample(&f, 2.0, 3.0), f.get(2, 3));
        assert_eq!(bilinear_gradient(&f, 1.5, 2.25), [2.0, 3.0]);
        // clamped outside the domain
        assert_abs_diff_eq!(bilinear_sample(&f, -4.0, 2.0), 6.0, epsilon = 1e-12);
        assert_eq!(bilinear_gradient(&f, -4.0, 2.0)[0], 0.0);
    }

    #[test]
    fn bilinear_matches_four_corner_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let spec = GridSpec::with_spacing(11, 9, 0.5, 2.0).unwrap();
        let vals: Vec<f64> = (0..spec.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = ScalarField::new(spec, vals.clone()).unwrap();
        let (ex, ey) = spec.extent();
        for _ in 0..100 {
            let x: f64 = rng.random_range(0.0..ex);
            let y: f64 = rng.random_range(0.0..ey);
            // area-weighted four-corner formula
            let (gx, gy) = (x / 0.5, y / 2.0);
            let (i, j) = (gx as usize, gy as usize);
            let (a, b) = (gx - i as f64, gy - j as f64);
            let v = |i: usize, j: usize| vals[j * 11 + i];
            let expected = v(i, j) * (1.0 - a) * (1.0 - b)
                + v(i + 1, j) * a * (1.0 - b)
                + v(i, j + 1) * (1.0 - a) * b
                + v(i + 1, j + 1) * a * b;
            assert_abs_diff_eq!(bilinear_sample(&f, x, y), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn one_sided_norm_survives_symmetric_extremum() {
        let spec = grid(9);
        // extremum between pixels: central and forward differences vanish at (3,3)
        let f = ScalarField::from_fn(spec, |x, y| -((x - 3.5).hypot(y - 3.5))).unwrap();
        let fwd = gradient(&f, DiffScheme::Forward).norm();
        assert!(fwd.get(3, 3) < 1e-12);
        assert!(one_sided_max_norm(&f).get(3, 3) > 0.5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn smoothing_preserves_mean_of_near_constant(
                base in -5.0f64..5.0,
                amp in 0.0f64..1e-9,
                sigma in 0.3f64..3.0,
                seed in 0u64..1000,
            ) {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let spec = GridSpec::new(24, 20).unwrap();
                let vals = (0..spec.len()).map(|_| base + amp * rng.random_range(-1.0..1.0)).collect();
                let f = ScalarField::new(spec, vals).unwrap();
                let s = gaussian_smooth(&f, sigma).unwrap();
                prop_assert!((s.mean() - f.mean()).abs() <= 1e-10);
            }

            #[test]
            fn bilinear_exact_on_linear_fields(
                a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0,
                x in 0.0f64..9.0, y in 0.0f64..7.0,
            ) {
                let spec = GridSpec::new(10, 8).unwrap();
                let f = ScalarField::from_fn(spec, |x, y| a * x + b * y + c).unwrap();
                prop_assert!((bilinear_sample(&f, x, y) - (a * x + b * y + c)).abs() < 1e-11);
            }
        }
    }
}
