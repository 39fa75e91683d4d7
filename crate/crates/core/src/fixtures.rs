//! Synthetic inputs generated from a seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::curve::ClosedCurve;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};

/// Disk of value `inside` on a background of `outside`; a pixel belongs to the
/// disk when its center is strictly within `radius`.
pub fn disk_image(spec: GridSpec, center: [f64; 2], radius: f64, inside: f64, outside: f64) -> Result<ScalarField> {
    ScalarField::from_fn(spec, |x, y| {
        if (x - center[0]).hypot(y - center[1]) < radius {
            inside
        } else {
            outside
        }
    })
}

/// Adds seeded Gaussian noise with standard deviation `sigma`.
pub fn add_noise(field: &ScalarField, sigma: f64, seed: u64) -> Result<ScalarField> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(format!("noise sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = field.values().iter().map(|v| v + normal.sample(&mut rng)).collect();
    ScalarField::new(*field.spec(), values)
}

/// Square image of side `n` with a centered disk of value 1 on 0, plus noise.
pub fn noisy_disk(n: usize, radius: f64, sigma: f64, seed: u64) -> Result<ScalarField> {
    let spec = GridSpec::new(n, n)?;
    let c = (n as f64 - 1.0) / 2.0;
    let clean = disk_image(spec, [c, c], radius, 1.0, 0.0)?;
    if sigma == 0.0 {
        return Ok(clean);
    }
    add_noise(&clean, sigma, seed)
}

/// Signed distance to a circle, positive inside.
pub fn circle_distance(spec: GridSpec, center: [f64; 2], radius: f64) -> Result<ScalarField> {
    ScalarField::from_fn(spec, |x, y| radius - (x - center[0]).hypot(y - center[1]))
}

/// Axis-aligned ellipse centered in the domain of `spec`.
pub fn ellipse_curve(spec: &GridSpec, a: f64, b: f64, nodes: usize) -> Result<ClosedCurve> {
    let (w, h) = spec.extent();
    ClosedCurve::ellipse([w / 2.0, h / 2.0], a, b, nodes)
}

/// A smooth random image: a few seeded low-frequency cosines in `[0, 1]`.
pub fn smooth_image(spec: GridSpec, seed: u64) -> Result<ScalarField> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = spec.extent();
    let terms: Vec<[f64; 4]> = (0..4)
        .map(|_| {
            [
                rng.random_range(-1.0..1.0),
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            ]
        })
        .collect();
    let norm: f64 = terms.iter().map(|t| t[0].abs()).sum();
    ScalarField::from_fn(spec, |x, y| {
        let s: f64 = terms
            .iter()
            .map(|[a, kx, ky, ph]| a * (std::f64::consts::PI * (kx * x / w + ky * y / h) + ph).cos())
            .sum();
        0.5 + 0.5 * s / norm
    })
}
