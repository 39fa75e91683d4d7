use proptest::prelude::*;

use geovar::beltrami::{beltrami_operator, induced_metric, EmbeddingMap, FrozenPolyakov};
use geovar::chanvese::{bracket, cv_energy, cv_velocity, heaviside_delta, region_means, CurvatureForm, CvFunctional, CvMode, CvParams, LevelSetState, RegionStats};
use geovar::curve::ClosedCurve;
use geovar::fixtures::{circle_distance, noisy_disk, smooth_image};
use geovar::gac::{GacFunctional, GacState};
use geovar::grid::{conservative_divergence, divergence, gradient, gaussian_smooth, DiffScheme, DivergenceScheme, GridSpec, ScalarField, VectorField};
use geovar::io::{curves_to_csv, parse_curve_csv};
use geovar::pnm;
use geovar::trace::{EvolutionTrace, TraceRow};
use geovar::variation::{check_gradient, gradient_from_variation, metric_weights, DiscreteFunctional, GradCheckConfig, InnerProductKind, MeasureInput};

fn spec_strategy() -> impl Strategy<Value = GridSpec> {
    (3usize..20, 3usize..20, 0.2f64..3.0, 0.2f64..3.0).prop_map(|(nx, ny, hx, hy)| GridSpec::with_spacing(nx, ny, hx, hy).unwrap())
}

fn field_strategy() -> impl Strategy<Value = ScalarField> {
    spec_strategy().prop_flat_map(|spec| {
        prop::collection::vec(-5.0f64..5.0, spec.len()).prop_map(move |v| ScalarField::new(spec, v).unwrap())
    })
}

/// Star-shaped CCW polygon around (50, 50).
fn smooth_curve() -> impl Strategy<Value = ClosedCurve> {
    (48usize..160, 15.0f64..25.0, prop::array::uniform4(-0.08f64..0.08), prop::array::uniform2(-3.0f64..3.0)).prop_map(|(n, r0, a, c)| {
        let pts = (0..n)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / n as f64;
                let r = r0 * (1.0 + a[0] * (2.0 * t).cos() + a[1] * (2.0 * t).sin() + a[2] * (3.0 * t).cos() + a[3] * (5.0 * t).sin());
                [50.0 + c[0] + r * t.cos(), 50.0 + c[1] + r * t.sin()]
            })
            .collect();
        ClosedCurve::new(pts).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn constants_have_zero_derivatives(spec in spec_strategy(), c in -10.0f64..10.0, d in -10.0f64..10.0) {
        let f = ScalarField::constant(spec, c);
        for scheme in [DiffScheme::Central, DiffScheme::Forward, DiffScheme::Backward] {
            let g = gradient(&f, scheme);
            prop_assert!(g.u.values().iter().chain(g.v.values()).all(|v| *v == 0.0));
        }
        let w = VectorField::new(ScalarField::constant(spec, c), ScalarField::constant(spec, d)).unwrap();
        for scheme in [DivergenceScheme::Central, DivergenceScheme::UpwindPair] {
            prop_assert!(divergence(&w, scheme).values().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn conservative_divergence_is_minus_adjoint(f in field_strategy(), seed in 0u64..1000) {
        let spec = *f.spec();
        let w = VectorField::new(smooth_image(spec, seed).unwrap(), smooth_image(spec, seed + 1).unwrap()).unwrap();
        for (d, c) in [(DiffScheme::Central, DivergenceScheme::Central), (DiffScheme::Forward, DivergenceScheme::UpwindPair)] {
            let g = gradient(&f, d);
            let lhs: f64 = conservative_divergence(&w, c).values().iter().zip(f.values()).map(|(a, b)| a * b).sum();
            let rhs: f64 = g.u.values().iter().zip(w.u.values()).chain(g.v.values().iter().zip(w.v.values())).map(|(a, b)| a * b).sum();
            prop_assert!((lhs + rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn smoothing_keeps_constants(spec in spec_strategy(), c in -3.0f64..3.0, sigma in 0.3f64..4.0) {
        let out = gaussian_smooth(&ScalarField::constant(spec, c), sigma).unwrap();
        prop_assert!(out.values().iter().all(|v| (v - c).abs() <= 1e-12 * (1.0 + c.abs())));
    }

    #[test]
    fn curve_weights_positive_and_sum_to_length(c in smooth_curve()) {
        let w = metric_weights(&InnerProductKind::GeometricCurve, MeasureInput::Curve(&c)).unwrap();
        prop_assert!(w.weights().iter().all(|v| *v > 0.0));
        let total: f64 = w.weights().iter().sum();
        prop_assert!((total - c.length()).abs() <= 1e-10 * c.length());
    }

    #[test]
    fn parameter_product_is_identity(c in smooth_curve(), seed in 0u64..100) {
        let g = smooth_image(GridSpec::new(100, 100).unwrap(), seed).unwrap().map(|v| 0.2 + 0.8 * v).unwrap();
        let f = GacFunctional { g_field: g };
        let raw = f.raw_variation(&c.to_flat());
        let w = f.metric_weights(&c.to_flat(), &InnerProductKind::ParameterL2).unwrap();
        prop_assert_eq!(gradient_from_variation(&raw, &w).unwrap(), raw);
    }

    #[test]
    fn circle_curvature_second_order(r in 5.0f64..80.0, n in 16usize..400) {
        let c = ClosedCurve::circle([0.0, 0.0], r, n).unwrap();
        let geo = c.geometry().unwrap();
        let h = c.length() / n as f64;
        let worst = geo.curvature.iter().map(|k| (k - 1.0 / r).abs()).fold(0.0, f64::max);
        prop_assert!(worst <= 10.0 * (h / r).powi(2) / r + 1e-14);
    }

    #[test]
    fn curve_csv_round_trip(c in smooth_curve(), step in 0usize..10_000) {
        let back = parse_curve_csv(&curves_to_csv(&[(step, c.clone())])).unwrap();
        prop_assert_eq!(back[0].0, step);
        for (p, q) in c.points().iter().zip(back[0].1.points()) {
            prop_assert!((p[0] - q[0]).abs() <= 1e-8 * p[0].abs() && (p[1] - q[1]).abs() <= 1e-8 * p[1].abs());
        }
    }

    #[test]
    fn pgm_round_trip(seed in 0u64..1000, nx in 3usize..30, ny in 3usize..30, maxval in prop::sample::select(vec![1u32, 255, 256, 4095, 65535])) {
        let spec = GridSpec::new(nx, ny).unwrap();
        let f = smooth_image(spec, seed).unwrap();
        let bytes = pnm::encode(&[&f], maxval).unwrap();
        let img = pnm::decode(&bytes).unwrap().into_image().unwrap();
        let back = img.channels().remove(0);
        prop_assert_eq!(pnm::encode(&[&back], maxval).unwrap(), bytes);
        prop_assert!(f.values().iter().zip(back.values()).all(|(a, b)| (a - b).abs() <= 0.5 / maxval as f64 + 1e-15));
    }

    #[test]
    fn planes_are_minimal(a in -3.0f64..3.0, b in -3.0f64..3.0, beta in 0.01f64..5.0) {
        let spec = GridSpec::new(12, 10).unwrap();
        let e = EmbeddingMap::new(vec![ScalarField::from_fn(spec, |x, y| a * x + b * y).unwrap()], beta).unwrap();
        let op = beltrami_operator(&e, &induced_metric(&e), 0).unwrap();
        for j in 2..8 {
            for i in 2..10 {
                prop_assert!(op.get(i, j).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn trace_steps_must_increase(steps in prop::collection::vec(0usize..50, 2..10)) {
        let mut t = EvolutionTrace::new();
        let mut last: Option<usize> = None;
        for s in steps {
            let ok = t.push(TraceRow::new(s, 0.0, 1.0, 0.0)).is_ok();
            prop_assert_eq!(ok, last.is_none_or(|l| s > l));
            if ok {
                last = Some(s);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gac_duality_on_random_curves(c in smooth_curve(), seed in 0u64..100, ax in 1.0f64..2.0, ay in 1.0f64..2.0) {
        // a globally bilinear G has no interpolation kinks for the probe to straddle
        let g = ScalarField::from_fn(GridSpec::new(100, 100).unwrap(), |x, y| {
            0.2 + 0.003 * ax * x + 0.002 * ay * y - 0.00003 * x * y
        })
        .unwrap();
        let f = GacFunctional { g_field: g.clone() };
        let cfg = GradCheckConfig { trials: 4, seed, ..GradCheckConfig::default() };
        for kind in [InnerProductKind::GeometricCurve, InnerProductKind::ParameterL2] {
            let r = check_gradient(&f, &kind, &c.to_flat(), &cfg).unwrap();
            prop_assert!(r.passed, "{} {}", kind.name(), r.max_rel_error);
        }
        prop_assert!(GacState::new(c, g).is_ok());
    }

    #[test]
    fn frozen_polyakov_duality(seed in 0u64..100, beta in 0.2f64..2.0) {
        let spec = GridSpec::new(16, 16).unwrap();
        let img = smooth_image(spec, seed).unwrap().map(|v| 4.0 * v).unwrap();
        let metric_source = smooth_image(spec, seed + 7).unwrap().map(|v| 4.0 * v).unwrap();
        let metric = induced_metric(&EmbeddingMap::new(vec![metric_source], beta).unwrap());
        let f = FrozenPolyakov { metric, beta };
        let cfg = GradCheckConfig { trials: 4, seed, ..GradCheckConfig::default() };
        let r = check_gradient(&f, &InnerProductKind::GeometricSurface, img.values(), &cfg).unwrap();
        prop_assert!(r.passed, "{}", r.max_rel_error);
    }

    #[test]
    fn chanvese_duality_at_fixed_means(seed in 0u64..100, eps in 0.1f64..2.0, mu in 0.0f64..0.5) {
        let img = noisy_disk(40, 9.0, 0.1, seed).unwrap();
        let phi = circle_distance(*img.spec(), [19.5, 19.5], 12.0).unwrap();
        let params = CvParams { eps_h: eps, mu, curvature: CurvatureForm::Consistent, ..CvParams::default() };
        let stats = region_means(&img, &phi, eps).unwrap();
        let cfg = GradCheckConfig { trials: 4, seed, tolerance: 2e-3, ..GradCheckConfig::default() };
        let r = check_gradient(&CvFunctional { image: img, stats, params }, &InnerProductKind::ParameterL2, phi.values(), &cfg).unwrap();
        prop_assert!(r.passed, "{}", r.max_rel_error);
    }

    #[test]
    fn region_means_never_increase_energy(seed in 0u64..100, c1 in -0.5f64..1.5, c2 in -0.5f64..1.5, r in 6.0f64..16.0) {
        let img = noisy_disk(32, 8.0, 0.2, seed).unwrap();
        let phi = circle_distance(*img.spec(), [15.5, 15.5], r).unwrap();
        let params = CvParams { eps_h: 0.5, ..CvParams::default() };
        let arbitrary = LevelSetState { phi: phi.clone(), image: img.clone(), stats: RegionStats { c1, c2 } };
        let optimal = LevelSetState::new(img, phi, params.eps_h).unwrap();
        prop_assert!(cv_energy(&optimal, &params) <= cv_energy(&arbitrary, &params) + 1e-12);
    }

    #[test]
    fn both_modes_share_interface_zeros(seed in 0u64..100, eps in 0.3f64..2.0) {
        let spec = GridSpec::new(24, 24).unwrap();
        let phi = circle_distance(spec, [11.5, 11.5], 7.0).unwrap();
        let image = noisy_disk(24, 6.0, 0.2, seed).unwrap();
        let st = LevelSetState::new(image, phi, eps).unwrap();
        let params = CvParams { eps_h: eps, ..CvParams::default() };
        let b = bracket(&st, &params);
        let vc = cv_velocity(&st, &params, CvMode::Classical);
        let vg = cv_velocity(&st, &params, CvMode::Geometric);
        for k in 0..spec.len() {
            if st.phi.values()[k].abs() <= eps {
                // both velocities are positive multiples of the bracket
                let d = heaviside_delta(st.phi.values()[k], eps).1;
                prop_assert!(d > 0.0);
                prop_assert_eq!(vc.values()[k].signum(), b.values()[k].signum());
                prop_assert_eq!(vg.values()[k].signum(), b.values()[k].signum());
            }
        }
    }
}
