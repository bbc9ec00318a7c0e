use proptest::prelude::*;
use qclab::planar::*;
use std::f64::consts::PI;

/// Area of `Y ∩ B(0, r)` in polar coordinates: `w = (ρ, φ)` lies in `Y` iff
/// `ρ^{2−λ} |sin φ| ≤ 1`, so the angular measure is `4 asin(ρ^{λ−2})` once
/// `ρ^{λ−2} < 1`.
fn polar_area(lambda: f64, r: f64) -> f64 {
    let angular = |rho: f64| {
        let s = rho.powf(lambda - 2.0);
        if s >= 1.0 {
            2.0 * PI
        } else {
            4.0 * s.asin()
        }
    };
    // ρ ≤ 1 is the full disk
    let mut area = PI * r.min(1.0).powi(2);
    if r > 1.0 {
        let m = 200_000;
        let h = (r - 1.0) / m as f64;
        let f = |rho: f64| rho * angular(rho);
        let mut s = f(1.0) + f(r);
        for i in 1..m {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(1.0 + i as f64 * h);
        }
        area += s * h / 3.0;
    }
    area
}

#[test]
fn stretched_area_matches_polar_quadrature() {
    for r in [10.0, 40.0] {
        let a = stretched_area(1.5, r, 6, 12).unwrap();
        let b = polar_area(1.5, r);
        assert!((a - b).abs() / b < 0.01, "r = {r}: {a} vs {b}");
    }
}

#[test]
fn stretched_strip_growth_exponent() {
    let radii = [10.0, 20.0, 40.0, 80.0];
    let (fit, areas) = stretched_strip_growth(1.5, &radii).unwrap();
    assert!((fit.exponent - 1.5).abs() <= 0.1, "exponent {}", fit.exponent);
    assert!(areas.windows(2).all(|w| w[1] > w[0]));
    // the polar oracle's own slope over the same radii
    let exact: Vec<f64> = radii.iter().map(|r| polar_area(1.5, *r)).collect();
    let slope = qclab::volume::fit_loglog(&radii, &exact).unwrap().exponent;
    assert!((fit.exponent - slope).abs() < 0.02, "{} vs {slope}", fit.exponent);
}

#[test]
fn exp_dilatation_is_near_one() {
    let d = dilatation_estimate(PlanarExample::ExpStrip, [0.0, 1.0], &[1e-3], 256, None).unwrap();
    assert!(d.sup_estimate <= 1.01 && d.sup_estimate >= 1.0);
    // finite-radius correction (1 + r/2)/(1 − r/2) for e^z
    let d = dilatation_estimate(PlanarExample::ExpStrip, [0.0, 1.0], &[1e-2, 1e-3], 1024, None).unwrap();
    for (r, h) in d.radii.iter().zip(&d.h_estimates) {
        let expected = (1.0 + r / 2.0) / (1.0 - r / 2.0);
        assert!((h - expected).abs() < 1e-4, "r = {r}: {h} vs {expected}");
    }
    assert!(d.h_estimates[1] <= d.h_estimates[0]);
}

#[test]
fn identity_like_map_has_unit_dilatation() {
    let d = dilatation_estimate(PlanarExample::Stretch, [0.3, 0.2], &[1e-3], 64, Some(1.0 + 1e-12)).unwrap();
    assert!((d.sup_estimate - 1.0).abs() < 1e-6);
}

#[test]
fn stretch_dilatation_is_stable_under_radius_halving() {
    let a = dilatation_estimate(PlanarExample::Stretch, [1.0, 0.0], &[1e-2], 512, Some(1.5)).unwrap();
    let b = dilatation_estimate(PlanarExample::Stretch, [1.0, 0.0], &[5e-3], 512, Some(1.5)).unwrap();
    assert!(a.sup_estimate.is_finite() && a.sup_estimate > 1.0);
    assert!((a.sup_estimate / b.sup_estimate - 1.0).abs() < 0.05);
    // at (1, 0) the stretch has radial derivative k + 1 and angular derivative 1, k = 1
    assert!((b.sup_estimate - 2.0).abs() < 0.02, "{}", b.sup_estimate);
}

#[test]
fn shape_fit_passes_all_samples() {
    let fit = shape_inclusion_fit(1.5, 10_000).unwrap();
    assert!(fit.all_pass && fit.a.is_finite() && fit.a > 0.0);
    let pts = stretched_boundary(1.5, 10_000, 1e6).unwrap();
    assert!(pts.iter().all(|w| in_shape(*w, fit.a, 1.5)));
    // more samples may need a larger a, never a smaller one beyond the resolution
    let more = shape_inclusion_fit(1.5, 40_000).unwrap();
    assert!(more.a >= fit.a - 1e-3);
}

proptest! {
    #[test]
    fn stretch_modulus_law(x in -50.0f64..50.0, y in -1.0f64..1.0, lambda in 1.01f64..1.99) {
        let w = planar_map(PlanarExample::Stretch, [x, y], Some(lambda)).unwrap();
        let r = x.hypot(y);
        let expected = r.powf(1.0 / (2.0 - lambda));
        prop_assert!((w[0].hypot(w[1]) - expected).abs() <= 1e-12 * expected.max(1.0));
    }

    #[test]
    fn images_lie_in_target(x in 0.0f64..20.0, y in 0.0f64..PI, lambda in 1.01f64..1.99, s in -1.0f64..1.0) {
        let w = planar_map(PlanarExample::ExpHalfStrip, [x, y], None).unwrap();
        prop_assert!(PlanarDomain::HalfPlaneMinusDisk.contains(w));
        let w = planar_map(PlanarExample::ExpStrip, [x - 10.0, y], None).unwrap();
        prop_assert!(PlanarDomain::PuncturedHalfPlane.contains(w));
        let w = planar_map(PlanarExample::Stretch, [x - 10.0, s], Some(lambda)).unwrap();
        let target = PlanarDomain::StretchedStrip { lambda };
        prop_assert!(target.contains(w));
    }
}
