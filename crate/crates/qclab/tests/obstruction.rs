use proptest::prelude::*;
use qclab::geodesics::FlowGraph;
use qclab::modulus::path_integral;
use qclab::obstruction::*;
use qclab::{Point3, SpaceId, SpaceModel};
use std::f64::consts::PI;

fn params(q: f64, n: f64, c0: f64, l: f64, b: f64) -> ObstructionParams {
    ObstructionParams { q, n, volume_c0: c0, r0: 2.0, l, b }
}

/// `∫ (c₁/|x|)^Q` outside `B(R₁)` for `V(r) = C₀ r^N`, computed in `r`, plus
/// the part of the level sets that lies inside the ball.
fn shell_plus_ball(p: &ObstructionParams, c: &DerivedConstants) -> f64 {
    let (q, n) = (p.q, p.n);
    let shell = p.volume_c0 * n * c.c1.powf(q) * c.r1.powf(n - q) / (q - n);
    let ball = p.volume_c0 * c.r1.powf(n) * (c.c1 / c.r1).powf(q);
    shell + ball
}

#[test]
fn tail_examples() {
    let p = params(4.0, 3.0, 1.0, 1.0, 1.0);
    let c = derive_constants(&p).unwrap();
    // c₁ = 8, R₁ = 6: 8³ · 4 · (8/6)
    let expected = 512.0 * 4.0 * (8.0 / 6.0);
    assert!((analytic_tail(&p, &c).unwrap() - expected).abs() < 1e-9);
    let q = layered_cake_tail(|r| r.powi(3), &p, &c, 4000).unwrap();
    assert!((q / expected - 1.0).abs() < 1e-3, "{q} vs {expected}");
}

#[test]
fn n_at_least_q_is_rejected() {
    let p = params(4.0, 4.0, 1.0, 1.0, 1.0);
    assert!(derive_constants(&p).is_err());
    let cfg = ObstructionConfig { n: 4.0, ..Default::default() };
    let err = cfg.validate().unwrap_err().to_string();
    assert!(err.contains("N < Q required"), "{err}");
}

#[test]
fn radial_density_on_a_line() {
    // path 0 - 1 - … - 20 with unit edges and unit measure
    let n = 21;
    let nodes: Vec<Point3> = (0..n).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
    let edges: Vec<(u32, u32, f64)> = (0..n - 1).map(|i| (i as u32, i as u32 + 1, 1.0)).collect();
    let g = FlowGraph::from_edges(nodes, vec![1.0; n], &edges).unwrap();
    let c = derive_constants(&params(4.0, 3.0, 1.0, 1.0, 1.0)).unwrap();
    let rho = radial_density(&g, 0, &c);
    for (i, v) in rho.values.iter().enumerate() {
        let d = i as f64;
        let expected = if d < c.r1 { c.c0 } else { c.c1 / d };
        assert!((v - expected).abs() < 1e-15, "node {i}");
    }
    assert_eq!(rho.values[0], c.c0);
    // at the ball's edge the outer formula gives c₁/R₁
    assert!((rho.values[6] - c.c1 / c.r1).abs() < 1e-15);
    // the whole line has ρ-length at least the trapezoid integral of c₁/r
    let path: Vec<u32> = (0..n as u32).collect();
    let len = path_integral(&g, &rho, &path).unwrap();
    let outer: f64 = (6..20).map(|i| 0.5 * c.c1 * (1.0 / i as f64 + 1.0 / (i + 1) as f64)).sum();
    assert!((len - (6.0 * c.c0 - 0.5 * (c.c0 - c.c1 / 6.0) + outer)).abs() < 1e-12);
}

#[test]
fn continuify_euclidean_line() {
    let samples: Vec<Point3> = (0..6).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
    let sigma = continuify(&SpaceModel::EUCLIDEAN3, 0, &samples, &ContinuifyOptions::default()).unwrap();
    assert_eq!(sigma.domain(), (0.0, 5.0));
    assert!(sigma.certificate.l < 1.01, "{:?}", sigma.certificate);
    assert!(sigma.certificate.b < 0.02, "{:?}", sigma.certificate);
    for t in [0.0, 1.0, 2.5, 4.75] {
        let p = sigma.point(t).unwrap();
        assert!((p.x - t).abs() < 0.01 && p.y.abs() < 0.01 && p.z.abs() < 0.01, "σ({t}) = {p}");
    }
    assert!(sigma.point(5.5).is_err());
}

#[test]
fn continuify_rejects_constant_map() {
    let samples = vec![Point3::new(1.0, 1.0, 1.0); 4];
    assert!(continuify(&SpaceModel::ROTO_TRANSLATION, 0, &samples, &ContinuifyOptions::default()).is_err());
}

#[test]
fn continua_are_nested_with_constant_separation() {
    let opts = ContinuifyOptions::default();
    let sigma = rt_axis(10, &opts).unwrap();
    let p = ObstructionParams {
        q: 4.0,
        n: 3.0,
        volume_c0: 1.0,
        r0: 2.0,
        l: sigma.certificate.l,
        b: sigma.certificate.b.max(0.5),
    };
    let c = derive_constants(&p).unwrap();
    let g = axis_graph(SpaceId::RotoTranslation, 10.5, [3.0, 3.0], 0.5).unwrap();
    let ns = [c.t1 + 1.0, c.t1 + 3.0, 9.5];
    let pairs: Vec<ContinuumPair> = ns.iter().map(|&n| build_continua(&sigma, &g, &c, p.b, n).unwrap()).collect();
    for w in pairs.windows(2) {
        assert!(w[0].e_nodes.iter().all(|v| w[1].e_nodes.binary_search(v).is_ok()));
        assert!(w[0].f_nodes.iter().all(|v| w[1].f_nodes.binary_search(v).is_ok()));
        assert!(w[1].e_nodes.len() > w[0].e_nodes.len());
        assert_eq!(w[0].separation, w[1].separation);
    }
    // E and F sit at parameters ±t₁ on a line, so they are 2t₁ apart up to the grid
    let sep = pairs[0].separation;
    assert!((sep - 2.0 * c.t1).abs() <= 1.0, "{sep} vs {}", 2.0 * c.t1);
    assert!(build_continua(&sigma, &g, &c, p.b, c.t1 - 0.1).is_err());
}

#[test]
fn heisenberg_fails_the_growth_hypothesis() {
    let r = bounded_loewner_check(SpaceId::Heisenberg, &ObstructionConfig::default(), &[1.0]).unwrap();
    assert!(!r.hypothesis_met);
    assert!(r.rows.is_empty() && r.bound.is_none() && r.all_bounded.is_none());
    assert!(bounded_loewner_check(SpaceId::RotoTranslation, &ObstructionConfig::default(), &[0.0]).is_err());
}

#[test]
fn qi_samples_respect_projection_bound() {
    let est = estimate_qi_constants(100, 10.0, 3, &QiOptions::default()).unwrap();
    assert_eq!(est.samples.len(), 100);
    assert!(est.l_hat.is_finite() && est.b_hat.is_finite());
    assert_eq!(est.max_violation, 0.0);
    for s in &est.samples {
        // d_RT ≥ max(|Δ(x, y)|, |Δθ|) ≥ d_E / √2
        assert!(s.d_rt >= s.d_e / 2f64.sqrt() - 1e-6, "{s:?}");
        assert!(s.d_rt <= est.l_hat * s.d_e + est.b_hat + 1e-12);
        assert!(s.d_rt >= s.d_e / est.l_hat - est.b_hat - 1e-12);
    }
    // Ω = [0,1)² × [0,2π) has Euclidean diameter √(2 + 4π²)
    assert!((est.diam_e_omega - (2.0 + 4.0 * PI * PI).sqrt()).abs() < 1e-12);
    assert!(est.diam_rt_omega >= 2.0 * PI - 1e-3);
}

proptest! {
    #[test]
    fn analytic_tail_matches_shell_decomposition(
        q in 2.5f64..6.0,
        gap in 0.2f64..1.5,
        c0 in 0.1f64..10.0,
        l in 1.0f64..3.0,
        b in 0.1f64..2.0,
    ) {
        let p = params(q, q - gap, c0, l, b);
        let c = derive_constants(&p).unwrap();
        let a = analytic_tail(&p, &c).unwrap();
        let e = shell_plus_ball(&p, &c);
        prop_assert!((a / e - 1.0).abs() < 1e-10, "{} vs {}", a, e);
    }

    #[test]
    fn layered_cake_quadrature_matches_closed_form(
        q in 2.5f64..6.0,
        gap in 0.3f64..1.5,
        c0 in 0.1f64..10.0,
    ) {
        let p = params(q, q - gap, c0, 1.0, 0.5);
        let c = derive_constants(&p).unwrap();
        let a = analytic_tail(&p, &c).unwrap();
        let v = layered_cake_tail(|r| c0 * r.powf(q - gap), &p, &c, 2000).unwrap();
        prop_assert!((v / a - 1.0).abs() < 0.01, "{} vs {}", v, a);
    }

    #[test]
    fn floor_map_lands_in_the_cell(x in -100.0f64..100.0, y in -100.0f64..100.0, z in -100.0f64..100.0) {
        let p = Point3::new(x, y, z);
        let f = floor_map(p);
        prop_assert!(x - f.x >= 0.0 && x - f.x < 1.0);
        prop_assert!(y - f.y >= 0.0 && y - f.y < 1.0);
        prop_assert!(z - f.z >= -1e-12 && z - f.z < 2.0 * PI + 1e-12);
        prop_assert_eq!(floor_map(f), f);
    }

    #[test]
    fn constants_satisfy_their_defining_relations(l in 1.0f64..4.0, b in 0.05f64..3.0, r0 in 0.1f64..50.0) {
        let p = ObstructionParams { q: 4.0, n: 3.0, volume_c0: 1.0, r0, l, b };
        let c = derive_constants(&p).unwrap();
        prop_assert!(c.r1 >= r0 && c.r1 >= 2.0 * b * (l * l + 2.0) - 1e-12);
        prop_assert!((c.t1 - l * (b + c.r1)).abs() < 1e-9);
        prop_assert!((c.c0 * b - 4.0).abs() < 1e-12);
        prop_assert!((c.c1 - 4.0 * (l * l + 1.0)).abs() < 1e-12);
    }
}
