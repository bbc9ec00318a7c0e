//! q_modulus against exhaustive path enumeration plus a barrier Newton solve
//! of the primal problem on small random graphs.

mod common;

use common::bruteforce::{all_paths, barrier_modulus, random_instance};
use qclab::modulus::{q_modulus, CurveFamily, ModulusOptions};

#[test]
fn matches_exhaustive_convex_minimization() {
    let opts = ModulusOptions { gap_target: 0.002, tol: 1e-3, max_outer: 500, ..Default::default() };
    for seed in 0..24 {
        let inst = random_instance(seed);
        let n = inst.graph.node_count();
        let paths = all_paths(&inst);
        let exact = barrier_modulus(&inst.graph.node_measure, &paths, inst.q);
        let fam = CurveFamily::new(&inst.graph, vec![0], vec![n as u32 - 1]).unwrap();
        let r = q_modulus(&fam, inst.q, &opts).unwrap();
        assert!(
            r.lower <= exact * (1.0 + 1e-6) && r.upper >= exact * (1.0 - 1e-6),
            "seed {seed}: [{}, {}] does not contain {exact}",
            r.lower,
            r.upper
        );
        assert!(
            (r.upper - exact).abs() <= 0.01 * exact && (r.lower - exact).abs() <= 0.01 * exact,
            "seed {seed}: [{}, {}] vs {exact} ({} paths)",
            r.lower,
            r.upper,
            paths.len()
        );
    }
}
