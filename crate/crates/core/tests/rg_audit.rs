use std::collections::HashSet;
use std::sync::Arc;

use hall_edge_core::rg_audit::*;
use hall_edge_core::LabError;
use proptest::prelude::*;

// independent reading of the gain tables: without sources only |P| matters
fn gain_oracle(psi: u32, phi: u32, a: u32) -> i32 {
    if phi == 0 && a == 0 {
        return match psi {
            2 => 2,
            4 => 1,
            _ => 0,
        };
    }
    if psi == 2 && phi == 0 && a == 1 {
        1
    } else {
        0
    }
}

#[test]
fn scaling_dimension_examples() {
    assert_eq!(scaling_dimension(2, 0, 0, true).unwrap(), 1);
    assert_eq!(scaling_dimension(4, 0, 0, true).unwrap(), 1);
    assert_eq!(scaling_dimension(6, 0, 0, true).unwrap(), 1);
    assert_eq!(scaling_dimension(2, 0, 1, true).unwrap(), 1);
    assert_eq!(scaling_dimension(2, 0, 0, false).unwrap(), -1);
    assert_eq!(scaling_dimension(4, 0, 0, false).unwrap(), 0);
    assert_eq!(scaling_dimension(8, 0, 0, false).unwrap(), 2);
    for (p, f) in [(3, 0), (1, 2), (2, 1)] {
        assert!(matches!(scaling_dimension(p, f, 0, true), Err(LabError::InvalidParameter { .. })));
    }
}

#[test]
fn dimension_table_is_exhaustive_and_matches_oracle() {
    let t = dimension_table(10);
    let mut seen = HashSet::new();
    let mut expected = 0;
    for psi in 0..=10u32 {
        for phi in 0..=10u32 {
            for a in 0..=10u32 {
                if psi % 2 == 0 && phi % 2 == 0 && psi + phi + a <= 10 {
                    expected += 1;
                }
            }
        }
    }
    assert_eq!(t.len(), expected);
    for e in &t {
        let f = e.fields;
        assert!(seen.insert(f));
        let bare = (f.psi + f.phi) as i32 / 2 + f.a as i32 - 2;
        assert_eq!(e.bare, bare, "{f:?}");
        assert_eq!(e.gain, gain_oracle(f.psi, f.phi, f.a), "{f:?}");
        assert_eq!(e.renormalized, bare + e.gain);
        assert_eq!(scaling_dimension(f.psi, f.phi, f.a, true).unwrap(), e.renormalized);
    }
}

#[test]
fn renormalized_dimensions_are_positive_without_phi() {
    let t = dimension_table(10);
    for e in &t {
        if e.fields.psi >= 2 && e.fields.phi == 0 {
            assert!(e.renormalized >= 1, "{e:?}");
        }
    }
    // with φ sources the one marginal exception is ψψφφ
    let low: Vec<_> = t.iter().filter(|e| e.fields.psi >= 2 && e.renormalized < 1).map(|e| e.fields).collect();
    assert_eq!(low, vec![FieldCounts::new(2, 2, 0)]);
    // without renormalization the quadratic and quartic vertices fail
    let bare_low: HashSet<_> =
        t.iter().filter(|e| e.fields.phi == 0 && e.fields.a == 0 && e.fields.psi >= 2 && e.bare < 1).map(|e| e.fields.psi).collect();
    assert_eq!(bare_low, HashSet::from([2, 4]));
}

#[test]
fn unlabeled_counts_are_little_schroeder() {
    let expected = [1usize, 1, 3, 11, 45, 197, 903, 4279];
    for (i, &e) in expected.iter().enumerate() {
        let n = i + 1;
        let s = unlabeled_shapes(n).unwrap();
        assert_eq!(s.len(), e, "n = {n}");
        assert!((s.len() as u64) <= 4u64.pow(n as u32));
        let distinct: HashSet<_> = s.iter().map(|t| format!("{:?}", t.parent)).collect();
        assert_eq!(distinct.len(), s.len());
        for t in &s {
            assert_eq!(t.n_leaves(), n);
            for v in 0..t.len() {
                assert!(t.is_leaf(v) || t.children[v].len() >= 2);
            }
        }
    }
    assert!(matches!(unlabeled_shapes(9), Err(LabError::TooLarge { .. })));
    assert!(matches!(enumerate_trees(3, -13), Err(LabError::TooLarge { .. })));
}

fn admissible(shape: &Shape, h: i32, s: &[i32]) -> bool {
    if s[0] != h + 1 {
        return false;
    }
    (0..shape.len()).all(|v| {
        let cap = if shape.children[v].is_empty() { 1 } else { 0 };
        s[v] <= cap && shape.parent[v].map_or(true, |p| s[v] > s[p])
    })
}

// every tree with v0 on top over the given reduced shape: v0 either
// coincides with the top branching point or is a trivial vertex above it
fn brute_force(reduced: &Shape, h: i32) -> u64 {
    let mut parents = vec![None];
    parents.extend(reduced.parent.iter().map(|p| Some(p.map_or(0, |q| q + 1))));
    let hang = Shape::from_parents(parents).unwrap();
    let mut shapes = vec![hang];
    if !reduced.children[0].is_empty() {
        shapes.push(reduced.clone());
    }
    let mut count = 0;
    for s in &shapes {
        let m = s.len();
        let span = (1 - h) as u64;
        for code in 0..span.pow(m as u32) {
            let mut c = code;
            let mut lab = vec![0; m];
            for x in lab.iter_mut() {
                *x = h + 1 + (c % span) as i32;
                c /= span;
            }
            if admissible(s, h, &lab) {
                count += 1;
            }
        }
    }
    count
}

#[test]
fn labelings_two_endpoints() {
    let shapes = unlabeled_shapes(2).unwrap();
    assert_eq!(shapes.len(), 1);
    // v0 trivial: branch in [-1, 0]; v0 branching at -2: leaves in [-1, 1]
    assert_eq!(brute_force(&shapes[0], -3), 5 + 9);
    assert_eq!(labelings_count(&shapes[0], -3), 14);
    let (census, stream) = enumerate_trees(2, -3).unwrap();
    assert_eq!(census.unlabeled, 1);
    assert_eq!(census.labeled, 14);
    assert_eq!(stream.count(), 14);
}

#[test]
fn stream_matches_brute_force() {
    for n in 1..=3 {
        for h in [-1, -2, -4] {
            let shapes = unlabeled_shapes(n).unwrap();
            let oracle: u64 = shapes.iter().map(|s| brute_force(s, h)).sum();
            let (census, stream) = enumerate_trees(n, h).unwrap();
            assert_eq!(census.labeled, oracle, "n {n} h {h}");
            let mut seen = HashSet::new();
            let mut k = 0;
            for t in stream {
                t.validate().unwrap();
                assert_eq!(t.shape.n_leaves(), n);
                assert!(seen.insert(format!("{:?}{:?}", t.shape.parent, t.scales)));
                k += 1;
            }
            assert_eq!(k, oracle);
        }
    }
}

#[test]
fn stream_is_lazy_at_the_caps() {
    let (census, mut stream) = enumerate_trees(8, -12).unwrap();
    assert_eq!(census.unlabeled, 4279);
    assert!(census.labeled > 1_000_000);
    let first: Vec<_> = stream.by_ref().take(1000).collect();
    assert_eq!(first.len(), 1000);
    assert!(first.iter().all(|t| t.validate().is_ok()));
}

fn chain(h: i32, scales: Vec<i32>) -> GnTree {
    // v0 -> v1 -> endpoint
    let s = Shape::from_parents(vec![None, Some(0), Some(1)]).unwrap();
    GnTree { h_root: h, shape: Arc::new(s), scales }
}

#[test]
fn bound_audit_chain_with_relevant_vertex() {
    let t = chain(-5, vec![-4, -1, 1]);
    let p = [FieldCounts::new(2, 0, 0), FieldCounts::new(2, 0, 0), FieldCounts::new(4, 0, 0)];
    let a = dimensional_bound_audit(&t, &p).unwrap();
    assert_eq!(a.unrenormalized.dimensions, vec![Some(-1), Some(-1), None]);
    assert!(!a.unrenormalized.summable);
    // (h_v0 - h) + (h_v1 - h_v0) = 1 + 3 scale steps
    assert_eq!(a.unrenormalized.exponent, -4);
    assert_eq!(a.unrenormalized.factor, 16.0);
    assert_eq!(a.renormalized.dimensions, vec![Some(1), Some(1), None]);
    assert!(a.renormalized.summable);
    assert_eq!(a.renormalized.exponent, 4);
    assert_eq!(a.renormalized.factor, 1.0 / 16.0);
}

#[test]
fn bound_audit_irrelevant_tree() {
    let s = Shape::from_parents(vec![None, Some(0), Some(0), Some(1), Some(1)]).unwrap();
    let t = GnTree { h_root: -3, shape: Arc::new(s), scales: vec![-2, 0, 1, 1, 1] };
    let six = FieldCounts::new(6, 0, 0);
    let p = [six, six, FieldCounts::new(4, 0, 0), FieldCounts::new(4, 0, 0), FieldCounts::new(4, 0, 0)];
    let a = dimensional_bound_audit(&t, &p).unwrap();
    assert!(a.unrenormalized.summable);
    assert!(a.renormalized.summable);
    assert_eq!(a.unrenormalized, a.renormalized);
    assert_eq!(a.renormalized.exponent, 1 + 2);
    // P_v must be drawn from the children
    let bad = [FieldCounts::new(10, 0, 0), six, FieldCounts::new(4, 0, 0), FieldCounts::new(2, 0, 0), FieldCounts::new(2, 0, 0)];
    assert!(dimensional_bound_audit(&t, &bad).is_err());
    let t2 = chain(-5, vec![-3, -1, 1]);
    assert!(dimensional_bound_audit(&t2, &p[..3]).is_err());
}

fn power(a_z: f64, a_v: f64, a_nu: f64, a_lambda: f64, c: f64, theta: f64, lambda: f64) -> PowerLawBeta {
    PowerLawBeta { envelope: Envelope { c, theta, lambda }, a_z, a_v, a_nu, a_lambda }
}

const START: FlowState = FlowState { z: 1.0, v: 1.3, nu: 0.0, lambda: 0.1 };

#[test]
fn zero_beta_keeps_couplings() {
    let tr = flow_iterate(START, &power(0.0, 0.0, 0.0, 0.0, 1.0, 0.5, 0.1), -40).unwrap();
    assert_eq!(tr.states.len(), 41);
    assert!(tr.states.iter().all(|s| *s == START));
    assert!(tr.within_envelope);
}

#[test]
fn lambda_flow_geometric_envelope() {
    let lam = 0.1;
    let tr = flow_iterate(START, &power(0.0, 0.0, 0.0, 1.0, 1.0, 0.5, lam), -40).unwrap();
    let series = lam * lam * (1.0 - 2f64.powi(-20)) / (1.0 - 2f64.powf(-0.5));
    assert!((tr.lambda_drift - series).abs() <= 1e-12 * series);
    assert!((tr.lambda_drift_bound - lam * lam / (1.0 - 2f64.powf(-0.5))).abs() < 1e-15);
    assert!(tr.lambda_drift <= tr.lambda_drift_bound);
    assert!(tr.lambda_speed_ratio <= 1.0 + 1e-12);
    assert!(tr.within_envelope);
    assert_eq!(*tr.scales.last().unwrap(), -40);
}

#[test]
fn z_flow_converges() {
    let lam = 0.3;
    let theta = 0.25;
    let tr = flow_iterate(START, &power(-1.0, 0.0, 0.0, 0.0, 1.0, theta, lam), -200).unwrap();
    let geo = lam * lam / (1.0 - 2f64.powf(-theta));
    assert!(tr.log_z_drift <= tr.log_z_drift_bound * (1.0 + 1e-12));
    assert!(tr.log_z_drift_bound < geo / (1.0 - lam * lam));
    // the tail below -100 no longer moves Z
    let z100 = tr.states[100].z;
    let z200 = tr.states[200].z;
    assert!((z100 - z200).abs() < 1e-6 * z200);
    assert!(tr.within_envelope);
}

#[test]
fn envelope_violation_is_reported() {
    let err = flow_iterate(START, &power(0.0, 0.0, 0.0, 1.5, 1.0, 0.5, 0.1), -5).unwrap_err();
    match err {
        LabError::BetaBoundViolated { which, scale, .. } => {
            assert_eq!(which, "lambda");
            assert_eq!(scale, 0);
        }
        e => panic!("{e}"),
    }
    assert!(flow_iterate(START, &power(0.0, 2.0, 0.0, 0.0, 1.0, 0.5, 0.1), -5).is_err());
}

fn geometric_nu(b: f64, theta: f64, h: i32) -> Vec<f64> {
    (h..=0)
        .rev()
        .map(|k| -(h..=k).map(|j| (j - k + 1) as f64).map(|e| e.exp2()).zip(h..=k).map(|(w, j)| w * (theta * j as f64).exp2() * b).sum::<f64>())
        .collect()
}

#[test]
fn nu_fixed_point_trivial_and_constant() {
    let m = TanhNuBeta { lambda: 0.1, theta: 0.5, b: 0.0, g: 1.0 };
    let fp = nu_fixed_point(&m, 0.5, -30, 0.1).unwrap();
    assert!(fp.nu.iter().all(|&x| x == 0.0));

    for theta in [0.1, 0.5, 1.0] {
        let b = 0.7;
        let m = TanhNuBeta { lambda: 1.0, theta, b, g: 0.0 };
        let fp = nu_fixed_point(&m, theta, -40, 1.0).unwrap();
        let want = geometric_nu(b, theta, -40);
        for (x, y) in fp.nu.iter().zip(&want) {
            assert!((x - y).abs() <= 1e-12 * y.abs(), "{x} vs {y}");
        }
        let env = 2.0 * b / (1.0 - (-(1.0 + theta)).exp2());
        assert!((fp.envelope - env).abs() < 1e-15);
        for (x, k) in fp.nu.iter().zip(&fp.scales) {
            assert!(x.abs() <= env * (theta * *k as f64).exp2());
        }
    }
}

#[test]
fn nu_contraction_at_most_half() {
    for theta in [0.1, 0.3, 1.0] {
        let m = TanhNuBeta { lambda: 0.1, theta, b: 1.0, g: 1.0 };
        let fp = nu_fixed_point(&m, theta, -60, 0.1).unwrap();
        assert!(fp.contraction > 0.0);
        assert!(fp.contraction <= fp.contraction_bound + 1e-12);
        assert!(fp.contraction_bound <= 0.5, "theta {theta}: {}", fp.contraction_bound);
        assert!(fp.within_envelope);
        // the output is a fixed point
        let again = nu_map(&m, theta, -60, &fp.nu);
        for (a, b) in again.iter().zip(&fp.nu) {
            assert!((a - b).abs() <= 1e-13 * fp.weighted_norm.max(1e-300));
        }
    }
}

struct Expanding;
impl NuBeta for Expanding {
    fn beta(&self, j: i32, nu: &[f64]) -> f64 {
        let k = j + 1;
        if k > 0 {
            1.0
        } else {
            1.0 + 3.0 * nu[(-k) as usize]
        }
    }
    fn bound(&self) -> f64 {
        f64::INFINITY
    }
    fn lipschitz(&self) -> f64 {
        3.0
    }
}

#[test]
fn expanding_map_is_rejected() {
    assert!(matches!(nu_fixed_point(&Expanding, 0.5, -20, 1.0), Err(LabError::NoContraction { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn admissible_models_stay_in_envelope(
        az in -1.0..1.0f64, av in -1.0..1.0f64, an in -1.0..1.0f64, al in -1.0..1.0f64,
        theta in 0.1..1.5f64, lam in -0.4..0.4f64, h in -80..-1i32,
    ) {
        let tr = flow_iterate(START, &power(az, av, an, al, 1.0, theta, lam), h).unwrap();
        prop_assert!(tr.within_envelope);
        prop_assert!(tr.lambda_drift <= tr.lambda_drift_bound * (1.0 + 1e-12));
    }

    #[test]
    fn nu_iteration_contracts(
        b in -1.0..1.0f64, g in -1.0..1.0f64, theta in 0.1..1.5f64, lam in -0.12..0.12f64, h in -60..-1i32,
    ) {
        let m = TanhNuBeta { lambda: lam, theta, b, g };
        let fp = nu_fixed_point(&m, theta, h, lam).unwrap();
        prop_assert!(fp.contraction <= fp.contraction_bound * (1.0 + 1e-6));
        prop_assert!(fp.contraction_bound <= 0.5);
        prop_assert!(fp.within_envelope);
    }
}
