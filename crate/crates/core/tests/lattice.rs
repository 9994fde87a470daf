use std::f64::consts::PI;

use hall_edge_core::lattice::*;
use hall_edge_core::linalg::{c, cis, eigvalsh, hermiticity_defect, CMat, C64};
use proptest::prelude::*;

fn torus(p: HaldaneParams, l: usize) -> LatticeModel {
    build_haldane(p, l, 0.0, false, Boundary::Torus).unwrap()
}

/// A(k1) and V(k1) written out entry by entry.
fn a_v_oracle(p: &HaldaneParams, k1: f64) -> ([[C64; 2]; 2], [[C64; 2]; 2]) {
    let (t1, t2, w) = (p.t1, p.t2, p.w);
    let e = |x: f64| cis(x);
    let a = [
        [-t2 * e(p.phi) * e(-k1) - t2 * e(-p.phi), c(0.0, 0.0)],
        [c(-t1, 0.0), -t2 * e(-p.phi) * e(-k1) - t2 * e(p.phi)],
    ];
    let v = [
        [
            c(w, 0.0) - t2 * e(p.phi) * e(k1) - t2 * e(-p.phi) * e(-k1),
            -t1 * e(-k1) - t1,
        ],
        [
            -t1 * e(k1) - t1,
            c(-w, 0.0) - t2 * e(-p.phi) * e(k1) - t2 * e(p.phi) * e(-k1),
        ],
    ];
    (a, v)
}

fn block(h: &CMat, m: &LatticeModel, x2: usize, y2: usize) -> [[C64; 2]; 2] {
    let mut out = [[c(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for rp in 0..2 {
            out[r][rp] = h[(m.index(x2, r), m.index(y2, rp))];
        }
    }
    out
}

fn assert_block_close(got: [[C64; 2]; 2], want: [[C64; 2]; 2], tol: f64) {
    for r in 0..2 {
        for rp in 0..2 {
            let d = (got[r][rp] - want[r][rp]).norm();
            assert!(d <= tol, "entry ({r},{rp}): got {:?}, want {:?}", got[r][rp], want[r][rp]);
        }
    }
}

#[test]
fn nearest_neighbour_only_kernel_has_single_lower_left_a_entry() {
    let p = HaldaneParams::new(1.0, 0.0, 0.0, 0.0);
    let m = torus(p, 6);
    for k1 in [0.0, 0.7, 2.1, 5.5] {
        let h = effective_1d_hamiltonian(&m, k1);
        let a = block(&h, &m, 2, 3);
        assert_eq!(a[0][0], c(0.0, 0.0));
        assert_eq!(a[0][1], c(0.0, 0.0));
        assert_eq!(a[1][1], c(0.0, 0.0));
        assert_eq!(a[1][0], c(-1.0, 0.0));
        let v = block(&h, &m, 2, 2);
        let want = -(cis(-k1) + 1.0);
        assert!((v[0][1] - want).norm() < 1e-15);
        assert!((v[1][0] - want.conj()).norm() < 1e-15);
    }
}

#[test]
fn v_at_zero_momentum_diagonal() {
    let p = HaldaneParams::new(1.0, 0.3, 0.4, 0.2);
    let m = torus(p, 5);
    let h = effective_1d_hamiltonian(&m, 0.0);
    let v = block(&h, &m, 1, 1);
    assert!((v[0][0] - c(p.w - 2.0 * p.t2 * p.phi.cos(), 0.0)).norm() < 1e-15);
    assert!((v[1][1] - c(-p.w - 2.0 * p.t2 * p.phi.cos(), 0.0)).norm() < 1e-15);
}

#[test]
fn bipartite_spectrum_is_symmetric() {
    let m = torus(HaldaneParams::new(1.0, 0.0, 0.0, 0.0), 6);
    for &(k1, k2) in &[(0.3, 1.2), (2.0, -0.4), (PI, 0.5)] {
        let e = eigvalsh(&bloch_hamiltonian(&m, (k1, k2)).unwrap()).unwrap();
        assert!((e[0] + e[1]).abs() < 1e-14);
    }
    let h = effective_1d_hamiltonian(&m, 0.9);
    let e = eigvalsh(&h).unwrap();
    let n = e.len();
    for i in 0..n {
        assert!((e[i] + e[n - 1 - i]).abs() < 1e-12);
    }
}

#[test]
fn minimal_direct_gap_on_fine_grid() {
    // independent scan of e_+ - e_- from the closed form on 512^2: 2.0 at (pi, pi)
    const FROZEN_MIN_GAP: f64 = 2.0;
    let p = HaldaneParams::topological();
    let m = torus(p, 8);
    let n = 512;
    let mut worst = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            let k = (2.0 * PI * i as f64 / n as f64, 2.0 * PI * j as f64 / n as f64);
            let e = eigvalsh(&bloch_hamiltonian(&m, k).unwrap()).unwrap();
            worst = worst.min(e[1] - e[0]);
        }
    }
    assert!(worst > 0.0);
    assert!((worst - FROZEN_MIN_GAP).abs() < 1e-12, "min gap {worst}");
}

#[test]
fn zero_momentum_bloch_eigenvalues() {
    for &(t1, t2, phi, w) in &[(1.0, 0.5, PI / 2.0, 0.0), (1.0, 0.2, 0.3, 0.7), (0.8, 0.1, 2.0, -1.1)] {
        let p = HaldaneParams::new(t1, t2, phi, w);
        let m = torus(p, 4);
        let e = eigvalsh(&bloch_hamiltonian(&m, (0.0, 0.0)).unwrap()).unwrap();
        let root = (w * w + 9.0 * t1 * t1).sqrt();
        let centre = -6.0 * t2 * phi.cos();
        assert!((e[0] - (centre - root)).abs() < 1e-13);
        assert!((e[1] - (centre + root)).abs() < 1e-13);
    }
}

#[test]
fn torus_and_cylinder_share_interior_elements() {
    let p = HaldaneParams::new(1.0, 0.0, 0.0, 0.3);
    let l = 7;
    let t = build_haldane(p, l, 0.0, false, Boundary::Torus).unwrap();
    let cyl = build_haldane(p, l, 0.0, false, Boundary::Cylinder).unwrap();
    for k1 in [0.0, 1.3, 4.0] {
        let ht = effective_1d_hamiltonian(&t, k1);
        let hc = effective_1d_hamiltonian(&cyl, k1);
        assert_eq!(hc.nrows(), 2 * (l + 1));
        for x2 in 1..l {
            for y2 in 1..l {
                for r in 0..2 {
                    for rp in 0..2 {
                        let a = hc[(cyl.index(x2, r), cyl.index(y2, rp))];
                        let b = if x2 < l && y2 < l && x2.abs_diff(y2) <= 1 {
                            ht[(t.index(x2, r), t.index(y2, rp))]
                        } else {
                            c(0.0, 0.0)
                        };
                        assert_eq!(a, b, "({x2},{r};{y2},{rp})");
                    }
                }
            }
        }
        for y in 0..hc.ncols() {
            for r in 0..2 {
                assert_eq!(hc[(cyl.index(0, r), y)], c(0.0, 0.0));
                assert_eq!(hc[(cyl.index(l, r), y)], c(0.0, 0.0));
                assert_eq!(hc[(y, cyl.index(0, r))], c(0.0, 0.0));
                assert_eq!(hc[(y, cyl.index(l, r))], c(0.0, 0.0));
            }
        }
    }
}

#[test]
fn bloch_requires_torus() {
    let cyl = build_haldane(HaldaneParams::topological(), 6, 0.0, false, Boundary::Cylinder).unwrap();
    assert!(bloch_hamiltonian(&cyl, (0.0, 0.0)).is_err());
}

#[test]
fn builder_rejects_bad_input() {
    let p = HaldaneParams::topological();
    assert!(build_haldane(p, 3, 0.0, false, Boundary::Torus).is_err());
    assert!(build_haldane(HaldaneParams::new(1.0, f64::NAN, 0.0, 0.0), 6, 0.0, false, Boundary::Torus).is_err());
    assert!(build_haldane(HaldaneParams::new(-1.0, 0.1, 0.0, 0.0), 6, 0.0, false, Boundary::Torus).is_err());
    assert!(build_haldane(HaldaneParams::new(1.0, -0.1, 0.0, 0.0), 6, 0.0, false, Boundary::Torus).is_err());
}

#[test]
fn validation_flags_constructed_faults() {
    let p = HaldaneParams::topological();
    let good = build_haldane(p, 6, 0.0, true, Boundary::Cylinder).unwrap();
    assert!(validate_model(&good).is_valid(), "{:?}", validate_model(&good));

    let mut broken = good.clone();
    let orig = broken.hop(1, 2, 2, 0, 0);
    broken.set_hop(1, 2, 2, 0, 0, orig + c(0.0, 0.25));
    let rep = validate_model(&broken);
    let v = rep.find("hermiticity").expect("hermiticity flagged");
    assert!((v.magnitude - 0.25).abs() < 1e-12, "{}", v.magnitude);

    let mut leaky = good.clone();
    leaky.set_hop(0, 0, 1, 0, 1, c(-1.0, 0.0));
    let rep = validate_model(&leaky);
    assert!(rep.find("dirichlet").is_some());

    let mut mixed = good.clone();
    mixed.set_hop(0, 2, 2, 0, 3, c(0.1, 0.0));
    mixed.set_hop(0, 2, 2, 3, 0, c(0.1, 0.0));
    assert!(validate_model(&mixed).find("spin_block_coupling").is_some());

    let t = build_haldane(p, 6, 0.0, true, Boundary::Torus).unwrap();
    let t = t.with_interaction(&haldane_nn_interaction(1.0, 1.0)).unwrap();
    assert!(validate_model(&t).is_valid(), "{:?}", validate_model(&t));
}

#[test]
fn spin_blocks_are_identical_copies() {
    let m = build_haldane(HaldaneParams::topological(), 6, 0.0, true, Boundary::Cylinder).unwrap();
    assert_eq!(m.dof(), 4);
    assert!(m.spin_blocks_identical());
    let blocks = m.spin_blocks();
    let single = build_haldane(HaldaneParams::topological(), 6, 0.0, false, Boundary::Cylinder).unwrap();
    for b in &blocks {
        let x = effective_1d_hamiltonian(b, 0.4);
        let y = effective_1d_hamiltonian(&single, 0.4);
        assert_eq!(hall_edge_core::linalg::max_abs_diff(&x, &y), 0.0);
    }
}

fn params() -> impl Strategy<Value = HaldaneParams> {
    (0.2f64..2.0, 0.0f64..1.0, 0.0f64..2.0 * PI, -3.0f64..3.0)
        .prop_map(|(t1, t2, phi, w)| HaldaneParams::new(t1, t2, phi, w))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn effective_operator_is_exactly_hermitian(p in params(), k1 in 0.0f64..2.0 * PI, cyl in any::<bool>()) {
        let b = if cyl { Boundary::Cylinder } else { Boundary::Torus };
        let m = build_haldane(p, 5, 0.0, true, b).unwrap();
        let h = effective_1d_hamiltonian(&m, k1);
        prop_assert_eq!(hermiticity_defect(&h), 0.0);
        let hb = build_haldane(p, 5, 0.0, false, Boundary::Torus).unwrap();
        let hk = bloch_hamiltonian(&hb, (k1, 1.0 - k1)).unwrap();
        prop_assert_eq!(hermiticity_defect(&hk), 0.0);
    }

    #[test]
    fn kernel_blocks_reproduce_a_and_v(p in params(), k1 in 0.0f64..2.0 * PI) {
        let m = torus(p, 6);
        let h = effective_1d_hamiltonian(&m, k1);
        let (a, v) = a_v_oracle(&p, k1);
        assert_block_close(block(&h, &m, 3, 4), a, 1e-14);
        assert_block_close(block(&h, &m, 3, 3), v, 1e-14);
        let mut a_dag = [[c(0.0, 0.0); 2]; 2];
        for r in 0..2 { for rp in 0..2 { a_dag[r][rp] = a[rp][r].conj(); } }
        assert_block_close(block(&h, &m, 4, 3), a_dag, 1e-14);
        // periodic wrap of the torus
        assert_block_close(block(&h, &m, 5, 0), a, 1e-14);
    }

    #[test]
    fn band_formula_matches_numerics(p in params(), k1 in 0.0f64..2.0 * PI, k2 in 0.0f64..2.0 * PI) {
        let m = torus(p, 4);
        let e = eigvalsh(&bloch_hamiltonian(&m, (k1, k2)).unwrap()).unwrap();
        let (lo, hi) = haldane_bands_closed_form(&p, (k1, k2));
        prop_assert!((e[0] - lo).abs() <= 1e-12 && (e[1] - hi).abs() <= 1e-12);
    }

    #[test]
    fn bloch_is_two_pi_periodic(p in params(), k1 in 0.0f64..2.0 * PI, k2 in 0.0f64..2.0 * PI) {
        let m = torus(p, 4);
        let a = bloch_hamiltonian(&m, (k1, k2)).unwrap();
        let b = bloch_hamiltonian(&m, (k1 + 2.0 * PI, k2)).unwrap();
        let d = hall_edge_core::linalg::max_abs_diff(&a, &b);
        prop_assert!(d < 1e-14);
    }

    #[test]
    fn torus_spectrum_is_union_over_k2(p in params(), n1 in 0usize..7, l in 4usize..9) {
        let m = torus(p, l);
        let k1 = 2.0 * PI * n1 as f64 / 7.0;
        let mut bloch: Vec<f64> = (0..l)
            .flat_map(|n2| {
                let k2 = 2.0 * PI * n2 as f64 / l as f64;
                eigvalsh(&bloch_hamiltonian(&m, (k1, k2)).unwrap()).unwrap()
            })
            .collect();
        bloch.sort_by(|a, b| a.total_cmp(b));
        let direct = eigvalsh(&effective_1d_hamiltonian(&m, k1)).unwrap();
        prop_assert_eq!(bloch.len(), direct.len());
        for (a, b) in bloch.iter().zip(direct.iter()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }
}
