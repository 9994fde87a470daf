use std::f64::consts::PI;
use std::path::PathBuf;

use hall_edge_core::ed_oracle::{build_fock_system, ed_correlators, ed_schwinger_term, ed_ward_checks};
use hall_edge_core::lattice::{bloch_hamiltonian, build_haldane, haldane_bands_closed_form, uniform_grid, Boundary};
use hall_edge_core::linalg::{eigvalsh, C64};
use hall_edge_core::reference_model::{transport_closed_form, RefModelParams};
use hall_edge_core::response::{
    bubble_correlator, free_edge_expectation, schwinger_term, snap_matsubara, snap_momentum, transport_limits,
    ward_residual, BubbleRequest, Channel, TransportRequest,
};
use hall_edge_core::rg_audit::{dimension_table, enumerate_trees, flow_iterate, nu_fixed_point};
use hall_edge_core::spectral::{audit_edges, band_structure, detect_edge_states, EdgeOptions, Side};
use hall_edge_core::topology::{hall_conductivity, phase_sweep};
use hall_edge_core::{LabError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::*;
use crate::emit::{Cell, Meta, Writer};
use crate::CliError;

type Out = std::result::Result<Vec<PathBuf>, CliError>;

pub struct Ctx {
    pub dir: PathBuf,
    pub workers: usize,
}

impl Ctx {
    fn writer(&self, cfg: &RunConfig, grids: Value) -> Writer {
        Writer::new(&self.dir, Meta::new(cfg, grids, self.workers))
    }
}

fn need_cylinder(b: Boundary) -> Result<()> {
    if b != Boundary::Cylinder {
        return Err(LabError::WrongBoundary("this task needs boundary = \"cylinder\"".into()));
    }
    Ok(())
}

fn side_label(s: Side) -> &'static str {
    match s {
        Side::Lower => "x2=0",
        Side::Upper => "x2=L",
    }
}

fn channel_name(c: Channel) -> &'static str {
    match c {
        Channel::Charge => "charge",
        Channel::Spin => "spin",
    }
}

/// Largest deviation between the Haldane closed form and the Bloch
/// eigenvalues on an `n x n` grid.
pub fn closed_form_deviation(m: &ModelConfig, n: usize) -> Result<f64> {
    let p = m.haldane_params();
    let bulk = build_haldane(p, 4, 0.0, false, Boundary::Torus)?;
    let g = uniform_grid(n);
    let mut worst: f64 = 0.0;
    for &k1 in &g {
        for &k2 in &g {
            let e = eigvalsh(&bloch_hamiltonian(&bulk, (k1, k2))?)?;
            let (lo, hi) = haldane_bands_closed_form(&p, (k1, k2));
            worst = worst.max((e[0] - lo).abs()).max((e[1] - hi).abs());
        }
    }
    Ok(worst)
}

fn grids_or_l(n: usize, l: usize) -> usize {
    if n == 0 {
        l
    } else {
        n
    }
}

pub fn bands(cfg: &RunConfig, p: &BandsParams, ctx: &Ctx) -> Out {
    let m = cfg.model.build()?;
    let n_k = grids_or_l(p.n_k, m.size());
    let branches = band_structure(&m, &uniform_grid(n_k))?;
    let check = if cfg.model.model == ModelKind::Haldane && p.closed_form_grid > 0 {
        Some(closed_form_deviation(&cfg.model, p.closed_form_grid)?)
    } else {
        None
    };
    let mut out = ctx.writer(cfg, json!({ "n_k": n_k, "closed_form_grid": p.closed_form_grid }));
    let mut rows = Vec::new();
    for b in &branches {
        for (k, e) in b.k1.iter().zip(&b.energies) {
            rows.push(vec![Cell::from(*k), Cell::from(b.index), Cell::from(*e)]);
        }
    }
    out.csv("bands.csv", &["k1", "branch", "energy"], &rows)?;
    let ambiguous: usize = branches.iter().map(|b| b.ambiguous_links.len()).sum();
    out.json(
        "bands.json",
        &json!({
            "n_branches": branches.len(),
            "ambiguous_links": ambiguous,
            "closed_form_max_deviation": check,
        }),
    )?;
    Ok(out.written)
}

pub fn edge(cfg: &RunConfig, p: &EdgeParams, ctx: &Ctx) -> Out {
    let m = cfg.model.build()?;
    need_cylinder(m.boundary())?;
    let n_k = grids_or_l(p.n_k, m.size());
    let grid = uniform_grid(n_k);
    let edges = detect_edge_states(&m, cfg.model.mu, &grid)?;
    let verdict = audit_edges(&m, cfg.model.mu, &grid, &EdgeOptions::default())?;
    let mut out = ctx.writer(cfg, json!({ "n_k": n_k }));
    let rows: Vec<Vec<Cell>> = edges
        .iter()
        .map(|e| {
            vec![
                Cell::from(format!("s{}c{}", e.spin, e.channel)),
                Cell::from(e.k_f),
                Cell::from(e.velocity_refined),
                Cell::from(e.decay_rate),
                Cell::from(side_label(e.side)),
            ]
        })
        .collect();
    out.csv("edges.csv", &["label", "k_F", "v_e", "c", "side"], &rows)?;
    out.json("edge.json", &json!({ "edge_states": edges, "verdict": verdict }))?;
    Ok(out.written)
}

pub fn chern(cfg: &RunConfig, p: &ChernParams, ctx: &Ctx) -> Out {
    let m = cfg.model.build_torus()?;
    let hall = hall_conductivity(&m, cfg.model.mu, p.grid)?;
    let sweep = match &p.sweep {
        Some(s) => {
            if !(s.step > 0.0) || s.stop < s.start {
                return Err(LabError::InvalidParameter { name: "sweep".into(), reason: "need step > 0 and stop >= start".into() }.into());
            }
            let scale = cfg.model.t2 * cfg.model.phi.sin();
            let n = ((s.stop - s.start) / s.step + 1e-9).floor() as usize + 1;
            let ws: Vec<f64> = (0..n).map(|i| scale * (s.start + i as f64 * s.step)).collect();
            Some(phase_sweep(cfg.model.haldane_params(), cfg.model.mu, &ws, p.grid)?)
        }
        None => None,
    };
    let mut out = ctx.writer(cfg, json!({ "chern_grid": p.grid }));
    if let Some(sw) = &sweep {
        let rows: Vec<Vec<Cell>> = sweep_rows(sw);
        out.csv("phase.csv", &["W", "t2sinphi", "C"], &rows)?;
    }
    out.json(
        "chern.json",
        &json!({
            "C_per_spin": hall.per_spin,
            "sigma12": hall.sigma12,
            "sigma21": hall.sigma21,
            "grid": hall.grid,
            "refinement_delta": hall.refinement_delta,
            "orientation": hall.orientation,
        }),
    )?;
    Ok(out.written)
}

fn sweep_rows(sw: &[hall_edge_core::topology::SweepPoint]) -> Vec<Vec<Cell>> {
    sw.iter()
        .map(|q| {
            vec![
                Cell::from(q.w),
                Cell::from(q.t2_sin_phi),
                q.c.map_or(Cell::from("gap_closed"), Cell::from),
            ]
        })
        .collect()
}

pub fn correlators(cfg: &RunConfig, p: &CorrelatorParams, ctx: &Ctx) -> Out {
    let m = cfg.model.build()?;
    let all: Vec<usize> = (0..m.rows()).collect();
    let sets = |s: &Vec<Vec<usize>>| if s.is_empty() { vec![all.clone()] } else { s.clone() };
    let req = BubbleRequest {
        beta: p.beta,
        eta_beta: snap_matsubara(p.eta, p.beta),
        p1: snap_momentum(p.p1, p.n_k).1,
        n_k: p.n_k,
        mu_idx: p.mu_idx,
        nu_idx: p.nu_idx,
        channel: p.channel,
        x2_sets: sets(&p.x2_sets),
        y2_sets: sets(&p.y2_sets),
    };
    let r = bubble_correlator(&m, cfg.model.mu, &req)?;
    let mut out = ctx.writer(cfg, json!({ "n_k": p.n_k, "beta": p.beta }));
    let mut rows = Vec::new();
    for (i, row) in r.values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            rows.push(vec![Cell::from(i), Cell::from(j), Cell::from(v.re), Cell::from(v.im)]);
        }
    }
    out.csv("correlators.csv", &["x2_set", "y2_set", "re", "im"], &rows)?;
    out.json("correlators.json", &r)?;
    Ok(out.written)
}

pub fn transport(cfg: &RunConfig, p: &TransportParams, ctx: &Ctx) -> Out {
    let m = cfg.model.build()?;
    need_cylinder(m.boundary())?;
    let mu = cfg.model.mu;
    let req = TransportRequest {
        beta: p.beta,
        eps: p.eps.clone(),
        a: p.a,
        a_prime: p.a_prime,
        n_k: p.n_k,
        channel: p.channel,
    };
    let edges = detect_edge_states(&m, mu, &uniform_grid(m.size()))?;
    let tc = transport_limits(&m, mu, &req)?;
    let hall = hall_conductivity(&cfg.model.build_torus()?, mu, p.chern_grid)?;
    // per-spin-summed expectation; the spin channel carries the same sums
    let expect = free_edge_expectation(&edges);
    let got = [tc.kappa.value, tc.d.value, tc.g.value, tc.g_tilde.value];
    let names = ["kappa", "D", "G", "G_tilde"];
    let comparison: Vec<Value> = (0..4)
        .map(|i| {
            json!({
                "coefficient": names[i],
                "extrapolated": got[i],
                "edge_expectation": expect[i],
                "relative_error": (got[i] - expect[i]) / expect[i],
            })
        })
        .collect();
    let reversed = tc.reversed_g00.norm() / tc.kappa.value.abs();
    let bulk_edge = (tc.g.value - hall.sigma21).abs() / hall.sigma21.abs();
    let mut out = ctx.writer(cfg, json!({ "n_k": p.n_k, "beta": p.beta, "eps": p.eps, "chern_grid": p.chern_grid }));
    let mut rows = Vec::new();
    for (path, pts) in [("eta_first", &tc.path_eta_first), ("p_first", &tc.path_p_first)] {
        for q in pts.iter() {
            let mut r = vec![Cell::from(path), Cell::from(q.eps), Cell::from(q.eta_beta), Cell::from(q.p1)];
            for i in 0..2 {
                for j in 0..2 {
                    r.push(Cell::from(q.g[i][j].re));
                    r.push(Cell::from(q.g[i][j].im));
                }
            }
            rows.push(r);
        }
    }
    out.csv(
        "transport.csv",
        &["path", "eps", "eta_beta", "p1", "G00_re", "G00_im", "G01_re", "G01_im", "G10_re", "G10_im", "G11_re", "G11_im"],
        &rows,
    )?;
    out.json(
        "transport.json",
        &json!({
            "channel": channel_name(p.channel),
            "kappa": tc.kappa,
            "D": tc.d,
            "G": tc.g,
            "G_tilde": tc.g_tilde,
            "edge_comparison": comparison,
            "reversed_G00": tc.reversed_g00,
            "reversed_G00_over_kappa": reversed,
            "bulk_edge": {
                "sigma21": hall.sigma21,
                "C_per_spin": hall.per_spin,
                "G": tc.g.value,
                "relative_deviation": bulk_edge,
            },
        }),
    )?;
    Ok(out.written)
}

pub fn ward(cfg: &RunConfig, p: &WardParams, ctx: &Ctx) -> Out {
    let m = cfg.model.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rows_all: Vec<usize> = (0..m.rows()).collect();
    let mut res = Vec::new();
    for _ in 0..p.points {
        let n = rng.gen_range(0..=p.max_index) as f64;
        let q = rng.gen_range(0..=p.max_index) as f64;
        let eta = 2.0 * PI * n / p.beta;
        let p1 = 2.0 * PI * q / p.n_k as f64;
        let nu = rng.gen_range(0..2usize);
        let y2 = rows_all[rng.gen_range(0..rows_all.len())];
        res.push(ward_residual(&m, cfg.model.mu, p.beta, p.n_k, eta, p1, nu, p.channel, y2)?);
    }
    let worst = res.iter().map(|r| r.relative()).fold(0.0, f64::max);
    let mut out = ctx.writer(cfg, json!({ "n_k": p.n_k, "beta": p.beta }));
    let rows: Vec<Vec<Cell>> = res
        .iter()
        .map(|r| {
            vec![
                Cell::from(r.eta_beta),
                Cell::from(r.p1),
                Cell::from(r.nu_idx),
                Cell::from(r.y2),
                Cell::from(r.residual),
                Cell::from(r.scale),
                Cell::from(r.relative()),
            ]
        })
        .collect();
    out.csv("ward.csv", &["eta_beta", "p1", "nu", "y2", "residual", "scale", "relative"], &rows)?;
    out.json("ward.json", &json!({ "max_relative_residual": worst, "residuals": res }))?;
    Ok(out.written)
}

pub fn refmodel(cfg: &RunConfig, p: &RefmodelTaskParams, ctx: &Ctx) -> Out {
    let params = p.params()?;
    let t = transport_closed_form(&params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst_d: f64 = 0.0;
    let mut worst_g: f64 = 0.0;
    for _ in 0..p.random_checks {
        let v = rng.gen_range(0.1..5.0);
        let lam = rng.gen_range(-0.99..0.99) * 2.0 * PI * v;
        let omega = if rng.gen_bool(0.5) { 1 } else { -1 };
        let q = RefModelParams::new(lam, v, omega)?;
        let tt = transport_closed_form(&q)?;
        for ch in [tt.charge, tt.spin] {
            worst_d = worst_d.max((ch.d - ch.kappa * ch.velocity * ch.velocity).abs() / ch.d.abs());
            worst_g = worst_g.max((ch.g + omega as f64 / PI).abs());
        }
    }
    let mut out = ctx.writer(cfg, json!({ "random_checks": p.random_checks }));
    out.json(
        "refmodel.json",
        &json!({
            "tau": params.tau(),
            "v_s": params.v_s(),
            "v_c": params.v_c(),
            "charge": t.charge,
            "spin": t.spin,
            "checks": {
                "max_rel_D_minus_kappa_v2": worst_d,
                "max_abs_G_plus_omega_over_pi": worst_g,
                "samples": p.random_checks,
            },
        }),
    )?;
    Ok(out.written)
}

pub fn rgflow(cfg: &RunConfig, p: &RgflowParams, ctx: &Ctx) -> Out {
    let tr = flow_iterate(p.initial, &p.beta_model, p.h_min)?;
    let nu = nu_fixed_point(&p.nu_model, p.nu_model.theta, p.h_min, p.nu_model.lambda)?;
    let mut out = ctx.writer(cfg, json!({ "h_min": p.h_min }));
    let rows: Vec<Vec<Cell>> = tr
        .scales
        .iter()
        .zip(&tr.states)
        .zip(&nu.nu)
        .map(|((h, s), n)| {
            vec![Cell::from(*h), Cell::from(s.z), Cell::from(s.v), Cell::from(s.nu), Cell::from(s.lambda), Cell::from(*n)]
        })
        .collect();
    out.csv("rgflow.csv", &["h", "Z", "v", "nu_flow", "lambda", "nu_fixed_point"], &rows)?;
    let summary = json!({
        "lambda_drift": tr.lambda_drift,
        "lambda_drift_bound": tr.lambda_drift_bound,
        "v_drift": tr.v_drift,
        "v_drift_bound": tr.v_drift_bound,
        "log_z_drift": tr.log_z_drift,
        "log_z_drift_bound": tr.log_z_drift_bound,
        "lambda_speed_ratio": tr.lambda_speed_ratio,
        "v_speed_ratio": tr.v_speed_ratio,
        "within_envelope": tr.within_envelope,
        "nu": {
            "iterations": nu.iterations,
            "contraction": nu.contraction,
            "contraction_bound": nu.contraction_bound,
            "weighted_norm": nu.weighted_norm,
            "envelope": nu.envelope,
            "within_envelope": nu.within_envelope,
        },
    });
    out.json("rgflow.json", &summary)?;
    Ok(out.written)
}

pub fn rgtrees(cfg: &RunConfig, p: &RgtreesParams, ctx: &Ctx) -> Out {
    if p.max_fields > 64 {
        return Err(LabError::TooLarge { what: "max_fields".into(), value: p.max_fields as usize, cap: 64 }.into());
    }
    let (census, stream) = enumerate_trees(p.n_endpoints, p.h_root)?;
    let table = dimension_table(p.max_fields);
    let mut out = ctx.writer(cfg, json!({ "n_endpoints": p.n_endpoints, "h_root": p.h_root, "max_fields": p.max_fields }));
    let rows: Vec<Vec<Cell>> = stream
        .take(p.dump)
        .enumerate()
        .map(|(i, t)| {
            let parents: Vec<String> = t.shape.parent.iter().map(|q| q.map_or("-".into(), |v| v.to_string())).collect();
            let scales: Vec<String> = t.scales.iter().map(|s| s.to_string()).collect();
            vec![Cell::from(i), Cell::from(parents.join(" ")), Cell::from(scales.join(" "))]
        })
        .collect();
    out.csv("rgtrees.csv", &["index", "parents", "scales"], &rows)?;
    let below_one: Vec<_> = table.iter().filter(|e| e.fields.psi >= 2 && e.renormalized < 1).map(|e| e.fields).collect();
    out.json(
        "rgtrees.json",
        &json!({ "census": census, "dimension_table": table, "renormalized_below_one": below_one }),
    )?;
    Ok(out.written)
}

pub fn ed_check(cfg: &RunConfig, p: &EdCheckParams, ctx: &Ctx) -> Out {
    let (l1, rows) = p.parse_geometry()?;
    need_cylinder(cfg.model.boundary)?;
    if rows < 1 {
        return Err(LabError::InvalidParameter { name: "geometry".into(), reason: "need at least one row".into() }.into());
    }
    let mut mc = cfg.model.clone();
    mc.spinful = p.spinful;
    if mc.interaction.is_empty() && mc.nn_interaction.is_none() {
        mc.nn_interaction = Some(p.default_interaction);
    }
    let m = mc.build_with(Boundary::Cylinder, rows + 1)?;
    let mu = mc.mu;
    let sys = build_fock_system(&m, mu, p.lambda, l1, p.beta)?;
    let etas: Vec<f64> = p.matsubara.iter().map(|&n| 2.0 * PI * n as f64 / p.beta).collect();
    let active: Vec<usize> = m.active_rows().collect();
    let mut ward = Vec::new();
    for q in 0..l1 {
        let p1 = 2.0 * PI * q as f64 / l1 as f64;
        ward.extend(ed_ward_checks(&sys, &etas, p1, &[0, 1], Channel::Charge, &active)?);
    }
    let worst_ward = ward.iter().map(|r| r.relative()).fold(0.0, f64::max);
    // free comparison: bubble and Schwinger term on an L1-point ring
    let mut fc = mc.clone();
    fc.interaction.clear();
    fc.nn_interaction = None;
    let free_model = fc.build_with(Boundary::Cylinder, rows + 1)?;
    let free = build_fock_system(&free_model, mu, 0.0, l1, p.beta)?;
    let all: Vec<usize> = (0..m.rows()).collect();
    let mut oracle = Vec::new();
    let mut worst_bubble: f64 = 0.0;
    let p1 = 2.0 * PI / l1 as f64;
    for (mu_idx, nu_idx) in [(0, 0), (1, 1)] {
        let ed = ed_correlators(&free, mu_idx, nu_idx, &etas, p1, &all, &all, Channel::Charge)?;
        for (eta, e) in etas.iter().zip(&ed) {
            let b = bubble_correlator(
                &free_model,
                mu,
                &BubbleRequest {
                    beta: p.beta,
                    eta_beta: *eta,
                    p1,
                    n_k: l1,
                    mu_idx,
                    nu_idx,
                    channel: Channel::Charge,
                    x2_sets: vec![all.clone()],
                    y2_sets: vec![all.clone()],
                },
            )?
            .values[0][0];
            let rel = rel_dev(b, *e);
            worst_bubble = worst_bubble.max(rel);
            oracle.push(json!({ "mu": mu_idx, "nu": nu_idx, "eta_beta": eta, "bubble": b, "ed": e, "relative": rel }));
        }
    }
    let mut worst_delta: f64 = 0.0;
    let mut deltas = Vec::new();
    for &y2 in &active {
        let s = schwinger_term(&free_model, mu, p.beta, y2, l1)?;
        let e = ed_schwinger_term(&free, 0, y2);
        let rel = (s - e).abs() / s.abs().max(e.abs()).max(1e-300);
        worst_delta = worst_delta.max(rel);
        deltas.push(json!({ "y2": y2, "bubble": s, "ed": e, "relative": rel }));
    }
    let mut out = ctx.writer(cfg, json!({ "L1": l1, "rows": rows, "modes": sys.modes().len(), "beta": p.beta }));
    out.json(
        "ed_check.json",
        &json!({
            "lambda": p.lambda,
            "max_ward_relative": worst_ward,
            "ward": ward,
            "free_oracle": {
                "max_bubble_relative": worst_bubble,
                "max_schwinger_relative": worst_delta,
                "correlators": oracle,
                "schwinger": deltas,
            },
        }),
    )?;
    Ok(out.written)
}

fn rel_dev(a: C64, b: C64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}
