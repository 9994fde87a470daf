//! Current operators, free Euclidean correlators, the Schwinger term, lattice
//! Ward residuals and the edge transport coefficients.
//!
//! Fourier conventions: `c_k = L1^{-1/2} Σ_{x1} e^{i k x1} a_{x1}` and
//! `ĵ_{μ,p} = Σ_{x1} e^{i p x1} j_{μ,x}`, so a position-space term
//! `a+_{x1+s1} C a-_{x1+t1}` attached to `x1` becomes
//! `Σ_k c+_k [e^{i k s1 - i (k+p) t1} C] c_{k+p}`. Correlators are
//!
//! `C_μν(η, p1; x2, y2) = L1^{-1} ∫_0^β dτ e^{i η τ} <T ĵ_{μ,p1,x2}(τ) ; ĵ_{ν,-p1,y2}(0)>`.
//!
//! Bond currents use displacement semantics: the amplitude entering
//! `j_{u,w}` is `h(u1 - w1; u2, w2)` with the displacement taken literally,
//! which keeps the operators well defined when `L1 = 2`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::lattice::{active_hamiltonian, Boundary, LatticeModel};
use crate::linalg::{c, cis, eigh, pairwise_sum, CMat, C64, I};
use crate::spectral::{EdgeState, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Charge,
    Spin,
}

/// Operator term `coeff_{r r'} a+_{(x1+s1, u2), r} a-_{(x1+t1, w2), r'}`
/// belonging to the site `(x1, site_row)`.
#[derive(Debug, Clone)]
pub struct VertexTerm {
    pub site_row: usize,
    pub u2: usize,
    pub w2: usize,
    pub s1: i32,
    pub t1: i32,
    pub coeff: CMat,
}

type Bond = ((i32, i32), (i32, i32), f64);

// j_{1,x}: the e1 bond plus the four diagonal bonds crossing the column
// boundary x1 -> x1 + 1, each with weight 1/2
const J1_BONDS: [Bond; 5] = [
    ((0, 0), (1, 0), 1.0),
    ((0, 0), (1, -1), 0.5),
    ((0, 0), (1, 1), 0.5),
    ((0, -1), (1, 0), 0.5),
    ((0, 1), (1, 0), 0.5),
];

const J2_BONDS: [Bond; 5] = [
    ((0, 0), (0, 1), 1.0),
    ((0, 0), (-1, 1), 0.5),
    ((0, 0), (1, 1), 0.5),
    ((-1, 0), (0, 1), 0.5),
    ((1, 0), (0, 1), 0.5),
];

fn shift_row(m: &LatticeModel, x2: usize, d: i32) -> Option<usize> {
    let y = x2 as i64 + d as i64;
    match m.boundary() {
        Boundary::Torus => Some(y.rem_euclid(m.size() as i64) as usize),
        Boundary::Cylinder => (0..=m.size() as i64).contains(&y).then_some(y as usize),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum BondKind {
    /// `i a+_u h a_w - i a+_w h a_u`
    Current,
    /// `a+_u h a_w + a+_w h a_u`
    Kinetic,
}

fn bond_terms(m: &LatticeModel, bonds: &[Bond], kind: BondKind) -> Vec<VertexTerm> {
    let (f1, f2) = match kind {
        BondKind::Current => (I, -I),
        BondKind::Kinetic => (c(1.0, 0.0), c(1.0, 0.0)),
    };
    let mut out = Vec::new();
    for x2 in 0..m.rows() {
        for &((du1, du2), (dw1, dw2), wt) in bonds {
            let (Some(u2), Some(w2)) = (shift_row(m, x2, du2), shift_row(m, x2, dw2)) else { continue };
            let z = du1 - dw1;
            if let Some(h) = m.hopping().get(&(z, u2, w2)) {
                out.push(VertexTerm { site_row: x2, u2, w2, s1: du1, t1: dw1, coeff: h * faer::Scale(f1 * wt) });
            }
            if let Some(h) = m.hopping().get(&(-z, w2, u2)) {
                out.push(VertexTerm { site_row: x2, u2: w2, w2: u2, s1: dw1, t1: du1, coeff: h * faer::Scale(f2 * wt) });
            }
        }
    }
    out
}

fn density_terms(m: &LatticeModel) -> Vec<VertexTerm> {
    m.active_rows()
        .map(|x2| VertexTerm { site_row: x2, u2: x2, w2: x2, s1: 0, t1: 0, coeff: CMat::identity(m.dof(), m.dof()) })
        .collect()
}

/// Position-space terms of `j_{μ,x}` (`μ = 0` density, `1`, `2` currents).
pub fn current_terms(m: &LatticeModel, mu_idx: usize) -> Result<Vec<VertexTerm>> {
    match mu_idx {
        0 => Ok(density_terms(m)),
        1 => Ok(bond_terms(m, &J1_BONDS, BondKind::Current)),
        2 => Ok(bond_terms(m, &J2_BONDS, BondKind::Current)),
        _ => Err(LabError::param("mu_idx", format!("must be 0, 1 or 2, got {mu_idx}"))),
    }
}

/// Terms of the operator whose expectation is the Schwinger term
/// `Δ_{1,y2}`: the `τ` bonds of `j_{1,y}` with the same weights.
pub fn kinetic_terms(m: &LatticeModel) -> Vec<VertexTerm> {
    bond_terms(m, &J1_BONDS, BondKind::Kinetic)
}

/// `J_μ(k1, p1)` as a one-particle kernel on `(x2, r)`.
#[derive(Debug, Clone)]
pub struct CurrentVertex {
    pub mu_idx: usize,
    pub p1: f64,
    pub channel: Channel,
    pub terms: Vec<VertexTerm>,
    dof: usize,
    rows: usize,
    spin_signs: Vec<f64>,
}

pub fn build_current_vertex(m: &LatticeModel, mu_idx: usize, p1: f64, channel: Channel) -> Result<CurrentVertex> {
    Ok(CurrentVertex {
        mu_idx,
        p1,
        channel,
        terms: current_terms(m, mu_idx)?,
        dof: m.dof(),
        rows: m.rows(),
        spin_signs: (0..m.dof()).map(|r| m.spin_sign(r)).collect(),
    })
}

impl CurrentVertex {
    /// Kernel on the full `M * rows` space summed over the site rows in
    /// `rows` (all rows when `None`).
    pub fn at(&self, k1: f64, rows: Option<&[usize]>) -> CMat {
        let n = self.dof * self.rows;
        let mut out = CMat::zeros(n, n);
        let keep = row_mask(self.rows, rows);
        let sign = |r: usize| match self.channel {
            Channel::Charge => 1.0,
            Channel::Spin => self.spin_signs[r],
        };
        for t in self.terms.iter().filter(|t| keep[t.site_row]) {
            let ph = cis(k1 * t.s1 as f64 - (k1 + self.p1) * t.t1 as f64);
            for r in 0..self.dof {
                for rp in 0..self.dof {
                    let v = t.coeff[(r, rp)];
                    if v != c(0.0, 0.0) {
                        out[(t.u2 * self.dof + r, t.w2 * self.dof + rp)] += ph * v * sign(r);
                    }
                }
            }
        }
        out
    }
}

fn row_mask(rows: usize, sel: Option<&[usize]>) -> Vec<bool> {
    match sel {
        None => vec![true; rows],
        Some(s) => {
            let mut keep = vec![false; rows];
            for &x in s {
                if x < rows {
                    keep[x] = true;
                }
            }
            keep
        }
    }
}

/// Fermi function, with the step function at `β = ∞`.
pub fn fermi(beta: f64, xi: f64) -> f64 {
    if beta.is_infinite() {
        return if xi < 0.0 {
            1.0
        } else if xi > 0.0 {
            0.0
        } else {
            0.5
        };
    }
    if xi > 0.0 {
        let e = (-beta * xi).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + (beta * xi).exp())
    }
}

/// Nearest bosonic Matsubara frequency `2π n / β`.
pub fn snap_matsubara(eta: f64, beta: f64) -> f64 {
    let w = 2.0 * PI / beta;
    (eta / w).round() * w
}

/// Nearest grid momentum `2π m / n_k`; returns `(m, p1)`.
pub fn snap_momentum(p1: f64, n_k: usize) -> (i64, f64) {
    let m = (p1 * n_k as f64 / (2.0 * PI)).round() as i64;
    (m, 2.0 * PI * m as f64 / n_k as f64)
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(LabError::param("beta", format!("must be positive, got {beta}")));
    }
    Ok(())
}

fn check_nk(n_k: usize) -> Result<()> {
    if n_k < 2 {
        return Err(LabError::param("n_k", format!("must be at least 2, got {n_k}")));
    }
    Ok(())
}

fn on_matsubara(eta: f64, beta: f64) -> Result<()> {
    if beta.is_infinite() {
        return Ok(());
    }
    let n = eta * beta / (2.0 * PI);
    if (n - n.round()).abs() > 1e-9 * n.abs().max(1.0) {
        return Err(LabError::param("eta_beta", format!("{eta} is not a multiple of 2pi/beta")));
    }
    Ok(())
}

fn grid_index(p1: f64, n_k: usize) -> Result<i64> {
    let (m, snapped) = snap_momentum(p1, n_k);
    if (snapped - p1).abs() > 1e-9 {
        return Err(LabError::param("p1", format!("{p1} is not on the 2pi/{n_k} grid")));
    }
    Ok(m)
}

fn k_at(j: i64, n_k: usize) -> f64 {
    2.0 * PI * j.rem_euclid(n_k as i64) as f64 / n_k as f64
}

fn require_free(m: &LatticeModel) -> Result<()> {
    if m.has_interaction() {
        return Err(LabError::InvalidModel("free-fermion evaluation needs lambda = 0".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// one-loop engine

/// Vertex restricted to the active indices it touches.
struct SparseVertex {
    support: Vec<usize>,
    // (local i, local j, s1, t1, value)
    entries: Vec<(usize, usize, i32, i32, C64)>,
}

impl SparseVertex {
    fn new(m: &LatticeModel, terms: &[VertexTerm], keep: &[bool], sign: &dyn Fn(usize) -> f64) -> Self {
        let dof = m.dof();
        let first = m.active_rows().start;
        let active = m.active_rows();
        let mut raw = Vec::new();
        for t in terms.iter().filter(|t| keep[t.site_row]) {
            if !active.contains(&t.u2) || !active.contains(&t.w2) {
                continue;
            }
            for r in 0..dof {
                for rp in 0..dof {
                    let v = t.coeff[(r, rp)];
                    if v != c(0.0, 0.0) {
                        raw.push(((t.u2 - first) * dof + r, (t.w2 - first) * dof + rp, t.s1, t.t1, v * sign(r)));
                    }
                }
            }
        }
        let mut support: Vec<usize> = raw.iter().flat_map(|e| [e.0, e.1]).collect();
        support.sort_unstable();
        support.dedup();
        let pos = |i: usize| support.binary_search(&i).unwrap();
        let entries = raw.iter().map(|&(i, j, s, t, v)| (pos(i), pos(j), s, t, v)).collect();
        SparseVertex { support, entries }
    }

    fn dense(&self, k: f64, p: f64) -> CMat {
        let n = self.support.len();
        let mut out = CMat::zeros(n, n);
        for &(i, j, s1, t1, v) in &self.entries {
            out[(i, j)] += cis(k * s1 as f64 - (k + p) * t1 as f64) * v;
        }
        out
    }

    /// `U_left[S,:]† J_S(k, p) U_right[S,:]`
    fn sandwich(&self, k: f64, p: f64, left: &CMat, right: &CMat) -> CMat {
        let s = &self.support;
        let n = left.ncols();
        if s.is_empty() {
            return CMat::zeros(n, n);
        }
        let l = CMat::from_fn(s.len(), n, |i, j| left[(s[i], j)]);
        let r = CMat::from_fn(s.len(), n, |i, j| right[(s[i], j)]);
        let jr = &self.dense(k, p) * &r;
        l.adjoint() * &jr
    }
}

struct Job {
    slot: usize,
    eta: f64,
    a: usize,
    b: usize,
}

struct Engine<'a> {
    m: &'a LatticeModel,
    mu: f64,
    beta: f64,
    n_k: usize,
    slots: Vec<i64>,
    vertices: Vec<SparseVertex>,
    jobs: Vec<Job>,
    kinetic_rows: Vec<usize>,
    kinetic: Vec<VertexTerm>,
}

struct EngineOut {
    jobs: Vec<C64>,
    kinetic: Vec<f64>,
}

fn occupations(beta: f64, xi: &[f64]) -> Vec<f64> {
    xi.iter().map(|&x| fermi(beta, x)).collect()
}

fn pair_weight(beta: f64, eta: f64, xa: f64, xb: f64, na: f64, nb: f64) -> Result<C64> {
    if eta == 0.0 && (xa - xb).abs() <= 1e-10 {
        if beta.is_infinite() {
            if xa.abs() < 1e-12 {
                return Err(LabError::DegenerateAtFermi { energy: xa });
            }
            return Ok(c(0.0, 0.0));
        }
        let n = fermi(beta, 0.5 * (xa + xb));
        return Ok(c(beta * n * (1.0 - n), 0.0));
    }
    if nb == na {
        return Ok(c(0.0, 0.0));
    }
    Ok(c(nb - na, 0.0) / c(xa - xb, eta))
}

impl Engine<'_> {
    fn eig(&self, j: i64) -> Result<(Vec<f64>, CMat)> {
        let k = k_at(j, self.n_k);
        let e = eigh(&active_hamiltonian(self.m, k)).map_err(|_| LabError::EigenFailure { k1: k })?;
        Ok((e.values.iter().map(|x| x - self.mu).collect(), e.vectors))
    }

    fn at_k(&self, j: i64) -> Result<(Vec<C64>, Vec<f64>)> {
        let k = k_at(j, self.n_k);
        let (xa, ua) = self.eig(j)?;
        let na = occupations(self.beta, &xa);
        let mut vals = vec![c(0.0, 0.0); self.jobs.len()];
        for (slot, &mp) in self.slots.iter().enumerate() {
            let here: Vec<usize> = (0..self.jobs.len()).filter(|&q| self.jobs[q].slot == slot).collect();
            if here.is_empty() {
                continue;
            }
            let p = 2.0 * PI * mp as f64 / self.n_k as f64;
            let (xb, ub) = self.eig(j + mp)?;
            let nb = occupations(self.beta, &xb);
            let kp = k + p;
            let mut a_cache: Vec<Option<CMat>> = vec![None; self.vertices.len()];
            let mut b_cache: Vec<Option<CMat>> = vec![None; self.vertices.len()];
            for &q in &here {
                let job = &self.jobs[q];
                if a_cache[job.a].is_none() {
                    a_cache[job.a] = Some(self.vertices[job.a].sandwich(k, p, &ua, &ub));
                }
                if b_cache[job.b].is_none() {
                    b_cache[job.b] = Some(self.vertices[job.b].sandwich(kp, -p, &ub, &ua));
                }
                let at = a_cache[job.a].as_ref().unwrap();
                let bt = b_cache[job.b].as_ref().unwrap();
                let mut acc = c(0.0, 0.0);
                for a in 0..xa.len() {
                    for b in 0..xb.len() {
                        let w = pair_weight(self.beta, job.eta, xa[a], xb[b], na[a], nb[b])?;
                        if w != c(0.0, 0.0) {
                            acc += at[(a, b)] * bt[(b, a)] * w;
                        }
                    }
                }
                vals[q] = acc;
            }
        }
        let kin = if self.kinetic_rows.is_empty() {
            vec![]
        } else {
            kinetic_at_k(self.m, &self.kinetic, k, &ua, &na, &self.kinetic_rows)
        };
        Ok((vals, kin))
    }

    fn run(&self) -> Result<EngineOut> {
        let per_k: Vec<(Vec<C64>, Vec<f64>)> =
            (0..self.n_k as i64).into_par_iter().map(|j| self.at_k(j)).collect::<Result<_>>()?;
        let nk = self.n_k as f64;
        let jobs = (0..self.jobs.len())
            .map(|q| pairwise_sum(&per_k.iter().map(|v| v.0[q]).collect::<Vec<_>>()) / nk)
            .collect();
        let kinetic = (0..self.kinetic_rows.len())
            .map(|q| crate::linalg::pairwise_sum_real(&per_k.iter().map(|v| v.1[q]).collect::<Vec<_>>()) / nk)
            .collect();
        Ok(EngineOut { jobs, kinetic })
    }
}

/// `Σ_k`-summand of `<τ-operator at row y2>`: `Σ_terms e^{ik(s1-t1)} C_{rr'} <c+_{u2 r} c_{w2 r'}>_k`.
fn kinetic_at_k(m: &LatticeModel, terms: &[VertexTerm], k: f64, u: &CMat, n: &[f64], rows: &[usize]) -> Vec<f64> {
    let dof = m.dof();
    let first = m.active_rows().start;
    let active = m.active_rows();
    // <c+_i c_j> = Σ_q conj(U_iq) U_jq n_q
    let corr = |i: usize, j: usize| -> C64 { (0..n.len()).map(|q| u[(i, q)].conj() * u[(j, q)] * n[q]).sum() };
    rows.iter()
        .map(|&y2| {
            let mut acc = c(0.0, 0.0);
            for t in terms.iter().filter(|t| t.site_row == y2) {
                if !active.contains(&t.u2) || !active.contains(&t.w2) {
                    continue;
                }
                let ph = cis(k * (t.s1 - t.t1) as f64);
                for r in 0..dof {
                    for rp in 0..dof {
                        let v = t.coeff[(r, rp)];
                        if v != c(0.0, 0.0) {
                            acc += ph * v * corr((t.u2 - first) * dof + r, (t.w2 - first) * dof + rp);
                        }
                    }
                }
            }
            acc.re
        })
        .collect()
}

/// Spin blocks to evaluate and the multiplicity of each (2 for a reused
/// identical block).
fn blocks_for(m: &LatticeModel) -> Vec<(LatticeModel, f64, f64)> {
    let blocks = m.spin_blocks();
    if !m.is_spinful() {
        return vec![(blocks[0].clone(), 1.0, 1.0)];
    }
    if m.spin_blocks_identical() {
        // the spin sign enters squared in every same-channel correlator
        return vec![(blocks[0].clone(), 2.0, 1.0)];
    }
    blocks.into_iter().zip([1.0, -1.0]).map(|(b, s)| (b, 1.0, s)).collect()
}

// ---------------------------------------------------------------------------
// public correlators

#[derive(Debug, Clone, Serialize)]
pub struct CorrelatorResult {
    /// `values[i][j]` for `x2_sets[i]`, `y2_sets[j]` (each set summed).
    pub values: Vec<Vec<C64>>,
    pub x2_sets: Vec<Vec<usize>>,
    pub y2_sets: Vec<Vec<usize>>,
    pub beta: f64,
    pub n_k: usize,
    pub eta_beta: f64,
    pub p1: f64,
    pub mu_idx: usize,
    pub nu_idx: usize,
    pub channel: Channel,
}

#[derive(Debug, Clone)]
pub struct BubbleRequest {
    pub beta: f64,
    /// Must be a multiple of `2π/β`.
    pub eta_beta: f64,
    /// Must be a multiple of `2π/n_k`.
    pub p1: f64,
    pub n_k: usize,
    pub mu_idx: usize,
    pub nu_idx: usize,
    pub channel: Channel,
    pub x2_sets: Vec<Vec<usize>>,
    pub y2_sets: Vec<Vec<usize>>,
}

/// Connected time-ordered correlator of two vertices as a one-loop sum over
/// eigenmode pairs of `Ĥ(k1)` and `Ĥ(k1 + p1)` on an `n_k`-point ring.
pub fn bubble_correlator(m: &LatticeModel, mu: f64, req: &BubbleRequest) -> Result<CorrelatorResult> {
    require_free(m)?;
    check_beta(req.beta)?;
    check_nk(req.n_k)?;
    on_matsubara(req.eta_beta, req.beta)?;
    let mp = grid_index(req.p1, req.n_k)?;
    current_terms(m, req.mu_idx)?;
    current_terms(m, req.nu_idx)?;
    let nx = req.x2_sets.len();
    let ny = req.y2_sets.len();
    let mut values = vec![vec![c(0.0, 0.0); ny]; nx];
    for (b, mult, sigma) in blocks_for(m) {
        let sign = |ch: Channel| if ch == Channel::Spin { sigma } else { 1.0 };
        let ta = current_terms(&b, req.mu_idx)?;
        let tb = current_terms(&b, req.nu_idx)?;
        let one = |_: usize| 1.0;
        let mut vertices: Vec<SparseVertex> =
            req.x2_sets.iter().map(|s| SparseVertex::new(&b, &ta, &row_mask(b.rows(), Some(s)), &one)).collect();
        vertices.extend(req.y2_sets.iter().map(|s| SparseVertex::new(&b, &tb, &row_mask(b.rows(), Some(s)), &one)));
        let jobs = (0..nx)
            .flat_map(|i| (0..ny).map(move |j| Job { slot: 0, eta: req.eta_beta, a: i, b: nx + j }))
            .collect();
        let engine = Engine {
            m: &b,
            mu,
            beta: req.beta,
            n_k: req.n_k,
            slots: vec![mp],
            vertices,
            jobs,
            kinetic_rows: vec![],
            kinetic: vec![],
        };
        let out = engine.run()?;
        let w = mult * sign(req.channel) * sign(req.channel);
        for i in 0..nx {
            for j in 0..ny {
                values[i][j] += out.jobs[i * ny + j] * w;
            }
        }
    }
    Ok(CorrelatorResult {
        values,
        x2_sets: req.x2_sets.clone(),
        y2_sets: req.y2_sets.clone(),
        beta: req.beta,
        n_k: req.n_k,
        eta_beta: req.eta_beta,
        p1: req.p1,
        mu_idx: req.mu_idx,
        nu_idx: req.nu_idx,
        channel: req.channel,
    })
}

/// Schwinger terms `Δ_{1,y2}` for the requested rows, from the one-particle
/// density matrix on an `n_k`-point ring. Spin blocks are summed (the spin
/// channel has the same contact term).
pub fn schwinger_terms(m: &LatticeModel, mu: f64, beta: f64, rows: &[usize], n_k: usize) -> Result<Vec<f64>> {
    require_free(m)?;
    check_beta(beta)?;
    check_nk(n_k)?;
    let mut out = vec![0.0; rows.len()];
    for (b, mult, _) in blocks_for(m) {
        let engine = Engine {
            m: &b,
            mu,
            beta,
            n_k,
            slots: vec![],
            vertices: vec![],
            jobs: vec![],
            kinetic_rows: rows.to_vec(),
            kinetic: kinetic_terms(&b),
        };
        let r = engine.run()?;
        for (o, v) in out.iter_mut().zip(r.kinetic) {
            *o += mult * v;
        }
    }
    Ok(out)
}

pub fn schwinger_term(m: &LatticeModel, mu: f64, beta: f64, y2: usize, n_k: usize) -> Result<f64> {
    Ok(schwinger_terms(m, mu, beta, &[y2], n_k)?[0])
}

// ---------------------------------------------------------------------------
// two-point function

/// Imaginary-time kernel of one mode, `<T a(τ) a+(0)>` for energy `ξ`,
/// extended antiperiodically; `τ = nβ` uses the `0⁻` limit.
pub fn mode_propagator(beta: f64, xi: f64, tau: f64) -> f64 {
    // τ = τ' + nβ with τ' in (-β, 0]
    let n = (tau / beta).ceil();
    let mut tp = tau - n * beta;
    if tp > 0.0 {
        tp -= beta;
    }
    let sign = if (n as i64).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    if tp == 0.0 {
        return -sign * fermi(beta, xi);
    }
    // τ' in (-β, 0): -e^{-ξτ'} n(ξ)
    let a = -tp;
    let v = if xi > 0.0 {
        (xi * (a - beta)).exp() / (1.0 + (-beta * xi).exp())
    } else {
        (xi * a).exp() / (1.0 + (beta * xi).exp())
    };
    -sign * v
}

/// A space-time point `(x0, x1, x2)`.
pub type Point = (f64, i64, usize);

/// Free Euclidean two-point function `<T a-_{x,r} a+_{y,r'}>` as an `M x M`
/// matrix, on an `n_k`-point ring in the `x1` direction.
pub fn schwinger_2pt_free(m: &LatticeModel, mu: f64, beta: f64, x: Point, y: Point, n_k: usize) -> Result<CMat> {
    require_free(m)?;
    check_beta(beta)?;
    check_nk(n_k)?;
    if !beta.is_finite() {
        return Err(LabError::param("beta", "must be finite"));
    }
    let active = m.active_rows();
    for (name, r) in [("x2", x.2), ("y2", y.2)] {
        if !active.contains(&r) {
            return Err(LabError::param(name, format!("row {r} is not an active row")));
        }
    }
    let dof = m.dof();
    let tau = x.0 - y.0;
    let dx1 = (x.1 - y.1) as f64;
    let mut out = CMat::zeros(dof, dof);
    let blocks = m.spin_blocks();
    let bd = m.block_dof();
    for (s, b) in blocks.iter().enumerate() {
        let first = b.active_rows().start;
        let per_k: Vec<CMat> = (0..n_k as i64)
            .into_par_iter()
            .map(|j| {
                let k = k_at(j, n_k);
                let e = eigh(&active_hamiltonian(b, k)).map_err(|_| LabError::EigenFailure { k1: k })?;
                let ph = cis(-k * dx1);
                let g: Vec<f64> = e.values.iter().map(|&ev| mode_propagator(beta, ev - mu, tau)).collect();
                Ok(CMat::from_fn(bd, bd, |r, rp| {
                    let i = (x.2 - first) * bd + r;
                    let jj = (y.2 - first) * bd + rp;
                    let v: C64 = (0..g.len()).map(|q| e.vectors[(i, q)] * e.vectors[(jj, q)].conj() * g[q]).sum();
                    ph * v
                }))
            })
            .collect::<Result<_>>()?;
        for r in 0..bd {
            for rp in 0..bd {
                let xs: Vec<C64> = per_k.iter().map(|mk| mk[(r, rp)]).collect();
                out[(s * bd + r, s * bd + rp)] = pairwise_sum(&xs) / n_k as f64;
            }
        }
    }
    Ok(out)
}

/// Massless edge term of the two-point function:
/// `Σ_e e^{-i k_F dx1} ξ(x2) ξ(y2)* / (2π (|v| dx0 + i ω dx1))`.
pub fn edge_pole_2pt(m: &LatticeModel, edges: &[EdgeState], x: Point, y: Point) -> Result<CMat> {
    let dx0 = x.0 - y.0;
    let dx1 = (x.1 - y.1) as f64;
    if dx0 == 0.0 && dx1 == 0.0 {
        return Err(LabError::OriginSingularity);
    }
    let dof = m.dof();
    let mut out = CMat::zeros(dof, dof);
    for e in edges {
        let v = e.velocity_refined;
        let den = c(2.0 * PI * v.abs() * dx0, 2.0 * PI * e.omega as f64 * dx1);
        let ph = cis(-e.k_f * dx1) / den;
        for r in 0..dof {
            for rp in 0..dof {
                out[(r, rp)] += ph * e.wavefunction[m.index(x.2, r)] * e.wavefunction[m.index(y.2, rp)].conj();
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Ward identity

#[derive(Debug, Clone, Serialize)]
pub struct WardResidual {
    /// `|Σ_μ η_μ p_μ Σ_{x2} C_μν + η_ν p_ν Δ_ν|`
    pub residual: f64,
    /// Largest of `|Σ_{x2} C_0ν|`, `|Σ_{x2} C_1ν|`, `|Δ_{1,y2}|`.
    pub scale: f64,
    pub eta_beta: f64,
    pub p1: f64,
    pub nu_idx: usize,
    pub y2: usize,
    pub channel: Channel,
}

impl WardResidual {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.residual
        } else {
            self.residual / self.scale
        }
    }
}

/// Assemble the summed Ward identity from its pieces; `η_0 p_0 = i p0`,
/// `η_1 p_1 = i (1 - e^{i p1})`. `delta` enters the identity only for
/// `ν = 1` but always sets the scale. Returns `(residual, scale)`.
pub fn ward_combination(eta_beta: f64, p1: f64, s0: C64, s1: C64, delta: f64, nu_idx: usize) -> (f64, f64) {
    let e0 = I * eta_beta;
    let e1 = I * (c(1.0, 0.0) - cis(p1));
    let contact = if nu_idx == 1 { e1 * delta } else { c(0.0, 0.0) };
    let r = e0 * s0 + e1 * s1 + contact;
    (r.norm(), s0.norm().max(s1.norm()).max(delta.abs()))
}

#[allow(clippy::too_many_arguments)]
pub fn ward_residual(
    m: &LatticeModel,
    mu: f64,
    beta: f64,
    n_k: usize,
    eta_beta: f64,
    p1: f64,
    nu_idx: usize,
    channel: Channel,
    y2: usize,
) -> Result<WardResidual> {
    if nu_idx > 1 {
        return Err(LabError::param("nu_idx", "must be 0 or 1"));
    }
    let all: Vec<usize> = (0..m.rows()).collect();
    let corr = |mu_idx: usize| {
        bubble_correlator(
            m,
            mu,
            &BubbleRequest {
                beta,
                eta_beta,
                p1,
                n_k,
                mu_idx,
                nu_idx,
                channel,
                x2_sets: vec![all.clone()],
                y2_sets: vec![vec![y2]],
            },
        )
        .map(|r| r.values[0][0])
    };
    let s0 = corr(0)?;
    let s1 = corr(1)?;
    let delta = schwinger_term(m, mu, beta, y2, n_k)?;
    let (residual, scale) = ward_combination(eta_beta, p1, s0, s1, delta, nu_idx);
    Ok(WardResidual { residual, scale, eta_beta, p1, nu_idx, y2, channel })
}

// ---------------------------------------------------------------------------
// edge transport

#[derive(Debug, Clone, Serialize)]
pub struct EdgeConductance {
    /// `G^a_{μν}`, `μ, ν ∈ {0, 1}`.
    pub g: [[C64; 2]; 2],
    pub a: usize,
    pub a_prime: usize,
    pub eta_raw: f64,
    pub eta_beta: f64,
    pub p1_raw: f64,
    pub p1: f64,
    pub beta: f64,
    pub n_k: usize,
    pub channel: Channel,
}

fn check_strip(m: &LatticeModel, a: usize, a_prime: usize) -> Result<()> {
    if m.boundary() != Boundary::Cylinder {
        return Err(LabError::WrongBoundary("edge conductances need a cylinder model".into()));
    }
    if a_prime < 1 || a <= a_prime {
        return Err(LabError::param("a", format!("need a > a' >= 1, got a = {a}, a' = {a_prime}")));
    }
    if a >= m.size() {
        return Err(LabError::param("a", format!("must be below L = {}", m.size())));
    }
    Ok(())
}

/// Evaluate `G^a` at several `(η, p1)` points sharing one k-ring pass.
fn conductance_batch(
    m: &LatticeModel,
    mu: f64,
    beta: f64,
    a: usize,
    a_prime: usize,
    points: &[(f64, f64)],
    channel: Channel,
    n_k: usize,
) -> Result<Vec<EdgeConductance>> {
    require_free(m)?;
    check_beta(beta)?;
    check_nk(n_k)?;
    check_strip(m, a, a_prime)?;
    let snapped: Vec<(f64, i64, f64)> = points
        .iter()
        .map(|&(eta, p1)| {
            let (mp, ps) = snap_momentum(p1, n_k);
            (if beta.is_finite() { snap_matsubara(eta, beta) } else { eta }, mp, ps)
        })
        .collect();
    let left: Vec<usize> = (0..=a).collect();
    let right: Vec<usize> = (0..=a_prime).collect();
    let mut raw = vec![[[c(0.0, 0.0); 2]; 2]; points.len()];
    let mut delta = 0.0;
    for (b, mult, _sigma) in blocks_for(m) {
        let one = |_: usize| 1.0;
        let lm = row_mask(b.rows(), Some(&left));
        let rm = row_mask(b.rows(), Some(&right));
        // 0: ρ≤a, 1: j1≤a, 2: ρ≤a', 3: j1≤a'
        let vertices = vec![
            SparseVertex::new(&b, &current_terms(&b, 0)?, &lm, &one),
            SparseVertex::new(&b, &current_terms(&b, 1)?, &lm, &one),
            SparseVertex::new(&b, &current_terms(&b, 0)?, &rm, &one),
            SparseVertex::new(&b, &current_terms(&b, 1)?, &rm, &one),
        ];
        let mut jobs = Vec::new();
        for (slot, s) in snapped.iter().enumerate() {
            for mu_i in 0..2 {
                for nu_i in 0..2 {
                    jobs.push(Job { slot, eta: s.0, a: mu_i, b: 2 + nu_i });
                }
            }
        }
        let engine = Engine {
            m: &b,
            mu,
            beta,
            n_k,
            slots: snapped.iter().map(|s| s.1).collect(),
            vertices,
            jobs,
            kinetic_rows: right.clone(),
            kinetic: kinetic_terms(&b),
        };
        let out = engine.run()?;
        for (slot, r) in raw.iter_mut().enumerate() {
            for mu_i in 0..2 {
                for nu_i in 0..2 {
                    r[mu_i][nu_i] += out.jobs[slot * 4 + mu_i * 2 + nu_i] * mult;
                }
            }
        }
        delta += mult * out.kinetic.iter().sum::<f64>();
    }
    Ok(raw
        .into_iter()
        .zip(points.iter().zip(&snapped))
        .map(|(r, (&(eta, p1), s))| {
            let mut g = r;
            g[1][1] += c(delta, 0.0);
            g[1][0] = -g[1][0];
            g[1][1] = -g[1][1];
            EdgeConductance {
                g,
                a,
                a_prime,
                eta_raw: eta,
                eta_beta: s.0,
                p1_raw: p1,
                p1: s.2,
                beta,
                n_k,
                channel,
            }
        })
        .collect())
}

/// `G^a_{μν}(η, p1) = (-1)^{δ_{μ1}} Σ_{y2≤a'} [Σ_{x2≤a} C_μν(x2, y2) + Δ_μ δ_μν]`
/// with `η` snapped to the Matsubara lattice and `p1` to the `n_k` ring.
#[allow(clippy::too_many_arguments)]
pub fn edge_conductance_matrix(
    m: &LatticeModel,
    mu: f64,
    beta: f64,
    a: usize,
    a_prime: usize,
    eta: f64,
    p1: f64,
    channel: Channel,
    n_k: usize,
) -> Result<EdgeConductance> {
    Ok(conductance_batch(m, mu, beta, a, a_prime, &[(eta, p1)], channel, n_k)?.remove(0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportRequest {
    pub beta: f64,
    /// Strictly decreasing.
    pub eps: Vec<f64>,
    pub a: usize,
    pub a_prime: usize,
    pub n_k: usize,
    pub channel: Channel,
}

impl TransportRequest {
    pub fn new(beta: f64, eps: Vec<f64>, a: usize, a_prime: usize) -> Self {
        Self { beta, eps, a, a_prime, n_k: 4096, channel: Channel::Charge }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitEstimate {
    /// Extrapolated real part.
    pub value: f64,
    /// Extrapolated imaginary part (tends to zero).
    pub imag: f64,
    /// `|P_n - P_{n-1}|` of the real part: full extrapolation vs the one
    /// without the largest `ε`.
    pub error: f64,
    pub raw: Vec<C64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathPoint {
    pub eps: f64,
    /// Realized outer variable (`p1` on the `η`-first path, `η_β` on the
    /// `p1`-first path).
    pub x: f64,
    pub eta_beta: f64,
    pub p1: f64,
    pub g: [[C64; 2]; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct TransportCoefficients {
    pub kappa: LimitEstimate,
    #[serde(rename = "D")]
    pub d: LimitEstimate,
    #[serde(rename = "G")]
    pub g: LimitEstimate,
    #[serde(rename = "G_tilde")]
    pub g_tilde: LimitEstimate,
    /// `G_00` on the `p1`-first path at the smallest `ε`.
    pub reversed_g00: C64,
    /// `p1 = ε`, `η = p1²`
    pub path_eta_first: Vec<PathPoint>,
    /// `η = ε`, `p1 = η²`
    pub path_p_first: Vec<PathPoint>,
    pub request: TransportRequest,
}

/// Value at 0 of the polynomial through `(x_i, y_i)` (Neville).
pub fn extrapolate_to_zero(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut p = y.to_vec();
    for d in 1..n {
        for i in 0..n - d {
            p[i] = (p[i + 1] * x[i] - p[i] * x[i + d]) / (x[i] - x[i + d]);
        }
    }
    p[0]
}

/// Real part extrapolated in `x²`, imaginary part in `x`. The leading odd
/// correction of the edge kernels, `∓ i v p1/η` or `± i η/(v p1)`, is
/// purely imaginary, so the real part has an even expansion.
pub fn limit_estimate(x: &[f64], raw: Vec<C64>) -> Result<LimitEstimate> {
    let x2: Vec<f64> = x.iter().map(|v| v * v).collect();
    let re: Vec<f64> = raw.iter().map(|z| z.re).collect();
    let im: Vec<f64> = raw.iter().map(|z| z.im).collect();
    let value = extrapolate_to_zero(&x2, &re);
    let imag = extrapolate_to_zero(x, &im);
    let n = raw.len();
    let (error, step) = if n >= 2 {
        ((value - extrapolate_to_zero(&x2[1..], &re[1..])).abs(), (re[n - 1] - re[n - 2]).abs())
    } else {
        (f64::NAN, f64::NAN)
    };
    if n >= 3 && error > 10.0 * step.max(1e-12 * value.abs()) {
        return Err(LabError::NonConvergent(format!(
            "extrapolations differ by {error:.3e}, last raw step {step:.3e}"
        )));
    }
    Ok(LimitEstimate { value, imag, error, raw })
}

/// `κ, G` along `p1 = ε, η = p1²`; `D, G̃` along `η = ε, p1 = η²`. The
/// outer variable is snapped first (momentum ring, Matsubara lattice) and the
/// inner one is derived from the snapped value and snapped in turn.
pub fn transport_limits(m: &LatticeModel, mu: f64, req: &TransportRequest) -> Result<TransportCoefficients> {
    if req.eps.is_empty() || req.eps.iter().any(|&e| !(e > 0.0)) {
        return Err(LabError::param("eps", "need a non-empty list of positive values"));
    }
    if req.eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LabError::param("eps", "must be strictly decreasing"));
    }
    check_beta(req.beta)?;
    check_nk(req.n_k)?;
    if !req.beta.is_finite() {
        return Err(LabError::param("beta", "must be finite"));
    }
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut outer: Vec<f64> = Vec::new();
    for &e in &req.eps {
        let p = snap_momentum(e, req.n_k).1;
        pts.push((snap_matsubara(p * p, req.beta), p));
        outer.push(p);
    }
    for &e in &req.eps {
        let eta = snap_matsubara(e, req.beta);
        pts.push((eta, snap_momentum(eta * eta, req.n_k).1));
        outer.push(eta);
    }
    let n = req.eps.len();
    for half in [&outer[..n], &outer[n..]] {
        if half.iter().any(|&x| x <= 0.0) || half.windows(2).any(|w| w[1] >= w[0]) {
            return Err(LabError::param(
                "eps",
                format!("snapped outer variables {half:?} are not strictly decreasing and positive; refine n_k or beta"),
            ));
        }
    }
    let all = conductance_batch(m, mu, req.beta, req.a, req.a_prime, &pts, req.channel, req.n_k)?;
    let path = |range: std::ops::Range<usize>| -> Vec<PathPoint> {
        range
            .map(|i| PathPoint {
                eps: req.eps[i % n],
                x: outer[i],
                eta_beta: all[i].eta_beta,
                p1: all[i].p1,
                g: all[i].g,
            })
            .collect()
    };
    let first = path(0..n);
    let second = path(n..2 * n);
    let series = |path: &[PathPoint], i: usize, j: usize| path.iter().map(|p| p.g[i][j]).collect::<Vec<_>>();
    Ok(TransportCoefficients {
        kappa: limit_estimate(&outer[..n], series(&first, 0, 0))?,
        g: limit_estimate(&outer[..n], series(&first, 0, 1))?,
        d: limit_estimate(&outer[n..], series(&second, 1, 1))?,
        g_tilde: limit_estimate(&outer[n..], series(&second, 1, 0))?,
        reversed_g00: second[n - 1].g[0][0],
        path_eta_first: first,
        path_p_first: second,
        request: req.clone(),
    })
}

/// Free-fermion expectations from edge data on the `x2 = 0` side:
/// `(κ, D, G, G̃) = (Σ 1/(2π|v|), Σ |v|/2π, -Σ ω/2π, -Σ ω/2π)`.
pub fn free_edge_expectation(edges: &[EdgeState]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for e in edges.iter().filter(|e| e.side == Side::Lower) {
        let v = e.velocity_refined.abs();
        out[0] += 1.0 / (2.0 * PI * v);
        out[1] += v / (2.0 * PI);
        out[2] -= e.omega as f64 / (2.0 * PI);
    }
    out[3] = out[2];
    out
}
