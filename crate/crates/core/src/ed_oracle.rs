//! Brute-force many-body exact diagonalization on tiny lattices.
//!
//! The Fock space of `L1 x rows x M <= 14` modes is split by particle
//! number and each block is diagonalized densely. All thermal quantities use
//! energies measured from the ground energy, so no exponent is positive.
//!
//! The Hamiltonian is
//! `Σ a+ H a + λ Σ (ρ_x - 1/2) w(x, y) (ρ_y - 1/2) - μ N`
//! with the hopping and interaction kernels of the lattice model laid out on
//! an `L1`-periodic strip; displacements wrap modulo `L1`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::lattice::LatticeModel;
use crate::linalg::{c, cis, eigh, CMat, C64, I};
use crate::response::{current_terms, kinetic_terms, ward_combination, Channel, Point, VertexTerm, WardResidual};

pub const MAX_MODES: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Mode {
    pub x1: usize,
    pub x2: usize,
    pub r: usize,
}

#[derive(Debug, Clone)]
struct Block {
    states: Vec<u32>,
    energies: Vec<f64>,
    vectors: CMat,
}

/// One-body operator `Σ_ij K_ij a+_i a-_j` on the mode space.
#[derive(Debug, Clone)]
pub struct QuadOp {
    pub kernel: CMat,
}

#[derive(Debug, Clone)]
pub struct FockSystem {
    model: LatticeModel,
    lambda: f64,
    mu: f64,
    l1: usize,
    beta: f64,
    rows: Vec<usize>,
    modes: Vec<Mode>,
    /// Position of each Fock state inside its particle-number block.
    position: Vec<u32>,
    blocks: Vec<Block>,
    e0: f64,
    /// `e^{-β(E - E0)} / Z'` per block.
    weights: Vec<Vec<f64>>,
    h1: CMat,
    pairs: Vec<(usize, usize, f64)>,
    rho: OnceLock<CMat>,
}

#[inline]
fn parity_below(s: u32, i: usize) -> bool {
    (s & ((1u32 << i) - 1)).count_ones() % 2 == 1
}

/// `a+_i a-_j |s>` as `(sign, s')`.
#[inline]
fn hop_state(i: usize, j: usize, s: u32) -> Option<(f64, u32)> {
    if s & (1 << j) == 0 {
        return None;
    }
    let p1 = parity_below(s, j);
    let s1 = s ^ (1 << j);
    if s1 & (1 << i) != 0 {
        return None;
    }
    let p2 = parity_below(s1, i);
    Some((if p1 ^ p2 { -1.0 } else { 1.0 }, s1 | (1 << i)))
}

fn nonzeros(k: &CMat) -> Vec<(usize, usize, C64)> {
    let mut out = Vec::new();
    for j in 0..k.ncols() {
        for i in 0..k.nrows() {
            if k[(i, j)] != c(0.0, 0.0) {
                out.push((i, j, k[(i, j)]));
            }
        }
    }
    out
}

/// Many-body spectrum of `m` on an `l1`-periodic strip at coupling `lambda`
/// (multiplying the interaction kernel of `m`).
pub fn build_fock_system(m: &LatticeModel, mu: f64, lambda: f64, l1: usize, beta: f64) -> Result<FockSystem> {
    if l1 < 2 {
        return Err(LabError::param("L1", format!("must be at least 2, got {l1}")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(LabError::param("beta", format!("must be positive and finite, got {beta}")));
    }
    if !lambda.is_finite() || !mu.is_finite() {
        return Err(LabError::param("lambda", "lambda and mu must be finite"));
    }
    let rows: Vec<usize> = m.active_rows().collect();
    let dof = m.dof();
    let n_modes = l1 * rows.len() * dof;
    if n_modes > MAX_MODES {
        return Err(LabError::TooLarge { what: "modes".into(), value: n_modes, cap: MAX_MODES });
    }
    let mut modes = Vec::with_capacity(n_modes);
    for x1 in 0..l1 {
        for &x2 in &rows {
            for r in 0..dof {
                modes.push(Mode { x1, x2, r });
            }
        }
    }
    let q_of = |x2: usize| rows.iter().position(|&r| r == x2);
    let idx = |x1: i64, q: usize, r: usize| (x1.rem_euclid(l1 as i64) as usize * rows.len() + q) * dof + r;

    let mut h1 = CMat::zeros(n_modes, n_modes);
    for (&(z1, x2, y2), blk) in m.hopping() {
        let (Some(qx), Some(qy)) = (q_of(x2), q_of(y2)) else { continue };
        for x1 in 0..l1 as i64 {
            for r in 0..dof {
                for rp in 0..dof {
                    h1[(idx(x1, qx, r), idx(x1 - z1 as i64, qy, rp))] += blk[(r, rp)];
                }
            }
        }
    }
    let mut pairs = Vec::new();
    if lambda != 0.0 {
        for (&(z1, x2, y2), blk) in m.interaction() {
            let (Some(qx), Some(qy)) = (q_of(x2), q_of(y2)) else { continue };
            for x1 in 0..l1 as i64 {
                for r in 0..dof {
                    for rp in 0..dof {
                        let w = blk[r * dof + rp];
                        if w != 0.0 {
                            pairs.push((idx(x1, qx, r), idx(x1 - z1 as i64, qy, rp), lambda * w));
                        }
                    }
                }
            }
        }
    }

    let mut by_n: Vec<Vec<u32>> = vec![Vec::new(); n_modes + 1];
    for s in 0..(1u32 << n_modes) {
        by_n[s.count_ones() as usize].push(s);
    }
    let mut position = vec![0u32; 1 << n_modes];
    for states in &by_n {
        for (p, &s) in states.iter().enumerate() {
            position[s as usize] = p as u32;
        }
    }
    let hop_nz = nonzeros(&h1);
    let blocks: Vec<Block> = by_n
        .into_par_iter()
        .map(|states| {
            let d = states.len();
            let mut h = CMat::zeros(d, d);
            for (col, &s) in states.iter().enumerate() {
                let occ = |i: usize| if s & (1 << i) != 0 { 1.0 } else { 0.0 };
                let mut diag = -mu * s.count_ones() as f64;
                for &(i, j, w) in &pairs {
                    diag += w * (occ(i) - 0.5) * (occ(j) - 0.5);
                }
                h[(col, col)] += c(diag, 0.0);
                for &(i, j, v) in &hop_nz {
                    if let Some((sg, s2)) = hop_state(i, j, s) {
                        h[(position[s2 as usize] as usize, col)] += v * sg;
                    }
                }
            }
            let e = eigh(&h).map_err(|_| LabError::EigenFailure { k1: f64::NAN })?;
            Ok(Block { states, energies: e.values, vectors: e.vectors })
        })
        .collect::<Result<_>>()?;
    let e0 = blocks.iter().flat_map(|b| b.energies.iter().copied()).fold(f64::INFINITY, f64::min);
    let mut sys = FockSystem {
        model: m.clone(),
        lambda,
        mu,
        l1,
        beta,
        rows,
        modes,
        position,
        blocks,
        e0,
        weights: vec![],
        h1,
        pairs,
        rho: OnceLock::new(),
    };
    sys.set_beta(beta)?;
    Ok(sys)
}

impl FockSystem {
    /// Recompute the Gibbs weights; the spectrum is reused.
    pub fn set_beta(&mut self, beta: f64) -> Result<()> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(LabError::param("beta", format!("must be positive and finite, got {beta}")));
        }
        self.beta = beta;
        self.rho = OnceLock::new();
        let raw: Vec<Vec<f64>> =
            self.blocks.iter().map(|b| b.energies.iter().map(|&e| (-beta * (e - self.e0)).exp()).collect()).collect();
        let z: f64 = raw.iter().flatten().sum();
        self.weights = raw.into_iter().map(|v| v.into_iter().map(|w| w / z).collect()).collect();
        Ok(())
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        let mut s = self.clone();
        s.set_beta(beta)?;
        Ok(s)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn l1(&self) -> usize {
        self.l1
    }
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }
    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }
    pub fn model(&self) -> &LatticeModel {
        &self.model
    }
    pub fn ground_energy(&self) -> f64 {
        self.e0
    }
    /// One-particle kernel on the mode space.
    pub fn one_particle_hamiltonian(&self) -> &CMat {
        &self.h1
    }

    pub fn mode_index(&self, x1: i64, x2: usize, r: usize) -> Option<usize> {
        let q = self.rows.iter().position(|&y| y == x2)?;
        let dof = self.model.dof();
        (r < dof).then(|| (x1.rem_euclid(self.l1 as i64) as usize * self.rows.len() + q) * dof + r)
    }

    /// Eigenvalues of the block with `n` particles (including `-μ n`).
    pub fn block_energies(&self, n: usize) -> &[f64] {
        &self.blocks[n].energies
    }

    /// All `(N, E)` pairs, ascending in `E`.
    pub fn spectrum(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> =
            self.blocks.iter().enumerate().flat_map(|(n, b)| b.energies.iter().map(move |&e| (n, e))).collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1));
        out
    }

    /// `Σ_n e^{-β(E_n - E0)} / Z'`, equal to 1 up to rounding.
    pub fn gibbs_normalization(&self) -> f64 {
        self.weights.iter().flatten().sum()
    }

    /// `Σ_N Tr_N e^{-β(H - E0)}`, the partition function relative to `E0`.
    pub fn relative_partition_function(&self) -> f64 {
        self.blocks.iter().flat_map(|b| b.energies.iter()).map(|&e| (-self.beta * (e - self.e0)).exp()).sum()
    }

    /// Dense many-body Hamiltonian on all `2^modes` states (bit order), for
    /// checks on small systems.
    pub fn fock_hamiltonian_dense(&self) -> Result<CMat> {
        let n = self.n_modes();
        if n > 10 {
            return Err(LabError::TooLarge { what: "modes for the dense Hamiltonian".into(), value: n, cap: 10 });
        }
        let dim = 1usize << n;
        let mut h = CMat::zeros(dim, dim);
        let hop = nonzeros(&self.h1);
        for s in 0..dim as u32 {
            let occ = |i: usize| if s & (1 << i) != 0 { 1.0 } else { 0.0 };
            let mut diag = -self.mu * s.count_ones() as f64;
            for &(i, j, w) in &self.pairs {
                diag += w * (occ(i) - 0.5) * (occ(j) - 0.5);
            }
            h[(s as usize, s as usize)] += c(diag, 0.0);
            for &(i, j, v) in &hop {
                if let Some((sg, s2)) = hop_state(i, j, s) {
                    h[(s2 as usize, s as usize)] += v * sg;
                }
            }
        }
        Ok(h)
    }

    // -- operators --------------------------------------------------------

    fn kernel_from_terms(&self, terms: &[VertexTerm], x1s: &[i64], p1: f64, keep: &dyn Fn(usize) -> bool, spin: bool) -> CMat {
        let n = self.n_modes();
        let dof = self.model.dof();
        let mut k = CMat::zeros(n, n);
        for t in terms.iter().filter(|t| keep(t.site_row)) {
            for &x1 in x1s {
                let (Some(_), Some(_)) = (self.mode_index(0, t.u2, 0), self.mode_index(0, t.w2, 0)) else { continue };
                let ph = cis(p1 * x1 as f64);
                for r in 0..dof {
                    let sg = if spin { self.model.spin_sign(r) } else { 1.0 };
                    for rp in 0..dof {
                        let v = t.coeff[(r, rp)];
                        if v == c(0.0, 0.0) {
                            continue;
                        }
                        let i = self.mode_index(x1 + t.s1 as i64, t.u2, r).unwrap();
                        let j = self.mode_index(x1 + t.t1 as i64, t.w2, rp).unwrap();
                        k[(i, j)] += ph * v * sg;
                    }
                }
            }
        }
        k
    }

    /// `ĵ_{μ,p1}` summed over the site rows `x2s`.
    pub fn current_operator(&self, mu_idx: usize, p1: f64, x2s: &[usize], channel: Channel) -> Result<QuadOp> {
        let terms = current_terms(&self.model, mu_idx)?;
        let x1s: Vec<i64> = (0..self.l1 as i64).collect();
        let keep = |r: usize| x2s.contains(&r);
        Ok(QuadOp { kernel: self.kernel_from_terms(&terms, &x1s, p1, &keep, channel == Channel::Spin) })
    }

    /// Operator whose expectation is the Schwinger term at site `(y1, y2)`.
    pub fn kinetic_operator(&self, y1: i64, y2: usize) -> QuadOp {
        let terms = kinetic_terms(&self.model);
        let keep = |r: usize| r == y2;
        QuadOp { kernel: self.kernel_from_terms(&terms, &[y1], 0.0, &keep, false) }
    }

    pub fn number_operator(&self) -> QuadOp {
        QuadOp { kernel: CMat::identity(self.n_modes(), self.n_modes()) }
    }

    // -- matrix elements --------------------------------------------------

    /// `V† O V` on the block with `n` particles.
    fn block_matrix(&self, n: usize, op: &QuadOp) -> CMat {
        let b = &self.blocks[n];
        let d = b.states.len();
        let nz = nonzeros(&op.kernel);
        // (O V)^T accumulated column by column, contiguous in memory
        let vt = b.vectors.transpose().to_owned();
        let mut ovt = CMat::zeros(d, d);
        for (col, &s) in b.states.iter().enumerate() {
            for &(i, j, v) in &nz {
                if let Some((sg, s2)) = hop_state(i, j, s) {
                    let row = self.position[s2 as usize] as usize;
                    let f = v * sg;
                    for q in 0..d {
                        ovt[(q, row)] += f * vt[(q, col)];
                    }
                }
            }
        }
        (ovt * b.vectors.conjugate()).transpose().to_owned()
    }

    fn eigen_elements(&self, op: &QuadOp) -> Vec<CMat> {
        (0..self.blocks.len()).into_par_iter().map(|n| self.block_matrix(n, op)).collect()
    }

    /// `<n_{N}| a-_i |m_{N+1}>` for every `N`.
    fn annihilation_elements(&self, i: usize) -> Vec<CMat> {
        (0..self.blocks.len() - 1)
            .into_par_iter()
            .map(|n| {
                let (lo, hi) = (&self.blocks[n], &self.blocks[n + 1]);
                let vt = hi.vectors.transpose().to_owned();
                let mut avt = CMat::zeros(hi.states.len(), lo.states.len());
                for (col, &s) in hi.states.iter().enumerate() {
                    if s & (1 << i) == 0 {
                        continue;
                    }
                    let sg = if parity_below(s, i) { -1.0 } else { 1.0 };
                    let row = self.position[(s ^ (1 << i)) as usize] as usize;
                    for q in 0..hi.states.len() {
                        avt[(q, row)] += vt[(q, col)] * sg;
                    }
                }
                (avt * lo.vectors.conjugate()).transpose().to_owned()
            })
            .collect()
    }

    /// Gibbs expectation of a one-body operator.
    pub fn expectation(&self, op: &QuadOp) -> C64 {
        let rho = self.rho.get_or_init(|| self.compute_density());
        let n = self.n_modes();
        let mut acc = c(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += op.kernel[(i, j)] * rho[(i, j)];
            }
        }
        acc
    }

    /// `ρ_ij = <a+_i a-_j>`.
    pub fn one_particle_density(&self) -> CMat {
        self.rho.get_or_init(|| self.compute_density()).clone()
    }

    fn compute_density(&self) -> CMat {
        let n = self.n_modes();
        let parts: Vec<CMat> = (0..self.blocks.len())
            .into_par_iter()
            .map(|nb| {
                let b = &self.blocks[nb];
                let w = &self.weights[nb];
                let d = b.states.len();
                // G = V diag(w) V†
                let vw = CMat::from_fn(d, d, |i, q| b.vectors[(i, q)] * w[q]);
                let g = vw * b.vectors.adjoint();
                let mut rho = CMat::zeros(n, n);
                for (col, &s) in b.states.iter().enumerate() {
                    for i in 0..n {
                        for j in 0..n {
                            if let Some((sg, s2)) = hop_state(i, j, s) {
                                rho[(i, j)] += g[(col, self.position[s2 as usize] as usize)] * sg;
                            }
                        }
                    }
                }
                rho
            })
            .collect();
        parts.into_iter().fold(CMat::zeros(n, n), |a, b| a + b)
    }

    fn boltzmann(&self, e: f64, s: f64) -> f64 {
        (-s * (e - self.e0)).exp()
    }
}

fn lehmann_kernel(beta: f64, wm: f64, wn: f64, em: f64, en: f64, eta: f64) -> C64 {
    let d = em - en;
    if eta != 0.0 {
        return c(wn - wm, 0.0) / c(d, eta);
    }
    // w_n = w_m e^{x}
    let x = beta * d;
    if x == 0.0 {
        c(beta * wm, 0.0)
    } else if x.abs() < 1.0 {
        c(beta * wm * x.exp_m1() / x, 0.0)
    } else {
        c((wn - wm) / d, 0.0)
    }
}

fn check_matsubara(eta: f64, beta: f64) -> Result<f64> {
    let n = eta * beta / (2.0 * PI);
    if (n - n.round()).abs() > 1e-9 * n.abs().max(1.0) {
        return Err(LabError::param("eta", format!("{eta} is not a multiple of 2pi/beta")));
    }
    Ok(if n.round() == 0.0 { 0.0 } else { eta })
}

/// `∫_0^β dτ e^{iητ} <A(τ) B>` without the disconnected part.
fn raw_matsubara(sys: &FockSystem, a: &[CMat], b: &[CMat], eta: f64) -> C64 {
    let parts: Vec<C64> = (0..sys.blocks.len())
        .into_par_iter()
        .map(|n| {
            let en = &sys.blocks[n].energies;
            let w = &sys.weights[n];
            let mut acc = c(0.0, 0.0);
            for p in 0..en.len() {
                for q in 0..en.len() {
                    let ab = a[n][(p, q)] * b[n][(q, p)];
                    if ab != c(0.0, 0.0) {
                        acc += ab * lehmann_kernel(sys.beta, w[p], w[q], en[p], en[q], eta);
                    }
                }
            }
            acc
        })
        .collect();
    parts.into_iter().sum()
}

/// Connected `<A(x0) B> - <A><B>` for `0 <= x0 < β`, with
/// `A(x0) = e^{x0 H} A e^{-x0 H}`.
pub fn ed_time_ordered(sys: &FockSystem, a: &QuadOp, b: &QuadOp, x0: f64) -> Result<C64> {
    if !(0.0..sys.beta).contains(&x0) {
        return Err(LabError::param("x0", format!("must lie in [0, beta), got {x0}")));
    }
    let (ae, be) = (sys.eigen_elements(a), sys.eigen_elements(b));
    let z = sys.relative_partition_function();
    let mut acc = c(0.0, 0.0);
    for (n, blk) in sys.blocks.iter().enumerate() {
        let en = &blk.energies;
        for p in 0..en.len() {
            for q in 0..en.len() {
                let f = sys.boltzmann(en[p], sys.beta - x0) * sys.boltzmann(en[q], x0) / z;
                acc += ae[n][(p, q)] * be[n][(q, p)] * f;
            }
        }
    }
    Ok(acc - sys.expectation(a) * sys.expectation(b))
}

/// A one-body operator together with its matrix elements in the many-body
/// eigenbasis, reusable across frequencies and temperatures of one system.
#[derive(Debug, Clone)]
pub struct EigenOp {
    op: QuadOp,
    elements: Vec<CMat>,
}

impl FockSystem {
    pub fn prepare(&self, op: &QuadOp) -> EigenOp {
        EigenOp { op: op.clone(), elements: self.eigen_elements(op) }
    }
}

/// `∫_0^β dτ e^{iητ} <T A(τ) ; B>` (connected), `η` bosonic Matsubara.
pub fn ed_matsubara(sys: &FockSystem, a: &QuadOp, b: &QuadOp, eta: f64) -> Result<C64> {
    ed_matsubara_prepared(sys, &sys.prepare(a), &sys.prepare(b), eta)
}

pub fn ed_matsubara_prepared(sys: &FockSystem, a: &EigenOp, b: &EigenOp, eta: f64) -> Result<C64> {
    let eta = check_matsubara(eta, sys.beta)?;
    let mut v = raw_matsubara(sys, &a.elements, &b.elements, eta);
    if eta == 0.0 {
        v -= sys.expectation(&a.op) * sys.expectation(&b.op) * sys.beta;
    }
    Ok(v)
}

/// Current correlator in the normalization of the bubble:
/// `L1^{-1} ∫ e^{iητ} <T ĵ_{μ,p1,X}(τ) ; ĵ_{ν,-p1,Y}>`.
#[allow(clippy::too_many_arguments)]
pub fn ed_correlator(
    sys: &FockSystem,
    mu_idx: usize,
    nu_idx: usize,
    eta: f64,
    p1: f64,
    x2s: &[usize],
    y2s: &[usize],
    channel: Channel,
) -> Result<C64> {
    Ok(ed_correlators(sys, mu_idx, nu_idx, &[eta], p1, x2s, y2s, channel)?[0])
}

/// [`ed_correlator`] at several frequencies sharing the operators.
#[allow(clippy::too_many_arguments)]
pub fn ed_correlators(
    sys: &FockSystem,
    mu_idx: usize,
    nu_idx: usize,
    etas: &[f64],
    p1: f64,
    x2s: &[usize],
    y2s: &[usize],
    channel: Channel,
) -> Result<Vec<C64>> {
    check_momentum(sys, p1)?;
    let a = sys.prepare(&sys.current_operator(mu_idx, p1, x2s, channel)?);
    let b = sys.prepare(&sys.current_operator(nu_idx, -p1, y2s, channel)?);
    etas.iter().map(|&eta| Ok(ed_matsubara_prepared(sys, &a, &b, eta)? / sys.l1 as f64)).collect()
}

fn check_momentum(sys: &FockSystem, p1: f64) -> Result<()> {
    let m = p1 * sys.l1 as f64 / (2.0 * PI);
    if (m - m.round()).abs() > 1e-9 {
        return Err(LabError::param("p1", format!("{p1} is not a multiple of 2pi/L1")));
    }
    Ok(())
}

/// Schwinger term `Δ_{1,(y1,y2)}` as a Gibbs expectation.
pub fn ed_schwinger_term(sys: &FockSystem, y1: i64, y2: usize) -> f64 {
    sys.expectation(&sys.kinetic_operator(y1, y2)).re
}

/// `<T a-_{x,r}(x0) a+_{y,r'}(y0)>` as an `M x M` matrix; antiperiodic in
/// the time difference, `0⁻` limit at equal times.
pub fn ed_two_point(sys: &FockSystem, x: Point, y: Point) -> Result<CMat> {
    let dof = sys.model.dof();
    for (name, r) in [("x2", x.2), ("y2", y.2)] {
        if sys.mode_index(0, r, 0).is_none() {
            return Err(LabError::param(name, format!("row {r} is not an active row")));
        }
    }
    let beta = sys.beta;
    let tau = x.0 - y.0;
    let n = (tau / beta).ceil();
    let mut tp = tau - n * beta;
    if tp > 0.0 {
        tp -= beta;
    }
    // τ = tp + nβ with tp in (-β, 0]; for tp < 0 evaluate at tp + β in (0, β)
    // with one extra sign flip
    let mut sign = if (n as i64).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let forward = tp < 0.0;
    let t = if forward {
        sign = -sign;
        tp + beta
    } else {
        0.0
    };
    let z = sys.relative_partition_function();
    let ix: Vec<usize> = (0..dof).map(|r| sys.mode_index(x.1, x.2, r).unwrap()).collect();
    let iy: Vec<usize> = (0..dof).map(|r| sys.mode_index(y.1, y.2, r).unwrap()).collect();
    let ax: Vec<Vec<CMat>> = ix.iter().map(|&i| sys.annihilation_elements(i)).collect();
    let ay: Vec<Vec<CMat>> = iy.iter().map(|&i| sys.annihilation_elements(i)).collect();
    let mut out = CMat::zeros(dof, dof);
    for r in 0..dof {
        for rp in 0..dof {
            let mut acc = c(0.0, 0.0);
            for nb in 0..sys.blocks.len() - 1 {
                let (lo, hi) = (&sys.blocks[nb].energies, &sys.blocks[nb + 1].energies);
                let (a, b) = (&ax[r][nb], &ay[rp][nb]);
                for p in 0..lo.len() {
                    for q in 0..hi.len() {
                        let el = a[(p, q)] * b[(p, q)].conj();
                        if el == c(0.0, 0.0) {
                            continue;
                        }
                        let f = if forward {
                            // <a(t) a+> = Σ e^{-(β-t)(E_p-E0) - t(E_q-E0)} ...
                            sys.boltzmann(lo[p], beta - t) * sys.boltzmann(hi[q], t)
                        } else {
                            // -<a+ a>: weight of the N+1 state
                            -sys.boltzmann(hi[q], beta)
                        };
                        acc += el * f;
                    }
                }
            }
            out[(r, rp)] = acc * sign / z;
        }
    }
    Ok(out)
}

/// Summed Ward identity assembled from ED correlators and the ED Schwinger
/// term at `(0, y2)`.
pub fn ed_ward_check(
    sys: &FockSystem,
    eta: f64,
    p1: f64,
    nu_idx: usize,
    channel: Channel,
    y2: usize,
) -> Result<WardResidual> {
    Ok(ed_ward_checks(sys, &[eta], p1, &[nu_idx], channel, &[y2])?.remove(0))
}

/// [`ed_ward_check`] at several frequencies, for every `(ν, y2)` pair; the
/// summed vertices are shared. Output order: `ν`, then `y2`, then `η`.
pub fn ed_ward_checks(
    sys: &FockSystem,
    etas: &[f64],
    p1: f64,
    nus: &[usize],
    channel: Channel,
    y2s: &[usize],
) -> Result<Vec<WardResidual>> {
    if nus.iter().any(|&n| n > 1) {
        return Err(LabError::param("nu_idx", "must be 0 or 1"));
    }
    check_momentum(sys, p1)?;
    let all: Vec<usize> = (0..sys.model.rows()).collect();
    let a0 = sys.prepare(&sys.current_operator(0, p1, &all, channel)?);
    let a1 = sys.prepare(&sys.current_operator(1, p1, &all, channel)?);
    let l1 = sys.l1 as f64;
    let mut out = Vec::new();
    for &nu_idx in nus {
        for &y2 in y2s {
            let b = sys.prepare(&sys.current_operator(nu_idx, -p1, &[y2], channel)?);
            let delta = ed_schwinger_term(sys, 0, y2);
            for &eta in etas {
                let s0 = ed_matsubara_prepared(sys, &a0, &b, eta)? / l1;
                let s1 = ed_matsubara_prepared(sys, &a1, &b, eta)? / l1;
                let (residual, scale) = ward_combination(eta, p1, s0, s1, delta, nu_idx);
                out.push(WardResidual { residual, scale, eta_beta: eta, p1, nu_idx, y2, channel });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct WickCheck {
    pub beta: f64,
    pub eta: f64,
    pub eta_beta: f64,
    pub t_max: f64,
    /// `∫_{-T}^0 dt e^{ηt} <[A(t), B]> / L1`.
    pub real_time: C64,
    /// `i ∫_0^β dt e^{-iη_β t} <A(-it) B> / L1`.
    pub imaginary_time: C64,
    pub error: f64,
}

/// Real-time versus imaginary-time side of the Wick rotation at one
/// `(β, T, η)`; `η_β` is the nearest bosonic Matsubara frequency.
pub fn wick_rotation_check(sys: &FockSystem, a: &QuadOp, b: &QuadOp, t_max: f64, eta: f64) -> Result<WickCheck> {
    let (ae, be) = (sys.eigen_elements(a), sys.eigen_elements(b));
    wick_from_elements(sys, &ae, &be, t_max, eta)
}

fn wick_from_elements(sys: &FockSystem, ae: &[CMat], be: &[CMat], t_max: f64, eta: f64) -> Result<WickCheck> {
    if !(eta > 0.0) || !(t_max > 0.0) {
        return Err(LabError::param("eta", "eta and T must be positive"));
    }
    let beta = sys.beta;
    let step = 2.0 * PI / beta;
    let eta_beta = (eta / step).round() * step;
    let parts: Vec<C64> = (0..sys.blocks.len())
        .into_par_iter()
        .map(|n| {
            let en = &sys.blocks[n].energies;
            let w = &sys.weights[n];
            let mut acc = c(0.0, 0.0);
            for p in 0..en.len() {
                for q in 0..en.len() {
                    let ab = ae[n][(p, q)] * be[n][(q, p)];
                    if ab == c(0.0, 0.0) || w[p] == w[q] {
                        continue;
                    }
                    // ∫_{-T}^0 e^{(η + iω)t} dt
                    let z = c(eta, en[p] - en[q]);
                    let f = (c(1.0, 0.0) - (-z * t_max).exp()) / z;
                    acc += ab * (w[p] - w[q]) * f;
                }
            }
            acc
        })
        .collect();
    let l = sys.l1 as f64;
    let real_time = parts.into_iter().sum::<C64>() / l;
    let imaginary_time = I * raw_matsubara(sys, ae, be, -eta_beta) / l;
    Ok(WickCheck { beta, eta, eta_beta, t_max, real_time, imaginary_time, error: (real_time - imaginary_time).norm() })
}

#[derive(Debug, Clone, Serialize)]
pub struct WickSweep {
    pub points: Vec<WickCheck>,
    /// Smallest `C` with `error <= C (1/(η²β) + e^{-ηT})` on every point.
    pub c_fit: f64,
    /// Least-squares slope of `log error` against `log β` at the largest `T`.
    pub beta_slope: f64,
}

/// Wick-rotation errors over a `(β, T)` grid; the spectrum is shared and
/// only the Gibbs weights change with `β`.
pub fn wick_sweep(sys: &FockSystem, a: &QuadOp, b: &QuadOp, eta: f64, betas: &[f64], ts: &[f64]) -> Result<WickSweep> {
    if betas.len() < 2 || ts.is_empty() {
        return Err(LabError::param("betas", "need at least two beta values and one T"));
    }
    let (ae, be) = (sys.eigen_elements(a), sys.eigen_elements(b));
    let mut points = Vec::new();
    for &beta in betas {
        let s = sys.with_beta(beta)?;
        for &t in ts {
            points.push(wick_from_elements(&s, &ae, &be, t, eta)?);
        }
    }
    let c_fit = points
        .iter()
        .map(|p| p.error / (1.0 / (eta * eta * p.beta) + (-eta * p.t_max).exp()))
        .fold(0.0, f64::max);
    let t_top = ts.iter().copied().fold(f64::MIN, f64::max);
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        points.iter().filter(|p| p.t_max == t_top).map(|p| (p.beta.ln(), p.error.max(1e-300).ln())).unzip();
    Ok(WickSweep { points, c_fit, beta_slope: slope(&xs, &ys) })
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// `β` values that put `η` a quarter step off the Matsubara lattice,
/// `β_j = 2π (n_j + 1/4) / η`, so that `|η - η_β| = π / (2β)` exactly.
pub fn quarter_offset_betas(eta: f64, ns: &[u32]) -> Vec<f64> {
    ns.iter().map(|&n| 2.0 * PI * (n as f64 + 0.25) / eta).collect()
}
