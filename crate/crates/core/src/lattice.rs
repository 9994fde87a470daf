//! Finite-range tight-binding models on the torus and on the cylinder.
//!
//! Sites are labelled by `x = (x1, x2)`. The hopping kernel is translation
//! invariant in `x1` and stored per row pair `(x2, y2)` as a map
//! `(z1, x2, y2) -> M x M` block, `z1 = x1 - y1`. The amplitude `h[r][r']`
//! multiplies `a+_{x,r} a-_{y,r'}`.
//!
//! Torus: rows `x2 = 0..L`, periodic. Cylinder: rows `x2 = 0..=L`, with rows
//! `0` and `L` carrying Dirichlet conditions, so only rows `1..L` are active.
//!
//! Internal dof ordering for spinful models is spin-major: `r = sigma * M/2 + s`
//! with `sigma = 0` (up) and `sigma = 1` (down).

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{c, cis, CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Torus,
    Cylinder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HaldaneParams {
    pub t1: f64,
    pub t2: f64,
    pub phi: f64,
    #[serde(rename = "W")]
    pub w: f64,
}

impl HaldaneParams {
    pub fn new(t1: f64, t2: f64, phi: f64, w: f64) -> Self {
        Self { t1, t2, phi, w }
    }

    /// Flagship topological point.
    pub fn topological() -> Self {
        Self::new(1.0, 0.5, PI / 2.0, 0.0)
    }

    /// |W| at which the bulk gap closes.
    pub fn critical_w(&self) -> f64 {
        3.0 * 3f64.sqrt() * self.t2 * self.phi.sin().abs()
    }

    fn check(&self) -> Result<()> {
        for (name, v) in [("t1", self.t1), ("t2", self.t2), ("phi", self.phi), ("W", self.w)] {
            if !v.is_finite() {
                return Err(LabError::param(name, "must be finite"));
            }
        }
        if self.t1 <= 0.0 {
            return Err(LabError::param("t1", "must be positive"));
        }
        if self.t2 < 0.0 {
            return Err(LabError::param("t2", "must be non-negative"));
        }
        Ok(())
    }
}

/// Translation-invariant hopping amplitude for `a+_{x,r} a-_{y,r'}` with
/// `x - y = (z1, dz2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopRecord {
    pub z1: i32,
    #[serde(rename = "x2_offset")]
    pub dz2: i32,
    pub r: usize,
    #[serde(rename = "r_prime")]
    pub rp: usize,
    pub re: f64,
    pub im: f64,
}

/// Translation-invariant density-density weight `w_{r r'}(x - y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionRecord {
    pub z1: i32,
    #[serde(rename = "x2_offset")]
    pub dz2: i32,
    pub r: usize,
    #[serde(rename = "r_prime")]
    pub rp: usize,
    pub w: f64,
}

/// `(z1, x2, y2)`
pub type KernelKey = (i32, usize, usize);

#[derive(Debug, Clone)]
pub struct LatticeModel {
    dof: usize,
    size: usize,
    mu: f64,
    boundary: Boundary,
    spinful: bool,
    hopping: BTreeMap<KernelKey, CMat>,
    interaction: BTreeMap<KernelKey, Vec<f64>>,
}

/// Hopping records of the spinless Haldane block, read off from the A/V
/// kernels of the effective one-dimensional operator.
pub fn haldane_records(p: &HaldaneParams) -> Vec<HopRecord> {
    let (t1, t2, w) = (p.t1, p.t2, p.w);
    let ep = cis(p.phi);
    let em = cis(-p.phi);
    let mut out = Vec::new();
    let mut push = |z1: i32, dz2: i32, r: usize, rp: usize, a: C64| {
        if a != c(0.0, 0.0) {
            out.push(HopRecord { z1, dz2, r, rp, re: a.re, im: a.im });
        }
    };
    // V(k1): dz2 = 0
    push(0, 0, 0, 0, c(w, 0.0));
    push(0, 0, 1, 1, c(-w, 0.0));
    push(0, 0, 0, 1, c(-t1, 0.0));
    push(0, 0, 1, 0, c(-t1, 0.0));
    push(1, 0, 0, 0, -t2 * ep);
    push(-1, 0, 0, 0, -t2 * em);
    push(1, 0, 1, 1, -t2 * em);
    push(-1, 0, 1, 1, -t2 * ep);
    push(1, 0, 1, 0, c(-t1, 0.0));
    push(-1, 0, 0, 1, c(-t1, 0.0));
    // A(k1) multiplies phi_{x2+1}: dz2 = -1
    push(-1, -1, 0, 0, -t2 * ep);
    push(0, -1, 0, 0, -t2 * em);
    push(-1, -1, 1, 1, -t2 * em);
    push(0, -1, 1, 1, -t2 * ep);
    push(0, -1, 1, 0, c(-t1, 0.0));
    // A(k1)^dagger multiplies phi_{x2-1}: dz2 = +1
    push(1, 1, 0, 0, -t2 * em);
    push(0, 1, 0, 0, -t2 * ep);
    push(1, 1, 1, 1, -t2 * ep);
    push(0, 1, 1, 1, -t2 * em);
    push(0, 1, 0, 1, c(-t1, 0.0));
    out
}

/// Nearest-neighbour (honeycomb) density-density records for the Haldane
/// block plus an optional on-site term between equal `r`.
pub fn haldane_nn_interaction(nn: f64, onsite: f64) -> Vec<InteractionRecord> {
    let mut out = Vec::new();
    for (z1, dz2, r, rp) in [
        (0, 0, 0, 1),
        (0, 0, 1, 0),
        (1, 0, 1, 0),
        (-1, 0, 0, 1),
        (0, -1, 1, 0),
        (0, 1, 0, 1),
    ] {
        out.push(InteractionRecord { z1, dz2, r, rp, w: nn });
    }
    if onsite != 0.0 {
        for r in 0..2 {
            out.push(InteractionRecord { z1: 0, dz2: 0, r, rp: r, w: onsite });
        }
    }
    out
}

/// On-site weight `w = delta_{x,y} delta_{r r'}` on a block of `dof` states.
pub fn onsite_interaction(dof: usize) -> Vec<InteractionRecord> {
    (0..dof).map(|r| InteractionRecord { z1: 0, dz2: 0, r, rp: r, w: 1.0 }).collect()
}

pub fn build_haldane(
    p: HaldaneParams,
    l: usize,
    mu: f64,
    spinful: bool,
    boundary: Boundary,
) -> Result<LatticeModel> {
    p.check()?;
    if l < 4 {
        return Err(LabError::param("L", format!("must be at least 4, got {l}")));
    }
    LatticeModel::from_records(2, l, mu, boundary, spinful, &haldane_records(&p), &[])
}

impl LatticeModel {
    /// Expand translation-invariant records over the rows of the geometry.
    /// For spinful models the records describe one spin block (`block_dof`
    /// states) and are copied to both blocks; interaction records are copied
    /// to all four spin pairs.
    pub fn from_records(
        block_dof: usize,
        l: usize,
        mu: f64,
        boundary: Boundary,
        spinful: bool,
        hops: &[HopRecord],
        interaction: &[InteractionRecord],
    ) -> Result<Self> {
        if block_dof == 0 {
            return Err(LabError::param("M", "must be positive"));
        }
        if !mu.is_finite() {
            return Err(LabError::param("mu", "must be finite"));
        }
        let min_l = match boundary {
            Boundary::Torus => 3,
            Boundary::Cylinder => 2,
        };
        if l < min_l {
            return Err(LabError::param("L", format!("must be at least {min_l} for {boundary:?}")));
        }
        for h in hops {
            if h.r >= block_dof || h.rp >= block_dof {
                return Err(LabError::param("hopping", format!("dof index out of range in {h:?}")));
            }
            if h.z1.abs() > 1 || h.dz2.abs() > 1 {
                return Err(LabError::param("hopping", format!("range exceeds sqrt(2) in {h:?}")));
            }
            if !h.re.is_finite() || !h.im.is_finite() {
                return Err(LabError::param("hopping", format!("non-finite amplitude in {h:?}")));
            }
        }
        for w in interaction {
            if w.r >= block_dof || w.rp >= block_dof {
                return Err(LabError::param("interaction", format!("dof index out of range in {w:?}")));
            }
            if w.z1.abs() > 1 || w.dz2.abs() > 1 {
                return Err(LabError::param("interaction", format!("range exceeds sqrt(2) in {w:?}")));
            }
            if !w.w.is_finite() {
                return Err(LabError::param("interaction", format!("non-finite weight in {w:?}")));
            }
        }
        let dof = if spinful { 2 * block_dof } else { block_dof };
        let mut m = LatticeModel {
            dof,
            size: l,
            mu,
            boundary,
            spinful,
            hopping: BTreeMap::new(),
            interaction: BTreeMap::new(),
        };
        let spins: &[usize] = if spinful { &[0, 1] } else { &[0] };
        for x2 in m.active_rows() {
            for h in hops {
                let Some(y2) = m.partner_row(x2, h.dz2) else { continue };
                let blk = m
                    .hopping
                    .entry((h.z1, x2, y2))
                    .or_insert_with(|| CMat::zeros(dof, dof));
                for &s in spins {
                    blk[(s * block_dof + h.r, s * block_dof + h.rp)] += c(h.re, h.im);
                }
            }
            for w in interaction {
                let Some(y2) = m.partner_row(x2, w.dz2) else { continue };
                let blk = m
                    .interaction
                    .entry((w.z1, x2, y2))
                    .or_insert_with(|| vec![0.0; dof * dof]);
                for &s in spins {
                    for &sp in spins {
                        blk[(s * block_dof + w.r) * dof + sp * block_dof + w.rp] += w.w;
                    }
                }
            }
        }
        Ok(m)
    }

    /// Row reached from `x2` by `y2 = x2 - dz2`, if it is active.
    fn partner_row(&self, x2: usize, dz2: i32) -> Option<usize> {
        match self.boundary {
            Boundary::Torus => {
                let l = self.size as i64;
                Some(((x2 as i64 - dz2 as i64).rem_euclid(l)) as usize)
            }
            Boundary::Cylinder => {
                let y2 = x2 as i64 - dz2 as i64;
                if y2 >= 1 && y2 < self.size as i64 {
                    Some(y2 as usize)
                } else {
                    None
                }
            }
        }
    }

    pub fn dof(&self) -> usize {
        self.dof
    }
    /// Linear size `L`.
    pub fn size(&self) -> usize {
        self.size
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }
    pub fn is_spinful(&self) -> bool {
        self.spinful
    }
    pub fn block_dof(&self) -> usize {
        if self.spinful {
            self.dof / 2
        } else {
            self.dof
        }
    }
    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    /// Number of rows carried by the full matrices (`L` or `L + 1`).
    pub fn rows(&self) -> usize {
        match self.boundary {
            Boundary::Torus => self.size,
            Boundary::Cylinder => self.size + 1,
        }
    }

    /// Rows where fermions live.
    pub fn active_rows(&self) -> std::ops::Range<usize> {
        match self.boundary {
            Boundary::Torus => 0..self.size,
            Boundary::Cylinder => 1..self.size,
        }
    }

    /// Dimension of the full one-dimensional operator, `M * rows()`.
    pub fn full_dim(&self) -> usize {
        self.dof * self.rows()
    }

    /// Dimension of the active subspace.
    pub fn active_dim(&self) -> usize {
        self.dof * self.active_rows().len()
    }

    /// Index in the full `M * rows()` space.
    pub fn index(&self, x2: usize, r: usize) -> usize {
        x2 * self.dof + r
    }

    pub fn hopping(&self) -> &BTreeMap<KernelKey, CMat> {
        &self.hopping
    }

    pub fn interaction(&self) -> &BTreeMap<KernelKey, Vec<f64>> {
        &self.interaction
    }

    pub fn has_interaction(&self) -> bool {
        self.interaction.values().any(|b| b.iter().any(|&w| w != 0.0))
    }

    /// Amplitude `h_{r r'}(z1; x2, y2)`, zero when absent.
    pub fn hop(&self, z1: i32, x2: usize, y2: usize, r: usize, rp: usize) -> C64 {
        self.hopping
            .get(&(z1, x2, y2))
            .map(|b| b[(r, rp)])
            .unwrap_or(c(0.0, 0.0))
    }

    pub fn weight(&self, z1: i32, x2: usize, y2: usize, r: usize, rp: usize) -> f64 {
        self.interaction
            .get(&(z1, x2, y2))
            .map(|b| b[r * self.dof + rp])
            .unwrap_or(0.0)
    }

    /// Overwrite one hopping amplitude. Meant for building deliberately
    /// faulty models; no invariant is enforced here.
    pub fn set_hop(&mut self, z1: i32, x2: usize, y2: usize, r: usize, rp: usize, value: C64) {
        let dof = self.dof;
        let blk = self.hopping.entry((z1, x2, y2)).or_insert_with(|| CMat::zeros(dof, dof));
        blk[(r, rp)] = value;
    }

    /// Replace the interaction by translation-invariant records.
    pub fn with_interaction(&self, records: &[InteractionRecord]) -> Result<Self> {
        let mut out = self.clone();
        out.interaction.clear();
        let block = self.block_dof();
        let dof = self.dof;
        let spins: &[usize] = if self.spinful { &[0, 1] } else { &[0] };
        for w in records {
            if w.r >= block || w.rp >= block || w.z1.abs() > 1 || w.dz2.abs() > 1 || !w.w.is_finite() {
                return Err(LabError::param("interaction", format!("invalid record {w:?}")));
            }
        }
        for x2 in self.active_rows() {
            for w in records {
                let Some(y2) = self.partner_row(x2, w.dz2) else { continue };
                let blk = out.interaction.entry((w.z1, x2, y2)).or_insert_with(|| vec![0.0; dof * dof]);
                for &s in spins {
                    for &sp in spins {
                        blk[(s * block + w.r) * dof + sp * block + w.rp] += w.w;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Spin blocks as spinless models (one entry for spinless models).
    pub fn spin_blocks(&self) -> Vec<LatticeModel> {
        if !self.spinful {
            return vec![self.clone()];
        }
        let b = self.dof / 2;
        (0..2)
            .map(|s| {
                let hopping = self
                    .hopping
                    .iter()
                    .map(|(k, m)| (*k, CMat::from_fn(b, b, |i, j| m[(s * b + i, s * b + j)])))
                    .collect();
                let interaction = self
                    .interaction
                    .iter()
                    .map(|(k, w)| {
                        let mut v = vec![0.0; b * b];
                        for i in 0..b {
                            for j in 0..b {
                                v[i * b + j] = w[(s * b + i) * self.dof + s * b + j];
                            }
                        }
                        (*k, v)
                    })
                    .collect();
                LatticeModel {
                    dof: b,
                    size: self.size,
                    mu: self.mu,
                    boundary: self.boundary,
                    spinful: false,
                    hopping,
                    interaction,
                }
            })
            .collect()
    }

    /// True when the two spin blocks carry bit-identical hopping.
    pub fn spin_blocks_identical(&self) -> bool {
        if !self.spinful {
            return false;
        }
        let b = self.spin_blocks();
        b[0].hopping.len() == b[1].hopping.len()
            && b[0]
                .hopping
                .iter()
                .zip(b[1].hopping.iter())
                .all(|((ka, ma), (kb, mb))| ka == kb && crate::linalg::max_abs_diff(ma, mb) == 0.0)
    }

    /// Spin sign of a dof index (+1 up, -1 down; +1 for spinless models).
    pub fn spin_sign(&self, r: usize) -> f64 {
        if self.spinful && r >= self.dof / 2 {
            -1.0
        } else {
            1.0
        }
    }
}

/// `Ĥ(k1)` on the full `M * rows()` space; Dirichlet rows of the cylinder
/// stay zero. Entries below the diagonal accumulate their terms in the
/// mirrored order so that, for a Hermitian kernel, the result is Hermitian
/// bit for bit.
pub fn effective_1d_hamiltonian(m: &LatticeModel, k1: f64) -> CMat {
    let n = m.full_dim();
    let mut h = CMat::zeros(n, n);
    fill_effective(m, |z1| cis(k1 * z1 as f64), &mut h, |x2, r| Some(m.index(x2, r)));
    h
}

/// `Ĥ(k1)` restricted to active rows (identical to the full operator on the
/// torus).
pub fn active_hamiltonian(m: &LatticeModel, k1: f64) -> CMat {
    let n = m.active_dim();
    let mut h = CMat::zeros(n, n);
    fill_effective(m, |z1| cis(k1 * z1 as f64), &mut h, active_index(m));
    h
}

/// `∂_{k1} Ĥ(k1)` on the active subspace.
pub fn active_hamiltonian_dk(m: &LatticeModel, k1: f64) -> CMat {
    let n = m.active_dim();
    let mut h = CMat::zeros(n, n);
    fill_effective(m, |z1| c(0.0, z1 as f64) * cis(k1 * z1 as f64), &mut h, active_index(m));
    h
}

fn active_index(m: &LatticeModel) -> impl Fn(usize, usize) -> Option<usize> + '_ {
    let first = m.active_rows().start;
    move |x2, r| {
        if m.active_rows().contains(&x2) {
            Some((x2 - first) * m.dof() + r)
        } else {
            None
        }
    }
}

fn fill_effective(
    m: &LatticeModel,
    phase: impl Fn(i32) -> C64,
    h: &mut CMat,
    idx: impl Fn(usize, usize) -> Option<usize>,
) {
    let dof = m.dof();
    let mut by_rows: BTreeMap<(usize, usize), Vec<(i32, &CMat)>> = BTreeMap::new();
    for ((z1, x2, y2), blk) in m.hopping() {
        by_rows.entry((*x2, *y2)).or_default().push((*z1, blk));
    }
    for ((x2, y2), terms) in by_rows {
        for r in 0..dof {
            for rp in 0..dof {
                let (Some(i), Some(j)) = (idx(x2, r), idx(y2, rp)) else { continue };
                let mut acc = c(0.0, 0.0);
                let mut add = |(z1, blk): &(i32, &CMat)| {
                    let a = blk[(r, rp)];
                    if a != c(0.0, 0.0) {
                        acc += phase(*z1) * a;
                    }
                };
                if i <= j {
                    terms.iter().for_each(&mut add);
                } else {
                    terms.iter().rev().for_each(&mut add);
                }
                h[(i, j)] += acc;
            }
        }
    }
}

/// Bloch Hamiltonian `Σ_z e^{i z·k} h(z)` of a torus model, i.e.
/// `V(k1) + A(k1) e^{-ik2} + A(k1)† e^{ik2}`.
pub fn bloch_hamiltonian(m: &LatticeModel, k: (f64, f64)) -> Result<CMat> {
    if m.boundary() != Boundary::Torus {
        return Err(LabError::WrongBoundary("bloch_hamiltonian needs a torus model".into()));
    }
    let l = m.size();
    let dof = m.dof();
    // (z1, dz2) -> block, read off row x2 = 0
    let mut terms: Vec<((i32, i32), &CMat)> = Vec::new();
    for ((z1, x2, y2), blk) in m.hopping() {
        if *x2 != 0 {
            continue;
        }
        let dz2 = if *y2 == 0 {
            0
        } else if *y2 == 1 {
            -1
        } else if *y2 == l - 1 {
            1
        } else {
            continue;
        };
        terms.push(((*z1, dz2), blk));
    }
    terms.sort_by_key(|t| t.0);
    let mut h = CMat::zeros(dof, dof);
    for r in 0..dof {
        for rp in 0..dof {
            let mut acc = c(0.0, 0.0);
            let mut add = |((z1, dz2), blk): &((i32, i32), &CMat)| {
                let a = blk[(r, rp)];
                if a != c(0.0, 0.0) {
                    acc += cis(k.0 * *z1 as f64 + k.1 * *dz2 as f64) * a;
                }
            };
            if r < rp {
                terms.iter().for_each(&mut add);
            } else if r > rp {
                terms.iter().rev().for_each(&mut add);
            }
            h[(r, rp)] = if r == rp { diagonal_sum(&terms, r, k) } else { acc };
        }
    }
    Ok(h)
}

/// Bloch Hamiltonian of the bulk kernel read off an interior row. On the
/// torus this is [`bloch_hamiltonian`]; on the cylinder it is the Bloch
/// Hamiltonian of the torus with the same kernel.
pub fn bulk_bloch_hamiltonian(m: &LatticeModel, k: (f64, f64)) -> Result<CMat> {
    if m.boundary() == Boundary::Torus {
        return bloch_hamiltonian(m, k);
    }
    let rows = m.active_rows();
    if rows.len() < 3 {
        return Err(LabError::param("L", "need at least three active rows to read the bulk kernel"));
    }
    let x2 = rows.start + rows.len() / 2;
    let dof = m.dof();
    let mut terms: Vec<((i32, i32), &CMat)> = m
        .hopping()
        .iter()
        .filter(|((_, a, _), _)| *a == x2)
        .map(|((z1, _, y2), blk)| ((*z1, x2 as i32 - *y2 as i32), blk))
        .collect();
    terms.sort_by_key(|t| t.0);
    let mut h = CMat::zeros(dof, dof);
    for r in 0..dof {
        for rp in 0..dof {
            let mut acc = c(0.0, 0.0);
            let mut add = |((z1, dz2), blk): &((i32, i32), &CMat)| {
                let a = blk[(r, rp)];
                if a != c(0.0, 0.0) {
                    acc += cis(k.0 * *z1 as f64 + k.1 * *dz2 as f64) * a;
                }
            };
            if r < rp {
                terms.iter().for_each(&mut add);
            } else if r > rp {
                terms.iter().rev().for_each(&mut add);
            }
            h[(r, rp)] = if r == rp { diagonal_sum(&terms, r, k) } else { acc };
        }
    }
    Ok(h)
}

/// Diagonal entry `Σ_z e^{i z·k} h(z)_{rr}` summed over mirror pairs
/// `(z, -z)` first, so the imaginary part cancels exactly.
fn diagonal_sum(terms: &[((i32, i32), &CMat)], r: usize, k: (f64, f64)) -> C64 {
    let theta = |z: (i32, i32)| k.0 * z.0 as f64 + k.1 * z.1 as f64;
    let mut acc = c(0.0, 0.0);
    for &(z, blk) in terms {
        let mirror = (-z.0, -z.1);
        if mirror < z {
            continue;
        }
        let t = cis(theta(z)) * blk[(r, r)];
        if mirror == z {
            acc += t;
            continue;
        }
        let pair = terms
            .iter()
            .find(|(q, _)| *q == mirror)
            .map(|(q, b)| cis(theta(*q)) * b[(r, r)])
            .unwrap_or(c(0.0, 0.0));
        acc += t + pair;
    }
    acc
}

/// Closed-form Haldane bands `(e_-, e_+)` at the Bloch momentum `k` of
/// [`bloch_hamiltonian`].
///
/// The textbook expression is written for Bloch phases `e^{+ik2}` on the
/// upward hop; our Bloch Hamiltonian carries `e^{-ik2}`, so the expression is
/// evaluated at `(k1, -k2)`.
pub fn haldane_bands_closed_form(p: &HaldaneParams, k: (f64, f64)) -> (f64, f64) {
    let (k1, k2) = (k.0, -k.1);
    let alpha = 2.0 * p.t2 * p.phi.cos() * ((k1 - k2).cos() + k2.cos() + k1.cos());
    let mass = p.w - 2.0 * p.t2 * p.phi.sin() * ((k1 - k2).sin() + k2.sin() - k1.sin());
    let omega = c(1.0, 0.0) + cis(-k1) + cis(-k2);
    let root = (mass * mass + p.t1 * p.t1 * omega.norm_sqr()).sqrt();
    (-alpha - root, -alpha + root)
}

/// Mass term at the two Dirac points `(K, K')`.
pub fn haldane_dirac_masses(p: &HaldaneParams) -> (f64, f64) {
    let g = 3.0 * 3f64.sqrt() * p.t2 * p.phi.sin();
    (p.w + g, p.w - g)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub invariant: String,
    pub magnitude: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, invariant: &str, magnitude: f64, detail: String) {
        if magnitude > 0.0 || magnitude.is_nan() {
            self.violations.push(Violation { invariant: invariant.into(), magnitude, detail });
        }
    }

    pub fn find(&self, invariant: &str) -> Option<&Violation> {
        self.violations.iter().find(|v| v.invariant == invariant)
    }
}

pub fn validate_model(m: &LatticeModel) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let dof = m.dof();
    let rows = m.rows();
    let row_distance = |x2: usize, y2: usize| -> usize {
        let d = x2.abs_diff(y2);
        match m.boundary() {
            Boundary::Torus => d.min(m.size() - d),
            Boundary::Cylinder => d,
        }
    };
    let zero = CMat::zeros(dof, dof);

    let (mut herm, mut herm_at) = (0.0f64, String::new());
    let (mut range, mut range_at) = (0.0f64, String::new());
    let (mut dirichlet, mut dirichlet_at) = (0.0f64, String::new());
    let (mut finite, mut finite_at) = (0.0f64, String::new());
    for (&(z1, x2, y2), blk) in m.hopping() {
        let mirror = m.hopping().get(&(-z1, y2, x2)).unwrap_or(&zero);
        let mut amax = 0.0f64;
        for r in 0..dof {
            for rp in 0..dof {
                let a = blk[(r, rp)];
                if !a.re.is_finite() || !a.im.is_finite() {
                    finite = f64::INFINITY;
                    finite_at = format!("(z1={z1}, x2={x2}, y2={y2}, r={r}, r'={rp})");
                    continue;
                }
                amax = amax.max(a.norm());
                let d = (a - mirror[(rp, r)].conj()).norm();
                if d > herm {
                    herm = d;
                    herm_at = format!("(z1={z1}, x2={x2}, y2={y2}, r={r}, r'={rp})");
                }
            }
        }
        if (z1.abs() > 1 || x2 >= rows || y2 >= rows || row_distance(x2, y2) > 1) && amax > range {
            range = amax;
            range_at = format!("(z1={z1}, x2={x2}, y2={y2})");
        }
        if m.boundary() == Boundary::Cylinder
            && (x2 == 0 || y2 == 0 || x2 == m.size() || y2 == m.size())
            && amax > dirichlet
        {
            dirichlet = amax;
            dirichlet_at = format!("(z1={z1}, x2={x2}, y2={y2})");
        }
    }
    rep.push("hermiticity", herm, herm_at);
    rep.push("finite_range", range, range_at);
    rep.push("dirichlet", dirichlet, dirichlet_at);
    rep.push("finite_values", finite, finite_at);

    let (mut wsym, mut wsym_at) = (0.0f64, String::new());
    let (mut wdir, mut wdir_at) = (0.0f64, String::new());
    let (mut wrange, mut wrange_at) = (0.0f64, String::new());
    let (mut wspin, mut wspin_at) = (0.0f64, String::new());
    for (&(z1, x2, y2), w) in m.interaction() {
        let mut wmax = 0.0f64;
        for r in 0..dof {
            for rp in 0..dof {
                let a = w[r * dof + rp];
                wmax = wmax.max(a.abs());
                let b = m.weight(-z1, y2, x2, rp, r);
                let d = (a - b).abs();
                if d > wsym {
                    wsym = d;
                    wsym_at = format!("(z1={z1}, x2={x2}, y2={y2}, r={r}, r'={rp})");
                }
                if m.is_spinful() {
                    let b = dof / 2;
                    let reference = w[(r % b) * dof + (rp % b)];
                    let d = (a - reference).abs();
                    if d > wspin {
                        wspin = d;
                        wspin_at = format!("(z1={z1}, x2={x2}, y2={y2}, r={r}, r'={rp})");
                    }
                }
            }
        }
        if (z1.abs() > 1 || row_distance(x2, y2) > 1) && wmax > wrange {
            wrange = wmax;
            wrange_at = format!("(z1={z1}, x2={x2}, y2={y2})");
        }
        if m.boundary() == Boundary::Cylinder
            && (x2 == 0 || y2 == 0 || x2 == m.size() || y2 == m.size())
            && wmax > wdir
        {
            wdir = wmax;
            wdir_at = format!("(z1={z1}, x2={x2}, y2={y2})");
        }
    }
    rep.push("interaction_symmetry", wsym, wsym_at);
    rep.push("interaction_range", wrange, wrange_at);
    rep.push("interaction_dirichlet", wdir, wdir_at);
    rep.push("interaction_spin_independence", wspin, wspin_at);

    if m.is_spinful() {
        let b = dof / 2;
        let (mut mix, mut mix_at) = (0.0f64, String::new());
        let (mut asym, mut asym_at) = (0.0f64, String::new());
        for (&(z1, x2, y2), blk) in m.hopping() {
            for i in 0..b {
                for j in 0..b {
                    let cross = blk[(i, b + j)].norm().max(blk[(b + i, j)].norm());
                    if cross > mix {
                        mix = cross;
                        mix_at = format!("(z1={z1}, x2={x2}, y2={y2})");
                    }
                    let d = (blk[(i, j)] - blk[(b + i, b + j)]).norm();
                    if d > asym {
                        asym = d;
                        asym_at = format!("(z1={z1}, x2={x2}, y2={y2})");
                    }
                }
            }
        }
        rep.push("spin_block_coupling", mix, mix_at);
        rep.push("spin_block_equality", asym, asym_at);
    }
    if !m.mu().is_finite() {
        rep.push("finite_values", f64::INFINITY, "mu".into());
    }
    rep
}

/// Uniform grid `2 pi n / n_points`, `n = 0..n_points`.
pub fn uniform_grid(n_points: usize) -> Vec<f64> {
    (0..n_points).map(|n| 2.0 * PI * n as f64 / n_points as f64).collect()
}
