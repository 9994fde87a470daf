//! Band structures on the torus and the cylinder, edge-state detection and
//! the assumption audit.
//!
//! Cylinder spectra live on the active rows `1..L`; edge wavefunctions are
//! embedded back into the full `M (L + 1)` space with zero Dirichlet rows.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::lattice::{
    active_hamiltonian, active_hamiltonian_dk, bulk_bloch_hamiltonian, uniform_grid, Boundary,
    LatticeModel,
};
use crate::linalg::{c, eigh, eigvalsh, resolve_degeneracies, select_columns, CMat, C64};

/// Knobs for branch linkage.
#[derive(Debug, Clone, Copy)]
pub struct LinkOptions {
    /// Minimal `|<v(k1), v(k1 + dk)>|` accepted as a clean link.
    pub overlap_threshold: f64,
    /// Eigenvalues closer than this are treated as one cluster and resolved
    /// by the position operator.
    pub degeneracy_tol: f64,
}

impl Default for LinkOptions {
    fn default() -> Self {
        Self { overlap_threshold: 0.5, degeneracy_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenBranch {
    pub index: usize,
    pub k1: Vec<f64>,
    pub energies: Vec<f64>,
    /// Normalized eigenvectors on the active subspace.
    #[serde(skip)]
    pub vectors: Vec<Vec<C64>>,
    /// `|<v(k_j), v(k_{j+1})>|` for each link.
    pub link_overlaps: Vec<f64>,
    /// Link indices `j` (between `k_j` and `k_{j+1}`) below the threshold.
    pub ambiguous_links: Vec<usize>,
}

struct KSample {
    values: Vec<f64>,
    vectors: CMat,
}

/// Position-like operator used to split degenerate clusters: the row index,
/// shifted per spin block so that spin sectors never mix.
fn position_operator(m: &LatticeModel) -> CMat {
    let n = m.active_dim();
    let dof = m.dof();
    let first = m.active_rows().start;
    let shift = (m.rows() + 2) as f64;
    CMat::from_fn(n, n, |i, j| {
        if i != j {
            return c(0.0, 0.0);
        }
        let x2 = i / dof + first;
        let r = i % dof;
        let s = if m.spin_sign(r) < 0.0 { shift } else { 0.0 };
        c(x2 as f64 + s, 0.0)
    })
}

fn diagonalize_grid(m: &LatticeModel, grid: &[f64], tol: f64) -> Result<Vec<KSample>> {
    let pos = position_operator(m);
    grid.par_iter()
        .map(|&k1| {
            let h = active_hamiltonian(m, k1);
            let e = eigh(&h).map_err(|_| LabError::EigenFailure { k1 })?;
            let (vectors, _) = resolve_degeneracies(&e, &pos, tol).map_err(|_| LabError::EigenFailure { k1 })?;
            Ok(KSample { values: e.values, vectors })
        })
        .collect()
}

/// Greedy maximal-overlap matching between consecutive k points. Returns,
/// for every position `a` at `k_j`, the matched column at `k_{j+1}` and the
/// overlap.
fn match_columns(a: &KSample, b: &KSample) -> Vec<(usize, f64)> {
    let n = a.values.len();
    let ov = a.vectors.adjoint() * &b.vectors;
    let mut cand: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(4 * n);
    for i in 0..n {
        for j in 0..n {
            let o = ov[(i, j)].norm();
            if o > 1e-3 {
                cand.push((i, j, o, (a.values[i] - b.values[j]).abs()));
            }
        }
    }
    cand.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.3.total_cmp(&y.3)).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
    let mut out = vec![(usize::MAX, 0.0); n];
    let mut used = vec![false; n];
    for (i, j, o, _) in cand {
        if out[i].0 == usize::MAX && !used[j] {
            out[i] = (j, o);
            used[j] = true;
        }
    }
    // leftovers by energy order
    let mut free_a: Vec<usize> = (0..n).filter(|&i| out[i].0 == usize::MAX).collect();
    let mut free_b: Vec<usize> = (0..n).filter(|&j| !used[j]).collect();
    free_a.sort_by(|&x, &y| a.values[x].total_cmp(&a.values[y]));
    free_b.sort_by(|&x, &y| b.values[x].total_cmp(&b.values[y]));
    for (i, j) in free_a.into_iter().zip(free_b) {
        out[i] = (j, ov[(i, j)].norm());
    }
    out
}

fn link(samples: &[KSample], grid: &[f64], opts: &LinkOptions) -> Vec<EigenBranch> {
    let n = samples.first().map(|s| s.values.len()).unwrap_or(0);
    let links: Vec<Vec<(usize, f64)>> = samples
        .par_windows(2)
        .map(|w| match_columns(&w[0], &w[1]))
        .collect();
    (0..n)
        .map(|b| {
            let mut col = b;
            let mut energies = Vec::with_capacity(grid.len());
            let mut vectors = Vec::with_capacity(grid.len());
            let mut overlaps = Vec::new();
            let mut ambiguous = Vec::new();
            for (j, s) in samples.iter().enumerate() {
                energies.push(s.values[col]);
                vectors.push((0..s.vectors.nrows()).map(|i| s.vectors[(i, col)]).collect());
                if j + 1 < samples.len() {
                    let (next, o) = links[j][col];
                    overlaps.push(o);
                    if o < opts.overlap_threshold {
                        ambiguous.push(j);
                    }
                    col = next;
                }
            }
            EigenBranch {
                index: b,
                k1: grid.to_vec(),
                energies,
                vectors,
                link_overlaps: overlaps,
                ambiguous_links: ambiguous,
            }
        })
        .collect()
}

/// Diagonalize `Ĥ(k1)` on every grid point and link eigenvalues into
/// branches by eigenvector overlap. Branch `q` starts at the `q`-th lowest
/// eigenvalue of the first grid point.
pub fn band_structure(m: &LatticeModel, grid: &[f64]) -> Result<Vec<EigenBranch>> {
    band_structure_with(m, grid, &LinkOptions::default())
}

pub fn band_structure_with(m: &LatticeModel, grid: &[f64], opts: &LinkOptions) -> Result<Vec<EigenBranch>> {
    if grid.is_empty() {
        return Err(LabError::param("grid", "empty k1 grid"));
    }
    if grid.iter().any(|k| !k.is_finite()) {
        return Err(LabError::param("grid", "non-finite momentum"));
    }
    let samples = diagonalize_grid(m, grid, opts.degeneracy_tol)?;
    Ok(link(&samples, grid, opts))
}

/// Extremal bulk energies around `mu`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BulkGap {
    /// Highest bulk energy below `mu` (`-inf` if none).
    pub below: f64,
    /// Lowest bulk energy above `mu` (`+inf` if none).
    pub above: f64,
    /// Number of bulk bands entirely below `mu`.
    pub filled: usize,
}

impl BulkGap {
    pub fn distance(&self, mu: f64) -> f64 {
        (mu - self.below).min(self.above - mu)
    }
    pub fn width(&self) -> f64 {
        self.above - self.below
    }
}

/// Bulk bands of the kernel on an `n x n` grid; fails with `NoGap` when a
/// band touches `mu`.
pub fn bulk_gap(m: &LatticeModel, mu: f64, n: usize) -> Result<BulkGap> {
    if n < 2 {
        return Err(LabError::param("bulk_grid", "need at least 2 points per direction"));
    }
    let grid = uniform_grid(n);
    let rows: Vec<Vec<f64>> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let k = (grid[idx / n], grid[idx % n]);
            let h = bulk_bloch_hamiltonian(m, k)?;
            eigvalsh(&h).map_err(|_| LabError::EigenFailure { k1: k.0 })
        })
        .collect::<Result<_>>()?;
    let nb = rows[0].len();
    let mut below = f64::NEG_INFINITY;
    let mut above = f64::INFINITY;
    let mut filled = 0;
    for q in 0..nb {
        let lo = rows.iter().map(|r| r[q]).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r[q]).fold(f64::NEG_INFINITY, f64::max);
        if lo <= mu && mu <= hi {
            return Err(LabError::NoGap {
                mu,
                detail: format!("bulk band {q} spans [{lo:.6}, {hi:.6}]"),
            });
        }
        if hi < mu {
            below = below.max(hi);
            filled += 1;
        } else {
            above = above.min(lo);
        }
    }
    Ok(BulkGap { below, above, filled })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Side {
    #[serde(rename = "x2=0")]
    Lower,
    #[serde(rename = "x2=L")]
    Upper,
}

#[derive(Debug, Clone, Copy)]
pub struct EdgeOptions {
    /// Branch-crossing window; `None` means half the distance from `mu` to
    /// the bulk spectrum.
    pub delta_tilde: Option<f64>,
    pub link: LinkOptions,
    pub flat_tol: f64,
    /// Points per direction of the bulk gap scan (at least the k1 grid size
    /// is used).
    pub bulk_grid: usize,
    pub fit_start: usize,
    pub fit_len: usize,
    pub residual_threshold: f64,
    /// Densities below `noise_floor * max` are left out of the decay fit.
    pub noise_floor: f64,
}

impl Default for EdgeOptions {
    fn default() -> Self {
        Self {
            delta_tilde: None,
            link: LinkOptions::default(),
            flat_tol: 1e-6,
            bulk_grid: 96,
            fit_start: 3,
            fit_len: 20,
            residual_threshold: 1e-2,
            noise_floor: 1e-26,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeState {
    /// Channel index inside the spin block (ordered by side, then k_F).
    pub channel: usize,
    /// 0 = up, 1 = down; always 0 for spinless models.
    pub spin: usize,
    pub branch: usize,
    /// Grid minimizer of `|ε - μ|`.
    pub k_f_grid: f64,
    /// Quadratically refined crossing.
    pub k_f: f64,
    pub energy_at_k_f: f64,
    /// Forward discrete derivative `(L/2π)(ε(k_F + 2π/L) - ε(k_F))`.
    pub velocity: f64,
    pub velocity_centered: f64,
    /// `<ξ|∂_{k1}Ĥ|ξ>` at the refined `k_F`.
    pub velocity_refined: f64,
    pub omega: i32,
    /// `ξ` at `k_F` on the full `M (L + 1)` space.
    #[serde(skip)]
    pub wavefunction: Vec<C64>,
    /// Amplitude decay rate: `Σ_r |ξ_{x2,r}|² ~ e^{-2 c d}`, `d` the distance to `side`.
    pub decay_rate: f64,
    pub fit_residual: f64,
    pub side: Side,
    /// Weight on the half of the strip away from `side`.
    pub far_weight: f64,
    /// Decay rate of the discrete k1-derivative of `ξ` (parallel-transport gauge).
    pub derivative_decay_rate: f64,
}

/// Row densities `Σ_r |ξ_{x2,r}|²` on the full row range.
pub fn row_density(m: &LatticeModel, xi: &[C64]) -> Vec<f64> {
    let dof = m.dof();
    (0..m.rows())
        .map(|x2| (0..dof).map(|r| xi[x2 * dof + r].norm_sqr()).sum())
        .collect()
}

/// Least-squares fit of `ln n(d) = a - 2 c d` on the window; returns
/// `(c, rms residual)`.
fn decay_fit(profile: &[f64], start: usize, end: usize, floor: f64) -> (f64, f64) {
    let max = profile.iter().cloned().fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = (start..=end.min(profile.len().saturating_sub(1)))
        .filter(|&d| profile[d] > floor * max && profile[d] > 0.0)
        .map(|d| (d as f64, profile[d].ln()))
        .collect();
    if pts.len() < 2 {
        return (f64::NAN, f64::INFINITY);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let rms = (pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum::<f64>() / n).sqrt();
    (-slope / 2.0, rms)
}

fn embed(block: &LatticeModel, full: &LatticeModel, spin: usize, v: &[C64]) -> Vec<C64> {
    let b = block.dof();
    let first = block.active_rows().start;
    let mut out = vec![c(0.0, 0.0); full.full_dim()];
    for (i, z) in v.iter().enumerate() {
        let x2 = i / b + first;
        let r = i % b;
        out[full.index(x2, spin * b + r)] = *z;
    }
    out
}

/// Make the first component above `floor` real and positive.
fn gauge(v: &mut [C64], floor: f64) {
    if let Some(z) = v.iter().find(|z| z.norm() > floor).copied() {
        let ph = z.conj() / z.norm();
        v.iter_mut().for_each(|x| *x *= ph);
    }
}

/// Root of the quadratic through `(k_{i-1}, k_i, k_{i+1})` closest to `k_i`.
fn refine_crossing(e: [f64; 3], mu: f64, k: f64, h: f64) -> f64 {
    let a = e[1] - mu;
    let b = (e[2] - e[0]) / 2.0;
    let cc = (e[2] - 2.0 * e[1] + e[0]) / 2.0;
    let t = if cc.abs() < 1e-14 * (b.abs() + 1e-300) {
        -a / b
    } else {
        let disc = b * b - 4.0 * cc * a;
        if disc < 0.0 {
            -a / b
        } else {
            let s = disc.sqrt();
            // numerically stable pair of roots
            let q = -0.5 * (b + b.signum() * s);
            let r1 = q / cc;
            let r2 = if q != 0.0 { a / q } else { r1 };
            if r1.abs() < r2.abs() { r1 } else { r2 }
        }
    };
    let t = if t.is_finite() && t.abs() <= 1.0 { t } else { (-a / b).clamp(-1.0, 1.0) };
    k + t * h
}

/// Hellmann–Feynman velocity at `k` of the eigenstate following `reference`.
fn hellmann_feynman(m: &LatticeModel, k: f64, reference: &[C64], tol: f64) -> Result<f64> {
    let h = active_hamiltonian(m, k);
    let e = eigh(&h).map_err(|_| LabError::EigenFailure { k1: k })?;
    let n = e.values.len();
    let overlap = |col: &CMat, j: usize| -> f64 {
        let mut s = c(0.0, 0.0);
        for i in 0..n {
            s += reference[i].conj() * col[(i, j)];
        }
        s.norm()
    };
    let best = (0..n)
        .max_by(|&a, &b| overlap(&e.vectors, a).total_cmp(&overlap(&e.vectors, b)))
        .unwrap_or(0);
    let cluster: Vec<usize> = (0..n).filter(|&j| (e.values[j] - e.values[best]).abs() < tol).collect();
    let u = select_columns(&e.vectors, &cluster);
    let dh = active_hamiltonian_dk(m, k);
    let sub = u.adjoint() * &dh * &u;
    let sub = CMat::from_fn(sub.nrows(), sub.ncols(), |i, j| 0.5 * (sub[(i, j)] + sub[(j, i)].conj()));
    let inner = eigh(&sub)?;
    let rotated = &u * &inner.vectors;
    let pick = (0..cluster.len())
        .max_by(|&a, &b| overlap(&rotated, a).total_cmp(&overlap(&rotated, b)))
        .unwrap_or(0);
    Ok(inner.values[pick])
}

fn check_uniform(grid: &[f64]) -> Result<f64> {
    let n = grid.len();
    if n < 4 {
        return Err(LabError::param("grid", "need at least 4 k1 points"));
    }
    let h = 2.0 * std::f64::consts::PI / n as f64;
    for (j, k) in grid.iter().enumerate() {
        if (k - grid[0] - j as f64 * h).abs() > 1e-9 {
            return Err(LabError::param("grid", "k1 grid must be uniform over the circle"));
        }
    }
    Ok(h)
}

/// In-gap branches crossing `mu` on a cylinder model.
pub fn detect_edge_states(m: &LatticeModel, mu: f64, grid: &[f64]) -> Result<Vec<EdgeState>> {
    detect_edge_states_with(m, mu, grid, &EdgeOptions::default())
}

pub fn detect_edge_states_with(
    m: &LatticeModel,
    mu: f64,
    grid: &[f64],
    opts: &EdgeOptions,
) -> Result<Vec<EdgeState>> {
    if m.boundary() != Boundary::Cylinder {
        return Err(LabError::WrongBoundary("edge detection needs a cylinder model".into()));
    }
    if !mu.is_finite() {
        return Err(LabError::param("mu", "must be finite"));
    }
    let h = check_uniform(grid)?;
    let n = grid.len();
    let gap = bulk_gap(m, mu, opts.bulk_grid.max(n))?;
    let window = opts.delta_tilde.unwrap_or(gap.distance(mu) / 2.0);

    // ghost points so that every crossing and its minimizer have neighbours
    let tau = 2.0 * std::f64::consts::PI;
    let mut ext = Vec::with_capacity(n + 3);
    ext.push(grid[n - 1] - tau);
    ext.extend_from_slice(grid);
    ext.push(grid[0] + tau);
    ext.push(grid[1] + tau);

    let l = m.size();
    let mut out = Vec::new();
    for (spin, block) in m.spin_blocks().into_iter().enumerate() {
        let branches = band_structure_with(&block, &ext, &opts.link)?;
        let mut found = Vec::new();
        for br in &branches {
            let close = br.energies[1..=n].iter().any(|e| (e - mu).abs() <= window);
            if !close {
                continue;
            }
            for j in 1..=n {
                let (e0, e1) = (br.energies[j] - mu, br.energies[j + 1] - mu);
                if (e0 >= 0.0) == (e1 >= 0.0) {
                    continue;
                }
                let i = if e0.abs() <= e1.abs() { j } else { j + 1 };
                // links used for the crossing and the difference quotients
                for lj in [i - 1, i] {
                    if br.ambiguous_links.contains(&lj) {
                        return Err(LabError::AmbiguousBranch {
                            k1: ext[lj].rem_euclid(tau),
                            overlap: br.link_overlaps[lj],
                        });
                    }
                }
                found.push(edge_from_branch(m, &block, spin, br, &ext, i, mu, h, l, opts)?);
            }
        }
        found.sort_by(|a, b| a.side.cmp(&b.side).then(a.k_f.total_cmp(&b.k_f)));
        for (ch, e) in found.iter_mut().enumerate() {
            e.channel = ch;
        }
        out.extend(found);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn edge_from_branch(
    full: &LatticeModel,
    block: &LatticeModel,
    spin: usize,
    br: &EigenBranch,
    ext: &[f64],
    i: usize,
    mu: f64,
    h: f64,
    l: usize,
    opts: &EdgeOptions,
) -> Result<EdgeState> {
    let wrap = |k: f64| k.rem_euclid(2.0 * std::f64::consts::PI);
    let e = &br.energies;
    let velocity = (e[i + 1] - e[i]) / h;
    let velocity_centered = (e[i + 1] - e[i - 1]) / (2.0 * h);
    if velocity.abs() < opts.flat_tol {
        return Err(LabError::FlatBand { k_f: wrap(ext[i]), velocity });
    }
    let k_f = refine_crossing([e[i - 1], e[i], e[i + 1]], mu, ext[i], h);
    let velocity_refined = hellmann_feynman(block, k_f, &br.vectors[i], 1e-7)?;

    let mut xi = embed(block, full, spin, &br.vectors[i]);
    gauge(&mut xi, 1e-8);
    let dens = row_density(full, &xi);
    let lower: f64 = dens.iter().take(l / 2 + 1).sum();
    let upper: f64 = dens.iter().skip(l / 2 + 1).sum();
    let side = if lower >= upper { Side::Lower } else { Side::Upper };
    let profile: Vec<f64> = match side {
        Side::Lower => dens.clone(),
        Side::Upper => dens.iter().rev().cloned().collect(),
    };
    let end = (l / 2).min(opts.fit_start + opts.fit_len);
    let (decay_rate, fit_residual) = decay_fit(&profile, opts.fit_start, end, opts.noise_floor);
    let far_weight: f64 = profile.iter().skip(l / 2 + 1).sum();

    // discrete derivative of ξ along the branch in the parallel-transport gauge
    let a = &br.vectors[i];
    let b = &br.vectors[i + 1];
    let ov: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let ph = if ov.norm() > 0.0 { ov.conj() / ov.norm() } else { c(1.0, 0.0) };
    let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| (y * ph - x) / h).collect();
    let dprof = row_density(full, &embed(block, full, spin, &d));
    let dprof: Vec<f64> = match side {
        Side::Lower => dprof,
        Side::Upper => dprof.into_iter().rev().collect(),
    };
    let (derivative_decay_rate, _) = decay_fit(&dprof, opts.fit_start, end, opts.noise_floor);

    Ok(EdgeState {
        channel: 0,
        spin,
        branch: br.index,
        k_f_grid: wrap(ext[i]),
        k_f: wrap(k_f),
        energy_at_k_f: e[i],
        velocity,
        velocity_centered,
        velocity_refined,
        omega: if velocity > 0.0 { 1 } else { -1 },
        wavefunction: xi,
        decay_rate,
        fit_residual,
        side,
        far_weight,
        derivative_decay_rate,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FermiPoint {
    pub spin: usize,
    pub side: Side,
    pub k_f: f64,
    pub k_f_grid: f64,
    pub velocity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayCheck {
    pub spin: usize,
    pub channel: usize,
    pub decay_rate: f64,
    pub derivative_decay_rate: f64,
    pub fit_residual: f64,
    pub localized: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionVerdict {
    pub n_edge: usize,
    pub spin_degenerate: bool,
    pub single_channel: bool,
    pub opposite_chirality_per_side: bool,
    pub decay_checks: Vec<DecayCheck>,
    pub fermi_points: Vec<FermiPoint>,
    pub bulk_gap: BulkGap,
    pub failed_checks: Vec<String>,
}

/// Run edge detection on the uniform `L`-point grid and check the edge
/// assumptions one by one.
pub fn audit_assumptions(m: &LatticeModel, mu: f64) -> Result<AssumptionVerdict> {
    audit_edges(m, mu, &uniform_grid(m.size()), &EdgeOptions::default())
}

pub fn audit_edges(m: &LatticeModel, mu: f64, grid: &[f64], opts: &EdgeOptions) -> Result<AssumptionVerdict> {
    let edges = detect_edge_states_with(m, mu, grid, opts)?;
    let gap = bulk_gap(m, mu, opts.bulk_grid.max(grid.len()))?;
    let mut failed = Vec::new();
    let n_edge = edges.len();

    let spin_degenerate = m.is_spinful() && {
        let up: Vec<&EdgeState> = edges.iter().filter(|e| e.spin == 0).collect();
        let dn: Vec<&EdgeState> = edges.iter().filter(|e| e.spin == 1).collect();
        up.len() == dn.len()
            && up.iter().zip(&dn).all(|(a, b)| {
                a.side == b.side && (a.k_f - b.k_f).abs() <= 1e-12 && (a.velocity - b.velocity).abs() <= 1e-12
            })
    };
    if !spin_degenerate {
        failed.push(if m.is_spinful() { "spin_degeneracy" } else { "spin_structure" }.to_string());
    }

    let per_side = |spin: usize, side: Side| edges.iter().filter(|e| e.spin == spin && e.side == side).count();
    let single_channel = m.is_spinful()
        && n_edge == 4
        && (0..2).all(|s| per_side(s, Side::Lower) == 1 && per_side(s, Side::Upper) == 1);
    if !single_channel {
        failed.push("single_channel".into());
    }

    let opposite = n_edge > 0
        && (0..if m.is_spinful() { 2 } else { 1 }).all(|s| {
            let lo: Vec<i32> = edges.iter().filter(|e| e.spin == s && e.side == Side::Lower).map(|e| e.omega).collect();
            let hi: Vec<i32> = edges.iter().filter(|e| e.spin == s && e.side == Side::Upper).map(|e| e.omega).collect();
            lo.len() == hi.len() && lo.iter().zip(&hi).all(|(a, b)| a == &-b)
        });
    if n_edge > 0 && !opposite {
        failed.push("opposite_chirality".into());
    }

    let l = m.size() as f64;
    let decay_checks: Vec<DecayCheck> = edges
        .iter()
        .map(|e| {
            let localized = e.decay_rate > 0.0 && e.far_weight <= (-e.decay_rate * l / 4.0).exp();
            let passed = localized
                && e.derivative_decay_rate > 0.0
                && e.fit_residual <= opts.residual_threshold;
            DecayCheck {
                spin: e.spin,
                channel: e.channel,
                decay_rate: e.decay_rate,
                derivative_decay_rate: e.derivative_decay_rate,
                fit_residual: e.fit_residual,
                localized,
                passed,
            }
        })
        .collect();
    for d in &decay_checks {
        if !d.passed {
            failed.push(format!("decay(spin={}, channel={})", d.spin, d.channel));
        }
    }
    let fermi_points = edges
        .iter()
        .map(|e| FermiPoint { spin: e.spin, side: e.side, k_f: e.k_f, k_f_grid: e.k_f_grid, velocity: e.velocity })
        .collect();
    Ok(AssumptionVerdict {
        n_edge,
        spin_degenerate,
        single_channel,
        opposite_chirality_per_side: opposite,
        decay_checks,
        fermi_points,
        bulk_gap: gap,
        failed_checks: failed,
    })
}
