//! Bookkeeping audits of the multiscale expansion: scaling dimensions, tree
//! enumeration with scale labels, dimensional bounds, flows of the running
//! couplings under user-supplied beta functions, and the contraction that
//! fixes the chemical-potential counterterm.
//!
//! Nothing here evaluates tree values. Beta functions are models with a
//! declared envelope; the audits check consequences of that envelope.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const MAX_ENDPOINTS: usize = 8;
pub const MIN_ROOT_SCALE: i32 = -12;

/// Field content `(|P^ψ|, |P^φ|, |P^A|)` of a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldCounts {
    pub psi: u32,
    pub phi: u32,
    pub a: u32,
}

impl FieldCounts {
    pub const fn new(psi: u32, phi: u32, a: u32) -> Self {
        Self { psi, phi, a }
    }
    pub fn total(&self) -> u32 {
        self.psi + self.phi + self.a
    }
}

/// Dimensional gain from the renormalization operator: 2 on the quadratic
/// ψ vertex, 1 on the quartic ψ vertex and on the ψψA vertex, 0 otherwise.
pub fn dimensional_gain(f: FieldCounts) -> i32 {
    match (f.psi, f.phi, f.a) {
        (2, 0, 0) => 2,
        (4, 0, 0) => 1,
        (2, 0, 1) => 1,
        _ => 0,
    }
}

/// `D = |P^ψ|/2 + |P^φ|/2 + |P^A| - 2 + z`, with `z` the gain when
/// `renormalized`, else 0.
pub fn scaling_dimension(n_psi: u32, n_phi: u32, n_a: u32, renormalized: bool) -> Result<i32> {
    if n_psi % 2 != 0 {
        return Err(LabError::param("nPsi", format!("must be even, got {n_psi}")));
    }
    if n_phi % 2 != 0 {
        return Err(LabError::param("nPhi", format!("must be even, got {n_phi}")));
    }
    let f = FieldCounts::new(n_psi, n_phi, n_a);
    let z = if renormalized { dimensional_gain(f) } else { 0 };
    Ok((n_psi / 2 + n_phi / 2 + n_a) as i32 - 2 + z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DimensionEntry {
    pub fields: FieldCounts,
    pub bare: i32,
    pub gain: i32,
    pub renormalized: i32,
}

/// All admissible field contents with at most `max_fields` fields.
pub fn dimension_table(max_fields: u32) -> Vec<DimensionEntry> {
    let mut out = Vec::new();
    for psi in (0..=max_fields).step_by(2) {
        for phi in (0..=max_fields - psi).step_by(2) {
            for a in 0..=max_fields - psi - phi {
                let f = FieldCounts::new(psi, phi, a);
                let bare = scaling_dimension(psi, phi, a, false).expect("even counts");
                let gain = dimensional_gain(f);
                out.push(DimensionEntry { fields: f, bare, gain, renormalized: bare + gain });
            }
        }
    }
    out
}

/// Plane tree in preorder; node 0 is the top vertex. Leaves are endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Shape {
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.parent.len()
    }
    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }
    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }
    pub fn n_leaves(&self) -> usize {
        (0..self.len()).filter(|&v| self.is_leaf(v)).count()
    }

    /// Builds from a parent list; parents must precede children.
    pub fn from_parents(parent: Vec<Option<usize>>) -> Result<Self> {
        if parent.is_empty() || parent[0].is_some() {
            return Err(LabError::param("shape", "node 0 must be the only top vertex"));
        }
        let mut children = vec![Vec::new(); parent.len()];
        for (v, p) in parent.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < v => children[*p].push(v),
                _ => return Err(LabError::param("shape", format!("node {v} has no earlier parent"))),
            }
        }
        Ok(Self { parent, children })
    }

    /// Largest admissible scale of each node: 1 for endpoints, one below
    /// the smallest child bound otherwise.
    fn upper_bounds(&self) -> Vec<i32> {
        let mut ub = vec![1; self.len()];
        for v in (0..self.len()).rev() {
            if let Some(m) = self.children[v].iter().map(|&c| ub[c]).min() {
                ub[v] = m - 1;
            }
        }
        ub
    }

    fn push_subtree(&mut self, parent: Option<usize>, sub: &Shape) {
        let off = self.len();
        for v in 0..sub.len() {
            let p = match sub.parent[v] {
                None => parent,
                Some(q) => Some(q + off),
            };
            self.parent.push(p);
            self.children.push(Vec::new());
            if let Some(p) = p {
                self.children[p].push(off + v);
            }
        }
    }
}

/// All plane trees with `n` leaves whose internal vertices branch at least
/// twice.
pub fn unlabeled_shapes(n: usize) -> Result<Vec<Shape>> {
    if n == 0 || n > MAX_ENDPOINTS {
        return Err(LabError::TooLarge { what: "n_endpoints".into(), value: n, cap: MAX_ENDPOINTS });
    }
    let mut trees: Vec<Vec<Shape>> = vec![Vec::new(); n + 1];
    let leaf = Shape { parent: vec![None], children: vec![Vec::new()] };
    for k in 1..=n {
        if k == 1 {
            trees[1].push(leaf.clone());
        } else {
            // a root over a forest of at least two trees
            for f in forests(&trees, k) {
                let mut s = Shape { parent: vec![None], children: vec![Vec::new()] };
                for t in &f {
                    s.push_subtree(Some(0), t);
                }
                trees[k].push(s);
            }
        }
    }
    Ok(std::mem::take(&mut trees[n]))
}

/// Ordered sequences of at least two trees with `k` leaves in total.
fn forests(trees: &[Vec<Shape>], k: usize) -> Vec<Vec<Shape>> {
    fn rec(trees: &[Vec<Shape>], left: usize, cur: &mut Vec<Shape>, out: &mut Vec<Vec<Shape>>) {
        if left == 0 {
            if cur.len() >= 2 {
                out.push(cur.clone());
            }
            return;
        }
        for first in 1..=left {
            if first == left && cur.is_empty() {
                continue;
            }
            for t in &trees[first] {
                cur.push(t.clone());
                rec(trees, left - first, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(trees, k, &mut Vec::new(), &mut out);
    out
}

/// Scale-labelled tree. `shape` node 0 is the vertex `v0` on scale
/// `h_root + 1`; scales strictly increase toward the endpoints, non-endpoint
/// vertices sit on scales `<= 0` and endpoints on scales `<= 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GnTree {
    pub h_root: i32,
    pub shape: Arc<Shape>,
    pub scales: Vec<i32>,
}

impl GnTree {
    pub fn validate(&self) -> Result<()> {
        let s = &self.shape;
        if self.scales.len() != s.len() {
            return Err(LabError::param("scales", "one scale per vertex"));
        }
        if s.is_leaf(0) {
            return Err(LabError::param("shape", "v0 cannot be an endpoint"));
        }
        if self.scales[0] != self.h_root + 1 {
            return Err(LabError::param("scales", "v0 must sit one scale above the root"));
        }
        for v in 0..s.len() {
            let cap = if s.is_leaf(v) { 1 } else { 0 };
            if self.scales[v] > cap {
                return Err(LabError::param("scales", format!("vertex {v} above scale {cap}")));
            }
            if let Some(p) = s.parent[v] {
                if self.scales[v] <= self.scales[p] {
                    return Err(LabError::param("scales", format!("vertex {v} not above its parent")));
                }
            }
        }
        Ok(())
    }
}

/// Lazy stream of labelled trees over every unlabelled shape.
///
/// A shape whose top is a branching point either coincides with `v0` (top
/// on `h_root + 1`) or hangs below a trivial `v0`; a single-endpoint shape
/// always hangs below `v0`.
pub struct TreeStream {
    h_root: i32,
    shapes: Vec<Arc<Shape>>,
    cur: Option<Labeling>,
    next_shape: usize,
}

struct Labeling {
    shape: Arc<Shape>,
    ub: Vec<i32>,
    scales: Vec<i32>,
    free_from: usize,
}

impl Labeling {
    fn new(shape: Arc<Shape>, h_root: i32, free_from: usize) -> Option<Self> {
        let ub = shape.upper_bounds();
        let mut scales = vec![h_root + 1; shape.len()];
        for v in free_from..shape.len() {
            scales[v] = scales[shape.parent[v].expect("v0 precedes")] + 1;
            if scales[v] > ub[v] {
                return None;
            }
        }
        if h_root + 1 > ub[0] {
            return None;
        }
        Some(Self { shape, ub, scales, free_from })
    }

    fn advance(&mut self) -> bool {
        for i in (self.free_from..self.scales.len()).rev() {
            if self.scales[i] < self.ub[i] {
                self.scales[i] += 1;
                for j in i + 1..self.scales.len() {
                    self.scales[j] = self.scales[self.shape.parent[j].expect("v0 precedes")] + 1;
                }
                return true;
            }
        }
        false
    }
}

impl TreeStream {
    fn variants(&self, idx: usize) -> Vec<(Arc<Shape>, usize)> {
        let reduced = &self.shapes[idx];
        let mut hang = Shape { parent: vec![None], children: vec![Vec::new()] };
        hang.push_subtree(Some(0), reduced);
        let mut v = vec![(Arc::new(hang), 1)];
        if !reduced.is_leaf(0) {
            v.push((reduced.clone(), 1));
        }
        v
    }
}

impl Iterator for TreeStream {
    type Item = GnTree;

    fn next(&mut self) -> Option<GnTree> {
        loop {
            if let Some(l) = &mut self.cur {
                let t = GnTree { h_root: self.h_root, shape: l.shape.clone(), scales: l.scales.clone() };
                if !l.advance() {
                    self.cur = None;
                }
                return Some(t);
            }
            // 2 variants per shape, encoded as next_shape = 2 * idx + variant
            let idx = self.next_shape / 2;
            if idx >= self.shapes.len() {
                return None;
            }
            let variant = self.next_shape % 2;
            self.next_shape += 1;
            let vars = self.variants(idx);
            if let Some((shape, free)) = vars.get(variant).cloned() {
                self.cur = Labeling::new(shape, self.h_root, free);
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeCensus {
    pub n_endpoints: usize,
    pub h_root: i32,
    pub unlabeled: usize,
    pub unlabeled_bound: u64,
    pub labeled: u64,
}

/// Unlabelled shapes with `n` endpoints and a lazy stream of their scale
/// labellings below a root on `h_root`.
pub fn enumerate_trees(n_endpoints: usize, h_root: i32) -> Result<(TreeCensus, TreeStream)> {
    if h_root < MIN_ROOT_SCALE {
        return Err(LabError::TooLarge {
            what: "scales below 0".into(),
            value: h_root.unsigned_abs() as usize,
            cap: MIN_ROOT_SCALE.unsigned_abs() as usize,
        });
    }
    if h_root > -1 {
        return Err(LabError::param("h_root", "must be negative"));
    }
    let shapes = unlabeled_shapes(n_endpoints)?;
    let bound = 4u64.pow(n_endpoints as u32);
    assert!(shapes.len() as u64 <= bound, "unlabelled tree count exceeds 4^n");
    let labeled = shapes.iter().map(|s| labelings_count(s, h_root)).sum();
    let census = TreeCensus {
        n_endpoints,
        h_root,
        unlabeled: shapes.len(),
        unlabeled_bound: bound,
        labeled,
    };
    let stream = TreeStream {
        h_root,
        shapes: shapes.into_iter().map(Arc::new).collect(),
        cur: None,
        next_shape: 0,
    };
    Ok((census, stream))
}

/// Number of labelled trees over one unlabelled shape, by dynamic
/// programming over the scale of each vertex.
pub fn labelings_count(reduced: &Shape, h_root: i32) -> u64 {
    let ub = reduced.upper_bounds();
    let lo = h_root + 1;
    let width = (1 - lo + 1) as usize;
    // ways[v][s - lo]: labellings of the subtree of v with v on scale s
    let mut ways = vec![vec![0u64; width]; reduced.len()];
    for v in (0..reduced.len()).rev() {
        for s in lo..=ub[v] {
            let mut w = 1u64;
            for &c in &reduced.children[v] {
                w *= ((s + 1)..=ub[c]).map(|t| ways[c][(t - lo) as usize]).sum::<u64>();
            }
            ways[v][(s - lo) as usize] = w;
        }
    }
    let below_v0: u64 = ((lo + 1)..=ub[0]).map(|t| ways[0][(t - lo) as usize]).sum();
    let on_v0 = if reduced.is_leaf(0) || lo > ub[0] { 0 } else { ways[0][0] };
    below_v0 + on_v0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSide {
    /// `D_v` per vertex, `None` on endpoints.
    pub dimensions: Vec<Option<i32>>,
    /// `Σ (h_v - h_v') D_v` over non-endpoint vertices.
    pub exponent: i64,
    /// `2^{-exponent}`.
    pub factor: f64,
    pub summable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundAudit {
    pub renormalized: BoundSide,
    pub unrenormalized: BoundSide,
}

/// Scale-gain bookkeeping of a labelled tree with external field counts per
/// vertex. Each non-endpoint `v` with predecessor `v'` (the root for `v0`)
/// contributes `2^{-(h_v - h_v') D_v}`; the scale sum converges iff every
/// such `D_v >= 1`. Both the renormalized and the bare dimensions are
/// reported on the same tree.
pub fn dimensional_bound_audit(tree: &GnTree, p: &[FieldCounts]) -> Result<BoundAudit> {
    tree.validate()?;
    let s = &tree.shape;
    if p.len() != s.len() {
        return Err(LabError::param("P", format!("{} field sets for {} vertices", p.len(), s.len())));
    }
    for v in 0..s.len() {
        if p[v].psi % 2 != 0 || p[v].phi % 2 != 0 {
            return Err(LabError::param("P", format!("vertex {v}: odd field count")));
        }
        if p[v].total() == 0 && v != 0 {
            return Err(LabError::param("P", format!("vertex {v}: empty field set")));
        }
        if !s.is_leaf(v) {
            let mut sum = FieldCounts::new(0, 0, 0);
            for &c in &s.children[v] {
                sum.psi += p[c].psi;
                sum.phi += p[c].phi;
                sum.a += p[c].a;
            }
            if p[v].psi > sum.psi || p[v].phi > sum.phi || p[v].a > sum.a {
                return Err(LabError::param("P", format!("vertex {v}: not contained in its children's fields")));
            }
        }
    }
    let side = |renorm: bool| -> BoundSide {
        let mut dims = vec![None; s.len()];
        let mut exponent = 0i64;
        let mut summable = true;
        for v in 0..s.len() {
            if s.is_leaf(v) {
                continue;
            }
            let d = scaling_dimension(p[v].psi, p[v].phi, p[v].a, renorm).expect("checked");
            let hp = s.parent[v].map_or(tree.h_root, |q| tree.scales[q]);
            exponent += (tree.scales[v] - hp) as i64 * d as i64;
            summable &= d >= 1;
            dims[v] = Some(d);
        }
        BoundSide { dimensions: dims, exponent, factor: (-(exponent as f64)).exp2(), summable }
    };
    Ok(BoundAudit { renormalized: side(true), unrenormalized: side(false) })
}

/// Running couplings on one scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowState {
    pub z: f64,
    pub v: f64,
    pub nu: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Betas {
    pub z: f64,
    pub v: f64,
    pub nu: f64,
    pub lambda: f64,
}

/// Declared bounds `|β^z|, |β^λ| <= C λ² 2^{θk}` and
/// `|β^v|, |β^ν| <= C |λ| 2^{θk}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub c: f64,
    pub theta: f64,
    pub lambda: f64,
}

impl Envelope {
    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(LabError::param("C", "must be finite and >= 0"));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(LabError::param("theta", "must be positive"));
        }
        if !self.lambda.is_finite() {
            return Err(LabError::param("lambda", "must be finite"));
        }
        Ok(())
    }
    pub fn quadratic(&self, k: i32) -> f64 {
        self.c * self.lambda * self.lambda * (self.theta * k as f64).exp2()
    }
    pub fn linear(&self, k: i32) -> f64 {
        self.c * self.lambda.abs() * (self.theta * k as f64).exp2()
    }
    /// `Σ_{k <= top} 2^{θk}`.
    pub fn tail(&self, top: i32) -> f64 {
        (self.theta * top as f64).exp2() / (1.0 - (-self.theta).exp2())
    }
}

/// Beta function on scale `k`, given the couplings on scale `k`.
pub trait BetaModel {
    fn envelope(&self) -> Envelope;
    fn beta(&self, k: i32, state: &FlowState) -> Betas;
}

/// `β^x_k = a_x λ^{p_x} 2^{θk}` with `p = 2` for `z, λ` and `p = 1` for
/// `v, ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLawBeta {
    pub envelope: Envelope,
    pub a_z: f64,
    pub a_v: f64,
    pub a_nu: f64,
    pub a_lambda: f64,
}

impl BetaModel for PowerLawBeta {
    fn envelope(&self) -> Envelope {
        self.envelope
    }
    fn beta(&self, k: i32, _: &FlowState) -> Betas {
        let e = &self.envelope;
        let g = (e.theta * k as f64).exp2();
        let l = e.lambda;
        Betas { z: self.a_z * l * l * g, v: self.a_v * l * g, nu: self.a_nu * l * g, lambda: self.a_lambda * l * l * g }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowTrajectory {
    /// `0, -1, ..., h_min`.
    pub scales: Vec<i32>,
    pub states: Vec<FlowState>,
    pub envelope: Envelope,
    /// `|λ_{h_min} - λ_0|` and its series bound `C λ² Σ_k 2^{θk}`.
    pub lambda_drift: f64,
    pub lambda_drift_bound: f64,
    pub v_drift: f64,
    pub v_drift_bound: f64,
    /// `|log(Z_{h_min}/Z_0)|` and `-Σ_k log(1 - C λ² 2^{θk})`.
    pub log_z_drift: f64,
    pub log_z_drift_bound: f64,
    /// `max_h |λ_{h_min} - λ_h| / (C λ² Σ_{k <= h} 2^{θk})`; at most 1.
    pub lambda_speed_ratio: f64,
    pub v_speed_ratio: f64,
    pub within_envelope: bool,
}

const ENVELOPE_SLACK: f64 = 1e-12;

/// Iterates
/// `Z_{h-1} = Z_h (1 + β^z_h)`, `v_{h-1} = v_h + β^v_h`,
/// `ν_{h-1} = 2 ν_h + 2 β^ν_h`, `λ_{h-1} = λ_h + β^λ_h`
/// from `h = 0` down to `h_min`, checking every beta against the declared
/// envelope.
pub fn flow_iterate(initial: FlowState, model: &dyn BetaModel, h_min: i32) -> Result<FlowTrajectory> {
    let env = model.envelope();
    env.validate()?;
    if h_min > 0 {
        return Err(LabError::param("h_min", "must be <= 0"));
    }
    let mut scales = vec![0];
    let mut states = vec![initial];
    let mut log_z_bound = 0.0;
    let check = |which: &str, k: i32, value: f64, bound: f64| -> Result<()> {
        if !(value.abs() <= bound * (1.0 + ENVELOPE_SLACK)) {
            return Err(LabError::BetaBoundViolated { which: which.into(), scale: k, value: value.abs(), bound });
        }
        Ok(())
    };
    for k in (h_min + 1..=0).rev() {
        let s = *states.last().expect("nonempty");
        let b = model.beta(k, &s);
        check("z", k, b.z, env.quadratic(k))?;
        check("v", k, b.v, env.linear(k))?;
        check("nu", k, b.nu, env.linear(k))?;
        check("lambda", k, b.lambda, env.quadratic(k))?;
        if env.quadratic(k) < 1.0 {
            log_z_bound -= (-env.quadratic(k)).ln_1p();
        } else {
            log_z_bound = f64::INFINITY;
        }
        states.push(FlowState {
            z: s.z * (1.0 + b.z),
            v: s.v + b.v,
            nu: 2.0 * s.nu + 2.0 * b.nu,
            lambda: s.lambda + b.lambda,
        });
        scales.push(k - 1);
    }
    let first = states[0];
    let last = *states.last().expect("nonempty");
    let lambda_drift = (last.lambda - first.lambda).abs();
    let v_drift = (last.v - first.v).abs();
    let log_z_drift = (last.z / first.z).ln().abs();
    let l2 = env.c * env.lambda * env.lambda;
    let l1 = env.c * env.lambda.abs();
    let lambda_drift_bound = l2 * env.tail(0);
    let v_drift_bound = l1 * env.tail(0);
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else if num == 0.0 { 0.0 } else { f64::INFINITY };
    // accumulated rounding of the sums, not part of the flow
    let steps = states.len() as f64;
    let net = |a: f64, b: f64| ((a - b).abs() - steps * f64::EPSILON * a.abs().max(b.abs())).max(0.0);
    let mut lambda_speed_ratio: f64 = 0.0;
    let mut v_speed_ratio: f64 = 0.0;
    for (&h, st) in scales.iter().zip(&states) {
        // λ_{h_min} - λ_h collects β_k for h_min < k <= h
        lambda_speed_ratio = lambda_speed_ratio.max(ratio(net(last.lambda, st.lambda), l2 * env.tail(h)));
        v_speed_ratio = v_speed_ratio.max(ratio(net(last.v, st.v), l1 * env.tail(h)));
    }
    let ok = |x: f64, b: f64| x <= b * (1.0 + ENVELOPE_SLACK) + f64::MIN_POSITIVE;
    let within_envelope = ok(lambda_drift, lambda_drift_bound)
        && ok(v_drift, v_drift_bound)
        && ok(log_z_drift, log_z_bound)
        && ok(lambda_speed_ratio, 1.0)
        && ok(v_speed_ratio, 1.0);
    Ok(FlowTrajectory {
        scales,
        states,
        envelope: env,
        lambda_drift,
        lambda_drift_bound,
        v_drift,
        v_drift_bound,
        log_z_drift,
        log_z_drift_bound: log_z_bound,
        lambda_speed_ratio,
        v_speed_ratio,
        within_envelope,
    })
}

/// Rescaled beta function `β̃^ν_{j+1}` of the chemical-potential flow, as a
/// function of the current sequence `ν` (indexed by `-k`, so `nu[0] = ν_0`).
pub trait NuBeta {
    fn beta(&self, j: i32, nu: &[f64]) -> f64;
    /// `C` with `|β̃| <= C |λ|`.
    fn bound(&self) -> f64;
    /// Lipschitz constant in the `2^{-θk}`-weighted sup norm.
    fn lipschitz(&self) -> f64;
}

/// `β̃_{j+1}(ν) = λ (b + g tanh(2^{-θ(j+1)} ν_{j+1}))`, with `ν_1 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TanhNuBeta {
    pub lambda: f64,
    pub theta: f64,
    pub b: f64,
    #[serde(default)]
    pub g: f64,
}

impl NuBeta for TanhNuBeta {
    fn beta(&self, j: i32, nu: &[f64]) -> f64 {
        let k = j + 1;
        let nk = if k > 0 { 0.0 } else { nu[(-k) as usize] };
        self.lambda * (self.b + self.g * (nk * (-self.theta * k as f64).exp2()).tanh())
    }
    fn bound(&self) -> f64 {
        self.b.abs() + self.g.abs()
    }
    fn lipschitz(&self) -> f64 {
        (self.lambda * self.g).abs()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NuFixedPoint {
    /// `0, -1, ..., h_min`.
    pub scales: Vec<i32>,
    pub nu: Vec<f64>,
    pub iterations: usize,
    /// Largest ratio of successive weighted differences.
    pub contraction: f64,
    /// `2 L / (1 - 2^{-(1+θ)})`, an upper bound on the contraction factor.
    pub contraction_bound: f64,
    /// `max_k |ν_k| 2^{-θk}` and its series bound `2 C|λ| / (1 - 2^{-(1+θ)})`.
    pub weighted_norm: f64,
    pub envelope: f64,
    pub within_envelope: bool,
}

fn weighted_sup(theta: f64, x: &[f64]) -> f64 {
    // index i is scale -i, so 2^{-θk} = 2^{θi}
    x.iter().enumerate().map(|(i, v)| v.abs() * (theta * i as f64).exp2()).fold(0.0, f64::max)
}

/// `T(ν)_k = -Σ_{j=h_min}^{k} 2^{j-k+1} 2^{θj} β̃_{j+1}(ν)` for `h_min <= k <= 0`.
pub fn nu_map(model: &dyn NuBeta, theta: f64, h_min: i32, nu: &[f64]) -> Vec<f64> {
    let n = (-h_min) as usize + 1;
    // running sum s_k = Σ_{j=h_min}^{k} 2^{j-k+1} 2^{θj} β_j obeys s_k = s_{k-1}/2 + 2^{θk+1} β_k
    let mut out = vec![0.0; n];
    let mut s = 0.0;
    for k in h_min..=0 {
        s = 0.5 * s + 2.0 * (theta * k as f64).exp2() * model.beta(k, nu);
        out[(-k) as usize] = -s;
    }
    out
}

/// Banach iteration of [`nu_map`] from `ν ≡ 0` to the fixed point.
pub fn nu_fixed_point(model: &dyn NuBeta, theta: f64, h_min: i32, lambda: f64) -> Result<NuFixedPoint> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(LabError::param("theta", "must be positive"));
    }
    if h_min > 0 || h_min < -4096 {
        return Err(LabError::param("h_min", "must lie in [-4096, 0]"));
    }
    const MAX_ITER: usize = 500;
    let n = (-h_min) as usize + 1;
    let q = 1.0 / (1.0 - (-(1.0 + theta)).exp2());
    let mut nu = vec![0.0; n];
    let mut prev_diff = f64::NAN;
    let mut contraction: f64 = 0.0;
    let mut iterations = 0;
    loop {
        let next = nu_map(model, theta, h_min, &nu);
        let diff: Vec<f64> = next.iter().zip(&nu).map(|(a, b)| a - b).collect();
        let d = weighted_sup(theta, &diff);
        let scale = weighted_sup(theta, &next).max(f64::MIN_POSITIVE);
        nu = next;
        iterations += 1;
        // ratios of differences near roundoff carry no information
        if prev_diff.is_finite() && d > 1e-8 * scale {
            let r = d / prev_diff;
            contraction = contraction.max(r);
            if r >= 1.0 {
                return Err(LabError::NoContraction { iteration: iterations, ratio: r });
            }
        }
        if d <= 1e-15 * scale || d == 0.0 {
            break;
        }
        if iterations >= MAX_ITER {
            return Err(LabError::NonConvergent(format!("nu fixed point: {MAX_ITER} iterations, last step {d:.3e}")));
        }
        prev_diff = d;
    }
    let weighted_norm = weighted_sup(theta, &nu);
    let envelope = 2.0 * model.bound() * lambda.abs() * q;
    Ok(NuFixedPoint {
        scales: (h_min..=0).rev().collect(),
        nu,
        iterations,
        contraction,
        contraction_bound: 2.0 * model.lipschitz() * q,
        weighted_norm,
        envelope,
        within_envelope: weighted_norm <= envelope * (1.0 + ENVELOPE_SLACK),
    })
}
