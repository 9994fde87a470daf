//! Run configuration. Every section rejects unknown keys; missing keys take
//! the flagship defaults.

use std::f64::consts::PI;

use hall_edge_core::lattice::{
    build_haldane, haldane_nn_interaction, haldane_records, Boundary, HaldaneParams, HopRecord, InteractionRecord,
    LatticeModel,
};
use hall_edge_core::reference_model::RefModelParams;
use hall_edge_core::response::Channel;
use hall_edge_core::rg_audit::{Envelope, FlowState, PowerLawBeta, TanhNuBeta};
use hall_edge_core::{LabError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Bands,
    Edge,
    Chern,
    Correlators,
    Transport,
    Ward,
    Refmodel,
    Rgflow,
    Rgtrees,
    EdCheck,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Bands => "bands",
            Task::Edge => "edge",
            Task::Chern => "chern",
            Task::Correlators => "correlators",
            Task::Transport => "transport",
            Task::Ward => "ward",
            Task::Refmodel => "refmodel",
            Task::Rgflow => "rgflow",
            Task::Rgtrees => "rgtrees",
            Task::EdCheck => "ed-check",
        }
    }

    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown task `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Haldane,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NnInteraction {
    pub nn: f64,
    pub onsite: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub model: ModelKind,
    pub t1: f64,
    pub t2: f64,
    pub phi: f64,
    #[serde(rename = "W")]
    pub w: f64,
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: usize,
    pub spinful: bool,
    pub boundary: Boundary,
    /// States per unit cell and spin block of a custom model.
    pub block_dof: usize,
    pub hoppings: Vec<HopRecord>,
    pub interaction: Vec<InteractionRecord>,
    pub nn_interaction: Option<NnInteraction>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Haldane,
            t1: 1.0,
            t2: 0.5,
            phi: PI / 2.0,
            w: 0.0,
            mu: 0.0,
            l: 40,
            spinful: true,
            boundary: Boundary::Cylinder,
            block_dof: 2,
            hoppings: Vec::new(),
            interaction: Vec::new(),
            nn_interaction: None,
        }
    }
}

impl ModelConfig {
    pub fn haldane_params(&self) -> HaldaneParams {
        HaldaneParams::new(self.t1, self.t2, self.phi, self.w)
    }

    fn records(&self) -> Result<Vec<HopRecord>> {
        match self.model {
            ModelKind::Haldane => {
                if !self.hoppings.is_empty() {
                    return Err(LabError::InvalidParameter {
                        name: "hoppings".into(),
                        reason: "only allowed with model = \"custom\"".into(),
                    });
                }
                Ok(haldane_records(&self.haldane_params()))
            }
            ModelKind::Custom => {
                if self.hoppings.is_empty() {
                    return Err(LabError::InvalidParameter {
                        name: "hoppings".into(),
                        reason: "a custom model needs hopping records".into(),
                    });
                }
                Ok(self.hoppings.clone())
            }
        }
    }

    fn interaction_records(&self) -> Vec<InteractionRecord> {
        let mut r = self.interaction.clone();
        if let Some(nn) = self.nn_interaction {
            r.extend(haldane_nn_interaction(nn.nn, nn.onsite));
        }
        r
    }

    /// The model on a given boundary and height.
    pub fn build_with(&self, boundary: Boundary, l: usize) -> Result<LatticeModel> {
        let base = match self.model {
            ModelKind::Haldane if l >= 4 => {
                self.records()?;
                build_haldane(self.haldane_params(), l, self.mu, self.spinful, boundary)?
            }
            ModelKind::Haldane => {
                // narrow ED strips; parameters are still validated
                build_haldane(self.haldane_params(), 4, self.mu, self.spinful, boundary)?;
                LatticeModel::from_records(2, l, self.mu, boundary, self.spinful, &self.records()?, &[])?
            }
            ModelKind::Custom => {
                LatticeModel::from_records(self.block_dof, l, self.mu, boundary, self.spinful, &self.records()?, &[])?
            }
        };
        let inter = self.interaction_records();
        if inter.is_empty() {
            Ok(base)
        } else {
            base.with_interaction(&inter)
        }
    }

    pub fn build(&self) -> Result<LatticeModel> {
        self.build_with(self.boundary, self.l)
    }

    /// Same records on a torus, for bulk quantities.
    pub fn build_torus(&self) -> Result<LatticeModel> {
        self.build_with(Boundary::Torus, self.l.max(4))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandsParams {
    /// k1 points; 0 means `L`.
    pub n_k: usize,
    /// Side of the Bloch grid for the closed-form band check (Haldane only);
    /// 0 skips it.
    pub closed_form_grid: usize,
}

impl Default for BandsParams {
    fn default() -> Self {
        Self { n_k: 0, closed_form_grid: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EdgeParams {
    /// k1 points; 0 means `L`.
    pub n_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    /// `W` runs over `t2 sin(φ) * (start + i step)` up to `stop`.
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChernParams {
    pub grid: usize,
    pub sweep: Option<SweepParams>,
}

impl Default for ChernParams {
    fn default() -> Self {
        Self { grid: 30, sweep: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelatorParams {
    pub beta: f64,
    /// Snapped to the nearest bosonic Matsubara frequency.
    pub eta: f64,
    /// Snapped to the `n_k` ring.
    pub p1: f64,
    pub n_k: usize,
    pub mu_idx: usize,
    pub nu_idx: usize,
    pub channel: Channel,
    /// Row sets; empty means one set with every row.
    pub x2_sets: Vec<Vec<usize>>,
    pub y2_sets: Vec<Vec<usize>>,
}

impl Default for CorrelatorParams {
    fn default() -> Self {
        Self {
            beta: 50.0,
            eta: 0.2,
            p1: 0.1,
            n_k: 512,
            mu_idx: 0,
            nu_idx: 0,
            channel: Channel::Charge,
            x2_sets: Vec::new(),
            y2_sets: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportParams {
    pub beta: f64,
    pub eps: Vec<f64>,
    pub a: usize,
    pub a_prime: usize,
    pub n_k: usize,
    pub channel: Channel,
    /// Bloch grid for the bulk Hall conductivity.
    pub chern_grid: usize,
}

impl Default for TransportParams {
    fn default() -> Self {
        Self {
            beta: 200.0,
            eps: vec![0.2, 0.1, 0.05],
            a: 16,
            a_prime: 8,
            n_k: 4096,
            channel: Channel::Charge,
            chern_grid: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WardParams {
    pub beta: f64,
    pub n_k: usize,
    /// Random `(η_β, p1)` points drawn from the seed.
    pub points: usize,
    /// Largest Matsubara index and ring index drawn.
    pub max_index: usize,
    pub channel: Channel,
}

impl Default for WardParams {
    fn default() -> Self {
        Self { beta: 20.0, n_k: 64, points: 20, max_index: 8, channel: Channel::Charge }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefmodelTaskParams {
    pub lambda_ref: f64,
    pub v_ref: f64,
    pub z_ref: f64,
    pub omega: i32,
    /// Random admissible `(λ_ref, v_ref)` for the closed-form identities.
    pub random_checks: usize,
}

impl Default for RefmodelTaskParams {
    fn default() -> Self {
        Self { lambda_ref: 0.5, v_ref: 1.0, z_ref: 1.0, omega: 1, random_checks: 100 }
    }
}

impl RefmodelTaskParams {
    pub fn params(&self) -> Result<RefModelParams> {
        let p = RefModelParams { lambda_ref: self.lambda_ref, v_ref: self.v_ref, z_ref: self.z_ref, omega: self.omega };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RgflowParams {
    pub beta_model: PowerLawBeta,
    pub initial: FlowState,
    pub h_min: i32,
    pub nu_model: TanhNuBeta,
}

impl Default for RgflowParams {
    fn default() -> Self {
        let envelope = Envelope { c: 1.0, theta: 0.5, lambda: 0.1 };
        Self {
            beta_model: PowerLawBeta { envelope, a_z: 1.0, a_v: 1.0, a_nu: 1.0, a_lambda: 1.0 },
            initial: FlowState { z: 1.0, v: 1.0, nu: 0.0, lambda: 0.1 },
            h_min: -40,
            nu_model: TanhNuBeta { lambda: 0.1, theta: 0.5, b: 1.0, g: 1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RgtreesParams {
    pub n_endpoints: usize,
    pub h_root: i32,
    pub max_fields: u32,
    /// Labelled trees written to the CSV dump (the stream is cut there).
    pub dump: usize,
}

impl Default for RgtreesParams {
    fn default() -> Self {
        Self { n_endpoints: 3, h_root: -4, max_fields: 10, dump: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdCheckParams {
    pub lambda: f64,
    pub beta: f64,
    /// `"L1xR"`: `L1` sites along the edge, `R` active cylinder rows.
    pub geometry: String,
    /// Matsubara indices of the frequencies checked.
    pub matsubara: Vec<u32>,
    /// Interaction used when the model block defines none.
    pub default_interaction: NnInteraction,
    /// Overrides `model.spinful`; the spinful 2x3 strip exceeds the mode cap.
    pub spinful: bool,
}

impl Default for EdCheckParams {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            beta: 2.0,
            geometry: "2x3".into(),
            matsubara: vec![0, 1, 2],
            default_interaction: NnInteraction { nn: 1.0, onsite: 0.5 },
            spinful: false,
        }
    }
}

impl EdCheckParams {
    pub fn parse_geometry(&self) -> Result<(usize, usize)> {
        let bad = || LabError::InvalidParameter {
            name: "geometry".into(),
            reason: format!("expected \"L1xR\", got {:?}", self.geometry),
        };
        let (a, b) = self.geometry.split_once('x').ok_or_else(bad)?;
        let l1 = a.trim().parse().map_err(|_| bad())?;
        let r = b.trim().parse().map_err(|_| bad())?;
        Ok((l1, r))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bands: Option<BandsParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<EdgeParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chern: Option<ChernParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlators: Option<CorrelatorParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport: Option<TransportParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ward: Option<WardParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refmodel: Option<RefmodelTaskParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgflow: Option<RgflowParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgtrees: Option<RgtreesParams>,
    #[serde(default, rename = "ed-check", skip_serializing_if = "Option::is_none")]
    pub ed_check: Option<EdCheckParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn new(task: Task) -> Self {
        serde_json::from_value(serde_json::json!({ "task": task.name() })).expect("minimal config")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    /// Fills the section of the selected task with defaults so that the
    /// hashed configuration spells out every parameter used.
    pub fn normalized(mut self) -> Self {
        match self.task {
            Task::Bands => {
                self.bands.get_or_insert_with(Default::default);
            }
            Task::Edge => {
                self.edge.get_or_insert_with(Default::default);
            }
            Task::Chern => {
                self.chern.get_or_insert_with(Default::default);
            }
            Task::Correlators => {
                self.correlators.get_or_insert_with(Default::default);
            }
            Task::Transport => {
                self.transport.get_or_insert_with(Default::default);
            }
            Task::Ward => {
                self.ward.get_or_insert_with(Default::default);
            }
            Task::Refmodel => {
                self.refmodel.get_or_insert_with(Default::default);
            }
            Task::Rgflow => {
                self.rgflow.get_or_insert_with(Default::default);
            }
            Task::Rgtrees => {
                self.rgtrees.get_or_insert_with(Default::default);
            }
            Task::EdCheck => {
                self.ed_check.get_or_insert_with(Default::default);
            }
        }
        self
    }

    /// Physics content only: output location and worker count are left out.
    pub fn hashed_view(&self) -> Self {
        Self { out: None, workers: None, ..self.clone() }
    }
}
