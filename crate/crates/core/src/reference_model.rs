//! Closed forms of the chiral Luttinger reference model: anomaly,
//! renormalized velocities, density correlators, transport coefficients and
//! the spin-charge separated propagator, plus the first-order matching
//! coefficient `A` computed from a lattice edge state.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::lattice::LatticeModel;
use crate::linalg::{c, C64, I};
use crate::response::Channel;
use crate::spectral::{EdgeState, Side};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefModelParams {
    pub lambda_ref: f64,
    pub v_ref: f64,
    #[serde(default = "one")]
    pub z_ref: f64,
    pub omega: i32,
}

fn one() -> f64 {
    1.0
}

impl RefModelParams {
    /// `Z = 1`.
    pub fn new(lambda_ref: f64, v_ref: f64, omega: i32) -> Result<Self> {
        let p = Self { lambda_ref, v_ref, z_ref: 1.0, omega };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_ref > 0.0 && self.v_ref.is_finite()) {
            return Err(LabError::param("v_ref", format!("must be positive, got {}", self.v_ref)));
        }
        if !(self.z_ref > 0.0 && self.z_ref.is_finite()) {
            return Err(LabError::param("z_ref", format!("must be positive, got {}", self.z_ref)));
        }
        if self.omega != 1 && self.omega != -1 {
            return Err(LabError::param("omega", format!("must be +1 or -1, got {}", self.omega)));
        }
        if !self.lambda_ref.is_finite() {
            return Err(LabError::param("lambda_ref", "must be finite"));
        }
        anomaly_and_velocities(self.lambda_ref, self.v_ref).map(|_| ())
    }

    pub fn tau(&self) -> f64 {
        self.lambda_ref / (2.0 * PI * self.v_ref)
    }
    pub fn v_s(&self) -> f64 {
        self.v_ref
    }
    pub fn v_c(&self) -> f64 {
        let t = self.tau();
        self.v_ref * (1.0 + t) / (1.0 - t)
    }
    pub fn velocity(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Charge => self.v_c(),
            Channel::Spin => self.v_s(),
        }
    }
}

/// `(τ, v_s, v_c)` with `τ = λ_ref / (2π v_ref)`.
pub fn anomaly_and_velocities(lambda_ref: f64, v_ref: f64) -> Result<(f64, f64, f64)> {
    if !(v_ref > 0.0) {
        return Err(LabError::param("v_ref", format!("must be positive, got {v_ref}")));
    }
    let tau = lambda_ref / (2.0 * PI * v_ref);
    if !(tau.abs() < 1.0) {
        return Err(LabError::AnomalyOutOfRange { tau });
    }
    Ok((tau, v_ref, v_ref * (1.0 + tau) / (1.0 - tau)))
}

fn chiral_symbol(p: (f64, f64), omega: f64, v: f64) -> C64 {
    -I * p.0 + c(omega * v * p.1, 0.0)
}

fn checked(den: C64, p: (f64, f64)) -> Result<C64> {
    if den.norm() == 0.0 || !den.norm().is_finite() {
        return Err(LabError::PoleHit { p0: p.0, p1: p.1, denominator: den.norm() });
    }
    Ok(den)
}

/// Density-density correlator `<n_p ; n_{-p}>` of the reference model.
///
/// `w_hat` is the Fourier transform of the reference interaction; `None`
/// means `ŵ ≡ ŵ(0) = 1`.
pub fn density_correlator(
    params: &RefModelParams,
    p: (f64, f64),
    channel: Channel,
    w_hat: Option<&dyn Fn(f64, f64) -> f64>,
) -> Result<C64> {
    params.validate()?;
    if p == (0.0, 0.0) {
        return Err(LabError::PoleHit { p0: 0.0, p1: 0.0, denominator: 0.0 });
    }
    let v = params.v_ref;
    let om = params.omega as f64;
    let pref = -1.0 / (2.0 * PI * v * params.z_ref * params.z_ref);
    let d_minus = chiral_symbol(p, -om, v);
    match channel {
        Channel::Spin => {
            let den = checked(chiral_symbol(p, om, v), p)?;
            Ok(pref * d_minus / den)
        }
        Channel::Charge => {
            let tw = params.tau() * w_hat.map_or(1.0, |f| f(p.0, p.1));
            if 1.0 - tw == 0.0 {
                return Err(LabError::PoleHit { p0: p.0, p1: p.1, denominator: 0.0 });
            }
            let v_tilde = v * (1.0 + tw) / (1.0 - tw);
            let den = checked(chiral_symbol(p, om, v_tilde) * (1.0 - tw), p)?;
            Ok(pref * d_minus / den)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelTransport {
    pub velocity: f64,
    pub kappa: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "Gtilde")]
    pub g_tilde: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefTransport {
    pub charge: ChannelTransport,
    pub spin: ChannelTransport,
}

/// `κ = 1/(π v)`, `D = v/π`, `G = G̃ = -ω/π` per channel.
pub fn transport_closed_form(params: &RefModelParams) -> Result<RefTransport> {
    params.validate()?;
    let one = |v: f64| ChannelTransport {
        velocity: v,
        kappa: 1.0 / (PI * v),
        d: v / PI,
        g: -(params.omega as f64) / PI,
        g_tilde: -(params.omega as f64) / PI,
    };
    Ok(RefTransport { charge: one(params.v_c()), spin: one(params.v_s()) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstOrderMatch {
    #[serde(rename = "A")]
    pub a: f64,
    pub lambda: f64,
    pub lambda_ref: f64,
    /// `|v_e|`, the charge velocity at this order.
    pub v_c: f64,
    pub v_s: f64,
}

/// `A = Σ ŵ_{r r'}(0; x2, y2) |ξ_{x2,r}|² |ξ_{y2,r'}|²`, summing the
/// interaction blocks of `m` over `z1`.
pub fn matching_coefficient(m: &LatticeModel, xi: &[C64]) -> Result<f64> {
    if xi.len() != m.full_dim() {
        return Err(LabError::param("wavefunction", format!("length {} != {}", xi.len(), m.full_dim())));
    }
    let norm = xi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(LabError::param("wavefunction", format!("not normalized: |xi| = {norm}")));
    }
    let dof = m.dof();
    let rho = |x2: usize, r: usize| xi[m.index(x2, r)].norm_sqr();
    let mut a = 0.0;
    for (&(_, x2, y2), blk) in m.interaction() {
        for r in 0..dof {
            for rp in 0..dof {
                a += blk[r * dof + rp] * rho(x2, r) * rho(y2, rp);
            }
        }
    }
    Ok(a)
}

/// Coefficient `A` from a lower-side edge state and the first-order
/// predictions `λ_ref = A λ`, `v_s = |v_e| - (A/π) λ`.
pub fn first_order_match(m: &LatticeModel, edge: &EdgeState, lambda: f64) -> Result<FirstOrderMatch> {
    if edge.side != Side::Lower {
        return Err(LabError::param("edge", "state must be localized at the x2 = 0 side"));
    }
    let a = matching_coefficient(m, &edge.wavefunction)?;
    let v = edge.velocity_refined.abs();
    Ok(FirstOrderMatch { a, lambda, lambda_ref: a * lambda, v_c: v, v_s: v - a * lambda / PI })
}

/// `(1/Z) [(v_s dx0 + iω dx1)(v_c dx0 + iω dx1)]^{-1/2}`, principal root of
/// each factor. The product of the two roots is continuous away from the
/// origin and positive on the `dx1 = 0, dx0 > 0` ray.
pub fn spin_charge_propagator(params: &RefModelParams, dx: (f64, f64)) -> Result<C64> {
    params.validate()?;
    if dx == (0.0, 0.0) {
        return Err(LabError::OriginSingularity);
    }
    let om = params.omega as f64;
    // +0.0 keeps both factors on the same side of the cut when dx1 = 0
    let im = om * dx.1 + 0.0;
    let a = c(params.v_s() * dx.0, im);
    let b = c(params.v_c() * dx.0, im);
    Ok(1.0 / (params.z_ref * a.sqrt() * b.sqrt()))
}
