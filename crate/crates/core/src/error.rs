use thiserror::Error;

/// Broad class of a failure, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("InvalidParameter: {name}: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("InvalidModel: {0}")]
    InvalidModel(String),

    #[error("WrongBoundary: {0}")]
    WrongBoundary(String),

    #[error("NoGap: mu = {mu} is not inside a bulk gap ({detail})")]
    NoGap { mu: f64, detail: String },

    #[error("AmbiguousBranch: overlap {overlap:.3e} below threshold between k1 = {k1:.6} and its neighbour")]
    AmbiguousBranch { k1: f64, overlap: f64 },

    #[error("FlatBand: |v_e| = {velocity:.3e} at k_F = {k_f:.6}")]
    FlatBand { k_f: f64, velocity: f64 },

    #[error("GapClosed: filled-band count changes at k = ({k1:.6}, {k2:.6})")]
    GapClosed { k1: f64, k2: f64 },

    #[error("DegenerateAtFermi: degenerate mode at energy {energy:.3e} from mu with eta = 0")]
    DegenerateAtFermi { energy: f64 },

    #[error("NonConvergent: {0}")]
    NonConvergent(String),

    #[error("AnomalyOutOfRange: |tau| = {tau} >= 1")]
    AnomalyOutOfRange { tau: f64 },

    #[error("PoleHit: denominator {denominator:.3e} vanishes at p = ({p0}, {p1})")]
    PoleHit { p0: f64, p1: f64, denominator: f64 },

    #[error("OriginSingularity: propagator evaluated at dx = 0")]
    OriginSingularity,

    #[error("TooLarge: {what} = {value} exceeds cap {cap}")]
    TooLarge { what: String, value: usize, cap: usize },

    #[error("BetaBoundViolated: {which} at scale {scale}: |beta| = {value:.3e} > envelope {bound:.3e}")]
    BetaBoundViolated { which: String, scale: i32, value: f64, bound: f64 },

    #[error("NoContraction: successive differences ratio {ratio:.3e} at iteration {iteration}")]
    NoContraction { iteration: usize, ratio: f64 },

    #[error("EigenFailure: eigensolver failed at k1 = {k1}")]
    EigenFailure { k1: f64 },
}

impl LabError {
    pub fn class(&self) -> ErrorClass {
        use LabError::*;
        match self {
            InvalidParameter { .. } | InvalidModel(_) | WrongBoundary(_) | TooLarge { .. } => {
                ErrorClass::Validation
            }
            _ => ErrorClass::Numerical,
        }
    }

    /// The bare error name, e.g. `"NoGap"`.
    pub fn name(&self) -> &'static str {
        use LabError::*;
        match self {
            InvalidParameter { .. } => "InvalidParameter",
            InvalidModel(_) => "InvalidModel",
            WrongBoundary(_) => "WrongBoundary",
            NoGap { .. } => "NoGap",
            AmbiguousBranch { .. } => "AmbiguousBranch",
            FlatBand { .. } => "FlatBand",
            GapClosed { .. } => "GapClosed",
            DegenerateAtFermi { .. } => "DegenerateAtFermi",
            NonConvergent(_) => "NonConvergent",
            AnomalyOutOfRange { .. } => "AnomalyOutOfRange",
            PoleHit { .. } => "PoleHit",
            OriginSingularity => "OriginSingularity",
            TooLarge { .. } => "TooLarge",
            BetaBoundViolated { .. } => "BetaBoundViolated",
            NoContraction { .. } => "NoContraction",
            EigenFailure { .. } => "EigenFailure",
        }
    }

    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        LabError::InvalidParameter { name: name.to_string(), reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
