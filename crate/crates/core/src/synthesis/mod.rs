//! Protocol synthesis: from an agent model, a connected graph and a cost
//! tolerance `gamma`, compute local gains `F = -c B^T P`, `G = Q C1^T` and a
//! certificate that the network synchronizes with H2 cost below `gamma`.

mod cases;
mod design;
mod model;

use thiserror::Error;

use crate::graphs::GraphError;
use crate::riccati::RiccatiError;

pub use cases::{
    mode_coefficient, regime_threshold, CaseRegistry, CouplingCase, CouplingInterval, LargeCoupling, SmallCoupling,
};
pub use design::{
    admissible_c_range, bound_s, sweep, synthesize, synthesize_with, CouplingChoice, Design, DesignCertificate,
    DesignParams, ProtocolGains, ResolvedParams, SweepGrid, SweepOutcome, SweepPoint, AUTO_CASE,
};
pub use model::{AgentModel, Dimensions, NormalizationReport};

#[derive(Debug, Error, Clone)]
pub enum SynthesisError {
    #[error("invalid agent model: {0}")]
    InvalidModel(String),
    #[error("communication graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("normalization conditions fail: {0}")]
    NormalizationFailed(NormalizationReport),
    #[error("invalid Laplacian spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("invalid design parameters: {0}")]
    InvalidParams(String),
    #[error("design infeasible: achieved bound {bound:.6} is not below gamma = {gamma}")]
    Infeasible {
        bound: f64,
        gamma: f64,
        certificate: Box<DesignCertificate>,
    },
    #[error("designed gains fail a stability certificate (modes {failed_modes:?}, observer ok: {observer_ok})")]
    NotSynchronizing {
        failed_modes: Vec<f64>,
        observer_ok: bool,
        certificate: Box<DesignCertificate>,
    },
    #[error("modal Riccati inequality fails at lambda = {lambda} (largest eigenvalue {max_eig:.3e})")]
    InequalityViolated { lambda: f64, max_eig: f64 },
    #[error("no grid point is feasible (smallest achieved bound {best_bound:?})")]
    AllInfeasible { best_bound: Option<f64> },
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}
