//! Closed-loop assembly and exact H2 cost of the controlled network.
//!
//! The network cost is evaluated mode by mode on the 2n-dimensional blocks
//! obtained from the Laplacian eigen-decomposition. The full closed loop is
//! never Hurwitz (the consensus direction is marginal), so it is only used by
//! the time-domain quadrature cross-check, which projects that direction out.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphs::{GraphError, WeightedGraph};
use crate::matkit::{expm, inverse, kron, Mat, MatError};
use crate::riccati::{
    is_hurwitz, observer_riccati, solve_care, solve_lyapunov, CareProblem, LyapunovProblem, LyapunovSide, NoiseForm,
    RiccatiError,
};
use crate::settings::NumericSettings;
use crate::synthesis::{bound_s, AgentModel, ProtocolGains, SynthesisError};

#[derive(Debug, Error, Clone)]
pub enum H2Error {
    #[error("modes are indexed by positive Laplacian eigenvalues, got {0}")]
    InvalidMode(f64),
    #[error("modal closed loop at lambda = {lambda} is not Hurwitz")]
    Unstable { lambda: f64 },
    #[error("network does not synchronize (unstable modes {failed_modes:?}, observer ok: {observer_ok})")]
    NotSynchronizing { failed_modes: Vec<f64>, observer_ok: bool },
    #[error("bound {bound:.6} is not below gamma = {gamma}")]
    Infeasible { bound: f64, gamma: f64 },
    #[error("designed loop is not internally stable")]
    NotStabilizing,
    #[error("invalid quadrature grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Model(#[from] SynthesisError),
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error(transparent)]
    Matrix(#[from] MatError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Full closed loop on the stacked state `(x_1..x_N, w_1..w_N)`:
///
/// ```text
/// Ae = [[I (x) A,     I (x) BF              ],
///       [L (x) G C1,  I (x) (A - G C1) + L (x) BF]]
/// Ee = [I (x) E; L (x) G D1]
/// Ce = [W^1/2 R^T (x) C2, W^1/2 R^T (x) D2 F]
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoopNetwork {
    pub ae: Mat,
    pub ee: Mat,
    pub ce: Mat,
    pub nodes: usize,
    pub agent_order: usize,
}

impl ClosedLoopNetwork {
    pub fn new(model: &AgentModel, graph: &WeightedGraph, gains: &ProtocolGains) -> Result<Self, H2Error> {
        gains.check_dims(model)?;
        let nodes = graph.node_count();
        let eye = Mat::identity(nodes);
        let l = graph.laplacian();
        let diff = graph.weighted_difference_operator();
        let bf = &model.b * &gains.f;
        let gc1 = &gains.g * &model.c1;
        let ae = Mat::from_blocks(&[
            &[&kron(&eye, &model.a), &kron(&eye, &bf)],
            &[&kron(&l, &gc1), &(&kron(&eye, &(&model.a - &gc1)) + &kron(&l, &bf))],
        ]);
        let ee = Mat::vstack(&[&kron(&eye, &model.e), &kron(&l, &(&gains.g * &model.d1))]);
        let ce = Mat::hstack(&[&kron(&diff, &model.c2), &kron(&diff, &(&model.d2 * &gains.f))]);
        Ok(Self {
            ae,
            ee,
            ce,
            nodes,
            agent_order: model.dims().n,
        })
    }

    /// Orthogonal projector onto the disagreement subspace of both the agent
    /// and protocol state blocks. It commutes with `Ae` and `Ce * Pi = Ce`.
    pub fn disagreement_projector(&self) -> Mat {
        let n = self.nodes;
        let centering = &Mat::identity(n) - &Mat::from_vec(n, n, vec![1.0 / n as f64; n * n]).expect("square");
        kron(&Mat::identity(2), &kron(&centering, &Mat::identity(self.agent_order)))
    }
}

/// Closed loop of mode `lambda`:
///
/// ```text
/// Abar = [[A, l BF], [G C1, A - G C1 + l BF]]
/// Ebar = [E; G D1]
/// Cbar = [sqrt(l) C2, l sqrt(l) D2 F]
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct ModalBlock {
    pub lambda: f64,
    pub abar: Mat,
    pub ebar: Mat,
    pub cbar: Mat,
}

impl ModalBlock {
    pub fn new(model: &AgentModel, lambda: f64, gains: &ProtocolGains) -> Result<Self, H2Error> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(H2Error::InvalidMode(lambda));
        }
        gains.check_dims(model)?;
        let bf = &model.b * &gains.f;
        let gc1 = &gains.g * &model.c1;
        let abar = Mat::from_blocks(&[
            &[&model.a, &bf.scale(lambda)],
            &[&gc1, &(&(&model.a - &gc1) + &bf.scale(lambda))],
        ]);
        let ebar = Mat::vstack(&[&model.e, &(&gains.g * &model.d1)]);
        let sl = lambda.sqrt();
        let cbar = Mat::hstack(&[&model.c2.scale(sl), &(&model.d2 * &gains.f).scale(lambda * sl)]);
        Ok(Self {
            lambda,
            abar,
            ebar,
            cbar,
        })
    }

    pub fn is_hurwitz(&self, tol: &NumericSettings) -> bool {
        is_hurwitz(&self.abar, tol)
    }

    /// Squared H2 norm `tr(Cbar X Cbar^T)` with `Abar X + X Abar^T + Ebar Ebar^T = 0`.
    pub fn cost(&self, tol: &NumericSettings) -> Result<f64, H2Error> {
        if !self.is_hurwitz(tol) {
            return Err(H2Error::Unstable { lambda: self.lambda });
        }
        let x = solve_lyapunov(
            &LyapunovProblem {
                a: self.abar.clone(),
                q: &self.ebar * &self.ebar.transpose(),
                side: LyapunovSide::CoefficientOnLeft,
            },
            tol,
        )?;
        Ok((&(&self.cbar * &x) * &self.cbar.transpose()).trace())
    }
}

pub fn modal_blocks(model: &AgentModel, lambda: f64, gains: &ProtocolGains) -> Result<ModalBlock, H2Error> {
    ModalBlock::new(model, lambda, gains)
}

pub fn modal_cost(
    model: &AgentModel,
    lambda: f64,
    gains: &ProtocolGains,
    tol: &NumericSettings,
) -> Result<f64, H2Error> {
    ModalBlock::new(model, lambda, gains)?.cost(tol)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeCheck {
    pub lambda: f64,
    /// `A + lambda B F` is Hurwitz.
    pub hurwitz: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    pub modes: Vec<ModeCheck>,
    /// `A - G C1` is Hurwitz.
    pub observer_hurwitz: bool,
    pub synchronizing: bool,
}

impl SyncReport {
    pub fn failed_modes(&self) -> Vec<f64> {
        self.modes.iter().filter(|m| !m.hurwitz).map(|m| m.lambda).collect()
    }
}

/// Checks `A + l_i B F` (every nonzero Laplacian eigenvalue) and `A - G C1`.
pub fn verify_synchronizing(
    model: &AgentModel,
    graph: &WeightedGraph,
    gains: &ProtocolGains,
    tol: &NumericSettings,
) -> Result<SyncReport, H2Error> {
    gains.check_dims(model)?;
    let spectrum = graph.spectrum(tol)?;
    let bf = &model.b * &gains.f;
    let mut modes: Vec<ModeCheck> = spectrum
        .nonzero_modes()
        .iter()
        .map(|&lambda| ModeCheck {
            lambda,
            hurwitz: is_hurwitz(&(&model.a + &bf.scale(lambda)), tol),
        })
        .collect();
    // A disconnected graph has extra zero eigenvalues, whose modes never
    // synchronize.
    if !spectrum.connected() {
        for (k, m) in modes.iter_mut().enumerate() {
            if spectrum.lambda[k + 1] <= 0.0 {
                m.hurwitz = false;
            }
        }
    }
    let observer_hurwitz = is_hurwitz(&(&model.a - &(&gains.g * &model.c1)), tol);
    let synchronizing = observer_hurwitz && modes.iter().all(|m| m.hurwitz);
    Ok(SyncReport {
        modes,
        observer_hurwitz,
        synchronizing,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeCost {
    pub lambda: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// One entry per nonzero eigenvalue, ascending, repeated eigenvalues kept.
    pub per_mode: Vec<ModeCost>,
    pub total: f64,
    pub quadrature_estimate: Option<f64>,
    pub gamma: Option<f64>,
    pub suboptimal: Option<bool>,
}

pub fn network_cost(
    model: &AgentModel,
    graph: &WeightedGraph,
    gains: &ProtocolGains,
    gamma: Option<f64>,
    tol: &NumericSettings,
) -> Result<CostReport, H2Error> {
    let sync = verify_synchronizing(model, graph, gains, tol)?;
    if !sync.synchronizing {
        return Err(H2Error::NotSynchronizing {
            failed_modes: sync.failed_modes(),
            observer_ok: sync.observer_hurwitz,
        });
    }
    let mut per_mode = Vec::with_capacity(sync.modes.len());
    for m in &sync.modes {
        per_mode.push(ModeCost {
            lambda: m.lambda,
            cost: modal_cost(model, m.lambda, gains, tol)?,
        });
    }
    let total = per_mode.iter().map(|m| m.cost).sum();
    Ok(CostReport {
        per_mode,
        total,
        quadrature_estimate: None,
        gamma,
        suboptimal: gamma.map(|g| total < g),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureEstimate {
    pub value: f64,
    /// Estimate with the step halved.
    pub refined: f64,
    pub relative_change: f64,
}

/// Composite Simpson estimate of `int_0^T ||Ce e^{Ae t} Ee||_F^2 dt` on the
/// full network. `dt` is shrunk if needed so that `T / dt` is an even integer.
pub fn impulse_cost_quadrature(
    model: &AgentModel,
    graph: &WeightedGraph,
    gains: &ProtocolGains,
    horizon: f64,
    dt: f64,
    tol: &NumericSettings,
) -> Result<f64, H2Error> {
    let sync = verify_synchronizing(model, graph, gains, tol)?;
    if !sync.synchronizing {
        return Err(H2Error::NotSynchronizing {
            failed_modes: sync.failed_modes(),
            observer_ok: sync.observer_hurwitz,
        });
    }
    let net = ClosedLoopNetwork::new(model, graph, gains)?;
    simpson_impulse_energy(&net, horizon, dt, tol)
}

/// [`impulse_cost_quadrature`] at `dt` and `dt / 2`.
pub fn impulse_cost_quadrature_checked(
    model: &AgentModel,
    graph: &WeightedGraph,
    gains: &ProtocolGains,
    horizon: f64,
    dt: f64,
    tol: &NumericSettings,
) -> Result<QuadratureEstimate, H2Error> {
    let value = impulse_cost_quadrature(model, graph, gains, horizon, dt, tol)?;
    let net = ClosedLoopNetwork::new(model, graph, gains)?;
    let refined = simpson_impulse_energy(&net, horizon, dt / 2.0, tol)?;
    Ok(QuadratureEstimate {
        value,
        refined,
        relative_change: (refined - value).abs() / refined.abs().max(f64::MIN_POSITIVE),
    })
}

fn simpson_impulse_energy(
    net: &ClosedLoopNetwork,
    horizon: f64,
    dt: f64,
    tol: &NumericSettings,
) -> Result<f64, H2Error> {
    if !(horizon > 0.0 && horizon.is_finite() && dt > 0.0 && dt <= horizon) {
        return Err(H2Error::InvalidGrid(format!(
            "need 0 < dt <= T, got T = {horizon}, dt = {dt}"
        )));
    }
    let mut steps = (horizon / dt).ceil() as usize;
    steps += steps % 2;
    let h = horizon / steps as f64;
    let proj = net.disagreement_projector();
    let step = &proj * &expm(&net.ae, h, tol)?;
    let mut phi = &proj * &net.ee;
    let energy = |phi: &Mat| {
        let y = &net.ce * phi;
        y.as_slice().iter().map(|v| v * v).sum::<f64>()
    };
    let mut acc = energy(&phi);
    for k in 1..=steps {
        phi = &step * &phi;
        let f = energy(&phi);
        acc += if k == steps {
            f
        } else if k % 2 == 1 {
            4.0 * f
        } else {
            2.0 * f
        };
    }
    Ok(acc * h / 3.0)
}

/// Output-feedback design for a single plant, with its certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleLoopDesign {
    pub gains: ProtocolGains,
    #[serde(rename = "P")]
    pub p: Mat,
    #[serde(rename = "Q")]
    pub q: Mat,
    /// `tr(C1 Q P Q C1^T) + tr(C2 Q C2^T)`.
    pub bound: f64,
    /// Exact squared H2 norm of the 2n-dimensional loop.
    pub cost: f64,
}

/// Suboptimal H2 controller `w' = A w + B u + G (y - C1 w)`, `u = F w` for the
/// plant itself, with `F = -(D2^T D2)^{-1} B^T P` and `G = Q C1^T`.
pub fn single_loop_design(
    model: &AgentModel,
    gamma: f64,
    eps: f64,
    sigma: f64,
    noise_form: NoiseForm,
    tol: &NumericSettings,
) -> Result<SingleLoopDesign, H2Error> {
    for (name, v) in [("gamma", gamma), ("eps", eps), ("sigma", sigma)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(SynthesisError::InvalidParams(format!("{name} must be positive, got {v}")).into());
        }
    }
    let rw = &model.d2.transpose() * &model.d2;
    let p = solve_care(
        &CareProblem {
            a: model.a.clone(),
            b: model.b.clone(),
            rw: rw.clone(),
            q: &model.c2.transpose() * &model.c2,
            perturbation: sigma,
        },
        tol,
    )?
    .p;
    let q = observer_riccati(&model.a, &model.c1, &model.e, eps, noise_form, tol)?.p;
    let bound = bound_s(&p, &q, 1.0, &model.c1, &model.c2);
    if !(bound < gamma) {
        return Err(H2Error::Infeasible { bound, gamma });
    }
    let gains = ProtocolGains {
        f: (&(&inverse(&rw, tol)? * &model.b.transpose()) * &p).scale(-1.0),
        g: &q * &model.c1.transpose(),
    };
    let cost = match ModalBlock::new(model, 1.0, &gains)?.cost(tol) {
        Ok(c) => c,
        Err(H2Error::Unstable { .. }) => return Err(H2Error::NotStabilizing),
        Err(e) => return Err(e),
    };
    Ok(SingleLoopDesign {
        gains,
        p,
        q,
        bound,
        cost,
    })
}
