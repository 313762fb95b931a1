use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::graphs::{GraphSpectrum, WeightedGraph};
use crate::matkit::{sym_max_eig, Mat};
use crate::riccati::{is_hurwitz, observer_riccati, solve_care, CareProblem, NoiseForm};
use crate::settings::NumericSettings;

use super::cases::{CaseRegistry, CouplingInterval};
use super::model::AgentModel;
use super::SynthesisError;

/// Case selector meaning "infer the regime from `c`".
pub const AUTO_CASE: &str = "auto";

/// Coupling gain: a number, or `"auto"` for the left end of the large-coupling
/// interval (the choice giving the smallest `P`).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum CouplingChoice {
    #[default]
    Auto,
    Value(f64),
}

impl Serialize for CouplingChoice {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CouplingChoice::Auto => s.serialize_str("auto"),
            CouplingChoice::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for CouplingChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(CouplingChoice::Value(v)),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for CouplingChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(CouplingChoice::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(CouplingChoice::Value(v)),
            _ => Err(format!("coupling gain must be 'auto' or a finite number, got '{s}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    pub gamma: f64,
    pub c: CouplingChoice,
    /// `"auto"` or a registered regime name (`"i"`, `"ii"`).
    pub case_select: String,
    pub eps: f64,
    pub sigma: f64,
    pub noise_form: NoiseForm,
}

impl DesignParams {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            c: CouplingChoice::Auto,
            case_select: AUTO_CASE.into(),
            eps: 1e-3,
            sigma: 1e-3,
            noise_form: NoiseForm::EEt,
        }
    }
}

/// Parameters after `c` and the regime have been fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedParams {
    pub gamma: f64,
    pub c: f64,
    pub case: String,
    pub eps: f64,
    pub sigma: f64,
    pub noise_form: NoiseForm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolGains {
    /// m x n state-feedback gain.
    #[serde(rename = "F")]
    pub f: Mat,
    /// n x r observer gain.
    #[serde(rename = "G")]
    pub g: Mat,
}

impl ProtocolGains {
    pub fn zeros(model: &AgentModel) -> Self {
        let d = model.dims();
        Self {
            f: Mat::zeros(d.m, d.n),
            g: Mat::zeros(d.n, d.r),
        }
    }

    pub fn check_dims(&self, model: &AgentModel) -> Result<(), SynthesisError> {
        let d = model.dims();
        if self.f.shape() != (d.m, d.n) || self.g.shape() != (d.n, d.r) {
            return Err(SynthesisError::InvalidModel(format!(
                "gains F {:?} / G {:?} do not match model (expected {}x{} / {}x{})",
                self.f.shape(),
                self.g.shape(),
                d.m,
                d.n,
                d.n,
                d.r
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignCertificate {
    #[serde(rename = "P")]
    pub p: Mat,
    #[serde(rename = "Q")]
    pub q: Mat,
    pub params: ResolvedParams,
    pub lambda2: f64,
    pub lambda_n: f64,
    /// Scalar `r` in `R(c) = r I`.
    pub input_weight: f64,
    /// `tr(C1 Q P Q C1^T) + lN tr(C2 Q C2^T)`.
    pub s_value: f64,
    /// `(N - 1) * s_value`.
    pub bound_total: f64,
    /// CARE residuals of `P` and `Q`.
    pub riccati_residuals: [f64; 2],
    /// `A + l_i B F` Hurwitz, for `i = 2..N`.
    pub modal_hurwitz: Vec<bool>,
    pub observer_hurwitz: bool,
    /// Largest eigenvalue of the per-mode inequality left side at `P`, for
    /// `i = 2..N`; all must be negative.
    pub modal_inequality_max_eig: Vec<f64>,
    /// Largest eigenvalue of `A Q + Q A^T - Q C1^T C1 Q + E E^T`. Negative
    /// values mean the bound is a proven upper bound on the cost; with the
    /// `E^T E` noise form this can fail.
    pub observer_inequality_max_eig: f64,
    /// Every certificate condition holds, including the `E E^T` observer
    /// inequality, so `J(F, G) <= bound_total` is guaranteed.
    pub guaranteed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub gains: ProtocolGains,
    pub certificate: DesignCertificate,
}

/// Admissible coupling interval for a named regime.
pub fn admissible_c_range(
    registry: &CaseRegistry,
    lambda2: f64,
    lambda_n: f64,
    case: &str,
) -> Result<CouplingInterval, SynthesisError> {
    if !(lambda2 > 0.0) || !(lambda_n >= lambda2) || !lambda_n.is_finite() {
        return Err(SynthesisError::InvalidSpectrum(format!(
            "need 0 < lambda2 <= lambdaN, got {lambda2}, {lambda_n}"
        )));
    }
    let regime = registry
        .get(case)
        .ok_or_else(|| SynthesisError::InvalidParams(format!("unknown case '{case}'")))?;
    Ok(regime.admissible(lambda2, lambda_n))
}

/// `S(P, Q) = tr(C1 Q P Q C1^T) + lN tr(C2 Q C2^T)`.
pub fn bound_s(p: &Mat, q: &Mat, lambda_n: f64, c1: &Mat, c2: &Mat) -> f64 {
    let c1q = c1 * q;
    let first = (&(&c1q * p) * &c1q.transpose()).trace();
    let second = (&(c2 * q) * &c2.transpose()).trace();
    first + lambda_n * second
}

fn resolve(
    registry: &CaseRegistry,
    params: &DesignParams,
    lambda2: f64,
    lambda_n: f64,
) -> Result<ResolvedParams, SynthesisError> {
    for (name, v) in [("gamma", params.gamma), ("eps", params.eps), ("sigma", params.sigma)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(SynthesisError::InvalidParams(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    let (c, case) = match (params.c, params.case_select.as_str()) {
        (CouplingChoice::Auto, AUTO_CASE) => {
            let iv = admissible_c_range(registry, lambda2, lambda_n, "i")?;
            (iv.lower, "i".to_string())
        }
        (CouplingChoice::Auto, name) => {
            let iv = admissible_c_range(registry, lambda2, lambda_n, name)?;
            // Closed left end when there is one; otherwise just inside the
            // right end, where the regime's solutions are smallest.
            let c = if iv.lower_closed {
                iv.lower
            } else {
                iv.lower + 0.999 * (iv.upper - iv.lower)
            };
            (c, name.to_string())
        }
        (CouplingChoice::Value(c), AUTO_CASE) => {
            admissible_c_range(registry, lambda2, lambda_n, "i")?;
            let regime = registry.containing(c, lambda2, lambda_n).ok_or_else(|| {
                SynthesisError::InvalidParams(format!("c = {c} lies outside every admissible interval"))
            })?;
            (c, regime.name().to_string())
        }
        (CouplingChoice::Value(c), name) => {
            let iv = admissible_c_range(registry, lambda2, lambda_n, name)?;
            if !iv.contains(c) {
                return Err(SynthesisError::InvalidParams(format!(
                    "c = {c} is outside case {name}'s interval {iv}"
                )));
            }
            (c, name.to_string())
        }
    };
    Ok(ResolvedParams {
        gamma: params.gamma,
        c,
        case,
        eps: params.eps,
        sigma: params.sigma,
        noise_form: params.noise_form,
    })
}

fn connected_spectrum(graph: &WeightedGraph, tol: &NumericSettings) -> Result<GraphSpectrum, SynthesisError> {
    let components = graph.component_count();
    if components > 1 {
        return Err(SynthesisError::Disconnected { components });
    }
    let spectrum = graph.spectrum(tol)?;
    if spectrum.node_count() < 2 || !(spectrum.lambda2() > 0.0) {
        return Err(SynthesisError::InvalidSpectrum(
            "need at least two agents and lambda2 > 0".into(),
        ));
    }
    Ok(spectrum)
}

/// Left side of the per-mode Riccati inequality evaluated at `P`:
/// `(A + l B F)^T P + P (A + l B F) + (sqrt(l) C2 + l sqrt(l) D2 F)^T (...)`.
pub(crate) fn modal_inequality(model: &AgentModel, f: &Mat, p: &Mat, lambda: f64) -> Mat {
    let closed = &model.a + &(&model.b * f).scale(lambda);
    let sl = lambda.sqrt();
    let out = &model.c2.scale(sl) + &(&model.d2 * f).scale(lambda * sl);
    let ctp = &closed.transpose() * p;
    &(&ctp + &ctp.transpose()) + &(&out.transpose() * &out)
}

pub fn synthesize(
    model: &AgentModel,
    graph: &WeightedGraph,
    params: &DesignParams,
    tol: &NumericSettings,
) -> Result<Design, SynthesisError> {
    synthesize_with(&CaseRegistry::default(), model, graph, params, tol)
}

pub fn synthesize_with(
    registry: &CaseRegistry,
    model: &AgentModel,
    graph: &WeightedGraph,
    params: &DesignParams,
    tol: &NumericSettings,
) -> Result<Design, SynthesisError> {
    let spectrum = connected_spectrum(graph, tol)?;
    let norm = model.check_normalization(tol);
    if !norm.all_hold() {
        return Err(SynthesisError::NormalizationFailed(norm));
    }
    let (lambda2, lambda_n) = (spectrum.lambda2(), spectrum.lambda_max());
    let resolved = resolve(registry, params, lambda2, lambda_n)?;
    let regime = registry
        .get(&resolved.case)
        .ok_or_else(|| SynthesisError::InvalidParams(format!("unknown case '{}'", resolved.case)))?;

    let q_sol = observer_riccati(&model.a, &model.c1, &model.e, resolved.eps, resolved.noise_form, tol)?;

    let c = resolved.c;
    let star = regime.dominant_eigenvalue(lambda2, lambda_n);
    let denom = 2.0 * c * star - c * c * star.powi(3);
    if !(denom > 0.0) {
        return Err(SynthesisError::InvalidParams(format!(
            "c = {c} gives a non-positive Riccati input weight denominator {denom}"
        )));
    }
    let input_weight = 1.0 / denom;
    let m = model.dims().m;
    let p_sol = solve_care(
        &CareProblem {
            a: model.a.clone(),
            b: model.b.clone(),
            rw: Mat::identity(m).scale(input_weight),
            q: (&model.c2.transpose() * &model.c2).scale(lambda_n),
            perturbation: resolved.sigma,
        },
        tol,
    )?;

    let (p, q) = (p_sol.p, q_sol.p);
    let f = (&model.b.transpose() * &p).scale(-c);
    let g = &q * &model.c1.transpose();

    let modes = spectrum.nonzero_modes();
    let modal_hurwitz: Vec<bool> = modes
        .iter()
        .map(|&l| is_hurwitz(&(&model.a + &(&model.b * &f).scale(l)), tol))
        .collect();
    let observer_hurwitz = is_hurwitz(&(&model.a - &(&g * &model.c1)), tol);

    let mut modal_inequality_max_eig = Vec::with_capacity(modes.len());
    let mut inequalities_hold = true;
    let mut first_violation = None;
    for &l in modes {
        let lhs = modal_inequality(model, &f, &p, l);
        let top = sym_max_eig(&lhs, tol).map_err(crate::riccati::RiccatiError::from)?;
        if !(top < -tol.inequality_rel * lhs.norm_fro()) {
            inequalities_hold = false;
            first_violation.get_or_insert((l, top));
        }
        modal_inequality_max_eig.push(top);
    }

    let aq = &model.a * &q;
    let qc1t = &q * &model.c1.transpose();
    let obs_lhs = &(&(&aq + &aq.transpose()) - &(&qc1t * &qc1t.transpose())) + &(&model.e * &model.e.transpose());
    let observer_inequality_max_eig = sym_max_eig(&obs_lhs, tol).map_err(crate::riccati::RiccatiError::from)?;

    let s_value = bound_s(&p, &q, lambda_n, &model.c1, &model.c2);
    let bound_total = (spectrum.node_count() - 1) as f64 * s_value;
    let all_hurwitz = modal_hurwitz.iter().all(|&h| h) && observer_hurwitz;

    let certificate = DesignCertificate {
        p,
        q,
        params: resolved,
        lambda2,
        lambda_n,
        input_weight,
        s_value,
        bound_total,
        riccati_residuals: [p_sol.residual, q_sol.residual],
        modal_hurwitz,
        observer_hurwitz,
        modal_inequality_max_eig,
        observer_inequality_max_eig,
        guaranteed: all_hurwitz
            && inequalities_hold
            && observer_inequality_max_eig < -tol.inequality_rel * obs_lhs.norm_fro(),
    };

    if !all_hurwitz {
        let failed_modes = modes
            .iter()
            .zip(&certificate.modal_hurwitz)
            .filter(|(_, &ok)| !ok)
            .map(|(&l, _)| l)
            .collect();
        return Err(SynthesisError::NotSynchronizing {
            failed_modes,
            observer_ok: certificate.observer_hurwitz,
            certificate: Box::new(certificate),
        });
    }
    if let Some((lambda, max_eig)) = first_violation {
        return Err(SynthesisError::InequalityViolated { lambda, max_eig });
    }
    if !(bound_total < params.gamma) {
        return Err(SynthesisError::Infeasible {
            bound: bound_total,
            gamma: params.gamma,
            certificate: Box::new(certificate),
        });
    }
    Ok(Design {
        gains: ProtocolGains { f, g },
        certificate,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub c: Vec<CouplingChoice>,
    pub eps: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub c: CouplingChoice,
    pub eps: f64,
    pub sigma: f64,
    /// Achieved `(N - 1) S(P, Q)`, when the Riccati solves succeeded.
    pub bound: Option<f64>,
    pub feasible: bool,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub best: Design,
    pub points: Vec<SweepPoint>,
}

/// Runs [`synthesize`] on every `(c, eps, sigma)` grid point, in that nesting
/// order, and keeps the feasible design with the smallest bound. Ties go to
/// the earlier grid point.
pub fn sweep(
    model: &AgentModel,
    graph: &WeightedGraph,
    gamma: f64,
    grid: &SweepGrid,
    case_select: &str,
    noise_form: NoiseForm,
    tol: &NumericSettings,
) -> Result<SweepOutcome, SynthesisError> {
    if grid.c.is_empty() || grid.eps.is_empty() || grid.sigma.is_empty() {
        return Err(SynthesisError::InvalidParams("sweep grids must be nonempty".into()));
    }
    let registry = CaseRegistry::default();
    let spectrum = connected_spectrum(graph, tol)?;
    for &c in &grid.c {
        let probe = DesignParams {
            c,
            case_select: case_select.to_string(),
            ..DesignParams::new(gamma)
        };
        resolve(&registry, &probe, spectrum.lambda2(), spectrum.lambda_max())?;
    }

    let mut best: Option<Design> = None;
    let mut best_bound: Option<f64> = None;
    let mut points = Vec::new();
    for &c in &grid.c {
        for &eps in &grid.eps {
            for &sigma in &grid.sigma {
                let params = DesignParams {
                    gamma,
                    c,
                    case_select: case_select.to_string(),
                    eps,
                    sigma,
                    noise_form,
                };
                let (bound, feasible, note) = match synthesize_with(&registry, model, graph, &params, tol) {
                    Ok(d) => {
                        let b = d.certificate.bound_total;
                        if best.as_ref().is_none_or(|cur| b < cur.certificate.bound_total) {
                            best = Some(d);
                        }
                        (Some(b), true, None)
                    }
                    Err(SynthesisError::Infeasible { bound, .. }) => (Some(bound), false, Some("infeasible".into())),
                    Err(e) => (None, false, Some(e.to_string())),
                };
                if let Some(b) = bound {
                    best_bound = Some(best_bound.map_or(b, |cur: f64| cur.min(b)));
                }
                points.push(SweepPoint {
                    c,
                    eps,
                    sigma,
                    bound,
                    feasible,
                    note,
                });
            }
        }
    }
    match best {
        Some(best) => Ok(SweepOutcome { best, points }),
        None => Err(SynthesisError::AllInfeasible { best_bound }),
    }
}
