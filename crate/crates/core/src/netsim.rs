//! Fixed-step RK4 simulation of the controlled network, with disagreement
//! metrics and CSV / gnuplot export.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::graphs::WeightedGraph;
use crate::h2cert::{ClosedLoopNetwork, H2Error};
use crate::matkit::{kron, Mat};
use crate::settings::NumericSettings;
use crate::synthesis::{AgentModel, ProtocolGains};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("simulation diverged at t = {t} (state magnitude {magnitude:.3e})")]
    Diverged { t: f64, magnitude: f64 },
    #[error("unknown dynamics form '{0}'")]
    UnknownForm(String),
    #[error(transparent)]
    Network(#[from] H2Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Initial protocol states: all zero, or one row per agent.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum ProtocolInit {
    #[default]
    Zeros,
    Given(Mat),
}

impl Serialize for ProtocolInit {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ProtocolInit::Zeros => s.serialize_str("zeros"),
            ProtocolInit::Given(m) => m.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ProtocolInit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Matrix(Mat),
        }
        match Repr::deserialize(d)? {
            Repr::Text(t) if t == "zeros" => Ok(ProtocolInit::Zeros),
            Repr::Text(t) => Err(serde::de::Error::custom(format!(
                "w0 must be \"zeros\" or a matrix, got \"{t}\""
            ))),
            Repr::Matrix(m) => Ok(ProtocolInit::Given(m)),
        }
    }
}

fn default_width() -> f64 {
    1e-3
}

/// External disturbance. Agent and channel indices are 1-based.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Disturbance {
    #[default]
    None,
    /// Rectangular pulse on one channel of one agent; the default height
    /// `1 / width` gives unit area.
    Pulse {
        agent: usize,
        channel: usize,
        #[serde(default)]
        start: f64,
        #[serde(default = "default_width")]
        width: f64,
        #[serde(default)]
        height: Option<f64>,
    },
    /// Piecewise-constant signal: `values[k]` (N x q) holds on
    /// `[times[k], times[k+1])`; zero before `times[0]`.
    Table { times: Vec<f64>, values: Vec<Mat> },
}

impl Disturbance {
    fn validate(&self, nodes: usize, q: usize) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        match self {
            Disturbance::None => Ok(()),
            Disturbance::Pulse {
                agent,
                channel,
                start,
                width,
                height,
            } => {
                if !(1..=nodes).contains(agent) || !(1..=q).contains(channel) {
                    return bad(format!(
                        "pulse agent {agent} / channel {channel} out of range (N = {nodes}, q = {q})"
                    ));
                }
                if !(*width > 0.0 && width.is_finite() && start.is_finite()) {
                    return bad("pulse needs a finite start and positive width".into());
                }
                if height.is_some_and(|h| !h.is_finite()) {
                    return bad("pulse height must be finite".into());
                }
                Ok(())
            }
            Disturbance::Table { times, values } => {
                if times.len() != values.len() {
                    return bad(format!(
                        "table has {} times but {} value rows",
                        times.len(),
                        values.len()
                    ));
                }
                if times.windows(2).any(|w| !(w[0] < w[1])) || times.iter().any(|t| !t.is_finite()) {
                    return bad("table times must be finite and strictly increasing".into());
                }
                if let Some(v) = values.iter().find(|v| v.shape() != (nodes, q)) {
                    return bad(format!("table values must be {nodes}x{q}, got {:?}", v.shape()));
                }
                Ok(())
            }
        }
    }

    /// Stacked disturbance `(d_1, ..., d_N)` at time `t`.
    fn sample(&self, t: f64, nodes: usize, q: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match self {
            Disturbance::None => {}
            Disturbance::Pulse {
                agent,
                channel,
                start,
                width,
                height,
            } => {
                if t >= *start && t < start + width {
                    out[(agent - 1) * q + (channel - 1)] = height.unwrap_or(1.0 / width);
                }
            }
            Disturbance::Table { times, values } => {
                let k = times.partition_point(|&s| s <= t);
                if k > 0 {
                    debug_assert_eq!(values[k - 1].as_slice().len(), nodes * q);
                    out.copy_from_slice(values[k - 1].as_slice());
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// N x n initial agent states, one row per agent.
    pub x0: Mat,
    #[serde(default)]
    pub w0: ProtocolInit,
    #[serde(default)]
    pub disturbance: Disturbance,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
}

impl Scenario {
    /// Six two-state agents with spread-out initial states, zero protocol
    /// states and no disturbance.
    pub fn example_six_agents(horizon: f64, dt: f64) -> Self {
        let x0 = Mat::from_rows(&[
            [1.0, -2.0],
            [2.0, -5.0],
            [3.0, 1.0],
            [4.0, 2.0],
            [-1.0, 2.0],
            [-3.0, 1.0],
        ])
        .expect("literal matrix");
        Self {
            x0,
            w0: ProtocolInit::Zeros,
            disturbance: Disturbance::None,
            horizon,
            dt,
        }
    }

    pub fn validate(&self, nodes: usize, model: &AgentModel) -> Result<(), SimError> {
        let d = model.dims();
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if !(self.dt > 0.0 && self.dt.is_finite() && self.horizon.is_finite() && self.horizon >= self.dt) {
            return bad(format!(
                "need dt > 0 and T >= dt, got T = {}, dt = {}",
                self.horizon, self.dt
            ));
        }
        if self.x0.shape() != (nodes, d.n) {
            return bad(format!("x0 must be {nodes}x{}, got {:?}", d.n, self.x0.shape()));
        }
        if let ProtocolInit::Given(w) = &self.w0 {
            if w.shape() != (nodes, d.n) {
                return bad(format!("w0 must be {nodes}x{}, got {:?}", d.n, w.shape()));
            }
        }
        self.disturbance.validate(nodes, d.q)
    }

    fn initial_state(&self) -> Vec<f64> {
        let mut s = self.x0.as_slice().to_vec();
        match &self.w0 {
            ProtocolInit::Zeros => s.extend(std::iter::repeat_n(0.0, self.x0.as_slice().len())),
            ProtocolInit::Given(w) => s.extend_from_slice(w.as_slice()),
        }
        s
    }
}

/// Everything a right-hand side needs, assembled once per run.
pub struct NetworkSystem {
    pub model: AgentModel,
    pub gains: ProtocolGains,
    pub neighbours: Vec<Vec<(usize, f64)>>,
    pub closed_loop: ClosedLoopNetwork,
    pub nodes: usize,
}

impl NetworkSystem {
    pub fn new(model: &AgentModel, graph: &WeightedGraph, gains: &ProtocolGains) -> Result<Self, SimError> {
        Ok(Self {
            model: model.clone(),
            gains: gains.clone(),
            neighbours: graph.neighbours(),
            closed_loop: ClosedLoopNetwork::new(model, graph, gains)?,
            nodes: graph.node_count(),
        })
    }

    fn state_len(&self) -> usize {
        2 * self.nodes * self.model.dims().n
    }
}

/// One way of writing the closed-loop vector field `s' = f(s, d)` on the
/// stacked state `(x_1..x_N, w_1..w_N)`.
pub trait DynamicsForm: Send + Sync {
    fn name(&self) -> &'static str;

    fn derivative(&self, sys: &NetworkSystem, state: &[f64], d: &[f64], out: &mut [f64]);
}

/// Per-agent protocol: each `w_i` is driven by relative inputs and relative
/// measurements from its neighbours.
pub struct ObserverForm;

impl DynamicsForm for ObserverForm {
    fn name(&self) -> &'static str {
        "observer"
    }

    fn derivative(&self, sys: &NetworkSystem, state: &[f64], d: &[f64], out: &mut [f64]) {
        let model = &sys.model;
        let dims = model.dims();
        let (n, nn) = (dims.n, sys.nodes * dims.n);
        let (x, w) = state.split_at(nn);
        let (dx, dw) = out.split_at_mut(nn);

        let xi = |i: usize| &x[i * n..(i + 1) * n];
        let wi = |i: usize| &w[i * n..(i + 1) * n];
        let di = |i: usize| &d[i * dims.q..(i + 1) * dims.q];
        let u: Vec<Vec<f64>> = (0..sys.nodes).map(|i| sys.gains.f.matvec(wi(i))).collect();
        let y: Vec<Vec<f64>> = (0..sys.nodes)
            .map(|i| {
                let mut y = model.c1.matvec(xi(i));
                let d1 = model.d1.matvec(di(i));
                y.iter_mut().zip(d1).for_each(|(a, b)| *a += b);
                y
            })
            .collect();

        for i in 0..sys.nodes {
            // x_i' = A x_i + B u_i + E d_i
            let ax = model.a.matvec(xi(i));
            let bu = model.b.matvec(&u[i]);
            let ed = model.e.matvec(di(i));
            for k in 0..n {
                dx[i * n + k] = ax[k] + bu[k] + ed[k];
            }

            let mut du = vec![0.0; dims.m];
            let mut dy = model.c1.matvec(wi(i));
            dy.iter_mut().for_each(|v| *v = -*v);
            for &(j, a) in &sys.neighbours[i] {
                for k in 0..dims.m {
                    du[k] += a * (u[i][k] - u[j][k]);
                }
                for k in 0..dims.r {
                    dy[k] += a * (y[i][k] - y[j][k]);
                }
            }
            let aw = model.a.matvec(wi(i));
            let bdu = model.b.matvec(&du);
            let gdy = sys.gains.g.matvec(&dy);
            for k in 0..n {
                dw[i * n + k] = aw[k] + bdu[k] + gdy[k];
            }
        }
    }
}

/// Network-level form `s' = Ae s + Ee d`.
pub struct CompactForm;

impl DynamicsForm for CompactForm {
    fn name(&self) -> &'static str {
        "compact"
    }

    fn derivative(&self, sys: &NetworkSystem, state: &[f64], d: &[f64], out: &mut [f64]) {
        sys.closed_loop.ae.matvec_into(state, out);
        let forced = sys.closed_loop.ee.matvec(d);
        out.iter_mut().zip(forced).for_each(|(o, f)| *o += f);
    }
}

pub struct DynamicsRegistry {
    forms: Vec<Box<dyn DynamicsForm>>,
}

impl Default for DynamicsRegistry {
    fn default() -> Self {
        Self {
            forms: vec![Box::new(ObserverForm), Box::new(CompactForm)],
        }
    }
}

impl DynamicsRegistry {
    pub fn register(&mut self, form: Box<dyn DynamicsForm>) {
        self.forms.retain(|f| f.name() != form.name());
        self.forms.push(form);
    }

    pub fn get(&self, name: &str) -> Result<&dyn DynamicsForm, SimError> {
        self.forms
            .iter()
            .find(|f| f.name() == name)
            .map(|f| f.as_ref())
            .ok_or_else(|| SimError::UnknownForm(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.forms.iter().map(|f| f.name()).collect()
    }
}

/// Sampled run. Every per-sample vector is stacked by agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub nodes: usize,
    pub state_dim: usize,
    pub input_dim: usize,
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    /// `(W^1/2 R^T (x) I_p) z`.
    pub zeta: Vec<Vec<f64>>,
    /// Largest `||x_i - x_j||_2` over agent pairs.
    pub disagreement: Vec<f64>,
}

impl Trajectory {
    pub fn empty(nodes: usize, state_dim: usize, input_dim: usize) -> Self {
        Self {
            nodes,
            state_dim,
            input_dim,
            times: vec![],
            x: vec![],
            w: vec![],
            u: vec![],
            zeta: vec![],
            disagreement: vec![],
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn agent_state(&self, sample: usize, agent: usize) -> &[f64] {
        let n = self.state_dim;
        &self.x[sample][agent * n..(agent + 1) * n]
    }
}

pub fn max_pair_disagreement(x: &[f64], nodes: usize, n: usize) -> f64 {
    let mut best = 0.0f64;
    for i in 0..nodes {
        for j in i + 1..nodes {
            let d2: f64 = (0..n).map(|k| (x[i * n + k] - x[j * n + k]).powi(2)).sum();
            best = best.max(d2);
        }
    }
    best.sqrt()
}

pub fn simulate(
    model: &AgentModel,
    graph: &WeightedGraph,
    gains: &ProtocolGains,
    scenario: &Scenario,
    tol: &NumericSettings,
) -> Result<Trajectory, SimError> {
    simulate_with(&ObserverForm, model, graph, gains, scenario, tol)
}

/// Classic RK4 with `round(T / dt)` equal steps ending exactly at `T`.
pub fn simulate_with(
    form: &dyn DynamicsForm,
    model: &AgentModel,
    graph: &WeightedGraph,
    gains: &ProtocolGains,
    scenario: &Scenario,
    tol: &NumericSettings,
) -> Result<Trajectory, SimError> {
    let sys = NetworkSystem::new(model, graph, gains)?;
    scenario.validate(sys.nodes, model)?;
    let dims = model.dims();
    let (nodes, n) = (sys.nodes, dims.n);
    let len = sys.state_len();
    let steps = ((scenario.horizon / scenario.dt).round() as usize).max(1);
    let h = scenario.horizon / steps as f64;

    let output_map = {
        let diff = graph.weighted_difference_operator();
        let c2 = kron(&Mat::identity(nodes), &model.c2);
        let d2f = kron(&Mat::identity(nodes), &(&model.d2 * &gains.f));
        let lift = kron(&diff, &Mat::identity(dims.p));
        Mat::hstack(&[&(&lift * &c2), &(&lift * &d2f)])
    };

    let mut traj = Trajectory::empty(nodes, n, dims.m);
    let mut record = |t: f64, s: &[f64]| {
        let (x, w) = s.split_at(nodes * n);
        traj.times.push(t);
        traj.x.push(x.to_vec());
        traj.w.push(w.to_vec());
        traj.u.push(
            (0..nodes)
                .flat_map(|i| gains.f.matvec(&w[i * n..(i + 1) * n]))
                .collect(),
        );
        traj.zeta.push(output_map.matvec(s));
        traj.disagreement.push(max_pair_disagreement(x, nodes, n));
    };

    let mut s = scenario.initial_state();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let mut tmp = vec![0.0; len];
    let mut d = vec![0.0; nodes * dims.q];
    let eval = |t: f64, x: &[f64], out: &mut [f64], d: &mut [f64]| {
        scenario.disturbance.sample(t, nodes, dims.q, d);
        form.derivative(&sys, x, d, out);
    };

    record(0.0, &s);
    for step in 0..steps {
        let t = step as f64 * h;
        eval(t, &s, &mut k1, &mut d);
        for i in 0..len {
            tmp[i] = s[i] + 0.5 * h * k1[i];
        }
        eval(t + 0.5 * h, &tmp, &mut k2, &mut d);
        for i in 0..len {
            tmp[i] = s[i] + 0.5 * h * k2[i];
        }
        eval(t + 0.5 * h, &tmp, &mut k3, &mut d);
        for i in 0..len {
            tmp[i] = s[i] + h * k3[i];
        }
        eval(t + h, &tmp, &mut k4, &mut d);
        let mut magnitude = 0.0f64;
        for i in 0..len {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            magnitude = magnitude.max(s[i].abs());
        }
        let t_next = (step + 1) as f64 * h;
        if !(magnitude <= tol.divergence_limit) {
            return Err(SimError::Diverged { t: t_next, magnitude });
        }
        record(t_next, &s);
    }
    Ok(traj)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisagreementSample {
    pub t: f64,
    pub max_pair: f64,
    pub zeta_norm: f64,
}

pub fn disagreement_profile(traj: &Trajectory) -> Vec<DisagreementSample> {
    traj.times
        .iter()
        .zip(&traj.disagreement)
        .zip(&traj.zeta)
        .map(|((&t, &max_pair), z)| DisagreementSample {
            t,
            max_pair,
            zeta_norm: z.iter().map(|v| v * v).sum::<f64>().sqrt(),
        })
        .collect()
}

/// Whether every value in the last `fraction` of the series (at least one
/// sample) is below `threshold`.
pub fn tail_below(values: &[f64], threshold: f64, fraction: f64) -> bool {
    if values.is_empty() {
        return true;
    }
    let count = ((values.len() as f64 * fraction).ceil() as usize).clamp(1, values.len());
    values[values.len() - count..].iter().all(|&v| v < threshold)
}

/// Euclidean norm of the stacked protocol states per sample.
pub fn protocol_state_norms(traj: &Trajectory) -> Vec<f64> {
    traj.w
        .iter()
        .map(|w| w.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Norm of the stacked estimation error `e_i = w_i - sum_j a_ij (x_i - x_j)`
/// per sample; it obeys `e' = (I (x) (A - G C1)) e` when there is no
/// disturbance.
pub fn observer_error_norms(traj: &Trajectory, graph: &WeightedGraph) -> Vec<f64> {
    let l = kron(&graph.laplacian(), &Mat::identity(traj.state_dim));
    traj.x
        .iter()
        .zip(&traj.w)
        .map(|(x, w)| {
            let lx = l.matvec(x);
            w.iter().zip(lx).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        })
        .collect()
}

/// Column names: `t`, `x_<agent>_<k>`, `w_<agent>_<k>`, `u_<agent>_<k>`,
/// `disagreement`, all indices 1-based.
pub fn csv_header(nodes: usize, state_dim: usize, input_dim: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for (prefix, dim) in [("x", state_dim), ("w", state_dim), ("u", input_dim)] {
        for i in 1..=nodes {
            for k in 1..=dim {
                h.push(format!("{prefix}_{i}_{k}"));
            }
        }
    }
    h.push("disagreement".into());
    h
}

pub fn export_csv(traj: &Trajectory, path: &Path) -> Result<(), SimError> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record(csv_header(traj.nodes, traj.state_dim, traj.input_dim))?;
    for s in 0..traj.len() {
        let mut row = Vec::with_capacity(2 + traj.x[s].len() * 2 + traj.u[s].len());
        row.push(traj.times[s]);
        row.extend_from_slice(&traj.x[s]);
        row.extend_from_slice(&traj.w[s]);
        row.extend_from_slice(&traj.u[s]);
        row.push(traj.disagreement[s]);
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Gnuplot script reading `csv_path`: one panel per state component with
/// every agent's trajectory, then the same for the protocol states.
pub fn emit_gnuplot(traj: &Trajectory, csv_path: &Path, script_path: &Path) -> Result<(), SimError> {
    let header = csv_header(traj.nodes, traj.state_dim, traj.input_dim);
    let column = |name: &str| header.iter().position(|h| h == name).expect("known column") + 1;
    let n = traj.state_dim;
    let mut f = std::io::BufWriter::new(std::fs::File::create(script_path)?);
    writeln!(f, "set datafile separator ','")?;
    writeln!(f, "set key autotitle columnhead outside right")?;
    writeln!(f, "set xlabel 't'")?;
    writeln!(f, "set multiplot layout 2,{n}")?;
    for family in ["x", "w"] {
        for k in 1..=n {
            writeln!(f, "set title '{family} component {k}'")?;
            let series: Vec<String> = (1..=traj.nodes)
                .map(|i| {
                    format!(
                        "'{}' using 1:{} with lines",
                        csv_path.display(),
                        column(&format!("{family}_{i}_{k}"))
                    )
                })
                .collect();
            writeln!(f, "plot {}", series.join(", \\\n     "))?;
        }
    }
    writeln!(f, "unset multiplot")?;
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::NoiseForm;
    use crate::synthesis::{synthesize, DesignParams};

    fn tol() -> NumericSettings {
        NumericSettings::default()
    }

    fn reference_gains() -> ProtocolGains {
        let params = DesignParams {
            noise_form: NoiseForm::EtE,
            ..DesignParams::new(17.0)
        };
        synthesize(
            &AgentModel::example_two_state(),
            &WeightedGraph::cycle(6),
            &params,
            &tol(),
        )
        .unwrap()
        .gains
    }

    #[test]
    fn scenario_json() {
        let s: Scenario = serde_json::from_str(
            r#"{"x0": [[1, 2], [3, 4]], "w0": "zeros", "disturbance": {"type": "pulse", "agent": 2, "channel": 1}, "T": 1, "dt": 0.01}"#,
        )
        .unwrap();
        assert_eq!(s.w0, ProtocolInit::Zeros);
        assert!(matches!(s.disturbance, Disturbance::Pulse { width, height: None, .. } if width == 1e-3));
        let back: Scenario = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);

        let s: Scenario = serde_json::from_str(r#"{"x0": [[1, 2]], "w0": [[0.5, 0]], "T": 1, "dt": 0.5}"#).unwrap();
        assert_eq!(s.disturbance, Disturbance::None);
        assert!(matches!(s.w0, ProtocolInit::Given(_)));
        assert!(serde_json::from_str::<Scenario>(r#"{"x0": [[1]], "w0": "ones", "T": 1, "dt": 1}"#).is_err());
    }

    #[test]
    fn scenario_validation() {
        let model = AgentModel::example_two_state();
        let mut s = Scenario::example_six_agents(1.0, 0.1);
        assert!(s.validate(6, &model).is_ok());
        assert!(s.validate(5, &model).is_err());
        s.dt = 2.0;
        assert!(s.validate(6, &model).is_err());
        s.dt = 0.1;
        s.disturbance = Disturbance::Table {
            times: vec![0.0, 0.0],
            values: vec![Mat::zeros(6, 2), Mat::zeros(6, 2)],
        };
        assert!(s.validate(6, &model).is_err());
        s.disturbance = Disturbance::Pulse {
            agent: 7,
            channel: 1,
            start: 0.0,
            width: 1e-3,
            height: None,
        };
        assert!(s.validate(6, &model).is_err());
    }

    #[test]
    fn disturbance_sampling() {
        let mut d = vec![0.0; 4];
        let pulse = Disturbance::Pulse {
            agent: 2,
            channel: 1,
            start: 0.5,
            width: 0.25,
            height: None,
        };
        pulse.sample(0.6, 2, 2, &mut d);
        assert_eq!(d, vec![0.0, 0.0, 4.0, 0.0]);
        pulse.sample(0.75, 2, 2, &mut d);
        assert_eq!(d, vec![0.0; 4]);

        let table = Disturbance::Table {
            times: vec![1.0, 2.0],
            values: vec![
                Mat::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap(),
                Mat::from_rows(&[[5.0, 6.0], [7.0, 8.0]]).unwrap(),
            ],
        };
        table.sample(0.5, 2, 2, &mut d);
        assert_eq!(d, vec![0.0; 4]);
        table.sample(1.0, 2, 2, &mut d);
        assert_eq!(d, vec![1.0, 2.0, 3.0, 4.0]);
        table.sample(9.0, 2, 2, &mut d);
        assert_eq!(d, vec![5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn equilibrium_stays_put() {
        let model = AgentModel::example_two_state();
        let mut s = Scenario::example_six_agents(2.0, 0.01);
        s.x0 = Mat::zeros(6, 2);
        let traj = simulate(&model, &WeightedGraph::cycle(6), &reference_gains(), &s, &tol()).unwrap();
        assert!(traj.x.iter().chain(&traj.w).all(|v| v.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn identical_agents_never_disagree() {
        let model = AgentModel::example_two_state();
        let mut s = Scenario::example_six_agents(5.0, 0.01);
        s.x0 = Mat::from_rows(&[[0.7, -1.3]; 6]).unwrap();
        let traj = simulate(&model, &WeightedGraph::cycle(6), &reference_gains(), &s, &tol()).unwrap();
        assert!(traj.disagreement.iter().all(|&d| d <= 1e-12));
        assert!(disagreement_profile(&traj).iter().all(|p| p.zeta_norm <= 1e-12));
    }

    #[test]
    fn forms_agree() {
        let model = AgentModel::example_two_state();
        let g = WeightedGraph::cycle(6);
        let mut s = Scenario::example_six_agents(3.0, 1e-3);
        s.w0 = ProtocolInit::Given(Mat::from_rows(&[[0.1, -0.2]; 6]).unwrap());
        s.disturbance = Disturbance::Pulse {
            agent: 3,
            channel: 2,
            start: 0.2,
            width: 0.01,
            height: None,
        };
        let reg = DynamicsRegistry::default();
        assert_eq!(reg.names(), vec!["observer", "compact"]);
        let a = simulate_with(reg.get("observer").unwrap(), &model, &g, &reference_gains(), &s, &tol()).unwrap();
        let b = simulate_with(reg.get("compact").unwrap(), &model, &g, &reference_gains(), &s, &tol()).unwrap();
        assert_eq!(a.len(), b.len());
        let gap =
            a.x.iter()
                .zip(&b.x)
                .chain(a.w.iter().zip(&b.w))
                .flat_map(|(p, q)| p.iter().zip(q).map(|(u, v)| (u - v).abs()))
                .fold(0.0f64, f64::max);
        assert!(gap < 1e-9, "gap {gap}");
        assert!(matches!(reg.get("nope"), Err(SimError::UnknownForm(_))));
    }

    #[test]
    fn unstable_gains_diverge() {
        let model = AgentModel::example_two_state();
        let mut gains = reference_gains();
        gains.f = gains.f.scale(-50.0);
        let s = Scenario::example_six_agents(200.0, 0.01);
        assert!(matches!(
            simulate(&model, &WeightedGraph::cycle(6), &gains, &s, &tol()),
            Err(SimError::Diverged { .. })
        ));
    }

    #[test]
    fn tail_helper() {
        assert!(tail_below(&[5.0, 4.0, 0.1, 0.05], 0.2, 0.5));
        assert!(!tail_below(&[5.0, 4.0, 0.3, 0.05], 0.2, 0.5));
        assert!(tail_below(&[9.0, 0.0], 0.1, 0.0));
        assert!(tail_below(&[], 0.1, 0.1));
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            csv_header(2, 1, 1),
            vec![
                "t",
                "x_1_1",
                "x_2_1",
                "w_1_1",
                "w_2_1",
                "u_1_1",
                "u_2_1",
                "disagreement"
            ]
        );
    }
}
