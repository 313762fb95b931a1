//! `h2net` command-line front end.
//!
//! Exit codes: 0 success, 2 infeasible design or negative verdict, 3 invalid
//! input, 4 numerical failure, 5 IO error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use h2net::graphs::{GraphError, WeightedGraph};
use h2net::h2cert::{impulse_cost_quadrature_checked, network_cost, verify_synchronizing, H2Error};
use h2net::netsim::{
    emit_gnuplot, export_csv, protocol_state_norms, simulate_with, DynamicsRegistry, Scenario, SimError,
};
use h2net::riccati::{NoiseForm, RiccatiError};
use h2net::synthesis::{
    admissible_c_range, sweep, synthesize, AgentModel, CaseRegistry, CouplingChoice, Design, DesignCertificate,
    DesignParams, ProtocolGains, SweepGrid, SynthesisError,
};
use h2net::NumericSettings;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Infeasible(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<RiccatiError> for CliError {
    fn from(e: RiccatiError) -> Self {
        match e {
            RiccatiError::InvalidProblem(_) => CliError::Invalid(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Matrix(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<SynthesisError> for CliError {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::Infeasible { .. } | SynthesisError::AllInfeasible { .. } => {
                CliError::Infeasible(e.to_string())
            }
            SynthesisError::NotSynchronizing { .. } | SynthesisError::InequalityViolated { .. } => {
                CliError::Numerical(e.to_string())
            }
            SynthesisError::Riccati(r) => r.into(),
            SynthesisError::Graph(g) => g.into(),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<H2Error> for CliError {
    fn from(e: H2Error) -> Self {
        match e {
            H2Error::NotSynchronizing { .. } | H2Error::Infeasible { .. } => CliError::Infeasible(e.to_string()),
            H2Error::InvalidMode(_) | H2Error::InvalidGrid(_) => CliError::Invalid(e.to_string()),
            H2Error::Model(m) => m.into(),
            H2Error::Riccati(r) => r.into(),
            H2Error::Graph(g) => g.into(),
            H2Error::Unstable { .. } | H2Error::NotStabilizing | H2Error::Matrix(_) => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidScenario(_) | SimError::UnknownForm(_) => CliError::Invalid(e.to_string()),
            SimError::Diverged { .. } => CliError::Numerical(e.to_string()),
            SimError::Network(h) => h.into(),
            SimError::Io(_) | SimError::Csv(_) => CliError::Io(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "h2net",
    version,
    about = "Distributed suboptimal H2 protocol design for multi-agent networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Design protocol gains and write them with their certificate.
    Design(DesignArgs),
    /// Check that gains synchronize the network.
    Verify(VerifyArgs),
    /// Evaluate the exact H2 cost of given gains.
    Cost(CostArgs),
    /// Simulate the controlled network and export the trajectory.
    Simulate(SimulateArgs),
    /// Grid search over (c, eps, sigma) for the smallest certified bound.
    Sweep(SweepArgs),
    /// Print Laplacian spectrum and admissible coupling ranges.
    GraphInfo(GraphInfoArgs),
}

#[derive(Args, Debug)]
struct Inputs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    graph: PathBuf,
}

#[derive(Args, Debug)]
struct DesignArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, value_parser = finite)]
    gamma: f64,
    #[arg(long, default_value = "auto")]
    c: CouplingChoice,
    #[arg(long = "case", default_value = "auto")]
    case_select: String,
    #[arg(long, default_value_t = 1e-3, value_parser = finite)]
    eps: f64,
    #[arg(long, default_value_t = 1e-3, value_parser = finite)]
    sigma: f64,
    #[arg(long, default_value = "EEt")]
    noise_form: NoiseForm,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    gains: PathBuf,
    #[arg(long, value_parser = finite)]
    gamma: Option<f64>,
}

#[derive(Args, Debug)]
struct CostArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    gains: PathBuf,
    #[arg(long, value_parser = finite)]
    gamma: Option<f64>,
    /// Cross-check by time-domain quadrature with horizon T and step dt.
    #[arg(long, num_args = 2, value_names = ["T", "DT"], value_parser = finite)]
    quadrature: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    gains: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    gnuplot: Option<PathBuf>,
    /// Right-hand-side implementation: observer or compact.
    #[arg(long, default_value = "observer")]
    form: String,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, value_parser = finite)]
    gamma: f64,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    c_grid: Vec<CouplingChoice>,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true, value_parser = finite)]
    eps_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true, value_parser = finite)]
    sigma_grid: Vec<f64>,
    #[arg(long = "case", default_value = "auto")]
    case_select: String,
    #[arg(long, default_value = "EEt")]
    noise_form: NoiseForm,
    /// Where to write the best design; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GraphInfoArgs {
    #[arg(long)]
    graph: PathBuf,
}

fn finite(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("'{s}' is not a finite number")),
    }
}

/// Gains file: the two gain matrices plus, when produced by `design` or
/// `sweep`, the certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainsFile {
    #[serde(flatten)]
    pub gains: ProtocolGains,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<DesignCertificate>,
}

impl From<Design> for GainsFile {
    fn from(d: Design) -> Self {
        Self {
            gains: d.gains,
            certificate: Some(d.certificate),
        }
    }
}

/// Formats with 6 significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    // Round through scientific notation so the exponent reflects carries.
    let sci = format!("{x:.5e}");
    let mag: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    if (-4..6).contains(&mag) {
        format!("{:.*}", (5 - mag) as usize, x)
    } else {
        sci
    }
}

fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{what} file {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_inputs(inputs: &Inputs) -> Result<(AgentModel, WeightedGraph), CliError> {
    Ok((read_json(&inputs.model, "model")?, read_json(&inputs.graph, "graph")?))
}

fn load_gains(path: &Path, model: &AgentModel) -> Result<ProtocolGains, CliError> {
    let file: GainsFile = read_json(path, "gains")?;
    file.gains.check_dims(model)?;
    Ok(file.gains)
}

/// Parses `argv` (including the program name), runs the command and returns
/// the exit code. Reports go to `out`, diagnostics to `err`.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let tol = match NumericSettings::from_env() {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: invalid {}: {e}", h2net::settings::NUM_TOL_ENV);
            return EXIT_INVALID;
        }
    };
    let result = match cli.command {
        Command::Design(a) => cmd_design(a, &tol, out),
        Command::Verify(a) => cmd_verify(a, &tol, out),
        Command::Cost(a) => cmd_cost(a, &tol, out),
        Command::Simulate(a) => cmd_simulate(a, &tol, out),
        Command::Sweep(a) => cmd_sweep(a, &tol, out),
        Command::GraphInfo(a) => cmd_graph_info(a, &tol, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

type CmdResult = Result<i32, CliError>;

fn io(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn print_certificate(out: &mut dyn Write, cert: &DesignCertificate) -> std::io::Result<()> {
    let p = &cert.params;
    writeln!(
        out,
        "case: {}  c: {}  eps: {}  sigma: {}  noise form: {}",
        p.case,
        sig6(p.c),
        p.eps,
        p.sigma,
        p.noise_form
    )?;
    writeln!(out, "lambda2: {}  lambdaN: {}", sig6(cert.lambda2), sig6(cert.lambda_n))?;
    writeln!(out, "S(P, Q): {}", sig6(cert.s_value))?;
    writeln!(out, "bound: {}", sig6(cert.bound_total))?;
    writeln!(
        out,
        "gamma: {}  margin: {}",
        sig6(p.gamma),
        sig6(p.gamma - cert.bound_total)
    )?;
    writeln!(out, "guaranteed: {}", cert.guaranteed)?;
    if !cert.guaranteed {
        writeln!(
            out,
            "warning: observer inequality max eigenvalue {} is not negative; the bound is not a proven upper bound on the cost",
            sig6(cert.observer_inequality_max_eig)
        )?;
    }
    Ok(())
}

fn cmd_design(a: DesignArgs, tol: &NumericSettings, out: &mut dyn Write) -> CmdResult {
    let (model, graph) = load_inputs(&a.inputs)?;
    let params = DesignParams {
        gamma: a.gamma,
        c: a.c,
        case_select: a.case_select,
        eps: a.eps,
        sigma: a.sigma,
        noise_form: a.noise_form,
    };
    match synthesize(&model, &graph, &params, tol) {
        Ok(design) => {
            print_certificate(out, &design.certificate).map_err(io)?;
            write_json(&a.out, &GainsFile::from(design))?;
            writeln!(out, "wrote {}", a.out.display()).map_err(io)?;
            Ok(EXIT_OK)
        }
        Err(SynthesisError::Infeasible { certificate, .. }) => {
            print_certificate(out, &certificate).map_err(io)?;
            writeln!(
                out,
                "infeasible: bound {} is not below gamma {}",
                sig6(certificate.bound_total),
                sig6(a.gamma)
            )
            .map_err(io)?;
            Ok(EXIT_INFEASIBLE)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_verify(a: VerifyArgs, tol: &NumericSettings, out: &mut dyn Write) -> CmdResult {
    let (model, graph) = load_inputs(&a.inputs)?;
    let gains = load_gains(&a.gains, &model)?;
    let report = verify_synchronizing(&model, &graph, &gains, tol)?;
    for m in &report.modes {
        writeln!(out, "lambda {}: A + lambda B F Hurwitz: {}", sig6(m.lambda), m.hurwitz).map_err(io)?;
    }
    writeln!(out, "A - G C1 Hurwitz: {}", report.observer_hurwitz).map_err(io)?;
    writeln!(out, "synchronizing: {}", report.synchronizing).map_err(io)?;
    if !report.synchronizing {
        return Ok(EXIT_INFEASIBLE);
    }
    if let Some(gamma) = a.gamma {
        let cost = network_cost(&model, &graph, &gains, Some(gamma), tol)?;
        let suboptimal = cost.suboptimal == Some(true);
        writeln!(
            out,
            "J: {}  gamma: {}  suboptimal: {}",
            sig6(cost.total),
            sig6(gamma),
            suboptimal
        )
        .map_err(io)?;
        if !suboptimal {
            return Ok(EXIT_INFEASIBLE);
        }
    }
    Ok(EXIT_OK)
}

fn cmd_cost(a: CostArgs, tol: &NumericSettings, out: &mut dyn Write) -> CmdResult {
    let (model, graph) = load_inputs(&a.inputs)?;
    let gains = load_gains(&a.gains, &model)?;
    let mut report = network_cost(&model, &graph, &gains, a.gamma, tol)?;
    for m in &report.per_mode {
        writeln!(out, "lambda {}: J_i = {}", sig6(m.lambda), sig6(m.cost)).map_err(io)?;
    }
    writeln!(out, "J: {}", sig6(report.total)).map_err(io)?;
    if let Some(q) = &a.quadrature {
        let est = impulse_cost_quadrature_checked(&model, &graph, &gains, q[0], q[1], tol)?;
        report.quadrature_estimate = Some(est.value);
        let gap = (est.value - report.total).abs() / (1.0 + report.total);
        writeln!(
            out,
            "quadrature (T = {}, dt = {}): {}  relative gap: {}  step-halving change: {}",
            sig6(q[0]),
            sig6(q[1]),
            sig6(est.value),
            sig6(gap),
            sig6(est.relative_change)
        )
        .map_err(io)?;
    }
    if let (Some(gamma), Some(sub)) = (report.gamma, report.suboptimal) {
        writeln!(out, "gamma: {}  suboptimal: {}", sig6(gamma), sub).map_err(io)?;
        if !sub {
            return Ok(EXIT_INFEASIBLE);
        }
    }
    Ok(EXIT_OK)
}

fn cmd_simulate(a: SimulateArgs, tol: &NumericSettings, out: &mut dyn Write) -> CmdResult {
    let (model, graph) = load_inputs(&a.inputs)?;
    let gains = load_gains(&a.gains, &model)?;
    let scenario: Scenario = read_json(&a.scenario, "scenario")?;
    let registry = DynamicsRegistry::default();
    let form = registry.get(&a.form)?;
    let traj = simulate_with(form, &model, &graph, &gains, &scenario, tol)?;
    export_csv(&traj, &a.out)?;
    writeln!(out, "samples: {}", traj.len()).map_err(io)?;
    if let (Some(t), Some(d), Some(w)) = (
        traj.times.last(),
        traj.disagreement.last(),
        protocol_state_norms(&traj).last(),
    ) {
        writeln!(
            out,
            "t = {}: max-pair disagreement {}  protocol state norm {}",
            sig6(*t),
            sig6(*d),
            sig6(*w)
        )
        .map_err(io)?;
    }
    writeln!(out, "wrote {}", a.out.display()).map_err(io)?;
    if let Some(gp) = &a.gnuplot {
        emit_gnuplot(&traj, &a.out, gp)?;
        writeln!(out, "wrote {}", gp.display()).map_err(io)?;
    }
    Ok(EXIT_OK)
}

fn cmd_sweep(a: SweepArgs, tol: &NumericSettings, out: &mut dyn Write) -> CmdResult {
    let (model, graph) = load_inputs(&a.inputs)?;
    let grid = SweepGrid {
        c: a.c_grid,
        eps: a.eps_grid,
        sigma: a.sigma_grid,
    };
    let outcome = sweep(&model, &graph, a.gamma, &grid, &a.case_select, a.noise_form, tol)?;
    let file = GainsFile::from(outcome.best.clone());
    match &a.out {
        Some(path) => {
            for p in &outcome.points {
                let c = match p.c {
                    CouplingChoice::Auto => "auto".to_string(),
                    CouplingChoice::Value(v) => sig6(v),
                };
                let bound = p.bound.map_or("-".to_string(), sig6);
                writeln!(
                    out,
                    "c {c}  eps {}  sigma {}  bound {bound}  feasible {}",
                    p.eps, p.sigma, p.feasible
                )
                .map_err(io)?;
            }
            print_certificate(out, &outcome.best.certificate).map_err(io)?;
            write_json(path, &file)?;
            writeln!(out, "wrote {}", path.display()).map_err(io)?;
        }
        None => {
            let text = serde_json::to_string_pretty(&file).map_err(|e| CliError::Numerical(e.to_string()))?;
            writeln!(out, "{text}").map_err(io)?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_graph_info(a: GraphInfoArgs, tol: &NumericSettings, out: &mut dyn Write) -> CmdResult {
    let graph: WeightedGraph = read_json(&a.graph, "graph")?;
    let spectrum = graph.spectrum(tol)?;
    let components = graph.component_count();
    writeln!(out, "N: {}  K: {}", graph.node_count(), graph.edge_count()).map_err(io)?;
    writeln!(out, "connected: {}  components: {components}", components == 1).map_err(io)?;
    let eigs: Vec<String> = spectrum.lambda.iter().map(|&v| sig6(v)).collect();
    writeln!(out, "spectrum: {}", eigs.join(" ")).map_err(io)?;
    if components == 1 && graph.node_count() >= 2 {
        let (l2, ln) = (spectrum.lambda2(), spectrum.lambda_max());
        writeln!(out, "lambda2: {}  lambdaN: {}", sig6(l2), sig6(ln)).map_err(io)?;
        let registry = CaseRegistry::default();
        for name in registry.names() {
            let iv = admissible_c_range(&registry, l2, ln, name)?;
            writeln!(out, "case {name}: c in {iv}").map_err(io)?;
        }
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(16.846886), "16.8469");
        assert_eq!(sig6(2.0 / 21.0), "0.0952381");
        assert_eq!(sig6(4.0), "4.00000");
        assert_eq!(sig6(-0.50634), "-0.506340");
        assert_eq!(sig6(1.5e-7), "1.50000e-7");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(0.99999999999), "1.00000");
        assert_eq!(sig6(999999.7), "1.00000e6");
    }

    #[test]
    fn parse_errors_are_invalid_input() {
        let mut out = Vec::new();
        let mut err = Vec::new();
        assert_eq!(
            run_with(["h2net", "design", "--gamma", "nan"], &mut out, &mut err),
            EXIT_INVALID
        );
        assert_eq!(run_with(["h2net", "bogus"], &mut out, &mut err), EXIT_INVALID);
        assert_eq!(run_with(["h2net", "--help"], &mut out, &mut err), EXIT_OK);
    }

    #[test]
    fn error_mapping() {
        assert_eq!(CliError::from(RiccatiError::InitFailure).exit_code(), EXIT_NUMERICAL);
        assert_eq!(
            CliError::from(SynthesisError::Disconnected { components: 2 }).exit_code(),
            EXIT_INVALID
        );
        assert_eq!(
            CliError::from(SynthesisError::AllInfeasible { best_bound: None }).exit_code(),
            EXIT_INFEASIBLE
        );
        assert_eq!(
            CliError::from(SimError::Diverged {
                t: 1.0,
                magnitude: 1e10
            })
            .exit_code(),
            EXIT_NUMERICAL
        );
    }
}
