use h2net::graphs::WeightedGraph;
use h2net::netsim::{
    csv_header, disagreement_profile, emit_gnuplot, export_csv, observer_error_norms, protocol_state_norms, simulate,
    tail_below, Scenario, Trajectory,
};
use h2net::riccati::NoiseForm;
use h2net::synthesis::{synthesize, AgentModel, DesignParams, ProtocolGains};
use h2net::NumericSettings;

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

fn run(horizon: f64, dt: f64) -> Trajectory {
    simulate(
        &AgentModel::example_two_state(),
        &WeightedGraph::cycle(6),
        &reference_gains(),
        &Scenario::example_six_agents(horizon, dt),
        &tol(),
    )
    .unwrap()
}

#[test]
fn reference_network_synchronizes() {
    // The slowest closed-loop pole sits near -0.506, so a 40 s horizon leaves
    // every residual far below the thresholds.
    let traj = run(40.0, 1e-3);
    assert_eq!(traj.len(), 40_001);
    assert!(*traj.disagreement.last().unwrap() < 1e-3);
    assert!(tail_below(&traj.disagreement, 1e-3, 0.1));
    assert!(tail_below(&protocol_state_norms(&traj), 1e-3, 0.1));

    let errors = observer_error_norms(&traj, &WeightedGraph::cycle(6));
    assert!(*errors.last().unwrap() < 1e-6 * (1.0 + errors[0]));

    let profile = disagreement_profile(&traj);
    assert!(profile.last().unwrap().zeta_norm < 1e-3);
    assert!(profile[0].max_pair > 1.0);
}

#[test]
fn rk4_step_halving_converges() {
    let coarse = run(20.0, 1e-3);
    let fine = run(20.0, 5e-4);
    let a = coarse.x.last().unwrap().iter().chain(coarse.w.last().unwrap());
    let b = fine.x.last().unwrap().iter().chain(fine.w.last().unwrap());
    let scale = fine
        .x
        .last()
        .unwrap()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    let gap = a.zip(b).map(|(u, v)| (u - v).abs()).fold(0.0f64, f64::max);
    assert!(gap < 1e-6 * scale.max(1.0), "gap {gap}");
}

#[test]
fn csv_round_trip_and_plot_script() {
    let traj = run(2.0, 0.01);
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("traj.csv");
    export_csv(&traj, &csv_path).unwrap();

    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, csv_header(6, 2, 1));
    assert_eq!(header.len(), 1 + 12 + 12 + 6 + 1);
    let rows: Vec<Vec<f64>> = reader
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), traj.len());
    let last = rows.last().unwrap();
    assert_eq!(last[0], *traj.times.last().unwrap());
    assert_eq!(last[1..13], traj.x.last().unwrap()[..]);
    assert_eq!(*last.last().unwrap(), *traj.disagreement.last().unwrap());

    let script = dir.path().join("traj.gp");
    emit_gnuplot(&traj, &csv_path, &script).unwrap();
    let text = std::fs::read_to_string(&script).unwrap();
    let plots: Vec<&str> = text.split("\nplot ").skip(1).collect();
    assert_eq!(plots.len(), 4);
    for panel in &plots[..2] {
        assert_eq!(panel.matches("with lines").count(), 6);
    }
}

#[test]
fn empty_trajectory_exports_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    export_csv(&Trajectory::empty(3, 2, 1), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert_eq!(text.trim_end(), csv_header(3, 2, 1).join(","));
}

#[test]
fn unwritable_path_surfaces_io_error() {
    let traj = Trajectory::empty(2, 2, 1);
    let err = export_csv(&traj, std::path::Path::new("/nonexistent/dir/out.csv")).unwrap_err();
    assert!(err.to_string().to_lowercase().contains("no such file"));
}
