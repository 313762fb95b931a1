//! Random normalized agent models and connected graphs for property tests.

use rand::Rng;

use crate::graphs::{Edge, WeightedGraph};
use crate::h2cert::ModalBlock;
use crate::matkit::Mat;
use crate::riccati::NoiseForm;
use crate::settings::NumericSettings;
use crate::synthesis::{synthesize, AgentModel, Design, DesignParams};

pub fn random_mat<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Mat {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Mat::from_vec(rows, cols, data).expect("sized")
}

/// Model satisfying the normalization identities by construction:
/// `E = [E0, 0]`, `D1 = [0, I]`, `C2 = [C20; 0]`, `D2 = [0; I]`.
pub fn random_normalized_model<R: Rng>(rng: &mut R, n: usize) -> AgentModel {
    let m = rng.gen_range(1..=2);
    let r = rng.gen_range(1..=2);
    let q0 = rng.gen_range(1..=2);
    let p0 = rng.gen_range(1..=2);
    let a = random_mat(rng, n, n, 1.0);
    let b = random_mat(rng, n, m, 1.0);
    let c1 = random_mat(rng, r, n, 1.0);
    let e = Mat::hstack(&[&random_mat(rng, n, q0, 1.0), &Mat::zeros(n, r)]);
    let d1 = Mat::hstack(&[&Mat::zeros(r, q0), &Mat::identity(r)]);
    let c2 = Mat::vstack(&[&random_mat(rng, p0, n, 1.0), &Mat::zeros(m, n)]);
    let d2 = Mat::vstack(&[&Mat::zeros(p0, m), &Mat::identity(m)]);
    AgentModel::new(a, b, c1, d1, c2, d2, e).expect("consistent dimensions")
}

/// Random spanning tree plus a few extra edges, weights in `[0.5, 2)`.
pub fn random_connected_graph<R: Rng>(rng: &mut R, nodes: usize) -> WeightedGraph {
    let mut edges = Vec::new();
    for j in 1..nodes {
        let i = rng.gen_range(0..j);
        edges.push(Edge {
            i,
            j,
            w: rng.gen_range(0.5..2.0),
        });
    }
    for i in 0..nodes {
        for j in i + 1..nodes {
            let present = edges.iter().any(|e| e.i == i && e.j == j);
            if !present && rng.gen_bool(0.3) {
                edges.push(Edge {
                    i,
                    j,
                    w: rng.gen_range(0.5..2.0),
                });
            }
        }
    }
    WeightedGraph::new(nodes, edges).expect("valid random graph")
}

pub struct RandomDesign {
    pub model: AgentModel,
    pub graph: WeightedGraph,
    pub design: Design,
}

/// Draws instances until one yields a feasible design (default noise form,
/// `c` auto, loose `gamma`) whose modal closed loops all decay faster than
/// `min_decay`. Returns `None` after `attempts` rejections.
pub fn random_feasible_design<R: Rng>(
    rng: &mut R,
    nodes: usize,
    n: usize,
    min_decay: f64,
    attempts: usize,
    tol: &NumericSettings,
) -> Option<RandomDesign> {
    for _ in 0..attempts {
        let model = random_normalized_model(rng, n);
        let graph = random_connected_graph(rng, nodes);
        let params = DesignParams {
            noise_form: NoiseForm::EEt,
            ..DesignParams::new(1e9)
        };
        let Ok(design) = synthesize(&model, &graph, &params, tol) else {
            continue;
        };
        let spectrum = graph.spectrum(tol).ok()?;
        let fast = spectrum.nonzero_modes().iter().all(|&l| {
            ModalBlock::new(&model, l, &design.gains).is_ok_and(|b| {
                let shifted = &b.abar + &Mat::identity(2 * n).scale(min_decay);
                crate::riccati::is_hurwitz(&shifted, tol)
            })
        });
        if fast {
            return Some(RandomDesign { model, graph, design });
        }
    }
    None
}
