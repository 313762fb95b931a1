//! Undirected weighted communication graphs: Laplacian, incidence/weight
//! factorization `L = R W R^T`, spectrum and connectivity.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matkit::{sym_eig, Mat, MatError};
use crate::settings::NumericSettings;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge ({i}, {j}) references a node outside 0..{nodes}")]
    NodeOutOfRange { i: usize, j: usize, nodes: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("edge ({i}, {j}) has non-positive or non-finite weight {w}")]
    BadWeight { i: usize, j: usize, w: f64 },
    #[error("edge ({i}, {j}) listed twice")]
    DuplicateEdge { i: usize, j: usize },
    #[error(transparent)]
    Matrix(#[from] MatError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    nodes: usize,
    edges: Vec<(usize, usize, f64)>,
}

/// Simple undirected graph with positive edge weights; each unordered pair at
/// most once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphFile", into = "GraphFile")]
pub struct WeightedGraph {
    nodes: usize,
    edges: Vec<Edge>,
}

impl TryFrom<GraphFile> for WeightedGraph {
    type Error = GraphError;

    fn try_from(f: GraphFile) -> Result<Self, GraphError> {
        WeightedGraph::new(f.nodes, f.edges.into_iter().map(|(i, j, w)| Edge { i, j, w }).collect())
    }
}

impl From<WeightedGraph> for GraphFile {
    fn from(g: WeightedGraph) -> Self {
        GraphFile {
            nodes: g.nodes,
            edges: g.edges.iter().map(|e| (e.i, e.j, e.w)).collect(),
        }
    }
}

impl WeightedGraph {
    pub fn new(nodes: usize, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut seen = BTreeSet::new();
        for e in &edges {
            if e.i >= nodes || e.j >= nodes {
                return Err(GraphError::NodeOutOfRange { i: e.i, j: e.j, nodes });
            }
            if e.i == e.j {
                return Err(GraphError::SelfLoop(e.i));
            }
            if !(e.w > 0.0 && e.w.is_finite()) {
                return Err(GraphError::BadWeight { i: e.i, j: e.j, w: e.w });
            }
            if !seen.insert((e.i.min(e.j), e.i.max(e.j))) {
                return Err(GraphError::DuplicateEdge { i: e.i, j: e.j });
            }
        }
        Ok(Self { nodes, edges })
    }

    /// Unit-weight cycle `0 - 1 - ... - (n-1) - 0`.
    pub fn cycle(n: usize) -> Self {
        let edges = match n {
            0 | 1 => vec![],
            2 => vec![Edge { i: 0, j: 1, w: 1.0 }],
            _ => (0..n)
                .map(|k| Edge {
                    i: k,
                    j: (k + 1) % n,
                    w: 1.0,
                })
                .collect(),
        };
        Self::new(n, edges).expect("cycle is a valid graph")
    }

    pub fn path(n: usize, w: f64) -> Result<Self, GraphError> {
        Self::new(n, (1..n).map(|k| Edge { i: k - 1, j: k, w }).collect())
    }

    pub fn complete(n: usize) -> Self {
        let mut edges = vec![];
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push(Edge { i, j, w: 1.0 });
            }
        }
        Self::new(n, edges).expect("complete graph is valid")
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Symmetric adjacency matrix `a_ij`.
    pub fn adjacency(&self) -> Mat {
        let mut a = Mat::zeros(self.nodes, self.nodes);
        for e in &self.edges {
            a[(e.i, e.j)] = e.w;
            a[(e.j, e.i)] = e.w;
        }
        a
    }

    /// `(neighbour, weight)` lists per node.
    pub fn neighbours(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![vec![]; self.nodes];
        for e in &self.edges {
            adj[e.i].push((e.j, e.w));
            adj[e.j].push((e.i, e.w));
        }
        adj
    }

    /// `L = D - A`.
    pub fn laplacian(&self) -> Mat {
        let mut l = Mat::zeros(self.nodes, self.nodes);
        for e in &self.edges {
            l[(e.i, e.j)] -= e.w;
            l[(e.j, e.i)] -= e.w;
            l[(e.i, e.i)] += e.w;
            l[(e.j, e.j)] += e.w;
        }
        l
    }

    /// Incidence matrix `R` (N x K) and diagonal weights `W` (K x K), one
    /// column per edge in listing order, `+1` at the smaller node index.
    pub fn incidence(&self) -> (Mat, Mat) {
        let k = self.edges.len();
        let mut r = Mat::zeros(self.nodes, k);
        let mut w = Mat::zeros(k, k);
        for (c, e) in self.edges.iter().enumerate() {
            r[(e.i.min(e.j), c)] = 1.0;
            r[(e.i.max(e.j), c)] = -1.0;
            w[(c, c)] = e.w;
        }
        (r, w)
    }

    /// `W^{1/2} R^T` (K x N), the factor mapping node signals to weighted
    /// edge differences.
    pub fn weighted_difference_operator(&self) -> Mat {
        let (r, w) = self.incidence();
        let mut d = r.transpose();
        for (c, wc) in w.diag().into_iter().enumerate() {
            let s = wc.sqrt();
            for j in 0..self.nodes {
                d[(c, j)] *= s;
            }
        }
        d
    }

    /// Connected components by breadth-first search.
    pub fn component_count(&self) -> usize {
        let adj = self.neighbours();
        let mut seen = vec![false; self.nodes];
        let mut count = 0;
        for start in 0..self.nodes {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        count
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() <= 1
    }

    pub fn spectrum(&self, tol: &NumericSettings) -> Result<GraphSpectrum, GraphError> {
        let laplacian = self.laplacian();
        let (incidence, weights) = self.incidence();
        let eig = sym_eig(&laplacian, tol)?;
        let mut lambda = eig.values;
        for v in lambda.iter_mut() {
            if v.abs() <= 1e-10 {
                *v = v.max(0.0);
            }
        }
        if let Some(first) = lambda.first_mut() {
            *first = 0.0;
        }
        Ok(GraphSpectrum {
            laplacian,
            incidence,
            weights,
            basis: eig.vectors,
            lambda,
        })
    }
}

/// Laplacian together with its incidence factorization and orthogonal
/// diagonalization `U^T L U = diag(lambda)`.
#[derive(Clone, Debug)]
pub struct GraphSpectrum {
    pub laplacian: Mat,
    pub incidence: Mat,
    pub weights: Mat,
    pub basis: Mat,
    /// Ascending, `lambda[0] == 0` exactly.
    pub lambda: Vec<f64>,
}

impl GraphSpectrum {
    pub fn node_count(&self) -> usize {
        self.lambda.len()
    }

    /// Smallest nonzero eigenvalue candidate `lambda_2` (0 for a single node).
    pub fn lambda2(&self) -> f64 {
        self.lambda.get(1).copied().unwrap_or(0.0)
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda.last().copied().unwrap_or(0.0)
    }

    /// Eigenvalues `lambda_2 ..= lambda_N` as a multiset.
    pub fn nonzero_modes(&self) -> &[f64] {
        self.lambda.get(1..).unwrap_or(&[])
    }

    pub fn connected(&self) -> bool {
        self.node_count() <= 1 || self.lambda2() > 1e-9
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tol() -> NumericSettings {
        NumericSettings::default()
    }

    /// Random simple graph; `dyadic` draws weights from multiples of 1/64 so
    /// that Laplacian row sums are exact in floating point.
    fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64, dyadic: bool) -> WeightedGraph {
        let mut edges = vec![];
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(p) {
                    let (a, b) = if rng.gen_bool(0.5) { (i, j) } else { (j, i) };
                    let w = if dyadic {
                        rng.gen_range(1..=192) as f64 / 64.0
                    } else {
                        rng.gen_range(0.1..3.0)
                    };
                    edges.push(Edge { i: a, j: b, w });
                }
            }
        }
        WeightedGraph::new(n, edges).unwrap()
    }

    #[test]
    fn laplacian_fixtures() {
        let p2 = WeightedGraph::path(2, 1.0).unwrap();
        assert_eq!(p2.laplacian(), Mat::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]).unwrap());

        let c6 = WeightedGraph::cycle(6).laplacian();
        for i in 0..6 {
            for j in 0..6 {
                let d = (i as i64 - j as i64).rem_euclid(6);
                let want = match d {
                    0 => 2.0,
                    1 | 5 => -1.0,
                    _ => 0.0,
                };
                assert_eq!(c6[(i, j)], want);
            }
        }

        assert_eq!(WeightedGraph::new(1, vec![]).unwrap().laplacian(), Mat::zeros(1, 1));
    }

    #[test]
    fn incidence_fixtures() {
        let g = WeightedGraph::path(2, 3.0).unwrap();
        let (r, w) = g.incidence();
        assert_eq!(r, Mat::from_rows(&[[1.0], [-1.0]]).unwrap());
        assert_eq!(w, Mat::from_rows(&[[3.0]]).unwrap());
        assert_eq!(&(&r * &w) * &r.transpose(), g.laplacian());

        let c6 = WeightedGraph::cycle(6);
        let (r, w) = c6.incidence();
        assert_eq!(r.shape(), (6, 6));
        // Direct multiplication oracle.
        let mut rwr = Mat::zeros(6, 6);
        for i in 0..6 {
            for j in 0..6 {
                rwr[(i, j)] = (0..6).map(|k| r[(i, k)] * w[(k, k)] * r[(j, k)]).sum();
            }
        }
        assert_eq!(rwr, c6.laplacian());

        let empty = WeightedGraph::new(3, vec![]).unwrap();
        let (r, w) = empty.incidence();
        assert_eq!(r.shape(), (3, 0));
        assert_eq!(w.shape(), (0, 0));
        assert_eq!(empty.laplacian(), Mat::zeros(3, 3));
    }

    #[test]
    fn spectrum_fixtures() {
        let s = WeightedGraph::cycle(6).spectrum(&tol()).unwrap();
        assert!((s.lambda2() - 1.0).abs() < 1e-10);
        assert!((s.lambda_max() - 4.0).abs() < 1e-10);
        assert_eq!(s.lambda[0], 0.0);

        let k3 = WeightedGraph::complete(3).spectrum(&tol()).unwrap();
        for (got, want) in k3.lambda.iter().zip([0.0, 3.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }

        let p2 = WeightedGraph::path(2, 1.0).unwrap().spectrum(&tol()).unwrap();
        assert_eq!(p2.lambda[0], 0.0);
        assert!((p2.lambda[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn connectivity() {
        assert!(WeightedGraph::cycle(6).is_connected());
        let two = WeightedGraph::new(4, vec![Edge { i: 0, j: 1, w: 1.0 }, Edge { i: 2, j: 3, w: 1.0 }]).unwrap();
        assert!(!two.is_connected());
        assert!(!two.spectrum(&tol()).unwrap().connected());
        assert!(WeightedGraph::new(1, vec![]).unwrap().is_connected());
    }

    #[test]
    fn invalid_graphs_rejected() {
        let e = |i, j, w| Edge { i, j, w };
        assert!(matches!(
            WeightedGraph::new(2, vec![e(0, 2, 1.0)]),
            Err(GraphError::NodeOutOfRange { .. })
        ));
        assert!(matches!(
            WeightedGraph::new(2, vec![e(1, 1, 1.0)]),
            Err(GraphError::SelfLoop(1))
        ));
        assert!(matches!(
            WeightedGraph::new(2, vec![e(0, 1, 0.0)]),
            Err(GraphError::BadWeight { .. })
        ));
        assert!(matches!(
            WeightedGraph::new(2, vec![e(0, 1, 1.0), e(1, 0, 2.0)]),
            Err(GraphError::DuplicateEdge { .. })
        ));
        assert!(serde_json::from_str::<WeightedGraph>(r#"{"nodes": 2, "edges": [[0, 0, 1]]}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let g: WeightedGraph = serde_json::from_str(r#"{"nodes": 3, "edges": [[0, 1, 1.5], [1, 2, 2]]}"#).unwrap();
        assert_eq!(g.edge_count(), 2);
        let back: WeightedGraph = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn laplacian_identities(seed in any::<u64>(), n in 1usize..=12, p in 0.1f64..0.9, dyadic: bool) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_graph(&mut rng, n, p, dyadic);
            let l = g.laplacian();
            let (r, w) = g.incidence();
            let ones = vec![1.0; n];
            if dyadic {
                prop_assert!(l.matvec(&ones).iter().all(|&v| v == 0.0));
            } else {
                prop_assert!(l.matvec(&ones).iter().all(|&v| v.abs() <= 1e-14));
            }
            prop_assert!(r.transpose().matvec(&ones).iter().all(|&v| v == 0.0));
            prop_assert!((&(&(&r * &w) * &r.transpose()) - &l).max_abs() <= 1e-12);

            let s = g.spectrum(&tol()).unwrap();
            prop_assert!(s.lambda.iter().all(|&v| v >= 0.0));
            let zeros = s.lambda.iter().filter(|&&v| v <= 1e-9).count();
            prop_assert_eq!(zeros, g.component_count());
            prop_assert_eq!(s.connected(), g.is_connected());
            let diag = &(&s.basis.transpose() * &l) * &s.basis;
            prop_assert!((&diag - &Mat::from_diag(&s.lambda)).norm_fro() <= 1e-9 * l.norm_fro().max(1.0));
        }
    }
}
