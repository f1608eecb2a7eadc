//! Graph convolution over a [`KnowledgeGraph`].
//!
//! One layer computes, for every node `v`,
//! `h'_v = σ( Σ_{u ∈ N(v)} (1 / c_vu) · h_u W )` with `N(v)` the undirected
//! neighbourhood including `v` and `c_vu = sqrt(deg(v) · deg(u))`.
//! Embeddings are rows, so a weight is stored `in_dim x out_dim`.

use alloc::rc::Rc;
use alloc::vec::Vec;

use rand::Rng;

use crate::graph::{GraphError, KnowledgeGraph, NodeId};
use crate::numeric::{NumericError, SparseRows, Tape, Var};
use crate::{math, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "linear" => Some(Activation::Linear),
            _ => None,
        }
    }

    fn apply(self, m: Matrix) -> Matrix {
        match self {
            Activation::Relu => m.relu(),
            Activation::Linear => m,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnLayerParams {
    /// `in_dim x out_dim`.
    pub weight: Matrix,
    pub activation: Activation,
}

/// One row per graph node, indexed by [`NodeId`].
#[derive(Clone, Debug, PartialEq)]
pub struct NodeEmbeddings(pub Matrix);

impl NodeEmbeddings {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn row(&self, node: NodeId) -> &[f64] {
        self.0.row(node.0)
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum GcnError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("node {u} is not a neighbour of node {v}")]
    NotNeighbor { v: usize, u: usize },
    #[error("embeddings have {found} rows for a graph of {nodes} nodes")]
    RowCount { nodes: usize, found: usize },
    #[error("layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: NumericError,
    },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// `c_vu = sqrt(deg(v) · deg(u))`, defined only for `u ∈ N(v)`.
pub fn norm_constant(g: &KnowledgeGraph, v: NodeId, u: NodeId) -> Result<f64, GcnError> {
    if !g.neighbors(v)?.contains(&u) {
        return Err(GcnError::NotNeighbor { v: v.0, u: u.0 });
    }
    Ok(math::sqrt((g.degree(v)? * g.degree(u)?) as f64))
}

/// The propagation operator with weights `1 / c_vu`, row `v`, column `u`.
pub fn propagation(g: &KnowledgeGraph) -> SparseRows {
    let degrees: Vec<f64> = (0..g.node_count())
        .map(|v| g.degree(NodeId(v)).unwrap_or(1) as f64)
        .collect();
    let rows = (0..g.node_count())
        .map(|v| {
            g.neighbors(NodeId(v))
                .unwrap_or_default()
                .into_iter()
                .map(|u| (u.0, 1.0 / math::sqrt(degrees[v] * degrees[u.0])))
                .collect()
        })
        .collect();
    SparseRows::new(g.node_count(), rows)
}

/// One graph convolution, evaluated neighbour by neighbour.
pub fn gcn_layer(
    h: &NodeEmbeddings,
    g: &KnowledgeGraph,
    p: &GcnLayerParams,
) -> Result<NodeEmbeddings, GcnError> {
    if h.0.rows() != g.node_count() {
        return Err(GcnError::RowCount {
            nodes: g.node_count(),
            found: h.0.rows(),
        });
    }
    let transformed = h.0.matmul(&p.weight)?;
    let out_dim = p.weight.cols();
    let mut out = Matrix::zeros(g.node_count(), out_dim);
    for v in 0..g.node_count() {
        let v = NodeId(v);
        for u in g.neighbors(v)? {
            let inv_c = 1.0 / norm_constant(g, v, u)?;
            for (c, x) in transformed.row(u.0).iter().enumerate() {
                let acc = out.get(v.0, c);
                out.set(v.0, c, acc + inv_c * x);
            }
        }
    }
    Ok(NodeEmbeddings(p.activation.apply(out)))
}

/// Stacks layers over the raw feature matrix; no layers returns the features.
pub fn encode(g: &KnowledgeGraph, layers: &[GcnLayerParams]) -> Result<NodeEmbeddings, GcnError> {
    let mut h = NodeEmbeddings(g.feature_matrix());
    for (i, layer) in layers.iter().enumerate() {
        h = gcn_layer(&h, g, layer).map_err(|e| match e {
            GcnError::Numeric(source) => GcnError::Layer { layer: i, source },
            other => other,
        })?;
    }
    Ok(h)
}

/// Records one layer on `tape`: `σ(P · (h W))`.
pub fn gcn_layer_on_tape(
    tape: &mut Tape,
    propagation: &Rc<SparseRows>,
    h: Var,
    weight: Var,
    activation: Activation,
) -> Result<Var, NumericError> {
    let hw = tape.matmul(h, weight)?;
    let agg = tape.sparse_left(Rc::clone(propagation), hw)?;
    match activation {
        Activation::Relu => tape.relu(agg),
        Activation::Linear => Ok(agg),
    }
}

/// Seeded Glorot-initialized layers through `dims`
/// (`dims[0]` is the feature dimension). Hidden layers use relu, the last
/// is linear.
pub fn init_layers<R: Rng>(dims: &[usize], rng: &mut R) -> Vec<GcnLayerParams> {
    let n = dims.len().saturating_sub(1);
    (0..n)
        .map(|i| GcnLayerParams {
            weight: crate::rng::glorot_uniform(dims[i], dims[i + 1], rng),
            activation: if i + 1 == n {
                Activation::Linear
            } else {
                Activation::Relu
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn layer(weight: Matrix, activation: Activation) -> GcnLayerParams {
        GcnLayerParams { weight, activation }
    }

    #[test]
    fn normalization_constants() {
        let mut g = KnowledgeGraph::new(0);
        let lone = g.add_node("lone");
        assert_eq!(norm_constant(&g, lone, lone).unwrap(), 1.0);

        g.add_triple("a", "r", "b");
        let (a, b) = (g.lookup("a").unwrap(), g.lookup("b").unwrap());
        assert_eq!(norm_constant(&g, a, b).unwrap(), 2.0);
        assert!(matches!(
            norm_constant(&g, a, lone),
            Err(GcnError::NotNeighbor { .. })
        ));

        let mut star = KnowledgeGraph::new(0);
        let k = 7;
        for i in 0..k {
            star.add_triple("hub", "r", &alloc::format!("leaf{i}"));
        }
        let hub = star.lookup("hub").unwrap();
        let leaf = star.lookup("leaf3").unwrap();
        let c = norm_constant(&star, hub, leaf).unwrap();
        assert!((c - (2.0 * (k as f64 + 1.0)).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn isolated_identity_layer_is_identity() {
        let mut g = KnowledgeGraph::new(2);
        for name in ["x", "y"] {
            g.add_node(name);
        }
        g.set_features(NodeId(0), vec![1.5, -2.0]).unwrap();
        g.set_features(NodeId(1), vec![0.25, 4.0]).unwrap();
        let h = NodeEmbeddings(g.feature_matrix());
        let out = gcn_layer(&h, &g, &layer(Matrix::identity(2), Activation::Linear)).unwrap();
        assert_eq!(out, h);
        let out = encode(&g, &[layer(Matrix::identity(2), Activation::Linear)]).unwrap();
        assert_eq!(out, h);
    }

    #[test]
    fn symmetric_pair_keeps_equal_features() {
        let mut g = KnowledgeGraph::new(3);
        g.add_triple("p", "r", "q");
        let f = vec![0.3, -1.0, 2.0];
        g.set_features(NodeId(0), f.clone()).unwrap();
        g.set_features(NodeId(1), f.clone()).unwrap();
        let out = encode(&g, &[layer(Matrix::identity(3), Activation::Linear)]).unwrap();
        for r in 0..2 {
            for (a, b) in out.0.row(r).iter().zip(&f) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_layers_return_features() {
        let g = KnowledgeGraph::from_sources("a\tr\tb\n", Some("node,f\na,3\n")).unwrap();
        assert_eq!(encode(&g, &[]).unwrap().0, g.feature_matrix());
    }

    #[test]
    fn dimension_mismatch() {
        let g = KnowledgeGraph::from_sources("a\tr\tb\n", Some("node,f\na,3\n")).unwrap();
        let err = encode(&g, &[layer(Matrix::zeros(2, 2), Activation::Linear)]).unwrap_err();
        assert!(matches!(err, GcnError::Layer { layer: 0, .. }), "{err:?}");
    }

    #[test]
    fn tape_layer_matches_direct_layer() {
        let g = KnowledgeGraph::from_sources(
            "a\tr\tb\nb\tr\tc\nc\tr\ta\nd\tr\ta\n",
            Some("node,f1,f2\na,1,0\nb,0.5,-1\nc,2,2\nd,-3,1\n"),
        )
        .unwrap();
        let w = Matrix::from_vec(2, 3, vec![0.1, -0.7, 0.4, 1.2, 0.3, -0.2]);
        let direct = gcn_layer(&NodeEmbeddings(g.feature_matrix()), &g, &layer(w.clone(), Activation::Relu)).unwrap();
        let mut tape = Tape::new();
        let h = tape.constant(g.feature_matrix());
        let wv = tape.param(w);
        let out = gcn_layer_on_tape(&mut tape, &Rc::new(propagation(&g)), h, wv, Activation::Relu).unwrap();
        assert!(tape.value(out).max_abs_diff(&direct.0) < 1e-14);
    }
}
