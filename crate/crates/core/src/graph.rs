//! Entity/relation triple store with adjacency and surface-form linking.
//!
//! Nodes are keyed by their lowercased, whitespace-normalized surface form;
//! the first spelling seen is kept as the canonical form. Edges keep their
//! relation label but adjacency is undirected and every node neighbours
//! itself.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::Matrix;

/// Index of a node in its graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    /// Canonical surface form.
    pub name: String,
    pub features: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub head: NodeId,
    pub relation: String,
    pub tail: NodeId,
}

/// A linked span `tokens[start..end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct EntityMention {
    pub node: NodeId,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: feature row for undeclared node {name:?}")]
    DanglingFeature { line: usize, name: String },
    #[error("unknown node id {0}")]
    UnknownNode(usize),
    #[error("feature vector of length {found} for {name:?}, graph dimension is {expected}")]
    FeatureDim {
        name: String,
        expected: usize,
        found: usize,
    },
}

/// Lowercases and collapses whitespace.
pub fn normalize_surface(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, word) in text.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&word.to_lowercase());
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnowledgeGraph {
    nodes: Vec<Node>,
    edges: BTreeSet<Edge>,
    surface_index: BTreeMap<String, NodeId>,
    adjacency: Vec<BTreeSet<NodeId>>,
    feature_dim: usize,
    longest_surface: usize,
}

impl KnowledgeGraph {
    /// An empty graph whose nodes will carry `feature_dim` features.
    pub fn new(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            ..Self::default()
        }
    }

    /// Parses a tab-separated triple source and an optional CSV feature
    /// source (`node,f1..fd` header). Nodes without a feature row get zeros.
    pub fn from_sources(triples: &str, features: Option<&str>) -> Result<Self, GraphError> {
        let parsed_features = features.map(parse_features).transpose()?;
        let dim = parsed_features.as_ref().map_or(0, |(d, _)| *d);
        let mut g = Self::new(dim);

        for (i, raw) in triples.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(GraphError::Malformed {
                    line: i + 1,
                    reason: alloc::format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            if fields.iter().any(|f| f.trim().is_empty()) {
                return Err(GraphError::Malformed {
                    line: i + 1,
                    reason: "empty field".to_string(),
                });
            }
            g.add_triple(fields[0].trim(), fields[1].trim(), fields[2].trim());
        }

        if let Some((_, rows)) = parsed_features {
            for (line, name, values) in rows {
                let id = g.lookup(&name).ok_or(GraphError::DanglingFeature {
                    line,
                    name: name.clone(),
                })?;
                g.nodes[id.0].features = values;
            }
        }
        Ok(g)
    }

    /// Returns the id for `name`, creating a zero-feature node if needed.
    pub fn add_node(&mut self, name: &str) -> NodeId {
        let key = normalize_surface(name);
        if let Some(&id) = self.surface_index.get(&key) {
            return id;
        }
        let id = NodeId(self.nodes.len());
        self.longest_surface = self.longest_surface.max(key.split(' ').count());
        self.surface_index.insert(key, id);
        self.nodes.push(Node {
            name: name.trim().to_string(),
            features: alloc::vec![0.0; self.feature_dim],
        });
        self.adjacency.push(BTreeSet::new());
        id
    }

    /// Adds `(head, relation, tail)`; duplicates collapse.
    pub fn add_triple(&mut self, head: &str, relation: &str, tail: &str) {
        let h = self.add_node(head);
        let t = self.add_node(tail);
        self.edges.insert(Edge {
            head: h,
            relation: relation.to_string(),
            tail: t,
        });
        if h != t {
            self.adjacency[h.0].insert(t);
            self.adjacency[t.0].insert(h);
        }
    }

    pub fn set_features(&mut self, node: NodeId, features: Vec<f64>) -> Result<(), GraphError> {
        let n = self.nodes.get_mut(node.0).ok_or(GraphError::UnknownNode(node.0))?;
        if features.len() != self.feature_dim {
            return Err(GraphError::FeatureDim {
                name: n.name.clone(),
                expected: self.feature_dim,
                found: features.len(),
            });
        }
        n.features = features;
        Ok(())
    }

    /// Replaces all features with a one-hot encoding of the node index.
    pub fn with_one_hot_features(mut self) -> Self {
        let n = self.nodes.len();
        self.feature_dim = n;
        for (i, node) in self.nodes.iter_mut().enumerate() {
            node.features = alloc::vec![0.0; n];
            node.features[i] = 1.0;
        }
        self
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, GraphError> {
        self.nodes.get(id.0).ok_or(GraphError::UnknownNode(id.0))
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    /// Node for a surface form, case- and spacing-insensitive.
    pub fn lookup(&self, surface: &str) -> Option<NodeId> {
        self.surface_index.get(&normalize_surface(surface)).copied()
    }

    /// Normalized surface forms in sorted order.
    pub fn surface_forms(&self) -> impl Iterator<Item = &str> {
        self.surface_index.keys().map(String::as_str)
    }

    /// Undirected neighbourhood of `v`, including `v` itself.
    pub fn neighbors(&self, v: NodeId) -> Result<BTreeSet<NodeId>, GraphError> {
        let mut out = self
            .adjacency
            .get(v.0)
            .ok_or(GraphError::UnknownNode(v.0))?
            .clone();
        out.insert(v);
        Ok(out)
    }

    /// Self-loop-inclusive degree.
    pub fn degree(&self, v: NodeId) -> Result<usize, GraphError> {
        self.adjacency
            .get(v.0)
            .map(|a| a.len() + 1)
            .ok_or(GraphError::UnknownNode(v.0))
    }

    /// Node features stacked row by row.
    pub fn feature_matrix(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.nodes.len() * self.feature_dim);
        for n in &self.nodes {
            data.extend_from_slice(&n.features);
        }
        Matrix::from_vec(self.nodes.len(), self.feature_dim, data)
    }

    pub(crate) fn longest_surface(&self) -> usize {
        self.longest_surface
    }
}

type FeatureRows = (usize, Vec<(usize, String, Vec<f64>)>);

fn parse_features(source: &str) -> Result<FeatureRows, GraphError> {
    let mut lines = source
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let Some((_, header)) = lines.next() else {
        return Ok((0, Vec::new()));
    };
    let width = header.split(',').count();
    if width < 1 {
        return Err(GraphError::Malformed {
            line: 1,
            reason: "empty feature header".to_string(),
        });
    }
    let dim = width - 1;
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, text) in lines {
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != width {
            return Err(GraphError::Malformed {
                line,
                reason: alloc::format!("expected {width} fields, found {}", fields.len()),
            });
        }
        let name = fields[0].trim().to_string();
        if !seen.insert(normalize_surface(&name)) {
            return Err(GraphError::Malformed {
                line,
                reason: alloc::format!("duplicate feature row for {name:?}"),
            });
        }
        let mut values = Vec::with_capacity(dim);
        for (col, f) in fields[1..].iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|_| GraphError::Malformed {
                line,
                reason: alloc::format!("column {}: not a number: {:?}", col + 2, f.trim()),
            })?;
            if !v.is_finite() {
                return Err(GraphError::Malformed {
                    line,
                    reason: alloc::format!("column {}: non-finite value", col + 2),
                });
            }
            values.push(v);
        }
        rows.push((line, name, values));
    }
    Ok((dim, rows))
}

/// Greedy left-to-right longest match of token spans against surface forms.
pub fn link_entities<S: AsRef<str>>(tokens: &[S], graph: &KnowledgeGraph) -> Vec<EntityMention> {
    let lowered: Vec<String> = tokens.iter().map(|t| t.as_ref().to_lowercase()).collect();
    let longest = graph.longest_surface();
    let mut mentions = Vec::new();
    let mut start = 0;
    while start < lowered.len() {
        let max_len = longest.min(lowered.len() - start);
        let mut hit = None;
        for len in (1..=max_len).rev() {
            let key = lowered[start..start + len].join(" ");
            if let Some(&node) = graph.surface_index.get(&key) {
                hit = Some((node, len));
                break;
            }
        }
        match hit {
            Some((node, len)) => {
                mentions.push(EntityMention {
                    node,
                    start,
                    end: start + len,
                });
                start += len;
            }
            None => start += 1,
        }
    }
    mentions
}
