//! A small bundled knowledge graph covering the generator's vocabulary.

use crate::graph::KnowledgeGraph;

/// Tab-separated `head relation tail` triples.
pub const TRIPLES: &str = include_str!("../data/demo_kg.tsv");

/// Node features: `node,female,male,neutral,occupation,strong,weak`.
pub const FEATURES: &str = include_str!("../data/demo_features.csv");

pub fn graph() -> KnowledgeGraph {
    KnowledgeGraph::from_sources(TRIPLES, Some(FEATURES)).expect("bundled graph is well formed")
}
