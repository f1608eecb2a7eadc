//! The predictive model.
//!
//! A record's text is mean-pooled over a learned token table (`e_llm`). The
//! text vector queries the graph embeddings of the record's linked entities
//! through scaled dot-product attention (`e_kg`). The two are concatenated
//! and a linear head produces two-class probabilities.
//!
//! Every computation exists twice: as plain matrix code used for evaluation
//! and as a tape recording used for training. Tests hold the two together.

use alloc::collections::BTreeMap;
use alloc::rc::Rc;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;

use crate::data::{Dataset, Payload, PayloadKind, Record};
use crate::gcn::{self, GcnError, GcnLayerParams, NodeEmbeddings};
use crate::graph::{EntityMention, KnowledgeGraph};
use crate::numeric::{NumericError, SparseRows, Tape, Var};
use crate::{math, rng, Matrix};

/// Token id reserved for out-of-vocabulary tokens.
pub const UNKNOWN_TOKEN: &str = "<unk>";

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Gcn(#[from] GcnError),
    #[error("key dimension must be positive")]
    ZeroKeyDim,
    #[error("attention: {0}")]
    AttentionShape(String),
    #[error("record {id:?}: {reason}")]
    Payload { id: String, reason: String },
    #[error("record {id:?} mentions node {node} but only {nodes} embeddings exist")]
    Mention { id: String, node: usize, nodes: usize },
    #[error("head count {heads} does not divide projection width {width}")]
    Heads { heads: usize, width: usize },
}

/// Token-to-row map; row 0 is [`UNKNOWN_TOKEN`].
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Builds from explicit tokens, prepending [`UNKNOWN_TOKEN`] when absent.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut v = Self {
            tokens: Vec::new(),
            index: BTreeMap::new(),
        };
        v.insert(UNKNOWN_TOKEN.to_string());
        for t in tokens {
            v.insert(t);
        }
        v
    }

    /// Sorted distinct tokens of a text dataset.
    pub fn from_dataset(data: &Dataset) -> Self {
        let mut all = alloc::collections::BTreeSet::new();
        for r in data {
            if let Payload::Tokens(t) = &r.payload {
                all.extend(t.iter().cloned());
            }
        }
        Self::from_tokens(all)
    }

    fn insert(&mut self, t: String) {
        if !self.index.contains_key(&t) {
            self.index.insert(t.clone(), self.tokens.len());
            self.tokens.push(t);
        }
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Maps a payload to `e_llm`.
#[derive(Clone, Debug, PartialEq)]
pub enum TextEncoder {
    /// Mean of token rows; `table` is `vocab.len() x text_dim`.
    Embedding { vocab: Vocabulary, table: Matrix },
    /// Linear map of a numeric feature vector; `features x text_dim`.
    Projection { weight: Matrix },
}

impl TextEncoder {
    pub fn output_dim(&self) -> usize {
        match self {
            TextEncoder::Embedding { table, .. } => table.cols(),
            TextEncoder::Projection { weight } => weight.cols(),
        }
    }
}

/// Architecture knobs.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub text_dim: usize,
    /// Output widths of successive graph layers.
    pub gcn_dims: Vec<usize>,
    /// Per-head query/key width.
    pub key_dim: usize,
    /// Per-head value width.
    pub value_dim: usize,
    pub heads: usize,
    /// When false, entity mentions are ignored and `e_kg` is all zeros.
    pub use_kg: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            text_dim: 16,
            gcn_dims: alloc::vec![16, 8],
            key_dim: 8,
            value_dim: 8,
            heads: 1,
            use_kg: true,
        }
    }
}

/// Primary-model parameters θ.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub encoder: TextEncoder,
    pub gcn: Vec<GcnLayerParams>,
    /// `text_dim x heads·key_dim`.
    pub w_q: Matrix,
    /// `kg_dim x heads·key_dim`.
    pub w_k: Matrix,
    /// `kg_dim x heads·value_dim`.
    pub w_v: Matrix,
    pub heads: usize,
    /// `fused_dim x 2`.
    pub classifier: Matrix,
    /// `1 x 2`.
    pub classifier_bias: Matrix,
    pub use_kg: bool,
}

impl ModelParams {
    /// Glorot-initialized parameters for `data` over `graph`.
    pub fn init<R: Rng>(
        config: &ModelConfig,
        data: &Dataset,
        graph: &KnowledgeGraph,
        rng: &mut R,
    ) -> Self {
        let encoder = match (data.kind(), data.feature_width()) {
            (Some(PayloadKind::Tabular), Some(width)) => TextEncoder::Projection {
                weight: rng::glorot_uniform(width, config.text_dim, rng),
            },
            _ => {
                let vocab = Vocabulary::from_dataset(data);
                let table = rng::glorot_uniform(vocab.len(), config.text_dim, rng);
                TextEncoder::Embedding { vocab, table }
            }
        };
        let mut dims = alloc::vec![graph.feature_dim()];
        dims.extend_from_slice(&config.gcn_dims);
        let gcn = gcn::init_layers(&dims, rng);
        let kg_dim = *dims.last().unwrap_or(&0);
        let heads = config.heads.max(1);
        let w_q = rng::glorot_uniform(config.text_dim, heads * config.key_dim, rng);
        let w_k = rng::glorot_uniform(kg_dim, heads * config.key_dim, rng);
        let w_v = rng::glorot_uniform(kg_dim, heads * config.value_dim, rng);
        let fused = config.text_dim + heads * config.value_dim;
        Self {
            encoder,
            gcn,
            w_q,
            w_k,
            w_v,
            heads,
            classifier: rng::glorot_uniform(fused, 2, rng),
            classifier_bias: Matrix::zeros(1, 2),
            use_kg: config.use_kg,
        }
    }

    pub fn text_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn kg_dim(&self) -> usize {
        self.w_v.cols()
    }

    pub fn fused_dim(&self) -> usize {
        self.text_dim() + self.kg_dim()
    }

    fn head_widths(&self) -> Result<(usize, usize), ModelError> {
        let h = self.heads.max(1);
        for width in [self.w_q.cols(), self.w_v.cols()] {
            if width % h != 0 {
                return Err(ModelError::Heads { heads: h, width });
            }
        }
        Ok((self.w_q.cols() / h, self.w_v.cols() / h))
    }

    /// Every parameter matrix with a stable name, in a fixed order.
    pub fn named_matrices(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        match &self.encoder {
            TextEncoder::Embedding { table, .. } => out.push(("token_embeddings".to_string(), table)),
            TextEncoder::Projection { weight } => out.push(("feature_projection".to_string(), weight)),
        }
        for (i, l) in self.gcn.iter().enumerate() {
            out.push((alloc::format!("gcn.{i}"), &l.weight));
        }
        out.push(("w_q".into(), &self.w_q));
        out.push(("w_k".into(), &self.w_k));
        out.push(("w_v".into(), &self.w_v));
        out.push(("classifier".into(), &self.classifier));
        out.push(("classifier_bias".into(), &self.classifier_bias));
        out
    }

    /// Mutable view in the order of [`ModelParams::named_matrices`].
    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::new();
        match &mut self.encoder {
            TextEncoder::Embedding { table, .. } => out.push(table),
            TextEncoder::Projection { weight } => out.push(weight),
        }
        for l in &mut self.gcn {
            out.push(&mut l.weight);
        }
        out.push(&mut self.w_q);
        out.push(&mut self.w_k);
        out.push(&mut self.w_v);
        out.push(&mut self.classifier);
        out.push(&mut self.classifier_bias);
        out
    }
}

/// `E_LLM`, `E_KG` and their concatenation.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedEmbedding {
    pub e_llm: Vec<f64>,
    pub e_kg: Vec<f64>,
    pub e_integrated: Vec<f64>,
}

impl FusedEmbedding {
    /// Recovers `(e_llm, e_kg)` from the integrated vector.
    pub fn split(&self) -> (&[f64], &[f64]) {
        self.e_integrated.split_at(self.e_llm.len())
    }
}

/// Two-class output. The label is 1 only when its probability is strictly
/// larger; ties go to 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub probabilities: [f64; 2],
    pub label: bool,
}

impl Prediction {
    pub fn from_probabilities(probabilities: [f64; 2]) -> Self {
        Self {
            probabilities,
            label: probabilities[1] > probabilities[0],
        }
    }
}

/// `softmax(Q Kᵀ / sqrt(d_k)) V`.
pub fn attention(q: &Matrix, k: &Matrix, v: &Matrix, d_k: usize) -> Result<Matrix, ModelError> {
    if d_k == 0 {
        return Err(ModelError::ZeroKeyDim);
    }
    if q.cols() != d_k || k.cols() != d_k || k.rows() != v.rows() {
        return Err(ModelError::AttentionShape(alloc::format!(
            "q {}x{}, k {}x{}, v {}x{}, d_k {d_k}",
            q.rows(),
            q.cols(),
            k.rows(),
            k.cols(),
            v.rows(),
            v.cols()
        )));
    }
    let scores = q.matmul(&k.transpose())?.scale(1.0 / math::sqrt(d_k as f64));
    Ok(scores.softmax_rows().matmul(v)?)
}

/// Mean of token embeddings; the zero vector for no tokens.
pub fn text_encode<S: AsRef<str>>(tokens: &[S], params: &ModelParams) -> Result<Vec<f64>, ModelError> {
    match &params.encoder {
        TextEncoder::Embedding { vocab, table } => {
            let mut out = alloc::vec![0.0; table.cols()];
            if tokens.is_empty() {
                return Ok(out);
            }
            for t in tokens {
                for (o, x) in out.iter_mut().zip(table.row(vocab.id(t.as_ref()))) {
                    *o += x;
                }
            }
            let n = tokens.len() as f64;
            out.iter_mut().for_each(|x| *x /= n);
            Ok(out)
        }
        TextEncoder::Projection { .. } => Err(ModelError::Payload {
            id: String::new(),
            reason: "text given to a feature-projection model".into(),
        }),
    }
}

fn encode_payload(record: &Record, params: &ModelParams) -> Result<Vec<f64>, ModelError> {
    let fail = |reason: &str| ModelError::Payload {
        id: record.id.clone(),
        reason: reason.into(),
    };
    match (&record.payload, &params.encoder) {
        (Payload::Tokens(t), TextEncoder::Embedding { .. }) => text_encode(t, params),
        (Payload::Features(f), TextEncoder::Projection { weight }) => {
            if f.len() != weight.rows() {
                return Err(fail("feature width does not match the model"));
            }
            Ok(Matrix::row_vector(f).matmul(weight)?.into_data())
        }
        (Payload::Tokens(_), _) => Err(fail("text given to a feature-projection model")),
        (Payload::Features(_), _) => Err(fail("features given to a text model")),
    }
}

/// Attention-pooled entity summary queried by `e_llm`; zeros with no
/// mentions or when the model ignores the graph.
pub fn kg_pool(
    mentions: &[EntityMention],
    nodes: &NodeEmbeddings,
    e_llm: &[f64],
    params: &ModelParams,
) -> Result<Vec<f64>, ModelError> {
    if mentions.is_empty() || !params.use_kg {
        return Ok(alloc::vec![0.0; params.kg_dim()]);
    }
    let ids: Vec<usize> = mentions.iter().map(|m| m.node.0).collect();
    let entities = nodes.matrix().select_rows(&ids)?;
    let q = Matrix::row_vector(e_llm).matmul(&params.w_q)?;
    let k = entities.matmul(&params.w_k)?;
    let v = entities.matmul(&params.w_v)?;
    let (dk, dv) = params.head_widths()?;
    let mut out = Vec::with_capacity(params.kg_dim());
    for h in 0..params.heads.max(1) {
        let head = attention(
            &q.slice_cols(h * dk, (h + 1) * dk)?,
            &k.slice_cols(h * dk, (h + 1) * dk)?,
            &v.slice_cols(h * dv, (h + 1) * dv)?,
            dk,
        )?;
        out.extend_from_slice(head.data());
    }
    Ok(out)
}

/// `e_llm ⊕ e_kg`.
pub fn fuse(e_llm: &[f64], e_kg: &[f64]) -> FusedEmbedding {
    let mut e_integrated = Vec::with_capacity(e_llm.len() + e_kg.len());
    e_integrated.extend_from_slice(e_llm);
    e_integrated.extend_from_slice(e_kg);
    FusedEmbedding {
        e_llm: e_llm.to_vec(),
        e_kg: e_kg.to_vec(),
        e_integrated,
    }
}

/// Graph embeddings under the model's layers.
pub fn node_embeddings(graph: &KnowledgeGraph, params: &ModelParams) -> Result<NodeEmbeddings, ModelError> {
    Ok(gcn::encode(graph, &params.gcn)?)
}

/// Full prediction for one record with precomputed mentions.
pub fn forward(
    record: &Record,
    nodes: &NodeEmbeddings,
    params: &ModelParams,
) -> Result<(Prediction, FusedEmbedding), ModelError> {
    check_mentions(record, nodes.matrix().rows(), params)?;
    let e_llm = encode_payload(record, params)?;
    let e_kg = kg_pool(&record.mentions, nodes, &e_llm, params)?;
    let fused = fuse(&e_llm, &e_kg);
    let logits = Matrix::row_vector(&fused.e_integrated)
        .matmul(&params.classifier)?
        .add_row(&params.classifier_bias)?;
    let p = logits.softmax_rows();
    Ok((Prediction::from_probabilities([p.get(0, 0), p.get(0, 1)]), fused))
}

fn check_mentions(record: &Record, nodes: usize, params: &ModelParams) -> Result<(), ModelError> {
    if !params.use_kg {
        return Ok(());
    }
    match record.mentions.iter().find(|m| m.node.0 >= nodes) {
        Some(m) => Err(ModelError::Mention {
            id: record.id.clone(),
            node: m.node.0,
            nodes,
        }),
        None => Ok(()),
    }
}

/// Model parameters recorded on a tape.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub encoder: Var,
    pub gcn: Vec<Var>,
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub classifier: Var,
    pub classifier_bias: Var,
}

impl BoundParams {
    /// Vars in the order of [`ModelParams::named_matrices`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = alloc::vec![self.encoder];
        out.extend_from_slice(&self.gcn);
        out.extend([self.w_q, self.w_k, self.w_v, self.classifier, self.classifier_bias]);
        out
    }
}

/// Records every parameter as a trainable leaf.
pub fn bind(tape: &mut Tape, params: &ModelParams) -> BoundParams {
    let encoder = match &params.encoder {
        TextEncoder::Embedding { table, .. } => tape.param(table.clone()),
        TextEncoder::Projection { weight } => tape.param(weight.clone()),
    };
    BoundParams {
        encoder,
        gcn: params.gcn.iter().map(|l| tape.param(l.weight.clone())).collect(),
        w_q: tape.param(params.w_q.clone()),
        w_k: tape.param(params.w_k.clone()),
        w_v: tape.param(params.w_v.clone()),
        classifier: tape.param(params.classifier.clone()),
        classifier_bias: tape.param(params.classifier_bias.clone()),
    }
}

/// Graph context reused across batches.
#[derive(Clone, Debug)]
pub struct GraphContext {
    pub features: Matrix,
    pub propagation: Rc<SparseRows>,
}

impl GraphContext {
    pub fn new(graph: &KnowledgeGraph) -> Self {
        Self {
            features: graph.feature_matrix(),
            propagation: Rc::new(gcn::propagation(graph)),
        }
    }
}

/// Records the fused representation of `records`, one row each.
pub fn fused_on_tape(
    tape: &mut Tape,
    bound: &BoundParams,
    params: &ModelParams,
    graph: &GraphContext,
    records: &[&Record],
) -> Result<Var, ModelError> {
    let text = match &params.encoder {
        TextEncoder::Embedding { vocab, table } => {
            let rows = records
                .iter()
                .map(|r| match &r.payload {
                    Payload::Tokens(t) => {
                        let w = 1.0 / t.len().max(1) as f64;
                        Ok(t.iter().map(|tok| (vocab.id(tok), w)).collect())
                    }
                    Payload::Features(_) => Err(ModelError::Payload {
                        id: r.id.clone(),
                        reason: "features given to a text model".into(),
                    }),
                })
                .collect::<Result<Vec<Vec<_>>, _>>()?;
            tape.sparse_left(Rc::new(SparseRows::new(table.rows(), rows)), bound.encoder)?
        }
        TextEncoder::Projection { weight } => {
            let mut data = Vec::with_capacity(records.len() * weight.rows());
            for r in records {
                match &r.payload {
                    Payload::Features(f) if f.len() == weight.rows() => data.extend_from_slice(f),
                    _ => {
                        return Err(ModelError::Payload {
                            id: r.id.clone(),
                            reason: "payload does not match the feature projection".into(),
                        })
                    }
                }
            }
            let x = tape.constant(Matrix::from_vec(records.len(), weight.rows(), data));
            tape.matmul(x, bound.encoder)?
        }
    };

    let kg_width = params.kg_dim();
    let any_mentions = params.use_kg && records.iter().any(|r| !r.mentions.is_empty());
    if !any_mentions {
        let zeros = tape.constant(Matrix::zeros(records.len(), kg_width));
        return Ok(tape.concat_cols(text, zeros)?);
    }

    let mut nodes = tape.constant(graph.features.clone());
    for (layer, &w) in params.gcn.iter().zip(&bound.gcn) {
        nodes = gcn::gcn_layer_on_tape(tape, &graph.propagation, nodes, w, layer.activation)?;
    }
    let node_rows = tape.value(nodes).rows();
    let queries = tape.matmul(text, bound.w_q)?;
    let (dk, dv) = params.head_widths()?;
    let scale = 1.0 / math::sqrt(dk as f64);

    let mut pooled = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if r.mentions.is_empty() {
            pooled.push(tape.constant(Matrix::zeros(1, kg_width)));
            continue;
        }
        check_mentions(r, node_rows, params)?;
        let ids: Vec<usize> = r.mentions.iter().map(|m| m.node.0).collect();
        let entities = tape.select_rows(nodes, &ids)?;
        let q = tape.select_rows(queries, &[i])?;
        let k = tape.matmul(entities, bound.w_k)?;
        let v = tape.matmul(entities, bound.w_v)?;
        let mut heads = Vec::with_capacity(params.heads.max(1));
        for h in 0..params.heads.max(1) {
            let qh = tape.slice_cols(q, h * dk, (h + 1) * dk)?;
            let kh = tape.slice_cols(k, h * dk, (h + 1) * dk)?;
            let vh = tape.slice_cols(v, h * dv, (h + 1) * dv)?;
            let kt = tape.transpose(kh)?;
            let s = tape.matmul(qh, kt)?;
            let s = tape.scale(s, scale)?;
            let a = tape.softmax_rows(s)?;
            heads.push(tape.matmul(a, vh)?);
        }
        let mut row = heads[0];
        for &h in &heads[1..] {
            row = tape.concat_cols(row, h)?;
        }
        pooled.push(row);
    }
    let kg = tape.stack_rows(&pooled)?;
    Ok(tape.concat_cols(text, kg)?)
}

/// Records classifier logits for a fused batch.
pub fn logits_on_tape(tape: &mut Tape, bound: &BoundParams, fused: Var) -> Result<Var, ModelError> {
    let z = tape.matmul(fused, bound.classifier)?;
    Ok(tape.add_row(z, bound.classifier_bias)?)
}

/// Index of a boolean label as a class.
pub fn class_of(label: bool) -> usize {
    label as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{link_entities, NodeId};
    use crate::rng::{stream, Stream};
    use alloc::vec;

    fn small_setup() -> (KnowledgeGraph, Dataset, ModelParams) {
        let g = KnowledgeGraph::from_sources(
            "nurse\tis_a\toccupation\nshe\trefers_to\tfemale\nhe\trefers_to\tmale\ncertified\tindicates\tskill\n",
            Some("node,a,b,c\nnurse,1,0,0\nshe,0,1,0\nhe,0,-1,0\ncertified,0,0,1\n"),
        )
        .unwrap();
        let mut d = Dataset::new(vec![
            Record::text("1", "she is a certified nurse", true, "f"),
            Record::text("2", "he is a nurse", false, "m"),
            Record::text("3", "nothing here", false, "m"),
            Record::text("4", "", true, "f"),
        ])
        .unwrap();
        d.relink(&g);
        let cfg = ModelConfig { text_dim: 4, gcn_dims: vec![5, 3], key_dim: 2, value_dim: 3, heads: 1, use_kg: true };
        let p = ModelParams::init(&cfg, &d, &g, &mut stream(7, Stream::ModelInit));
        (g, d, p)
    }

    #[test]
    fn attention_singleton_and_uniform() {
        let v = Matrix::row_vector(&[3.0, -1.0]);
        let k = Matrix::row_vector(&[0.2, 0.9]);
        let q = Matrix::from_rows(&[[5.0, -3.0], [0.0, 1.0]]).unwrap();
        let out = attention(&q, &k, &v, 2).unwrap();
        assert_eq!(out.row(0), v.row(0));
        assert_eq!(out.row(1), v.row(0));

        let k = Matrix::zeros(3, 2);
        let v = Matrix::from_rows(&[[1.0, 0.0], [2.0, 3.0], [6.0, -3.0]]).unwrap();
        let out = attention(&Matrix::row_vector(&[1.0, 1.0]), &k, &v, 2).unwrap();
        assert!(out.max_abs_diff(&Matrix::row_vector(&[3.0, 0.0])) < 1e-12);
    }

    #[test]
    fn attention_errors() {
        let m = Matrix::zeros(1, 2);
        assert_eq!(attention(&m, &m, &m, 0).unwrap_err(), ModelError::ZeroKeyDim);
        assert!(matches!(
            attention(&m, &Matrix::zeros(2, 2), &Matrix::zeros(3, 1), 2),
            Err(ModelError::AttentionShape(_))
        ));
    }

    #[test]
    fn text_encoding_means() {
        let (_, _, p) = small_setup();
        let TextEncoder::Embedding { vocab, table } = &p.encoder else { unreachable!() };
        let empty: [&str; 0] = [];
        assert_eq!(text_encode(&empty, &p).unwrap(), vec![0.0; 4]);
        assert_eq!(text_encode(&["nurse"], &p).unwrap(), table.row(vocab.id("nurse")));
        let pair = text_encode(&["nurse", "she"], &p).unwrap();
        for c in 0..4 {
            let expect = (table.get(vocab.id("nurse"), c) + table.get(vocab.id("she"), c)) / 2.0;
            assert!((pair[c] - expect).abs() < 1e-15);
        }
        // unknown tokens share row 0
        assert_eq!(text_encode(&["zebra"], &p).unwrap(), table.row(0));
    }

    #[test]
    fn pooling_degenerate_cases() {
        let (g, _, p) = small_setup();
        let nodes = node_embeddings(&g, &p).unwrap();
        let e = vec![0.3; 4];
        assert_eq!(kg_pool(&[], &nodes, &e, &p).unwrap(), vec![0.0; 3]);
        let m = link_entities(&["nurse"], &g);
        let pooled = kg_pool(&m, &nodes, &e, &p).unwrap();
        let expect = nodes.matrix().select_rows(&[m[0].node.0]).unwrap().matmul(&p.w_v).unwrap();
        assert!(Matrix::row_vector(&pooled).max_abs_diff(&expect) < 1e-14);
    }

    #[test]
    fn fuse_concatenates() {
        let f = fuse(&[1.0, 2.0], &[3.0]);
        assert_eq!(f.e_integrated, vec![1.0, 2.0, 3.0]);
        assert_eq!(f.split(), (&[1.0, 2.0][..], &[3.0][..]));
        assert_eq!(fuse(&[4.0], &[0.0, 0.0]).e_integrated, vec![4.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_head_ties_to_negative() {
        let (g, d, mut p) = small_setup();
        p.classifier = Matrix::zeros(p.fused_dim(), 2);
        let nodes = node_embeddings(&g, &p).unwrap();
        let (pred, _) = forward(&d.records()[0], &nodes, &p).unwrap();
        assert_eq!(pred.probabilities, [0.5, 0.5]);
        assert!(!pred.label);
    }

    #[test]
    fn no_mentions_means_zero_kg_half() {
        let (g, d, p) = small_setup();
        let nodes = node_embeddings(&g, &p).unwrap();
        let (_, fused) = forward(&d.records()[2], &nodes, &p).unwrap();
        assert!(fused.e_kg.iter().all(|&x| x == 0.0));
        assert_eq!(fused.e_llm, text_encode(d.records()[2].payload.tokens().unwrap(), &p).unwrap());
    }

    #[test]
    fn tape_path_matches_plain_path() {
        let (g, d, p) = small_setup();
        let nodes = node_embeddings(&g, &p).unwrap();
        let ctx = GraphContext::new(&g);
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &p);
        let refs: Vec<&Record> = d.iter().collect();
        let fused = fused_on_tape(&mut tape, &bound, &p, &ctx, &refs).unwrap();
        let logits = logits_on_tape(&mut tape, &bound, fused).unwrap();
        let probs = tape.value(logits).softmax_rows();
        for (i, r) in d.iter().enumerate() {
            let (pred, f) = forward(r, &nodes, &p).unwrap();
            let row = tape.value(fused).row(i);
            assert!(Matrix::row_vector(row).max_abs_diff(&Matrix::row_vector(&f.e_integrated)) < 1e-12);
            assert!((probs.get(i, 1) - pred.probabilities[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_mention_is_reported() {
        let (g, d, p) = small_setup();
        let nodes = node_embeddings(&g, &p).unwrap();
        let mut r = d.records()[0].clone();
        r.mentions.push(EntityMention { node: NodeId(99), start: 0, end: 1 });
        assert!(matches!(forward(&r, &nodes, &p), Err(ModelError::Mention { node: 99, .. })));
    }

    #[test]
    fn multi_head_widths() {
        let (g, d, _) = small_setup();
        let cfg = ModelConfig { text_dim: 4, gcn_dims: vec![3], key_dim: 2, value_dim: 2, heads: 3, use_kg: true };
        let p = ModelParams::init(&cfg, &d, &g, &mut stream(1, Stream::ModelInit));
        assert_eq!(p.kg_dim(), 6);
        let nodes = node_embeddings(&g, &p).unwrap();
        let (_, f) = forward(&d.records()[0], &nodes, &p).unwrap();
        assert_eq!(f.e_integrated.len(), 10);
    }
}
