//! Adversarial debiasing.
//!
//! The primary model minimizes its task loss while an adversary reads the
//! fused representation and tries to recover the sensitive attribute. A
//! gradient-reversal node between the two hands the primary model the
//! negated, λ-scaled adversary gradient, so a single backward pass yields
//! descent directions for `L_primary − λ·L_adversary` on θ and for
//! `L_adversary` on φ. Both players take one Adam step per batch.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::{holdout_split, Dataset, Record};
use crate::fairness::{demographic_parity, AuditRecord};
use crate::graph::KnowledgeGraph;
use crate::model::{self, BoundParams, GraphContext, ModelConfig, ModelError, ModelParams, Prediction};
use crate::numeric::{adam_step, AdamConfig, AdamState, NumericError, Tape, Var};
use crate::rng::{self, Stream};
use crate::Matrix;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid trainer config: {0}")]
    InvalidConfig(String),
    #[error("gradient reversal strength must be >= 0, got {0}")]
    NegativeLambda(f64),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the adversary term, λ ≥ 0.
    pub lambda: f64,
    pub seed: u64,
    pub adversary_hidden: usize,
    /// When false no adversary is built at all.
    pub adversary: bool,
    pub model: ModelConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-5,
            batch_size: 32,
            epochs: 10,
            lambda: 1.0,
            seed: 0,
            adversary_hidden: 16,
            adversary: true,
            model: ModelConfig::default(),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig(alloc::format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be >= 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(TrainError::NegativeLambda(self.lambda));
        }
        if self.model.key_dim == 0 {
            return Err(TrainError::InvalidConfig("key dimension must be >= 1".into()));
        }
        Ok(())
    }
}

/// Two-layer perceptron φ from the fused representation to attribute logits.
#[derive(Clone, Debug, PartialEq)]
pub struct AdversaryParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl AdversaryParams {
    pub fn init<R: Rng>(input: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        Self {
            w1: rng::glorot_uniform(input, hidden, rng),
            b1: Matrix::zeros(1, hidden),
            w2: rng::glorot_uniform(hidden, classes, rng),
            b2: Matrix::zeros(1, classes),
        }
    }

    pub fn named_matrices(&self) -> Vec<(&'static str, &Matrix)> {
        alloc::vec![
            ("adversary.w1", &self.w1),
            ("adversary.b1", &self.b1),
            ("adversary.w2", &self.w2),
            ("adversary.b2", &self.b2),
        ]
    }

    fn matrices_mut(&mut self) -> [&mut Matrix; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// Attribute logits for a batch of representations.
    pub fn logits(&self, fused: &Matrix) -> Result<Matrix, NumericError> {
        fused
            .matmul(&self.w1)?
            .add_row(&self.b1)?
            .relu()
            .matmul(&self.w2)?
            .add_row(&self.b2)
    }
}

/// One epoch of [`TrainingHistory`].
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean task cross-entropy over the epoch's records.
    pub primary_loss: f64,
    /// Mean adversary cross-entropy; zero without an adversary.
    pub adversary_loss: f64,
    /// `primary_loss − λ·adversary_loss`.
    pub combined_loss: f64,
    pub train_accuracy: f64,
    /// Demographic parity gap on the holdout, when one exists.
    pub parity_gap: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
}

/// θ, φ and the attribute classes φ predicts.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub adversary: Option<AdversaryParams>,
    /// Sorted attribute values; index = adversary class.
    pub attributes: Vec<String>,
}

/// One evaluated record.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub id: String,
    pub prediction: Prediction,
    pub label: bool,
    pub attribute: String,
}

impl Evaluation {
    pub fn audit_record(&self) -> AuditRecord {
        AuditRecord::new(self.label, self.prediction.label, self.attribute.clone())
    }
}

/// Records the reversal node: identity forward, `−λ·g` backward.
pub fn gradient_reversal(tape: &mut Tape, x: Var, lambda: f64) -> Result<Var, TrainError> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(TrainError::NegativeLambda(lambda));
    }
    Ok(tape.grad_reverse(x, lambda)?)
}

/// `L_primary − λ·L_adversary`.
pub fn combined_loss(primary: f64, adversary: f64, lambda: f64) -> f64 {
    primary - lambda * adversary
}

/// Freshly initialized model for `data` (the state `epochs = 0` returns).
pub fn initialize(
    data: &Dataset,
    attributes: &[String],
    graph: &KnowledgeGraph,
    config: &TrainerConfig,
) -> TrainedModel {
    let params = ModelParams::init(
        &config.model,
        data,
        graph,
        &mut rng::stream(config.seed, Stream::ModelInit),
    );
    let adversary = config.adversary.then(|| {
        AdversaryParams::init(
            params.fused_dim(),
            config.adversary_hidden,
            attributes.len().max(1),
            &mut rng::stream(config.seed, Stream::AdversaryInit),
        )
    });
    TrainedModel {
        params,
        adversary,
        attributes: attributes.to_vec(),
    }
}

/// Seeded 80/20 split, then [`train_with_holdout`].
pub fn train(
    data: &Dataset,
    graph: &KnowledgeGraph,
    config: &TrainerConfig,
) -> Result<(TrainedModel, TrainingHistory), TrainError> {
    let (train_part, holdout) = holdout_split(data, config.seed);
    train_with_holdout(&train_part, &holdout, graph, config)
}

/// Adversary parameters recorded on a tape, in `w1, b1, w2, b2` order.
#[derive(Clone, Copy, Debug)]
pub struct BoundAdversary {
    pub vars: [Var; 4],
}

/// Records every adversary parameter as a trainable leaf.
pub fn bind_adversary(tape: &mut Tape, adversary: &AdversaryParams) -> BoundAdversary {
    BoundAdversary {
        vars: [
            tape.param(adversary.w1.clone()),
            tape.param(adversary.b1.clone()),
            tape.param(adversary.w2.clone()),
            tape.param(adversary.b2.clone()),
        ],
    }
}

/// Nodes of one batch objective.
#[derive(Clone, Copy, Debug)]
pub struct BatchObjective {
    pub logits: Var,
    pub primary: Var,
    pub adversary: Option<Var>,
    /// `primary + adversary`; reversal turns its θ-gradient into
    /// `∂L_primary − λ·∂L_adversary`.
    pub total: Var,
}

/// Records the minimax objective for `records`. `attributes` is sorted and
/// indexes the adversary classes.
#[allow(clippy::too_many_arguments)]
pub fn batch_objective(
    tape: &mut Tape,
    params: &ModelParams,
    bound: &BoundParams,
    adversary: Option<&BoundAdversary>,
    context: &GraphContext,
    records: &[&Record],
    attributes: &[String],
    lambda: f64,
) -> Result<BatchObjective, TrainError> {
    let labels: Vec<usize> = records.iter().map(|r| model::class_of(r.label)).collect();
    let fused = model::fused_on_tape(tape, bound, params, context, records)?;
    let logits = model::logits_on_tape(tape, bound, fused)?;
    let primary = tape.cross_entropy(logits, &labels)?;
    let Some(adv) = adversary else {
        return Ok(BatchObjective { logits, primary, adversary: None, total: primary });
    };
    let targets: Vec<usize> = records
        .iter()
        .map(|r| attributes.binary_search(&r.attribute).unwrap_or(0))
        .collect();
    let [w1, b1, w2, b2] = adv.vars;
    let reversed = gradient_reversal(tape, fused, lambda)?;
    let h = tape.matmul(reversed, w1)?;
    let h = tape.add_row(h, b1)?;
    let h = tape.relu(h)?;
    let z = tape.matmul(h, w2)?;
    let z = tape.add_row(z, b2)?;
    let la = tape.cross_entropy(z, &targets)?;
    let total = tape.add(primary, la)?;
    Ok(BatchObjective { logits, primary, adversary: Some(la), total })
}

/// Minimax training on `train_part`, tracking the parity gap on `holdout`.
pub fn train_with_holdout(
    train_part: &Dataset,
    holdout: &Dataset,
    graph: &KnowledgeGraph,
    config: &TrainerConfig,
) -> Result<(TrainedModel, TrainingHistory), TrainError> {
    config.validate()?;
    if train_part.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut all_attributes = train_part.attributes();
    all_attributes.extend(holdout.attributes());
    let attributes: Vec<String> = all_attributes.into_iter().collect();

    let mut model = initialize(train_part, &attributes, graph, config);
    let adam = AdamConfig::with_learning_rate(config.learning_rate);
    let mut theta_state: Vec<AdamState> = model
        .params
        .named_matrices()
        .iter()
        .map(|(_, m)| AdamState::new(m.shape(), adam))
        .collect();
    let mut phi_state: Vec<AdamState> = model
        .adversary
        .iter()
        .flat_map(|a| a.named_matrices())
        .map(|(_, m)| AdamState::new(m.shape(), adam))
        .collect();

    let context = GraphContext::new(graph);
    let mut shuffle = rng::stream(config.seed, Stream::Shuffle);
    let records = train_part.records();
    let mut history = TrainingHistory::default();

    for epoch in 0..config.epochs {
        let order = rng::permutation(records.len(), &mut shuffle);
        let (mut primary_sum, mut adversary_sum, mut correct) = (0.0, 0.0, 0usize);

        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch_records: Vec<&Record> = chunk.iter().map(|&i| &records[i]).collect();
            let mut tape = Tape::new();
            let bound: BoundParams = model::bind(&mut tape, &model.params);
            let bound_adv = model.adversary.as_ref().map(|a| bind_adversary(&mut tape, a));
            let BatchObjective { logits, primary, adversary, total } = batch_objective(
                &mut tape,
                &model.params,
                &bound,
                bound_adv.as_ref(),
                &context,
                &batch_records,
                &attributes,
                config.lambda,
            )?;

            let lp = tape.value(primary).get(0, 0);
            let la = adversary.map_or(0.0, |v| tape.value(v).get(0, 0));
            if !lp.is_finite() || !la.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch });
            }
            let z = tape.value(logits);
            correct += (0..z.rows())
                .filter(|&r| (z.get(r, 1) > z.get(r, 0)) == batch_records[r].label)
                .count();
            let n = chunk.len() as f64;
            primary_sum += lp * n;
            adversary_sum += la * n;

            let grads = tape.backward(total)?;
            for ((param, var), state) in model
                .params
                .matrices_mut()
                .into_iter()
                .zip(bound.vars())
                .zip(&mut theta_state)
            {
                adam_step(param, grads.get(var).expect("tracked"), state)?;
            }
            if let (Some(adv), Some(bound_adv)) = (model.adversary.as_mut(), &bound_adv) {
                for ((param, var), state) in adv
                    .matrices_mut()
                    .into_iter()
                    .zip(bound_adv.vars)
                    .zip(&mut phi_state)
                {
                    adam_step(param, grads.get(var).expect("tracked"), state)?;
                }
            }
        }

        let n = records.len() as f64;
        let primary_loss = primary_sum / n;
        let adversary_loss = adversary_sum / n;
        let parity_gap = if holdout.is_empty() {
            None
        } else {
            let audit: Vec<AuditRecord> = evaluate(&model, graph, holdout)?
                .iter()
                .map(Evaluation::audit_record)
                .collect();
            Some(demographic_parity(&audit).map(|f| f.gap).unwrap_or(0.0))
        };
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            primary_loss,
            adversary_loss,
            combined_loss: combined_loss(primary_loss, adversary_loss, config.lambda),
            train_accuracy: correct as f64 / n,
            parity_gap,
        });
    }
    Ok((model, history))
}

/// One prediction per record, in order.
pub fn evaluate(
    model: &TrainedModel,
    graph: &KnowledgeGraph,
    data: &Dataset,
) -> Result<Vec<Evaluation>, TrainError> {
    if data.is_empty() {
        return Ok(Vec::new());
    }
    let nodes = model::node_embeddings(graph, &model.params)?;
    data.iter()
        .map(|r| {
            let (prediction, _) = model::forward(r, &nodes, &model.params)?;
            Ok(Evaluation {
                id: r.id.clone(),
                prediction,
                label: r.label,
                attribute: r.attribute.clone(),
            })
        })
        .collect()
}

/// Share of evaluations whose predicted label matches the true label.
pub fn accuracy(evals: &[Evaluation]) -> f64 {
    if evals.is_empty() {
        return 0.0;
    }
    evals.iter().filter(|e| e.prediction.label == e.label).count() as f64 / evals.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_biased, SynthConfig};
    use crate::demo;

    fn quick(config: TrainerConfig, n: usize) -> (TrainedModel, TrainingHistory, Dataset, KnowledgeGraph) {
        let g = demo::graph();
        let mut d = generate_biased(&SynthConfig { n, seed: 3, ..Default::default() }).unwrap();
        d.relink(&g);
        let (m, h) = train(&d, &g, &config).unwrap();
        (m, h, d, g)
    }

    #[test]
    fn combined_loss_cases() {
        assert_eq!(combined_loss(1.0, 0.5, 0.0), 1.0);
        assert_eq!(combined_loss(1.0, 0.5, 2.0), 0.0);
        assert_eq!(combined_loss(0.7, 0.7, 1.0), 0.0);
    }

    #[test]
    fn reversal_contract() {
        let mut tape = Tape::new();
        let x = tape.param(Matrix::row_vector(&[0.1, 0.2]));
        let r = gradient_reversal(&mut tape, x, 1.0).unwrap();
        assert_eq!(tape.value(r), tape.value(x));
        assert_eq!(
            gradient_reversal(&mut tape, x, -1.0).unwrap_err(),
            TrainError::NegativeLambda(-1.0)
        );
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let cfg = TrainerConfig { epochs: 0, ..Default::default() };
        let (m, h, d, g) = quick(cfg.clone(), 50);
        let (train_part, holdout) = holdout_split(&d, cfg.seed);
        let mut attrs = train_part.attributes();
        attrs.extend(holdout.attributes());
        let attrs: Vec<String> = attrs.into_iter().collect();
        assert_eq!(m, initialize(&train_part, &attrs, &g, &cfg));
        assert!(h.epochs.is_empty());
    }

    #[test]
    fn history_is_complete_and_consistent() {
        let cfg = TrainerConfig { epochs: 3, learning_rate: 1e-2, lambda: 0.7, ..Default::default() };
        let (_, h, _, _) = quick(cfg, 120);
        assert_eq!(h.epochs.len(), 3);
        for e in &h.epochs {
            assert!(e.primary_loss.is_finite() && e.adversary_loss.is_finite());
            assert!((e.combined_loss - (e.primary_loss - 0.7 * e.adversary_loss)).abs() < 1e-9);
            assert!(e.parity_gap.is_some());
        }
    }

    #[test]
    fn empty_dataset_and_bad_config() {
        let g = demo::graph();
        let empty = Dataset::default();
        assert_eq!(
            train_with_holdout(&empty, &empty, &g, &TrainerConfig::default()).unwrap_err(),
            TrainError::EmptyDataset
        );
        let bad = TrainerConfig { batch_size: 0, ..Default::default() };
        assert!(matches!(train(&empty, &g, &bad), Err(TrainError::InvalidConfig(_))));
        let bad = TrainerConfig { lambda: -1.0, ..Default::default() };
        assert!(matches!(train(&empty, &g, &bad), Err(TrainError::NegativeLambda(_))));
    }

    #[test]
    fn evaluate_matches_forward() {
        let cfg = TrainerConfig { epochs: 1, learning_rate: 1e-2, ..Default::default() };
        let (m, _, d, g) = quick(cfg, 60);
        assert!(evaluate(&m, &g, &Dataset::default()).unwrap().is_empty());
        let one = d.subset(&[0]);
        assert_eq!(evaluate(&m, &g, &one).unwrap().len(), 1);
        let nodes = model::node_embeddings(&g, &m.params).unwrap();
        for (e, r) in evaluate(&m, &g, &d).unwrap().iter().zip(d.iter()) {
            assert_eq!(e.prediction, model::forward(r, &nodes, &m.params).unwrap().0);
            assert_eq!(e.id, r.id);
        }
    }
}
