//! The λ × knowledge-graph grid over seeded synthetic data.

use kgat_core::data::{generate_biased, holdout_split, DataError, SynthConfig};
use kgat_core::fairness::{audit, relative_reduction, AuditRecord, FairnessError};
use kgat_core::graph::KnowledgeGraph;
use kgat_core::train::{self, TrainError, TrainerConfig};
use serde_json::{json, Value};

pub const LAMBDAS: [f64; 2] = [0.0, 1.0];

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error("no seeds given")]
    NoSeeds,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub seeds: Vec<u64>,
    /// `seed` is replaced per run.
    pub synth: SynthConfig,
    /// `seed`, `lambda` and `model.use_kg` are replaced per cell.
    pub trainer: TrainerConfig,
}

/// Held-out results of one trained model.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub seed: u64,
    pub lambda: f64,
    pub use_kg: bool,
    pub accuracy: f64,
    pub parity_gap: f64,
    pub opportunity_gap: Option<f64>,
}

/// The λ = 0 and λ = 1 runs for one seed and KG setting.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub seed: u64,
    pub use_kg: bool,
    pub baseline: CellResult,
    pub mitigated: CellResult,
}

impl Comparison {
    pub fn reduction(&self) -> Option<f64> {
        relative_reduction(self.baseline.parity_gap, self.mitigated.parity_gap)
    }

    pub fn accuracy_drop(&self) -> f64 {
        self.baseline.accuracy - self.mitigated.accuracy
    }

    /// At least `min_reduction` relative gap reduction with at most
    /// `max_drop` accuracy loss.
    pub fn passes(&self, min_reduction: f64, max_drop: f64) -> bool {
        self.reduction().is_some_and(|r| r >= min_reduction) && self.accuracy_drop() <= max_drop
    }
}

/// Trains one model per (seed, KG, λ) cell and audits it on the seed's holdout.
pub fn run_seed(graph: &KnowledgeGraph, config: &GridConfig, seed: u64, use_kg: bool) -> Result<Comparison, ExperimentError> {
    let mut data = generate_biased(&SynthConfig { seed, ..config.synth.clone() })?;
    data.relink(graph);
    let (train_part, holdout) = holdout_split(&data, seed);
    let mut results = Vec::with_capacity(2);
    for lambda in LAMBDAS {
        let mut cfg = TrainerConfig { seed, lambda, ..config.trainer.clone() };
        cfg.model.use_kg = use_kg;
        let (model, _) = train::train_with_holdout(&train_part, &holdout, graph, &cfg)?;
        let evals = train::evaluate(&model, graph, &holdout)?;
        let records: Vec<AuditRecord> = evals.iter().map(|e| e.audit_record()).collect();
        let report = audit(&records)?;
        results.push(CellResult {
            seed,
            lambda,
            use_kg,
            accuracy: train::accuracy(&evals),
            parity_gap: report.parity_gap,
            opportunity_gap: report.opportunity_gap,
        });
    }
    let mitigated = results.pop().expect("two lambdas");
    let baseline = results.pop().expect("two lambdas");
    Ok(Comparison { seed, use_kg, baseline, mitigated })
}

pub fn run_grid(graph: &KnowledgeGraph, config: &GridConfig) -> Result<Vec<Comparison>, ExperimentError> {
    if config.seeds.is_empty() {
        return Err(ExperimentError::NoSeeds);
    }
    let mut out = Vec::new();
    for use_kg in [false, true] {
        for &seed in &config.seeds {
            log::info!("experiment: seed {seed}, knowledge graph {use_kg}");
            out.push(run_seed(graph, config, seed, use_kg)?);
        }
    }
    Ok(out)
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn cell_json(c: &CellResult) -> Value {
    json!({
        "accuracy": c.accuracy,
        "parity_gap": c.parity_gap,
        "opportunity_gap": c.opportunity_gap,
    })
}

/// Per-seed cells plus per-setting means; mitigated cells carry the relative
/// gap reduction against the matching λ = 0 run.
pub fn summary_json(comparisons: &[Comparison]) -> Value {
    let mut settings = Vec::new();
    for use_kg in [false, true] {
        let group: Vec<&Comparison> = comparisons.iter().filter(|c| c.use_kg == use_kg).collect();
        if group.is_empty() {
            continue;
        }
        for (lambda, mitigated) in [(LAMBDAS[0], false), (LAMBDAS[1], true)] {
            let pick = |c: &&Comparison| if mitigated { c.mitigated.clone() } else { c.baseline.clone() };
            let runs: Vec<Value> = group
                .iter()
                .map(|c| {
                    let mut v = cell_json(&pick(c));
                    v["seed"] = json!(c.seed);
                    if mitigated {
                        v["relative_reduction"] = json!(c.reduction());
                        v["accuracy_drop"] = json!(c.accuracy_drop());
                    }
                    v
                })
                .collect();
            let mut s = json!({
                "lambda": lambda,
                "use_kg": use_kg,
                "runs": runs,
                "mean_accuracy": mean(group.iter().map(|c| pick(c).accuracy)),
                "mean_parity_gap": mean(group.iter().map(|c| pick(c).parity_gap)),
            });
            if mitigated {
                s["mean_relative_reduction"] = json!(mean(group.iter().filter_map(|c| c.reduction())));
                s["mean_accuracy_drop"] = json!(mean(group.iter().map(|c| c.accuracy_drop())));
            }
            settings.push(s);
        }
    }
    json!({ "cells": settings })
}
