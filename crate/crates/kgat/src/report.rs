//! JSON and CSV renderings of core results. JSON objects come out with
//! sorted keys.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use kgat_core::causal::{CausalError, DiscreteJoint, Distribution, Observation, Variable};
use kgat_core::fairness::FairnessReport;
use kgat_core::train::{Evaluation, TrainingHistory};
use serde_json::{json, Map, Value};

use crate::io::AuditTable;

pub fn distribution(d: &Distribution) -> Value {
    Value::Object(d.iter().map(|(k, p)| (k.to_string(), json!(p))).collect())
}

pub fn fairness(r: &FairnessReport) -> Value {
    json!({
        "positive_rates": r.positive_rates,
        "parity_gap": r.parity_gap,
        "true_positive_rates": r.true_positive_rates,
        "opportunity_gap": r.opportunity_gap,
        "excluded": r.excluded.iter().map(|e| json!({"attribute": e.attribute, "reason": e.reason})).collect::<Vec<_>>(),
        "group_sizes": r.group_sizes,
    })
}

/// Interventional and observational outcome distributions per treatment value.
pub fn adjustment(joint: &DiscreteJoint) -> Result<Value, CausalError> {
    let mut adjusted = Map::new();
    let mut unadjusted = Map::new();
    for x in &joint.x().domain {
        adjusted.insert(x.clone(), distribution(&joint.backdoor_adjust(x)?));
        unadjusted.insert(x.clone(), distribution(&joint.conditional(x)?));
    }
    Ok(json!({
        "treatment": joint.x().name,
        "outcome": joint.y().name,
        "confounders": joint.z().iter().map(|v| v.name.clone()).collect::<Vec<_>>(),
        "adjusted": adjusted,
        "unadjusted": unadjusted,
    }))
}

fn domain<'a>(values: impl Iterator<Item = &'a str>) -> Vec<String> {
    values.map(String::from).collect::<BTreeSet<_>>().into_iter().collect()
}

/// Treatment = attribute, outcome = prediction, confounders = `y_true` plus
/// any extra columns.
pub fn audit_joint(table: &AuditTable, pseudocount: f64) -> Result<DiscreteJoint, CausalError> {
    let bit = |b: bool| if b { "1" } else { "0" };
    let obs: Vec<Observation> = table
        .records
        .iter()
        .zip(&table.confounders)
        .map(|(r, extra)| {
            let z = std::iter::once(bit(r.y_true).to_string()).chain(extra.iter().cloned());
            Observation::new(r.attribute.clone(), bit(r.y_pred), z)
        })
        .collect();
    let binary = || Variable::new("", ["0", "1"]);
    let x = Variable::new("attribute", domain(table.records.iter().map(|r| r.attribute.as_str())));
    let y = Variable { name: "y_pred".into(), ..binary() };
    let mut z = vec![Variable { name: "y_true".into(), ..binary() }];
    for (k, name) in table.confounder_names.iter().enumerate() {
        z.push(Variable::new(name.clone(), domain(table.confounders.iter().map(|c| c[k].as_str()))));
    }
    DiscreteJoint::from_counts(&obs, Some((x, y, z)), pseudocount)
}

/// A joint over header-named columns with sorted observed domains.
pub fn named_joint(names: &[String], obs: &[Observation], pseudocount: f64) -> Result<DiscreteJoint, CausalError> {
    let x = Variable::new(names[0].clone(), domain(obs.iter().map(|o| o.x.as_str())));
    let y = Variable::new(names[1].clone(), domain(obs.iter().map(|o| o.y.as_str())));
    let z = names[2..]
        .iter()
        .enumerate()
        .map(|(k, name)| Variable::new(name.clone(), domain(obs.iter().filter_map(|o| o.z.get(k).map(String::as_str)))))
        .collect();
    DiscreteJoint::from_counts(obs, Some((x, y, z)), pseudocount)
}

/// The causal section of an audit; positivity failures become an `error` entry.
pub fn audit_causal(table: &AuditTable, pseudocount: f64) -> Value {
    match audit_joint(table, pseudocount).and_then(|j| adjustment(&j)) {
        Ok(v) => v,
        Err(e) => json!({ "error": e.to_string() }),
    }
}

pub fn history_csv(history: &TrainingHistory) -> String {
    let mut out = String::from("epoch,L_primary,L_adversary,combined,accuracy,parity_gap\n");
    for e in &history.epochs {
        let gap = e.parity_gap.map(|g| g.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            e.epoch, e.primary_loss, e.adversary_loss, e.combined_loss, e.train_accuracy, gap
        );
    }
    out
}

/// Loadable by the audit command: `score` and `id` are not confounders.
pub fn predictions_csv(evals: &[Evaluation]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record(["y_true", "y_pred", "attribute", "id", "score"]);
    for e in evals {
        let _ = w.write_record([
            (e.label as u8).to_string(),
            (e.prediction.label as u8).to_string(),
            e.attribute.clone(),
            e.id.clone(),
            e.prediction.probabilities[1].to_string(),
        ]);
    }
    String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap_or_default();
    s.push('\n');
    s
}
