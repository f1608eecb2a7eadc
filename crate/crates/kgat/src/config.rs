//! Flat `key = value` run configuration.
//!
//! ```text
//! # trainer
//! learning_rate = 3e-3
//! epochs = 30
//! gcn_dims = 16, 8
//! # generator
//! n = 5000
//! beta = 0.8
//! # counterfactual flip map
//! flip.female = male
//! flip.male = female
//! ```
//!
//! `seed` sets both the trainer and the generator seed. Unknown keys are errors.

use std::collections::BTreeMap;
use std::str::FromStr;

use kgat_core::data::SynthConfig;
use kgat_core::train::TrainerConfig;
use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
#[error("config line {line}: {reason}")]
pub struct ConfigError {
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub trainer: TrainerConfig,
    pub synth: SynthConfig,
    pub flip: BTreeMap<String, String>,
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T, String> {
    raw.parse().map_err(|_| format!("invalid value {raw:?} for {key}"))
}

impl RunConfig {
    /// Settings used by the experiment grid.
    pub fn desk_scale() -> Self {
        let mut c = Self::default();
        c.trainer.learning_rate = 3e-3;
        c.trainer.epochs = 30;
        c.synth.n = 5000;
        c
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Applies every assignment in `text` on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fail = |reason: String| ConfigError { line: i + 1, reason };
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| fail("expected key = value".into()))?;
            self.set(key.trim(), raw.trim()).map_err(fail)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), String> {
        let t = &mut self.trainer;
        let s = &mut self.synth;
        match key {
            "learning_rate" => t.learning_rate = value(key, raw)?,
            "batch_size" => t.batch_size = value(key, raw)?,
            "epochs" => t.epochs = value(key, raw)?,
            "lambda" => t.lambda = value(key, raw)?,
            "adversary_hidden" => t.adversary_hidden = value(key, raw)?,
            "adversary" => t.adversary = value(key, raw)?,
            "text_dim" => t.model.text_dim = value(key, raw)?,
            "gcn_dims" => {
                t.model.gcn_dims = raw
                    .split(',')
                    .map(|d| value(key, d.trim()))
                    .collect::<Result<_, _>>()?
            }
            "key_dim" => t.model.key_dim = value(key, raw)?,
            "value_dim" => t.model.value_dim = value(key, raw)?,
            "heads" => t.model.heads = value(key, raw)?,
            "use_kg" => t.model.use_kg = value(key, raw)?,
            "seed" => {
                t.seed = value(key, raw)?;
                s.seed = t.seed;
            }
            "n" => s.n = value(key, raw)?,
            "beta" => s.beta = value(key, raw)?,
            "base_rate" => s.base_rate = value(key, raw)?,
            "spread" => s.spread = value(key, raw)?,
            "attribute_balance" => s.attribute_balance = value(key, raw)?,
            "marker_fidelity" => s.marker_fidelity = value(key, raw)?,
            "skill_precision" => s.skill_precision = value(key, raw)?,
            "skill_slots" => s.skill_slots = value(key, raw)?,
            _ => match key.strip_prefix("flip.") {
                Some(from) if !from.is_empty() && !raw.is_empty() => {
                    self.flip.insert(from.to_string(), raw.to_string());
                }
                _ => return Err(format!("unknown key {key:?}")),
            },
        }
        Ok(())
    }

    /// Resolved values, for manifests.
    pub fn to_json(&self) -> Value {
        let t = &self.trainer;
        let s = &self.synth;
        json!({
            "trainer": {
                "learning_rate": t.learning_rate,
                "batch_size": t.batch_size,
                "epochs": t.epochs,
                "lambda": t.lambda,
                "seed": t.seed,
                "adversary_hidden": t.adversary_hidden,
                "adversary": t.adversary,
                "text_dim": t.model.text_dim,
                "gcn_dims": t.model.gcn_dims,
                "key_dim": t.model.key_dim,
                "value_dim": t.model.value_dim,
                "heads": t.model.heads,
                "use_kg": t.model.use_kg,
            },
            "generator": {
                "n": s.n,
                "beta": s.beta,
                "base_rate": s.base_rate,
                "spread": s.spread,
                "attribute_balance": s.attribute_balance,
                "marker_fidelity": s.marker_fidelity,
                "skill_precision": s.skill_precision,
                "skill_slots": s.skill_slots,
                "seed": s.seed,
            },
            "flip": self.flip,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_assignments() {
        let c = RunConfig::parse("# c\nlearning_rate = 1e-2\ngcn_dims = 4, 2\nseed=7\nflip.she = he # x\n\nuse_kg = false\n").unwrap();
        assert_eq!(c.trainer.learning_rate, 1e-2);
        assert_eq!(c.trainer.model.gcn_dims, [4, 2]);
        assert_eq!((c.trainer.seed, c.synth.seed), (7, 7));
        assert_eq!(c.flip["she"], "he");
        assert!(!c.trainer.model.use_kg);
    }

    #[test]
    fn rejects_bad_lines() {
        assert_eq!(RunConfig::parse("epochs = 2\nwhat = 1").unwrap_err().line, 2);
        assert!(RunConfig::parse("epochs = two").is_err());
        assert!(RunConfig::parse("epochs").is_err());
        assert!(RunConfig::parse("flip. = x").is_err());
    }
}
