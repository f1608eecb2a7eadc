//! Training records, tokenization and the seeded biased generator.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;

use crate::graph::{link_entities, EntityMention, KnowledgeGraph};
use crate::rng::{self, Stream};

/// Whitespace split with lowercasing.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Tokens(Vec<String>),
    Features(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PayloadKind {
    Text,
    Tabular,
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::Tokens(_) => PayloadKind::Text,
            Payload::Features(_) => PayloadKind::Tabular,
        }
    }

    pub fn tokens(&self) -> Option<&[String]> {
        match self {
            Payload::Tokens(t) => Some(t),
            Payload::Features(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub id: String,
    pub payload: Payload,
    pub label: bool,
    pub attribute: String,
    /// Links into the knowledge graph; empty for tabular payloads.
    pub mentions: Vec<EntityMention>,
}

impl Record {
    pub fn text(id: impl Into<String>, text: &str, label: bool, attribute: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            payload: Payload::Tokens(tokenize(text)),
            label,
            attribute: attribute.into(),
            mentions: Vec::new(),
        }
    }

    pub fn tabular(id: impl Into<String>, features: Vec<f64>, label: bool, attribute: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            payload: Payload::Features(features),
            label,
            attribute: attribute.into(),
            mentions: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("record {id:?} mixes payload kinds within one dataset")]
    MixedPayload { id: String },
    #[error("record {id:?} has {found} features, dataset has {expected}")]
    FeatureWidth { id: String, expected: usize, found: usize },
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
}

/// Records sharing one payload kind (and, when tabular, one width).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    records: Vec<Record>,
}

impl Dataset {
    pub fn new(records: Vec<Record>) -> Result<Self, DataError> {
        if let Some(first) = records.first() {
            let kind = first.payload.kind();
            let width = match &first.payload {
                Payload::Features(f) => f.len(),
                Payload::Tokens(_) => 0,
            };
            for r in &records {
                if r.payload.kind() != kind {
                    return Err(DataError::MixedPayload { id: r.id.clone() });
                }
                if let Payload::Features(f) = &r.payload {
                    if f.len() != width {
                        return Err(DataError::FeatureWidth {
                            id: r.id.clone(),
                            expected: width,
                            found: f.len(),
                        });
                    }
                }
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Record> {
        self.records.iter()
    }

    pub fn kind(&self) -> Option<PayloadKind> {
        self.records.first().map(|r| r.payload.kind())
    }

    /// Feature width for tabular datasets.
    pub fn feature_width(&self) -> Option<usize> {
        match &self.records.first()?.payload {
            Payload::Features(f) => Some(f.len()),
            Payload::Tokens(_) => None,
        }
    }

    /// Sorted distinct attribute values.
    pub fn attributes(&self) -> BTreeSet<String> {
        self.records.iter().map(|r| r.attribute.clone()).collect()
    }

    /// Recomputes entity mentions of every text record against `graph`.
    pub fn relink(&mut self, graph: &KnowledgeGraph) {
        for r in &mut self.records {
            r.mentions = match &r.payload {
                Payload::Tokens(t) => link_entities(t, graph),
                Payload::Features(_) => Vec::new(),
            };
        }
    }

    /// Subset by index, in the order given.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Record;
    type IntoIter = core::slice::Iter<'a, Record>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

/// Fraction of a dataset held out for evaluation.
pub const HOLDOUT_FRACTION: f64 = 0.2;

/// Seeded shuffled 80/20 partition into `(train, holdout)`.
/// Each part keeps the original record order.
pub fn holdout_split(dataset: &Dataset, seed: u64) -> (Dataset, Dataset) {
    let n = dataset.len();
    let holdout_n = (n as f64 * HOLDOUT_FRACTION) as usize;
    let order = rng::permutation(n, &mut rng::stream(seed, Stream::Split));
    let mut holdout: Vec<usize> = order[..holdout_n].to_vec();
    let mut train: Vec<usize> = order[holdout_n..].to_vec();
    holdout.sort_unstable();
    train.sort_unstable();
    (dataset.subset(&train), dataset.subset(&holdout))
}

/// One sensitive group and the marker tokens that reveal it.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSpec {
    pub attribute: String,
    pub markers: Vec<String>,
}

/// Token inventory for synthetic text.
#[derive(Clone, Debug, PartialEq)]
pub struct VocabSpec {
    /// `[disadvantaged, advantaged]`.
    pub groups: [GroupSpec; 2],
    /// Markers used when the group is not revealed.
    pub neutral_markers: Vec<String>,
    pub occupations: Vec<String>,
    /// Drawn mostly for high-merit records.
    pub strong_skills: Vec<String>,
    pub weak_skills: Vec<String>,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for VocabSpec {
    /// Every token here is a surface form of the demo knowledge graph.
    fn default() -> Self {
        Self {
            groups: [
                GroupSpec {
                    attribute: "female".into(),
                    markers: words(&["she", "her", "ms", "woman"]),
                },
                GroupSpec {
                    attribute: "male".into(),
                    markers: words(&["he", "his", "mr", "man"]),
                },
            ],
            neutral_markers: words(&["they", "their"]),
            occupations: words(&[
                "nurse",
                "engineer",
                "software engineer",
                "doctor",
                "teacher",
                "lawyer",
                "accountant",
                "architect",
            ]),
            strong_skills: words(&["certified", "experienced", "awarded", "published", "licensed"]),
            weak_skills: words(&["novice", "trainee", "uncertified", "unpublished", "probationary"]),
        }
    }
}

/// Controls for [`generate_biased`].
///
/// Labels start from a latent merit bit drawn with probability `base_rate`.
/// An advantaged low-merit record is promoted to a positive label with
/// probability `beta * spread`; a disadvantaged high-merit record is demoted
/// with the same probability. The label gap between groups is therefore
/// exactly `beta * spread` in expectation.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub beta: f64,
    pub base_rate: f64,
    pub spread: f64,
    /// Probability of the advantaged group.
    pub attribute_balance: f64,
    /// Probability that a record's marker reveals its group.
    pub marker_fidelity: f64,
    /// Probability that a skill slot agrees with merit.
    pub skill_precision: f64,
    pub skill_slots: usize,
    pub vocab: VocabSpec,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            beta: 0.8,
            base_rate: 0.5,
            spread: 0.8,
            attribute_balance: 0.5,
            marker_fidelity: 0.45,
            skill_precision: 0.9,
            skill_slots: 3,
            vocab: VocabSpec::default(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let rates = [
            ("beta", self.beta),
            ("base_rate", self.base_rate),
            ("spread", self.spread),
            ("attribute_balance", self.attribute_balance),
            ("marker_fidelity", self.marker_fidelity),
            ("skill_precision", self.skill_precision),
        ];
        for (name, v) in rates {
            if !(0.0..=1.0).contains(&v) {
                return Err(DataError::InvalidConfig(alloc::format!(
                    "{name} = {v} is outside [0, 1]"
                )));
            }
        }
        let v = &self.vocab;
        let lists = [
            ("markers", &v.groups[0].markers),
            ("markers", &v.groups[1].markers),
            ("neutral_markers", &v.neutral_markers),
            ("occupations", &v.occupations),
            ("strong_skills", &v.strong_skills),
            ("weak_skills", &v.weak_skills),
        ];
        for (name, list) in lists {
            if list.is_empty() {
                return Err(DataError::InvalidConfig(alloc::format!("{name} list is empty")));
            }
        }
        if v.groups[0].attribute == v.groups[1].attribute {
            return Err(DataError::InvalidConfig("group attributes must differ".into()));
        }
        Ok(())
    }

    /// Expected positive-label rate of each group, `[disadvantaged, advantaged]`.
    pub fn group_rates(&self) -> [f64; 2] {
        let f = self.beta * self.spread;
        let b = self.base_rate;
        [b - b * f, b + (1.0 - b) * f]
    }
}

fn pick<'a, R: Rng>(list: &'a [String], rng: &mut R) -> &'a str {
    &list[rng.gen_range(0..list.len())]
}

/// Seeded text records with controllable label bias. Mentions are left
/// empty; call [`Dataset::relink`] to attach a graph.
pub fn generate_biased(config: &SynthConfig) -> Result<Dataset, DataError> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, Stream::Generate);
    let flip = config.beta * config.spread;
    let vocab = &config.vocab;
    let mut records = Vec::with_capacity(config.n);

    for i in 0..config.n {
        let advantaged = rng.gen_bool(config.attribute_balance);
        let group = &vocab.groups[advantaged as usize];
        let merit = rng.gen_bool(config.base_rate);
        let flipped = rng.gen_bool(flip);
        let label = match (advantaged, merit) {
            (true, false) => flipped,
            (false, true) => !flipped,
            _ => merit,
        };

        let marker = if rng.gen_bool(config.marker_fidelity) {
            pick(&group.markers, &mut rng)
        } else {
            pick(&vocab.neutral_markers, &mut rng)
        };
        let mut text = alloc::format!("{marker} works as a {}", pick(&vocab.occupations, &mut rng));
        for _ in 0..config.skill_slots {
            let strong = rng.gen_bool(config.skill_precision) == merit;
            let list = if strong { &vocab.strong_skills } else { &vocab.weak_skills };
            text.push(' ');
            text.push_str(pick(list, &mut rng));
        }
        records.push(Record::text(
            alloc::format!("syn-{i}"),
            &text,
            label,
            group.attribute.clone(),
        ));
    }
    Dataset::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label_gap(d: &Dataset, cfg: &SynthConfig) -> f64 {
        let rate = |attr: &str| {
            let g: Vec<_> = d.iter().filter(|r| r.attribute == attr).collect();
            g.iter().filter(|r| r.label).count() as f64 / g.len() as f64
        };
        rate(&cfg.vocab.groups[1].attribute) - rate(&cfg.vocab.groups[0].attribute)
    }

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(tokenize("  She IS\ta Nurse "), ["she", "is", "a", "nurse"]);
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn unbiased_generator_has_no_label_gap() {
        let cfg = SynthConfig { n: 10_000, beta: 0.0, seed: 3, ..Default::default() };
        let d = generate_biased(&cfg).unwrap();
        assert_eq!(d.len(), 10_000);
        assert!(label_gap(&d, &cfg).abs() < 0.03);
    }

    #[test]
    fn full_bias_hits_configured_rates() {
        let cfg = SynthConfig { n: 10_000, beta: 1.0, seed: 11, ..Default::default() };
        let [low, high] = cfg.group_rates();
        assert!((low - 0.1).abs() < 1e-12 && (high - 0.9).abs() < 1e-12);
        let d = generate_biased(&cfg).unwrap();
        assert!((label_gap(&d, &cfg) - 0.8).abs() < 0.03);
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = SynthConfig { n: 200, seed: 42, ..Default::default() };
        assert_eq!(generate_biased(&cfg).unwrap(), generate_biased(&cfg).unwrap());
        let other = SynthConfig { seed: 43, ..cfg.clone() };
        assert_ne!(generate_biased(&cfg).unwrap(), generate_biased(&other).unwrap());
    }

    #[test]
    fn gap_monotone_in_beta() {
        let mut last = f64::NEG_INFINITY;
        for beta in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let cfg = SynthConfig { n: 10_000, beta, seed: 5, ..Default::default() };
            let gap = label_gap(&generate_biased(&cfg).unwrap(), &cfg);
            assert!(gap >= last - 0.02, "beta {beta}: {gap} < {last}");
            last = gap;
        }
    }

    #[test]
    fn invalid_config() {
        let cfg = SynthConfig { beta: 1.5, ..Default::default() };
        assert!(matches!(generate_biased(&cfg), Err(DataError::InvalidConfig(_))));
    }

    #[test]
    fn mixed_payloads_rejected() {
        let err = Dataset::new(alloc::vec![
            Record::text("a", "x", true, "g"),
            Record::tabular("b", alloc::vec![1.0], false, "g"),
        ])
        .unwrap_err();
        assert_eq!(err, DataError::MixedPayload { id: "b".into() });
    }

    #[test]
    fn holdout_is_eighty_twenty_partition() {
        let cfg = SynthConfig { n: 101, ..Default::default() };
        let d = generate_biased(&cfg).unwrap();
        let (train, holdout) = holdout_split(&d, 9);
        assert_eq!((train.len(), holdout.len()), (81, 20));
        let mut ids: Vec<_> = train.iter().chain(holdout.iter()).map(|r| r.id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 101);
        assert_eq!(holdout_split(&d, 9), (train, holdout));
    }
}
