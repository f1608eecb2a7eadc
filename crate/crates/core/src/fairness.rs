//! Group fairness metrics and the word-embedding association test.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::math;
use crate::rng::{self, Stream};

/// One audited prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditRecord {
    pub y_true: bool,
    pub y_pred: bool,
    pub attribute: String,
}

impl AuditRecord {
    pub fn new(y_true: bool, y_pred: bool, attribute: impl Into<String>) -> Self {
        Self {
            y_true,
            y_pred,
            attribute: attribute.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FairnessError {
    #[error("no records to audit")]
    Empty,
    #[error("no group has a positive label; equal opportunity is undefined")]
    OpportunityUndefined { excluded: Vec<Exclusion> },
    #[error("WEAT word {0:?} has no embedding")]
    MissingWord(String),
    #[error("WEAT word {0:?} has a zero-norm embedding")]
    ZeroNorm(String),
    #[error("WEAT set {0} is empty")]
    EmptySet(&'static str),
    #[error("WEAT word {word:?} appears in both {sets}")]
    Overlap { word: String, sets: &'static str },
    #[error("embedding of {word:?} has dimension {found}, expected {expected}")]
    Dimension {
        word: String,
        expected: usize,
        found: usize,
    },
    #[error("association scores have zero spread; effect size undefined")]
    ZeroSpread,
    #[error("exhaustive permutation needs |X ∪ Y| <= {max}, got {found}")]
    TooManyForExhaustive { max: usize, found: usize },
}

/// A group left out of a metric.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Exclusion {
    pub attribute: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParityFragment {
    /// P(Ŷ = 1 | A = a).
    pub positive_rates: BTreeMap<String, f64>,
    /// Largest pairwise difference of positive rates.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpportunityFragment {
    /// P(Ŷ = 1 | Y = 1, A = a) over included groups.
    pub true_positive_rates: BTreeMap<String, f64>,
    pub gap: f64,
    pub excluded: Vec<Exclusion>,
}

/// Everything [`audit`] reports.
#[derive(Clone, Debug, PartialEq)]
pub struct FairnessReport {
    pub positive_rates: BTreeMap<String, f64>,
    pub parity_gap: f64,
    pub true_positive_rates: BTreeMap<String, f64>,
    /// `None` when every group lacks positives.
    pub opportunity_gap: Option<f64>,
    pub excluded: Vec<Exclusion>,
    pub group_sizes: BTreeMap<String, usize>,
}

fn max_pairwise_gap(rates: &BTreeMap<String, f64>) -> f64 {
    let lo = rates.values().copied().fold(f64::INFINITY, f64::min);
    let hi = rates.values().copied().fold(f64::NEG_INFINITY, f64::max);
    if rates.len() < 2 {
        0.0
    } else {
        hi - lo
    }
}

/// Positive-prediction rate per group and the largest gap between groups.
pub fn demographic_parity(records: &[AuditRecord]) -> Result<ParityFragment, FairnessError> {
    if records.is_empty() {
        return Err(FairnessError::Empty);
    }
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in records {
        let c = counts.entry(&r.attribute).or_default();
        c.0 += r.y_pred as usize;
        c.1 += 1;
    }
    let positive_rates: BTreeMap<String, f64> = counts
        .into_iter()
        .map(|(a, (pos, n))| (a.into(), pos as f64 / n as f64))
        .collect();
    let gap = max_pairwise_gap(&positive_rates);
    Ok(ParityFragment { positive_rates, gap })
}

/// True-positive rate per group; groups without positives are excluded.
pub fn equal_opportunity(records: &[AuditRecord]) -> Result<OpportunityFragment, FairnessError> {
    if records.is_empty() {
        return Err(FairnessError::Empty);
    }
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in records {
        let c = counts.entry(&r.attribute).or_default();
        if r.y_true {
            c.0 += r.y_pred as usize;
            c.1 += 1;
        }
    }
    let mut true_positive_rates = BTreeMap::new();
    let mut excluded = Vec::new();
    for (a, (hits, positives)) in counts {
        if positives == 0 {
            excluded.push(Exclusion {
                attribute: a.into(),
                reason: "no records with y_true = 1".into(),
            });
        } else {
            true_positive_rates.insert(a.into(), hits as f64 / positives as f64);
        }
    }
    if true_positive_rates.is_empty() {
        return Err(FairnessError::OpportunityUndefined { excluded });
    }
    let gap = max_pairwise_gap(&true_positive_rates);
    Ok(OpportunityFragment {
        true_positive_rates,
        gap,
        excluded,
    })
}

/// Parity and opportunity in one report.
pub fn audit(records: &[AuditRecord]) -> Result<FairnessReport, FairnessError> {
    let parity = demographic_parity(records)?;
    let (true_positive_rates, opportunity_gap, excluded) = match equal_opportunity(records) {
        Ok(o) => (o.true_positive_rates, Some(o.gap), o.excluded),
        Err(FairnessError::OpportunityUndefined { excluded }) => (BTreeMap::new(), None, excluded),
        Err(e) => return Err(e),
    };
    let mut group_sizes = BTreeMap::new();
    for r in records {
        *group_sizes.entry(r.attribute.clone()).or_insert(0) += 1;
    }
    Ok(FairnessReport {
        positive_rates: parity.positive_rates,
        parity_gap: parity.gap,
        true_positive_rates,
        opportunity_gap,
        excluded,
        group_sizes,
    })
}

/// `(before - after) / before`; `None` when `before` is zero.
pub fn relative_reduction(before: f64, after: f64) -> Option<f64> {
    (before != 0.0).then(|| (before - after) / before)
}

/// Target sets X, Y and attribute sets A, B over an embedding table.
#[derive(Clone, Debug, PartialEq)]
pub struct WeatSpec {
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub a: Vec<String>,
    pub b: Vec<String>,
    pub embeddings: BTreeMap<String, Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeatResult {
    /// Σ_{x∈X} s(x) − Σ_{y∈Y} s(y).
    pub statistic: f64,
    /// (mean_X s − mean_Y s) / std_{X∪Y} s, sample standard deviation.
    pub effect_size: f64,
    /// One-sided share of partitions scoring at least the observed statistic.
    pub p_value: f64,
    /// Partitions evaluated.
    pub partitions: usize,
}

/// Largest `|X ∪ Y|` for which `permutations = 0` enumerates every partition.
pub const EXHAUSTIVE_LIMIT: usize = 12;

fn norm(v: &[f64]) -> f64 {
    math::sqrt(v.iter().map(|x| x * x).sum())
}

fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    dot / (norm(u) * norm(v))
}

impl WeatSpec {
    fn validate(&self) -> Result<(), FairnessError> {
        for (name, set) in [("X", &self.x), ("Y", &self.y), ("A", &self.a), ("B", &self.b)] {
            if set.is_empty() {
                return Err(FairnessError::EmptySet(name));
            }
        }
        for (first, second, sets) in [(&self.x, &self.y, "X and Y"), (&self.a, &self.b, "A and B")] {
            if let Some(w) = first.iter().find(|w| second.contains(w)) {
                return Err(FairnessError::Overlap {
                    word: w.clone(),
                    sets,
                });
            }
        }
        let mut dim = None;
        for w in self.x.iter().chain(&self.y).chain(&self.a).chain(&self.b) {
            let v = self
                .embeddings
                .get(w)
                .ok_or_else(|| FairnessError::MissingWord(w.clone()))?;
            if norm(v) == 0.0 {
                return Err(FairnessError::ZeroNorm(w.clone()));
            }
            let expected = *dim.get_or_insert(v.len());
            if v.len() != expected {
                return Err(FairnessError::Dimension {
                    word: w.clone(),
                    expected,
                    found: v.len(),
                });
            }
        }
        Ok(())
    }

    /// s(w, A, B) = mean cos(w, a) − mean cos(w, b).
    pub fn association(&self, word: &str) -> Result<f64, FairnessError> {
        let w = self
            .embeddings
            .get(word)
            .ok_or_else(|| FairnessError::MissingWord(word.into()))?;
        let mean = |set: &[String]| -> f64 {
            set.iter().map(|t| cosine(w, &self.embeddings[t])).sum::<f64>() / set.len() as f64
        };
        Ok(mean(&self.a) - mean(&self.b))
    }
}

/// Σ over the X side minus Σ over the Y side, summed separately so that
/// swapping the sides negates the result exactly.
fn partition_statistic(scores: &[f64], in_x: &[bool]) -> f64 {
    let (mut sx, mut sy) = (0.0, 0.0);
    for (s, &x) in scores.iter().zip(in_x) {
        if x {
            sx += s;
        } else {
            sy += s;
        }
    }
    sx - sy
}

/// Effect size and permutation p-value.
///
/// `permutations = 0` enumerates every way of splitting `X ∪ Y` into sets of
/// the original sizes (only when the union has at most
/// [`EXHAUSTIVE_LIMIT`] words) and reports the exact share scoring at least
/// the observed statistic. Otherwise that many seeded random splits are
/// drawn and `p = (1 + hits) / (1 + permutations)`.
pub fn weat(spec: &WeatSpec, permutations: usize, seed: u64) -> Result<WeatResult, FairnessError> {
    spec.validate()?;
    let scores: Vec<f64> = spec
        .x
        .iter()
        .chain(&spec.y)
        .map(|w| spec.association(w))
        .collect::<Result<_, _>>()?;
    let nx = spec.x.len();
    let n = scores.len();
    let observed_mask: Vec<bool> = (0..n).map(|i| i < nx).collect();
    let statistic = partition_statistic(&scores, &observed_mask);

    let mean_x = scores[..nx].iter().sum::<f64>() / nx as f64;
    let mean_y = scores[nx..].iter().sum::<f64>() / (n - nx) as f64;
    // Pooled over a sorted copy so the result does not depend on set order.
    let mut pooled = scores.clone();
    pooled.sort_by(f64::total_cmp);
    let mean_all = pooled.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        pooled.iter().map(|s| (s - mean_all) * (s - mean_all)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let std = math::sqrt(var);
    if !(std > 0.0) {
        return Err(FairnessError::ZeroSpread);
    }
    let effect_size = (mean_x - mean_y) / std;

    let (partitions, p_value) = if permutations == 0 {
        if n > EXHAUSTIVE_LIMIT {
            return Err(FairnessError::TooManyForExhaustive {
                max: EXHAUSTIVE_LIMIT,
                found: n,
            });
        }
        let mut hits = 0usize;
        let mut total = 0usize;
        for mask in 0u32..(1u32 << n) {
            if mask.count_ones() as usize != nx {
                continue;
            }
            let in_x: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
            total += 1;
            if partition_statistic(&scores, &in_x) >= statistic {
                hits += 1;
            }
        }
        (total, hits as f64 / total as f64)
    } else {
        let mut rng = rng::stream(seed, Stream::Permutation);
        let mut hits = 0usize;
        let mut in_x = alloc::vec![false; n];
        for _ in 0..permutations {
            let order = rng::permutation(n, &mut rng);
            in_x.iter_mut().for_each(|x| *x = false);
            for &i in &order[..nx] {
                in_x[i] = true;
            }
            if partition_statistic(&scores, &in_x) >= statistic {
                hits += 1;
            }
        }
        (permutations, (1 + hits) as f64 / (1 + permutations) as f64)
    };
    Ok(WeatResult {
        statistic,
        effect_size,
        p_value,
        partitions,
    })
}
