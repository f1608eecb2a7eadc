//! Counterfactual augmentation by swapping attribute terms.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::data::{tokenize, Dataset, DataError, Payload, Record};
use crate::graph::{link_entities, KnowledgeGraph};

/// Suffix appended to the id of a counterfactual record.
pub const COUNTERFACTUAL_SUFFIX: &str = "#cf";

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum CounterfactualError {
    #[error("term {0:?} is paired with itself")]
    SelfPair(String),
    #[error("term {0:?} appears in more than one pair")]
    Overlap(String),
    #[error("empty term in lexicon")]
    EmptyTerm,
    #[error("record {id:?}: attribute {attribute:?} has no entry in the flip map")]
    MissingFlip { id: String, attribute: String },
    #[error("record {0:?} is not a text record")]
    NotText(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Unordered term pairs; a term may span several tokens.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SwapLexicon {
    pairs: Vec<(Vec<String>, Vec<String>)>,
    partner: BTreeMap<Vec<String>, Vec<String>>,
    longest: usize,
}

impl SwapLexicon {
    pub fn new<A: AsRef<str>, B: AsRef<str>>(pairs: &[(A, B)]) -> Result<Self, CounterfactualError> {
        let mut lexicon = Self::default();
        for (a, b) in pairs {
            lexicon.insert(a.as_ref(), b.as_ref())?;
        }
        Ok(lexicon)
    }

    /// Adds one pair, checking it against the existing ones.
    pub fn insert(&mut self, a: &str, b: &str) -> Result<(), CounterfactualError> {
        let (ta, tb) = (tokenize(a), tokenize(b));
        if ta.is_empty() || tb.is_empty() {
            return Err(CounterfactualError::EmptyTerm);
        }
        if ta == tb {
            return Err(CounterfactualError::SelfPair(ta.join(" ")));
        }
        for t in [&ta, &tb] {
            if self.partner.contains_key(t) {
                return Err(CounterfactualError::Overlap(t.join(" ")));
            }
        }
        self.longest = self.longest.max(ta.len()).max(tb.len());
        self.partner.insert(ta.clone(), tb.clone());
        self.partner.insert(tb.clone(), ta.clone());
        self.pairs.push((ta, tb));
        Ok(())
    }

    pub fn pairs(&self) -> &[(Vec<String>, Vec<String>)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn partner(&self, term: &[String]) -> Option<&[String]> {
        self.partner.get(term).map(Vec::as_slice)
    }

    /// Gendered English pronouns, titles and kinship terms.
    pub fn default_gendered() -> Self {
        Self::new(&[
            ("he", "she"),
            ("his", "her"),
            ("himself", "herself"),
            ("mr", "ms"),
            ("man", "woman"),
            ("men", "women"),
            ("boy", "girl"),
            ("father", "mother"),
            ("son", "daughter"),
            ("brother", "sister"),
            ("husband", "wife"),
            ("king", "queen"),
            ("male", "female"),
        ])
        .expect("built-in lexicon is valid")
    }
}

/// Replaces every lexicon term by its partner, longest match first.
pub fn swap_attributes<S: AsRef<str>>(tokens: &[S], lexicon: &SwapLexicon) -> Vec<String> {
    let tokens: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let max = lexicon.longest.min(tokens.len() - i);
        let hit = (1..=max)
            .rev()
            .find_map(|len| lexicon.partner(&tokens[i..i + len]).map(|p| (len, p)));
        match hit {
            Some((len, partner)) => {
                out.extend(partner.iter().cloned());
                i += len;
            }
            None => {
                out.push(tokens[i].clone());
                i += 1;
            }
        }
    }
    out
}

/// Appends a swapped copy of every text record the lexicon changes.
///
/// Copies keep the label, take the attribute `flip[attribute]` and the id
/// suffix [`COUNTERFACTUAL_SUFFIX`]. With a graph, their mentions are relinked.
pub fn augment(
    dataset: &Dataset,
    lexicon: &SwapLexicon,
    flip: &BTreeMap<String, String>,
    graph: Option<&KnowledgeGraph>,
) -> Result<Dataset, CounterfactualError> {
    let mut extra = Vec::new();
    for r in dataset {
        let Payload::Tokens(tokens) = &r.payload else {
            return Err(CounterfactualError::NotText(r.id.clone()));
        };
        let swapped = swap_attributes(tokens, lexicon);
        if &swapped == tokens {
            continue;
        }
        let attribute = flip.get(&r.attribute).ok_or_else(|| CounterfactualError::MissingFlip {
            id: r.id.clone(),
            attribute: r.attribute.clone(),
        })?;
        let mentions = graph.map(|g| link_entities(&swapped, g)).unwrap_or_default();
        extra.push(Record {
            id: alloc::format!("{}{}", r.id, COUNTERFACTUAL_SUFFIX),
            payload: Payload::Tokens(swapped),
            label: r.label,
            attribute: attribute.clone(),
            mentions,
        });
    }
    let mut records = dataset.records().to_vec();
    records.extend(extra);
    Ok(Dataset::new(records)?)
}
