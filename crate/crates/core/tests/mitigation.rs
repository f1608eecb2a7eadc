use std::collections::BTreeMap;

use kgat_core::causal::{DiscreteJoint, Observation, Variable};
use kgat_core::counterfactual::{augment, swap_attributes, SwapLexicon};
use kgat_core::data::{generate_biased, Dataset, Payload, Record, SynthConfig};
use proptest::prelude::*;

fn lexicon() -> SwapLexicon {
    SwapLexicon::default_gendered()
}

fn flip() -> BTreeMap<String, String> {
    [("female", "male"), ("male", "female")]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "he", "she", "his", "her", "mr", "ms", "king", "queen", "the", "works", "nurse", "a", "brother",
    ])
    .prop_map(String::from)
}

/// Occurrences of each single-token lexicon term across the dataset.
fn term_counts(d: &Dataset, lex: &SwapLexicon) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for (a, b) in lex.pairs() {
        counts.insert(a.join(" "), 0);
        counts.insert(b.join(" "), 0);
    }
    for r in d {
        if let Payload::Tokens(t) = &r.payload {
            for tok in t {
                if let Some(c) = counts.get_mut(tok) {
                    *c += 1;
                }
            }
        }
    }
    counts
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn swap_is_an_involution(tokens in prop::collection::vec(word(), 0..30)) {
        let lex = lexicon();
        prop_assert_eq!(swap_attributes(&swap_attributes(&tokens, &lex), &lex), tokens);
    }

    #[test]
    fn augmentation_balances_paired_terms(
        rows in prop::collection::vec((prop::collection::vec(word(), 1..10), any::<bool>(), any::<bool>()), 0..20)
    ) {
        let records: Vec<Record> = rows
            .iter()
            .enumerate()
            .map(|(i, (t, label, fem))| {
                Record::text(format!("r{i}"), &t.join(" "), *label, if *fem { "female" } else { "male" })
            })
            .collect();
        let d = Dataset::new(records).unwrap();
        let lex = lexicon();
        let out = augment(&d, &lex, &flip(), None).unwrap();
        let counts = term_counts(&out, &lex);
        for (a, b) in lex.pairs() {
            prop_assert_eq!(counts[&a.join(" ")], counts[&b.join(" ")]);
        }
        prop_assert!(out.len() <= 2 * d.len());
        for (orig, kept) in d.iter().zip(out.iter()) {
            prop_assert_eq!(orig, kept);
        }
        for cf in &out.records()[d.len()..] {
            let base = d.iter().find(|r| format!("{}#cf", r.id) == cf.id).unwrap();
            prop_assert_eq!(cf.label, base.label);
            prop_assert_ne!(&cf.attribute, &base.attribute);
        }
        let twice = augment(&out, &lex, &flip(), None).unwrap();
        let counts = term_counts(&twice, &lex);
        for (a, b) in lex.pairs() {
            prop_assert_eq!(counts[&a.join(" ")], counts[&b.join(" ")]);
        }
        prop_assert!(twice.len() <= 2 * out.len());
    }
}

#[test]
fn generated_data_doubles_where_markers_appear() {
    let d = generate_biased(&SynthConfig { n: 300, seed: 2, ..Default::default() }).unwrap();
    let gendered = d
        .iter()
        .filter(|r| swap_attributes(r.payload.tokens().unwrap(), &lexicon()) != r.payload.tokens().unwrap())
        .count();
    let out = augment(&d, &lexicon(), &flip(), None).unwrap();
    assert_eq!(out.len(), d.len() + gendered);
}

fn joint_case() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
    // Domain sizes for X, Y, Z1 and optionally Z2, each binary or ternary.
    (prop::collection::vec(2usize..=3, 3..=4)).prop_flat_map(|dims| {
        let cells: usize = dims.iter().product();
        (Just(dims), prop::collection::vec(0.01f64..1.0, cells))
    })
}

fn variable(name: &str, size: usize) -> Variable {
    Variable::new(name, (0..size).map(|i| format!("{name}{i}")))
}

fn build(dims: &[usize], weights: &[f64]) -> DiscreteJoint {
    let total: f64 = weights.iter().sum();
    let z = dims[2..].iter().enumerate().map(|(k, &s)| variable(&format!("z{k}"), s)).collect();
    DiscreteJoint::new(
        variable("x", dims[0]),
        variable("y", dims[1]),
        z,
        weights.iter().map(|w| w / total).collect(),
    )
    .unwrap()
}

/// Σ_z P(y|x,z) P(z) with every marginal recomputed from the flat table.
fn brute_force(dims: &[usize], table: &[f64], x: usize) -> Vec<f64> {
    let (nx, ny) = (dims[0], dims[1]);
    let nz: usize = dims[2..].iter().product();
    let at = |x: usize, y: usize, z: usize| table[(x * ny + y) * nz + z];
    (0..ny)
        .map(|y| {
            (0..nz)
                .map(|z| {
                    let pz: f64 = (0..nx).flat_map(|x| (0..ny).map(move |y| (x, y))).map(|(x, y)| at(x, y, z)).sum();
                    let pxz: f64 = (0..ny).map(|y| at(x, y, z)).sum();
                    at(x, y, z) / pxz * pz
                })
                .sum()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn adjustment_matches_brute_force((dims, weights) in joint_case()) {
        let j = build(&dims, &weights);
        for x in 0..dims[0] {
            let got = j.backdoor_adjust(&format!("x{x}")).unwrap();
            let want = brute_force(&dims, j.table(), x);
            for (g, w) in got.probabilities.iter().zip(&want) {
                prop_assert!((g - w).abs() < 1e-12);
            }
            prop_assert!((got.total() - 1.0).abs() < 1e-9);
            prop_assert!(got.probabilities.iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn independent_confounder_collapses(
        (dims, pxy, pz) in (2usize..=3, 2usize..=3, 2usize..=3).prop_flat_map(|(nx, ny, nz)| (
            Just(vec![nx, ny, nz]),
            prop::collection::vec(0.01f64..1.0, nx * ny),
            prop::collection::vec(0.01f64..1.0, nz),
        ))
    ) {
        // Z is independent of (X, Y), hence of X.
        let (nx, ny, nz) = (dims[0], dims[1], dims[2]);
        let mut weights = Vec::with_capacity(nx * ny * nz);
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    weights.push(pxy[x * ny + y] * pz[z]);
                }
            }
        }
        let j = build(&dims, &weights);
        for x in 0..nx {
            let x = format!("x{x}");
            let adj = j.backdoor_adjust(&x).unwrap();
            let cond = j.conditional(&x).unwrap();
            for (a, c) in adj.probabilities.iter().zip(&cond.probabilities) {
                prop_assert!((a - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relabelling_confounder_values_changes_nothing((dims, weights) in joint_case()) {
        let j = build(&dims, &weights);
        let renamed: Vec<Variable> = j
            .z()
            .iter()
            .map(|v| Variable::new(v.name.clone(), v.domain.iter().map(|d| format!("renamed-{d}"))))
            .collect();
        let k = DiscreteJoint::new(j.x().clone(), j.y().clone(), renamed, j.table().to_vec()).unwrap();
        for x in &j.x().domain {
            prop_assert_eq!(j.backdoor_adjust(x).unwrap(), k.backdoor_adjust(x).unwrap());
        }
    }
}

#[test]
fn counts_recover_a_known_joint() {
    use rand::{Rng, SeedableRng};
    let truth = [0.10, 0.05, 0.20, 0.15, 0.05, 0.15, 0.10, 0.20];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let obs: Vec<Observation> = (0..1000)
        .map(|_| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let cell = truth.iter().position(|p| { acc += p; u < acc }).unwrap_or(7);
            let (x, y, z) = (cell >> 2, (cell >> 1) & 1, cell & 1);
            Observation::new(x.to_string(), y.to_string(), [z.to_string()])
        })
        .collect();
    let j = DiscreteJoint::from_counts(&obs, None, 0.0).unwrap();
    let tv: f64 = j.table().iter().zip(&truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
    assert!(tv < 0.05, "total variation {tv}");
}
