use std::collections::BTreeMap;

use kgat_core::fairness::{demographic_parity, equal_opportunity, weat, AuditRecord, WeatSpec};
use proptest::prelude::*;

fn records() -> impl Strategy<Value = Vec<AuditRecord>> {
    prop::collection::vec(
        (any::<bool>(), any::<bool>(), prop::sample::select(vec!["a", "b", "c"])),
        1..60,
    )
    .prop_map(|rows| rows.into_iter().map(|(t, p, a)| AuditRecord::new(t, p, a)).collect())
}

fn naive_rates(rs: &[AuditRecord], positives_only: bool) -> BTreeMap<String, f64> {
    let mut groups: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in rs {
        if positives_only && !r.y_true {
            continue;
        }
        let e = groups.entry(r.attribute.clone()).or_default();
        e.0 += 1;
        e.1 += r.y_pred as usize;
    }
    groups.into_iter().map(|(k, (n, p))| (k, p as f64 / n as f64)).collect()
}

fn naive_gap(rates: &BTreeMap<String, f64>) -> f64 {
    let mut gap = 0.0f64;
    for a in rates.values() {
        for b in rates.values() {
            gap = gap.max(a - b);
        }
    }
    gap
}

fn embeddings(words: &[&str], dim: usize, seed: u64) -> BTreeMap<String, Vec<f64>> {
    let mut s = seed | 1;
    words
        .iter()
        .map(|w| {
            let v = (0..dim)
                .map(|_| {
                    s ^= s << 13;
                    s ^= s >> 7;
                    s ^= s << 17;
                    (s % 2000) as f64 / 1000.0 - 0.999
                })
                .collect();
            (w.to_string(), v)
        })
        .collect()
}

fn spec(x: &[&str], y: &[&str], seed: u64) -> WeatSpec {
    let a = ["a1", "a2", "a3"];
    let b = ["b1", "b2"];
    let mut all: Vec<&str> = x.iter().chain(y).chain(&a).chain(&b).copied().collect();
    all.sort_unstable();
    let owned = |s: &[&str]| s.iter().map(|w| w.to_string()).collect();
    WeatSpec {
        x: owned(x),
        y: owned(y),
        a: owned(&a),
        b: owned(&b),
        embeddings: embeddings(&all, 5, seed),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn parity_matches_counting_oracle(rs in records()) {
        let frag = demographic_parity(&rs).unwrap();
        let rates = naive_rates(&rs, false);
        prop_assert_eq!(&frag.positive_rates, &rates);
        prop_assert_eq!(frag.gap, naive_gap(&rates));
    }

    #[test]
    fn opportunity_matches_counting_oracle(rs in records()) {
        let rates = naive_rates(&rs, true);
        match equal_opportunity(&rs) {
            Ok(frag) => {
                prop_assert_eq!(&frag.true_positive_rates, &rates);
                prop_assert_eq!(frag.gap, naive_gap(&rates));
            }
            Err(_) => prop_assert!(rates.is_empty()),
        }
    }

    #[test]
    fn parity_ignores_order_and_group_names(rs in records(), rot in 0usize..60) {
        let mut shuffled = rs.clone();
        shuffled.rotate_left(rot % rs.len());
        shuffled.reverse();
        let renamed: Vec<AuditRecord> = rs
            .iter()
            .map(|r| AuditRecord::new(r.y_true, r.y_pred, format!("group-{}", r.attribute)))
            .collect();
        let gap = demographic_parity(&rs).unwrap().gap;
        prop_assert_eq!(demographic_parity(&shuffled).unwrap().gap, gap);
        prop_assert_eq!(demographic_parity(&renamed).unwrap().gap, gap);
    }

    #[test]
    fn weat_statistic_is_antisymmetric(seed in any::<u64>()) {
        let fwd = weat(&spec(&["x1", "x2", "x3"], &["y1", "y2", "y3"], seed), 0, 0).unwrap();
        let rev = weat(&spec(&["y1", "y2", "y3"], &["x1", "x2", "x3"], seed), 0, 0).unwrap();
        prop_assert_eq!(fwd.statistic, -rev.statistic);
        prop_assert_eq!(fwd.effect_size, -rev.effect_size);
    }

    #[test]
    fn weat_exhaustive_matches_enumeration(seed in any::<u64>()) {
        let s = spec(&["x1", "x2"], &["y1", "y2"], seed);
        let result = weat(&s, 0, 0).unwrap();
        let scores: Vec<f64> = ["x1", "x2", "y1", "y2"].iter().map(|w| s.association(w).unwrap()).collect();
        let stat = |xs: [usize; 2]| -> f64 {
            (0..4).map(|i| if xs.contains(&i) { scores[i] } else { -scores[i] }).sum()
        };
        let observed = stat([0, 1]);
        let splits = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];
        let hits = splits.iter().filter(|&&xs| stat(xs) >= observed).count();
        prop_assert_eq!(result.partitions, 6);
        prop_assert_eq!(result.p_value, hits as f64 / 6.0);
        prop_assert!((result.statistic - observed).abs() < 1e-12);
    }
}

#[test]
fn worked_examples() {
    let parity: Vec<AuditRecord> = [(true, "a"), (false, "a"), (true, "b"), (false, "b"), (false, "b"), (false, "b")]
        .iter()
        .map(|&(p, a)| AuditRecord::new(false, p, a))
        .collect();
    let frag = demographic_parity(&parity).unwrap();
    assert_eq!(frag.positive_rates["a"], 0.5);
    assert_eq!(frag.positive_rates["b"], 0.25);
    assert_eq!(frag.gap, 0.25);
}
