use kgat::checkpoint;
use kgat_core::data::{generate_biased, Dataset, Record, SynthConfig};
use kgat_core::graph::KnowledgeGraph;
use kgat_core::model::ModelConfig;
use kgat_core::train::{self, TrainerConfig};
use proptest::prelude::*;

fn trained(adversary: bool, seed: u64) -> train::TrainedModel {
    let g = kgat_core::demo::graph();
    let mut d = generate_biased(&SynthConfig { n: 60, seed, ..Default::default() }).unwrap();
    d.relink(&g);
    let cfg = TrainerConfig {
        epochs: 1,
        learning_rate: 1e-2,
        adversary,
        seed,
        model: ModelConfig { text_dim: 4, gcn_dims: vec![3, 2], key_dim: 2, value_dim: 2, heads: 2, use_kg: true },
        ..Default::default()
    };
    train::train(&d, &g, &cfg).unwrap().0
}

#[test]
fn checkpoints_round_trip_exactly() {
    for adversary in [true, false] {
        let m = trained(adversary, 3);
        let text = checkpoint::to_string(&m);
        assert!(text.starts_with("KGATv1\n"));
        assert_eq!(checkpoint::from_str(&text).unwrap(), m);
    }
    let rows: Vec<Record> = (0..20)
        .map(|i| Record::tabular(format!("t{i}"), vec![i as f64 * 1e-7, -(i as f64), 1.0 / 3.0], i % 3 == 0, if i % 2 == 0 { "a b" } else { "c" }))
        .collect();
    let d = Dataset::new(rows).unwrap();
    let cfg = TrainerConfig { epochs: 1, learning_rate: 1e-2, model: ModelConfig { use_kg: false, ..Default::default() }, ..Default::default() };
    let (m, _) = train::train(&d, &KnowledgeGraph::new(0), &cfg).unwrap();
    assert_eq!(checkpoint::from_str(&checkpoint::to_string(&m)).unwrap(), m);
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let text = checkpoint::to_string(&trained(true, 1));
    assert!(checkpoint::from_str("").is_err());
    assert!(checkpoint::from_str(&text.replacen("KGATv1", "KGATv0", 1)).is_err());
    assert!(checkpoint::from_str(&text.replace("\nend\n", "\n")).is_err());
    let lines: Vec<&str> = text.lines().collect();
    let row = lines.iter().position(|l| l.starts_with("matrix w_q")).unwrap() + 1;
    let mut broken = lines.clone();
    broken[row] = "1e0";
    let err = checkpoint::from_str(&broken.join("\n")).unwrap_err();
    assert_eq!(err.line, row + 1);
    let truncated = &text[..text.len() / 2];
    assert!(checkpoint::from_str(truncated).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generated_jsonl_reloads_to_the_same_records(seed in 0u64..1000, n in 1usize..80) {
        let d = generate_biased(&SynthConfig { n, seed, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        std::fs::write(&path, kgat::io::text_dataset_jsonl(&d)).unwrap();
        let back = kgat::io::load_text_dataset(&path, &KnowledgeGraph::new(0), None).unwrap();
        prop_assert_eq!(back, d);
    }
}
