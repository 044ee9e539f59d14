use std::collections::{BTreeMap, HashSet};

use dialecto::emoji15::{
    average_rank, build_task, rank_models, read_examples, read_predictions, write_examples,
    AccuracyMatrix, EmojiTaskConfig, EvalReport, TaskSplit, DEFAULT_LABELS,
};
use dialecto::ingest::TweetRecord;
use dialecto::textnorm::{emoji_base, extract_emojis};
use dialecto::RegionCode;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rc(s: &str) -> RegionCode {
    RegionCode::new(s).unwrap()
}

const WORDS: [&str; 8] = [
    "hola", "que", "tal", "amigo", "hoy", "mañana", "jaja", "bien",
];

/// Records with one, two or no label emoji plus occasional distractors.
fn synthetic_corpus(n: usize, seed: u64) -> Vec<TweetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let regions = ["AR", "MX", "ES"];
    (0..n)
        .map(|i| {
            let mut text: Vec<String> = (0..rng.random_range(3..9))
                .map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string())
                .collect();
            let label = DEFAULT_LABELS[rng.random_range(0..15)];
            let repeats = rng.random_range(1..3);
            for _ in 0..repeats {
                let at = rng.random_range(0..=text.len());
                text.insert(at, label.to_string());
            }
            match rng.random_range(0..10) {
                0 => text.push(DEFAULT_LABELS[rng.random_range(0..15)].to_string()),
                1 => text.push("😂👍🏽".into()),
                2 => {
                    text.clear();
                    text.push("sin etiqueta".into());
                }
                _ => {}
            }
            TweetRecord {
                id: 1_000 + i as u64,
                text: text.join(if rng.random_bool(0.2) { "" } else { " " }),
                region: rc(regions[i % 3]),
                is_retweet: false,
                lang: "es".into(),
                source: None,
            }
        })
        .collect()
}

fn label_counts(examples: &[dialecto::emoji15::LabeledExample]) -> [usize; 15] {
    let mut c = [0; 15];
    for e in examples {
        c[e.label] += 1;
    }
    c
}

fn serialize(split: &TaskSplit) -> Vec<u8> {
    let mut out = Vec::new();
    for s in split.regions.values() {
        write_examples(&s.train, &mut out).unwrap();
        write_examples(&s.test, &mut out).unwrap();
    }
    out
}

#[test]
fn three_thousand_record_build() {
    let records = synthetic_corpus(3000, 5);
    let config = EmojiTaskConfig::default();
    let split = build_task(records.clone(), &config).unwrap();
    let label_bases: HashSet<String> = DEFAULT_LABELS.iter().map(|l| emoji_base(l)).collect();

    assert!(split.stats.examples > 2000);
    assert!(split.stats.multiple_labels > 0);
    for s in split.regions.values() {
        let (tr, te) = (label_counts(&s.train), label_counts(&s.test));
        for l in 0..15 {
            assert!(
                tr[l].abs_diff(te[l]) <= 1,
                "label {l}: {} vs {}",
                tr[l],
                te[l]
            );
        }
        let train_ids: HashSet<u64> = s.train.iter().map(|e| e.id).collect();
        assert!(s.test.iter().all(|e| !train_ids.contains(&e.id)));
        for e in s.train.iter().chain(&s.test) {
            assert!(
                extract_emojis(&e.text)
                    .iter()
                    .all(|o| !label_bases.contains(&o.base)),
                "{}",
                e.text
            );
        }
    }

    let again = build_task(records.clone(), &config).unwrap();
    assert_eq!(serialize(&split), serialize(&again));

    let other = build_task(records, &EmojiTaskConfig { seed: 7, ..config }).unwrap();
    assert_ne!(serialize(&split), serialize(&other));
    for (a, b) in split.regions.values().zip(other.regions.values()) {
        assert_eq!(label_counts(&a.train), label_counts(&b.train));
        assert_eq!(label_counts(&a.test), label_counts(&b.test));
    }
}

#[test]
fn export_round_trip() {
    let split = build_task(synthetic_corpus(300, 1), &EmojiTaskConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ar = &split.regions[&rc("AR")];
    let path = dir.path().join("AR.test.jsonl");
    write_examples(&ar.test, std::fs::File::create(&path).unwrap()).unwrap();
    assert_eq!(read_examples(&path, rc("AR")).unwrap(), ar.test);
    let first = std::fs::read_to_string(&path).unwrap();
    let v: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert_eq!(v.as_object().unwrap().len(), 3);

    let preds = dir.path().join("p.txt");
    std::fs::write(&preds, "1\n14\n\n3\n").unwrap();
    assert_eq!(read_predictions(&preds, 15).unwrap(), [1, 14, 3]);
    std::fs::write(&preds, "1\n15\n").unwrap();
    assert!(read_predictions(&preds, 15).is_err());
}

/// Sort-based ranking: position of the first model sharing the score.
fn oracle_ranks(column: &[f64]) -> Vec<usize> {
    let mut sorted: Vec<f64> = column.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    column
        .iter()
        .map(|v| sorted.iter().position(|s| s == v).unwrap() + 1)
        .collect()
}

#[test]
fn hand_built_five_by_four() {
    let models = ["ALL", "AR", "CL", "ES", "MX"];
    let regions = ["AR", "CL", "ES", "MX"];
    let values = [
        [0.45, 0.40, 0.38, 0.41],
        [0.49, 0.39, 0.36, 0.40],
        [0.44, 0.42, 0.35, 0.39],
        [0.43, 0.38, 0.40, 0.41],
        [0.42, 0.37, 0.37, 0.43],
    ];
    let mut acc = AccuracyMatrix::new(models.map(String::from).to_vec(), regions.map(rc).to_vec());
    for (m, row) in values.iter().enumerate() {
        for (r, &v) in row.iter().enumerate() {
            acc.set(models[m], rc(regions[r]), v).unwrap();
        }
    }
    let ranking = rank_models(&acc).unwrap();
    for r in 0..4 {
        let column: Vec<f64> = values.iter().map(|row| row[r]).collect();
        let expected = oracle_ranks(&column);
        for m in 0..5 {
            assert_eq!(ranking.ranks[m][r], Some(expected[m]));
        }
    }
    // ALL and ES tie on MX at 0.41 and share rank 2; the next is 4
    assert_eq!(ranking.ranks[0][3], Some(2));
    assert_eq!(ranking.ranks[3][3], Some(2));
    assert_eq!(ranking.ranks[1][3], Some(4));
    assert_eq!(
        ranking.local_rank,
        BTreeMap::from([(rc("AR"), 1), (rc("CL"), 1), (rc("ES"), 1), (rc("MX"), 1)])
    );
    assert_eq!(ranking.top5[&rc("MX")], ["MX", "ALL", "ES", "AR", "CL"]);
    assert_eq!(ranking.top5[&rc("AR")], ["AR", "ALL", "CL", "ES", "MX"]);

    let avg = average_rank(&acc, &ranking).unwrap();
    let expected_avg: Vec<f64> = (0..5)
        .map(|m| {
            (0..4)
                .map(|r| ranking.ranks[m][r].unwrap() as f64)
                .sum::<f64>()
                / 4.0
        })
        .collect();
    assert_eq!(avg, expected_avg);
    assert!(avg.iter().all(|&a| (1.0..=5.0).contains(&a)));

    let report = EvalReport::from_accuracy(&acc).unwrap();
    let json = serde_json::to_value(&report).unwrap();
    for key in ["accuracy", "ranks", "local_rank", "avg_rank", "top5"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

proptest! {
    #[test]
    fn ranks_follow_sort_oracle(values in prop::collection::vec(prop::collection::vec(0u8..6, 4), 1..8)) {
        let models: Vec<String> = (0..values.len()).map(|i| format!("M{i}")).collect();
        let regions = ["AR", "CL", "ES", "MX"].map(rc).to_vec();
        let mut acc = AccuracyMatrix::new(models.clone(), regions.clone());
        for (m, row) in values.iter().enumerate() {
            for (r, &v) in row.iter().enumerate() {
                acc.set(&models[m], regions[r], v as f64 / 10.0).unwrap();
            }
        }
        let ranking = rank_models(&acc).unwrap();
        for r in 0..4 {
            let column: Vec<f64> = values.iter().map(|row| row[r] as f64 / 10.0).collect();
            let expected = oracle_ranks(&column);
            for m in 0..models.len() {
                prop_assert_eq!(ranking.ranks[m][r], Some(expected[m]));
                for m2 in 0..models.len() {
                    if column[m] > column[m2] {
                        prop_assert!(ranking.ranks[m][r] < ranking.ranks[m2][r]);
                    }
                }
            }
        }
        let avg = average_rank(&acc, &ranking).unwrap();
        prop_assert!(avg.iter().all(|&a| a >= 1.0 && a <= models.len() as f64));
    }
}
