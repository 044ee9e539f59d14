//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Reference values come from oracles written here, not from the
//! library code under test.

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use dialecto::affinity::lexical_affinity;
use dialecto::embcompare::{
    common_tokens, knn_graph, save_embeddings, semantic_affinity, semantic_pipeline, signature,
    EmbeddingTable,
};
use dialecto::emoji15::{
    average_rank, build_task, rank_models, write_examples, AccuracyMatrix, EmojiTaskConfig,
    TaskSplit, DEFAULT_LABELS,
};
use dialecto::ingest::TweetRecord;
use dialecto::textnorm::{emoji_base, extract_emojis};
use dialecto::vocab::{
    build_vocabulary, fit_heaps, fit_zipf, heaps_curve, log_spaced_sizes, min_frequency_cutoff,
    zipf_ranks, RegionVocabulary,
};
use dialecto::RegionCode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Zipf};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn rc(s: &str) -> RegionCode {
    RegionCode::new(s).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn zipf_stream(beta: f64, len: usize, seed: u64) -> Vec<u64> {
    let zipf = Zipf::new(1e6, beta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| zipf.sample(&mut rng) as u64).collect()
}

fn c1_zipf_recovery() -> Outcome {
    let start = Instant::now();
    let stream: Vec<String> = zipf_stream(1.86, 1_000_000, 1)
        .iter()
        .map(u64::to_string)
        .collect();
    let vocab = build_vocabulary(&stream, rc("MX"), 5).map_err(|e| e.to_string())?;
    let fit = fit_zipf(&zipf_ranks(&vocab).map_err(|e| e.to_string())?, None)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(
        (fit.exponent - 1.86).abs() <= 0.05 && elapsed < Duration::from_secs(30),
        format!(
            "beta={:.4} (target 1.86±0.05), {:.2}s (<30s)",
            fit.exponent,
            elapsed.as_secs_f64()
        ),
    )
}

fn c2_heaps_recovery() -> Outcome {
    let curve: Vec<(f64, f64)> = log_spaced_sizes(1_000_000, 64)
        .into_iter()
        .map(|n| (n as f64, 3.0 * (n as f64).powf(0.75)))
        .collect();
    let exact = fit_heaps(&curve).map_err(|e| e.to_string())?;
    let stream = zipf_stream(1.86, 1_000_000, 2);
    let sampled = fit_heaps(&heaps_curve(&stream, 64).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    check(
        (exact.exponent - 0.75).abs() <= 1e-9
            && sampled.exponent > 0.0
            && sampled.exponent < 1.0
            && sampled.r_squared > 0.99,
        format!(
            "noiseless alpha={:.12} (|Δ|≤1e-9); sampled alpha={:.4} in (0,1), r²={:.4} (>0.99)",
            exact.exponent, sampled.exponent, sampled.r_squared
        ),
    )
}

fn ci_lower(f: f64, n: f64, alpha: f64) -> f64 {
    let p = f / n;
    p - alpha * (p * (1.0 - p) / n).sqrt()
}

fn c3_cutoff() -> Outcome {
    let f = min_frequency_cutoff(100, 2.0).map_err(|e| e.to_string())?;
    let limit = min_frequency_cutoff(1_000_000_000, 2.0).map_err(|e| e.to_string())?;
    check(
        f == 400.0 / 104.0
            && ci_lower(4.0, 100.0, 2.0) >= 0.0
            && ci_lower(3.0, 100.0, 2.0) < 0.0
            && (limit - 4.0).abs() < 1e-6,
        format!(
            "f_min(100,2)={f} (400/104 exact), CI lower f=4 {:.5} ≥ 0, f=3 {:.5} < 0, |f_min(1e9,2)−4|={:.1e}",
            ci_lower(4.0, 100.0, 2.0),
            ci_lower(3.0, 100.0, 2.0),
            (limit - 4.0).abs()
        ),
    )
}

fn c4_lexical_affinity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let raw: Vec<Vec<u64>> = (0..3)
        .map(|_| {
            (0..500)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        0
                    } else {
                        rng.random_range(1..5000)
                    }
                })
                .collect()
        })
        .collect();
    let build = |scales: [u64; 3]| {
        let vocabs: Vec<RegionVocabulary> = ["AR", "CL", "UY"]
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let counts: std::collections::HashMap<String, u64> = raw[i]
                    .iter()
                    .enumerate()
                    .filter(|(_, &n)| n > 0)
                    .map(|(t, &n)| (format!("tok{t}"), n * scales[i]))
                    .collect();
                let total = counts.values().sum();
                RegionVocabulary::from_counts(rc(r), counts, total, 1).unwrap()
            })
            .collect();
        lexical_affinity(&vocabs).unwrap().matrix.values
    };
    let m = build([1, 1, 1]);
    let symmetric = (0..3).all(|i| (0..3).all(|j| m[i][j].to_bits() == m[j][i].to_bits()));
    let diagonal = (0..3).all(|i| m[i][i] == 0.0);
    let range = m.iter().flatten().all(|v| (0.0..=1.0).contains(v));
    let mut scaled_identical = true;
    for which in 0..3 {
        for factor in [2, 10] {
            let mut s = [1, 1, 1];
            s[which] = factor;
            let other = build(s);
            scaled_identical &= m
                .iter()
                .flatten()
                .zip(other.iter().flatten())
                .all(|(a, b)| a.to_bits() == b.to_bits());
        }
    }
    check(
        symmetric && diagonal && range && scaled_identical,
        format!(
            "symmetric={symmetric} zero-diagonal={diagonal} in-[0,1]={range} bit-identical-under-×2/×10={scaled_identical}"
        ),
    )
}

fn random_table(region: &str, tokens: &[String], dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = tokens
        .iter()
        .map(|t| {
            (
                t.clone(),
                (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
        })
        .collect();
    EmbeddingTable::from_rows(rc(region), dim, rows).unwrap()
}

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("w{i:04}")).collect()
}

fn cos_dist(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

fn c5_knn_exactness() -> Outcome {
    let tokens = names(1000);
    let table = random_table("MX", &tokens, 50, 5);
    let common = common_tokens(std::slice::from_ref(&table), 1).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let graph = knn_graph(&table, &common, 33).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    let mut mismatched = 0;
    for (qi, q) in tokens.iter().enumerate() {
        let qv = table.get(q).unwrap();
        let mut all: Vec<(f64, &str)> = tokens
            .iter()
            .filter(|t| *t != q)
            .map(|t| (cos_dist(qv, table.get(t).unwrap()), t.as_str()))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        let expected: HashSet<&str> = all[..33].iter().map(|&(_, t)| t).collect();
        let got: HashSet<&str> = graph.neighbors[qi]
            .iter()
            .map(|&(id, _)| common.token(id))
            .collect();
        if got != expected {
            mismatched += 1;
        }
    }
    check(
        mismatched == 0 && elapsed < Duration::from_secs(5),
        format!(
            "{mismatched}/1000 neighbor sets differ from the exhaustive scan; search {:.3}s (<5s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn orthogonal(dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while basis.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

fn map_table(t: &EmbeddingTable, region: &str, f: impl Fn(&[f64]) -> Vec<f64>) -> EmbeddingTable {
    let rows = t.iter().map(|(tok, v)| (tok.to_string(), f(v))).collect();
    EmbeddingTable::from_rows(rc(region), t.dim(), rows).unwrap()
}

fn c6_signatures() -> Outcome {
    let toks = names(150);
    let k = 10;
    let tables: Vec<EmbeddingTable> = ["AR", "CO", "ES", "MX", "PE"]
        .iter()
        .enumerate()
        .map(|(i, r)| random_table(r, &toks, 16, 60 + i as u64))
        .collect();
    let common = common_tokens(&tables, 5).map_err(|e| e.to_string())?;
    let sig = signature(&knn_graph(&tables[0], &common, k).map_err(|e| e.to_string())?);
    let weights_ok = sig.entries.iter().all(|&(_, w)| w > 0.8333 && w <= 1.5);
    let count_ok = sig.len() == toks.len() * k;

    let twin = map_table(&tables[0], "UY", <[f64]>::to_vec);
    let s_twin = signature(&knn_graph(&twin, &common, k).map_err(|e| e.to_string())?);
    let identical = semantic_affinity(&[sig.clone(), s_twin])
        .map_err(|e| e.to_string())?
        .matrix
        .values[0][1];

    let q = orthogonal(16, 6);
    let rotated = map_table(&tables[2], "ES", |v| {
        q.iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    });
    let base = semantic_pipeline(&tables, 5, k)
        .map_err(|e| e.to_string())?
        .outcome
        .matrix;
    let mut swapped = tables.clone();
    swapped[2] = rotated;
    let rot = semantic_pipeline(&swapped, 5, k)
        .map_err(|e| e.to_string())?
        .outcome
        .matrix;
    let max_dev = (0..5)
        .map(|j| (base.values[2][j] - rot.values[2][j]).abs())
        .fold(0.0, f64::max);
    check(
        weights_ok && count_ok && identical == 0.0 && max_dev <= 1e-9,
        format!(
            "weights in (0.8333,1.5]={weights_ok}; entries={} (tokens×k={}); identical-table distance={identical}; rotated row max deviation={max_dev:.1e} (≤1e-9) on ES-AR={:.6}",
            sig.len(),
            toks.len() * k,
            base.values[2][0]
        ),
    )
}

fn c7_dense_oracle() -> Outcome {
    let shared = names(20);
    let tables: Vec<EmbeddingTable> = ["AR", "CO", "VE"]
        .iter()
        .enumerate()
        .map(|(i, r)| random_table(r, &shared, 5, 70 + i as u64))
        .collect();
    let k = 3;
    let got = semantic_pipeline(&tables, 3, k)
        .map_err(|e| e.to_string())?
        .outcome
        .matrix
        .values;

    let v = shared.len();
    let dense: Vec<Vec<f64>> = tables
        .iter()
        .map(|t| {
            let mut vec = vec![0.0; v * v];
            for i in 0..v {
                let mut d: Vec<(f64, usize)> = (0..v)
                    .filter(|&j| j != i)
                    .map(|j| {
                        (
                            cos_dist(t.get(&shared[i]).unwrap(), t.get(&shared[j]).unwrap()),
                            j,
                        )
                    })
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                for &(dist, j) in &d[..k] {
                    vec[i * v + j] = 0.5 + 1.0 / (1.0 + dist);
                }
            }
            vec
        })
        .collect();
    let mut max_dev: f64 = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            let expected = if a == b {
                0.0
            } else {
                cos_dist(&dense[a], &dense[b])
            };
            max_dev = max_dev.max((got[a][b] - expected).abs());
        }
    }
    check(
        max_dev <= 1e-9,
        format!(
            "max deviation from dense pipeline {max_dev:.1e} (≤1e-9); AR-CO={:.6} AR-VE={:.6}",
            got[0][1], got[0][2]
        ),
    )
}

fn emoji_corpus(n: usize, seed: u64) -> Vec<TweetRecord> {
    let words = [
        "hola", "que", "tal", "amigo", "hoy", "mañana", "jaja", "bien", "vamos",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut parts: Vec<String> = (0..rng.random_range(4..10))
                .map(|_| words[rng.random_range(0..words.len())].to_string())
                .collect();
            let label = DEFAULT_LABELS[rng.random_range(0..15)];
            for _ in 0..rng.random_range(1..3) {
                let at = rng.random_range(0..=parts.len());
                parts.insert(at, label.to_string());
            }
            if rng.random_bool(0.1) {
                parts.push(DEFAULT_LABELS[rng.random_range(0..15)].to_string());
            }
            if rng.random_bool(0.1) {
                parts.push("😂👍🏾".into());
            }
            TweetRecord {
                id: 10_000 + i as u64,
                text: parts.join(" "),
                region: rc(["AR", "CL", "MX"][i % 3]),
                is_retweet: false,
                lang: "es".into(),
                source: None,
            }
        })
        .collect()
}

fn task_bytes(split: &TaskSplit) -> Vec<u8> {
    let mut out = Vec::new();
    for s in split.regions.values() {
        write_examples(&s.train, &mut out).unwrap();
        write_examples(&s.test, &mut out).unwrap();
    }
    out
}

fn c8_emoji15() -> Outcome {
    let records = emoji_corpus(3000, 8);
    let config = EmojiTaskConfig::default();
    let split = build_task(records.clone(), &config).map_err(|e| e.to_string())?;
    let bases: HashSet<String> = DEFAULT_LABELS.iter().map(|l| emoji_base(l)).collect();
    let mut worst_gap = 0;
    let mut leaked = 0;
    let mut residual = 0;
    for s in split.regions.values() {
        let mut counts = [[0usize; 2]; 15];
        for e in &s.train {
            counts[e.label][0] += 1;
        }
        for e in &s.test {
            counts[e.label][1] += 1;
        }
        worst_gap = counts
            .iter()
            .map(|c| c[0].abs_diff(c[1]))
            .fold(worst_gap, usize::max);
        let train_ids: HashSet<u64> = s.train.iter().map(|e| e.id).collect();
        leaked += s.test.iter().filter(|e| train_ids.contains(&e.id)).count();
        residual += s
            .train
            .iter()
            .chain(&s.test)
            .filter(|e| {
                extract_emojis(&e.text)
                    .iter()
                    .any(|o| bases.contains(&o.base))
            })
            .count();
    }
    let again = build_task(records, &config).map_err(|e| e.to_string())?;
    let reproducible = task_bytes(&split) == task_bytes(&again);
    check(
        worst_gap <= 1 && leaked == 0 && residual == 0 && reproducible,
        format!(
            "{} examples; max per-label train/test gap {worst_gap} (≤1); leaked ids {leaked}; residual label emoji {residual}; same-seed byte-identical={reproducible}",
            split.stats.examples
        ),
    )
}

fn c9_rank_harness() -> Outcome {
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
    let ranking = rank_models(&acc).map_err(|e| e.to_string())?;
    let avg = average_rank(&acc, &ranking).map_err(|e| e.to_string())?;

    // oracle: sort each column descending; rank = 1 + number of strictly better models
    let mut ok = true;
    let mut oracle_avg = [0.0; 5];
    for r in 0..4 {
        let mut order: Vec<usize> = (0..5).collect();
        order.sort_by(|&a, &b| {
            values[b][r]
                .total_cmp(&values[a][r])
                .then(models[a].cmp(models[b]))
        });
        let rank_of = |m: usize| 1 + (0..5).filter(|&o| values[o][r] > values[m][r]).count();
        for m in 0..5 {
            ok &= ranking.ranks[m][r] == Some(rank_of(m));
            oracle_avg[m] += rank_of(m) as f64 / 4.0;
        }
        let top: Vec<&str> = order.iter().take(5).map(|&m| models[m]).collect();
        ok &= ranking.top5[&rc(regions[r])] == top;
        let local = models.iter().position(|&m| m == regions[r]).unwrap();
        ok &= ranking.local_rank.get(&rc(regions[r])) == Some(&rank_of(local));
    }
    ok &= avg
        .iter()
        .zip(&oracle_avg)
        .all(|(a, b)| (a - b).abs() < 1e-12);
    let tie = ranking.ranks[0][3] == Some(2)
        && ranking.ranks[3][3] == Some(2)
        && ranking.ranks[1][3] == Some(4);
    check(
        ok && tie,
        format!("ranks/local/top5/avg match sort oracle={ok}; MX tie ALL=ES=2 then AR=4: {tie}; avg={avg:?}"),
    )
}

fn alpha_word(mut n: u64) -> String {
    let mut s = Vec::new();
    loop {
        s.push(b'a' + (n % 26) as u8);
        n /= 26;
        if n == 0 {
            break;
        }
        n -= 1;
    }
    String::from_utf8(s).unwrap()
}

fn write_fixture(dir: &Path) -> (Vec<PathBuf>, Vec<PathBuf>) {
    let zipf = Zipf::new(5000.0, 1.3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut corpora = Vec::new();
    for (f, region) in ["AR", "ES", "MX", "CO"].iter().enumerate() {
        let mut lines = Vec::new();
        for i in 0..3000 {
            let words: Vec<String> = (0..rng.random_range(5..15))
                .map(|_| alpha_word(zipf.sample(&mut rng) as u64 + f as u64 * 7))
                .collect();
            lines.push(
                serde_json::json!({
                    "id": f * 100_000 + i, "text": words.join(" "), "country": region,
                    "retweet": false, "lang": "es"
                })
                .to_string(),
            );
        }
        let path = dir.join(format!("{region}.jsonl"));
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();
        corpora.push(path);
    }
    let toks = names(400);
    let mut vecs = Vec::new();
    for (i, region) in ["AR", "CL", "ES", "MX", "PE", "UY"].iter().enumerate() {
        let t = random_table(region, &toks[i * 10..], 24, 200 + i as u64);
        let path = dir.join(format!("{}.vec", region.to_lowercase()));
        save_embeddings(&t, &path).unwrap();
        vecs.push(path);
    }
    (corpora, vecs)
}

fn run_cli(args: &[&str], inputs: &[PathBuf], out: &Path, threads: usize) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dialecto"));
    cmd.args(args)
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg(threads.to_string());
    for p in inputs {
        cmd.arg("--input").arg(p);
    }
    let output = cmd.output().map_err(|e| e.to_string())?;
    if !output.status.success() {
        return Err(format!(
            "{args:?} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        ));
    }
    Ok(())
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    files
}

fn c10_thread_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (corpora, vecs) = write_fixture(dir.path());
    let mut compared = 0;
    let mut differing = Vec::new();
    for (args, inputs) in [
        (vec!["vocab"], &corpora),
        (vec!["lexical-affinity"], &corpora),
        (vec!["emb-affinity", "--k", "12"], &vecs),
    ] {
        let one = dir.path().join(format!("{}-t1", args[0]));
        let eight = dir.path().join(format!("{}-t8", args[0]));
        run_cli(&args, inputs, &one, 1)?;
        run_cli(&args, inputs, &eight, 8)?;
        let (a, b) = (snapshot(&one), snapshot(&eight));
        compared += a.len();
        if a.is_empty() || a != b {
            differing.push(args[0]);
        }
    }
    check(
        differing.is_empty(),
        format!("{compared} artifact files compared across --threads 1 and 8; differing commands: {differing:?}"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("Zipf recovery", c1_zipf_recovery),
        ("Heaps recovery", c2_heaps_recovery),
        ("Cutoff formula", c3_cutoff),
        ("Lexical affinity", c4_lexical_affinity),
        ("kNN exactness", c5_knn_exactness),
        ("Signature correctness", c6_signatures),
        ("End-to-end semantic affinity", c7_dense_oracle),
        ("Emoji-15 builder", c8_emoji15),
        ("Rank harness", c9_rank_harness),
        ("Determinism under parallelism", c10_thread_determinism),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
