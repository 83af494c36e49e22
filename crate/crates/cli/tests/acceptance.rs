//! Acceptance criteria. Prints one `PASS`/`FAIL`/`SKIP` line per criterion and exits
//! non-zero if any criterion fails.
//!
//! The full-data check runs only when `FMA_DIR` points at a directory holding the FMA
//! `features.csv` and `tracks.csv`; build with `--release` for that one.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use tripletsim::dataset::{build_corpus, load_feature_table, load_metadata, FeatureFormat, MetadataFormat};
use tripletsim::evaluator::{auc, evaluate};
use tripletsim::network::{grad_check, TripletInput};
use tripletsim::rng::{stream_rng, Stream};
use tripletsim::sampler::TripletSampler;
use tripletsim::synthgen::{generate, SynthData, SynthSpec};
use tripletsim::trainer::train;
use tripletsim::{
    Corpus, Embedder, LossConfig, ModelFile, NetworkParams, Partition, SamplerConfig, Strategy, TrainConfig,
};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Verdict;

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

/// 4 genres × 8 artists × 6 tracks, d = 32, spreads 3 / 1 / 1.2.
fn desk_spec() -> SynthSpec {
    SynthSpec {
        n_genres: 4,
        artists_per_genre: 8,
        tracks_per_artist: 6,
        dim: 32,
        genre_spread: 3.0,
        artist_spread: 1.0,
        track_noise: 1.2,
        seed: 0,
    }
}

fn desk_corpus(data: &SynthData) -> Corpus {
    let (corpus, _) = build_corpus(&data.features, &data.metadata, 2).expect("synthetic corpus");
    corpus.split_by_artist(0.7, 0).expect("split")
}

fn gradient_correctness() -> Verdict {
    let started = Instant::now();
    let mut rng = stream_rng(1, Stream::Synth, 1);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for case in 0..50u64 {
        let dim = [2, 4, 8][case as usize % 3];
        let batch_len = rng.random_range(1..=16);
        let mut params = NetworkParams::init(dim, case).unwrap();
        for b in params.b1.iter_mut().chain(params.b2.iter_mut()) {
            *b = rng.random_range(-0.5..0.5);
        }
        let vectors: Vec<Vec<f64>> = (0..3 * batch_len)
            .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let batch: Vec<TripletInput<'_>> = vectors
            .chunks(3)
            .map(|c| TripletInput {
                anchor: &c[0],
                positive: &c[1],
                negative: &c[2],
            })
            .collect();
        let report = grad_check(&params, &batch, &LossConfig::default(), 1e-5, 1e-4, case).unwrap();
        worst = worst.max(report.max_rel_err);
        failures += usize::from(!report.pass);
    }
    let elapsed = started.elapsed();
    verdict(
        failures == 0 && worst < 1e-4 && elapsed < Duration::from_secs(30),
        format!("50 cases, max relative error {worst:.2e} (< 1e-4), {failures} failing, {elapsed:.1?} (< 30s)"),
    )
}

/// Counts relevant/irrelevant pairs ordered correctly, ties as one half.
fn pairwise_auc(scores: &[f64], relevant: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !relevant[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if relevant[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn auc_oracle_equivalence() -> Verdict {
    let mut rng = stream_rng(2, Stream::Synth, 2);
    let mut max_diff: f64 = 0.0;
    let mut tied_instances = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=200);
        let mut relevant: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        relevant[0] = true;
        relevant[1] = false;
        // coarse levels force ties in about half the instances
        let levels = if rng.random_bool(0.5) { rng.random_range(1..6) } else { 0 };
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if levels > 0 {
                    rng.random_range(0..levels) as f64
                } else {
                    rng.random_range(-1.0..1.0)
                }
            })
            .collect();
        tied_instances += usize::from(levels > 0);
        let fast = auc(&scores, &relevant).unwrap();
        max_diff = max_diff.max((fast - pairwise_auc(&scores, &relevant)).abs());
    }
    let perfect = auc(&[3.0, 2.0, 1.0, 0.0], &[true, true, false, false]).unwrap();
    let ties = auc(&[1.0; 7], &[true, false, true, false, false, true, false]).unwrap();
    verdict(
        max_diff <= 1e-12 && perfect == 1.0 && ties == 0.5,
        format!(
            "1000 instances ({tied_instances} with ties), max |fast - pairwise| {max_diff:.1e} (<= 1e-12); perfect {perfect}, all-ties {ties}"
        ),
    )
}

fn sampler_contract() -> Verdict {
    let data = generate(&desk_spec()).unwrap();
    let corpus = desk_corpus(&data);
    let n = 10_000;
    let mut notes = Vec::new();
    let mut ok = true;
    for (label, strategy, allow_fallback, seed) in [
        ("random", Strategy::Random, true, 3),
        ("genre", Strategy::SameGenre, true, 4),
        ("genre/no-fallback", Strategy::SameGenre, false, 5),
    ] {
        let config = SamplerConfig {
            strategy,
            seed,
            allow_fallback,
        };
        let sampler = TripletSampler::new(&corpus, config).unwrap();
        let triplets = sampler.sample_epoch(0, n).unwrap().triplets;
        let mut valid = 0;
        let mut same_genre = 0;
        let mut anchors: BTreeMap<u64, usize> = BTreeMap::new();
        for t in &triplets {
            let (a, p, g) = (corpus.record(t.anchor), corpus.record(t.positive), corpus.record(t.negative));
            let train = [t.anchor, t.positive, t.negative]
                .iter()
                .all(|&i| corpus.artist_partition(corpus.record(i).artist_id) == Some(Partition::Train));
            if t.anchor != t.positive && a.artist_id == p.artist_id && g.artist_id != a.artist_id && train {
                valid += 1;
            }
            if a.genre.is_some() && a.genre == g.genre {
                same_genre += 1;
            }
            *anchors.entry(a.artist_id).or_default() += 1;
        }
        // every TRAIN artist here has >= 2 TRAIN tracks, so all are eligible anchors
        let train_artists = corpus.tracks_by_artist(Some(Partition::Train));
        let k = train_artists.len() as f64;
        let expected = n as f64 / k;
        let sigma = (expected * (1.0 - 1.0 / k)).sqrt();
        let counts: Vec<f64> = train_artists
            .keys()
            .map(|id| anchors.get(id).copied().unwrap_or(0) as f64)
            .collect();
        let max_dev = counts.iter().map(|c| (c - expected).abs() / sigma).fold(0.0f64, f64::max);
        // chi-square over artist counts against its mean k - 1 and sd sqrt(2(k - 1))
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        let chi2_z = (chi2 - (k - 1.0)) / (2.0 * (k - 1.0)).sqrt();
        let uniform = chi2_z.abs() <= 3.0;
        let genre_ok = allow_fallback || same_genre == n;
        ok &= valid == n && uniform && genre_ok;
        let genre_note = if allow_fallback {
            String::new()
        } else {
            format!(", same genre {same_genre}/{n}")
        };
        notes.push(format!("{label}: valid {valid}/{n}{genre_note}, anchor chi2 {chi2:.1} on {} df ({chi2_z:+.2} sigma), max artist dev {max_dev:.2} sigma", k - 1.0));
    }
    verdict(ok, notes.join("; "))
}

fn desk_scale_learning() -> Verdict {
    let started = Instant::now();
    let data = generate(&desk_spec()).unwrap();
    let corpus = desk_corpus(&data);
    let config = TrainConfig {
        epochs: 100,
        triplets_per_epoch: 256,
        ..TrainConfig::default()
    };
    let outcome = train(&corpus, &config).unwrap();
    let first = outcome.log.epochs.first().unwrap().mean_loss;
    let last = outcome.log.epochs.last().unwrap().mean_loss;
    let model = outcome.into_model(&config);
    let raw = evaluate(&corpus, &Embedder::Raw, 0).unwrap().mean_auc;
    let triplet = evaluate(&corpus, &Embedder::triplet("triplet", model), 0).unwrap().mean_auc;
    let elapsed = started.elapsed();
    let loss_ok = last < 0.5 * first;
    let gain_ok = triplet - raw >= 0.03;
    verdict(
        loss_ok && gain_ok && elapsed < Duration::from_secs(120),
        format!(
            "(a) loss {first:.4} -> {last:.4} [{}]; (b) TRIPLET {triplet:.4} - RAW {raw:.4} = {:+.4} (>= 0.03) [{}]; {elapsed:.1?} (< 2 min)",
            if loss_ok { "ok" } else { "not met" },
            triplet - raw,
            if gain_ok { "ok" } else { "not met" },
        ),
    )
}

fn cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tripletsim"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn pipeline(dir: &Path, threads: &str) -> Result<(Vec<u8>, Vec<u8>), String> {
    cli(dir, &["synthgen", "--seed", "5"])?;
    cli(
        dir,
        &["ingest", "--features", "features.tsv", "--metadata", "metadata.tsv", "--format", "tsv", "--seed", "5"],
    )?;
    cli(
        dir,
        &["--threads", threads, "train", "--corpus", "corpus.bin", "--epochs", "20", "--epoch-size", "256", "--seed", "5"],
    )?;
    cli(
        dir,
        &["--threads", threads, "eval", "--corpus", "corpus.bin", "--models", "raw,zscore,model.tnet", "--seed", "5"],
    )?;
    let read = |name: &str| fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"));
    Ok((read("model.tnet")?, read("report.tsv")?))
}

fn determinism() -> Verdict {
    let runs: Result<Vec<_>, String> = ["1", "4"]
        .iter()
        .map(|threads| {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            pipeline(dir.path(), threads)
        })
        .collect();
    match runs {
        Ok(runs) => {
            let model_same = runs[0].0 == runs[1].0;
            let report_same = runs[0].1 == runs[1].1;
            verdict(
                model_same && report_same,
                format!(
                    "model files identical: {model_same} ({} bytes); reports identical: {report_same} ({} bytes)",
                    runs[0].0.len(),
                    runs[0].1.len()
                ),
            )
        }
        Err(e) => Verdict::Fail(e),
    }
}

fn baseline_ordering() -> Verdict {
    let mut data = generate(&desk_spec()).unwrap();
    for v in data.features.vectors.values_mut() {
        for x in v.iter_mut().skip(16) {
            *x *= 100.0;
        }
    }
    let corpus = desk_corpus(&data);
    let raw = evaluate(&corpus, &Embedder::Raw, 0).unwrap().mean_auc;
    let zscore = evaluate(&corpus, &Embedder::zscore_for(&corpus).unwrap(), 0).unwrap().mean_auc;
    verdict(zscore >= raw, format!("ZSCORE {zscore:.4} >= RAW {raw:.4} with dims 16..32 scaled by 100"))
}

fn full_reproduction() -> Verdict {
    let Some(dir) = std::env::var_os("FMA_DIR") else {
        return Verdict::Skip("set FMA_DIR to a directory with FMA features.csv and tracks.csv".into());
    };
    let dir = Path::new(&dir);
    let features = match load_feature_table(dir.join("features.csv"), FeatureFormat::FmaFeatures) {
        Ok(f) => f,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let metadata = match load_metadata(dir.join("tracks.csv"), MetadataFormat::FmaTracks) {
        Ok(m) => m,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let (unsplit, _) = build_corpus(&features, &metadata, 2).unwrap();
    let mut notes = Vec::new();
    let mut ok = true;

    let mut raw_sum = 0.0;
    let mut zscore_sum = 0.0;
    let mut first_split = None;
    for seed in 0..5 {
        let corpus = unsplit.clone().split_by_artist(0.7, seed).unwrap();
        let (train_artists, eval_artists) = corpus.split_counts();
        if seed == 0 {
            let counts_ok = train_artists + eval_artists == 8429 && eval_artists == 2529;
            ok &= counts_ok;
            notes.push(format!(
                "artists {} ({train_artists}/{eval_artists})",
                train_artists + eval_artists
            ));
        }
        raw_sum += evaluate(&corpus, &Embedder::Raw, seed).unwrap().mean_auc;
        zscore_sum += evaluate(&corpus, &Embedder::zscore_for(&corpus).unwrap(), seed).unwrap().mean_auc;
        if seed == 0 {
            first_split = Some(corpus);
        }
    }
    let (raw, zscore) = (raw_sum / 5.0, zscore_sum / 5.0);
    ok &= (raw - 0.800).abs() <= 0.01 && (zscore - 0.825).abs() <= 0.015;
    notes.push(format!("RAW {raw:.4} (0.800 +- 0.01), ZSCORE {zscore:.4} (0.825 +- 0.015) over 5 splits"));

    let corpus = first_split.unwrap();
    let best = |strategy: Strategy| -> f64 {
        [0.003, 0.01, 0.03]
            .iter()
            .map(|&lr| {
                let config = TrainConfig {
                    learning_rate: lr,
                    strategy,
                    ..TrainConfig::default()
                };
                let model: ModelFile = train(&corpus, &config).unwrap().into_model(&config);
                evaluate(&corpus, &Embedder::triplet(strategy.as_str(), model), 0).unwrap().mean_auc
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let random = best(Strategy::Random);
    let genre = best(Strategy::SameGenre);
    ok &= random >= 0.86 && random >= genre - 0.01;
    notes.push(format!("TRIPLET random {random:.4} (>= 0.86), genre {genre:.4} (random >= genre - 0.01)"));
    verdict(ok, notes.join("; "))
}

fn main() {
    let criteria: [(&str, Check); 7] = [
        ("1 gradient correctness", gradient_correctness),
        ("2 AUC oracle equivalence", auc_oracle_equivalence),
        ("3 sampler contract", sampler_contract),
        ("4 desk-scale learning", desk_scale_learning),
        ("5 pipeline determinism", determinism),
        ("6 baseline ordering", baseline_ordering),
        ("7 full FMA reproduction", full_reproduction),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let (tag, detail) = match check() {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("{tag}  criterion {name}: {detail}");
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
