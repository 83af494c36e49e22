use std::fs;
use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::Context;
use tripletsim::artifact::{encode_corpus, load_corpus};
use tripletsim::dataset::{build_corpus, load_feature_table, load_metadata, FeatureFormat, MetadataFormat};
use tripletsim::evaluator::{compare, format_comparison};
use tripletsim::sampler::{write_triplets, TripletSampler};
use tripletsim::synthgen::{generate, write_features_tsv, write_metadata_tsv, SynthSpec};
use tripletsim::trainer::{resume, train_from};
use tripletsim::{Corpus, Embedder, Error, ModelFile, NetworkParams, Strategy, TrainConfig};

use crate::embeddings::{nearest, read_embeddings, write_embeddings};
use crate::manifest::{write_atomic, RunManifest};
use crate::{EmbedArgs, EvalArgs, IngestArgs, InputFormat, KnnArgs, StrategyArg, SynthArgs, TrainArgs};

/// Bad arguments or inputs detected by the CLI itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// 1 for training failures, 2 for everything caused by arguments or input files.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Training { .. } => 1,
                _ => 2,
            };
        }
    }
    2
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn write_with<F>(path: &Path, f: F) -> anyhow::Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_atomic(path, &buf).with_context(|| format!("writing {}", path.display()))
}

pub fn ingest(a: &IngestArgs) -> anyhow::Result<()> {
    let (ff, mf) = match a.format {
        InputFormat::Fma => (FeatureFormat::FmaFeatures, MetadataFormat::FmaTracks),
        InputFormat::Tsv => (FeatureFormat::PlainTsv, MetadataFormat::PlainTsv),
    };
    let features = load_feature_table(&a.features, ff)?;
    let metadata = load_metadata(&a.metadata, mf)?;
    let (corpus, report) = build_corpus(&features, &metadata, a.min_songs)?;
    let corpus = corpus.split_by_artist(a.train_frac, a.seed)?;
    write_atomic(&a.out, &encode_corpus(&corpus)).with_context(|| format!("writing {}", a.out.display()))?;

    let (train_artists, eval_artists) = corpus.split_counts();
    let mut m = RunManifest::new("ingest", Some(a.seed));
    m.config("format", format!("{:?}", a.format).to_lowercase())
        .config("min_songs", a.min_songs)
        .config("train_frac", a.train_frac)
        .artifact("corpus", &a.out)
        .summary("dim", corpus.dim())
        .summary("tracks", corpus.len())
        .summary("artists", train_artists + eval_artists)
        .summary("train_artists", train_artists)
        .summary("eval_artists", eval_artists)
        .summary("feature_rows", report.feature_rows)
        .summary("metadata_rows", report.metadata_rows)
        .summary("missing_metadata", report.missing_metadata)
        .summary("missing_features", report.missing_features)
        .summary("filtered_tracks", report.filtered_tracks)
        .summary("filtered_artists", report.filtered_artists);
    m.input("features", &a.features)?.input("metadata", &a.metadata)?;
    m.write_beside(&a.out)?;
    eprintln!(
        "{} tracks, {} artists ({train_artists} train / {eval_artists} eval), dim {}; dropped {} rows",
        corpus.len(),
        train_artists + eval_artists,
        corpus.dim(),
        report.dropped()
    );
    Ok(())
}

fn train_config(a: &TrainArgs) -> TrainConfig {
    TrainConfig {
        epochs: a.epochs,
        triplets_per_epoch: a.epoch_size,
        batch_size: a.batch,
        learning_rate: a.lr,
        momentum: a.momentum,
        margin: a.alpha,
        seed: a.seed,
        strategy: match a.strategy {
            StrategyArg::Random => Strategy::Random,
            StrategyArg::Genre => Strategy::SameGenre,
        },
        allow_fallback: !a.no_fallback,
        standardize: !a.no_standardize,
    }
}

pub fn train(a: &TrainArgs) -> anyhow::Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let config = train_config(a);
    let (params, start) = match &a.resume {
        Some(path) => {
            let (params, previous, done) = resume(path)?;
            if (TrainConfig { epochs: config.epochs, ..previous }) != config {
                eprintln!("warning: resuming with a configuration that differs from the checkpoint");
            }
            (params, done)
        }
        None => (NetworkParams::init(corpus.dim(), config.seed)?, 0),
    };
    let outcome = train_from(&corpus, &config, params, start)?;
    let log = outcome.log.clone();
    let model = outcome.into_model(&config);
    write_atomic(&a.out, model.to_text().as_bytes()).with_context(|| format!("writing {}", a.out.display()))?;
    write_with(&a.log, |buf| log.write_tsv(buf))?;

    let drawn = log.epochs.len() * config.triplets_per_epoch;
    let fallbacks = log.total_fallbacks();
    let rate = if drawn == 0 { 0.0 } else { fallbacks as f64 / drawn as f64 };

    let mut m = RunManifest::new("train", Some(a.seed));
    m.config("strategy", config.strategy.as_str())
        .config("epochs", config.epochs)
        .config("epoch_size", config.triplets_per_epoch)
        .config("batch", config.batch_size)
        .config("lr", config.learning_rate)
        .config("momentum", config.momentum)
        .config("alpha", config.margin)
        .config("allow_fallback", config.allow_fallback)
        .config("standardize", config.standardize)
        .config("start_epoch", start)
        .artifact("model", &a.out)
        .artifact("log", &a.log)
        .summary("epochs_run", log.epochs.len())
        .summary("first_loss", log.epochs.first().map(|e| e.mean_loss))
        .summary("final_loss", log.epochs.last().map(|e| e.mean_loss))
        .summary("fallbacks", fallbacks)
        .summary("fallback_rate", rate);
    m.input("corpus", &a.corpus)?;
    if let Some(path) = &a.resume {
        m.input("resume", path)?;
    }

    if let Some(path) = &a.dump_triplets {
        let sampler = TripletSampler::new(&corpus, config.sampler_config())?;
        let mut all = Vec::with_capacity(drawn);
        for epoch in start..config.epochs {
            all.extend(sampler.sample_epoch(epoch as u64, config.triplets_per_epoch)?.triplets);
        }
        write_with(path, |buf| write_triplets(&corpus, &all, buf))?;
        m.artifact("triplets", path);
    }
    m.write_beside(&a.out)?;

    if let (Some(first), Some(last)) = (log.epochs.first(), log.epochs.last()) {
        eprintln!(
            "epochs {}..{}: mean loss {:.6} -> {:.6}",
            first.epoch,
            last.epoch + 1,
            first.mean_loss,
            last.mean_loss
        );
    }
    eprintln!("fallbacks: {fallbacks} of {drawn} triplets ({:.1}%)", 100.0 * rate);
    Ok(())
}

/// `raw`, `zscore` (TRAIN statistics), or a model file named after its stem.
fn resolve_embedder(name: &str, corpus: &Corpus) -> anyhow::Result<Embedder> {
    match name {
        "raw" => Ok(Embedder::Raw),
        "zscore" => Ok(Embedder::zscore_for(corpus)?),
        path if Path::new(path).is_file() => {
            let model = ModelFile::load(path)?;
            let stem = Path::new(path)
                .file_stem()
                .map_or_else(|| path.to_owned(), |s| s.to_string_lossy().into_owned());
            Ok(Embedder::triplet(stem, model))
        }
        other => Err(usage(format!(
            "unknown model '{other}': expected raw, zscore or a model file"
        ))),
    }
}

pub fn eval(a: &EvalArgs) -> anyhow::Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let embedders = a
        .models
        .iter()
        .map(|name| resolve_embedder(name, &corpus))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let reports = compare(&corpus, &embedders, a.seed)?;
    write_with(&a.out, |buf| {
        for r in &reports {
            r.write_tsv(&mut *buf)?;
        }
        Ok(())
    })?;
    let table = format_comparison(&reports);
    print!("{table}");

    let mut m = RunManifest::new("eval", Some(a.seed));
    m.config("models", &a.models).artifact("report", &a.out);
    m.input("corpus", &a.corpus)?;
    for name in &a.models {
        if Path::new(name).is_file() {
            m.input(name, Path::new(name))?;
        }
    }
    for r in &reports {
        m.summary(&format!("mean_auc.{}", r.embedder), r.mean_auc);
    }
    m.summary("rankings", reports[0].artists.len());
    m.write_beside(&a.out)?;
    Ok(())
}

pub fn embed(a: &EmbedArgs) -> anyhow::Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let embedder = resolve_embedder(&a.model, &corpus)?;
    let rows = corpus
        .records()
        .iter()
        .map(|r| Ok((r.track_id, embedder.embed(&r.features)?)))
        .collect::<tripletsim::Result<Vec<_>>>()?;
    write_with(&a.out, |buf| write_embeddings(&rows, buf))?;

    let mut m = RunManifest::new("embed", None);
    m.config("model", &a.model)
        .artifact("embeddings", &a.out)
        .summary("tracks", rows.len())
        .summary("dim", corpus.dim());
    m.input("corpus", &a.corpus)?;
    if Path::new(&a.model).is_file() {
        m.input("model", Path::new(&a.model))?;
    }
    m.write_beside(&a.out)?;
    Ok(())
}

pub fn knn(a: &KnnArgs) -> anyhow::Result<()> {
    let file = fs::File::open(&a.embeddings)
        .map_err(|e| usage(format!("cannot open {}: {e}", a.embeddings.display())))?;
    let table = read_embeddings(BufReader::new(file))
        .map_err(|e| usage(format!("{}: {e:#}", a.embeddings.display())))?;
    let hits = nearest(&table, a.query, a.k)
        .ok_or_else(|| usage(format!("track {} is not in {}", a.query, a.embeddings.display())))?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "track_id\tdistance")?;
    for h in hits {
        writeln!(out, "{}\t{}", h.track_id, h.distance)?;
    }
    Ok(())
}

pub fn synthgen(a: &SynthArgs) -> anyhow::Result<()> {
    let spec = SynthSpec {
        n_genres: a.genres,
        artists_per_genre: a.artists_per_genre,
        tracks_per_artist: a.tracks_per_artist,
        dim: a.dim,
        genre_spread: a.genre_spread,
        artist_spread: a.artist_spread,
        track_noise: a.track_noise,
        seed: a.seed,
    };
    let data = generate(&spec)?;
    write_with(&a.features_out, |buf| write_features_tsv(&data.features, buf))?;
    write_with(&a.metadata_out, |buf| write_metadata_tsv(&data.metadata, buf))?;

    let mut m = RunManifest::new("synthgen", Some(a.seed));
    m.config("genres", spec.n_genres)
        .config("artists_per_genre", spec.artists_per_genre)
        .config("tracks_per_artist", spec.tracks_per_artist)
        .config("dim", spec.dim)
        .config("genre_spread", spec.genre_spread)
        .config("artist_spread", spec.artist_spread)
        .config("track_noise", spec.track_noise)
        .artifact("features", &a.features_out)
        .artifact("metadata", &a.metadata_out)
        .summary("tracks", spec.n_tracks());
    m.write_beside(&a.features_out)?;
    Ok(())
}
