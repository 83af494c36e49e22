//! Artist-retrieval evaluation.
//!
//! For every EVAL artist one query track is drawn with the evaluation seed. All other
//! EVAL tracks are ranked by Euclidean distance to the query in the embedding space and
//! the artist's remaining tracks count as relevant. The per-query ROC AUC is averaged
//! without weighting over artists.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{ArtistId, Corpus, Partition, TrackId};
use crate::error::{Error, Result};
use crate::model::ModelFile;
use crate::rng::{stream_rng, Stream};
use crate::trainer::fit_train_zscore;
use crate::transform::{l2_distance, ZScoreStats};

/// A deterministic map from raw features to the space distances are measured in.
#[derive(Debug, Clone)]
pub enum Embedder {
    Raw,
    ZScore(ZScoreStats),
    Triplet { name: String, model: Box<ModelFile> },
}

impl Embedder {
    /// Z-score embedder with statistics fitted on the corpus' TRAIN tracks.
    pub fn zscore_for(corpus: &Corpus) -> Result<Self> {
        Ok(Embedder::ZScore(fit_train_zscore(corpus)?))
    }

    pub fn triplet(name: impl Into<String>, model: ModelFile) -> Self {
        Embedder::Triplet {
            name: name.into(),
            model: Box::new(model),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Embedder::Raw => "raw",
            Embedder::ZScore(_) => "zscore",
            Embedder::Triplet { name, .. } => name,
        }
    }

    pub fn embed(&self, features: &[f64]) -> Result<Vec<f64>> {
        match self {
            Embedder::Raw => Ok(features.to_vec()),
            Embedder::ZScore(stats) => stats.apply(features),
            Embedder::Triplet { model, .. } => model.embed(features),
        }
    }
}

/// ROC AUC of `scores` (higher = more relevant) via midranks, ties counting one half.
pub fn auc(scores: &[f64], relevant: &[bool]) -> Result<f64> {
    if scores.len() != relevant.len() {
        return Err(Error::Eval(format!(
            "{} scores but {} labels",
            scores.len(),
            relevant.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Eval("NaN score".into()));
    }
    let positives = relevant.iter().filter(|&&r| r).count();
    let negatives = relevant.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Eval(format!(
            "AUC needs both classes, got {positives} relevant and {negatives} irrelevant"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    // Sum of (1-based) midranks over relevant items.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + 1 + end) as f64 / 2.0;
        let rel_in_group = order[start..end].iter().filter(|&&i| relevant[i]).count();
        rank_sum += midrank * rel_in_group as f64;
        start = end;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArtistAuc {
    pub artist_id: ArtistId,
    pub query_id: TrackId,
    pub n_relevant: usize,
    pub n_irrelevant: usize,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AucReport {
    pub embedder: String,
    pub seed: u64,
    /// One entry per EVAL artist, ascending artist id.
    pub artists: Vec<ArtistAuc>,
    pub mean_auc: f64,
}

impl AucReport {
    /// `artist_id\tquery_id\tn_rel\tn_irr\tauc` rows preceded by a provenance comment
    /// and followed by a `mean` line.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# embedder={} seed={}", self.embedder, self.seed)?;
        writeln!(out, "artist_id\tquery_id\tn_rel\tn_irr\tauc")?;
        for a in &self.artists {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                a.artist_id, a.query_id, a.n_relevant, a.n_irrelevant, a.auc
            )?;
        }
        writeln!(out, "mean\t\t\t\t{}", self.mean_auc)
    }

    pub fn total_candidates(&self) -> usize {
        self.artists.first().map_or(0, |a| a.n_relevant + a.n_irrelevant + 1)
    }
}

/// One query per EVAL artist, drawn in artist-id order from the `seed` query stream.
pub fn select_queries(corpus: &Corpus, seed: u64) -> Result<Vec<(ArtistId, usize)>> {
    if !corpus.is_split() {
        return Err(Error::Eval("corpus has no train/eval split".into()));
    }
    let by_artist = corpus.tracks_by_artist(Some(Partition::Eval));
    if by_artist.is_empty() {
        return Err(Error::Eval("EVAL split is empty".into()));
    }
    let mut rng = stream_rng(seed, Stream::Query, 0);
    by_artist
        .into_iter()
        .map(|(artist, tracks)| {
            if tracks.len() < 2 {
                return Err(Error::Eval(format!(
                    "EVAL artist {artist} has {} track(s); corpus is corrupt",
                    tracks.len()
                )));
            }
            Ok((artist, tracks[rng.random_range(0..tracks.len())]))
        })
        .collect()
}

pub fn evaluate(corpus: &Corpus, embedder: &Embedder, seed: u64) -> Result<AucReport> {
    let queries = select_queries(corpus, seed)?;
    let eval = corpus.indices_in(Partition::Eval);
    let embedded: Vec<Vec<f64>> = eval
        .par_iter()
        .map(|&i| embedder.embed(&corpus.record(i).features))
        .collect::<Result<_>>()?;
    let position: std::collections::HashMap<usize, usize> =
        eval.iter().enumerate().map(|(pos, &i)| (i, pos)).collect();

    let artists: Vec<ArtistAuc> = queries
        .par_iter()
        .map(|&(artist, query)| {
            let q = &embedded[position[&query]];
            let mut scores = Vec::with_capacity(eval.len() - 1);
            let mut relevant = Vec::with_capacity(eval.len() - 1);
            for (pos, &i) in eval.iter().enumerate() {
                if i == query {
                    continue;
                }
                scores.push(-l2_distance(q, &embedded[pos])?);
                relevant.push(corpus.record(i).artist_id == artist);
            }
            let n_relevant = relevant.iter().filter(|&&r| r).count();
            Ok(ArtistAuc {
                artist_id: artist,
                query_id: corpus.record(query).track_id,
                n_relevant,
                n_irrelevant: relevant.len() - n_relevant,
                auc: auc(&scores, &relevant)?,
            })
        })
        .collect::<Result<_>>()?;
    let mean_auc = artists.iter().map(|a| a.auc).sum::<f64>() / artists.len() as f64;
    Ok(AucReport {
        embedder: embedder.name().to_owned(),
        seed,
        artists,
        mean_auc,
    })
}

/// Evaluates every embedder on the same queries.
pub fn compare(corpus: &Corpus, embedders: &[Embedder], seed: u64) -> Result<Vec<AucReport>> {
    if embedders.is_empty() {
        return Err(Error::Eval("no embedders to compare".into()));
    }
    embedders.iter().map(|e| evaluate(corpus, e, seed)).collect()
}

/// Aligned two-column `Model | AUC` table.
pub fn format_comparison(reports: &[AucReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.embedder.len())
        .chain(std::iter::once("Model".len()))
        .max()
        .unwrap_or(5);
    let mut out = String::new();
    if let Some(first) = reports.first() {
        writeln!(
            out,
            "Average AUC over {} rankings of {} songs (seed {})",
            first.artists.len(),
            first.total_candidates(),
            first.seed
        )
        .unwrap();
    }
    writeln!(out, "{:<width$}  AUC", "Model").unwrap();
    writeln!(out, "{}  -----", "-".repeat(width)).unwrap();
    for r in reports {
        writeln!(out, "{:<width$}  {:.3}", r.embedder, r.mean_auc).unwrap();
    }
    out
}
