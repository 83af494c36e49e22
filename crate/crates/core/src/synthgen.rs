//! Hierarchical Gaussian corpora: genre centers, artist centers around them, and tracks
//! around their artist. The spreads control how hard artist retrieval is.

use std::collections::BTreeMap;
use std::io::Write;

use rand_distr::{Distribution, Normal};

use crate::dataset::{FeatureTable, MetadataTable, TrackMeta};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n_genres: usize,
    pub artists_per_genre: usize,
    pub tracks_per_artist: usize,
    pub dim: usize,
    pub genre_spread: f64,
    pub artist_spread: f64,
    pub track_noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_genres < 1 || self.artists_per_genre < 2 || self.tracks_per_artist < 2 || self.dim < 2 {
            return Err(Error::Data(format!(
                "need n_genres >= 1 and artists_per_genre, tracks_per_artist, dim >= 2: {self:?}"
            )));
        }
        // track noise is unconstrained relative to the centers: noisy regimes are useful
        if !(self.genre_spread > self.artist_spread
            && self.artist_spread > 0.0
            && self.track_noise > 0.0
            && self.genre_spread.is_finite()
            && self.track_noise.is_finite())
        {
            return Err(Error::Data(format!(
                "spreads must satisfy genre > artist > 0 and track > 0, got {} / {} / {}",
                self.genre_spread, self.artist_spread, self.track_noise
            )));
        }
        Ok(())
    }

    pub fn n_tracks(&self) -> usize {
        self.n_genres * self.artists_per_genre * self.tracks_per_artist
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub features: FeatureTable,
    pub metadata: MetadataTable,
}

pub fn genre_name(g: usize) -> String {
    format!("genre{g}")
}

/// Track ids and artist ids are consecutive from 1, grouped by genre then artist.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, Stream::Synth, 0);
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    let mut gaussian = |center: &[f64], spread: f64| -> Vec<f64> {
        center.iter().map(|c| c + spread * standard.sample(&mut rng)).collect()
    };
    let origin = vec![0.0; spec.dim];

    let mut vectors = BTreeMap::new();
    let mut metadata = BTreeMap::new();
    let mut track_id = 1u64;
    let mut artist_id = 1u64;
    for g in 0..spec.n_genres {
        let genre_center = gaussian(&origin, spec.genre_spread);
        for _ in 0..spec.artists_per_genre {
            let artist_center = gaussian(&genre_center, spec.artist_spread);
            for _ in 0..spec.tracks_per_artist {
                vectors.insert(track_id, gaussian(&artist_center, spec.track_noise));
                metadata.insert(
                    track_id,
                    TrackMeta {
                        artist_id,
                        genre: Some(genre_name(g)),
                    },
                );
                track_id += 1;
            }
            artist_id += 1;
        }
    }
    Ok(SynthData {
        features: FeatureTable {
            dim: spec.dim,
            vectors,
        },
        metadata,
    })
}

/// Plain TSV features: `track_id\tf0\t...`.
pub fn write_features_tsv<W: Write>(table: &FeatureTable, mut out: W) -> std::io::Result<()> {
    write!(out, "track_id")?;
    for k in 0..table.dim {
        write!(out, "\tf{k}")?;
    }
    writeln!(out)?;
    for (id, v) in &table.vectors {
        write!(out, "{id}")?;
        for x in v {
            write!(out, "\t{x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Plain TSV metadata: `track_id\tartist_id\tgenre`.
pub fn write_metadata_tsv<W: Write>(table: &MetadataTable, mut out: W) -> std::io::Result<()> {
    writeln!(out, "track_id\tartist_id\tgenre")?;
    for (id, m) in table {
        writeln!(out, "{id}\t{}\t{}", m.artist_id, m.genre.as_deref().unwrap_or(""))?;
    }
    Ok(())
}
