//! Feature and metadata ingestion, the joined [`Corpus`] and its artist-level split.
//!
//! Two on-disk layouts are understood for each input:
//!
//! - FMA `features.csv`: comma separated, three header rows (feature name, statistic,
//!   coefficient number) above the data. Column 0 is `track_id`, every other column is a
//!   numeric feature keyed by position. The stock file carries a fourth `track_id,,,...`
//!   row, which is skipped when present.
//! - FMA `tracks.csv`: comma separated with two header rows. The `(artist, id)` and
//!   `(track, genre_top)` columns are located by name; an optional `track_id,,,...`
//!   row after the headers is skipped.
//! - Plain TSV features: `track_id\tf0\t...\tf{d-1}`.
//! - Plain TSV metadata: `track_id\tartist_id\tgenre`, empty genre meaning absent.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

pub type TrackId = u64;
pub type ArtistId = u64;

/// One track: identity, supervision labels and its feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub track_id: TrackId,
    pub artist_id: ArtistId,
    pub genre: Option<String>,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Partition {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    FmaFeatures,
    PlainTsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetadataFormat {
    FmaTracks,
    PlainTsv,
}

/// Track id to feature vector, all vectors of length `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub dim: usize,
    pub vectors: BTreeMap<TrackId, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackMeta {
    pub artist_id: ArtistId,
    pub genre: Option<String>,
}

pub type MetadataTable = BTreeMap<TrackId, TrackMeta>;

/// Bookkeeping for [`join`] and [`build_corpus`]. Every input row is either kept or
/// counted in exactly one of the drop buckets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JoinReport {
    pub feature_rows: usize,
    pub metadata_rows: usize,
    /// Tracks with features but no metadata.
    pub missing_metadata: usize,
    /// Tracks with metadata but no features.
    pub missing_features: usize,
    pub joined: usize,
    /// Joined tracks removed because their artist had too few tracks.
    pub filtered_tracks: usize,
    pub filtered_artists: usize,
    pub kept_tracks: usize,
    pub kept_artists: usize,
}

impl JoinReport {
    pub fn dropped(&self) -> usize {
        self.missing_metadata + self.missing_features + self.filtered_tracks
    }
}

/// Immutable, artist-filtered track table, optionally carrying an artist-level split.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<TrackRecord>,
    dim: usize,
    split: Option<BTreeMap<ArtistId, Partition>>,
    min_songs: usize,
}

/// An unreadable input file is reported as a parse failure at row 0.
fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::parse(0, 0, format!("cannot open {}: {e}", path.display())))
}

fn csv_reader<R: Read>(reader: R, delimiter: u8) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(reader)
}

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::parse(row, 0, e.to_string())
}

fn parse_track_id(cell: &str, row: usize) -> Result<TrackId> {
    cell.trim()
        .parse::<TrackId>()
        .map_err(|_| Error::Data(format!("row {row}, column 0: invalid track_id '{cell}'")))
}

fn is_track_id_marker(record: &csv::StringRecord) -> bool {
    record.get(0).map(str::trim) == Some("track_id")
        && record.iter().skip(1).all(|c| c.trim().is_empty())
}

pub fn load_feature_table(path: impl AsRef<Path>, format: FeatureFormat) -> Result<FeatureTable> {
    let path = path.as_ref();
    read_feature_table(open(path)?, format)
}

pub fn read_feature_table<R: Read>(reader: R, format: FeatureFormat) -> Result<FeatureTable> {
    let delimiter = match format {
        FeatureFormat::FmaFeatures => b',',
        FeatureFormat::PlainTsv => b'\t',
    };
    let mut rows = csv_reader(reader, delimiter).into_records();
    let mut next_row = || rows.next().transpose().map_err(csv_error);

    let header_rows = match format {
        FeatureFormat::FmaFeatures => 3,
        FeatureFormat::PlainTsv => 1,
    };
    let mut headers = Vec::with_capacity(header_rows);
    for i in 0..header_rows {
        let rec = next_row()?.ok_or_else(|| {
            Error::parse(i + 1, 0, format!("expected {header_rows} header row(s), file ended"))
        })?;
        headers.push(rec);
    }
    let width = headers[0].len();
    if width < 2 {
        return Err(Error::parse(1, 0, "header needs a track_id column and at least one feature"));
    }
    for (i, h) in headers.iter().enumerate() {
        if h.len() != width {
            return Err(Error::parse(
                i + 1,
                h.len().min(width),
                format!("header row has {} columns, expected {width}", h.len()),
            ));
        }
    }
    if format == FeatureFormat::PlainTsv && headers[0].get(0).map(str::trim) != Some("track_id") {
        return Err(Error::parse(1, 0, "first header cell must be 'track_id'"));
    }
    let column_name = |col: usize| -> String {
        headers
            .iter()
            .map(|h| h.get(col).unwrap_or("").trim())
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join("/")
    };

    let dim = width - 1;
    let mut vectors = BTreeMap::new();
    let mut row = header_rows;
    while let Some(rec) = next_row()? {
        row += 1;
        if format == FeatureFormat::FmaFeatures && vectors.is_empty() && is_track_id_marker(&rec) {
            continue;
        }
        if rec.len() != width {
            return Err(Error::Data(format!(
                "row {row}: {} columns, expected {width}",
                rec.len()
            )));
        }
        let track_id = parse_track_id(&rec[0], row)?;
        let mut features = Vec::with_capacity(dim);
        for (col, cell) in rec.iter().enumerate().skip(1) {
            let value = cell.trim().parse::<f64>().map_err(|_| {
                Error::Data(format!(
                    "row {row} (track_id {track_id}), column {col} ({}): non-numeric value '{cell}'",
                    column_name(col)
                ))
            })?;
            if !value.is_finite() {
                return Err(Error::Data(format!(
                    "row {row} (track_id {track_id}), column {col} ({}): non-finite value '{cell}'",
                    column_name(col)
                )));
            }
            features.push(value);
        }
        if vectors.insert(track_id, features).is_some() {
            return Err(Error::Data(format!("row {row}: duplicate track_id {track_id}")));
        }
    }
    Ok(FeatureTable { dim, vectors })
}

pub fn load_metadata(path: impl AsRef<Path>, format: MetadataFormat) -> Result<MetadataTable> {
    let path = path.as_ref();
    read_metadata(open(path)?, format)
}

pub fn read_metadata<R: Read>(reader: R, format: MetadataFormat) -> Result<MetadataTable> {
    let delimiter = match format {
        MetadataFormat::FmaTracks => b',',
        MetadataFormat::PlainTsv => b'\t',
    };
    let mut rows = csv_reader(reader, delimiter).into_records();
    let mut next_row = || rows.next().transpose().map_err(csv_error);

    let (header_rows, artist_col, genre_col) = match format {
        MetadataFormat::FmaTracks => {
            let top = next_row()?.ok_or_else(|| Error::parse(1, 0, "missing header rows"))?;
            let sub = next_row()?.ok_or_else(|| Error::parse(2, 0, "missing second header row"))?;
            let find = |group: &str, name: &str| {
                (0..top.len().max(sub.len())).find(|&i| {
                    top.get(i).map(str::trim) == Some(group) && sub.get(i).map(str::trim) == Some(name)
                })
            };
            let artist = find("artist", "id")
                .ok_or_else(|| Error::parse(2, 0, "no (artist, id) column in header"))?;
            (2, artist, find("track", "genre_top"))
        }
        MetadataFormat::PlainTsv => {
            let header = next_row()?.ok_or_else(|| Error::parse(1, 0, "missing header row"))?;
            let find = |name: &str| header.iter().position(|h| h.trim() == name);
            if find("track_id") != Some(0) {
                return Err(Error::parse(1, 0, "first header cell must be 'track_id'"));
            }
            let artist =
                find("artist_id").ok_or_else(|| Error::parse(1, 0, "no artist_id column in header"))?;
            (1, artist, find("genre"))
        }
    };

    let mut table = BTreeMap::new();
    let mut row = header_rows;
    while let Some(rec) = next_row()? {
        row += 1;
        if table.is_empty() && is_track_id_marker(&rec) {
            continue;
        }
        let track_id = parse_track_id(rec.get(0).unwrap_or(""), row)?;
        let artist_cell = rec.get(artist_col).unwrap_or("").trim();
        if artist_cell.is_empty() {
            return Err(Error::Data(format!(
                "row {row} (track_id {track_id}): empty artist id"
            )));
        }
        let artist_id = artist_cell.parse::<ArtistId>().map_err(|_| {
            Error::Data(format!(
                "row {row} (track_id {track_id}), column {artist_col}: invalid artist id '{artist_cell}'"
            ))
        })?;
        let genre = genre_col
            .and_then(|c| rec.get(c))
            .map(str::trim)
            .filter(|g| !g.is_empty())
            .map(str::to_owned);
        if table.insert(track_id, TrackMeta { artist_id, genre }).is_some() {
            return Err(Error::Data(format!("row {row}: duplicate track_id {track_id}")));
        }
    }
    Ok(table)
}

/// Inner join on track id. Records come out in ascending track id order.
pub fn join(features: &FeatureTable, metadata: &MetadataTable) -> (Vec<TrackRecord>, JoinReport) {
    let mut report = JoinReport {
        feature_rows: features.vectors.len(),
        metadata_rows: metadata.len(),
        ..JoinReport::default()
    };
    let mut records = Vec::new();
    for (&track_id, vector) in &features.vectors {
        match metadata.get(&track_id) {
            Some(meta) => records.push(TrackRecord {
                track_id,
                artist_id: meta.artist_id,
                genre: meta.genre.clone(),
                features: vector.clone(),
            }),
            None => report.missing_metadata += 1,
        }
    }
    report.missing_features = metadata
        .keys()
        .filter(|id| !features.vectors.contains_key(id))
        .count();
    report.joined = records.len();
    (records, report)
}

/// Joins features with metadata and drops artists with fewer than `min_songs` tracks.
pub fn build_corpus(
    features: &FeatureTable,
    metadata: &MetadataTable,
    min_songs: usize,
) -> Result<(Corpus, JoinReport)> {
    if min_songs < 2 {
        return Err(Error::Data(format!("min_songs must be at least 2, got {min_songs}")));
    }
    let (records, mut report) = join(features, metadata);

    let mut counts: BTreeMap<ArtistId, usize> = BTreeMap::new();
    for r in &records {
        *counts.entry(r.artist_id).or_default() += 1;
    }
    report.filtered_artists = counts.values().filter(|&&c| c < min_songs).count();
    let records: Vec<TrackRecord> = records
        .into_iter()
        .filter(|r| counts[&r.artist_id] >= min_songs)
        .collect();
    report.filtered_tracks = report.joined - records.len();
    report.kept_tracks = records.len();
    report.kept_artists = counts.len() - report.filtered_artists;

    if records.is_empty() {
        return Err(Error::Data(format!(
            "no tracks left after join and min_songs={min_songs} filter ({} joined)",
            report.joined
        )));
    }
    let corpus = Corpus::new(records, features.dim, None, min_songs)?;
    Ok((corpus, report))
}

/// Round-half-up count of training artists.
pub fn train_artist_count(n_artists: usize, train_fraction: f64) -> usize {
    ((train_fraction * n_artists as f64) + 0.5).floor() as usize
}

impl Corpus {
    /// Builds a corpus and checks every structural invariant.
    pub fn new(
        records: Vec<TrackRecord>,
        dim: usize,
        split: Option<BTreeMap<ArtistId, Partition>>,
        min_songs: usize,
    ) -> Result<Self> {
        let mut ids = BTreeSet::new();
        let mut counts: BTreeMap<ArtistId, usize> = BTreeMap::new();
        for r in &records {
            if r.features.len() != dim {
                return Err(Error::Data(format!(
                    "track {} has {} features, expected {dim}",
                    r.track_id,
                    r.features.len()
                )));
            }
            if let Some(i) = r.features.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "track {} has a non-finite feature at index {i}",
                    r.track_id
                )));
            }
            if !ids.insert(r.track_id) {
                return Err(Error::Data(format!("duplicate track_id {}", r.track_id)));
            }
            *counts.entry(r.artist_id).or_default() += 1;
        }
        if let Some((artist, n)) = counts.iter().find(|(_, &n)| n < min_songs) {
            return Err(Error::Data(format!(
                "artist {artist} has {n} track(s), minimum is {min_songs}"
            )));
        }
        if let Some(split) = &split {
            if split.len() != counts.len() || counts.keys().any(|a| !split.contains_key(a)) {
                return Err(Error::Data(
                    "split must assign every corpus artist exactly once".into(),
                ));
            }
        }
        Ok(Corpus {
            records,
            dim,
            split,
            min_songs,
        })
    }

    pub fn records(&self) -> &[TrackRecord] {
        &self.records
    }

    pub fn record(&self, index: usize) -> &TrackRecord {
        &self.records[index]
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn min_songs(&self) -> usize {
        self.min_songs
    }

    pub fn split(&self) -> Option<&BTreeMap<ArtistId, Partition>> {
        self.split.as_ref()
    }

    pub fn is_split(&self) -> bool {
        self.split.is_some()
    }

    /// Sorted distinct artist ids.
    pub fn artists(&self) -> Vec<ArtistId> {
        self.records
            .iter()
            .map(|r| r.artist_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn artist_partition(&self, artist: ArtistId) -> Option<Partition> {
        self.split.as_ref()?.get(&artist).copied()
    }

    pub fn partition_of(&self, index: usize) -> Option<Partition> {
        self.artist_partition(self.records[index].artist_id)
    }

    /// Record indices belonging to `partition`, in record order.
    pub fn indices_in(&self, partition: Partition) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| self.partition_of(i) == Some(partition))
            .collect()
    }

    /// Artist id to record indices (record order), restricted to `partition` when given.
    pub fn tracks_by_artist(&self, partition: Option<Partition>) -> BTreeMap<ArtistId, Vec<usize>> {
        let mut map: BTreeMap<ArtistId, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            if partition.is_none() || self.partition_of(i) == partition {
                map.entry(r.artist_id).or_default().push(i);
            }
        }
        map
    }

    /// Number of artists assigned to each partition, `(train, eval)`.
    pub fn split_counts(&self) -> (usize, usize) {
        self.split.as_ref().map_or((0, 0), |s| {
            let train = s.values().filter(|&&p| p == Partition::Train).count();
            (train, s.len() - train)
        })
    }

    /// Assigns whole artists to TRAIN/EVAL. Artists are shuffled with a seeded
    /// generator and the first `round(train_fraction * n)` go to TRAIN.
    pub fn split_by_artist(self, train_fraction: f64, seed: u64) -> Result<Corpus> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Data(format!(
                "train_fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        let mut artists = self.artists();
        if artists.len() < 2 {
            return Err(Error::Data(format!(
                "need at least 2 artists to split, found {}",
                artists.len()
            )));
        }
        artists.shuffle(&mut stream_rng(seed, Stream::Split, 0));
        let n_train = train_artist_count(artists.len(), train_fraction);
        let split = artists
            .iter()
            .enumerate()
            .map(|(i, &a)| (a, if i < n_train { Partition::Train } else { Partition::Eval }))
            .collect();
        Corpus::new(self.records, self.dim, Some(split), self.min_songs)
    }
}
