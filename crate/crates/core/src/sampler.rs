//! Training triplet generation.
//!
//! Anchor artists are drawn uniformly over TRAIN artists; anchor and positive are two
//! distinct tracks of that artist. Under [`Strategy::Random`] the negative is uniform over
//! every TRAIN track of another artist. Under [`Strategy::SameGenre`] it is uniform over
//! TRAIN tracks of another artist sharing the anchor track's genre; anchors with no genre,
//! or whose genre has no other artist, fall back to the random rule and are counted.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;

use crate::dataset::{ArtistId, Corpus, Partition};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, PipelineRng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Random,
    SameGenre,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::SameGenre => "genre",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            "genre" | "same_genre" | "same-genre" => Ok(Strategy::SameGenre),
            other => Err(Error::Data(format!("unknown sampling strategy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub strategy: Strategy,
    pub seed: u64,
    /// When false, [`Strategy::SameGenre`] only anchors on tracks whose genre has
    /// another TRAIN artist, so every negative shares the anchor's genre.
    pub allow_fallback: bool,
}

impl SamplerConfig {
    pub fn new(strategy: Strategy, seed: u64) -> Self {
        SamplerConfig {
            strategy,
            seed,
            allow_fallback: true,
        }
    }
}

/// Record indices of (anchor, positive, negative).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sampled {
    pub triplet: Triplet,
    pub fell_back: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochSample {
    pub triplets: Vec<Triplet>,
    pub fallbacks: usize,
}

/// Tracks grouped contiguously by artist, so a uniform draw that skips one artist is a
/// single offset computation.
#[derive(Debug, Default)]
struct NegativePool {
    tracks: Vec<usize>,
    ranges: BTreeMap<ArtistId, (usize, usize)>,
}

impl NegativePool {
    fn from_groups(groups: &BTreeMap<ArtistId, Vec<usize>>) -> Self {
        let mut pool = NegativePool::default();
        for (&artist, tracks) in groups {
            let start = pool.tracks.len();
            pool.tracks.extend_from_slice(tracks);
            pool.ranges.insert(artist, (start, pool.tracks.len()));
        }
        pool
    }

    fn others(&self, artist: ArtistId) -> usize {
        let (s, e) = self.ranges.get(&artist).copied().unwrap_or((0, 0));
        self.tracks.len() - (e - s)
    }

    fn draw_excluding(&self, artist: ArtistId, rng: &mut PipelineRng) -> Option<usize> {
        let (s, e) = self.ranges.get(&artist).copied().unwrap_or((0, 0));
        let others = self.tracks.len() - (e - s);
        if others == 0 {
            return None;
        }
        let k = rng.random_range(0..others);
        Some(self.tracks[if k < s { k } else { k + (e - s) }])
    }
}

/// Precomputed TRAIN-split index for repeated triplet draws.
#[derive(Debug)]
pub struct TripletSampler<'c> {
    corpus: &'c Corpus,
    config: SamplerConfig,
    tracks: BTreeMap<ArtistId, Vec<usize>>,
    /// Anchor-eligible artists with the tracks that may serve as anchor.
    anchors: Vec<(ArtistId, Vec<usize>)>,
    all: NegativePool,
    by_genre: BTreeMap<&'c str, NegativePool>,
}

impl<'c> TripletSampler<'c> {
    pub fn new(corpus: &'c Corpus, config: SamplerConfig) -> Result<Self> {
        if !corpus.is_split() {
            return Err(Error::Sampler("corpus has no train/eval split".into()));
        }
        let tracks = corpus.tracks_by_artist(Some(Partition::Train));
        if tracks.len() < 2 {
            return Err(Error::Sampler(format!(
                "need at least 2 TRAIN artists, found {}",
                tracks.len()
            )));
        }
        let all = NegativePool::from_groups(&tracks);

        let mut genre_groups: BTreeMap<&str, BTreeMap<ArtistId, Vec<usize>>> = BTreeMap::new();
        for (&artist, idx) in &tracks {
            for &i in idx {
                if let Some(g) = corpus.record(i).genre.as_deref() {
                    genre_groups.entry(g).or_default().entry(artist).or_default().push(i);
                }
            }
        }
        let by_genre: BTreeMap<&str, NegativePool> = genre_groups
            .iter()
            .map(|(&g, groups)| (g, NegativePool::from_groups(groups)))
            .collect();

        let restrict = config.strategy == Strategy::SameGenre && !config.allow_fallback;
        // single-track artists can still supply negatives
        let anchors: Vec<(ArtistId, Vec<usize>)> = tracks
            .iter()
            .filter(|(_, idx)| idx.len() >= 2)
            .map(|(&artist, idx)| {
                let eligible = if restrict {
                    idx.iter()
                        .copied()
                        .filter(|&i| {
                            corpus.record(i).genre.as_deref().is_some_and(|g| by_genre[g].others(artist) > 0)
                        })
                        .collect()
                } else {
                    idx.clone()
                };
                (artist, eligible)
            })
            .filter(|(_, eligible)| !eligible.is_empty())
            .collect();
        if anchors.is_empty() {
            return Err(Error::Sampler(if restrict {
                "same-genre sampling without fallback needs a genre shared by 2 TRAIN artists".into()
            } else {
                "no TRAIN artist has 2 tracks to form an anchor/positive pair".into()
            }));
        }

        Ok(TripletSampler {
            corpus,
            config,
            tracks,
            anchors,
            all,
            by_genre,
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn corpus(&self) -> &'c Corpus {
        self.corpus
    }

    /// Number of artists anchors are drawn from.
    pub fn anchor_artists(&self) -> Vec<ArtistId> {
        self.anchors.iter().map(|(a, _)| *a).collect()
    }

    pub fn sample_triplet(&self, rng: &mut PipelineRng) -> Result<Sampled> {
        let (artist, eligible) = &self.anchors[rng.random_range(0..self.anchors.len())];
        let artist = *artist;
        let own = &self.tracks[&artist];
        let anchor = eligible[rng.random_range(0..eligible.len())];
        let mut positive = own[rng.random_range(0..own.len() - 1)];
        if positive == anchor {
            positive = own[own.len() - 1];
        }

        let genre_negative = match self.config.strategy {
            Strategy::Random => None,
            Strategy::SameGenre => self
                .corpus
                .record(anchor)
                .genre
                .as_deref()
                .and_then(|g| self.by_genre.get(g))
                .and_then(|pool| pool.draw_excluding(artist, rng)),
        };
        let fell_back = self.config.strategy == Strategy::SameGenre && genre_negative.is_none();
        if fell_back && !self.config.allow_fallback {
            return Err(Error::Sampler(format!(
                "anchor track {} has no same-genre negative",
                self.corpus.record(anchor).track_id
            )));
        }
        let negative = match genre_negative {
            Some(n) => n,
            None => self
                .all
                .draw_excluding(artist, rng)
                .ok_or_else(|| Error::Sampler("no negative candidates".into()))?,
        };
        Ok(Sampled {
            triplet: Triplet {
                anchor,
                positive,
                negative,
            },
            fell_back,
        })
    }

    /// `epoch_size` independent draws from the stream derived from (seed, epoch).
    pub fn sample_epoch(&self, epoch: u64, epoch_size: usize) -> Result<EpochSample> {
        if epoch_size == 0 {
            return Err(Error::Sampler("epoch_size must be at least 1".into()));
        }
        let mut rng = stream_rng(self.config.seed, Stream::Epoch, epoch);
        let mut triplets = Vec::with_capacity(epoch_size);
        let mut fallbacks = 0;
        for _ in 0..epoch_size {
            let s = self.sample_triplet(&mut rng)?;
            fallbacks += usize::from(s.fell_back);
            triplets.push(s.triplet);
        }
        Ok(EpochSample {
            triplets,
            fallbacks,
        })
    }
}

/// Checks the structural contract of a triplet against `corpus`.
pub fn check_triplet(corpus: &Corpus, t: &Triplet) -> Result<()> {
    let n = corpus.len();
    if t.anchor >= n || t.positive >= n || t.negative >= n {
        return Err(Error::Sampler(format!("triplet {t:?} out of range")));
    }
    let (a, p, ng) = (corpus.record(t.anchor), corpus.record(t.positive), corpus.record(t.negative));
    if t.anchor == t.positive || a.artist_id != p.artist_id {
        return Err(Error::Sampler(format!("invalid anchor/positive in {t:?}")));
    }
    if ng.artist_id == a.artist_id {
        return Err(Error::Sampler(format!("negative shares anchor artist in {t:?}")));
    }
    for i in [t.anchor, t.positive, t.negative] {
        if corpus.partition_of(i) != Some(Partition::Train) {
            return Err(Error::Sampler(format!("record {i} is not in the TRAIN split")));
        }
    }
    Ok(())
}

/// Audit dump: `anchor_id\tpositive_id\tnegative_id` in track ids.
pub fn write_triplets<W: Write>(corpus: &Corpus, triplets: &[Triplet], mut out: W) -> std::io::Result<()> {
    writeln!(out, "anchor_id\tpositive_id\tnegative_id")?;
    for t in triplets {
        writeln!(
            out,
            "{}\t{}\t{}",
            corpus.record(t.anchor).track_id,
            corpus.record(t.positive).track_id,
            corpus.record(t.negative).track_id
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TrackRecord;
    use std::collections::BTreeSet;

    fn rec(track_id: u64, artist_id: u64, genre: Option<&str>) -> TrackRecord {
        TrackRecord {
            track_id,
            artist_id,
            genre: genre.map(str::to_owned),
            features: vec![0.0],
        }
    }

    fn corpus(records: Vec<TrackRecord>, train: &[u64]) -> Corpus {
        let artists: BTreeSet<u64> = records.iter().map(|r| r.artist_id).collect();
        let split = artists
            .into_iter()
            .map(|a| (a, if train.contains(&a) { Partition::Train } else { Partition::Eval }))
            .collect();
        Corpus::new(records, 1, Some(split), 1).unwrap()
    }

    #[test]
    fn random_enumerates_valid_outcomes() {
        // artists A = {a1, a2}, B = {b1}
        let c = corpus(vec![rec(1, 10, None), rec(2, 10, None), rec(3, 20, None)], &[10, 20]);
        let s = TripletSampler::new(&c, SamplerConfig::new(Strategy::Random, 1)).unwrap();
        let mut rng = stream_rng(1, Stream::Epoch, 0);
        let mut seen = BTreeSet::new();
        for _ in 0..500 {
            let t = s.sample_triplet(&mut rng).unwrap().triplet;
            if c.record(t.anchor).artist_id == 10 {
                seen.insert((t.anchor, t.positive, t.negative));
            }
        }
        let expected: BTreeSet<_> = [(0, 1, 2), (1, 0, 2)].into_iter().collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn same_genre_negative_from_shared_genre() {
        let c = corpus(
            vec![
                rec(1, 10, Some("Rock")),
                rec(2, 10, Some("Rock")),
                rec(3, 20, Some("Rock")),
                rec(4, 20, Some("Rock")),
                rec(5, 30, Some("Jazz")),
                rec(6, 30, Some("Jazz")),
            ],
            &[10, 20, 30],
        );
        let s = TripletSampler::new(&c, SamplerConfig::new(Strategy::SameGenre, 3)).unwrap();
        let mut rng = stream_rng(3, Stream::Epoch, 0);
        for _ in 0..300 {
            let sampled = s.sample_triplet(&mut rng).unwrap();
            let t = sampled.triplet;
            if c.record(t.anchor).artist_id == 10 {
                assert_eq!(c.record(t.negative).artist_id, 20);
                assert!(!sampled.fell_back);
            }
            if c.record(t.anchor).artist_id == 30 {
                assert!(sampled.fell_back, "Jazz has a single artist");
            }
        }
    }

    #[test]
    fn genre_less_anchor_falls_back() {
        let c = corpus(vec![rec(1, 10, None), rec(2, 10, None), rec(3, 20, None), rec(4, 20, None)], &[10, 20]);
        let s = TripletSampler::new(&c, SamplerConfig::new(Strategy::SameGenre, 0)).unwrap();
        let e = s.sample_epoch(0, 64).unwrap();
        assert_eq!(e.fallbacks, 64);
        for t in &e.triplets {
            check_triplet(&c, t).unwrap();
        }

        let strict = SamplerConfig {
            allow_fallback: false,
            ..SamplerConfig::new(Strategy::SameGenre, 0)
        };
        assert!(matches!(TripletSampler::new(&c, strict), Err(Error::Sampler(_))));
    }

    #[test]
    fn preconditions() {
        let unsplit = Corpus::new(vec![rec(1, 1, None), rec(2, 1, None)], 1, None, 2).unwrap();
        assert!(TripletSampler::new(&unsplit, SamplerConfig::new(Strategy::Random, 0)).is_err());
        let one_train = corpus(vec![rec(1, 1, None), rec(2, 1, None), rec(3, 2, None), rec(4, 2, None)], &[1]);
        assert!(matches!(
            TripletSampler::new(&one_train, SamplerConfig::new(Strategy::Random, 0)),
            Err(Error::Sampler(_))
        ));
    }

    #[test]
    fn only_train_tracks_are_drawn() {
        let c = corpus(
            vec![
                rec(1, 1, None),
                rec(2, 1, None),
                rec(3, 2, None),
                rec(4, 2, None),
                rec(5, 3, None),
                rec(6, 3, None),
            ],
            &[1, 2],
        );
        let s = TripletSampler::new(&c, SamplerConfig::new(Strategy::Random, 9)).unwrap();
        for t in s.sample_epoch(4, 200).unwrap().triplets {
            check_triplet(&c, &t).unwrap();
        }
    }

    #[test]
    fn epoch_determinism_and_size() {
        let c = corpus(vec![rec(1, 1, None), rec(2, 1, None), rec(3, 2, None), rec(4, 2, None)], &[1, 2]);
        let s = TripletSampler::new(&c, SamplerConfig::new(Strategy::Random, 5)).unwrap();
        assert_eq!(s.sample_epoch(3, 50).unwrap(), s.sample_epoch(3, 50).unwrap());
        assert_ne!(s.sample_epoch(3, 50).unwrap(), s.sample_epoch(4, 50).unwrap());
        let single = s.sample_epoch(0, 1).unwrap();
        assert_eq!(single.triplets.len(), 1);
        check_triplet(&c, &single.triplets[0]).unwrap();
        assert!(s.sample_epoch(0, 0).is_err());
        let total: usize = (0..200).map(|e| s.sample_epoch(e, 512).unwrap().triplets.len()).sum();
        assert_eq!(total, 102_400);
    }

    #[test]
    fn triplet_dump_uses_track_ids() {
        let c = corpus(vec![rec(11, 1, None), rec(12, 1, None), rec(13, 2, None), rec(14, 2, None)], &[1, 2]);
        let mut out = Vec::new();
        write_triplets(&c, &[Triplet { anchor: 0, positive: 1, negative: 3 }], &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "anchor_id\tpositive_id\tnegative_id\n11\t12\t14\n");
    }
}
