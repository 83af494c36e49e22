//! Fixtures shared by the benchmarks in `benches/pipeline.rs`.

use tripletsim::dataset::build_corpus;
use tripletsim::synthgen::{generate, SynthSpec};
use tripletsim::Corpus;

/// A split synthetic corpus of `artists × tracks_per_artist` tracks in `dim` dimensions.
pub fn corpus(artists: usize, tracks_per_artist: usize, dim: usize) -> Corpus {
    let spec = SynthSpec {
        n_genres: 8,
        artists_per_genre: artists.div_ceil(8).max(2),
        tracks_per_artist,
        dim,
        genre_spread: 3.0,
        artist_spread: 1.0,
        track_noise: 1.2,
        seed: 0,
    };
    let data = generate(&spec).expect("valid synthetic spec");
    let (corpus, _) = build_corpus(&data.features, &data.metadata, 2).expect("non-empty corpus");
    corpus.split_by_artist(0.7, 0).expect("at least two artists")
}
