//! Binary corpus cache.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "CORPUS v1\n"
//! u64 dim, u64 min_songs, u64 n_records
//! n_records × { u64 track_id, u64 artist_id, u32 genre_len (u32::MAX = none), genre bytes, dim × f64 }
//! u8 has_split
//! if has_split: u64 n_artists, n_artists × { u64 artist_id, u8 partition (0 = train, 1 = eval) }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::dataset::{Corpus, Partition, TrackRecord};
use crate::error::{Error, Result};

pub const CORPUS_MAGIC: &[u8] = b"CORPUS v1\n";
const NO_GENRE: u32 = u32::MAX;

pub fn encode_corpus(corpus: &Corpus) -> Vec<u8> {
    let mut out = Vec::with_capacity(CORPUS_MAGIC.len() + corpus.len() * (24 + 8 * corpus.dim()));
    out.extend_from_slice(CORPUS_MAGIC);
    for v in [corpus.dim(), corpus.min_songs(), corpus.len()] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for r in corpus.records() {
        out.extend_from_slice(&r.track_id.to_le_bytes());
        out.extend_from_slice(&r.artist_id.to_le_bytes());
        match &r.genre {
            Some(g) => {
                out.extend_from_slice(&(g.len() as u32).to_le_bytes());
                out.extend_from_slice(g.as_bytes());
            }
            None => out.extend_from_slice(&NO_GENRE.to_le_bytes()),
        }
        for x in &r.features {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    match corpus.split() {
        Some(split) => {
            out.push(1);
            out.extend_from_slice(&(split.len() as u64).to_le_bytes());
            for (artist, part) in split {
                out.extend_from_slice(&artist.to_le_bytes());
                out.push(match part {
                    Partition::Train => 0,
                    Partition::Eval => 1,
                });
            }
        }
        None => out.push(0),
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("corpus file truncated at byte {}", self.pos)))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("size field overflows usize".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_corpus(bytes: &[u8]) -> Result<Corpus> {
    if !bytes.starts_with(CORPUS_MAGIC) {
        let shown = String::from_utf8_lossy(&bytes[..bytes.len().min(16)]).into_owned();
        return Err(Error::Format(format!(
            "not a CORPUS v1 file (starts with {shown:?})"
        )));
    }
    let mut c = Cursor {
        bytes,
        pos: CORPUS_MAGIC.len(),
    };
    let dim = c.usize()?;
    let min_songs = c.usize()?;
    let n = c.usize()?;
    // each record needs at least 20 + 8·dim bytes
    if n.saturating_mul(20 + 8 * dim) > bytes.len() {
        return Err(Error::Format(format!("record count {n} exceeds file size")));
    }
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let track_id = c.u64()?;
        let artist_id = c.u64()?;
        let genre = match c.u32()? {
            NO_GENRE => None,
            len => Some(
                String::from_utf8(c.take(len as usize)?.to_vec())
                    .map_err(|_| Error::Format(format!("genre of track {track_id} is not UTF-8")))?,
            ),
        };
        let features = (0..dim).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        records.push(TrackRecord {
            track_id,
            artist_id,
            genre,
            features,
        });
    }
    let split = match c.u8()? {
        0 => None,
        1 => {
            let n_artists = c.usize()?;
            let mut split = BTreeMap::new();
            for _ in 0..n_artists {
                let artist = c.u64()?;
                let part = match c.u8()? {
                    0 => Partition::Train,
                    1 => Partition::Eval,
                    other => return Err(Error::Format(format!("invalid partition tag {other}"))),
                };
                if split.insert(artist, part).is_some() {
                    return Err(Error::Format(format!("artist {artist} listed twice in split")));
                }
            }
            Some(split)
        }
        other => return Err(Error::Format(format!("invalid split flag {other}"))),
    };
    if c.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after corpus",
            bytes.len() - c.pos
        )));
    }
    Corpus::new(records, dim, split, min_songs).map_err(|e| Error::Format(format!("invalid corpus: {e}")))
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_corpus(corpus)).map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_corpus(&bytes)
}
