//! Embedding TSV files (`track_id\te0\t...`) and exact nearest-neighbour search over them.

use std::io::{BufRead, Write};

use anyhow::{bail, Context};
use rayon::prelude::*;
use tripletsim::transform::l2_distance;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub ids: Vec<u64>,
    pub vectors: Vec<Vec<f64>>,
}

pub fn write_embeddings<W: Write>(rows: &[(u64, Vec<f64>)], mut out: W) -> std::io::Result<()> {
    let dim = rows.first().map_or(0, |(_, v)| v.len());
    write!(out, "track_id")?;
    for k in 0..dim {
        write!(out, "\te{k}")?;
    }
    writeln!(out)?;
    for (id, v) in rows {
        write!(out, "{id}")?;
        for x in v {
            write!(out, "\t{x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_embeddings<R: BufRead>(reader: R) -> anyhow::Result<EmbeddingTable> {
    let mut lines = reader.lines();
    let header = lines.next().context("embedding file is empty")??;
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.first() != Some(&"track_id") {
        bail!("embedding header must start with track_id, got {:?}", cols.first().unwrap_or(&""));
    }
    for (k, c) in cols.iter().enumerate().skip(1) {
        if *c != format!("e{}", k - 1) {
            bail!("embedding header column {} should be e{}, got {c:?}", k + 1, k - 1);
        }
    }
    let dim = cols.len() - 1;
    let mut table = EmbeddingTable {
        dim,
        ids: Vec::new(),
        vectors: Vec::new(),
    };
    let mut seen = std::collections::HashSet::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let row = i + 2;
        if line.is_empty() {
            continue;
        }
        let mut cells = line.split('\t');
        let id: u64 = cells
            .next()
            .unwrap_or_default()
            .parse()
            .with_context(|| format!("row {row}: bad track_id"))?;
        let v = cells
            .map(|c| c.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<_>>>()
            .with_context(|| format!("row {row} (track {id}): non-numeric or non-finite value"))?;
        if v.len() != dim {
            bail!("row {row} (track {id}): expected {dim} values, found {}", v.len());
        }
        if !seen.insert(id) {
            bail!("row {row}: duplicate track_id {id}");
        }
        table.ids.push(id);
        table.vectors.push(v);
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub track_id: u64,
    pub distance: f64,
}

/// The `k` tracks closest to `query`, excluding the query itself, ascending by distance
/// then track id. `None` if the query is not in the table.
pub fn nearest(table: &EmbeddingTable, query: u64, k: usize) -> Option<Vec<Neighbor>> {
    let q = table.ids.iter().position(|&id| id == query)?;
    let target = &table.vectors[q];
    let mut all: Vec<Neighbor> = table
        .ids
        .par_iter()
        .zip(&table.vectors)
        .filter(|(&id, _)| id != query)
        .map(|(&track_id, v)| Neighbor {
            track_id,
            distance: l2_distance(target, v).expect("rows share one dimension"),
        })
        .collect();
    all.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.track_id.cmp(&b.track_id)));
    all.truncate(k);
    Some(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(rows: &[(u64, Vec<f64>)]) -> EmbeddingTable {
        let mut buf = Vec::new();
        write_embeddings(rows, &mut buf).unwrap();
        read_embeddings(buf.as_slice()).unwrap()
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_embeddings(&[(4, vec![0.5, -1.0, 2.0])], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "track_id\te0\te1\te2\n4\t0.5\t-1\t2\n");
    }

    #[test]
    fn round_trip_is_exact() {
        let rows = vec![(1, vec![0.1, 1e-300]), (9, vec![-3.25, f64::MAX])];
        let t = table(&rows);
        assert_eq!(t.ids, vec![1, 9]);
        assert_eq!(t.vectors, vec![rows[0].1.clone(), rows[1].1.clone()]);
    }

    #[test]
    fn rejects_malformed_rows() {
        assert!(read_embeddings("track_id\te0\n1\tx\n".as_bytes()).is_err());
        assert!(read_embeddings("track_id\te0\n1\t1\t2\n".as_bytes()).is_err());
        assert!(read_embeddings("track_id\te0\n1\t1\n1\t2\n".as_bytes()).is_err());
        assert!(read_embeddings("id\te0\n".as_bytes()).is_err());
        assert!(read_embeddings("track_id\te0\n1\tNaN\n".as_bytes()).is_err());
    }

    #[test]
    fn ties_break_by_track_id_and_query_is_excluded() {
        let t = table(&[
            (5, vec![0.0]),
            (3, vec![1.0]),
            (2, vec![-1.0]),
            (8, vec![0.5]),
        ]);
        let got = nearest(&t, 5, 10).unwrap();
        let ids: Vec<u64> = got.iter().map(|n| n.track_id).collect();
        assert_eq!(ids, vec![8, 2, 3]);
        assert_eq!(nearest(&t, 5, 1).unwrap()[0].track_id, 8);
        assert!(nearest(&t, 42, 1).is_none());
    }

    proptest! {
        #[test]
        fn matches_full_sort(points in prop::collection::vec(prop::collection::vec(-3i8..3, 2), 2..40), k in 1usize..10) {
            let rows: Vec<(u64, Vec<f64>)> = points
                .iter()
                .enumerate()
                .map(|(i, p)| (i as u64 * 7 % 41, p.iter().map(|&x| x as f64).collect()))
                .collect();
            let t = table(&rows);
            let got = nearest(&t, rows[0].0, k).unwrap();
            prop_assert_eq!(got.len(), k.min(rows.len() - 1));
            for w in got.windows(2) {
                prop_assert!(w[0].distance < w[1].distance
                    || (w[0].distance == w[1].distance && w[0].track_id < w[1].track_id));
            }
            // nothing left out is closer than the last neighbour returned
            let last = got.last().unwrap().distance;
            let kept: Vec<u64> = got.iter().map(|n| n.track_id).collect();
            for (id, v) in &rows[1..] {
                if !kept.contains(id) {
                    prop_assert!(l2_distance(&rows[0].1, v).unwrap() >= last);
                }
            }
        }
    }
}
