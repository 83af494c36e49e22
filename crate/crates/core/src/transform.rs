//! Per-dimension z-score standardization and Euclidean distance.

use crate::error::{Error, Result};

/// Per-dimension mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScoreStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ZScoreStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Indices of constant dimensions; these are centered but not scaled.
    pub fn constant_dims(&self) -> Vec<usize> {
        self.std
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        apply_zscore(self, v)
    }
}

/// Fits mean and population std over `vectors`. Two passes for numerical stability.
pub fn fit_zscore<'a, I>(vectors: I) -> Result<ZScoreStats>
where
    I: IntoIterator<Item = &'a [f64]>,
    I::IntoIter: Clone,
{
    let iter = vectors.into_iter();
    let mut count = 0usize;
    let mut sum: Vec<f64> = Vec::new();
    for v in iter.clone() {
        if count == 0 {
            sum = vec![0.0; v.len()];
        } else if v.len() != sum.len() {
            return Err(Error::Data(format!(
                "vector {count} has dimension {}, expected {}",
                v.len(),
                sum.len()
            )));
        }
        sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
        count += 1;
    }
    if count == 0 {
        return Err(Error::Data("cannot fit z-score statistics on an empty set".into()));
    }
    let n = count as f64;
    let mean: Vec<f64> = sum.into_iter().map(|s| s / n).collect();
    let mut sq = vec![0.0; mean.len()];
    for v in iter {
        for ((acc, x), m) in sq.iter_mut().zip(v).zip(&mean) {
            let d = x - m;
            *acc += d * d;
        }
    }
    let std = sq.into_iter().map(|s| (s / n).sqrt()).collect();
    Ok(ZScoreStats { mean, std })
}

pub fn apply_zscore(stats: &ZScoreStats, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != stats.dim() {
        return Err(Error::Data(format!(
            "vector has dimension {}, z-score statistics have {}",
            v.len(),
            stats.dim()
        )));
    }
    Ok(v.iter()
        .zip(stats.mean.iter().zip(&stats.std))
        .map(|(x, (m, s))| if *s > 0.0 { (x - m) / s } else { x - m })
        .collect())
}

pub fn l2_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Data(format!(
            "dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    Ok(squared_l2(u, v).sqrt())
}

/// Squared distance without the dimension check; callers guarantee equal lengths.
#[inline]
pub(crate) fn squared_l2(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rows(v: &[Vec<f64>]) -> impl Iterator<Item = &[f64]> + Clone {
        v.iter().map(Vec::as_slice)
    }

    #[test]
    fn fit_two_rows() {
        let data = vec![vec![0.0, 2.0], vec![2.0, 2.0]];
        let s = fit_zscore(rows(&data)).unwrap();
        assert_eq!(s.mean, vec![1.0, 2.0]);
        assert_eq!(s.std, vec![1.0, 0.0]);
        assert_eq!(s.constant_dims(), vec![1]);
    }

    #[test]
    fn fit_single_row() {
        let data = vec![vec![5.0]];
        let s = fit_zscore(rows(&data)).unwrap();
        assert_eq!((s.mean, s.std), (vec![5.0], vec![0.0]));
    }

    #[test]
    fn fit_errors() {
        let empty: Vec<Vec<f64>> = vec![];
        assert!(fit_zscore(rows(&empty)).is_err());
        let ragged = vec![vec![1.0], vec![1.0, 2.0]];
        assert!(fit_zscore(rows(&ragged)).is_err());
    }

    #[test]
    fn apply_examples() {
        let s = ZScoreStats {
            mean: vec![1.0, 2.0],
            std: vec![1.0, 0.0],
        };
        assert_eq!(apply_zscore(&s, &[2.0, 2.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(apply_zscore(&s, &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert!(apply_zscore(&s, &[1.0]).is_err());
    }

    #[test]
    fn distance_examples() {
        assert_eq!(l2_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(l2_distance(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert!(l2_distance(&[0.0], &[0.0, 1.0]).is_err());
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1e3f64..1e3, 3)
    }

    proptest! {
        #[test]
        fn distance_symmetric_and_triangle(u in vec3(), v in vec3(), w in vec3()) {
            let uv = l2_distance(&u, &v).unwrap();
            prop_assert_eq!(uv, l2_distance(&v, &u).unwrap());
            let uw = l2_distance(&u, &w).unwrap();
            let wv = l2_distance(&w, &v).unwrap();
            prop_assert!(uv <= uw + wv + 1e-9 * (1.0 + uv));
            prop_assert!(uv >= 0.0);
        }

        #[test]
        fn fit_apply_round_trip(data in proptest::collection::vec(proptest::collection::vec(-50f64..50.0, 4), 2..30)) {
            let stats = fit_zscore(rows(&data)).unwrap();
            let z: Vec<Vec<f64>> = data.iter().map(|v| stats.apply(v).unwrap()).collect();
            let n = z.len() as f64;
            for d in 0..4 {
                if stats.std[d] > 1e-9 {
                    let mean = z.iter().map(|v| v[d]).sum::<f64>() / n;
                    let var = z.iter().map(|v| (v[d] - mean).powi(2)).sum::<f64>() / n;
                    prop_assert!(mean.abs() < 1e-9, "mean {}", mean);
                    prop_assert!((var.sqrt() - 1.0).abs() < 1e-9, "std {}", var.sqrt());
                }
            }
        }

        #[test]
        fn zscore_preserves_order_per_dimension(a in -100f64..100.0, b in -100f64..100.0, m in -10f64..10.0, s in 0.01f64..10.0) {
            let stats = ZScoreStats { mean: vec![m], std: vec![s] };
            let za = stats.apply(&[a]).unwrap()[0];
            let zb = stats.apply(&[b]).unwrap()[0];
            // rounding may merge near-equal values but never reverses them
            if a < b {
                prop_assert!(za <= zb);
            } else if a > b {
                prop_assert!(za >= zb);
            }
        }
    }
}
