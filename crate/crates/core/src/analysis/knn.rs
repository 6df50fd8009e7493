use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 − cos(a, b)`; a zero vector has cosine similarity 0 with anything.
    Cosine,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    (1.0 - dot / (na.sqrt() * nb.sqrt())).max(0.0)
                }
            }
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::Unsupported(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborResult {
    /// Pool row of the query when it was taken from the pool itself.
    pub reference_index: Option<usize>,
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
    pub metric: Metric,
}

/// Exact top-`k` of `pool` around `query`, nearest first, ties to the lower
/// row index.
pub fn nearest_neighbors(query: &[f64], pool: &EmbeddingSet, k: usize, metric: Metric) -> Result<NeighborResult> {
    search(query, pool, k, metric, None)
}

/// Neighbors of pool row `index` among the other rows.
pub fn neighbors_of_row(pool: &EmbeddingSet, index: usize, k: usize, metric: Metric) -> Result<NeighborResult> {
    if index >= pool.len() {
        return Err(Error::Range(format!(
            "query index {index} out of range for {} rows",
            pool.len()
        )));
    }
    search(pool.row(index), pool, k, metric, Some(index))
}

fn search(
    query: &[f64],
    pool: &EmbeddingSet,
    k: usize,
    metric: Metric,
    exclude: Option<usize>,
) -> Result<NeighborResult> {
    if query.len() != pool.dim() {
        return Err(Error::Shape(format!(
            "query has {} entries, pool rows have {}",
            query.len(),
            pool.dim()
        )));
    }
    let candidates = pool.len() - usize::from(exclude.is_some());
    if k == 0 || k > candidates {
        return Err(Error::Range(format!(
            "k = {k} must lie in 1..={candidates} for this pool"
        )));
    }
    if query.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("query has non-finite entries".into()));
    }

    let mut scored: Vec<(f64, usize)> = (0..pool.len())
        .into_par_iter()
        .filter(|&i| Some(i) != exclude)
        .map(|i| (metric.distance(query, pool.row(i)), i))
        .collect();
    let order = |a: &(f64, usize), b: &(f64, usize)| -> Ordering { a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)) };
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(order);

    Ok(NeighborResult {
        reference_index: exclude,
        indices: scored.iter().map(|s| s.1).collect(),
        distances: scored.iter().map(|s| s.0).collect(),
        metric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool() -> EmbeddingSet {
        EmbeddingSet::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![5.0, 0.0]], "p", "e").unwrap()
    }

    #[test]
    fn hand_example() {
        let r = nearest_neighbors(&[0.9, 0.0], &pool(), 2, Metric::Euclidean).unwrap();
        assert_eq!(r.indices, vec![1, 0]);
        assert!((r.distances[0] - 0.1).abs() < 1e-12);
        assert!((r.distances[1] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn exact_match_first() {
        let r = nearest_neighbors(&[5.0, 0.0], &pool(), 1, Metric::Euclidean).unwrap();
        assert_eq!((r.indices[0], r.distances[0]), (2, 0.0));
    }

    #[test]
    fn self_query_excludes_reference() {
        let r = neighbors_of_row(&pool(), 1, 2, Metric::Euclidean).unwrap();
        assert_eq!(r.indices, vec![0, 2]);
        assert_eq!(r.reference_index, Some(1));
        assert!(matches!(neighbors_of_row(&pool(), 1, 3, Metric::Euclidean), Err(Error::Range(_))));
    }

    #[test]
    fn ties_prefer_lower_index() {
        let p = EmbeddingSet::from_rows(&[vec![2.0], vec![-1.0], vec![1.0], vec![1.0]], "p", "e").unwrap();
        let r = nearest_neighbors(&[0.0], &p, 3, Metric::Euclidean).unwrap();
        assert_eq!(r.indices, vec![1, 2, 3]);
    }

    #[test]
    fn cosine_ignores_scale() {
        let p = EmbeddingSet::from_rows(&[vec![10.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]], "p", "e").unwrap();
        let r = nearest_neighbors(&[1.0, 0.1], &p, 3, Metric::Cosine).unwrap();
        assert_eq!(r.indices, vec![0, 1, 2]);
        assert_eq!(r.distances[2], 1.0);
    }

    #[test]
    fn argument_errors() {
        assert!(matches!(nearest_neighbors(&[0.0], &pool(), 1, Metric::Euclidean), Err(Error::Shape(_))));
        assert!(matches!(nearest_neighbors(&[0.0, 0.0], &pool(), 0, Metric::Euclidean), Err(Error::Range(_))));
        assert!(matches!(nearest_neighbors(&[0.0, 0.0], &pool(), 4, Metric::Euclidean), Err(Error::Range(_))));
    }
}
