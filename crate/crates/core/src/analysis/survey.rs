use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn aggregate_ratings(samples: &[f64]) -> Result<RatingSummary> {
    if samples.is_empty() {
        return Err(Error::Range("no ratings to aggregate".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("ratings contain non-finite values".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(RatingSummary { mean, std: var.sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Vote {
    A,
    B,
}

/// Percentages of votes for each option; they sum to exactly 100.
pub fn vote_shares(votes: &[Vote]) -> Result<(f64, f64)> {
    if votes.is_empty() {
        return Err(Error::Range("no votes to aggregate".into()));
    }
    let a = votes.iter().filter(|v| **v == Vote::A).count();
    let share_a = 100.0 * a as f64 / votes.len() as f64;
    Ok((share_a, 100.0 - share_a))
}

/// Labeled numeric rows sharing one set of named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl RatingTable {
    pub fn new(columns: Vec<String>, rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        for (label, values) in &rows {
            if values.len() != columns.len() {
                return Err(Error::Shape(format!(
                    "row {label:?} has {} values for {} columns",
                    values.len(),
                    columns.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("row {label:?} has non-finite values")));
            }
        }
        Ok(Self { columns, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Data(format!("no column {name:?}; have {:?}", self.columns)))?;
        Ok(self.rows.iter().map(|(_, v)| v[idx]).collect())
    }
}

/// CSV with a header; the first column holds row labels, the rest numbers.
pub fn parse_rating_table(text: &str) -> Result<RatingTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("table header: {e}")))?
        .clone();
    if headers.len() < 2 {
        return Err(Error::Format("table needs a label column and at least one value column".into()));
    }
    let columns = headers.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("table row {}: {e}", i + 1)))?;
        let label = record.get(0).unwrap_or_default().to_string();
        let values = record
            .iter()
            .skip(1)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Format(format!("row {label:?}: {s:?} is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((label, values));
    }
    RatingTable::new(columns, rows)
}

pub fn load_rating_table(path: &Path) -> Result<RatingTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rating_table(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratings() {
        assert_eq!(aggregate_ratings(&[1.0, 5.0]).unwrap(), RatingSummary { mean: 3.0, std: 2.0 });
        assert_eq!(aggregate_ratings(&[4.0; 7]).unwrap().std, 0.0);
        assert!(matches!(aggregate_ratings(&[]), Err(Error::Range(_))));
    }

    #[test]
    fn votes() {
        let mut v = vec![Vote::A; 92];
        v.extend([Vote::B; 8]);
        assert_eq!(vote_shares(&v).unwrap(), (92.0, 8.0));
        assert_eq!(vote_shares(&[Vote::A; 3]).unwrap(), (100.0, 0.0));
        v.reverse();
        assert_eq!(vote_shares(&v).unwrap(), (92.0, 8.0));
        assert!(matches!(vote_shares(&[]), Err(Error::Range(_))));
        let (a, b) = vote_shares(&[Vote::A, Vote::B, Vote::B]).unwrap();
        assert_eq!(a + b, 100.0);
    }

    #[test]
    fn table_parsing() {
        let t = parse_rating_table("source,mu,fid\nmale,2.0,0.87\nfemale,2.52,0.34\n").unwrap();
        assert_eq!(t.column("fid").unwrap(), vec![0.87, 0.34]);
        assert!(t.column("fdd").is_err());
        assert!(parse_rating_table("source,mu\nmale,abc\n").is_err());
    }
}
