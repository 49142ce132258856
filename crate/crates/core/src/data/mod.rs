//! Datasets: synthetic generators and CSV ingestion.

mod diagrams;
mod dna;

pub use diagrams::{
    diagram_shape, gen_diagrams, Diagram, DiagramShape, LineFamily, DEFAULT_RESOLUTION,
    MIN_RESOLUTION,
};
pub use dna::{encode_dna, gen_dna, DnaSample, BASES, DEFAULT_MOTIF, SEQUENCE_LENGTH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{dims, invalid, Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Dots,
    Dna,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dots" => Ok(Task::Dots),
            "dna" => Ok(Task::Dna),
            _ => Err(invalid(format!(
                "unknown task `{s}` (expected dots or dna)"
            ))),
        }
    }
}

/// N samples of dimension D stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    pub split: Split,
}

impl Dataset {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>, split: Split) -> Result<Self> {
        if labels.is_empty() {
            return Err(invalid("dataset has no samples"));
        }
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(dims(format!(
                "{} feature values do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(v) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature value {v}")));
        }
        Ok(Self {
            features,
            dim,
            labels,
            split,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>, split: Split) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(dims("rows have differing lengths"));
        }
        Self::new(rows.concat(), dim, labels, split)
    }

    pub fn from_diagrams(diagrams: &[Diagram]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = diagrams.iter().map(Diagram::features).collect();
        Self::from_rows(
            &rows,
            diagrams.iter().map(|d| d.label).collect(),
            Split::Train,
        )
    }

    pub fn from_dna(samples: &[DnaSample]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.features.clone()).collect();
        Self::from_rows(
            &rows,
            samples.iter().map(|s| s.label).collect(),
            Split::Train,
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    /// One more than the largest label.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize], split: Split) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return Err(invalid(format!("sample index {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
        }
        Self::new(
            features,
            self.dim,
            indices.iter().map(|&i| self.labels[i]).collect(),
            split,
        )
    }

    /// Seeded shuffle, then the first `round(fraction·N)` samples become the
    /// training split.
    pub fn train_test_split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0 < train_fraction && train_fraction < 1.0) {
            return Err(invalid(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        let n_train = ((self.len() as f64) * train_fraction).round() as usize;
        if n_train == 0 || n_train == self.len() {
            return Err(invalid("split leaves one side empty"));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok((
            self.subset(&idx[..n_train], Split::Train)?,
            self.subset(&idx[n_train..], Split::Test)?,
        ))
    }

    /// Writes `label,f0,…` with shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["label".to_string()];
        header.extend((0..self.dim).map(|i| format!("f{i}")));
        w.write_record(&header)?;
        for (row, label) in self.rows().zip(&self.labels) {
            let mut rec = vec![label.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Parses a header row `label,f0,f1,…` followed by data rows; lines
    /// starting with `#` are skipped.
    pub fn read_csv<R: Read>(reader: R, split: Split) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = r.headers()?.clone();
        let header_line = r.position().line();
        if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
            return Err(Error::Parse {
                line: 1,
                message: "file is empty".into(),
            });
        }
        if &header[0] != "label" {
            return Err(Error::Parse {
                line: header_line,
                message: format!("first column must be `label`, found `{}`", &header[0]),
            });
        }
        for (i, name) in header.iter().skip(1).enumerate() {
            if name != format!("f{i}") {
                return Err(Error::Parse {
                    line: header_line,
                    message: format!("expected column `f{i}`, found `{name}`"),
                });
            }
        }
        let dim = header.len() - 1;
        if dim == 0 {
            return Err(Error::Parse {
                line: header_line,
                message: "no feature columns".into(),
            });
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut record = csv::StringRecord::new();
        loop {
            let more = r.read_record(&mut record).map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                Error::Parse {
                    line,
                    message: e.to_string(),
                }
            })?;
            if !more {
                break;
            }
            let line = record.position().map_or(0, |p| p.line());
            let bad = |message: String| Error::Parse { line, message };
            if record.len() != dim + 1 {
                return Err(bad(format!(
                    "expected {} fields, found {}",
                    dim + 1,
                    record.len()
                )));
            }
            labels.push(
                record[0]
                    .parse::<usize>()
                    .map_err(|e| bad(format!("label `{}`: {e}", &record[0])))?,
            );
            for (k, field) in record.iter().skip(1).enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|e| bad(format!("f{k} `{field}`: {e}")))?;
                if !v.is_finite() {
                    return Err(bad(format!("f{k} is not finite")));
                }
                features.push(v);
            }
        }
        if labels.is_empty() {
            return Err(Error::Parse {
                line: header_line,
                message: "no data rows".into(),
            });
        }
        Self::new(features, dim, labels, split)
    }

    pub fn load_csv(path: impl AsRef<Path>, split: Split) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, split)
    }
}

/// Convenience: balanced synthetic dataset for a task.
pub fn generate(
    task: Task,
    count: usize,
    resolution: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    match task {
        Task::Dots => Dataset::from_diagrams(&gen_diagrams(count, resolution, noise, seed)?),
        Task::Dna => Dataset::from_dna(&gen_dna(count, DEFAULT_MOTIF, seed)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        Dataset::read_csv(text.as_bytes(), Split::Train)
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(parse("").is_err());
        assert!(parse("label,f0\n").is_err());
    }

    #[test]
    fn parses_rows_and_comments() {
        let d = parse("# generated\nlabel,f0,f1\n0,1.5,2\n# mid\n1,-3,4e-3\n1,0,0\n").unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.row(1), &[-3.0, 4e-3]);
        assert_eq!(d.labels(), &[0, 1, 1]);
    }

    #[test]
    fn malformed_rows_report_lines() {
        let err = parse("label,f0,f1\n0,1,2\n1,x,3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        let err = parse("label,f0,f1\n0,1,2\n1,3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        assert!(parse("y,f0\n0,1\n").is_err());
        assert!(parse("label,f0\n-1,1\n").is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let d = generate(Task::Dots, 8, 8, 0.2, 3).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice(), Split::Train).unwrap();
        assert_eq!(back, d);
        for (a, b) in back.rows().flatten().zip(d.rows().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn split_partitions_samples() {
        let d = generate(Task::Dna, 20, 0, 0.0, 1).unwrap();
        let (tr, te) = d.train_test_split(0.9, 5).unwrap();
        assert_eq!((tr.len(), te.len()), (18, 2));
        assert_eq!(tr.split, Split::Train);
        assert_eq!(te.split, Split::Test);
        assert_eq!(d.class_counts(), vec![10, 10]);
    }
}
