//! Report files: CSV tables, a JSON-lines log and small JSON documents.
//! Non-finite reals (diverged runs) are written as `inf`/`nan` strings so
//! they survive a round trip.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rlab_core::robustness::{BoxplotStats, InstanceProvenance, RobustnessRecord};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn fmt_real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        v.to_string()
    }
}

/// Serde adapter for reals that may be non-finite.
pub mod real {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn to_repr(v: f64) -> Repr {
        if v.is_finite() { Repr::Num(v) } else { Repr::Text(super::fmt_real(v)) }
    }

    fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Text(s) => s.parse().map_err(|_| E::custom(format!("not a real: {s:?}"))),
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(v.iter().map(|&x| to_repr(x)))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<Repr>::deserialize(d)?.into_iter().map(from_repr).collect()
        }
    }
}

/// On-disk form of a [`RobustnessRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub model: String,
    #[serde(with = "real::vec")]
    pub losses: Vec<f64>,
    pub instances: Vec<InstanceProvenance>,
}

impl From<&RobustnessRecord> for StoredRecord {
    fn from(r: &RobustnessRecord) -> Self {
        Self { model: r.model_spec_id().into(), losses: r.losses().to_vec(), instances: r.instances().to_vec() }
    }
}

impl StoredRecord {
    pub fn to_record(&self) -> Result<RobustnessRecord> {
        if self.losses.len() != self.instances.len() {
            return Err(Error::Data(format!("record {}: {} losses for {} instances", self.model, self.losses.len(), self.instances.len())));
        }
        let mut r = RobustnessRecord::new(self.model.clone());
        for (&l, &p) in self.losses.iter().zip(&self.instances) {
            r.push(l, p);
        }
        Ok(r)
    }
}

pub fn write_records(path: &Path, records: &[RobustnessRecord]) -> Result<()> {
    let stored: Vec<StoredRecord> = records.iter().map(StoredRecord::from).collect();
    write_json(path, &stored)
}

/// Reads `records.json` from a file path or a run directory.
pub fn read_records(path: &Path) -> Result<Vec<RobustnessRecord>> {
    let file: PathBuf = if path.is_dir() { path.join("records.json") } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).map_err(Error::io(&file))?;
    let stored: Vec<StoredRecord> =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", file.display())))?;
    stored.iter().map(StoredRecord::to_record).collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(Error::io(path))
}

/// Append-only JSON-lines log.
pub struct JsonLines {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonLines {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(Error::io(path))?;
        Ok(Self { path: path.to_path_buf(), out: BufWriter::new(file) })
    }

    pub fn push<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, value)?;
        self.out.write_all(b"\n").map_err(Error::io(&self.path))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(Error::io(&self.path))
    }
}

/// Writes a CSV table; every row must have as many cells as the header.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().map_err(Error::io(path))?;
    Ok(())
}

pub const BOXPLOT_HEADER: [&str; 9] = ["n", "min", "q1", "median", "q3", "max", "whisker_lo", "whisker_hi", "outliers"];

/// Boxplot cells in [`BOXPLOT_HEADER`] order after the leading `n`, which
/// the caller supplies (training size or instance count).
pub fn boxplot_row(n: usize, b: &BoxplotStats) -> Vec<String> {
    let mut row = vec![n.to_string()];
    row.extend([b.min, b.q1, b.median, b.q3, b.max, b.whisker_lo, b.whisker_hi].map(fmt_real));
    row.push(b.outliers.iter().map(|&v| fmt_real(v)).collect::<Vec<_>>().join(";"));
    row
}

/// Equal-width histogram of the finite values: `(lo, hi, count)`.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return vec![(lo, hi, finite.len())];
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0; bins];
    for v in finite {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts.into_iter().enumerate().map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c)).collect()
}
