//! Datasets of (voltages, measured outputs) pairs and their JSON-lines files.
//!
//! File layout: the first line is a header object
//! `{"mode","n","seed","sigma","gt_hash","split"}`, followed by one
//! `{"v":[4 reals],"y":[9 or 18 reals]}` object per example.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::chip::{ControlVector, ELECTRODES, WAVEGUIDES};
use super::readout::MeasurementMode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Control,
}

impl Split {
    pub(crate) fn stream_tag(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Test => 2,
            Split::Control => 3,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Control => "control",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "control" => Ok(Split::Control),
            other => Err(Error::Parse(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetExample {
    pub v: ControlVector,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    mode: MeasurementMode,
    n: usize,
    seed: u64,
    sigma: f64,
    gt_hash: String,
    split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub mode: MeasurementMode,
    pub split: Split,
    pub seed: u64,
    pub sigma: f64,
    pub gt_hash: String,
    pub examples: Vec<DatasetExample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn output_len(&self) -> usize {
        self.mode.output_len(WAVEGUIDES)
    }

    pub fn validate(&self) -> Result<()> {
        let want = self.output_len();
        for (i, ex) in self.examples.iter().enumerate() {
            if ex.y.len() != want {
                return Err(Error::shape(
                    format!("{want} outputs"),
                    format!("{} outputs in example {i}", ex.y.len()),
                ));
            }
        }
        Ok(())
    }

    /// Inputs and targets as `n x 4` and `n x d` arrays.
    pub fn to_arrays(&self) -> (Array2<f64>, Array2<f64>) {
        let n = self.len();
        let d = self.output_len();
        let x = Array2::from_shape_fn((n, ELECTRODES), |(i, j)| self.examples[i].v[j]);
        let y = Array2::from_shape_fn((n, d), |(i, j)| self.examples[i].y[j]);
        (x, y)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        let header = Header {
            mode: self.mode,
            n: self.len(),
            seed: self.seed,
            sigma: self.sigma,
            gt_hash: self.gt_hash.clone(),
            split: self.split,
        };
        serde_json::to_writer(&mut *out, &header)?;
        out.write_all(b"\n")?;
        for ex in &self.examples {
            serde_json::to_writer(&mut *out, ex)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path)?;
        Self::read_from(BufReader::new(file)).map_err(|e| match e {
            Error::Json(j) => Error::Parse(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    pub fn read_from(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines();
        let header: Header = match lines.next() {
            Some(line) => serde_json::from_str(&line?)?,
            None => return Err(Error::Parse("empty dataset file".into())),
        };
        let mut examples = Vec::with_capacity(header.n);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            examples.push(serde_json::from_str::<DatasetExample>(&line)?);
        }
        if examples.len() != header.n {
            return Err(Error::Parse(format!(
                "header declares {} examples, file has {}",
                header.n,
                examples.len()
            )));
        }
        let ds = Dataset {
            mode: header.mode,
            split: header.split,
            seed: header.seed,
            sigma: header.sigma,
            gt_hash: header.gt_hash,
            examples,
        };
        ds.validate()?;
        Ok(ds)
    }
}
