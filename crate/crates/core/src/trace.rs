// Copyright 2026 The nvsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Sampled Ramsey signals and their CSV / JSON forms.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{DriveParameters, FieldEnvironment, NvConstants};

/// Values outside `[-BAND, 1 + BAND]` are rejected.
pub const VALUE_BAND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Sampling {
    Dense,
    /// Samples at `t = n * period_s`.
    Undersampled { period_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<NvConstants>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveParameters>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<FieldEnvironment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub sampling: Sampling,
    pub metadata: TraceMetadata,
}

#[derive(Serialize, Deserialize)]
struct Sidecar<'a> {
    n_samples: usize,
    sampling: Sampling,
    metadata: std::borrow::Cow<'a, TraceMetadata>,
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::invalid(format!("trace i/o: {e}"))
}

impl SignalTrace {
    pub fn new(times: Vec<f64>, values: Vec<f64>, sampling: Sampling, metadata: TraceMetadata) -> Result<Self> {
        let t = SignalTrace {
            times,
            values,
            sampling,
            metadata,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.values.len() {
            return Err(Error::invalid(format!(
                "{} times but {} values",
                self.times.len(),
                self.values.len()
            )));
        }
        for w in self.times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::invalid("trace times must be strictly increasing"));
            }
        }
        if let Some(t) = self.times.iter().find(|t| !t.is_finite()) {
            return Err(Error::invalid(format!("non-finite time {t}")));
        }
        if let Some(v) = self
            .values
            .iter()
            .find(|v| !(v.is_finite() && **v >= -VALUE_BAND && **v <= 1.0 + VALUE_BAND))
        {
            return Err(Error::invalid(format!("signal value {v} outside [-0.05, 1.05]")));
        }
        if let Sampling::Undersampled { period_s } = self.sampling {
            if !(period_s.is_finite() && period_s > 0.0) {
                return Err(Error::invalid("under-sampling period must be positive"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn span(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time_s", "signal"]).map_err(io_err)?;
        for (t, v) in self.times.iter().zip(&self.values) {
            // Display for f64 is the shortest round-trip representation
            out.write_record([t.to_string(), v.to_string()]).map_err(io_err)?;
        }
        out.flush().map_err(io_err)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is ascii")
    }

    pub fn sidecar_json(&self) -> String {
        let s = Sidecar {
            n_samples: self.len(),
            sampling: self.sampling,
            metadata: std::borrow::Cow::Borrowed(&self.metadata),
        };
        serde_json::to_string_pretty(&s).expect("metadata serializes")
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let csv_path = dir.join(format!("{stem}.csv"));
        let file = std::fs::File::create(&csv_path).map_err(io_err)?;
        self.write_csv(std::io::BufWriter::new(file))?;
        std::fs::write(dir.join(format!("{stem}.json")), self.sidecar_json() + "\n").map_err(io_err)?;
        Ok(())
    }

    /// Reads a `time_s,signal` CSV; metadata from the optional sidecar.
    pub fn read_csv<R: Read>(r: R, sidecar: Option<&str>) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers().map_err(io_err)?.clone();
        if headers.len() != 2 || &headers[0] != "time_s" || &headers[1] != "signal" {
            return Err(Error::invalid(format!("expected header time_s,signal, got {headers:?}")));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(io_err)?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(io_err);
            times.push(parse(&rec[0])?);
            values.push(parse(&rec[1])?);
        }
        let (sampling, metadata) = match sidecar {
            Some(js) => {
                let s: Sidecar = serde_json::from_str(js).map_err(io_err)?;
                if s.n_samples != times.len() {
                    return Err(Error::invalid("sidecar sample count disagrees with csv"));
                }
                (s.sampling, s.metadata.into_owned())
            }
            None => (Sampling::Dense, TraceMetadata::default()),
        };
        SignalTrace::new(times, values, sampling, metadata)
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let csv_file = std::fs::File::open(dir.join(format!("{stem}.csv"))).map_err(io_err)?;
        let side = std::fs::read_to_string(dir.join(format!("{stem}.json"))).ok();
        Self::read_csv(csv_file, side.as_deref())
    }
}
