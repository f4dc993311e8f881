//! Result rows of the solve and bench commands.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::game::CostKind;
use crate::numfmt::format_g;
use crate::sgm::SgmStatus;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sgm,
    Direct,
    Twolevel,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sgm, Method::Direct, Method::Twolevel];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sgm => "sgm",
            Method::Direct => "direct",
            Method::Twolevel => "twolevel",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown method {s:?}")))
    }
}

/// Outcome of one run; `Failed` marks runs that raised an error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Solved,
    TimeLimit,
    SolverExhausted,
    Failed,
}

impl From<SgmStatus> for RunStatus {
    fn from(s: SgmStatus) -> Self {
        match s {
            SgmStatus::Solved => RunStatus::Solved,
            SgmStatus::TimeLimit => RunStatus::TimeLimit,
            SgmStatus::SolverExhausted => RunStatus::SolverExhausted,
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Solved => "solved",
            RunStatus::TimeLimit => "time_limit",
            RunStatus::SolverExhausted => "solver_exhausted",
            RunStatus::Failed => "failed",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance_id: String,
    pub m: usize,
    pub n: usize,
    #[serde(serialize_with = "ser_kind", deserialize_with = "de_kind")]
    pub cost_kind: CostKind,
    pub method: Method,
    pub status: RunStatus,
    #[serde(serialize_with = "ser_g9", deserialize_with = "de_real")]
    pub wall_time_s: f64,
    pub iterations_stage1: usize,
    pub iterations_stage2: usize,
    #[serde(serialize_with = "ser_g9", deserialize_with = "de_real")]
    pub certified_regret: f64,
}

fn ser_kind<S: Serializer>(k: &CostKind, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(k.name())
}

fn de_kind<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CostKind, D::Error> {
    String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
}

fn ser_g9<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_g(*x, 9))
}

fn de_real<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    let text = String::deserialize(d)?;
    text.trim().parse().map_err(|_| serde::de::Error::custom(format!("invalid number {text:?}")))
}

pub fn write_records<W: std::io::Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_records<R: std::io::Read>(input: R) -> Result<Vec<RunRecord>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    parse_records(std::fs::File::open(path)?)
}

/// Appends rows to a CSV file, writing the header only for a new file.
pub struct RecordSink {
    writer: csv::Writer<std::fs::File>,
}

impl RecordSink {
    pub fn append(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        let writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        Ok(Self { writer })
    }

    pub fn push(&mut self, record: &RunRecord) -> Result<()> {
        self.writer.serialize(record)?;
        self.writer.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunRecord {
        RunRecord {
            instance_id: "m2_n3_log_0".into(),
            m: 2,
            n: 3,
            cost_kind: CostKind::Log,
            method: Method::Twolevel,
            status: RunStatus::Solved,
            wall_time_s: 0.123456789012,
            iterations_stage1: 7,
            iterations_stage2: 1,
            certified_regret: 3.5e-6,
        }
    }

    #[test]
    fn schema_and_formatting() {
        let mut buf = Vec::new();
        write_records(&mut buf, &[sample()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "instance_id,m,n,cost_kind,method,status,wall_time_s,iterations_stage1,iterations_stage2,certified_regret"
        );
        assert_eq!(lines.next().unwrap(), "m2_n3_log_0,2,3,log,twolevel,solved,0.123456789,7,1,3.5e-06");
    }

    #[test]
    fn round_trip() {
        let mut r = sample();
        r.wall_time_s = 2.5;
        let mut other = sample();
        other.status = RunStatus::Failed;
        other.wall_time_s = 0.25;
        other.certified_regret = f64::INFINITY;
        let mut buf = Vec::new();
        write_records(&mut buf, &[r.clone(), other.clone()]).unwrap();
        assert_eq!(parse_records(buf.as_slice()).unwrap(), vec![r, other]);
    }

    #[test]
    fn sink_appends_without_repeating_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        for _ in 0..2 {
            let mut sink = RecordSink::append(&path).unwrap();
            sink.push(&sample()).unwrap();
        }
        assert_eq!(read_records(&path).unwrap().len(), 2);
    }
}
