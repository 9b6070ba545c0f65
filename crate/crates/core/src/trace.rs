//! Per-interface trace files: one CSV row per scheduler tick with the
//! columns `time_s,mcs_index,rssi_dbm,loss,traffic_rate_mbps`.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a trace
//! written by a generation run replays to bit-identical values.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::LinkCondition;

pub const TRACE_HEADER: &str = "time_s,mcs_index,rssi_dbm,loss,traffic_rate_mbps";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{source_name}: trace is empty")]
    Empty { source_name: String },
    #[error("{source_name}: expected header `{TRACE_HEADER}`, found `{found}`")]
    BadHeader { source_name: String, found: String },
    #[error("{source_name}:{line}: {message}")]
    BadRow { source_name: String, line: u64, message: String },
    #[error("{source_name}: {source}")]
    Io {
        source_name: String,
        #[source]
        source: io::Error,
    },
    #[error("trace writer for {iface}: {source}")]
    Write {
        iface: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time_s: f64,
    /// -1 encodes a down link.
    pub mcs_index: i32,
    pub rssi_dbm: f64,
    pub loss: f64,
    pub traffic_rate_mbps: f64,
}

impl TraceRecord {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{:?},{},{:?},{:?},{:?}",
            self.time_s, self.mcs_index, self.rssi_dbm, self.loss, self.traffic_rate_mbps
        )
    }
}

/// A validated, time-sorted trace of one interface.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

/// Result of a zero-order-hold lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replay<'a> {
    pub record: &'a TraceRecord,
    /// The query time is past the last record.
    pub exhausted: bool,
}

impl Trace {
    pub fn new(records: Vec<TraceRecord>, source_name: &str) -> Result<Self, TraceError> {
        if records.is_empty() {
            return Err(TraceError::Empty { source_name: source_name.into() });
        }
        for (i, r) in records.iter().enumerate() {
            let line = i as u64 + 2;
            let bad = |message: String| TraceError::BadRow { source_name: source_name.into(), line, message };
            if !r.time_s.is_finite() || r.time_s < 0.0 {
                return Err(bad(format!("time_s {} must be finite and >= 0", r.time_s)));
            }
            if i > 0 && r.time_s <= records[i - 1].time_s {
                return Err(bad(format!("time_s {} is not after {}", r.time_s, records[i - 1].time_s)));
            }
            if !(-1..=15).contains(&r.mcs_index) {
                return Err(bad(format!("mcs_index {} out of range", r.mcs_index)));
            }
            if !r.rssi_dbm.is_finite() {
                return Err(bad("rssi_dbm must be finite".into()));
            }
            if !(0.0..=1.0).contains(&r.loss) {
                return Err(bad(format!("loss {} outside [0, 1]", r.loss)));
            }
            if !(r.traffic_rate_mbps >= 0.0) || !r.traffic_rate_mbps.is_finite() {
                return Err(bad(format!("traffic_rate_mbps {} must be >= 0", r.traffic_rate_mbps)));
            }
        }
        Ok(Trace { records })
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn duration_s(&self) -> f64 {
        self.records.last().map(|r| r.time_s).unwrap_or(0.0)
    }

    pub fn read<R: Read>(reader: R, source_name: &str) -> Result<Self, TraceError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| TraceError::BadRow {
            source_name: source_name.into(),
            line: 1,
            message: e.to_string(),
        })?;
        let found = headers.iter().collect::<Vec<_>>().join(",");
        if found != TRACE_HEADER {
            return Err(TraceError::BadHeader { source_name: source_name.into(), found });
        }
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| TraceError::BadRow {
                source_name: source_name.into(),
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let bad = |message: String| TraceError::BadRow { source_name: source_name.into(), line, message };
            if row.len() != 5 {
                return Err(bad(format!("expected 5 columns, found {}", row.len())));
            }
            let float = |i: usize| -> Result<f64, TraceError> {
                row[i].parse::<f64>().map_err(|e| bad(format!("column {}: `{}`: {e}", i + 1, &row[i])))
            };
            let mcs_index = row[1]
                .parse::<i32>()
                .map_err(|e| bad(format!("column 2: `{}`: {e}", &row[1])))?;
            records.push(TraceRecord {
                time_s: float(0)?,
                mcs_index,
                rssi_dbm: float(2)?,
                loss: float(3)?,
                traffic_rate_mbps: float(4)?,
            });
        }
        Self::new(records, source_name)
    }

    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let name = path.display().to_string();
        let file = File::open(path).map_err(|source| TraceError::Io { source_name: name.clone(), source })?;
        Self::read(io::BufReader::new(file), &name)
    }

    pub fn replay(&self, t: f64) -> Replay<'_> {
        replay_condition(self, t)
    }
}

/// Zero-order hold: the last record at or before `t`. Queries before the
/// first record get the first record; queries after the last record get the
/// last one with `exhausted` set.
pub fn replay_condition(trace: &Trace, t: f64) -> Replay<'_> {
    let recs = &trace.records;
    let idx = recs.partition_point(|r| r.time_s <= t);
    let record = &recs[idx.saturating_sub(1)];
    let last = recs.last().expect("non-empty trace");
    Replay { record, exhausted: t > last.time_s }
}

pub fn trace_file_name(node: &str, iface: &str) -> String {
    format!("{node}_{iface}.csv")
}

/// Streams trace rows for one interface.
pub struct TraceWriter<W: Write> {
    iface: String,
    out: W,
    rows: usize,
}

impl TraceWriter<BufWriter<File>> {
    /// Create `<dir>/<node>_<iface>.csv` and write the header.
    pub fn create(dir: &Path, node: &str, iface: &str) -> Result<(Self, PathBuf), TraceError> {
        let path = dir.join(trace_file_name(node, iface));
        let label = format!("{node}/{iface}");
        let file = File::create(&path).map_err(|source| TraceError::Write { iface: label.clone(), source })?;
        Ok((Self::new(BufWriter::new(file), label)?, path))
    }
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, iface: impl Into<String>) -> Result<Self, TraceError> {
        let iface = iface.into();
        writeln!(out, "{TRACE_HEADER}").map_err(|source| TraceError::Write { iface: iface.clone(), source })?;
        Ok(TraceWriter { iface, out, rows: 0 })
    }

    pub fn write_row(
        &mut self,
        t: f64,
        cond: &LinkCondition,
        mcs_index: i32,
        rate_mbps: f64,
    ) -> Result<(), TraceError> {
        let rec = TraceRecord {
            time_s: t,
            mcs_index,
            rssi_dbm: cond.rssi_dbm,
            loss: cond.loss,
            traffic_rate_mbps: rate_mbps,
        };
        self.write_record(&rec)
    }

    pub fn write_record(&mut self, rec: &TraceRecord) -> Result<(), TraceError> {
        writeln!(self.out, "{}", rec.to_csv_line())
            .map_err(|source| TraceError::Write { iface: self.iface.clone(), source })?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn finish(mut self) -> Result<W, TraceError> {
        self.out.flush().map_err(|source| TraceError::Write { iface: self.iface.clone(), source })?;
        Ok(self.out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(t: f64, mcs: i32) -> TraceRecord {
        TraceRecord { time_s: t, mcs_index: mcs, rssi_dbm: -55.0, loss: 0.0, traffic_rate_mbps: 39.0 }
    }

    #[test]
    fn zero_order_hold() {
        let tr = Trace::new(vec![rec(0.0, 4)], "t").unwrap();
        assert_eq!(tr.replay(3.0).record.mcs_index, 4);

        let tr = Trace::new(vec![rec(0.0, 1), rec(5.0, 2), rec(10.0, 3)], "t").unwrap();
        assert_eq!(tr.replay(7.0).record.time_s, 5.0);
        assert!(!tr.replay(7.0).exhausted);
        assert_eq!(tr.replay(10.0).record.time_s, 10.0);
        assert!(!tr.replay(10.0).exhausted);
        let past = tr.replay(12.0);
        assert_eq!(past.record.time_s, 10.0);
        assert!(past.exhausted);

        let late = Trace::new(vec![rec(5.0, 2)], "t").unwrap();
        assert_eq!(late.replay(0.0).record.time_s, 5.0);
    }

    #[test]
    fn empty_trace_rejected() {
        assert!(matches!(Trace::new(vec![], "x"), Err(TraceError::Empty { .. })));
        let err = Trace::read(format!("{TRACE_HEADER}\n").as_bytes(), "x").unwrap_err();
        assert!(matches!(err, TraceError::Empty { .. }));
    }

    #[test]
    fn row_format() {
        let mut w = TraceWriter::new(Vec::new(), "r0/w0").unwrap();
        let up = LinkCondition { rssi_dbm: -55.0, snr_db: 36.0, loss: 0.0 };
        w.write_row(0.0, &up, 4, 39.0).unwrap();
        let down = LinkCondition { rssi_dbm: -95.0, snr_db: -4.0, loss: 1.0 };
        w.write_row(5.0, &down, -1, 0.0).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        assert_eq!(text, format!("{TRACE_HEADER}\n0.0,4,-55.0,0.0,39.0\n5.0,-1,-95.0,1.0,0.0\n"));
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let text = format!("{TRACE_HEADER}\n0.0,4,-55.0,0.0,39.0\n5.0,x,-55.0,0.0,39.0\n");
        match Trace::read(text.as_bytes(), "f.csv").unwrap_err() {
            TraceError::BadRow { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
        let text = format!("{TRACE_HEADER}\n5.0,4,-55.0,0.0,39.0\n5.0,4,-55.0,0.0,39.0\n");
        assert!(matches!(Trace::read(text.as_bytes(), "f.csv"), Err(TraceError::BadRow { line: 3, .. })));
        let text = "t,mcs\n0,1\n";
        assert!(matches!(Trace::read(text.as_bytes(), "f.csv"), Err(TraceError::BadHeader { .. })));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(
            rows in proptest::collection::vec(
                (-1i32..=8, -120.0f64..20.0, 0.0f64..=1.0, 0.0f64..200.0), 1..20)
        ) {
            let records: Vec<TraceRecord> = rows
                .iter()
                .enumerate()
                .map(|(i, &(mcs, rssi, loss, rate))| TraceRecord {
                    time_s: i as f64 * 5.0,
                    mcs_index: mcs,
                    rssi_dbm: rssi,
                    loss,
                    traffic_rate_mbps: rate,
                })
                .collect();
            let mut w = TraceWriter::new(Vec::new(), "x").unwrap();
            for r in &records {
                w.write_record(r).unwrap();
            }
            let bytes = w.finish().unwrap();
            let back = Trace::read(bytes.as_slice(), "x").unwrap();
            prop_assert_eq!(back.records(), records.as_slice());
        }
    }
}
