//! Replay CSV: `t,fc3cp3,fcz cpz,fc4cp4,label`, one 125 Hz row per line.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{EegClass, EegFrame, CHANNELS};
use crate::error::{Error, Result};

pub const REPLAY_HEADER: [&str; 5] = ["t", "fc3cp3", "fcz cpz", "fc4cp4", "label"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayRow {
    pub t: f64,
    pub channels: [f64; CHANNELS],
    /// `None` is written as `none`.
    pub label: Option<EegClass>,
}

impl ReplayRow {
    pub fn frame(&self) -> EegFrame {
        EegFrame {
            t: self.t,
            channels: self.channels,
        }
    }
}

pub fn write_replay_csv<W: Write>(w: W, rows: &[ReplayRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(REPLAY_HEADER)?;
    for r in rows {
        wr.write_record([
            r.t.to_string(),
            r.channels[0].to_string(),
            r.channels[1].to_string(),
            r.channels[2].to_string(),
            r.label.map_or("none", EegClass::as_str).to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads a replay file. The middle channel header may also be spelled
/// `fczcpz`.
pub fn read_replay_csv<R: Read>(r: R) -> Result<Vec<ReplayRow>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rd.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let ok = names.len() == 5
        && names[0] == "t"
        && names[1] == "fc3cp3"
        && (names[2] == "fcz cpz" || names[2] == "fczcpz")
        && names[3] == "fc4cp4"
        && names[4] == "label";
    if !ok {
        return Err(Error::Parse(format!("unexpected replay header {names:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| -> Result<f64> {
            let v: f64 = rec[j]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: bad number {:?}", i + 1, &rec[j])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse(format!("row {}: non-finite value", i + 1)))
            }
        };
        let label = match rec[4].trim() {
            "none" => None,
            s => Some(
                EegClass::parse(s)
                    .ok_or_else(|| Error::Parse(format!("row {}: unknown label {s:?}", i + 1)))?,
            ),
        };
        out.push(ReplayRow {
            t: num(0)?,
            channels: [num(1)?, num(2)?, num(3)?],
            label,
        });
    }
    Ok(out)
}
