//! Line-delimited trace files: a header, one record per step, an end marker.

use std::path::Path;

use serde::{Deserialize, Serialize};

use backforth_core::engine::{Carrier, StepTrace};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const FORMAT: &str = "backforth-trace/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub config_sha256: String,
    pub config: RunConfig,
    pub carrier: Carrier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
pub enum TraceRecord {
    Header(TraceHeader),
    Step(StepTrace),
    End { steps: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub steps: Vec<StepTrace>,
}

impl Trace {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut line = |r: &TraceRecord| {
            out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
            out.push('\n');
        };
        line(&TraceRecord::Header(self.header.clone()));
        for s in &self.steps {
            line(&TraceRecord::Step(s.clone()));
        }
        line(&TraceRecord::End { steps: self.steps.len() });
        out
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let last = lines.len().saturating_sub(1);
        let mut records = Vec::with_capacity(lines.len());
        for (i, l) in lines.iter().enumerate() {
            match serde_json::from_str::<TraceRecord>(l) {
                Ok(r) => records.push(r),
                Err(e) if i == last && !text.ends_with('\n') => {
                    return Err(CliError::Truncated(format!("line {}: {e}", i + 1)));
                }
                Err(e) => return Err(CliError::Schema(format!("line {}: {e}", i + 1))),
            }
        }
        let mut it = records.into_iter();
        let header = match it.next() {
            Some(TraceRecord::Header(h)) => h,
            Some(_) => return Err(CliError::Schema("first record is not a header".into())),
            None => return Err(CliError::Truncated("empty trace".into())),
        };
        if header.format != FORMAT {
            return Err(CliError::Schema(format!("unknown trace format {:?}", header.format)));
        }
        let mut steps = Vec::new();
        for r in it {
            match r {
                TraceRecord::Step(s) if steps.len() + 1 == s.step => steps.push(s),
                TraceRecord::Step(s) => {
                    return Err(CliError::Schema(format!("step {} out of sequence", s.step)));
                }
                TraceRecord::End { steps: n } if n == steps.len() => return Ok(Self { header, steps }),
                TraceRecord::End { steps: n } => {
                    return Err(CliError::Truncated(format!("end marker counts {n} steps, found {}", steps.len())));
                }
                TraceRecord::Header(_) => return Err(CliError::Schema("second header".into())),
            }
        }
        Err(CliError::Truncated(format!("no end marker after {} steps", steps.len())))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }
}
