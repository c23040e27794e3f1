//! File protocol for measuring `f(S)` with an external trainer.
//!
//! Request lines: `id<TAB>tasks<TAB>downsample<TAB>notes`, tasks space-separated.
//! Response lines: `id<TAB>value<TAB>status<TAB>message`, status `ok` or `failed`,
//! terminated by a `#done` line. Responses may arrive in any order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use tasksel_core::{PerformanceRecord, Subset};

use crate::error::{CliError, CliResult};
use crate::format::{atomic_write, fmt_f64, parse_f64, parse_tasks, parse_u64, read_file};

pub const DONE_MARKER: &str = "#done";

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRequest {
    pub id: u64,
    pub tasks: Subset,
    pub downsample: f64,
    pub notes: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResponse {
    pub id: u64,
    pub value: f64,
    pub status: Status,
    pub message: String,
}

impl OracleResponse {
    pub fn ok(id: u64, value: f64) -> Self {
        Self { id, value, status: Status::Ok, message: String::new() }
    }

    pub fn failed(id: u64, message: impl Into<String>) -> Self {
        Self { id, value: f64::NAN, status: Status::Failed, message: message.into() }
    }
}

fn protocol(msg: impl Into<String>) -> CliError {
    CliError::Protocol(msg.into())
}

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

/// Requests with ids `index + 1`.
pub fn requests_for(subsets: &[Subset], downsample: f64, notes: &str) -> Vec<OracleRequest> {
    subsets
        .iter()
        .enumerate()
        .map(|(i, s)| OracleRequest { id: i as u64 + 1, tasks: s.clone(), downsample, notes: notes.to_string() })
        .collect()
}

pub fn requests_to_string(requests: &[OracleRequest]) -> String {
    let mut s = String::new();
    for r in requests {
        writeln!(s, "{}\t{}\t{}\t{}", r.id, r.tasks.to_id_list(), fmt_f64(r.downsample), clean(&r.notes)).unwrap();
    }
    s
}

/// Writes one request per subset (full data, no notes) and returns the count.
pub fn write_requests(subsets: &[Subset], path: &Path) -> CliResult<usize> {
    write_request_batch(&requests_for(subsets, 1.0, ""), path)
}

pub fn write_request_batch(requests: &[OracleRequest], path: &Path) -> CliResult<usize> {
    atomic_write(path, &requests_to_string(requests))?;
    Ok(requests.len())
}

pub fn parse_requests(text: &str) -> CliResult<Vec<OracleRequest>> {
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(protocol(format!("request line {lineno}: expected 4 tab-separated fields, found {}", fields.len())));
        }
        let at = |e: CliError| protocol(format!("request line {lineno}: {e}"));
        let id = parse_u64(fields[0], "id").map_err(at)?;
        if !ids.insert(id) {
            return Err(protocol(format!("duplicate request id {id}")));
        }
        let tasks = parse_tasks(fields[1]).map_err(at)?;
        let downsample = parse_f64(fields[2], "downsample").map_err(at)?;
        if !(downsample > 0.0 && downsample <= 1.0) {
            return Err(protocol(format!("request line {lineno}: downsample {downsample} outside (0, 1]")));
        }
        out.push(OracleRequest { id, tasks, downsample, notes: fields[3].to_string() });
    }
    Ok(out)
}

pub fn read_requests(path: &Path) -> CliResult<Vec<OracleRequest>> {
    parse_requests(&read_file(path)?)
}

/// Reads either a request file or a `#tasksel-subsets v1` file; subsets files
/// become requests with ids `index + 1` and the given downsample.
pub fn read_batch(path: &Path, downsample: f64) -> CliResult<Vec<OracleRequest>> {
    let text = read_file(path)?;
    if text.lines().next().map(str::trim_end) == Some(crate::format::SUBSETS_TAG) {
        Ok(requests_for(&crate::format::parse_subsets(&text)?, downsample, ""))
    } else {
        parse_requests(&text)
    }
}

pub fn responses_to_string(responses: &[OracleResponse]) -> String {
    let mut s = String::new();
    for r in responses {
        let status = match r.status {
            Status::Ok => "ok",
            Status::Failed => "failed",
        };
        writeln!(s, "{}\t{}\t{}\t{}", r.id, fmt_f64(r.value), status, clean(&r.message)).unwrap();
    }
    writeln!(s, "{DONE_MARKER}").unwrap();
    s
}

pub fn write_responses(responses: &[OracleResponse], path: &Path) -> CliResult<()> {
    atomic_write(path, &responses_to_string(responses))
}

/// Answers a request batch with `f`, running up to `workers` requests at once.
pub fn answer<F>(requests: &[OracleRequest], f: F, workers: usize) -> Vec<OracleResponse>
where
    F: Fn(&OracleRequest) -> tasksel_core::Result<f64> + Sync,
{
    crate::parallel::pool(workers).install(|| {
        requests
            .par_iter()
            .map(|r| match f(r) {
                Ok(v) if v.is_finite() => OracleResponse::ok(r.id, v),
                Ok(v) => OracleResponse::failed(r.id, format!("non-finite value {v}")),
                Err(e) => OracleResponse::failed(r.id, e.to_string()),
            })
            .collect()
    })
}

/// Parsed responses for a batch of ids `1..=expected`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResponseBatch {
    pub expected: usize,
    pub values: BTreeMap<u64, f64>,
    pub failed: Vec<(u64, String)>,
    pub missing: Vec<u64>,
}

impl ResponseBatch {
    pub fn is_complete(&self) -> bool {
        self.failed.is_empty() && self.missing.is_empty()
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if !self.failed.is_empty() {
            let ids: Vec<String> = self.failed.iter().map(|(id, m)| format!("{id} ({m})")).collect();
            w.push(format!("failed ids dropped: {}", ids.join(", ")));
        }
        if !self.missing.is_empty() {
            let ids: Vec<String> = self.missing.iter().map(u64::to_string).collect();
            w.push(format!("missing ids: {}", ids.join(", ")));
        }
        w
    }

    /// Records for the ok responses, paired with the 0-based request index.
    pub fn records(&self, subsets: &[Subset], oracle_id: &str) -> CliResult<Vec<(usize, PerformanceRecord)>> {
        if subsets.len() != self.expected {
            return Err(protocol(format!("batch expects {} requests, given {}", self.expected, subsets.len())));
        }
        self.values
            .iter()
            .map(|(id, v)| {
                let idx = *id as usize - 1;
                PerformanceRecord::new(subsets[idx].clone(), *v, oracle_id)
                    .map(|r| (idx, r))
                    .map_err(|e| protocol(e.to_string()))
            })
            .collect()
    }
}

pub fn parse_responses(text: &str, expected: usize) -> CliResult<ResponseBatch> {
    let mut batch = ResponseBatch { expected, ..Default::default() };
    let mut seen = BTreeSet::new();
    let mut done = false;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim_end() == DONE_MARKER {
            done = true;
            break;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(protocol(format!("response line {lineno}: expected 4 tab-separated fields, found {}", fields.len())));
        }
        let id = parse_u64(fields[0], "id").map_err(|e| protocol(format!("response line {lineno}: {e}")))?;
        if id == 0 || id as usize > expected {
            return Err(protocol(format!("response line {lineno}: unknown id {id} (batch has {expected})")));
        }
        if !seen.insert(id) {
            return Err(protocol(format!("duplicate response id {id}")));
        }
        match fields[2] {
            "ok" => {
                let v = fields[1].trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    protocol(format!("response line {lineno}: ok status needs a finite value, found {:?}", fields[1]))
                })?;
                batch.values.insert(id, v);
            }
            "failed" => batch.failed.push((id, fields[3].to_string())),
            other => return Err(protocol(format!("response line {lineno}: unknown status {other:?}"))),
        }
    }
    if !done {
        return Err(protocol(format!("incomplete batch: no {DONE_MARKER} line")));
    }
    batch.missing = (1..=expected as u64).filter(|id| !seen.contains(id)).collect();
    Ok(batch)
}

pub fn read_responses(path: &Path, expected: usize) -> CliResult<ResponseBatch> {
    let batch = parse_responses(&read_file(path)?, expected)?;
    for w in batch.warnings() {
        log::warn!("{}: {w}", path.display());
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_batch_is_an_empty_file() {
        assert_eq!(requests_to_string(&[]), "");
        assert_eq!(responses_to_string(&[]), "#done\n");
        assert_eq!(parse_responses("#done\n", 0).unwrap().values.len(), 0);
    }

    #[test]
    fn failed_and_missing_are_reported() {
        let text = "2\t1.5\tok\t\n1\tnan\tfailed\tout of memory\n#done\n";
        let b = parse_responses(text, 3).unwrap();
        assert_eq!(b.values.get(&2), Some(&1.5));
        assert_eq!(b.failed, vec![(1, "out of memory".to_string())]);
        assert_eq!(b.missing, vec![3]);
        assert_eq!(b.warnings().len(), 2);
    }

    #[test]
    fn protocol_violations() {
        let dup = parse_responses("1\t1\tok\t\n1\t2\tok\t\n#done\n", 2).unwrap_err();
        assert!(dup.to_string().contains("duplicate response id 1"), "{dup}");
        let unknown = parse_responses("5\t1\tok\t\n#done\n", 2).unwrap_err();
        assert!(unknown.to_string().contains("unknown id 5"));
        let malformed = parse_responses("1\t1\tok\t\n2\tx\n#done\n", 2).unwrap_err();
        assert!(malformed.to_string().contains("line 2"), "{malformed}");
        let bad_value = parse_responses("1\tinf\tok\t\n#done\n", 1).unwrap_err();
        assert!(bad_value.to_string().contains("finite"));
        let incomplete = parse_responses("1\t1\tok\t\n", 1).unwrap_err();
        assert!(incomplete.to_string().contains("#done"));
        assert_eq!(incomplete.exit_code(), 4);
    }

    #[test]
    fn lines_after_done_are_ignored() {
        let b = parse_responses("1\t2.5\tok\t\n#done\n2\tgarbage\n", 2).unwrap();
        assert_eq!(b.missing, vec![2]);
    }
}
