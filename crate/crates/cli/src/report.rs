//! Plot-ready tables aggregated over run records.

use std::fmt::Write as _;

use tasksel_core::metrics::f1_minority;
use tasksel_core::selection::classify_transfer;

use crate::config::config_diff;
use crate::error::{AtPhase, CliError, CliResult, Phase};
use crate::format::fmt_f64;
use crate::pipeline::RunRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Convergence,
    Separation,
    TransferF1,
}

impl ReportKind {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "convergence" => Ok(ReportKind::Convergence),
            "separation" => Ok(ReportKind::Separation),
            "transfer_f1" => Ok(ReportKind::TransferF1),
            other => Err(CliError::Config(format!("unknown report kind {other:?}"))),
        }
    }

    /// Config keys allowed to vary across the records of one table.
    fn free_keys(self) -> &'static [&'static str] {
        match self {
            ReportKind::Convergence | ReportKind::TransferF1 => &["seed", "world_seed", "n"],
            ReportKind::Separation => &["seed", "world_seed"],
        }
    }
}

/// Minority-class F1 of predicted against measured transfer signs on the holdout.
pub fn transfer_f1(record: &RunRecord) -> CliResult<f64> {
    let stl = record.stl_f;
    let mut predicted = Vec::with_capacity(record.holdout.len());
    let mut truth = Vec::with_capacity(record.holdout.len());
    for row in &record.holdout {
        predicted.push(classify_transfer(row.predicted, stl).at(Phase::Report)?);
        truth.push(classify_transfer(row.actual, stl).at(Phase::Report)?);
    }
    f1_minority(&predicted, &truth).at(Phase::Report)
}

pub fn report(records: &[RunRecord], kind: ReportKind) -> CliResult<String> {
    let first = records.first().ok_or_else(|| CliError::Config("report needs at least one record".into()))?;
    let base = first.config.canonical();
    for r in &records[1..] {
        let diff = config_diff(&base, &r.config.canonical(), kind.free_keys());
        if !diff.is_empty() {
            return Err(CliError::Config(format!(
                "incompatible records {} and {}: {}",
                first.run_dir.display(),
                r.run_dir.display(),
                diff.join("; ")
            )));
        }
    }
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.config.n, r.config.seed));
    let mut out = String::new();
    match kind {
        ReportKind::Convergence => {
            out.push_str("n\tholdout_mse\tf_variance\n");
            for r in sorted {
                writeln!(out, "{}\t{}\t{}", r.config.n, fmt_f64(r.diagnostics.holdout_mse), fmt_f64(r.holdout_f_variance())).unwrap();
            }
        }
        ReportKind::Separation => {
            out.push_str("seed\tmargin\tseparated\n");
            for r in sorted {
                let sep = r.separation.as_ref().ok_or_else(|| {
                    CliError::Config(format!("{} has no separation data (external mode)", r.run_dir.display()))
                })?;
                writeln!(out, "{}\t{}\t{}", r.config.seed, fmt_f64(sep.margin), sep.separated).unwrap();
            }
        }
        ReportKind::TransferF1 => {
            out.push_str("n\tf1\n");
            for r in sorted {
                writeln!(out, "{}\t{}", r.config.n, fmt_f64(transfer_f1(r)?)).unwrap();
            }
        }
    }
    Ok(out)
}
