//! CSV and JSON writers. Floats use Rust's shortest round-trip `Display`
//! form, so identical reports produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{AggregateReport, TrialTrace};
use crate::error::{Error, Result};
use crate::resampling::MethodTag;

const AGGREGATE_HEADER: &str = "method,step,mean_error,std_error,mean_n,std_n,failed_trials";
const TRACE_HEADER: &str =
    "step,truth_x1,truth_x2,truth_x3,truth_x4,est_x1,est_x2,est_x3,est_x4,error,n_used";

pub fn write_aggregate_csv(report: &AggregateReport) -> String {
    let mut out = String::new();
    out.push_str(AGGREGATE_HEADER);
    out.push('\n');
    for m in &report.methods {
        for step in 1..=report.config.scenario.num_steps {
            match m.steps.get(step - 1) {
                Some(s) => writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    m.method,
                    step,
                    s.mean_error,
                    s.std_error,
                    s.mean_n,
                    s.std_n,
                    m.failed()
                ),
                None => writeln!(out, "{},{},,,,,{}", m.method, step, m.failed()),
            }
            .expect("writing to a String cannot fail");
        }
    }
    out
}

pub fn write_trace_csv(trace: &TrialTrace) -> String {
    let mut out = String::new();
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let [t1, t2, t3, t4] = r.truth;
        let [e1, e2, e3, e4] = r.estimate;
        writeln!(
            out,
            "{},{t1},{t2},{t3},{t4},{e1},{e2},{e3},{e4},{},{}",
            r.step, r.error, r.n_used
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn trace_file_name(method: MethodTag, trial_index: usize) -> String {
    format!("trial_{method}_{trial_index}.csv")
}

fn write_file(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes `aggregate.csv`, one `trial_<method>_<index>.csv` per trace and
/// `config.json` into `out_dir`, creating it if needed. Returns the paths
/// written.
pub fn emit_outputs(
    report: &AggregateReport,
    traces: &[TrialTrace],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut written = vec![write_file(
        out_dir.join("aggregate.csv"),
        &write_aggregate_csv(report),
    )?];
    for trace in traces {
        written.push(write_file(
            out_dir.join(trace_file_name(trace.method, trace.trial_index)),
            &write_trace_csv(trace),
        )?);
    }
    written.push(write_file(
        out_dir.join("config.json"),
        &report.config.to_json(),
    )?);
    Ok(written)
}
