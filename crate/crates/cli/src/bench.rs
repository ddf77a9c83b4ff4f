use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use anyhow::{Context, Result};
use log::{info, warn};
use poscert::sector;
use serde::{Deserialize, Serialize};

use crate::args::{BenchArgs, BoxSpec};
use crate::commands::certify_system;
use crate::io;

/// Result file written by the IQC verifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqcResult {
    pub status: String,
    pub wall_time_seconds: f64,
    pub dims: IqcDims,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqcDims {
    pub states: usize,
    pub ports: usize,
    pub sdp_vars: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub h: f64,
    pub tau: f64,
    pub iqc_status: String,
    pub iqc_seconds: Option<f64>,
    pub iqc_dims: Option<IqcDims>,
    pub positivity_status: String,
    pub positivity_seconds: f64,
    /// IQC time over positivity time.
    pub runtime_ratio: Option<f64>,
}

#[derive(Debug, Serialize)]
struct BenchReport {
    iqc_command: Option<String>,
    rows: Vec<BenchRow>,
}

enum IqcOutcome {
    Unavailable,
    Error,
    Done(IqcResult),
}

struct IqcRunner<'a> {
    program: &'a str,
    leading: Vec<&'a str>,
    system: &'a Path,
    nn: &'a Path,
    input_box: &'a BoxSpec,
    scratch: PathBuf,
}

impl IqcRunner<'_> {
    fn run(&self, row: usize, h: f64, tau: f64) -> IqcOutcome {
        let out = self.scratch.join(format!("iqc_row_{row}.json"));
        let _ = std::fs::remove_file(&out);
        let started = Instant::now();
        let status = Command::new(self.program)
            .args(&self.leading)
            .arg("--system")
            .arg(self.system)
            .arg("--nn")
            .arg(self.nn)
            .arg("--box")
            .arg(&self.input_box.text)
            .arg("--step")
            .arg(h.to_string())
            .arg("--tau")
            .arg(tau.to_string())
            .arg("--out")
            .arg(&out)
            .status();
        let status = match status {
            Ok(s) => s,
            Err(e) if e.kind() == ErrorKind::NotFound => {
                warn!("IQC command `{}` not found", self.program);
                return IqcOutcome::Unavailable;
            }
            Err(e) => {
                warn!("IQC command failed to start: {e}");
                return IqcOutcome::Error;
            }
        };
        info!("IQC row {row} finished in {:.3} s", started.elapsed().as_secs_f64());
        if !status.success() {
            warn!("IQC command exited with {status}");
            return IqcOutcome::Error;
        }
        match std::fs::read_to_string(&out)
            .map_err(anyhow::Error::from)
            .and_then(|t| serde_json::from_str::<IqcResult>(&t).map_err(anyhow::Error::from))
        {
            Ok(r) => IqcOutcome::Done(r),
            Err(e) => {
                warn!("unreadable IQC result {}: {e}", out.display());
                IqcOutcome::Error
            }
        }
    }
}

pub fn run(a: BenchArgs) -> Result<u8> {
    let sys = io::load_system(&a.system)?;
    let net = io::load_network(&a.nn)?;
    let input = io::input_box(&a.input_box, net.input_dim())?;
    let sector = sector::network_sector(&net, &input)?;

    let scratch = match &a.out {
        Some(dir) => dir.clone(),
        None => std::env::temp_dir().join(format!("poscert-bench-{}", std::process::id())),
    };
    io::create_out_dir(&scratch)?;
    let words: Vec<&str> = a.iqc_cmd.as_deref().map(|c| c.split_whitespace().collect()).unwrap_or_default();
    let runner = words.split_first().map(|(program, rest)| IqcRunner {
        program,
        leading: rest.to_vec(),
        system: &a.system,
        nn: &a.nn,
        input_box: &a.input_box,
        scratch: scratch.clone(),
    });

    let mut rows = Vec::new();
    for (i, &(h, tau)) in a.rows.0.iter().enumerate() {
        let delayed = sys.with_delay(tau).with_context(|| format!("row {i}: delay {tau}"))?;
        let cert = certify_system(&delayed, &sector, a.config)?;
        let outcome = runner.as_ref().map_or(IqcOutcome::Unavailable, |r| r.run(i, h, tau));
        let (iqc_status, iqc_seconds, iqc_dims) = match outcome {
            IqcOutcome::Unavailable => ("unavailable".to_string(), None, None),
            IqcOutcome::Error => ("error".to_string(), None, None),
            IqcOutcome::Done(r) => (r.status, Some(r.wall_time_seconds), Some(r.dims)),
        };
        let positivity_seconds = cert.wall_time_seconds;
        rows.push(BenchRow {
            h,
            tau,
            iqc_status,
            iqc_seconds,
            iqc_dims,
            positivity_status: if cert.is_certified() { "certified" } else { "not_certified" }.to_string(),
            positivity_seconds,
            runtime_ratio: iqc_seconds.filter(|_| positivity_seconds > 0.0).map(|s| s / positivity_seconds),
        });
    }
    if a.out.is_none() {
        let _ = std::fs::remove_dir_all(&scratch);
    }

    let report = BenchReport {
        iqc_command: a.iqc_cmd.clone(),
        rows,
    };
    io::emit_json(&report, a.out.as_deref(), "bench.json")?;
    if let Some(dir) = &a.out {
        write_csv(&dir.join("bench.csv"), &report.rows)?;
    }
    for r in &report.rows {
        eprintln!(
            "h={} tau={}: iqc {} ({}), positivity {} ({:.3e} s)",
            r.h,
            r.tau,
            r.iqc_status,
            r.iqc_seconds.map_or("-".to_string(), |s| format!("{s:.3e} s")),
            r.positivity_status,
            r.positivity_seconds
        );
    }
    Ok(0)
}

fn write_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let mut w = io::csv_writer(path)?;
    w.write_record([
        "h",
        "tau",
        "iqc_status",
        "iqc_seconds",
        "positivity_status",
        "positivity_seconds",
        "runtime_ratio",
    ])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in rows {
        w.write_record([
            r.h.to_string(),
            r.tau.to_string(),
            r.iqc_status.clone(),
            opt(r.iqc_seconds),
            r.positivity_status.clone(),
            r.positivity_seconds.to_string(),
            opt(r.runtime_ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}
