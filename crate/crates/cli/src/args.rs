use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "poscert", version, about = "Positivity-based stability certificates for neural-network feedback loops")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Local sector bound of a network over an input box.
    Sector(SectorArgs),
    /// Certify a closed loop; exit code 0 certified, 1 not certified.
    Certify(CertifyArgs),
    /// Monte Carlo simulation of the closed loop.
    Simulate(SimulateArgs),
    /// Runtime comparison against an external IQC verifier.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConfigArg {
    C1,
    C2,
    C3,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlantArg {
    Sampled,
    Lower,
    Upper,
}

#[derive(Debug, Args)]
pub struct SectorArgs {
    #[arg(long)]
    pub nn: PathBuf,
    /// Input box as `lo1,hi1[,lo2,hi2,...]`.
    #[arg(long = "box", value_parser = parse_box)]
    pub input_box: BoxSpec,
    /// Output directory; the report goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Points in the sample CSV.
    #[arg(long, default_value_t = 201)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long, required_unless_present = "sector")]
    pub nn: Option<PathBuf>,
    #[arg(long = "box", value_parser = parse_box)]
    pub input_box: BoxSpec,
    /// Scalar sector `g1,g2` used instead of one computed from `--nn`.
    #[arg(long, value_parser = parse_pair, conflicts_with = "nn", allow_hyphen_values = true)]
    pub sector: Option<(f64, f64)>,
    #[arg(long, value_enum, default_value_t = ConfigArg::Auto)]
    pub config: ConfigArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long)]
    pub nn: PathBuf,
    /// Output box for initial histories (`C x0` inside it).
    #[arg(long = "box", value_parser = parse_box)]
    pub input_box: Option<BoxSpec>,
    /// Draw every history component uniformly from `lo,hi` instead.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub history_range: Option<(f64, f64)>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub plants: usize,
    #[arg(long, value_enum, default_value_t = PlantArg::Sampled)]
    pub plant: PlantArg,
    #[arg(long, default_value_t = 100)]
    pub histories: usize,
    /// Delays simulated for every plant, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "tau_range")]
    pub taus: Option<Vec<f64>>,
    /// One delay per plant drawn from `lo,hi`.
    #[arg(long, value_parser = parse_pair)]
    pub tau_range: Option<(f64, f64)>,
    #[arg(long, default_value_t = 60.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, default_value_t = 101)]
    pub trace_points: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long)]
    pub nn: PathBuf,
    #[arg(long = "box", value_parser = parse_box)]
    pub input_box: BoxSpec,
    /// `(h, tau)` rows as `h:tau,h:tau`.
    #[arg(long, value_parser = parse_rows, default_value = "0.1:0.7,0.01:0.07")]
    pub rows: Rows,
    /// Command that runs the IQC verifier; may include leading arguments.
    #[arg(long)]
    pub iqc_cmd: Option<String>,
    #[arg(long, value_enum, default_value_t = ConfigArg::Auto)]
    pub config: ConfigArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxSpec {
    pub text: String,
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rows(pub Vec<(f64, f64)>);

fn parse_numbers(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect()
}

pub fn parse_box(s: &str) -> Result<BoxSpec, String> {
    let v = parse_numbers(s)?;
    if v.is_empty() || v.len() % 2 != 0 {
        return Err("expected pairs lo,hi[,lo,hi...]".into());
    }
    Ok(BoxSpec {
        text: s.to_string(),
        bounds: v.chunks(2).map(|c| (c[0], c[1])).collect(),
    })
}

pub fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    match parse_numbers(s)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err("expected two comma separated numbers".into()),
    }
}

pub fn parse_rows(s: &str) -> Result<Rows, String> {
    s.split(',')
        .map(|row| {
            let (h, tau) = row.split_once(':').ok_or_else(|| format!("row `{row}` is not h:tau"))?;
            let h: f64 = h.trim().parse().map_err(|e| format!("`{h}`: {e}"))?;
            let tau: f64 = tau.trim().parse().map_err(|e| format!("`{tau}`: {e}"))?;
            Ok((h, tau))
        })
        .collect::<Result<Vec<_>, String>>()
        .map(Rows)
}
