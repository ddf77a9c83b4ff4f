use anyhow::{bail, Context, Result};
use log::info;
use poscert::certificate::{self, Certificate, Configuration};
use poscert::lure::DelayedLureSystem;
use poscert::matrix::{serialize_rows, serialize_vector, Matrix, Vector};
use poscert::monte_carlo::{self, DelayPlan, HistorySampler, MonteCarloConfig, PlantChoice};
use poscert::sector::{self, InputBox, SectorBound};
use poscert::sim;
use serde::Serialize;

use crate::args::{CertifyArgs, ConfigArg, PlantArg, SectorArgs, SimulateArgs};
use crate::io;

#[derive(Serialize)]
struct BoxReport {
    #[serde(serialize_with = "serialize_vector")]
    lower: Vector,
    #[serde(serialize_with = "serialize_vector")]
    upper: Vector,
}

impl From<&InputBox> for BoxReport {
    fn from(b: &InputBox) -> Self {
        Self {
            lower: b.lower().clone(),
            upper: b.upper().clone(),
        }
    }
}

#[derive(Serialize)]
struct LayerBoxReport {
    #[serde(serialize_with = "serialize_vector")]
    preact_lower: Vector,
    #[serde(serialize_with = "serialize_vector")]
    preact_upper: Vector,
    #[serde(serialize_with = "serialize_vector")]
    postact_lower: Vector,
    #[serde(serialize_with = "serialize_vector")]
    postact_upper: Vector,
}

#[derive(Serialize)]
struct SectorReport {
    #[serde(serialize_with = "serialize_rows")]
    gamma1: Matrix,
    #[serde(serialize_with = "serialize_rows")]
    gamma2: Matrix,
    #[serde(rename = "box")]
    input_box: BoxReport,
    per_layer_boxes: Vec<LayerBoxReport>,
}

pub fn config_choice(c: ConfigArg) -> Option<Configuration> {
    match c {
        ConfigArg::C1 => Some(Configuration::C1),
        ConfigArg::C2 => Some(Configuration::C2),
        ConfigArg::C3 => Some(Configuration::C3),
        ConfigArg::Auto => None,
    }
}

pub fn sector(a: SectorArgs) -> Result<u8> {
    let net = io::load_network(&a.nn)?;
    let input = io::input_box(&a.input_box, net.input_dim())?;
    let analysis = sector::analyze_sector(&net, &input)?;
    let report = SectorReport {
        gamma1: analysis.bound.gamma1.clone(),
        gamma2: analysis.bound.gamma2.clone(),
        input_box: (&input).into(),
        per_layer_boxes: analysis
            .boxes
            .layers
            .iter()
            .map(|l| LayerBoxReport {
                preact_lower: l.preact_lower.clone(),
                preact_upper: l.preact_upper.clone(),
                postact_lower: l.postact_lower.clone(),
                postact_upper: l.postact_upper.clone(),
            })
            .collect(),
    };
    io::emit_json(&report, a.out.as_deref(), "sector.json")?;
    if let Some(dir) = &a.out {
        write_sector_samples(&dir.join("sector_samples.csv"), &net, &analysis.bound, a.samples)?;
    }
    eprintln!(
        "sector: gamma1 = {:?}, gamma2 = {:?}",
        analysis.bound.gamma1.as_slice(),
        analysis.bound.gamma2.as_slice()
    );
    Ok(0)
}

/// Samples along the box diagonal from the lower to the upper corner.
fn write_sector_samples(
    path: &std::path::Path,
    net: &poscert::ffnn::Ffnn,
    bound: &SectorBound,
    samples: usize,
) -> Result<()> {
    let (p, m) = (net.input_dim(), net.output_dim());
    let mut w = io::csv_writer(path)?;
    let header: Vec<String> = (1..=p)
        .map(|i| format!("y{i}"))
        .chain((1..=m).map(|i| format!("phi{i}")))
        .chain((1..=m).map(|i| format!("gamma1_y{i}")))
        .chain((1..=m).map(|i| format!("gamma2_y{i}")))
        .collect();
    w.write_record(&header)?;
    let (lo, hi) = (bound.input.lower(), bound.input.upper());
    let n = samples.max(2);
    for k in 0..n {
        let s = k as f64 / (n - 1) as f64;
        let y = lo + (hi - lo) * s;
        let phi = net.forward(&y)?;
        let g1 = &bound.gamma1 * &y;
        let g2 = &bound.gamma2 * &y;
        let row: Vec<String> = y
            .iter()
            .chain(phi.iter())
            .chain(g1.iter())
            .chain(g2.iter())
            .map(|v| (v + 0.0).to_string())
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn certify_system(sys: &DelayedLureSystem, sector: &SectorBound, config: ConfigArg) -> Result<Certificate> {
    Ok(certificate::certify(sys, sector, config_choice(config))?)
}

pub fn certify(a: CertifyArgs) -> Result<u8> {
    let sys = io::load_system(&a.system)?;
    let sector = match (&a.nn, a.sector) {
        (_, Some((g1, g2))) => {
            let input = io::input_box(&a.input_box, 1)?;
            SectorBound::scalar(g1, g2, input)
        }
        (Some(nn), None) => {
            let net = io::load_network(nn)?;
            let input = io::input_box(&a.input_box, net.input_dim())?;
            sector::network_sector(&net, &input)?
        }
        (None, None) => bail!("either --nn or --sector is required"),
    };
    let cert = certify_system(&sys, &sector, a.config)?;
    io::emit_json(&cert, a.out.as_deref(), "certificate.json")?;
    eprintln!(
        "{:?}: {} in {:.3e} s",
        cert.configuration,
        if cert.is_certified() { "certified" } else { "not certified" },
        cert.wall_time_seconds
    );
    for f in &cert.failure_reasons {
        eprintln!("  {:?}: {}", f.condition, f.detail);
    }
    Ok(if cert.is_certified() { 0 } else { 1 })
}

fn monte_carlo_config(a: &SimulateArgs, sys: &DelayedLureSystem) -> Result<MonteCarloConfig> {
    let sampler = match (&a.input_box, a.history_range) {
        (_, Some((lo, hi))) => {
            if !(lo <= hi && lo >= 0.0) {
                bail!("--history-range must satisfy 0 <= lo <= hi");
            }
            HistorySampler::Uniform { lo, hi }
        }
        (Some(spec), None) => {
            let b = io::input_box(spec, sys.output_dim())?;
            HistorySampler::OutputBox {
                lo: b.lower().clone(),
                hi: b.upper().clone(),
            }
        }
        (None, None) => bail!("either --box or --history-range is required"),
    };
    let mut cfg = MonteCarloConfig::new(sampler, a.horizon, a.seed);
    cfg.n_plants = a.plants;
    cfg.n_histories = a.histories;
    cfg.step = a.step;
    cfg.trace_points = a.trace_points;
    cfg.plants = match a.plant {
        PlantArg::Sampled => PlantChoice::Sampled,
        PlantArg::Lower => PlantChoice::Lower,
        PlantArg::Upper => PlantChoice::Upper,
    };
    cfg.delays = match (&a.taus, a.tau_range) {
        (Some(taus), _) => DelayPlan::Grid(taus.clone()),
        (None, Some((lo, hi))) => DelayPlan::PerPlant { lo, hi },
        (None, None) => DelayPlan::AsGiven,
    };
    Ok(cfg)
}

pub fn simulate(a: SimulateArgs) -> Result<u8> {
    let sys = io::load_system(&a.system)?;
    let net = io::load_network(&a.nn)?;
    let cfg = monte_carlo_config(&a, &sys)?;
    let report = monte_carlo::monte_carlo(&sys, &net, &cfg)?;
    io::emit_json(&report, a.out.as_deref(), "convergence.json")?;
    if let Some(dir) = &a.out {
        let tiles = monte_carlo::plan_tiles(&sys, &cfg)?;
        for (i, (tile, tr)) in tiles.iter().zip(&report.tiles).enumerate() {
            let Some(h) = tr.median_history else { continue };
            let tile_sys = tile.system(&sys)?;
            let traj = sim::simulate(&tile_sys, &net, &tile.sim_config(h, &cfg))?;
            let path = dir.join(format!("median_tile_{i}.csv"));
            write_trajectory(&path, &traj, sys.state_dim(), sys.output_dim(), net.output_dim())
                .with_context(|| format!("writing {}", path.display()))?;
            info!("wrote {}", path.display());
        }
    }
    for t in &report.tiles {
        let prop = t.proportion.map_or("n/a".to_string(), |p| format!("{p:.2}"));
        match t.tau {
            Some(tau) => eprintln!("plant {} tau {tau}: converged {prop}", t.plant_index),
            None => eprintln!("plant {}: converged {prop}", t.plant_index),
        }
    }
    Ok(0)
}

fn write_trajectory(path: &std::path::Path, traj: &sim::Trajectory, n: usize, p: usize, m: usize) -> Result<()> {
    let mut w = io::csv_writer(path)?;
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=n).map(|i| format!("x{i}")))
        .chain((1..=p).map(|i| format!("y{i}")))
        .chain((1..=m).map(|i| format!("u{i}")))
        .collect();
    w.write_record(&header)?;
    for k in 0..traj.len() {
        let row: Vec<String> = std::iter::once(traj.times[k])
            .chain(traj.states[k].iter().copied())
            .chain(traj.outputs[k].iter().copied())
            .chain(traj.controls[k].iter().copied())
            .map(|v| (v + 0.0).to_string())
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
