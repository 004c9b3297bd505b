//! Command-line front end: `theory`, `simulate`, `reconstruct`, `analyze`
//! and `pipeline`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{overlay_points, q_grid, FidelityReport};
use crate::config::{parse_override, RunConfig};
use crate::error::{Error, Result};
use crate::io::{self, Provenance};
use crate::probes::{build_probe_matrix, choose_truncation, ProbeLadder};
use crate::reconstruction::{predicted_response, reconstruct};
use crate::simulator::{run_experiment, throughput_report, GatingPolicy};

pub const THEORY_FILE: &str = "povm_theory.csv";
pub const STATS_CSV: &str = "stats.csv";
pub const STATS_JSON: &str = "stats.json";
pub const POVM_FILE: &str = "povm_reconstructed.csv";
pub const RECONSTRUCTION_FILE: &str = "reconstruction.json";
pub const FIDELITY_FILE: &str = "fidelity.json";
pub const QGRID_FILE: &str = "qgrid.csv";
pub const OVERLAY_FILE: &str = "q_overlay.csv";

#[derive(Debug, Parser)]
#[command(
    name = "pnr-tomo",
    version,
    about = "Beam-splitter-tree PNR detector tomography"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file; every field has a default.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override any configuration field, e.g. `--set simulation.dead_time=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Probe ladder, `geometric:J,min,max` or `list:x1,x2,...`.
    #[arg(long, global = true, value_name = "SPEC")]
    pub probes: Option<String>,
    #[arg(long, global = true, value_name = "W")]
    pub smoothing: Option<f64>,
    #[arg(long = "truncation-eps", global = true, value_name = "E")]
    pub truncation_eps: Option<f64>,
    #[arg(long, global = true, value_parser = ["smart", "naive", "ideal"])]
    pub gating: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the analytic POVM.
    Theory {
        /// Largest photon number `M` (defaults to output.theory_truncation).
        #[arg(long)]
        truncation: Option<usize>,
    },
    /// Simulate the probe ladder and write outcome counts.
    Simulate,
    /// Reconstruct the POVM from outcome counts.
    Reconstruct {
        /// Statistics file (.csv or .json); defaults to OUT/stats.csv.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Fidelities and Q-function grids for a POVM against outcome counts.
    Analyze {
        /// POVM CSV; defaults to OUT/povm_reconstructed.csv.
        #[arg(long)]
        povm: Option<PathBuf>,
        /// Statistics file; defaults to OUT/stats.csv.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// theory, simulate, reconstruct and analyze in sequence.
    Pipeline,
}

impl GlobalArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let overrides = self
            .overrides
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>>>()?;
        let mut config = RunConfig::load(self.config.as_deref(), &overrides)?;
        if let Some(seed) = self.seed {
            config.simulation.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output.dir = out.clone();
        }
        if let Some(spec) = &self.probes {
            config.probes.ladder = spec.parse::<ProbeLadder>()?;
        }
        if let Some(w) = self.smoothing {
            config.reconstruction.smoothing_weight = w;
        }
        if let Some(eps) = self.truncation_eps {
            config.reconstruction.tail_epsilon = eps;
        }
        if let Some(g) = &self.gating {
            config.simulation.gating = g.parse::<GatingPolicy>()?;
        }
        config.validate()?;
        Ok(config)
    }
}

fn out_path(config: &RunConfig, name: &str) -> PathBuf {
    config.output.dir.join(name)
}

pub fn cmd_theory(config: &RunConfig, truncation: Option<usize>) -> Result<PathBuf> {
    let m = truncation.unwrap_or(config.output.theory_truncation);
    let povm = config.detector.theoretical_povm(m);
    let path = out_path(config, THEORY_FILE);
    io::write_file(&path, &io::povm_to_csv(&povm, &Provenance::new(config)))?;
    eprintln!("theory: M={m}, wrote {}", path.display());
    Ok(path)
}

pub fn cmd_simulate(config: &RunConfig) -> Result<PathBuf> {
    let probes = config.probes.ladder.probes();
    let stats = run_experiment(&config.detector, &probes, &config.simulation)?;
    let prov = Provenance::new(config);
    let csv = out_path(config, STATS_CSV);
    io::write_file(&csv, &io::stats_to_csv(&stats, &prov))?;
    io::write_file(
        &out_path(config, STATS_JSON),
        &io::stats_to_json(&stats, config),
    )?;
    eprintln!(
        "simulate: {} probes x {} gated pulses, {} gating, accepted-gate fraction {:.4}",
        stats.probes(),
        config.simulation.pulses_per_probe,
        config.simulation.gating,
        throughput_report(&stats)
    );
    Ok(csv)
}

pub fn cmd_reconstruct(config: &RunConfig, stats_path: &Path) -> Result<PathBuf> {
    let stats = io::load_stats(stats_path)?;
    let prov = Provenance::new(config);
    let povm_path = out_path(config, POVM_FILE);
    let json_path = out_path(config, RECONSTRUCTION_FILE);
    match reconstruct(&stats, &config.reconstruction) {
        Ok(result) => {
            io::write_file(&povm_path, &io::povm_to_csv(&result.povm, &prov))?;
            io::write_file(
                &json_path,
                &io::reconstruction_to_json(&result, true, &prov),
            )?;
            eprintln!(
                "reconstruct: M={}, smoothing {}, objective {:.6e}, KKT residual {:.2e}, {} iterations",
                result.povm.truncation(),
                result.smoothing_weight,
                result.objective_value,
                result.kkt_residual,
                result.iterations
            );
            Ok(povm_path)
        }
        Err(Error::NotConverged {
            iterations,
            kkt_residual,
            best,
        }) => {
            io::write_file(&povm_path, &io::povm_to_csv(&best.povm, &prov))?;
            io::write_file(&json_path, &io::reconstruction_to_json(&best, false, &prov))?;
            Err(Error::NotConverged {
                iterations,
                kkt_residual,
                best,
            })
        }
        Err(e) => Err(e),
    }
}

pub fn cmd_analyze(
    config: &RunConfig,
    povm_path: &Path,
    stats_path: &Path,
) -> Result<FidelityReport> {
    let povm = io::load_povm(povm_path)?;
    let stats = io::load_stats(stats_path)?;
    let probes = stats.probe_list();
    let needed = choose_truncation(&probes, config.reconstruction.tail_epsilon)?;
    if povm.truncation() < needed {
        return Err(Error::Dimension(format!(
            "POVM truncated at M={} but the brightest probe needs M >= {needed}",
            povm.truncation()
        )));
    }
    let matrix = build_probe_matrix(&probes, povm.truncation())?;
    let predicted = predicted_response(&povm, &matrix)?;
    let measured = stats.frequencies();
    let report = FidelityReport::new(&stats.mean_photons, &measured, &predicted)?;
    let mut grid = q_grid(&povm, &config.analysis)?;
    grid.overlay = overlay_points(&stats.mean_photons, &measured);

    let prov = Provenance::new(config);
    io::write_file(
        &out_path(config, FIDELITY_FILE),
        &io::fidelity_to_json(&report, &prov),
    )?;
    io::write_file(
        &out_path(config, QGRID_FILE),
        &io::qgrid_to_csv(&grid, &prov),
    )?;
    io::write_file(
        &out_path(config, OVERLAY_FILE),
        &io::overlay_to_csv(&grid.overlay, &prov),
    )?;
    eprintln!(
        "analyze: {} probes, min fidelity {:.8}",
        report.probes.len(),
        report.min_fidelity
    );
    Ok(report)
}

pub fn cmd_pipeline(config: &RunConfig) -> Result<FidelityReport> {
    cmd_theory(config, None)?;
    let stats = cmd_simulate(config)?;
    let povm = cmd_reconstruct(config, &stats)?;
    cmd_analyze(config, &povm, &stats)
}

fn execute(cli: &Cli) -> Result<()> {
    let config = cli.global.resolve()?;
    let default_stats = || out_path(&config, STATS_CSV);
    match &cli.command {
        Command::Theory { truncation } => cmd_theory(&config, *truncation).map(drop),
        Command::Simulate => cmd_simulate(&config).map(drop),
        Command::Reconstruct { stats } => {
            cmd_reconstruct(&config, &stats.clone().unwrap_or_else(default_stats)).map(drop)
        }
        Command::Analyze { povm, stats } => cmd_analyze(
            &config,
            &povm.clone().unwrap_or_else(|| out_path(&config, POVM_FILE)),
            &stats.clone().unwrap_or_else(default_stats),
        )
        .map(drop),
        Command::Pipeline => cmd_pipeline(&config).map(drop),
    }
}

/// Runs the tool on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
