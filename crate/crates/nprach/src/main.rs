//! Command-line front end: preamble generation, hopping-pattern export,
//! threshold calibration, and Monte Carlo campaigns.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use nprach::harness::{export, Campaign, Scenario};
use nprach::hopping::full_pattern;
use nprach::numerology::NprachConfig;
use nprach::waveform::{default_sequence, generate, papr_db};
use nprach::{Error, Result};

#[derive(Parser)]
#[command(name = "nprach", version, about = "NB-IoT NPRACH link-level simulator")]
struct Cli {
    /// Worker threads for Monte Carlo runs (default: all cores).
    /// Results are identical for any thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize one preamble and dump it as interleaved f32 I/Q.
    Generate(GenerateArgs),
    /// Print the frequency-hopping pattern for one preamble.
    Pattern(PatternArgs),
    /// Calibrate the detection threshold for a scenario's receiver at a
    /// target false-alarm rate.
    Calibrate(CalibrateArgs),
    /// Run a Monte Carlo campaign and export summary.txt / trials.csv.
    Campaign(CampaignArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Numerology TOML file, or the literal "defaults".
    #[arg(long, default_value = "defaults")]
    config: String,
    /// Start subcarrier within the band.
    #[arg(long, default_value_t = 0)]
    n0: usize,
    /// Output I/Q path (a .hdr sidecar is written next to it).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PatternArgs {
    /// Numerology TOML file, or the literal "defaults".
    #[arg(long, default_value = "defaults")]
    config: String,
    /// Start subcarrier within the band.
    #[arg(long, default_value_t = 0)]
    n0: usize,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Scenario TOML file, or the literal "defaults".
    #[arg(long, default_value = "defaults")]
    scenario: String,
    /// Target false-alarm probability.
    #[arg(long, default_value_t = 1e-3)]
    target_fa: f64,
    /// Number of noise-only calibration trials.
    #[arg(long, default_value_t = 20_000)]
    calib_trials: usize,
    /// Calibration seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct CampaignArgs {
    /// Scenario TOML file, or the literal "defaults".
    #[arg(long, default_value = "defaults")]
    scenario: String,
    /// Output directory for summary.txt and trials.csv.
    #[arg(long)]
    out: PathBuf,
    /// Detection threshold on the normalized metric. When omitted, a
    /// threshold is calibrated first.
    #[arg(long)]
    threshold: Option<f64>,
    /// Target false-alarm probability for auto-calibration.
    #[arg(long, default_value_t = 1e-3)]
    target_fa: f64,
    /// Noise-only trials for auto-calibration.
    #[arg(long, default_value_t = 20_000)]
    calib_trials: usize,
    /// Override the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario's trial count.
    #[arg(long)]
    trials: Option<usize>,
}

fn load_config(arg: &str) -> Result<NprachConfig> {
    if arg == "defaults" {
        Ok(NprachConfig::default())
    } else {
        NprachConfig::from_file(Path::new(arg))
    }
}

fn load_scenario(arg: &str) -> Result<Scenario> {
    if arg == "defaults" {
        Ok(Scenario::default())
    } else {
        Scenario::from_file(Path::new(arg))
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Generate(a) => {
            let cfg = load_config(&a.config)?;
            let pattern = full_pattern(&cfg, a.n0)?;
            let seq = default_sequence(cfg.preamble_groups);
            let buf = generate(&cfg, &pattern, &seq)?;
            let echo = format!(
                "preamble_groups = {}\nstart_subcarrier = {}\ncell_id = {}\n",
                cfg.preamble_groups, a.n0, cfg.cell_id
            );
            nprach::iq::dump(&buf, &a.out, &echo)?;
            println!(
                "wrote {} samples at {} Hz to {} (PAPR {:.2} dB)",
                buf.samples.len(),
                buf.sample_rate_hz,
                a.out.display(),
                papr_db(&buf)?
            );
            Ok(())
        }
        Command::Pattern(a) => {
            let cfg = load_config(&a.config)?;
            let pattern = full_pattern(&cfg, a.n0)?;
            print!("{}", pattern.export_text());
            Ok(())
        }
        Command::Calibrate(a) => {
            let scn = load_scenario(&a.scenario)?;
            let threshold = Campaign::calibrate(&scn, a.target_fa, a.calib_trials, a.seed)?;
            println!("threshold = {threshold}");
            Ok(())
        }
        Command::Campaign(a) => {
            let mut scn = load_scenario(&a.scenario)?;
            if let Some(seed) = a.seed {
                scn.master_seed = seed;
            }
            if let Some(trials) = a.trials {
                scn.n_trials = trials;
            }
            let threshold = match a.threshold {
                Some(t) => t,
                None => {
                    eprintln!(
                        "calibrating threshold ({} noise trials, target FA {})...",
                        a.calib_trials, a.target_fa
                    );
                    Campaign::calibrate(&scn, a.target_fa, a.calib_trials, scn.master_seed)?
                }
            };
            let campaign = Campaign::new(scn.clone(), threshold)?;
            let stats = campaign.run();
            export(&stats, &scn, threshold, &a.out)?;
            println!(
                "{} trials in {:.1} s: {} detections, {} misdetections, {} false alarms",
                stats.trials,
                stats.wall_time_s,
                stats.detections,
                stats.misdetections,
                stats.false_alarms
            );
            if let Some(p) = stats.toa_percentiles_us {
                println!(
                    "ToA error percentiles (us): p1 {:.3}, p5 {:.3}, p50 {:.3}, p95 {:.3}, p99 {:.3}",
                    p[0], p[1], p[2], p[3], p[4]
                );
            }
            println!("results written to {}", a.out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (Error::Validation(_) | Error::Parse(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
