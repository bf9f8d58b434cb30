//! Command-line front end: calibration synthesis, model fits, single runs,
//! bounds and Monte-Carlo campaigns driven by a JSON configuration.
//!
//! Any `--key=value` argument not listed below overrides the configuration
//! field at the dotted path `key` (e.g. `--scenario.snr_db=10`,
//! `--estimators=["c-ml","nc-ml"]`).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mmadoa::calibration::synth_antenna;
use mmadoa::error::Error;
use mmadoa::harness::{
    crb_report, fit_report, run_likelihood_map, run_surface, run_sweep, simulate, write_likelihood_map, write_surface,
    write_sweep, Antenna, AntennaSource, FittedModel, MapKind, SweepConfig,
};
use mmadoa::response::save_model;

#[derive(Parser, Debug)]
#[command(name = "mmadoa", version, about = "DoA estimation with multi-port antennas")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration; defaults to the selected preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in configuration used when no file is given.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    /// Output path (overrides `output` for campaigns).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    /// Reference settings, 1000 trials per point.
    Reference,
    /// Same with 100 trials per point.
    Desk,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic calibration set of `antenna.synth`.
    Synth,
    /// Fit every configured model, report residuals and optionally save them.
    Fit,
    /// Run all estimators on one realization of the scenario.
    Simulate,
    /// Print Cramér-Rao bounds at the scenario truth.
    Crb,
    /// RMSE and bounds along the sweep axis.
    Sweep,
    /// RMSE and bounds on a (theta, phi) grid.
    Surface,
    /// Normalized likelihood maps of one realization.
    Likemap,
}

const CONFIG_FLAGS: [&str; 3] = ["config", "preset", "out"];

/// Separates configuration overrides from ordinary arguments.
fn split_args(args: Vec<String>) -> (Vec<String>, Vec<String>) {
    let mut cli = Vec::new();
    let mut overrides = Vec::new();
    for (i, a) in args.into_iter().enumerate() {
        let key = a
            .strip_prefix("--")
            .and_then(|r| r.split_once('='))
            .map(|(k, _)| k.to_string());
        match key {
            Some(k) if i > 0 && !CONFIG_FLAGS.contains(&k.as_str()) => overrides.push(a),
            _ => cli.push(a),
        }
    }
    (cli, overrides)
}

/// Exit status of an error: 2 for configuration problems, 3 for data.
/// Failures to read the configuration itself are mapped to 2 at load time,
/// so parse errors reaching here concern data files.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidBasis(_) | Error::InvalidScenario(_) => 2,
        _ => 3,
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn load_config(cli: &Cli, overrides: &[String]) -> Result<SweepConfig, Failure> {
    let base = match &cli.config {
        Some(path) => SweepConfig::load(path).map_err(|e| config_error(e.to_string()))?,
        None => match cli.preset {
            Preset::Reference => SweepConfig::planar_default(),
            Preset::Desk => SweepConfig::desk(),
        },
    };
    let mut cfg = base
        .with_overrides(overrides)
        .map_err(|e| config_error(e.to_string()))?;
    if let Some(out) = &cli.out {
        cfg.output = Some(out.clone());
    }
    cfg.validate().map_err(|e| config_error(e.to_string()))?;
    Ok(cfg)
}

fn output_path(cfg: &SweepConfig) -> Result<&Path, Failure> {
    cfg.output
        .as_deref()
        .ok_or_else(|| config_error("no output path: set `output` or pass --out"))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    // a closed pipe downstream is not an error of ours
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "-".into()
    }
}

fn run(cli: &Cli, overrides: &[String]) -> Result<(), Failure> {
    let cfg = load_config(cli, overrides)?;
    match cli.command {
        Command::Synth => {
            let AntennaSource::Synth(params) = &cfg.antenna else {
                return Err(config_error("synth needs a synthetic antenna source"));
            };
            let out = cli.out.as_deref().ok_or_else(|| config_error("synth needs --out"))?;
            let (cal, _) = synth_antenna(params).map_err(|e| config_error(e.to_string()))?;
            cal.save(out)?;
            eprintln!(
                "wrote {} ports x {} directions to {}",
                cal.num_ports(),
                cal.num_samples(),
                out.display()
            );
        }
        Command::Fit => {
            let antenna = Antenna::load(&cfg.antenna)?;
            let mut reports = Vec::new();
            for spec in &cfg.models {
                let model = FittedModel::fit(spec, &antenna.calibration)?;
                reports.extend(fit_report(&model, &antenna.calibration)?);
                if let Some(out) = &cli.out {
                    let path = if cfg.models.len() == 1 {
                        out.clone()
                    } else {
                        std::fs::create_dir_all(out).map_err(Error::from)?;
                        out.join(format!("{}.json", model.name))
                    };
                    save_model(&model.polarimetric, &path)?;
                    eprintln!("saved {} to {}", model.name, path.display());
                }
            }
            print_json(&reports)?;
        }
        Command::Simulate => print_json(&simulate(&cfg)?)?,
        Command::Crb => {
            let (truth, bounds) = crb_report(&cfg)?;
            for (i, t) in truth.iter().enumerate() {
                println!(
                    "signal {}: theta {:.3} deg, phi {:.3} deg",
                    i + 1,
                    t.theta_deg,
                    t.phi_deg
                );
            }
            println!("{:<8} {:<12} {:>14}", "estim.", "parameter", "crb_std_deg");
            for b in &bounds {
                println!("{:<8} {:<12} {:>14}", b.estimator, b.parameter, fmt(b.crb_std_deg));
            }
        }
        Command::Sweep => {
            let out = output_path(&cfg)?.to_path_buf();
            let records = run_sweep(&cfg)?;
            write_sweep(&out, &records, &cfg)?;
            println!(
                "{:>9} {:<6} {:<8} {:<9} {:>10} {:>10} {:>8} {:>5}",
                "axis", "model", "estim.", "param", "rmse_deg", "crb_deg", "ratio", "amb."
            );
            for r in &records {
                println!(
                    "{:>9.3} {:<6} {:<8} {:<9} {:>10} {:>10} {:>8} {:>5}",
                    r.axis_value,
                    r.model,
                    r.estimator,
                    r.parameter,
                    fmt(r.rmse_deg),
                    fmt(r.crb_std_deg),
                    fmt(r.ratio),
                    r.ambiguities
                );
            }
            eprintln!("wrote {} records to {}", records.len(), out.display());
        }
        Command::Surface => {
            let out = output_path(&cfg)?.to_path_buf();
            let records = run_surface(&cfg)?;
            write_surface(&out, &records, &cfg)?;
            eprintln!("wrote {} records to {}", records.len(), out.display());
        }
        Command::Likemap => {
            let out = output_path(&cfg)?.to_path_buf();
            let map = run_likelihood_map(&cfg)?;
            write_likelihood_map(&out, &map, &cfg)?;
            for kind in [MapKind::NonCoherent, MapKind::Coherent] {
                let peak = map.argmax(kind);
                println!(
                    "{:<3} peak theta {:.2} deg phi {:.2} deg, regions above -0.1: {}",
                    kind.id(),
                    peak.theta.to_degrees(),
                    peak.phi.to_degrees(),
                    map.regions_above(kind, -0.1)
                );
            }
            eprintln!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let (args, overrides) = split_args(std::env::args().collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
