//! Command-line front end: per-stage subcommands plus the end-to-end
//! pipeline. Exit codes: 0 success, 1 error, 2 battery failure,
//! 3 refused (no certifiable randomness).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use siqrng::config::PipelineConfig;
use siqrng::optical::{gain_aggregates, solve_routine, Routine};
use siqrng::pipeline::{self, PipelineOutcome};
use siqrng::{report, Error};

#[derive(Parser)]
#[command(
    name = "siqrng",
    version,
    about = "Bias-free source-independent QRNG toolkit"
)]
struct Cli {
    /// Pipeline configuration file (TOML); defaults used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output (run) directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Routine override.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=3))]
    routine: Option<u8>,

    /// Override the run length to this many synthesis blocks
    /// (n_tot = blocks * block_len, n_c = n_tot / 64).
    #[arg(long, global = true)]
    blocks: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print gain aggregates and the bias-free operating points per routine.
    Solve,
    /// Synthesize the calibration and data runs; write raw samples.
    Simulate,
    /// Certify extractable randomness from the raw files.
    Entropy,
    /// Toeplitz-extract final bits from the data quadrature.
    Extract,
    /// Battery, autocorrelation, spectra (and CMRR when a tone is set).
    Analyze,
    /// All stages in order.
    Pipeline,
    /// Consolidate a run directory into report.json.
    Report,
}

fn load_config(cli: &Cli) -> siqrng::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_toml_file(path)?,
        None => {
            let mut cfg = PipelineConfig::default();
            cfg.apply_env_overrides()?;
            cfg
        }
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(id) = cli.routine {
        cfg.routine = Routine::from_id(id)?;
    }
    if let Some(blocks) = cli.blocks {
        cfg.run.n_tot = blocks * cfg.run.block_len;
        cfg.run.n_c = (cfg.run.n_tot / 64).max(1);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_solve(cfg: &PipelineConfig) -> siqrng::Result<()> {
    let (a, b, c) = gain_aggregates(&cfg.system);
    println!("gain aggregates:");
    println!("  A = {a:.6}");
    println!("  B = {b:.6}");
    println!("  C = {c:.6}");
    println!();
    println!("routine   delta_phi        xi               phi_x    phi_p");
    for routine in [Routine::One, Routine::Two, Routine::Three] {
        let marker = if routine == cfg.routine { "*" } else { " " };
        match solve_routine(routine, a, b, c) {
            Ok(rc) => {
                if routine == Routine::Three {
                    println!(
                        "{marker} 3 (X)   {:<16.6} {:<16.6} {:<8.4} -",
                        rc.x.delta_phi, rc.x.xi, rc.x.phi
                    );
                    println!(
                        "{marker} 3 (P)   {:<16.6} {:<16.6} -        {:<8.4}",
                        rc.p.delta_phi, rc.p.xi, rc.p.phi
                    );
                } else {
                    println!(
                        "{marker} {}       {:<16.6} {:<16.6} {:<8.4} {:<8.4}",
                        routine.id(),
                        rc.x.delta_phi,
                        rc.x.xi,
                        rc.x.phi,
                        rc.p.phi
                    );
                }
            }
            Err(e) => println!("{marker} {}       unsolvable: {e}", routine.id()),
        }
    }
    let solve = pipeline::stage_solve(cfg)?;
    println!();
    println!(
        "selected routine {} residual DC coefficient: X setting {:.3e}, P setting {:.3e}",
        cfg.routine.id(),
        solve.x_coefficients.coef_dc,
        solve.p_coefficients.coef_dc
    );
    Ok(())
}

fn print_battery(battery: &siqrng::stats::BatteryReport) {
    println!("randomness battery over {} bits:", battery.n_bits);
    for r in &battery.results {
        println!(
            "  {:<22} P = {:.6}  {}",
            r.name,
            r.p_value,
            if r.pass { "pass" } else { "FAIL" }
        );
    }
}

fn run(cli: &Cli) -> siqrng::Result<ExitCode> {
    let cfg = load_config(cli)?;
    let dir = cfg.output_dir.clone();
    match cli.command {
        Command::Solve => {
            cmd_solve(&cfg)?;
        }
        Command::Simulate => {
            std::fs::create_dir_all(&dir)?;
            let sidecar = pipeline::stage_simulate(&cfg, &dir)?;
            println!(
                "wrote {} data + {} check samples to {} (saturated: {})",
                sidecar.n_tot - sidecar.n_c,
                sidecar.n_c,
                dir.display(),
                sidecar.saturated
            );
        }
        Command::Entropy => {
            let report = pipeline::stage_entropy(&dir)?;
            println!("H(a_xi)      = {:.4} bits", report.h_axi);
            println!(
                "S(rho_A^G)   = {:.4} bits (lambda = {:.6})",
                report.s_holevo, report.covariance.lambda
            );
            println!("per-sample   = {:.4} bits", report.r_per_sample);
            println!("t_switch     = {} bits", report.t_switch);
            println!("r_dis_avg    = {:.4} bits", report.r_dis_avg);
            if !report.certifiable {
                println!("no certifiable randomness; downstream stages will refuse");
            }
        }
        Command::Extract => {
            let manifest = pipeline::stage_extract(&cfg, &dir)?;
            println!(
                "extracted {} bits from {} blocks ({} tail bits discarded)",
                manifest.output_bits, manifest.blocks_processed, manifest.discarded_tail_bits
            );
        }
        Command::Analyze => {
            let battery = pipeline::stage_analyze(&cfg, &dir)?;
            print_battery(&battery);
            if !battery.all_pass {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Pipeline => match pipeline::run_pipeline(&cfg)? {
            PipelineOutcome::Completed {
                entropy,
                extraction,
                battery,
            } => {
                println!("run directory: {}", dir.display());
                println!("config hash:   {}", cfg.config_hash());
                println!(
                    "certified rate: {:.4} bits/sample (H = {:.4}, S = {:.4}, t = {})",
                    entropy.r_dis_avg, entropy.h_axi, entropy.s_holevo, entropy.t_switch
                );
                println!(
                    "extracted bits: {} ({} blocks, ratio {}/{})",
                    extraction.output_bits, extraction.blocks_processed, extraction.j, extraction.k
                );
                print_battery(&battery);
                if !battery.all_pass {
                    eprintln!("pipeline ran but the battery failed");
                    return Ok(ExitCode::from(2));
                }
            }
            PipelineOutcome::Refused { reason } => {
                eprintln!("refused: {reason}");
                return Ok(ExitCode::from(3));
            }
        },
        Command::Report => {
            let report = report::assemble_and_write(&dir)?;
            println!("report written: {}", dir.join("report.json").display());
            println!(
                "r_dis_avg = {:.4} bits/sample, {} extracted bits, battery {}",
                report.entropy.r_dis_avg,
                report.extraction.output_bits,
                if report.battery.all_pass {
                    "pass"
                } else {
                    "FAIL"
                }
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(Error::MissingStages(stages)) => {
            eprintln!("error: missing stage outputs: {}", stages.join(", "));
            ExitCode::from(1)
        }
        Err(Error::NoExtractableOutput(msg)) => {
            eprintln!("refused: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
