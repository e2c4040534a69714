mod compare;
mod error;
mod output;
mod run;
mod scenario;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use tiered_core::rates::{multimode_rates, rabi_frequency};
use tiered_core::RateReport;

use crate::compare::{compare_blocks, compare_files};
use crate::error::{CliError, CliResult};
use crate::output::{csv_string, envelope_csv, envelope_path, summary_path, write_text, Table};
use crate::run::{run, RunOutput, Selection, Summary};
use crate::scenario::{HigherOrderSpec, OutputFormat, Scenario};
use crate::sweep::{sweep, SweepParam, SweepSpec};

/// Reduced dynamics of a small quantum system in a damped-mode environment.
#[derive(Debug, Parser)]
#[command(name = "tiered", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the methods listed in a scenario; writes CSV plus a JSON summary.
    Run {
        scenario: PathBuf,
        /// Cumulant order of the influence functional.
        #[arg(long, value_parser = ["2", "4"])]
        order: Option<String>,
        /// Output path, overriding `output.path`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fail with exit code 3 if influence and the reference differ by more.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Print the closed-form rates for a two-level scenario as JSON.
    Rates {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run only the exact reference (`methods.oracle`, Lindblad by default).
    Oracle {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Max and RMS deviation between two trajectory blocks.
    Compare {
        a: PathBuf,
        /// Second file; defaults to the first.
        b: Option<PathBuf>,
        #[arg(long)]
        a_method: Option<String>,
        #[arg(long)]
        b_method: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one parameter and tabulate the rates.
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long, default_value_t = 31)]
        points: usize,
        /// Index into `bath.modes` for mode parameters.
        #[arg(long, default_value_t = 0)]
        mode: usize,
        /// Keep the mode damping at this multiple of its frequency.
        #[arg(long)]
        gamma_ratio: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Run { scenario, order, out, threshold } => {
            let mut sc = Scenario::load(&scenario)?;
            if let Some(o) = order {
                sc.methods.higher_order = Some(HigherOrderSpec { order: o.parse().expect("restricted by clap") });
            }
            if let Some(p) = out {
                sc.output.path = p;
            }
            let res = run(&sc, Selection::Scenario)?;
            write_run(&sc, &res)?;
            if let Some(th) = threshold {
                check_threshold(&res.table, th)?;
            }
            Ok(())
        }
        Command::Oracle { scenario, out } => {
            let mut sc = Scenario::load(&scenario)?;
            if let Some(p) = out {
                sc.output.path = p;
            }
            let res = run(&sc, Selection::OracleOnly)?;
            write_run(&sc, &res)
        }
        Command::Rates { scenario, out } => {
            let sc = Scenario::load(&scenario)?;
            let text = rates_json(&sc)?;
            emit(out.as_deref(), &text)
        }
        Command::Compare { a, b, a_method, b_method, threshold, out } => {
            let b = b.unwrap_or_else(|| a.clone());
            let report = compare_files(&a, &b, a_method.as_deref(), b_method.as_deref(), threshold)?;
            emit(out.as_deref(), &pretty(&report)?)?;
            if report.exceeded {
                return Err(CliError::Threshold(format!(
                    "max deviation {:.3e} exceeds threshold {:.3e}",
                    report.max,
                    threshold.unwrap_or_default()
                )));
            }
            Ok(())
        }
        Command::Sweep { scenario, param, from, to, points, mode, gamma_ratio, out } => {
            let sc = Scenario::load(&scenario)?;
            let text = sweep(&sc, &SweepSpec { param, from, to, points, mode, gamma_ratio })?;
            emit(out.as_deref(), &text)
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::Input(format!("cannot serialize output: {e}")))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct JsonRun<'a> {
    summary: &'a Summary,
    trajectories: &'a Table,
}

fn write_run(sc: &Scenario, res: &RunOutput) -> CliResult<()> {
    let path = &sc.output.path;
    match sc.output.format {
        OutputFormat::Csv => {
            write_text(path, &csv_string(&res.table))?;
            write_text(&summary_path(path), &pretty(&res.summary)?)?;
            println!("wrote {} and {}", path.display(), summary_path(path).display());
        }
        OutputFormat::Json => {
            write_text(path, &pretty(&JsonRun { summary: &res.summary, trajectories: &res.table })?)?;
            println!("wrote {}", path.display());
        }
    }
    if let Some((t, th, env)) = &res.envelope {
        let p = envelope_path(path);
        write_text(&p, &envelope_csv(t, th, env))?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn check_threshold(table: &Table, threshold: f64) -> CliResult<()> {
    let inf = table.block("influence");
    let reference = table.block("oracle").or_else(|| table.block("tcl2"));
    let (Some(a), Some(b)) = (inf, reference) else {
        return Err(CliError::Input("--threshold needs both an influence and an oracle or tcl2 block".into()));
    };
    let max = compare_blocks(&table.names, a, b)?.iter().map(|c| c.max).fold(0.0, f64::max);
    println!("max |influence - {}| = {max:.3e}", b.method);
    if max > threshold {
        return Err(CliError::Threshold(format!("max deviation {max:.3e} exceeds threshold {threshold:.3e}")));
    }
    Ok(())
}

#[derive(Serialize)]
struct RatesOut {
    eps: f64,
    delta: f64,
    omega_rabi: f64,
    rates: RateReport,
    relax_time: Option<f64>,
    dephase_time: Option<f64>,
}

fn rates_json(sc: &Scenario) -> CliResult<String> {
    let tl = sc.two_level().ok_or_else(|| {
        CliError::Input("rates need a static two-level system with V = sigma_z and no sigma_y term".into())
    })?;
    let r = multimode_rates(tl.eps, tl.delta, &sc.environment()?)?;
    let inv = |x: f64| if x > 0.0 { Some(1.0 / x) } else { None };
    pretty(&RatesOut {
        eps: tl.eps,
        delta: tl.delta,
        omega_rabi: rabi_frequency(tl.eps, tl.delta),
        relax_time: inv(r.gamma_relax),
        dephase_time: inv(r.gamma_dephase),
        rates: r,
    })
}
