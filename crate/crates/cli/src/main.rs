mod analysis;
mod args;
mod config;
mod covid;
mod error;
mod input;
mod report;

use std::fs;
use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use trendgp::estimation::{index_posterior, IndexPosteriorOptions};
use trendgp::indices::DEFAULT_QUADRATURE;
use trendgp::simulation::{run_study, Design, Scenario};
use trendgp::stats::{linspace, quantiles};
use trendgp::GpPosterior;

use crate::analysis::{estimate, load_input};
use crate::args::{Cli, Command, DesignArg, EtiArgs, FitArgs, SimulateArgs, TdiArgs};
use crate::config::{parse_intervals, AnalysisConfig};
use crate::error::{CliError, CliResult};
use crate::input::parse_time;

pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

fn cmd_fit(args: &FitArgs) -> CliResult<()> {
    let cfg = AnalysisConfig::from_fit_args(args)?;
    let input = load_input(&args.model.input, &cfg)?;
    let est = estimate(&cfg, &input.data, !cfg.intervals.is_empty())?;
    let (report, eti_draws) = report::build_report(&cfg, &input, &est)?;
    report::write_report(&args.out, &report, &eti_draws)?;
    let mut ingested = Vec::new();
    input::write_series(&input.raw, &mut ingested)?;
    fs::write(args.out.join("data.csv"), ingested)?;
    eprintln!(
        "fitted {} ({} observations); report written to {}",
        report.model.label,
        report.data.n,
        args.out.display()
    );
    Ok(())
}

fn write_stdout(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn cmd_tdi(args: &TdiArgs) -> CliResult<()> {
    let mut cfg = AnalysisConfig::from_model_args(&args.model)?;
    let at = args
        .at
        .iter()
        .map(|s| parse_time(s).ok_or_else(|| CliError::parse(format!("bad query time `{s}`"))))
        .collect::<CliResult<Vec<f64>>>()?;
    cfg.query_times = at.iter().map(|t| t + args.delta).collect();
    let input = load_input(&args.model.input, &cfg)?;
    let est = estimate(&cfg, &input.data, false)?;
    let times = &cfg.query_times;
    let mut text = String::new();
    match &est.samples {
        None => {
            let values = GpPosterior::new(&input.data, &est.ml.theta)?.tdi_values(times)?;
            text.push_str("t,delta,tdi\n");
            for (t, v) in at.iter().zip(values) {
                text.push_str(&format!("{t},{},{v}\n", args.delta));
            }
        }
        Some(samples) => {
            let mc = cfg.mcmc.as_ref().expect("bayes config");
            let idx = index_posterior(
                &input.data,
                samples,
                times,
                0.0,
                &IndexPosteriorOptions {
                    max_draws: mc.max_draws,
                    local_eti: false,
                    ..IndexPosteriorOptions::default()
                },
            )?;
            text.push_str("t,delta,tdi,lo2.5,hi97.5\n");
            for (i, t) in at.iter().enumerate() {
                let q = &idx.tdi.values;
                text.push_str(&format!("{t},{},{},{},{}\n", args.delta, q[1][i], q[0][i], q[2][i]));
            }
        }
    }
    write_stdout(&text)
}

fn cmd_eti(args: &EtiArgs) -> CliResult<()> {
    let mut cfg = AnalysisConfig::from_model_args(&args.model)?;
    cfg.intervals = parse_intervals(&args.interval)?;
    let input = load_input(&args.model.input, &cfg)?;
    let est = estimate(&cfg, &input.data, true)?;
    let mut text = String::new();
    match &est.samples {
        None => {
            let post = GpPosterior::new(&input.data, &est.ml.theta)?;
            text.push_str("a,b,eti\n");
            for [a, b] in &cfg.intervals {
                text.push_str(&format!("{a},{b},{}\n", post.eti(*a, *b, DEFAULT_QUADRATURE)?));
            }
        }
        Some(samples) => {
            let mc = cfg.mcmc.as_ref().expect("bayes config");
            let first = cfg.intervals[0][0];
            let idx = index_posterior(
                &input.data,
                samples,
                &[first],
                first,
                &IndexPosteriorOptions {
                    intervals: cfg.intervals.iter().map(|&[a, b]| (a, b)).collect(),
                    max_draws: mc.max_draws,
                    local_eti: false,
                    ..IndexPosteriorOptions::default()
                },
            )?;
            text.push_str("a,b,eti,lo2.5,hi97.5\n");
            for ([a, b], draws) in cfg.intervals.iter().zip(&idx.eti_draws) {
                let q = quantiles(draws, &[0.025, 0.5, 0.975]);
                text.push_str(&format!("{a},{b},{},{},{}\n", q[1], q[0], q[2]));
            }
        }
    }
    write_stdout(&text)
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut scenarios = Vec::new();
    for &n in &args.n {
        for &sigma in &args.sigma {
            let mut s = Scenario::standard(n, sigma, args.reps, args.seed)?;
            s.design = match args.design {
                DesignArg::Equidistant => Design::Equidistant,
                DesignArg::Uniform => Design::Uniform,
            };
            s.restarts = args.restarts;
            s.grid = linspace(0.0, 1.0, args.grid);
            s.validate()?;
            scenarios.push(s);
        }
    }
    if args.reps == 0 {
        return Err(CliError::parse("--reps must be at least 1"));
    }
    let csv = run_study(&scenarios)?.to_csv();
    match &args.output {
        Some(path) => fs::write(path, csv)?,
        None => write_stdout(&csv)?,
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Tdi(a) => cmd_tdi(&a),
        Command::Eti(a) => cmd_eti(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::FetchCovid(a) => covid::run(&a),
        Command::Schema => write_stdout(REPORT_SCHEMA),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.one_line());
            ExitCode::from(e.exit_code())
        }
    }
}
