use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;

use smec_core::optimizer::oracle::{oracle_grid_search, GridSpec};
use smec_core::optimizer::{solve, Solution, Strategy};
use smec_core::output::{emit_results, RunRecord, SummaryRow};
use smec_core::scenario::{builtin_scenarios, resolve, BuiltinScenario, Sweep};
use smec_core::ScenarioConfig;

const EXIT_INFEASIBLE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "smec",
    version,
    about = "Energy-aware distributed processing planner for LEO imaging satellites"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario with one strategy.
    Plan {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "global")]
        strategy: Strategy,
        #[command(flatten)]
        output: Output,
    },
    /// Solve a scenario over a parameter grid.
    Sweep {
        #[command(flatten)]
        input: Input,
        /// Grid such as `W=1..40`, `K=1..5` or `eta=0.1,1`. Defaults to the
        /// builtin scenario's own sweep.
        #[arg(long)]
        param: Option<String>,
        /// Repeatable; all strategies when omitted.
        #[arg(long)]
        strategy: Vec<Strategy>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Multi-frame plan against per-frame plans and the baselines.
    Compare {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Check the descent solver against exhaustive grid search on a small
    /// scenario.
    OracleCheck {
        #[command(flatten)]
        input: Input,
        /// Allowed relative energy excess over the grid optimum.
        #[arg(long, default_value_t = 0.02)]
        tolerance: f64,
    },
    /// List bundled scenarios.
    Scenarios,
}

#[derive(Args)]
struct Input {
    /// Builtin scenario name or path to a scenario file.
    #[arg(long)]
    scenario: String,
    /// `key=value` on any scenario leaf, e.g. `compute.epsilon=0.2`.
    #[arg(long = "override", value_name = "K=V")]
    overrides: Vec<String>,
    /// CSV rate table replacing the one in the scenario.
    #[arg(long)]
    rate_table: Option<PathBuf>,
}

#[derive(Args)]
struct Output {
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

impl Input {
    fn load(&self) -> Result<BuiltinScenario> {
        let mut sc = resolve(&self.scenario)?;
        for o in &self.overrides {
            sc.config = sc.config.apply_override(o)?;
        }
        if let Some(rt) = &self.rate_table {
            sc.config.rate_table = Some(rt.clone());
        }
        sc.config.validate()?;
        Ok(sc)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SMEC_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Plan {
            input,
            strategy,
            output,
        } => plan(&input, strategy, &output),
        Command::Sweep {
            input,
            param,
            strategy,
            jobs,
            output,
        } => sweep(&input, param.as_deref(), &strategy, jobs, &output),
        Command::Compare { input, jobs, output } => compare(&input, jobs, &output),
        Command::OracleCheck { input, tolerance } => oracle_check(&input, tolerance),
        Command::Scenarios => {
            for b in builtin_scenarios() {
                println!("{:<18} {}", b.name, b.description);
            }
            Ok(0)
        }
    }
}

fn solve_config(cfg: &ScenarioConfig, strategy: Strategy) -> Result<(smec_core::ProblemInstance, Solution)> {
    let problem = cfg.problem()?;
    let solution = solve(&problem, strategy, &cfg.optimizer);
    if solution.state.outer_cap_hit || solution.state.inner_cap_hit {
        warn!(
            "{} / {}: iteration cap reached, returning best iterate",
            cfg.name,
            strategy.name()
        );
    }
    Ok((problem, solution))
}

fn describe(s: &SummaryRow) -> String {
    match s.total_j {
        Some(e) => format!("feasible, {e:.4} J ({:.4} J/image)", s.j_per_image.unwrap_or(0.0)),
        None => format!("infeasible ({})", s.violations),
    }
}

fn plan(input: &Input, strategy: Strategy, output: &Output) -> Result<u8> {
    let sc = input.load()?;
    let (problem, solution) = solve_config(&sc.config, strategy)?;
    let record = RunRecord::new(&sc.name, strategy, None, &problem, &solution);
    println!("{} / {}: {}", sc.name, strategy.name(), describe(&record.summary));
    let feasible = record.summary.feasible;
    emit_results(&output.out, &[record])?;
    info!("results written to {}", output.out.display());
    Ok(if feasible { 0 } else { EXIT_INFEASIBLE })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building worker pool")
}

fn error_row(scenario: &str, strategy: Strategy, param: &str, value: f64, err: &anyhow::Error) -> RunRecord {
    RunRecord {
        summary: SummaryRow {
            scenario: scenario.into(),
            strategy: strategy.name().into(),
            param: param.into(),
            value: Some(value),
            k: 0,
            images: 0,
            feasible: false,
            total_j: None,
            j_per_image: None,
            rho_min: None,
            rho_max: None,
            violations: format!("error: {err}"),
        },
        allocation: Vec::new(),
        trace: Vec::new(),
    }
}

fn sweep(input: &Input, param: Option<&str>, strategies: &[Strategy], jobs: usize, output: &Output) -> Result<u8> {
    let sc = input.load()?;
    let grid = match (param, &sc.sweep) {
        (Some(p), _) => Sweep::parse(p)?,
        (None, Some(s)) => s.clone(),
        (None, None) => bail!("scenario `{}` has no default sweep; pass --param", sc.name),
    };
    let strategies = if strategies.is_empty() {
        vec![Strategy::Direct, Strategy::Local, Strategy::Global]
    } else {
        strategies.to_vec()
    };
    let points: Vec<(Strategy, f64)> = strategies
        .iter()
        .flat_map(|&s| grid.values.iter().map(move |&v| (s, v)))
        .collect();
    let name = grid.param.name();
    let runs: Vec<RunRecord> = pool(jobs)?.install(|| {
        points
            .par_iter()
            .map(|&(strategy, value)| {
                let attempt = || -> Result<RunRecord> {
                    let cfg = grid.param.apply(&sc.config, value)?;
                    let (problem, solution) = solve_config(&cfg, strategy)?;
                    Ok(RunRecord::new(
                        &sc.name,
                        strategy,
                        Some((name, value)),
                        &problem,
                        &solution,
                    ))
                };
                attempt().unwrap_or_else(|e| {
                    warn!("{name}={value} / {}: {e:#}", strategy.name());
                    error_row(&sc.name, strategy, name, value, &e)
                })
            })
            .collect()
    });
    for s in &strategies {
        let feasible: Vec<String> = runs
            .iter()
            .filter(|r| r.summary.strategy == s.name() && r.summary.feasible)
            .filter_map(|r| r.summary.value.map(|v| v.to_string()))
            .collect();
        println!("{:<7} feasible at {name} = [{}]", s.name(), feasible.join(", "));
    }
    emit_results(&output.out, &runs)?;
    Ok(0)
}

fn compare(input: &Input, jobs: usize, output: &Output) -> Result<u8> {
    let sc = input.load()?;
    let cfg = &sc.config;
    let mut runs = Vec::new();
    for strategy in [Strategy::Global, Strategy::Direct, Strategy::Local] {
        let (problem, solution) = solve_config(cfg, strategy)?;
        runs.push(RunRecord::new(&sc.name, strategy, None, &problem, &solution));
    }
    let k = cfg.task.frame_widths.len();
    let frames: Vec<Result<(bool, f64)>> = pool(jobs)?.install(|| {
        (0..k)
            .into_par_iter()
            .map(|i| {
                let single = cfg.single_frame(i)?;
                let (_, s) = solve_config(&single, Strategy::Global)?;
                Ok((s.feasible(), s.plan.total_energy()))
            })
            .collect()
    });
    let mut per_frame_ok = true;
    let mut per_frame_j = 0.0;
    for f in frames {
        let (ok, e) = f?;
        per_frame_ok &= ok;
        per_frame_j += e;
    }
    let global = runs[0].summary.clone();
    let images = global.images;
    runs.push(RunRecord {
        summary: SummaryRow {
            strategy: "per_frame".into(),
            feasible: per_frame_ok,
            total_j: per_frame_ok.then_some(per_frame_j),
            j_per_image: (per_frame_ok && images > 0).then(|| per_frame_j / images as f64),
            rho_min: None,
            rho_max: None,
            violations: if per_frame_ok {
                String::new()
            } else {
                "per-frame".into()
            },
            ..global.clone()
        },
        allocation: Vec::new(),
        trace: Vec::new(),
    });
    println!("{:<10} result", "strategy");
    for r in &runs {
        println!("{:<10} {}", r.summary.strategy, describe(&r.summary));
    }
    if let (Some(g), true) = (global.total_j, per_frame_ok) {
        if per_frame_j > 0.0 {
            println!(
                "multi-frame saving vs per-frame: {:.2}%",
                100.0 * (1.0 - g / per_frame_j)
            );
        }
    }
    emit_results(&output.out, &runs)?;
    Ok(if global.feasible { 0 } else { EXIT_INFEASIBLE })
}

fn oracle_check(input: &Input, tolerance: f64) -> Result<u8> {
    let sc = input.load()?;
    let problem = sc.config.problem()?;
    let tau = sc.config.optimizer.tau_proc;
    let solution = solve(&problem, Strategy::Global, &sc.config.optimizer);
    let grid = GridSpec::for_frames(problem.k());
    let oracle = match oracle_grid_search(&problem, grid, tau) {
        Ok(p) => Some(p),
        Err(smec_core::optimizer::OptimizerError::Infeasible { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let bcd = solution.feasible().then(|| solution.plan.total_energy());
    println!(
        "descent: {}",
        bcd.map_or("infeasible".to_string(), |e| format!("{e:.6} J"))
    );
    println!(
        "grid:    {}",
        oracle
            .as_ref()
            .map_or("infeasible".to_string(), |p| format!("{:.6} J", p.total_energy()))
    );
    let pass = match (bcd, &oracle) {
        (Some(e), Some(o)) => e <= o.total_energy() * (1.0 + tolerance),
        (Some(_), None) => true,
        (None, Some(_)) => false,
        (None, None) => true,
    };
    println!("{}", if pass { "PASS" } else { "FAIL" });
    Ok(if pass { 0 } else { EXIT_INFEASIBLE })
}
