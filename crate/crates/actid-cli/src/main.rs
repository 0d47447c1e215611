//! Command-line front end: Monte Carlo experiments, instance diagnostics,
//! and one-shot excitation design.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use actid::bounds::{benefit, min_horizon, HorizonInputKind};
use actid::design::{design_ce_input, design_oracle_input};
use actid::geometry::{eta_bound, pe_optimal, pe_random};
use actid::harness::{
    resolve_scenario, run_experiment, summarize, uniform_prior_row, write_rows_csv,
    write_summary_csv, ExperimentSpec,
};
use actid::identify::{RhoSchedule, StrategyConfig, StrategyKind};
use actid::lti::Scenario;
use actid::Error;

#[derive(Parser)]
#[command(
    name = "actid",
    about = "Active identification of linear systems from a finite hypothesis class",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArg {
    /// Builtin name (example_3_1, example_3_1(d), section5, appendix_f1,
    /// appendix_f2(seed)) or a path to a scenario JSON file.
    #[arg(long)]
    scenario: String,
    /// Entrywise perturbation std for appendix_f2.
    #[arg(long, default_value_t = 0.1)]
    perturb_std: f64,
}

#[derive(Args)]
struct RunOpts {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Comma-separated strategies, e.g.
    /// `ce:rho=const0:eta=0.01,isotropic,oracle`.
    #[arg(long)]
    strategies: String,
    #[arg(long)]
    tau: usize,
    #[arg(long)]
    episodes: usize,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Number of Monte Carlo runs per strategy.
    #[arg(long, default_value_t = 100)]
    mc: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path; the summary lands next to it as
    /// `<stem>.summary.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and write per-episode rows plus a
    /// summary CSV.
    Run(RunOpts),
    /// Print the benefit diagnostic, PE coefficients, lower-bound horizons,
    /// and the eta bound as JSON.
    Analyze {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        tau: usize,
    },
    /// Solve the excitation design problem and print the plan as JSON.
    Design {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        tau: usize,
        /// Design for this candidate as the assumed truth
        /// (certainty-equivalence); defaults to the scenario's true index.
        #[arg(long)]
        estimate: Option<usize>,
        /// JSON file with the initial state (array of numbers); defaults to
        /// the origin.
        #[arg(long)]
        x0: Option<PathBuf>,
        /// Optional output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_rho(s: &str) -> Result<RhoSchedule, Error> {
    match s {
        "inv_k" => Ok(RhoSchedule::InvK),
        "inv_k_sq" => Ok(RhoSchedule::InvKSq),
        "exp_decay" => Ok(RhoSchedule::ExpDecay),
        "oracle_rule" => Ok(RhoSchedule::OracleRule),
        _ => {
            if let Some(c) = s.strip_prefix("const") {
                let v: f64 = c
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad rho constant '{c}'")))?;
                Ok(RhoSchedule::Constant(v))
            } else {
                Err(Error::InvalidArgument(format!(
                    "unknown rho schedule '{s}' (const<c>, inv_k, inv_k_sq, exp_decay, oracle_rule)"
                )))
            }
        }
    }
}

fn parse_strategy(spec: &str) -> Result<StrategyConfig, Error> {
    let mut parts = spec.split(':');
    let head = parts.next().unwrap_or_default();
    let mut rho = RhoSchedule::Constant(0.0);
    let mut eta = 0.01;
    let mut fixed_path: Option<String> = None;
    let kind = match head {
        "ce" => StrategyKind::CertaintyEquivalence,
        "oracle" => StrategyKind::OracleOptimal,
        "isotropic" => StrategyKind::Isotropic,
        "fixed" => {
            fixed_path = Some(
                parts
                    .next()
                    .ok_or_else(|| {
                        Error::InvalidArgument(
                            "fixed strategy needs a path: fixed:<file.json>".into(),
                        )
                    })?
                    .to_string(),
            );
            StrategyKind::FixedSequence(Vec::new())
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown strategy '{other}' (ce, oracle, isotropic, fixed:<file>)"
            )))
        }
    };
    for opt in parts {
        if let Some(v) = opt.strip_prefix("rho=") {
            rho = parse_rho(v)?;
        } else if let Some(v) = opt.strip_prefix("eta=") {
            eta = v
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad eta '{v}'")))?;
        } else {
            return Err(Error::InvalidArgument(format!(
                "unknown strategy option '{opt}'"
            )));
        }
    }
    let kind = match (kind, fixed_path) {
        (StrategyKind::FixedSequence(_), Some(path)) => {
            let text = std::fs::read_to_string(&path)?;
            let steps: Vec<Vec<f64>> = serde_json::from_str(&text)?;
            StrategyKind::FixedSequence(
                steps
                    .into_iter()
                    .map(|v| DVector::from_row_slice(&v))
                    .collect(),
            )
        }
        (k, _) => k,
    };
    if matches!(kind, StrategyKind::Isotropic) {
        StrategyConfig::isotropic(eta)
    } else {
        StrategyConfig::new(kind, rho, eta)
    }
}

fn load_x0(path: Option<&Path>, scenario: &Scenario) -> Result<DVector<f64>, Error> {
    match path {
        None => Ok(DVector::zeros(scenario.state_dim())),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            let values: Vec<f64> = serde_json::from_str(&text)?;
            if values.len() != scenario.state_dim() {
                return Err(Error::InvalidArgument(format!(
                    "x0 has length {}, scenario needs {}",
                    values.len(),
                    scenario.state_dim()
                )));
            }
            Ok(DVector::from_row_slice(&values))
        }
    }
}

fn cmd_run(opts: &RunOpts) -> Result<(), Error> {
    let (label, scenario) = resolve_scenario(&opts.scenario.scenario, opts.scenario.perturb_std)?;
    let strategies = opts
        .strategies
        .split(',')
        .map(parse_strategy)
        .collect::<Result<Vec<_>, _>>()?;
    if strategies.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one strategy is required".into(),
        ));
    }
    let n_systems = scenario.systems().len();
    let spec = ExperimentSpec {
        scenario_label: label,
        scenario,
        strategies,
        tau: opts.tau,
        episodes: opts.episodes,
        delta: opts.delta,
        mc_runs: opts.mc,
        base_seed: opts.seed,
    };
    let rows = run_experiment(&spec)?;
    write_rows_csv(std::fs::File::create(&opts.out)?, &rows)?;

    let mut summary = Vec::new();
    for strategy in &spec.strategies {
        summary.push(uniform_prior_row(
            &strategy.label(),
            n_systems,
            spec.mc_runs,
        ));
    }
    summary.extend(summarize(&rows));
    let summary_path = opts.out.with_extension("summary.csv");
    write_summary_csv(std::fs::File::create(&summary_path)?, &summary)?;
    eprintln!(
        "wrote {} rows to {} and {} summary lines to {}",
        rows.len(),
        opts.out.display(),
        summary.len(),
        summary_path.display()
    );
    Ok(())
}

fn cmd_analyze(scenario_arg: &ScenarioArg, tau: usize) -> Result<(), Error> {
    let (label, scenario) = resolve_scenario(&scenario_arg.scenario, scenario_arg.perturb_std)?;
    let diag = benefit(&scenario, tau)?;
    let rand = pe_random(&scenario, tau)?;
    let opt = pe_optimal(&scenario, tau)?;
    let mut horizons = serde_json::Map::new();
    for delta in [0.1, 0.05, 0.01] {
        let optimal = min_horizon(&scenario, HorizonInputKind::Optimal, delta)?;
        let isotropic = min_horizon(&scenario, HorizonInputKind::Isotropic, delta)?;
        horizons.insert(
            format!("{delta}"),
            serde_json::json!({ "optimal": optimal, "isotropic": isotropic }),
        );
    }
    let sigma_u2 = scenario.gamma_u().powi(2) / scenario.input_dim() as f64;
    let eta = eta_bound(&scenario, tau, sigma_u2)?;
    let out = serde_json::json!({
        "scenario": label,
        "tau": tau,
        "benefit": {
            "c_opt": diag.c_opt,
            "c_rand": diag.c_rand,
            "ratio": diag.ratio,
            "noise_floor": diag.noise_floor,
        },
        "pe": {
            "random": { "c_u": rand.c_u, "c_w": rand.c_w },
            "optimal": { "c_u": opt.c_u, "c_w": opt.c_w },
        },
        "min_horizon": horizons,
        "eta_bound": eta,
        "eta_bound_sigma_u2": sigma_u2,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_design(
    scenario_arg: &ScenarioArg,
    tau: usize,
    estimate: Option<usize>,
    x0: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), Error> {
    let (label, scenario) = resolve_scenario(&scenario_arg.scenario, scenario_arg.perturb_std)?;
    let x0 = load_x0(x0, &scenario)?;
    let plan = match estimate {
        Some(i) => design_ce_input(&scenario, i, tau, &x0)?,
        None => design_oracle_input(&scenario, tau, &x0)?,
    };
    let gap = plan.upper_bound.map(|u| u - plan.achieved_minimum);
    let doc = serde_json::json!({
        "scenario": label,
        "tau": tau,
        "estimate": estimate,
        "u": plan.u.as_slice(),
        "energy": plan.energy,
        "achieved_minimum": plan.achieved_minimum,
        "method": plan.method,
        "upper_bound": plan.upper_bound,
        "gap": gap,
    });
    let text = serde_json::to_string_pretty(&doc)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => 3,
        Error::SolverFailure(_) | Error::MixtureStalled { .. } | Error::HorizonCap { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(opts) => cmd_run(opts),
        Command::Analyze { scenario, tau } => cmd_analyze(scenario, *tau),
        Command::Design {
            scenario,
            tau,
            estimate,
            x0,
            out,
        } => cmd_design(scenario, *tau, *estimate, x0.as_deref(), out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
