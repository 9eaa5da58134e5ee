use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use edgeplan::baselines::{ga_blind, greedy_baseline, random_deploy, FlatNetworkModel};
use edgeplan::harness::{brute_force_optimum, generate_scenario, run_sweep, GeneratorParams, SweepSpec};
use edgeplan::model::format::{deployment_from_json, deployment_to_json, scenario_from_json, scenario_to_json};
use edgeplan::model::{Deployment, Scenario};
use edgeplan::optimizer::{optimize, optimize_without_ia, GaConfig, OptimizationTrace};
use edgeplan::routing::{build_routing, lfl, RoutingTable};
use edgeplan::traffic::{evaluate, DelayReport};

#[derive(Parser)]
#[command(name = "edgeplan", version, about = "Microservice deployment planning for edge networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Paper,
    Desk,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineScheme {
    Random,
    Greedy,
    GaBlind,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random scenario.
    Gen {
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
        /// Generator parameters as JSON; replaces the preset.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scenario file to write; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a deployment on the scenario's topology.
    Evaluate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        deployment: PathBuf,
    },
    /// Run the topology-aware genetic search.
    Optimize {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        ga_config: Option<PathBuf>,
        /// Overrides the config's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Disable greedy super individuals.
        #[arg(long)]
        no_ia: bool,
        /// Deployment file to write.
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration trace CSV (iteration,best_T).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a comparison scheme and score it on the real topology.
    Baseline {
        #[arg(long, value_enum)]
        scheme: BaselineScheme,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        ga_config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print each link's forwarding load and the average.
    Lfl {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run a parameter sweep and write CSV tables.
    Sweep {
        /// Sweep specification as JSON.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
        #[arg(long)]
        params: Option<PathBuf>,
        /// Shifts every seed listed in the spec by this amount.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overrides the spec's output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Find the optimal deployment by exhaustive search.
    Oracle {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = edgeplan::harness::DEFAULT_SIZE_GUARD)]
        guard: u128,
        #[arg(long)]
        out: PathBuf,
    },
}

type Failure = Box<dyn std::error::Error>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn load_scenario(path: &Path) -> Result<(Scenario, RoutingTable), Failure> {
    let s = scenario_from_json(&read(path)?)?;
    let r = build_routing(s.topology())?;
    Ok((s, r))
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<GaConfig, Failure> {
    let mut config: GaConfig = match path {
        Some(p) => serde_json::from_str(&read(p)?)?,
        None => GaConfig::default(),
    };
    if let Some(seed) = seed {
        config.rng_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn load_params(preset: Preset, path: Option<&Path>) -> Result<GeneratorParams, Failure> {
    Ok(match path {
        Some(p) => serde_json::from_str(&read(p)?)?,
        None => match preset {
            Preset::Paper => GeneratorParams::paper(),
            Preset::Desk => GeneratorParams::desk(),
            Preset::Oracle => GeneratorParams::oracle(),
        },
    })
}

fn report_csv(s: &Scenario, report: &DelayReport) -> String {
    let mut out = String::from("service,T_k\n");
    for (k, t) in report.service_delays.iter().enumerate() {
        writeln!(out, "{k},{t}").unwrap();
    }
    out.push_str("\nsrc,dst,traffic,residual\n");
    for l in s.topology().directed_links() {
        writeln!(out, "{},{},{},{}", l.from, l.to, report.traffic.link_total()[l.id], report.residual.residual()[l.id])
            .unwrap();
    }
    writeln!(out, "\nT,congested\n{},{}", report.total, report.congested).unwrap();
    out
}

fn trace_csv(trace: &OptimizationTrace) -> String {
    let mut out = String::from("iteration,best_T\n");
    for r in &trace.history {
        writeln!(out, "{},{}", r.iteration, r.best_t).unwrap();
    }
    out
}

fn finish(s: &Scenario, r: &RoutingTable, d: &Deployment, out: &Path) -> Result<String, Failure> {
    write(out, &deployment_to_json(d))?;
    Ok(report_csv(s, &evaluate(s, d, r)?))
}

fn run(command: Command) -> Result<String, Failure> {
    match command {
        Command::Gen { preset, params, seed, out } => {
            let params = load_params(preset, params.as_deref())?.with_seed(seed);
            let text = scenario_to_json(&generate_scenario(&params)?);
            match out {
                Some(p) => {
                    write(&p, &text)?;
                    Ok(String::new())
                }
                None => Ok(text),
            }
        }
        Command::Evaluate { scenario, deployment } => {
            let (s, r) = load_scenario(&scenario)?;
            let d = deployment_from_json(&read(&deployment)?, &s)?;
            Ok(report_csv(&s, &evaluate(&s, &d, &r)?))
        }
        Command::Optimize { scenario, ga_config, seed, no_ia, out, trace } => {
            let (s, r) = load_scenario(&scenario)?;
            let config = load_config(ga_config.as_deref(), seed)?;
            let result = if no_ia { optimize_without_ia(&s, &r, &config)? } else { optimize(&s, &r, &config)? };
            if let Some(p) = trace {
                write(&p, &trace_csv(&result))?;
            }
            let mut text = finish(&s, &r, &result.best, &out)?;
            writeln!(text, "\niterations,best_found_at,termination\n{},{},{:?}", result.iterations, result.best_found_at, result.termination)
                .unwrap();
            Ok(text)
        }
        Command::Baseline { scheme, scenario, ga_config, seed, out } => {
            let (s, r) = load_scenario(&scenario)?;
            let d = match scheme {
                BaselineScheme::Random => random_deploy(&s, seed.unwrap_or(0))?,
                BaselineScheme::Greedy => greedy_baseline(&s, &r)?,
                BaselineScheme::GaBlind => {
                    let config = load_config(ga_config.as_deref(), seed)?;
                    ga_blind(&s, &FlatNetworkModel::nominal(&s), &config)?.best
                }
            };
            finish(&s, &r, &d, &out)
        }
        Command::Lfl { scenario } => {
            let (s, r) = load_scenario(&scenario)?;
            let report = lfl(s.topology(), &r);
            let mut text = String::from("src,dst,load\n");
            for (l, link) in s.topology().links().iter().enumerate() {
                writeln!(text, "{},{},{}", link.a, link.b, report.link_load(l)).unwrap();
            }
            writeln!(text, "\naverage\n{}", report.average).unwrap();
            Ok(text)
        }
        Command::Sweep { spec, preset, params, seed, out } => {
            let mut spec: SweepSpec = serde_json::from_str(&read(&spec)?)?;
            for s in &mut spec.seeds {
                *s = s.wrapping_add(seed);
            }
            if let Some(p) = out {
                spec.output = p;
            }
            let params = load_params(preset, params.as_deref())?;
            let table = run_sweep(&spec, &params)?;
            let written = table.write(&spec.output)?;
            Ok(written.iter().map(|p| format!("{}\n", p.display())).collect())
        }
        Command::Oracle { scenario, guard, out } => {
            let (s, r) = load_scenario(&scenario)?;
            let (d, _) = brute_force_optimum(&s, &r, guard)?;
            finish(&s, &r, &d, &out)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("EDGEPLAN_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("EDGEPLAN_THREADS must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
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
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match run(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
