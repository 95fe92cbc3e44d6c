use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use multichain::epochs::{records_jsonl, run_scenario, timeline_csv, Scenario};
use multichain::fairness::{compensation, sample_optimal_set, ExpectationMode};
use multichain::instances::{gen_uniform, knob_instance, toy_example, KnobInstanceParams, UniformGenParams};
use multichain::misalignment::misalignment_score;
use multichain::model::validate_instance;
use multichain::objective::EpochHistory;
use multichain::search::build_partition_instance;
use multichain::sweep::{run_sweep, sweep_csv};
use multichain::{solve, GovernanceWeights, Instance, SearchMode, Solution, SolverConfig};

#[derive(Parser)]
#[command(name = "multichain", version, about = "Ephemeral chain configuration experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// RNG seed for heuristic search, sampling and generators.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Objective evaluations per heuristic solve.
    #[arg(long, global = true)]
    budget: Option<usize>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Output file (output prefix for `epochs`); stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "MULTICHAIN_WORKERS", default_value_t = 0)]
    workers: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Heuristic,
}

impl From<ModeArg> for SearchMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => SearchMode::Exact,
            ModeArg::Heuristic => SearchMode::Heuristic,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write an instance file.
    Gen(GenArgs),
    /// Find the best configuration for one instance.
    Solve {
        instance: PathBuf,
        #[arg(long, default_value = "1/3,1/3,1/3", value_parser = parse_weights)]
        weights: GovernanceWeights,
        /// Previous-epoch instance and assignment (JSON).
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Solve every point of the governance simplex grid.
    Sweep {
        instance: PathBuf,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        resolution: u64,
    },
    /// Solo optima, relative utilities and the misalignment score.
    Misalign { instance: PathBuf },
    /// Sample near-optimal configurations and compute compensations.
    Fairness {
        instance: PathBuf,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        runs: u64,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value = "1/3,1/3,1/3", value_parser = parse_weights)]
        weights: GovernanceWeights,
        /// Weight members by how often the runs produced them.
        #[arg(long)]
        frequency: bool,
    },
    /// Run a multi-epoch scenario; writes `<out>.csv` and `<out>.jsonl`.
    Epochs { scenario: PathBuf },
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    kind: GenKind,
    #[arg(long, default_value_t = 0.3)]
    kappa: f64,
    #[arg(long, default_value_t = 0.9)]
    sigma: f64,
    #[arg(long, default_value_t = 4)]
    apps: usize,
    #[arg(long, default_value_t = 3)]
    ops: usize,
    /// Comma-separated positive integers for `partition`.
    #[arg(long, value_delimiter = ',')]
    numbers: Vec<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Toy,
    Knob,
    Uniform,
    Partition,
}

fn parse_weights(s: &str) -> Result<GovernanceWeights, String> {
    s.parse().map_err(|e: multichain::Error| e.to_string())
}

impl Global {
    fn solver(&self) -> SolverConfig {
        self.apply(SolverConfig::default())
    }

    fn apply(&self, mut cfg: SolverConfig) -> SolverConfig {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(b) = self.budget {
            cfg.budget = b;
        }
        if let Some(m) = self.mode {
            cfg.mode = m.into();
        }
        cfg
    }
}

/// Writes via a sibling temp file and a rename, so readers never see a
/// partial file.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp =
        tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn emit(out: Option<&Path>, contents: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, contents),
        None => {
            std::io::stdout().write_all(contents.as_bytes())?;
            Ok(())
        }
    }
}

fn read_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let inst = Instance::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    let errs = validate_instance(&inst);
    if !errs.is_empty() {
        bail!(multichain::Error::InvalidInstance(errs));
    }
    Ok(inst)
}

fn summarize(solution: &Solution) {
    let r = &solution.report;
    eprintln!("objective {:.6} ({:?}, {} evaluations)", r.objective, solution.provenance, solution.evaluations_used);
    if solution.assignment.is_empty() {
        eprintln!("empty assignment: no chain is formed");
    }
    if !r.feasible {
        eprintln!("no feasible configuration found");
    }
    for c in &r.chains {
        eprintln!(
            "chain {}: apps {:?} ops {:?} price {} gas {} fee {}",
            c.view.chain_id, c.view.apps, c.view.ops, c.view.price, c.view.gas_processed, c.view.fee
        );
    }
    for a in &r.app_utilities {
        eprintln!("  {} served {} utility {:.6}", a.id, a.base, a.final_utility);
    }
    for o in &r.op_utilities {
        eprintln!("  {} yield {} utility {:.6}", o.id, o.yield_per_stake, o.final_utility);
    }
    eprintln!("  fees {} sys utility {:.6}", r.sys_utility.fees, r.sys_utility.final_utility);
}

fn json(value: &impl serde::Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    rayon::ThreadPoolBuilder::new().num_threads(g.workers).build_global()?;
    let out = g.out.as_deref();
    match cli.command {
        Command::Gen(args) => {
            let inst = match args.kind {
                GenKind::Toy => toy_example(),
                GenKind::Knob => {
                    knob_instance(KnobInstanceParams { kappa: args.kappa, sigma: args.sigma, ..Default::default() })?
                }
                GenKind::Uniform => gen_uniform(&UniformGenParams {
                    apps: args.apps,
                    ops: args.ops,
                    seed: g.seed.unwrap_or(0),
                    ..Default::default()
                })?,
                GenKind::Partition => build_partition_instance(&args.numbers)?,
            };
            let errs = validate_instance(&inst);
            if errs.is_empty() {
                eprintln!("{} apps, {} ops: valid", inst.apps.len(), inst.ops.len());
            } else {
                for e in &errs {
                    eprintln!("invalid: {e}");
                }
            }
            emit(out, &json(&inst)?)
        }
        Command::Solve { instance, weights, history } => {
            let inst = read_instance(&instance)?;
            let history = match history {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    Some(EpochHistory::from_json(&text)?)
                }
                None => None,
            };
            let solution = solve(&inst, history.as_ref(), weights, &g.solver(), None)?;
            summarize(&solution);
            emit(out, &json(&solution)?)
        }
        Command::Sweep { instance, resolution } => {
            let inst = read_instance(&instance)?;
            let rows = run_sweep(&inst, resolution as usize, &g.solver())?;
            let failed = rows.iter().filter(|r| r.failed()).count();
            if failed > 0 {
                eprintln!("{failed} grid points failed");
            }
            emit(out, &sweep_csv(&rows)?)
        }
        Command::Misalign { instance } => {
            let inst = read_instance(&instance)?;
            let report = misalignment_score(&inst, &g.solver())?;
            eprintln!("mis {:.9}", report.mis);
            emit(out, &json(&report)?)
        }
        Command::Fairness { instance, runs, epsilon, weights, frequency } => {
            let inst = read_instance(&instance)?;
            let mut cfg = g.solver();
            if let Some(e) = epsilon {
                cfg.epsilon = e;
            }
            let sample = sample_optimal_set(&inst, None, weights, &cfg, runs as usize)?;
            let mode = if frequency { ExpectationMode::Frequency } else { ExpectationMode::Uniform };
            let report = compensation(&sample, sample.draw(cfg.seed), mode)?;
            eprintln!(
                "{} near-optimal members; drawn {}; sum of compensations {:e}",
                sample.len(),
                report.drawn,
                report.total()
            );
            emit(out, &report.to_csv()?)
        }
        Command::Epochs { scenario } => {
            let text = std::fs::read_to_string(&scenario).with_context(|| format!("reading {}", scenario.display()))?;
            let mut sc = Scenario::from_json(&text).with_context(|| format!("parsing {}", scenario.display()))?;
            sc.solver = g.apply(sc.solver);
            let records = run_scenario(&sc)?;
            for r in records.iter().filter(|r| r.error.is_some()) {
                eprintln!("epoch {}: {}", r.epoch, r.error.as_deref().unwrap_or_default());
            }
            let csv = timeline_csv(&records)?;
            let jsonl = records_jsonl(&records)?;
            match out {
                Some(prefix) => {
                    write_atomic(&prefix.with_extension("csv"), &csv)?;
                    write_atomic(&prefix.with_extension("jsonl"), &jsonl)
                }
                None => emit(None, &csv),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
