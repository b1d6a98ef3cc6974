use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use feedline::evaluator::{out_of_sample_reliability, OutOfSample};
use feedline::harness::{run_experiment, ExperimentSpec, Study};
use feedline::lp::mps::write_mps;
use feedline::optimizer::{bisection_search, build_extensive_form, BendersOptions, BisectionParams, FirstStage, SolveStatus};
use feedline::plant::{load_plant, pdu_plant, MoistureLevel, Plant};
use feedline::scenario::{generate_scenario_set, BaleSequence, FailureMode, GenOptions, Scenario};

#[derive(Parser)]
#[command(name = "feedline", version, about = "Plan equipment speeds and starting stock for a biomass feeding line")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and write the plan.
    Solve {
        #[command(flatten)]
        instance: Instance,
        /// In-sample risk (share of training scenarios allowed to miss the target).
        #[arg(long)]
        saa_risk: Option<f64>,
        #[arg(short, long, default_value = "solution")]
        output: PathBuf,
    },
    /// Replay a saved plan on fresh scenarios.
    Evaluate {
        #[command(flatten)]
        instance: Instance,
        /// Plan written by `solve`.
        #[arg(long)]
        first_stage: PathBuf,
        /// Allowed risk of missing the target; the plant's value when absent.
        #[arg(long)]
        risk: Option<f64>,
        /// Writes a violation table here when given.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run one study and write its CSV tables and manifest.
    Experiment(ExperimentArgs),
    /// Write the extensive form of an instance as MPS.
    ExportMps {
        #[command(flatten)]
        instance: Instance,
        /// Price per unit of shortfall.
        #[arg(long, default_value_t = 1e7)]
        penalty: f64,
        #[arg(short, long, default_value = "model.mps")]
        output: PathBuf,
    },
}

#[derive(Args)]
struct Instance {
    /// Plant document (JSON); the built-in PDU plant when absent.
    #[arg(long)]
    plant: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Moisture::Low)]
    moisture: Moisture,
    /// Periods; the plant's horizon when absent.
    #[arg(long)]
    horizon: Option<usize>,
    /// Number of scenarios to draw.
    #[arg(short, long, default_value_t = 100)]
    scenarios: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Failures::None)]
    failures: Failures,
    /// Reactor target in dry tons per hour; the plant's value when absent.
    #[arg(long)]
    target: Option<f64>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment spec (JSON). Flags below override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    study: Option<String>,
    #[arg(long)]
    plant: Option<PathBuf>,
    /// Training sample sizes, comma separated.
    #[arg(short, long, value_delimiter = ',')]
    scenarios: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    saa_risk: Option<f64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Out-of-sample draws per cell.
    #[arg(long)]
    oos: Option<usize>,
    #[arg(long, value_enum)]
    failures: Option<Failures>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Moisture {
    Low,
    Medium,
    High,
}

impl From<Moisture> for MoistureLevel {
    fn from(m: Moisture) -> Self {
        match m {
            Moisture::Low => MoistureLevel::Low,
            Moisture::Medium => MoistureLevel::Medium,
            Moisture::High => MoistureLevel::High,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Failures {
    None,
    Short,
    Long,
    Both,
}

impl From<Failures> for FailureMode {
    fn from(f: Failures) -> Self {
        match f {
            Failures::None => FailureMode::None,
            Failures::Short => FailureMode::Short,
            Failures::Long => FailureMode::Long,
            Failures::Both => FailureMode::Both,
        }
    }
}

struct Loaded {
    plant: Plant,
    seq: BaleSequence,
    gen: GenOptions,
}

impl Instance {
    fn load(&self) -> Result<Loaded> {
        let mut plant = match &self.plant {
            Some(p) => load_plant(p).with_context(|| format!("loading {}", p.display()))?,
            None => pdu_plant(),
        };
        if let Some(t) = self.target {
            plant.config.target_rate = plant.config.dt_per_hr_to_kg_per_period(t);
        }
        let horizon = self.horizon.unwrap_or(plant.config.horizon);
        let seq = BaleSequence::uniform(self.moisture.into(), horizon);
        Ok(Loaded { plant, seq, gen: GenOptions { noise: true, failures: self.failures.into() } })
    }

    fn draw(&self, l: &Loaded) -> Result<Vec<Scenario>> {
        Ok(generate_scenario_set(&l.plant, &l.seq, self.scenarios, self.seed, l.gen)?.scenarios)
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn solve(instance: &Instance, saa_risk: Option<f64>, output: &Path) -> Result<ExitCode> {
    let l = instance.load()?;
    let scenarios = instance.draw(&l)?;
    let params = BisectionParams { risk: saa_risk.unwrap_or(l.plant.config.saa_risk), ..Default::default() };
    let res = bisection_search(&l.plant, &l.seq, &scenarios, &params, BendersOptions::default())?;
    fs::create_dir_all(output)?;
    write_json(&output.join("first_stage.json"), &res.first)?;
    let cfg = &l.plant.config;
    let summary = serde_json::json!({
        "status": format!("{:?}", res.status),
        "scenarios": scenarios.len(),
        "seed": instance.seed,
        "risk": params.risk,
        "violated": res.violated,
        "penalty": res.penalty,
        "objective": res.objective,
        "mean_feed_dt_per_hr": cfg.kg_per_period_to_dt_per_hr(res.mean_feed),
        "target_dt_per_hr": cfg.kg_per_period_to_dt_per_hr(cfg.target_rate),
        "cost_usd_per_dt": res.true_cost,
        "initial_inventory_kg": res.first.initial_inventory,
        "steps": res.steps.iter().map(|s| serde_json::json!({
            "penalty": s.penalty, "violated": s.violated, "objective": s.objective, "iterations": s.benders_iterations,
        })).collect::<Vec<_>>(),
    });
    write_json(&output.join("summary.json"), &summary)?;
    println!(
        "{:?}: {} of {} scenarios short, mean feed {:.4} dt/hr, cost {}",
        res.status,
        res.violated,
        scenarios.len(),
        cfg.kg_per_period_to_dt_per_hr(res.mean_feed),
        res.true_cost.map_or("undefined".into(), |c| format!("{c:.3} $/dt")),
    );
    Ok(if res.status == SolveStatus::Feasible { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn evaluate(instance: &Instance, first_stage: &Path, risk: Option<f64>, output: Option<&Path>) -> Result<ExitCode> {
    let l = instance.load()?;
    let text = fs::read_to_string(first_stage).with_context(|| format!("reading {}", first_stage.display()))?;
    let first: FirstStage = serde_json::from_str(&text)?;
    let spec = OutOfSample { scenarios: instance.scenarios, seed: instance.seed, options: l.gen };
    let rep = out_of_sample_reliability(&l.plant, &l.seq, &first, &spec)?;
    let risk = risk.unwrap_or(l.plant.config.risk);
    if let Some(dir) = output {
        fs::create_dir_all(dir)?;
        let mut w = csv_writer(&dir.join("violations.csv"))?;
        use std::io::Write;
        writeln!(w, "node,kind,scenarios,events,magnitude_kg")?;
        for ((node, kind), t) in &rep.by_node {
            let kind = serde_json::to_value(kind)?;
            writeln!(w, "{},{},{},{},{:.6}", l.plant.graph.node(*node).id, kind.as_str().unwrap_or(""), t.scenarios, t.events, t.magnitude)?;
        }
    }
    let met = rep.reliability >= 1.0 - risk;
    println!(
        "reliability {:.4} over {} scenarios (required {:.4}: {}), bin violations in {:.2}%",
        rep.reliability,
        rep.scenarios,
        1.0 - risk,
        if met { "met" } else { "not met" },
        100.0 * rep.bin_violation_rate(),
    );
    Ok(if met { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn csv_writer(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn experiment(args: &ExperimentArgs) -> Result<ExitCode> {
    let mut spec = match (&args.spec, &args.study) {
        (Some(path), _) => ExperimentSpec::from_json(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?,
        (None, Some(study)) => ExperimentSpec::new(Study::parse(study)?, vec![100], 1, "results"),
        (None, None) => bail!("either --spec or --study is required"),
    };
    if args.spec.is_some() {
        if let Some(study) = &args.study {
            spec.study = Study::parse(study)?;
        }
    }
    if let Some(p) = &args.plant {
        spec.plant = Some(p.clone());
    }
    if let Some(s) = &args.scenarios {
        spec.scenarios = s.clone();
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.saa_risk = args.saa_risk.or(spec.saa_risk);
    spec.replications = args.replications.unwrap_or(spec.replications);
    spec.horizon = args.horizon.or(spec.horizon);
    spec.oos_scenarios = args.oos.unwrap_or(spec.oos_scenarios);
    spec.failures = args.failures.map(FailureMode::from).or(spec.failures);
    if let Some(o) = &args.output {
        spec.output = o.clone();
    }
    let report = run_experiment(&spec)?;
    for f in &report.manifest.failed {
        eprintln!("cell failed: {}: {}", f.cell, f.error);
    }
    println!(
        "{}: {} cells, {} failed, written to {}",
        spec.study.name(),
        report.manifest.cells,
        report.manifest.failed.len(),
        spec.output.display()
    );
    Ok(if report.complete() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn export_mps(instance: &Instance, penalty: f64, output: &Path) -> Result<ExitCode> {
    let l = instance.load()?;
    let scenarios = instance.draw(&l)?;
    let ef = build_extensive_form(&l.plant, &l.seq, &scenarios, penalty)?;
    write_mps(&ef.model, "FEEDLINE", csv_writer(output)?)?;
    println!("{} rows, {} columns written to {}", ef.model.rows.len(), ef.model.cols.len(), output.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve { instance, saa_risk, output } => solve(instance, *saa_risk, output),
        Command::Evaluate { instance, first_stage, risk, output } => evaluate(instance, first_stage, *risk, output.as_deref()),
        Command::Experiment(args) => experiment(args),
        Command::ExportMps { instance, penalty, output } => export_mps(instance, *penalty, output),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
