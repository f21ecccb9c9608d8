use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use platoon_cull::report::{self, PlanChoice, RunInputs, RunOptions, VerifyMode, DEFAULT_VERIFY_SAMPLES};
use platoon_cull::{FeatureConfig, NetworkSpec, RoadNetwork, Scenario, ScenarioConfig, StagePlan};

/// Finds truck pairs that can platoon, culling impossible pairs first.
#[derive(Parser)]
#[command(name = "platoon-cull", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cull, verify the survivors exactly and write a report.
    Run(RunArgs),
    /// Write the exact set of platooning pairs as CSV.
    Truth(TruthArgs),
    /// Time each phase and write bench.csv.
    Bench(BenchArgs),
    /// Generate a scenario and write its network, assignments and features.
    Gen(GenArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Scenario config (JSON). Without it and without --network, the built-in continental scenario is used.
    #[arg(long, conflicts_with_all = ["network", "assignments"])]
    scenario: Option<PathBuf>,
    /// Network file (JSON).
    #[arg(long, requires = "assignments")]
    network: Option<PathBuf>,
    /// Assignment file (JSON).
    #[arg(long, requires = "network")]
    assignments: Option<PathBuf>,
    /// Feature config (JSON); defaults to the 13 projections plus 100 orientation cells.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Minimum shared distance in km; defaults to the scenario value, or 20.
    #[arg(long)]
    l_min_km: Option<f64>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario assignment count.
    #[arg(long = "K", alias = "k")]
    k: Option<usize>,
}

#[derive(Args)]
struct PlanArgs {
    /// `greedy` or a plan file (JSON with a "stages" list).
    #[arg(long, default_value = "greedy")]
    plan: String,
    /// Number of greedy stages.
    #[arg(long, default_value_t = 6)]
    stages: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyArg {
    Sample,
    Full,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    plan: PlanArgs,
    /// Also check culled pairs: a random sample, or all of them with `full`.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "sample")]
    verify: Option<VerifyArg>,
    /// Size of the culled-pair sample.
    #[arg(long, default_value_t = DEFAULT_VERIFY_SAMPLES)]
    verify_samples: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TruthArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "K", alias = "k")]
    k: Option<usize>,
    #[arg(long)]
    l_min_km: Option<f64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

const DEFAULT_SEED: u64 = 1;
const DEFAULT_L_MIN_KM: f64 = 20.0;

fn load_scenario(path: Option<&Path>, seed: Option<u64>, k: Option<usize>) -> Result<ScenarioConfig> {
    let mut cfg = match path {
        Some(p) => {
            let mut cfg = ScenarioConfig::load(p).with_context(|| format!("loading scenario {}", p.display()))?;
            if let NetworkSpec::File { path: net } = &mut cfg.network {
                if net.is_relative() {
                    *net = p.parent().unwrap_or(Path::new("")).join(&*net);
                }
            }
            cfg
        }
        None => ScenarioConfig::continental(DEFAULT_SEED),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(k) = k {
        cfg.k = k;
    }
    Ok(cfg)
}

fn resolve(args: &InputArgs) -> Result<(RunInputs<f64>, f64)> {
    let (network, assignments, v_max, seed, scenario_l_min) = match (&args.network, &args.assignments) {
        (Some(net_path), Some(asg_path)) => {
            if args.seed.is_some() || args.k.is_some() {
                bail!("--seed and --K apply to generated scenarios, not to --network/--assignments");
            }
            let network = RoadNetwork::<f64>::load(net_path)
                .with_context(|| format!("loading network {}", net_path.display()))?;
            let (v_max, list) = platoon_cull::load_assignments(asg_path, &network)
                .with_context(|| format!("loading assignments {}", asg_path.display()))?;
            (network, list, v_max, None, None)
        }
        _ => {
            let cfg = load_scenario(args.scenario.as_deref(), args.seed, args.k)?;
            let sc = Scenario::<f64>::generate(&cfg).context("generating scenario")?;
            let v_max = sc.v_max();
            (sc.network, sc.assignments, v_max, Some(cfg.seed), Some(cfg.l_min_km))
        }
    };
    let l_min = args.l_min_km.or(scenario_l_min).unwrap_or(DEFAULT_L_MIN_KM);
    let features = match &args.features {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading features {}", p.display()))?;
            FeatureConfig::from_json(&text).with_context(|| format!("parsing features {}", p.display()))?
        }
        None => FeatureConfig::standard(l_min),
    };
    Ok((RunInputs { network, assignments, v_max, features, seed }, l_min))
}

fn load_plan(path: &str) -> Result<StagePlan> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading plan {path}"))?;
    StagePlan::from_json(&text).with_context(|| format!("parsing plan {path}"))
}

fn plan_choice(args: &PlanArgs) -> Result<PlanChoice> {
    Ok(match args.plan.as_str() {
        "greedy" => PlanChoice::Greedy { stages: args.stages },
        path => PlanChoice::Fixed(load_plan(path)?),
    })
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let (inputs, l_min) = resolve(&args.input)?;
    let verify = match args.verify {
        None => VerifyMode::Survivors,
        Some(VerifyArg::Sample) => VerifyMode::Sample(args.verify_samples),
        Some(VerifyArg::Full) => VerifyMode::Full,
    };
    let opts = RunOptions {
        plan: plan_choice(&args.plan)?,
        verify,
        l_min_km: l_min,
        seed: inputs.seed.unwrap_or(DEFAULT_SEED),
    };
    let outcome = report::run(&inputs, &opts).context("run failed")?;
    outcome.write(&args.out_dir).with_context(|| format!("writing results to {}", args.out_dir.display()))?;

    let r = &outcome.report;
    println!("K = {}, feasible = {}, all pairs = {}", r.k, r.feasible, r.all_pairs);
    for (k, e) in r.stage_log.iter().enumerate() {
        println!("{k:>3}  {:<10} {:>10}", e.label, e.survivors);
    }
    println!(
        "candidates = {}, platooning pairs = {}, false positives = {}",
        r.final_candidates, r.ground_truth, r.false_positives
    );
    if r.culled_pairs_checked > 0 {
        println!("checked {} culled pairs ({}): none platoon", r.culled_pairs_checked, r.verification);
    }
    Ok(())
}

fn cmd_truth(args: TruthArgs) -> Result<()> {
    let (inputs, l_min) = resolve(&args.input)?;
    let truth = report::truth(&inputs, l_min)?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let path = args.out_dir.join("truth.csv");
    std::fs::write(&path, report::truth_csv(&truth)?).with_context(|| format!("writing {}", path.display()))?;
    println!("{} platooning pairs written to {}", truth.len(), path.display());
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let (inputs, l_min) = resolve(&args.input)?;
    let plan = match plan_choice(&args.plan)? {
        PlanChoice::Fixed(p) => Some(p),
        PlanChoice::Greedy { .. } => None,
    };
    let rows = report::bench(&inputs, plan.as_ref(), l_min, args.reps)?;
    let csv = report::bench_csv(&rows)?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let path = args.out_dir.join("bench.csv");
    std::fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
    print!("{csv}");
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let mut cfg = load_scenario(args.scenario.as_deref(), args.seed, args.k)?;
    if let Some(l) = args.l_min_km {
        cfg.l_min_km = l;
    }
    cfg.validate()?;
    let sc = Scenario::<f64>::generate(&cfg).context("generating scenario")?;
    let (net, asg) = sc.save(&args.out_dir).with_context(|| format!("writing to {}", args.out_dir.display()))?;
    let features = args.out_dir.join("features.json");
    std::fs::write(&features, FeatureConfig::standard(cfg.l_min_km).to_json())
        .with_context(|| format!("writing {}", features.display()))?;
    let scenario = args.out_dir.join("scenario.json");
    std::fs::write(&scenario, cfg.to_json()).with_context(|| format!("writing {}", scenario.display()))?;
    println!(
        "{} nodes, {} edges, {} assignments -> {}, {}",
        sc.network.node_count(),
        sc.network.edge_count(),
        sc.assignments.len(),
        net.display(),
        asg.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(a) => cmd_run(a),
        Command::Truth(a) => cmd_truth(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Gen(a) => cmd_gen(a),
    }
}
