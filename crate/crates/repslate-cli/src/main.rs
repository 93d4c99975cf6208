//! Command-line interface: instance generation, process execution, axiom
//! verification, Monte Carlo experiments, assignment analysis, and report
//! rendering.
//!
//! Exit codes: 0 on success, 1 when a verification expected to pass finds a
//! violation, 2 on usage or input errors.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use repslate::axiom::{check_bjr_opts, check_jr, AxiomOptions, Verdict};
use repslate::builders::{
    build, default_levels, make_oracle, vc_dim_upper_bound, Built, ConstructionSpec,
};
use repslate::experiment::{
    impossibility_demo, overshadow_max_queries, pac_deviation_trials, sampled_bjr_success_rate,
    SamplingExperiment, SubsetPolicy, TrialReport,
};
use repslate::instance::{BalancedMatching, InstanceDoc, Slate, StatementId};
use repslate::llm::{assignment_total, balanced_assignment, ingest_pilot_data};
use repslate::process::{
    greedy_bjr, sampled_bjr, simulate_gen_by_subsets, ProcessRun, ResolvedSampling, SamplingParams,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "repslate",
    about = "Representative statement-slate selection: generate instances, run democratic \
             processes, verify representation axioms, and run experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an instance and write it as a versioned JSON document.
    GenInstance(GenInstanceArgs),
    /// Run a democratic process over an instance and write the run JSON.
    Run(RunArgs),
    /// Check a slate (and optionally a matching) against an axiom.
    Verify(VerifyArgs),
    /// Monte Carlo experiment harnesses.
    Experiment(ExperimentArgs),
    /// Balanced utility-maximizing assignment over pilot validation ratings.
    Assign(AssignArgs),
    /// Render a human-readable summary (and optional CSV) from a JSON output.
    Report(ReportArgs),
    /// Run a single model-backed query (scripted transport by default).
    Query(QueryArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Example1,
    Example2,
    SinglePopular,
    ColorOvershadow,
    Box,
    Random,
}

#[derive(Args)]
struct BuilderArgs {
    /// Which construction to build.
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Number of agents (constructions with free size).
    #[arg(long)]
    n: Option<usize>,
    /// Slate size.
    #[arg(long)]
    k: Option<usize>,
    /// Box spaces: dimensionality.
    #[arg(long, default_value_t = 2)]
    dims: usize,
    /// Box spaces: number of point clusters.
    #[arg(long, default_value_t = 4)]
    clusters: usize,
    /// Random instances: number of statements.
    #[arg(long, default_value_t = 8)]
    universe: usize,
    /// Random instances: comma-separated utility levels.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
}

impl BuilderArgs {
    fn to_spec(&self, seed: u64) -> Result<ConstructionSpec> {
        let need_n = || {
            self.n
                .ok_or_else(|| anyhow!("--n is required for this kind"))
        };
        let need_k = || {
            self.k
                .ok_or_else(|| anyhow!("--k is required for this kind"))
        };
        let kind = self
            .kind
            .ok_or_else(|| anyhow!("--kind is required (or pass --instance FILE)"))?;
        Ok(match kind {
            KindArg::Example1 => ConstructionSpec::Example1,
            KindArg::Example2 => ConstructionSpec::Example2,
            KindArg::SinglePopular => ConstructionSpec::SinglePopular {
                n: need_n()?,
                k: need_k()?,
            },
            KindArg::ColorOvershadow => ConstructionSpec::ColorOvershadow {
                n: need_n()?,
                k: need_k()?,
                seed,
            },
            KindArg::Box => ConstructionSpec::Box {
                n: need_n()?,
                k: need_k()?,
                dims: self.dims,
                clusters: self.clusters,
                seed,
            },
            KindArg::Random => ConstructionSpec::Random {
                n: need_n()?,
                k: need_k()?,
                universe: self.universe,
                levels: self.levels.clone().unwrap_or_else(default_levels),
                seed,
            },
        })
    }
}

#[derive(Args)]
struct GenInstanceArgs {
    #[command(flatten)]
    builder: BuilderArgs,
    /// Seed for seeded constructions; echoed into outputs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the instance JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProcessArg {
    Greedy,
    Sampled,
    SubsetSim,
}

#[derive(Args)]
struct RunArgs {
    /// Which process to run.
    #[arg(long, value_enum)]
    process: ProcessArg,
    /// Instance JSON produced by gen-instance (alternative: --kind ...).
    #[arg(long)]
    instance: Option<PathBuf>,
    #[command(flatten)]
    builder: BuilderArgs,
    /// Master seed of the run; echoed into the output.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the run JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also export the oracle transcript as CSV.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Sampled process: PAC constant C.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Sampled process: VC-dimension bound (defaults to the instance's).
    #[arg(long)]
    d: Option<usize>,
    /// Sampled process: failure probability.
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Sampled process: override the sample-size formula.
    #[arg(long)]
    nx_override: Option<usize>,
    /// Subset simulation: comma-separated agent ids.
    #[arg(long, value_delimiter = ',')]
    agents: Option<Vec<usize>>,
    /// Subset simulation: the rank to maximize (also the subset size).
    #[arg(long)]
    r: Option<usize>,
    /// Subset simulation: cap on the number of enumerated subsets.
    #[arg(long, default_value_t = 1_000_000)]
    cap: u128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Bjr,
    Jr,
}

#[derive(Args)]
struct VerifyArgs {
    /// Instance JSON.
    #[arg(long)]
    instance: PathBuf,
    /// Slate as comma-separated statement ids (alternative: --run).
    #[arg(long, value_delimiter = ',')]
    slate: Option<Vec<u64>>,
    /// Take slate and matching from a run JSON.
    #[arg(long)]
    run: Option<PathBuf>,
    /// JSON array of slate-slot indices, one per agent (overrides the
    /// run's matching).
    #[arg(long)]
    matching: Option<PathBuf>,
    /// Which axiom to check.
    #[arg(long, value_enum, default_value_t = ModeArg::Bjr)]
    mode: ModeArg,
    /// Restrict violation candidates to statements outside the slate.
    #[arg(long)]
    set_variant: bool,
    /// Ignore the run's matching and search balanced matchings instead.
    #[arg(long)]
    search_matching: bool,
    /// Cap for the balanced-matching search.
    #[arg(long)]
    search_cap: Option<usize>,
    /// Exit with code 1 if the axiom is violated (or undecided).
    #[arg(long)]
    expect_satisfied: bool,
    /// Write the verdict JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(subcommand)]
    which: ExperimentCommand,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Supremum deviation between sample and population covered fractions.
    Pac(PacArgs),
    /// Size-limited subset-greedy runs against adversarial constructions.
    Impossibility(ImpossibilityArgs),
    /// Success rate of the sampling process on box instances.
    Sampling(SamplingArgs),
}

#[derive(Args)]
struct PacArgs {
    /// Agents in the random instance.
    #[arg(long, default_value_t = 400)]
    n: usize,
    /// Statements in the random instance.
    #[arg(long, default_value_t = 8)]
    universe: usize,
    /// Seed of the instance itself.
    #[arg(long, default_value_t = 0)]
    instance_seed: u64,
    /// Comma-separated sample sizes; one report per size.
    #[arg(long, value_delimiter = ',', default_value = "50,200")]
    m: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    /// Master seed for the trials.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Random,
    SequentialBlocks,
}

#[derive(Args)]
struct ImpossibilityArgs {
    #[command(flatten)]
    builder: BuilderArgs,
    #[arg(long, value_enum, default_value_t = PolicyArg::Random)]
    policy: PolicyArg,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Cap on generative queries per run (defaults to the construction's
    /// theoretical budget for color-overshadow).
    #[arg(long)]
    budget: Option<usize>,
    /// Master seed for the trials.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args)]
struct SamplingArgs {
    #[command(flatten)]
    builder: BuilderArgs,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// VC-dimension bound (defaults to the built instance's).
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long)]
    nx_override: Option<usize>,
    /// Master seed for the trials.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args)]
struct AssignArgs {
    /// Directory with the pilot data files.
    #[arg(long)]
    data: PathBuf,
    /// Write the assignment JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// A run, report, or verdict JSON produced by this tool.
    #[arg(long)]
    input: PathBuf,
    /// Write per-row CSV here (runs: rounds; reports: trials).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum QueryKindArg {
    /// Predict one participant's rating of a statement.
    Disc,
    /// Ensemble-generate a statement for a set of participants.
    Gen,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long, value_enum)]
    query: QueryKindArg,
    /// Directory with the pilot data files (participants).
    #[arg(long)]
    data: PathBuf,
    /// Participant id (disc) or comma-separated ids (gen; empty = all).
    #[arg(long, value_delimiter = ',')]
    participants: Option<Vec<String>>,
    /// Statement text to rate (disc).
    #[arg(long)]
    statement: Option<String>,
    /// Rank r of the generative objective (gen).
    #[arg(long, default_value_t = 1)]
    r: usize,
    /// Recorded-exchange file for the scripted transport (the default mode).
    #[arg(long)]
    scripted: Option<PathBuf>,
    /// Query a live endpoint instead of the scripted transport.
    #[arg(long)]
    live: bool,
    /// Live mode: completions endpoint URL.
    #[arg(long, default_value = "https://api.openai.com/v1/completions")]
    endpoint: String,
    /// Live mode: environment variable holding the API key.
    #[arg(long, default_value = "REPSLATE_API_KEY")]
    api_key_env: String,
    /// Model name sent with each request.
    #[arg(long, default_value = "gpt-4-base")]
    model: String,
    /// Directory with prompt template overrides.
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Seed for the ensemble's subset draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// On-disk form of a process run.
#[derive(Debug, Serialize, Deserialize)]
struct RunDoc {
    version: u32,
    process: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<ResolvedSampling>,
    /// Present when the oracle fabricated statements during the run: the
    /// grown universe the slate refers to. `verify --run` prefers it over
    /// the original instance file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    materialized_instance: Option<InstanceDoc>,
    #[serde(flatten)]
    run: ProcessRun,
}

const RUN_DOC_VERSION: u32 = 1;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::GenInstance(args) => gen_instance(args),
        Command::Run(args) => run_process(args),
        Command::Verify(args) => verify(args),
        Command::Experiment(args) => experiment(args),
        Command::Assign(args) => assign(args),
        Command::Report(args) => report(args),
        Command::Query(args) => query(args),
    }
}

fn query(args: QueryArgs) -> Result<ExitCode> {
    use repslate::llm::{
        LlmAdapter, ParticipantRecord, ScriptedTransport, StatementPool, Transport,
    };

    let data = ingest_pilot_data(&args.data)?;
    let select = |ids: &Option<Vec<String>>| -> Result<Vec<&ParticipantRecord>> {
        match ids {
            None => Ok(data.participants.iter().collect()),
            Some(ids) if ids.is_empty() => Ok(data.participants.iter().collect()),
            Some(ids) => ids
                .iter()
                .map(|id| {
                    data.participants
                        .iter()
                        .find(|p| &p.id == id)
                        .ok_or_else(|| anyhow!("unknown participant id {id}"))
                })
                .collect(),
        }
    };

    let transport: Box<dyn Transport> = if args.live {
        Box::new(repslate::llm::LiveTransport::new(
            repslate::llm::LiveConfig {
                endpoint: args.endpoint.clone(),
                api_key_env: args.api_key_env.clone(),
                max_retries: 2,
            },
        )?)
    } else {
        match &args.scripted {
            Some(path) => Box::new(ScriptedTransport::from_file(path)?),
            None => Box::new(ScriptedTransport::new()),
        }
    };

    let mut adapter = LlmAdapter::new(transport);
    adapter.config.model = args.model.clone();
    if let Some(dir) = &args.prompts {
        adapter.assets = repslate::llm::PromptAssets::from_dir(dir)?;
    }

    match args.query {
        QueryKindArg::Disc => {
            let chosen = select(&args.participants)?;
            let participant = chosen
                .first()
                .ok_or_else(|| anyhow!("no participants in the data directory"))?;
            let statement = args
                .statement
                .as_deref()
                .ok_or_else(|| anyhow!("--statement is required for disc queries"))?;
            let mut pool = StatementPool::new();
            let value = adapter.disc(participant, statement, &mut pool)?;
            println!("{value}");
        }
        QueryKindArg::Gen => {
            let chosen = select(&args.participants)?;
            if chosen.is_empty() {
                bail!("no participants selected");
            }
            let mut pool = StatementPool::new();
            let mut rng = repslate::seed::rng_for(args.seed, "cli-gen-query", 0);
            let statement = adapter.gen_ensemble(&chosen, args.r, &mut pool, &mut rng)?;
            println!("{statement}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_doc(path: &Path) -> Result<Built> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading instance {}", path.display()))?;
    let doc: InstanceDoc = serde_json::from_str(&text)
        .with_context(|| format!("parsing instance {}", path.display()))?;
    Built::from_doc(&doc).context("rebuilding instance from document")
}

fn gen_instance(args: GenInstanceArgs) -> Result<ExitCode> {
    let spec = args.builder.to_spec(args.seed)?;
    let built = build(&spec)?;
    let mut doc = built.to_doc();
    doc.builder = Some(serde_json::to_value(&spec)?);
    write_json(&args.out, &doc)?;
    println!(
        "wrote instance: n={}, k={}, |U|={} -> {}",
        built.instance.n(),
        built.instance.k(),
        built.instance.num_statements(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn load_built(instance: &Option<PathBuf>, builder: &BuilderArgs, seed: u64) -> Result<Built> {
    match instance {
        Some(path) => read_doc(path),
        None if builder.kind.is_some() => Ok(build(&builder.to_spec(seed)?)?),
        None => bail!("provide --instance FILE or --kind ... builder flags"),
    }
}

fn run_process(args: RunArgs) -> Result<ExitCode> {
    let built = load_built(&args.instance, &args.builder, args.seed)?;
    let k = built.instance.k();
    let d_default = vc_dim_upper_bound(&built);
    let oracle_spec = built.oracle_spec.clone();
    let initial_statements = built.instance.num_statements();
    let mut oracle = make_oracle(built.instance, &oracle_spec, None)?;

    let (mut doc, chosen) = match args.process {
        ProcessArg::Greedy => {
            let mut run = greedy_bjr(oracle.as_mut(), k)?;
            run.rng_seed = args.seed;
            (
                RunDoc {
                    version: RUN_DOC_VERSION,
                    process: "greedy".into(),
                    params: None,
                    materialized_instance: None,
                    run,
                },
                None,
            )
        }
        ProcessArg::Sampled => {
            let params = SamplingParams {
                c: args.c,
                d: args.d.unwrap_or(d_default),
                delta: args.delta,
                n_x_override: args.nx_override,
                log_base: None,
            };
            let resolved = params.resolve(oracle.instance().n(), k)?;
            let run = sampled_bjr(oracle.as_mut(), k, &params, args.seed)?;
            (
                RunDoc {
                    version: RUN_DOC_VERSION,
                    process: "sampled".into(),
                    params: Some(resolved),
                    materialized_instance: None,
                    run,
                },
                None,
            )
        }
        ProcessArg::SubsetSim => {
            let agents = args
                .agents
                .clone()
                .ok_or_else(|| anyhow!("--agents is required for subset-sim"))?;
            let r = args
                .r
                .ok_or_else(|| anyhow!("--r is required for subset-sim"))?;
            let statement = simulate_gen_by_subsets(oracle.as_mut(), &agents, r, args.cap)?;
            (
                RunDoc {
                    version: RUN_DOC_VERSION,
                    process: "subset-sim".into(),
                    params: None,
                    materialized_instance: None,
                    run: ProcessRun {
                        slate: Slate::new(vec![statement]),
                        matching: BalancedMatching::new(vec![]),
                        rounds: vec![],
                        rng_seed: args.seed,
                        success: true,
                    },
                },
                Some(statement),
            )
        }
    };

    if oracle.instance().num_statements() > initial_statements {
        let grown = Built {
            instance: oracle.instance().clone(),
            oracle_spec,
        };
        doc.materialized_instance = Some(grown.to_doc());
    }
    if let Some(path) = &args.out {
        write_json(path, &doc)?;
        println!("wrote run -> {}", path.display());
    }
    if let Some(path) = &args.transcript {
        std::fs::write(path, oracle.transcript().to_csv())
            .with_context(|| format!("writing transcript {}", path.display()))?;
        println!("wrote transcript -> {}", path.display());
    }
    match chosen {
        Some(statement) => println!("chosen statement: {statement}"),
        None => {
            let ids: Vec<String> = doc
                .run
                .slate
                .members
                .iter()
                .map(|s| s.to_string())
                .collect();
            println!(
                "slate: [{}]  success: {}  seed: {}",
                ids.join(", "),
                doc.run.success,
                doc.run.rng_seed
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(args: VerifyArgs) -> Result<ExitCode> {
    let mut built = read_doc(&args.instance)?;

    let (slate, matching) = if let Some(path) = &args.run {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading run {}", path.display()))?;
        let doc: RunDoc = serde_json::from_str(&text)
            .with_context(|| format!("parsing run {}", path.display()))?;
        if let Some(materialized) = &doc.materialized_instance {
            built = Built::from_doc(materialized)
                .context("rebuilding the run's materialized universe")?;
        }
        (doc.run.slate, Some(doc.run.matching))
    } else if let Some(ids) = &args.slate {
        let slate = Slate::new(ids.iter().map(|&i| StatementId(i)).collect());
        (slate, None)
    } else {
        bail!("provide --slate ids or --run FILE");
    };
    let instance = &built.instance;
    let matching = match &args.matching {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading matching {}", path.display()))?;
            let slots: Vec<usize> = serde_json::from_str(&text)
                .with_context(|| format!("parsing matching {}", path.display()))?;
            Some(BalancedMatching::new(slots))
        }
        None => matching,
    };

    let opts = AxiomOptions {
        exclude_slate_statements: args.set_variant,
    };

    #[derive(Serialize)]
    struct VerdictDoc {
        mode: String,
        slate: Vec<StatementId>,
        verdict: serde_json::Value,
    }

    let (ok, verdict_value, human) = match args.mode {
        ModeArg::Jr => match check_jr(instance, &slate)? {
            None => (
                true,
                serde_json::json!({"verdict": "satisfied"}),
                "satisfied".to_string(),
            ),
            Some(v) => (
                false,
                serde_json::json!({"verdict": "violated", "violation": v}),
                format!(
                    "violated: coalition of {} agents on statement {} at threshold {}",
                    v.coalition.len(),
                    v.statement,
                    v.theta
                ),
            ),
        },
        ModeArg::Bjr => {
            let matching = if args.search_matching { None } else { matching };
            let verdict =
                check_bjr_opts(instance, &slate, matching.as_ref(), args.search_cap, opts)?;
            let ok = matches!(verdict, Verdict::Satisfied { .. });
            let human = match &verdict {
                Verdict::Satisfied { .. } => "satisfied".to_string(),
                Verdict::Violated { violation } => format!(
                    "violated: coalition of {} agents on statement {} at threshold {}",
                    violation.coalition.len(),
                    violation.statement,
                    violation.theta
                ),
                Verdict::Undecided { reason } => format!("undecided: {reason}"),
            };
            (ok, serde_json::to_value(&verdict)?, human)
        }
    };

    if let Some(path) = &args.out {
        write_json(
            path,
            &VerdictDoc {
                mode: format!("{:?}", args.mode).to_lowercase(),
                slate: slate.members.clone(),
                verdict: verdict_value,
            },
        )?;
    }
    println!("{human}");
    if args.expect_satisfied && !ok {
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn write_report_outputs(
    report: &TrialReport,
    out_csv: &Option<PathBuf>,
    out_json: &Option<PathBuf>,
) -> Result<()> {
    if let Some(path) = out_csv {
        std::fs::write(path, report.to_csv())
            .with_context(|| format!("writing {}", path.display()))?;
        println!("wrote trial CSV -> {}", path.display());
    }
    if let Some(path) = out_json {
        write_json(path, report)?;
        println!("wrote report JSON -> {}", path.display());
    }
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<ExitCode> {
    match args.which {
        ExperimentCommand::Pac(a) => {
            let built = build(&ConstructionSpec::Random {
                n: a.n,
                k: 2,
                universe: a.universe,
                levels: default_levels(),
                seed: a.instance_seed,
            })?;
            for &m in &a.m {
                let report = pac_deviation_trials(&built.instance, m, a.trials, a.seed)?;
                let med = report.summary.median_deviation.unwrap_or(f64::NAN);
                let mean = report.summary.mean_deviation.unwrap_or(f64::NAN);
                println!(
                    "m={m}: median deviation {med:.4}, mean {mean:.4} over {} trials",
                    a.trials
                );
                let suffix = |p: &PathBuf| {
                    let mut q = p.clone();
                    q.set_file_name(format!(
                        "{}_m{m}.{}",
                        p.file_stem().and_then(|s| s.to_str()).unwrap_or("pac"),
                        p.extension().and_then(|s| s.to_str()).unwrap_or("out")
                    ));
                    q
                };
                write_report_outputs(
                    &report,
                    &a.out_csv.as_ref().map(suffix),
                    &a.out_json.as_ref().map(suffix),
                )?;
            }
            Ok(ExitCode::SUCCESS)
        }
        ExperimentCommand::Impossibility(a) => {
            let spec = a.builder.to_spec(a.seed)?;
            let policy = match a.policy {
                PolicyArg::Random => SubsetPolicy::Random,
                PolicyArg::SequentialBlocks => SubsetPolicy::SequentialBlocks,
            };
            let budget = a.budget.or(match &spec {
                ConstructionSpec::ColorOvershadow { n, k, .. } => {
                    Some(overshadow_max_queries(*n, *k))
                }
                _ => None,
            });
            let report = impossibility_demo(&spec, policy, a.trials, a.seed, budget)?;
            println!(
                "violation rate: {:.4} over {} trials{}",
                report.summary.violation_rate.unwrap_or(f64::NAN),
                a.trials,
                budget
                    .map(|b| format!(" (budget {b} generative queries)"))
                    .unwrap_or_default()
            );
            write_report_outputs(&report, &a.out_csv, &a.out_json)?;
            Ok(ExitCode::SUCCESS)
        }
        ExperimentCommand::Sampling(a) => {
            let spec = a.builder.to_spec(a.seed)?;
            let built = build(&spec)?;
            let d = a.d.unwrap_or_else(|| vc_dim_upper_bound(&built));
            let exp = SamplingExperiment {
                spec,
                params: SamplingParams {
                    c: a.c,
                    d,
                    delta: a.delta,
                    n_x_override: a.nx_override,
                    log_base: None,
                },
                trials: a.trials,
            };
            let report = sampled_bjr_success_rate(&exp, a.seed)?;
            println!(
                "success rate: {:.4} over {} trials",
                report.summary.success_rate.unwrap_or(f64::NAN),
                a.trials
            );
            write_report_outputs(&report, &a.out_csv, &a.out_json)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn assign(args: AssignArgs) -> Result<ExitCode> {
    let data = ingest_pilot_data(&args.data)?;
    let ratings = data.validation.dense_matrix()?;
    let n = data.validation.participants.len();
    let k = data.validation.statements.len();
    if n == 0 || k == 0 {
        bail!("validation table is empty");
    }
    let matching = balanced_assignment(&ratings, n, k)?;
    let total = assignment_total(&ratings, &matching);

    // distribution of assigned-statement ratings over the levels 0..=4
    let mut counts = [0usize; 5];
    let mut none_higher = true;
    for (i, &slot) in matching.slots.iter().enumerate() {
        let assigned = ratings[i][slot];
        counts[assigned as usize] += 1;
        let best = ratings[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if best > assigned {
            none_higher = false;
        }
    }
    let fractions: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();

    #[derive(Serialize)]
    struct AssignDoc {
        version: u32,
        participants: Vec<String>,
        statements: Vec<String>,
        /// statement slot per participant, aligned with `participants`
        matching: Vec<usize>,
        total_rating: f64,
        /// fraction of participants per rating level of their assignment
        rating_distribution: Vec<f64>,
        /// no participant rates another statement above their assignment
        no_higher_rating_elsewhere: bool,
    }

    let doc = AssignDoc {
        version: 1,
        participants: data.validation.participants.clone(),
        statements: data.validation.statements.clone(),
        matching: matching.slots.clone(),
        total_rating: total,
        rating_distribution: fractions.clone(),
        no_higher_rating_elsewhere: none_higher,
    };
    if let Some(path) = &args.out {
        write_json(path, &doc)?;
        println!("wrote assignment -> {}", path.display());
    }
    let labels = ["not at all", "poorly", "somewhat", "mostly", "perfectly"];
    for level in (0..5).rev() {
        println!(
            "{:>10}: {:5.1}%  ({} participants)",
            labels[level],
            fractions[level] * 100.0,
            counts[level]
        );
    }
    println!(
        "total rating: {total}; assignment binding: {}",
        if none_higher { "no" } else { "yes" }
    );
    Ok(ExitCode::SUCCESS)
}

fn report(args: ReportArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.input.display()))?;

    if value.get("rows").is_some() && value.get("summary").is_some() {
        let report: TrialReport = serde_json::from_value(value)?;
        println!(
            "experiment: {} ({} trials, master seed {})",
            report.experiment, report.summary.trials, report.master_seed
        );
        if let Some(r) = report.summary.violation_rate {
            println!("violation rate: {r:.4}");
        }
        if let Some(r) = report.summary.success_rate {
            println!("success rate: {r:.4}");
        }
        if let Some(m) = report.summary.median_deviation {
            println!("median deviation: {m:.4}");
        }
        if let Some(path) = &args.csv {
            std::fs::write(path, report.to_csv())?;
            println!("wrote CSV -> {}", path.display());
        }
    } else if value.get("slate").is_some() {
        let doc: RunDoc = serde_json::from_value(value)?;
        println!(
            "process: {} (seed {}, success {})",
            doc.process, doc.run.rng_seed, doc.run.success
        );
        for round in &doc.run.rounds {
            println!(
                "round {}: statement {} quota {} removed {} agents{}",
                round.round,
                round.statement,
                round.quota,
                round.removed.len(),
                if round.fallback { " (fallback)" } else { "" }
            );
        }
        let ids: Vec<String> = doc
            .run
            .slate
            .members
            .iter()
            .map(|s| s.to_string())
            .collect();
        println!("slate: [{}]", ids.join(", "));
        if let Some(path) = &args.csv {
            let mut csv = String::from("round,quota,statement,removed,theta,fallback\n");
            for r in &doc.run.rounds {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.round,
                    r.quota,
                    r.statement,
                    r.removed.len(),
                    r.theta.map(|t| t.to_string()).unwrap_or_default(),
                    r.fallback
                ));
            }
            std::fs::write(path, csv)?;
            println!("wrote CSV -> {}", path.display());
        }
    } else {
        println!("{}", serde_json::to_string_pretty(&value)?);
    }
    Ok(ExitCode::SUCCESS)
}
