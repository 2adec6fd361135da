//! Operator entry point: validate blueprints, run them under a policy,
//! inject faults, plan task specs, and render deliverables.
//!
//! Exit codes: 0 on success (for `run`, full completion), 1 for an
//! incomplete run or failed validation, 2 for usage and pre-run errors.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use acp_core::blueprint::ExecutionBlueprint;
use acp_core::coordinator;
use acp_core::fault::{FaultHandler, ReroutePolicy};
use acp_core::planner::{
    self, CommandPlanAdapter, PlanAdapter, StubPlanAdapter, TaskSpec,
};
use acp_core::scheduler::{ExecutionMode, ExecutionPolicy, Runner};
use acp_core::tools::inject::{inject, FaultPlan, MarkerRelevance};
use acp_core::tools::mock::{CalculatorTool, KvTool};
use acp_core::tools::{ToolAdapter, ToolRegistry};

#[derive(Parser)]
#[command(
    name = "acp",
    about = "Execute multi-agent workflow blueprints with structured fault handling",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a blueprint file; exit 0 when valid.
    Validate(ValidateArgs),
    /// Execute a blueprint and write trace/report/state files.
    Run(RunArgs),
    /// Render a deliverable from an exported run state and a template.
    Render(RenderArgs),
    /// Produce a task spec for a goal via a plan adapter.
    Plan(PlanArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Blueprint JSON file.
    blueprint: PathBuf,
    /// Fixture directory; when given, node tools are checked against the
    /// registry built from it.
    #[arg(long)]
    fixtures: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Blueprint JSON file.
    blueprint: PathBuf,
    /// Execution mode.
    #[arg(long, value_parser = parse_mode, default_value = "fullacp")]
    mode: ExecutionMode,
    /// Maximum concurrent node executions.
    #[arg(long, default_value_t = 2)]
    workers: usize,
    /// Seed recorded in the trace and report for replay.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fault plan JSON file.
    #[arg(long)]
    faults: Option<PathBuf>,
    /// Directory of kv fixture files (one tool per file).
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Reroute policy JSON file (alternatives and insertion recipes).
    #[arg(long)]
    reroute: Option<PathBuf>,
    /// Per-node timeout in milliseconds.
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
    /// Write the JSON trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the final run state (blueprint + store) here, for `render`.
    #[arg(long)]
    state: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Run state JSON exported by `run --state`.
    state: PathBuf,
    /// Markdown template with {{node_id.output_name}} slots.
    template: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    /// The goal to decompose.
    goal: String,
    /// Adapter: `stub:<file>` returns the file contents; `command:<path>`
    /// runs a program (goal as argv[1], catalog JSON on stdin).
    #[arg(long)]
    adapter: String,
    /// Fixture directory defining the capability catalog.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Write the task spec here; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also compile the spec and write the blueprint here.
    #[arg(long)]
    blueprint_out: Option<PathBuf>,
}

fn parse_mode(text: &str) -> Result<ExecutionMode, String> {
    match text {
        "fullacp" => Ok(ExecutionMode::FullAcp),
        "noassist" => Ok(ExecutionMode::NoAssistance),
        "single" => Ok(ExecutionMode::SingleAgent),
        other => Err(format!(
            "unknown mode `{other}`; expected fullacp, noassist, or single"
        )),
    }
}

fn init_logging() {
    let level = match std::env::var("ACP_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("trace") => log::LevelFilter::Trace,
        _ => log::LevelFilter::Info,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
}

fn main() {
    init_logging();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            2
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Validate(args) => cmd_validate(args),
        Command::Run(args) => cmd_run(args),
        Command::Render(args) => cmd_render(args),
        Command::Plan(args) => cmd_plan(args),
    }
}

/// Build the registry: the calculator plus one kv tool per fixture file,
/// all wrapped by the fault plan when one is given.
fn build_registry(fixtures: Option<&Path>, plan: &FaultPlan) -> Result<Arc<ToolRegistry>> {
    let mut registry = ToolRegistry::new();
    let mut adapters: Vec<Arc<dyn ToolAdapter>> = vec![Arc::new(CalculatorTool::new())];
    if let Some(dir) = fixtures {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .with_context(|| format!("cannot read fixture directory {}", dir.display()))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let tool = KvTool::from_fixture_file(&path)
                .map_err(|e| anyhow::anyhow!("{}", e.message))?;
            adapters.push(Arc::new(tool));
        }
    }
    for adapter in adapters {
        let wrapped = if plan.is_empty() {
            adapter
        } else {
            inject(plan.clone(), adapter)
        };
        let name = wrapped.schema().name.clone();
        registry
            .register(wrapped)
            .with_context(|| format!("registering tool `{name}`"))?;
    }
    Ok(Arc::new(registry))
}

fn cmd_validate(args: ValidateArgs) -> Result<i32> {
    let violations = planner::check_blueprint(&args.blueprint)?;
    let mut count = violations.len();
    for violation in &violations {
        eprintln!("invalid: {violation}");
    }
    if let Some(fixtures) = &args.fixtures {
        if let Ok(blueprint) = planner::load_blueprint(&args.blueprint) {
            let registry = build_registry(Some(fixtures), &FaultPlan::empty())?;
            for node in blueprint.nodes() {
                if !registry.contains(&node.tool) {
                    eprintln!(
                        "invalid: node `{}` references unregistered tool `{}`",
                        node.id, node.tool
                    );
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        println!("ok: {} is a valid blueprint", args.blueprint.display());
        Ok(0)
    } else {
        Ok(1)
    }
}

fn cmd_run(args: RunArgs) -> Result<i32> {
    let blueprint = planner::load_blueprint(&args.blueprint)
        .with_context(|| format!("loading {}", args.blueprint.display()))?;
    let plan = match &args.faults {
        Some(path) => FaultPlan::load(path).map_err(|e| anyhow::anyhow!("{}", e.message))?,
        None => FaultPlan::empty(),
    };
    let reroute = match &args.reroute {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            ReroutePolicy::from_json(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => ReroutePolicy::default(),
    };
    let registry = build_registry(args.fixtures.as_deref(), &plan)?;
    let policy = ExecutionPolicy::new(args.mode)
        .with_workers(args.workers)
        .with_seed(args.seed)
        .with_timeout(Duration::from_millis(args.timeout_ms));
    let handler = FaultHandler::new(reroute, Arc::clone(&registry));
    let mut runner = Runner::new(registry, policy, handler);
    if plan.has_garbage() {
        runner = runner.with_relevance(Arc::new(MarkerRelevance));
    }

    let outcome = runner.run(blueprint)?;

    if let Some(path) = &args.trace {
        std::fs::write(path, outcome.trace.to_json_string())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.report {
        std::fs::write(
            path,
            serde_json::to_string_pretty(&outcome.report)?,
        )
        .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.state {
        std::fs::write(path, outcome.blueprint.to_state_json())
            .with_context(|| format!("writing {}", path.display()))?;
    }

    if std::env::var("ACP_LOG").as_deref() != Ok("quiet") {
        print!("{}", outcome.trace.render_timeline());
        println!(
            "succeeded {} / failed {} / skipped {} of {} nodes; completion rate {:.2}; {} ms",
            outcome.report.succeeded,
            outcome.report.failed,
            outcome.report.skipped,
            outcome.report.total,
            outcome.report.completion_rate,
            outcome.report.wall_ms
        );
    }
    Ok(if outcome.report.completion_rate == 1.0 { 0 } else { 1 })
}

fn cmd_render(args: RenderArgs) -> Result<i32> {
    let state_text = std::fs::read_to_string(&args.state)
        .with_context(|| format!("reading {}", args.state.display()))?;
    let blueprint = ExecutionBlueprint::from_state_json(&state_text)
        .with_context(|| format!("parsing {}", args.state.display()))?;
    let template = std::fs::read_to_string(&args.template)
        .with_context(|| format!("reading {}", args.template.display()))?;
    let deliverable = match coordinator::aggregate(&blueprint, &template) {
        Ok(deliverable) => deliverable,
        Err(err) => {
            eprintln!("invalid: {err}");
            return Ok(1);
        }
    };
    match &args.out {
        Some(path) => std::fs::write(path, deliverable)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{deliverable}"),
    }
    Ok(0)
}

fn cmd_plan(args: PlanArgs) -> Result<i32> {
    let registry = build_registry(args.fixtures.as_deref(), &FaultPlan::empty())?;
    let catalog: Vec<acp_core::tools::ToolSchema> = registry
        .tool_names()
        .filter_map(|name| registry.schema(name).cloned())
        .collect();
    let adapter: Box<dyn PlanAdapter> = match args.adapter.split_once(':') {
        Some(("stub", path)) => Box::new(StubPlanAdapter {
            text: std::fs::read_to_string(path)
                .with_context(|| format!("reading stub plan {path}"))?,
        }),
        Some(("command", path)) => Box::new(CommandPlanAdapter {
            program: PathBuf::from(path),
        }),
        _ => bail!("--adapter must be `stub:<file>` or `command:<path>`"),
    };
    let spec: TaskSpec = planner::plan_via_adapter(&args.goal, &catalog, adapter.as_ref())?;
    let spec_json = serde_json::to_string_pretty(&spec)?;
    match &args.out {
        Some(path) => std::fs::write(path, &spec_json)
            .with_context(|| format!("writing {}", path.display()))?,
        None => println!("{spec_json}"),
    }
    if let Some(path) = &args.blueprint_out {
        let blueprint = planner::compile(&spec)?;
        std::fs::write(path, planner::emit_blueprint(&blueprint))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(0)
}
