//! `coreplan`: plan, run and compare core counts for PPR query batches.
//!
//! Machine-readable output goes to stdout (and to `--out DIR`), human
//! summaries to stderr. Exit codes: 0 success, 1 usage or validation,
//! 2 infeasible deadline, 3 resource gate, 4 deadline missed at execution.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use coreplan::manifest::{self, Algorithm, RunManifest, EXIT_DEADLINE_MISSED};
use coreplan::planner::{self, Plan, SamplePolicy};
use coreplan::workload::SyntheticWorkload;
use coreplan::{Error, Result};

#[derive(Parser)]
#[command(name = "coreplan", version, about = "Minimum cores for PPR query batches under a deadline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Preprocess a sample and print the slot plan.
    Plan(RunArgs),
    /// Plan and execute, then check the deadline.
    Run {
        #[command(flatten)]
        args: RunArgs,
        /// Execute a plan written by `plan` instead of planning again.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Compare planned cores with the Hoeffding baseline for each query count.
    Baseline(RunArgs),
    /// Run a single PPR query and print the top targets.
    Ppr {
        #[command(flatten)]
        args: RunArgs,
        #[arg(long)]
        source: u32,
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
    /// Turn run reports into a plot-ready CSV.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Ideal,
    Real,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Load all run settings from a manifest JSON file.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Treat the edge list as directed (default: undirected).
    #[arg(long)]
    directed: bool,
    /// Synthetic workload: constant:T | uniform:LO,HI | lognormal:MU,SIGMA,T_HAT.
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    /// Query count, or a comma-separated list for `baseline`.
    #[arg(long, value_delimiter = ',')]
    queries: Vec<usize>,
    #[arg(long)]
    query_file: Option<PathBuf>,
    /// Deadline in seconds.
    #[arg(long)]
    deadline: Option<f64>,
    #[arg(long)]
    cmax: Option<usize>,
    /// Scaling factor, or a comma-separated list for `baseline`.
    #[arg(long, value_delimiter = ',')]
    d: Vec<f64>,
    /// Preprocessing cores.
    #[arg(long, default_value_t = 1)]
    c: usize,
    #[arg(long, conflicts_with = "z")]
    confidence: Option<u32>,
    #[arg(long)]
    z: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 0.05)]
    e: f64,
    /// cochran | fraction=F | count=N
    #[arg(long, default_value = "cochran")]
    sample_policy: String,
    #[arg(long, default_value_t = coreplan::ppr::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = coreplan::ppr::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    pf: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    omega: Option<u64>,
    #[arg(long, default_value_t = 2.0)]
    t_hat_factor: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulate in virtual time instead of running queries.
    #[arg(long = "virtual")]
    virtual_time: bool,
    #[arg(long, value_enum, default_value = "real")]
    algorithm: AlgorithmArg,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    /// Pin workers to cores where the platform allows it.
    #[arg(long)]
    pin_cores: bool,
    #[arg(long, default_value_t = 1_000)]
    cost_base_ns: u64,
    #[arg(long, default_value_t = 10)]
    cost_per_unit_ns: u64,
    /// Directory for plan.json, report.json, trace.csv, baseline.csv, manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn manifest(&self) -> Result<RunManifest> {
        if let Some(path) = &self.manifest {
            return RunManifest::load(path);
        }
        let z = match (self.z, self.confidence) {
            (Some(z), _) => z,
            (None, Some(level)) => planner::z_for_confidence(level)?,
            (None, None) => planner::z_for_confidence(99)?,
        };
        let synthetic = self
            .synthetic
            .as_deref()
            .map(str::parse::<SyntheticWorkload>)
            .transpose()?;
        Ok(RunManifest {
            dataset: self.dataset.clone(),
            graph: self.graph.clone(),
            directed: self.directed,
            synthetic,
            query_file: self.query_file.clone(),
            queries: self.queries.clone(),
            deadline: self.deadline.unwrap_or(0.0),
            c_max: self.cmax,
            d: if self.d.is_empty() { vec![1.0] } else { self.d.clone() },
            c: self.c,
            z,
            p: self.p,
            e: self.e,
            sample_policy: self.sample_policy.parse::<SamplePolicy>()?,
            alpha: self.alpha,
            epsilon: self.epsilon,
            delta: self.delta,
            p_f: self.pf,
            r_max: self.r_max,
            omega: self.omega,
            t_hat_factor: self.t_hat_factor,
            seed: self.seed,
            virtual_time: self.virtual_time,
            algorithm: match self.algorithm {
                AlgorithmArg::Ideal => Algorithm::Ideal,
                AlgorithmArg::Real => Algorithm::Real,
            },
            max_retries: self.max_retries,
            pin_cores: self.pin_cores,
            cost_base_ns: self.cost_base_ns,
            cost_per_unit_ns: self.cost_per_unit_ns,
        })
    }

    fn out_dir(&self) -> Result<Option<&Path>> {
        if let Some(dir) = &self.out {
            std::fs::create_dir_all(dir)?;
        }
        Ok(self.out.as_deref())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Plan(args) => plan(&args),
        Command::Run { args, plan } => run(&args, plan.as_deref()),
        Command::Baseline(args) => baseline(&args),
        Command::Ppr { args, source, top } => ppr(&args, source, top),
        Command::Report { reports } => report(&reports),
    }
}

fn plan(args: &RunArgs) -> Result<i32> {
    let m = args.manifest()?;
    let out = manifest::cmd_plan(&m)?;
    let p = &out.plan;
    let st = &out.stats;
    eprintln!(
        "s={} t_max={:.6}s t_pre={:.6}s t_avg={:.6}s ell={} k={} required_cores={} lemma1={:.4} hoeffding={}",
        p.s,
        st.t_max(),
        st.t_pre(),
        st.t_avg(),
        p.ell,
        p.k,
        p.required_cores,
        p.bounds.lemma1,
        p.bounds.hoeffding.map_or("-".into(), |h| format!("{h:.4}")),
    );
    let json = manifest::to_json(p)?;
    if let Some(dir) = args.out_dir()? {
        std::fs::write(dir.join("plan.json"), &json)?;
        m.save(&dir.join("manifest.json"))?;
    }
    print!("{json}");
    Ok(0)
}

fn run(args: &RunArgs, plan_path: Option<&Path>) -> Result<i32> {
    let m = args.manifest()?;
    let plan: Option<Plan> = match plan_path {
        Some(p) => Some(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        None => None,
    };
    let (report, exec) = manifest::cmd_run(&m, plan.as_ref())?;
    let r = &report.execution;
    eprintln!(
        "k={} ell={} check={:.6}s deadline={}s elapsed={:.6}s feasible={} retries={}",
        report.k, report.ell, r.check_value, r.deadline, r.total_elapsed, r.feasible, r.retries
    );
    let json = manifest::to_json(&report)?;
    if let Some(dir) = args.out_dir()? {
        std::fs::write(dir.join("report.json"), &json)?;
        exec.write_trace_csv(std::io::BufWriter::new(std::fs::File::create(dir.join("trace.csv"))?))?;
        m.save(&dir.join("manifest.json"))?;
    }
    print!("{json}");
    Ok(if r.feasible { 0 } else { EXIT_DEADLINE_MISSED })
}

fn baseline(args: &RunArgs) -> Result<i32> {
    let m = args.manifest()?;
    let rows = manifest::cmd_baseline(&m)?;
    let mut csv = Vec::new();
    manifest::write_baseline_csv(&rows, &mut csv)?;
    if let Some(dir) = args.out_dir()? {
        std::fs::write(dir.join("baseline.csv"), &csv)?;
        m.save(&dir.join("manifest.json"))?;
    }
    std::io::stdout().write_all(&csv)?;
    for r in &rows {
        eprintln!(
            "X={} d={} k={} baseline={} reduction={:.2}%",
            r.queries, r.d, r.k, r.baseline_cores, r.reduction_pct
        );
    }
    Ok(0)
}

fn ppr(args: &RunArgs, source: u32, top: usize) -> Result<i32> {
    let m = args.manifest()?;
    let summary = manifest::cmd_ppr(&m, source, top)?;
    eprintln!(
        "source={} alpha={} omega={} r_max={:e} walks={}",
        summary.source, summary.params.alpha, summary.params.omega, summary.params.r_max, summary.walks
    );
    let mut out = std::io::stdout().lock();
    writeln!(out, "target,score,oracle")?;
    for (t, score, oracle) in &summary.top {
        match oracle {
            Some(o) => writeln!(out, "{t},{score:.6},{o:.6}")?,
            None => writeln!(out, "{t},{score:.6},")?,
        }
    }
    Ok(0)
}

fn report(paths: &[PathBuf]) -> Result<i32> {
    let reports = paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            manifest::parse_report(&text).map_err(|e| match e {
                Error::Json(j) => Error::Validation(format!("{}: {j}", p.display())),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    manifest::write_report_csv(&manifest::report_rows(&reports), std::io::stdout().lock())?;
    Ok(0)
}
