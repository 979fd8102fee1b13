//! Run manifests and the commands behind the `coreplan` binary.
//!
//! A [`RunManifest`] fully determines a run: in virtual time two executions
//! of the same manifest produce identical reports. All randomness derives
//! from `seed` through named sub-seeds.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::executor::{self, Backend, Execution, ExecutionReport, RealTimeOptions};
use crate::graph::{self, Graph, VertexId};
use crate::planner::{self, Plan, PlanConfig, PlanMode, SamplePolicy};
use crate::pool::{MonotonicClock, PoolOptions};
use crate::ppr::{self, PprParams, PprParamsInput};
use crate::seed;
use crate::workload::{self, DurationModel, ForaCostModel, ForaEngine, QuerySet, SeededSynthetic, SleepEngine, SyntheticWorkload, TimingStats};

/// Environment variable capping real-time workers below `k`.
pub const THREADS_ENV: &str = "COREPLAN_THREADS";

/// Exit code for a run that misses its deadline at execution time.
pub const EXIT_DEADLINE_MISSED: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Unbounded cores with retries.
    Ideal,
    /// Bounded cores with a scaling factor.
    #[default]
    Real,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Label used in reports; defaults to the graph file stem or "synthetic".
    pub dataset: Option<String>,
    pub graph: Option<PathBuf>,
    pub directed: bool,
    /// Synthetic duration model used instead of PPR queries.
    pub synthetic: Option<SyntheticWorkload>,
    pub query_file: Option<PathBuf>,
    /// Query counts; plan and run use the first, baseline sweeps all.
    pub queries: Vec<usize>,
    pub deadline: f64,
    pub c_max: Option<usize>,
    /// Scaling factors; plan and run use the first, baseline sweeps all.
    pub d: Vec<f64>,
    pub c: usize,
    pub z: f64,
    pub p: f64,
    pub e: f64,
    pub sample_policy: SamplePolicy,
    pub alpha: f64,
    pub epsilon: f64,
    pub delta: Option<f64>,
    pub p_f: Option<f64>,
    pub r_max: Option<f64>,
    pub omega: Option<u64>,
    pub t_hat_factor: f64,
    pub seed: u64,
    pub virtual_time: bool,
    pub algorithm: Algorithm,
    pub max_retries: u32,
    pub pin_cores: bool,
    /// Virtual cost of a graph query: `cost_base_ns + work * cost_per_unit_ns`.
    pub cost_base_ns: u64,
    pub cost_per_unit_ns: u64,
}

impl Default for RunManifest {
    fn default() -> Self {
        RunManifest {
            dataset: None,
            graph: None,
            directed: false,
            synthetic: None,
            query_file: None,
            queries: Vec::new(),
            deadline: 0.0,
            c_max: None,
            d: vec![1.0],
            c: 1,
            z: 2.576,
            p: 0.5,
            e: 0.05,
            sample_policy: SamplePolicy::Cochran,
            alpha: ppr::DEFAULT_ALPHA,
            epsilon: ppr::DEFAULT_EPSILON,
            delta: None,
            p_f: None,
            r_max: None,
            omega: None,
            t_hat_factor: 2.0,
            seed: 0,
            virtual_time: false,
            algorithm: Algorithm::Real,
            max_retries: 3,
            pin_cores: false,
            cost_base_ns: 1_000,
            cost_per_unit_ns: 10,
        }
    }
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    fn first_d(&self) -> f64 {
        self.d.first().copied().unwrap_or(1.0)
    }

    /// Plan configuration for `queries` queries and scaling factor `d`.
    pub fn plan_config(&self, queries: usize, d: f64, default_pf: f64) -> PlanConfig {
        PlanConfig {
            total_queries: queries,
            deadline: self.deadline,
            c_max: self.c_max,
            d,
            c: self.c,
            z: self.z,
            p: self.p,
            e: self.e,
            sample_policy: self.sample_policy,
            p_f: self.p_f.unwrap_or(default_pf),
            t_hat_factor: self.t_hat_factor,
            max_retries: self.max_retries,
        }
    }
}

/// Reads [`THREADS_ENV`], ignoring unset or unparsable values.
pub fn threads_cap_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

/// Loaded inputs of a manifest.
pub struct Workbench {
    pub dataset: String,
    pub graph: Option<Graph>,
    pub queries: Option<QuerySet>,
    pub params: Option<PprParams>,
    pub synthetic: Option<SeededSynthetic>,
    /// Number of queries available to the run.
    pub capacity: usize,
    /// Baseline failure probability when the manifest leaves it open.
    pub default_pf: f64,
}

impl Workbench {
    /// Loads the graph and query set, or binds the synthetic workload.
    pub fn load(m: &RunManifest) -> Result<Self> {
        let needed = m.queries.iter().copied().max();
        match (&m.graph, &m.synthetic) {
            (Some(_), Some(_)) => Err(Error::validation("give either a graph or a synthetic workload, not both")),
            (None, None) => Err(Error::validation("a graph or a synthetic workload is required")),
            (None, Some(w)) => {
                let capacity = needed.unwrap_or(0);
                Ok(Workbench {
                    dataset: m.dataset.clone().unwrap_or_else(|| "synthetic".into()),
                    graph: None,
                    queries: None,
                    params: None,
                    synthetic: Some(SeededSynthetic {
                        workload: *w,
                        seed: seed::sub_seed(m.seed, seed::SYNTHETIC),
                    }),
                    capacity,
                    default_pf: 0.05,
                })
            }
            (Some(path), None) => {
                let g = graph::load_edge_list_file(path, m.directed)?;
                let queries = match &m.query_file {
                    Some(qf) => {
                        let qs = QuerySet::read(std::io::BufReader::new(std::fs::File::open(qf)?), &g)?;
                        if let Some(n) = needed {
                            if n > qs.len() {
                                return Err(Error::validation(format!(
                                    "query file holds {} queries but {n} were requested",
                                    qs.len()
                                )));
                            }
                        }
                        qs
                    }
                    None => {
                        let n = needed.ok_or_else(|| Error::validation("--queries or --query-file is required"))?;
                        workload::generate_queries(&g, n, seed::sub_seed(m.seed, seed::QUERIES))?
                    }
                };
                let params = ppr_params(&g, m)?;
                let dataset = m.dataset.clone().unwrap_or_else(|| {
                    path.file_stem().map_or("graph".into(), |s| s.to_string_lossy().into_owned())
                });
                Ok(Workbench {
                    dataset,
                    capacity: needed.unwrap_or(queries.len()),
                    default_pf: params.p_f,
                    graph: Some(g),
                    queries: Some(queries),
                    params: Some(params),
                    synthetic: None,
                })
            }
        }
    }

    /// Calls `f` with the backend the manifest asks for.
    pub fn with_backend<R>(&self, m: &RunManifest, f: impl FnOnce(&Backend<'_>) -> Result<R>) -> Result<R> {
        let clock = MonotonicClock::new();
        let options = RealTimeOptions {
            worker_cap: threads_cap_from_env(),
            pool: PoolOptions { pin_cores: m.pin_cores },
        };
        match (&self.graph, &self.synthetic) {
            (_, Some(model)) if m.virtual_time => f(&Backend::Virtual(model)),
            (_, Some(model)) => {
                let engine = SleepEngine::new(Box::new(*model), self.capacity);
                f(&Backend::Real {
                    engine: &engine,
                    clock: &clock,
                    options,
                })
            }
            (Some(g), None) => {
                let engine = ForaEngine {
                    graph: g,
                    queries: self.queries.as_ref().expect("graph runs carry queries"),
                    params: self.params.expect("graph runs carry params"),
                    walk_seed: seed::sub_seed(m.seed, seed::WALKS),
                };
                if m.virtual_time {
                    let model = ForaCostModel {
                        engine,
                        base: m.cost_base_ns,
                        per_unit: m.cost_per_unit_ns,
                    };
                    f(&Backend::Virtual(&model as &dyn DurationModel))
                } else {
                    f(&Backend::Real {
                        engine: &engine,
                        clock: &clock,
                        options,
                    })
                }
            }
            (None, None) => unreachable!("checked in load"),
        }
    }
}

fn ppr_params(g: &Graph, m: &RunManifest) -> Result<PprParams> {
    let mut input = PprParamsInput::defaults_for(g.n());
    input.alpha = m.alpha;
    input.epsilon = m.epsilon;
    if let Some(d) = m.delta {
        input.delta = d;
    }
    if let Some(p) = m.p_f {
        input.p_f = p;
    }
    input.r_max = m.r_max;
    input.omega = m.omega;
    ppr::derive_params(g, &input)
}

fn primary_queries(m: &RunManifest, bench: &Workbench) -> usize {
    m.queries.first().copied().unwrap_or(bench.capacity)
}

/// Planning result with the statistics it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutput {
    pub plan: Plan,
    pub stats: TimingStats,
}

/// Preprocesses and plans without executing the slots.
pub fn cmd_plan(m: &RunManifest) -> Result<PlanOutput> {
    let bench = Workbench::load(m)?;
    let x = primary_queries(m, &bench);
    let config = m.plan_config(x, m.first_d(), bench.default_pf);
    config.validate()?;
    let s = config.sample_count()?;
    bench.with_backend(m, |backend| match m.algorithm {
        Algorithm::Real => {
            let stats = executor::preprocess_for(&config, backend, s)?;
            Ok(PlanOutput {
                plan: planner::plan_real(&config, &stats)?,
                stats,
            })
        }
        Algorithm::Ideal => {
            let mut ideal = config.clone();
            ideal.c = executor::ideal_preprocessing_cores(s, backend);
            let stats = executor::preprocess_for(&ideal, backend, s)?;
            let mut plan = planner::plan_ideal(x, config.deadline, s, stats.t_max())?;
            plan.bounds.hoeffding = Some(planner::hoeffding_baseline(x, config.deadline, &stats, config.p_f)?);
            plan.timing = Some(planner::PlanTiming::from_stats(&stats));
            Ok(PlanOutput { plan, stats })
        }
    })
}

/// Report written by `run`, and the input of `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub queries: usize,
    pub plan_mode: PlanMode,
    pub s: usize,
    pub ell: usize,
    pub k: usize,
    pub required_cores: usize,
    pub d: f64,
    pub lemma1_bound: f64,
    pub hoeffding_bound: f64,
    pub baseline_cores: usize,
    pub execution: ExecutionReport,
}

impl RunReport {
    fn new(dataset: &str, plan: &Plan, execution: ExecutionReport) -> Result<Self> {
        let hoeffding = plan
            .bounds
            .hoeffding
            .ok_or_else(|| Error::Internal("plan carries no Hoeffding bound".into()))?;
        Ok(RunReport {
            dataset: dataset.to_string(),
            queries: plan.total_queries,
            plan_mode: plan.mode,
            s: plan.s,
            ell: plan.ell,
            k: plan.k,
            required_cores: plan.required_cores,
            d: plan.d,
            lemma1_bound: plan.bounds.lemma1,
            hoeffding_bound: hoeffding,
            baseline_cores: hoeffding.ceil() as usize,
            execution,
        })
    }
}

/// Executes the manifest end to end, or a previously saved `plan`.
pub fn cmd_run(m: &RunManifest, plan: Option<&Plan>) -> Result<(RunReport, Execution)> {
    let mut bench = Workbench::load(m)?;
    let x = plan.map_or_else(|| primary_queries(m, &bench), |p| p.total_queries);
    bench.capacity = bench.capacity.max(x);
    let mut config = m.plan_config(x, plan.map_or(m.first_d(), |p| p.d), bench.default_pf);
    config.deadline = plan.map_or(config.deadline, |p| p.deadline);
    if let Some(qs) = &bench.queries {
        if x > qs.len() {
            return Err(Error::validation(format!(
                "plan covers {x} queries but only {} are available",
                qs.len()
            )));
        }
    }
    bench.with_backend(m, |backend| {
        let (plan, exec) = match plan {
            Some(p) => {
                let exec = executor::execute_plan(p, &config, backend)?;
                (p.clone(), exec)
            }
            None => match m.algorithm {
                Algorithm::Real => executor::run_real(&config, backend)?,
                Algorithm::Ideal => executor::run_ideal(&config, backend)?,
            },
        };
        let report = RunReport::new(&bench.dataset, &plan, exec.report.clone())?;
        Ok((report, exec))
    })
}

/// One row of the core-count comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub dataset: String,
    pub queries: usize,
    pub d: f64,
    pub s: usize,
    pub ell: usize,
    pub k: usize,
    pub baseline_cores: usize,
    pub reduction_pct: f64,
    pub processing_time: f64,
    pub feasible: bool,
}

pub const BASELINE_HEADER: &str = "dataset,queries,d,s,ell,k,baseline_cores,reduction_pct,processing_time,feasible";

/// `100 (baseline - k) / baseline`.
pub fn reduction_pct(k: usize, baseline: usize) -> f64 {
    if baseline == 0 {
        return 0.0;
    }
    100.0 * (baseline as f64 - k as f64) / baseline as f64
}

/// Compares the planned core count with the Hoeffding baseline for every
/// query count and scaling factor. The sample is timed once; fraction
/// policies size it from the smallest query count.
pub fn cmd_baseline(m: &RunManifest) -> Result<Vec<BaselineRow>> {
    if m.queries.is_empty() {
        return Err(Error::validation("baseline needs at least one query count"));
    }
    let bench = Workbench::load(m)?;
    let smallest = *m.queries.iter().min().unwrap();
    let largest = *m.queries.iter().max().unwrap();
    let base_config = m.plan_config(largest, m.first_d(), bench.default_pf);
    base_config.validate()?;
    let s = base_config.sample_count_for(smallest)?;
    if s >= smallest {
        return Err(Error::validation(format!(
            "sample size {s} leaves no queries to plan for {smallest} queries; use a fraction policy"
        )));
    }
    bench.with_backend(m, |backend| {
        let stats = executor::preprocess_for(&base_config, backend, s)?;
        let mut rows = Vec::new();
        for &x in &m.queries {
            for &d in &m.d {
                let config = m.plan_config(x, d, bench.default_pf);
                let (plan, exec) = executor::run_real_from_stats(&config, backend, &stats)?;
                let baseline = plan.bounds.hoeffding.unwrap_or(0.0).ceil() as usize;
                rows.push(BaselineRow {
                    dataset: bench.dataset.clone(),
                    queries: x,
                    d,
                    s: plan.s,
                    ell: plan.ell,
                    k: plan.k,
                    baseline_cores: baseline,
                    reduction_pct: reduction_pct(plan.k, baseline),
                    processing_time: exec.report.total_elapsed,
                    feasible: exec.report.feasible,
                });
            }
        }
        Ok(rows)
    })
}

pub fn write_baseline_csv<W: Write>(rows: &[BaselineRow], mut out: W) -> Result<()> {
    writeln!(out, "{BASELINE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{:.4},{},{}",
            r.dataset, r.queries, r.d, r.s, r.ell, r.k, r.baseline_cores, r.reduction_pct, r.processing_time, r.feasible
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Top estimated targets of one query, with exact values on small graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct PprSummary {
    pub source: VertexId,
    pub params: PprParams,
    pub top: Vec<(VertexId, f64, Option<f64>)>,
    pub walks: u64,
}

/// Largest graph for which `ppr` also prints exact scores.
pub const ORACLE_MAX_N: usize = 1000;

pub fn cmd_ppr(m: &RunManifest, source: VertexId, limit: usize) -> Result<PprSummary> {
    let path = m.graph.as_ref().ok_or_else(|| Error::validation("--graph is required"))?;
    let g = graph::load_edge_list_file(path, m.directed)?;
    let params = ppr_params(&g, m)?;
    let est = ppr::fora_query(&g, source, &params, seed::sub_seed(m.seed, seed::WALKS))?;
    let oracle = if g.n() <= ORACLE_MAX_N {
        Some(ppr::power_iteration_ppr(&g, source, params.alpha, 1e-12, 100_000)?)
    } else {
        None
    };
    let top = est
        .top(limit)
        .into_iter()
        .map(|(t, x)| (t, x, oracle.as_ref().map(|o| o[t as usize])))
        .collect();
    Ok(PprSummary {
        source,
        params,
        top,
        walks: est.walks_performed,
    })
}

/// One row of the plot-ready summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub queries: usize,
    pub k_danda: usize,
    pub k_baseline: usize,
    pub processing_time: f64,
    pub reduction_pct: f64,
}

pub const REPORT_HEADER: &str = "dataset,queries,k_danda,k_baseline,processing_time,reduction_pct";

/// Parses a run report, naming any missing field in the error.
pub fn parse_report(text: &str) -> Result<RunReport> {
    Ok(serde_json::from_str(text)?)
}

pub fn report_rows(reports: &[RunReport]) -> Vec<ReportRow> {
    reports
        .iter()
        .map(|r| {
            let k_baseline = r.hoeffding_bound.ceil() as usize;
            ReportRow {
                dataset: r.dataset.clone(),
                queries: r.queries,
                k_danda: r.k,
                k_baseline,
                processing_time: r.execution.total_elapsed,
                reduction_pct: if k_baseline == 0 {
                    0.0
                } else {
                    (k_baseline as f64 - r.k as f64) * 100.0 / k_baseline as f64
                },
            }
        })
        .collect()
}

pub fn write_report_csv<W: Write>(rows: &[ReportRow], mut out: W) -> Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{:.4}",
            r.dataset, r.queries, r.k_danda, r.k_baseline, r.processing_time, r.reduction_pct
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Pretty JSON followed by a newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}
