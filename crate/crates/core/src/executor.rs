//! Plan execution: preprocessing, then barrier-separated slots each run on a
//! pool of at most `k` workers, followed by the deadline check.
//!
//! Worker `j` of a slot is the same logical core in every slot, so `T_j`
//! accumulates over slots and `T_max = max_j T_j`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::{self, Plan, PlanConfig, PlanMode};
use crate::pool::{self, nanos_to_secs, secs_to_nanos, Clock, Nanos, PoolOptions, QueryEngine, TraceEntry};
use crate::workload::{self, DurationModel, TimingStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    RealTime,
    VirtualTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotReport {
    pub slot: usize,
    /// `T_j` within this slot, seconds.
    pub worker_totals: Vec<f64>,
    /// Time from slot start to its last completion, seconds.
    pub makespan: f64,
}

/// Outcome of executing a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub mode: TimeMode,
    pub plan_mode: PlanMode,
    pub deadline: f64,
    pub preprocessing_cores: usize,
    pub preprocessing_elapsed: f64,
    /// Sum of sample query times.
    pub t_pre: f64,
    pub t_max_observed: f64,
    pub per_slot: Vec<SlotReport>,
    /// Largest per-worker total across all slots.
    pub t_max_total: f64,
    /// Preprocessing plus every slot's makespan.
    pub total_elapsed: f64,
    /// Left-hand side of the deadline check: `t_max + T_max` for ideal
    /// plans, `t_pre + T_max` for real plans.
    pub check_value: f64,
    pub feasible: bool,
    pub cores_used: usize,
    /// Cap on real-time workers below `k`, if one was applied.
    pub worker_cap: Option<usize>,
    /// Retry rounds consumed before this result.
    pub retries: u32,
    /// Sum of all per-worker totals; equals the slot work exactly in virtual time.
    pub slot_work: f64,
}

/// Per-slot outcome plus its trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub worker_totals: Vec<Nanos>,
    pub makespan: Nanos,
    pub trace: Vec<TraceEntry>,
}

fn slot_outcome(trace: Vec<TraceEntry>, workers: usize, start: Nanos) -> SlotOutcome {
    let worker_totals = pool::worker_totals(&trace, workers);
    let makespan = trace.iter().map(|e| e.end).max().unwrap_or(start) - start;
    SlotOutcome {
        worker_totals,
        makespan,
        trace,
    }
}

/// Runs one slot on at most `k` real workers.
pub fn run_slot(
    queries: &[usize],
    k: usize,
    round: u64,
    engine: &dyn QueryEngine,
    clock: &dyn Clock,
    options: PoolOptions,
) -> Result<SlotOutcome> {
    if queries.is_empty() {
        return Err(Error::validation("slot holds no queries"));
    }
    if k == 0 {
        return Err(Error::validation("slot worker cap must be at least 1"));
    }
    let workers = k.min(queries.len());
    let start = clock.now();
    let trace = pool::run_pool(queries, workers, round, engine, clock, options)?;
    Ok(slot_outcome(trace, workers, start))
}

/// Runs one slot in virtual time starting at `start`.
pub fn simulate_slot(queries: &[usize], k: usize, durations: &[Nanos], start: Nanos) -> Result<SlotOutcome> {
    if queries.is_empty() {
        return Err(Error::validation("slot holds no queries"));
    }
    let workers = k.min(queries.len());
    let trace = pool::list_schedule(queries, durations, workers, start)?;
    Ok(slot_outcome(trace, workers, start))
}

/// A report together with the per-query trace that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub report: ExecutionReport,
    /// `(slot, entry)`; preprocessing entries carry slot `None`.
    pub trace: Vec<(Option<usize>, TraceEntry)>,
}

impl Execution {
    /// CSV with columns `query,slot,worker,start,end` (seconds). Sample
    /// queries carry slot `-1`.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "query,slot,worker,start,end")?;
        for (slot, e) in &self.trace {
            let slot = slot.map_or(-1, |s| s as i64);
            writeln!(
                out,
                "{},{},{},{},{}",
                e.query,
                slot,
                e.worker,
                nanos_to_secs(e.start),
                nanos_to_secs(e.end)
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

struct Assembly {
    per_slot: Vec<SlotReport>,
    trace: Vec<(Option<usize>, TraceEntry)>,
    totals: Vec<Nanos>,
    slots_elapsed: Nanos,
    cores_used: usize,
}

impl Assembly {
    fn new(pre_trace: Vec<TraceEntry>) -> Self {
        Assembly {
            per_slot: Vec::new(),
            trace: pre_trace.into_iter().map(|e| (None, e)).collect(),
            totals: Vec::new(),
            slots_elapsed: 0,
            cores_used: 0,
        }
    }

    fn add(&mut self, slot: usize, out: SlotOutcome) {
        if self.totals.len() < out.worker_totals.len() {
            self.totals.resize(out.worker_totals.len(), 0);
        }
        for (j, t) in out.worker_totals.iter().enumerate() {
            self.totals[j] += t;
        }
        self.cores_used = self.cores_used.max(out.trace.iter().map(|e| e.worker + 1).max().unwrap_or(0));
        self.slots_elapsed += out.makespan;
        self.per_slot.push(SlotReport {
            slot,
            worker_totals: out.worker_totals.iter().map(|&t| nanos_to_secs(t)).collect(),
            makespan: nanos_to_secs(out.makespan),
        });
        self.trace.extend(out.trace.into_iter().map(|e| (Some(slot), e)));
    }

    fn finish(self, plan: &Plan, mode: TimeMode, stats: &TimingStats, worker_cap: Option<usize>, retries: u32) -> Execution {
        let t_max_total = self.totals.iter().copied().max().unwrap_or(0);
        let slot_work: Nanos = self.totals.iter().sum();
        let lead = match plan.mode {
            PlanMode::Ideal => stats.t_max_ns(),
            PlanMode::Real => stats.t_pre_ns(),
        };
        let check = lead + t_max_total;
        let feasible = check <= secs_to_nanos(plan.deadline);
        Execution {
            report: ExecutionReport {
                mode,
                plan_mode: plan.mode,
                deadline: plan.deadline,
                preprocessing_cores: stats.cores,
                preprocessing_elapsed: stats.elapsed(),
                t_pre: stats.t_pre(),
                t_max_observed: stats.t_max(),
                per_slot: self.per_slot,
                t_max_total: nanos_to_secs(t_max_total),
                total_elapsed: nanos_to_secs(stats.elapsed + self.slots_elapsed),
                check_value: nanos_to_secs(check),
                feasible,
                cores_used: self.cores_used,
                worker_cap,
                retries,
                slot_work: nanos_to_secs(slot_work),
            },
            trace: self.trace,
        }
    }
}

/// Virtual-time execution of `plan` given every query's duration.
///
/// Sample queries `0..s` are list-scheduled on `c` workers (`s` workers for
/// ideal plans, which preprocess fully in parallel); slots follow back to
/// back with a barrier between them.
pub fn simulate(plan: &Plan, durations: &[Nanos], c: usize, t_hat_factor: f64) -> Result<Execution> {
    simulate_round(plan, durations, c, t_hat_factor, 0)
}

fn simulate_round(plan: &Plan, durations: &[Nanos], c: usize, t_hat_factor: f64, retries: u32) -> Result<Execution> {
    if durations.len() < plan.total_queries {
        return Err(Error::validation(format!(
            "{} durations supplied for {} queries",
            durations.len(),
            plan.total_queries
        )));
    }
    let c = match plan.mode {
        PlanMode::Ideal => plan.s,
        PlanMode::Real => c,
    };
    let stats = workload::preprocess_virtual(durations, plan.s, c, t_hat_factor)?;
    let sample: Vec<usize> = plan.sample_indices().collect();
    let pre_trace = pool::list_schedule(&sample, durations, c, 0)?;
    let mut asm = Assembly::new(pre_trace);
    let mut clock = stats.elapsed;
    for (i, slot) in plan.assignment.iter().enumerate() {
        if slot.is_empty() {
            continue;
        }
        let out = simulate_slot(slot, plan.k, durations, clock)?;
        clock += out.makespan;
        asm.add(i, out);
    }
    Ok(asm.finish(plan, TimeMode::VirtualTime, &stats, None, retries))
}

/// Real-time execution settings.
#[derive(Debug, Clone, Copy, Default)]
pub struct RealTimeOptions {
    /// Upper bound on concurrent workers, applied below `k`.
    pub worker_cap: Option<usize>,
    pub pool: PoolOptions,
}

impl RealTimeOptions {
    fn cap(&self, k: usize) -> usize {
        self.worker_cap.map_or(k, |c| c.min(k)).max(1)
    }
}

/// Where query times come from.
pub enum Backend<'a> {
    /// Durations are known up front; execution is simulated.
    Virtual(&'a dyn DurationModel),
    /// Queries are executed and timed.
    Real {
        engine: &'a dyn QueryEngine,
        clock: &'a dyn Clock,
        options: RealTimeOptions,
    },
}

#[allow(clippy::too_many_arguments)]
fn execute_real(
    plan: &Plan,
    stats: &TimingStats,
    pre_trace: Vec<TraceEntry>,
    round: u64,
    engine: &dyn QueryEngine,
    clock: &dyn Clock,
    options: RealTimeOptions,
    retries: u32,
) -> Result<Execution> {
    let workers = options.cap(plan.k);
    let mut asm = Assembly::new(pre_trace);
    for (i, slot) in plan.assignment.iter().enumerate() {
        if slot.is_empty() {
            continue;
        }
        asm.add(i, run_slot(slot, workers, round, engine, clock, options.pool)?);
    }
    let cap = options.worker_cap.filter(|&c| c < plan.k);
    Ok(asm.finish(plan, TimeMode::RealTime, stats, cap, retries))
}

fn machine_cores() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Preprocessing width of the unconstrained algorithm: all `s` samples at
/// once in virtual time, as many as the machine and worker cap allow in real
/// time.
pub fn ideal_preprocessing_cores(s: usize, backend: &Backend<'_>) -> usize {
    match backend {
        Backend::Virtual(_) => s.max(1),
        Backend::Real { options, .. } => options.cap(s).min(machine_cores()).max(1),
    }
}

fn real_preprocess(
    s: usize,
    c: usize,
    round: u64,
    t_hat_factor: f64,
    engine: &dyn QueryEngine,
    clock: &dyn Clock,
    options: RealTimeOptions,
) -> Result<(TimingStats, Vec<TraceEntry>)> {
    let sample: Vec<usize> = (0..s).collect();
    let begin = clock.now();
    let trace = pool::run_pool(&sample, c, round, engine, clock, options.pool)?;
    let elapsed = clock.now() - begin;
    let mut durations = vec![1; s];
    for e in &trace {
        durations[e.query] = e.duration().max(1);
    }
    Ok((TimingStats::new(durations, c, t_hat_factor, elapsed)?, trace))
}

/// Unconstrained-core algorithm with bounded retries.
///
/// Each round re-preprocesses the sample, plans with [`planner::plan_ideal`],
/// executes, and checks `t_max + T_max <= T`. After `max_retries` failed
/// rounds the last result is returned with `feasible = false`.
pub fn run_ideal(config: &PlanConfig, backend: &Backend<'_>) -> Result<(Plan, Execution)> {
    config.validate()?;
    let x = config.total_queries;
    let s = config.sample_count()?;
    if s >= x {
        return Err(Error::validation(format!("sample size {s} leaves no queries to plan out of {x}")));
    }
    let c = ideal_preprocessing_cores(s, backend);
    let mut round = 0u32;
    loop {
        let (mut plan, exec, stats) = match backend {
            Backend::Virtual(model) => {
                let durations = model.durations(round as u64, x)?;
                let stats = workload::preprocess_virtual(&durations, s, c, config.t_hat_factor)?;
                let plan = planner::plan_ideal(x, config.deadline, s, stats.t_max())?;
                let exec = simulate_round(&plan, &durations, c, config.t_hat_factor, round)?;
                (plan, exec, stats)
            }
            Backend::Real { engine, clock, options } => {
                let (stats, pre_trace) =
                    real_preprocess(s, c, round as u64, config.t_hat_factor, *engine, *clock, *options)?;
                let plan = planner::plan_ideal(x, config.deadline, s, stats.t_max())?;
                let exec = execute_real(&plan, &stats, pre_trace, round as u64, *engine, *clock, *options, round)?;
                (plan, exec, stats)
            }
        };
        plan.bounds.hoeffding = Some(planner::hoeffding_baseline(x, config.deadline, &stats, config.p_f)?);
        plan.timing = Some(planner::PlanTiming::from_stats(&stats));
        if exec.report.feasible || round >= config.max_retries {
            return Ok((plan, exec));
        }
        log::info!(
            "round {round}: t_max + T_max = {:.6}s exceeds the deadline {}s, re-preprocessing",
            exec.report.check_value,
            config.deadline
        );
        round += 1;
    }
}

/// Bounded-core algorithm: preprocess on `c` cores, gate on `c_max`, plan
/// with the scaling factor, execute once, and check `t_pre + T_max <= T`.
///
/// A failed deadline check is reported through `feasible = false`.
pub fn run_real(config: &PlanConfig, backend: &Backend<'_>) -> Result<(Plan, Execution)> {
    config.validate()?;
    let s = config.sample_count()?;
    check_sample(config, s)?;
    match backend {
        Backend::Virtual(_) => {
            let stats = preprocess_for(config, backend, s)?;
            run_real_from_stats(config, backend, &stats)
        }
        Backend::Real { engine, clock, options } => {
            let (stats, pre_trace) = real_preprocess(s, config.c, 0, config.t_hat_factor, *engine, *clock, *options)?;
            let plan = planner::plan_real(config, &stats)?;
            let exec = execute_real(&plan, &stats, pre_trace, 0, *engine, *clock, *options, 0)?;
            Ok((plan, exec))
        }
    }
}

fn check_sample(config: &PlanConfig, s: usize) -> Result<()> {
    if s >= config.total_queries {
        return Err(Error::validation(format!(
            "sample size {s} leaves no queries to plan out of {}",
            config.total_queries
        )));
    }
    Ok(())
}

/// Times sample queries `0..s` on `config.c` cores.
pub fn preprocess_for(config: &PlanConfig, backend: &Backend<'_>, s: usize) -> Result<TimingStats> {
    config.validate()?;
    check_sample(config, s)?;
    match backend {
        Backend::Virtual(model) => {
            let durations = model.durations(0, config.total_queries)?;
            workload::preprocess_virtual(&durations, s, config.c, config.t_hat_factor)
        }
        Backend::Real { engine, clock, options } => {
            workload::preprocess(*engine, 0, s, config.c, config.t_hat_factor, *clock, options.pool)
        }
    }
}

/// Plans with existing preprocessing results and executes the slots.
///
/// In virtual time the preprocessing is replayed from the duration model,
/// so `stats` must come from the same model.
pub fn run_real_from_stats(config: &PlanConfig, backend: &Backend<'_>, stats: &TimingStats) -> Result<(Plan, Execution)> {
    let plan = planner::plan_real(config, stats)?;
    let exec = match backend {
        Backend::Virtual(model) => {
            let durations = model.durations(0, plan.total_queries)?;
            simulate(&plan, &durations, config.c, config.t_hat_factor)?
        }
        Backend::Real { engine, clock, options } => {
            execute_real(&plan, stats, Vec::new(), 0, *engine, *clock, *options, 0)?
        }
    };
    Ok((plan, exec))
}

/// Executes a saved plan, re-running its sample queries first.
pub fn execute_plan(plan: &Plan, config: &PlanConfig, backend: &Backend<'_>) -> Result<Execution> {
    plan.validate()?;
    let c = match plan.mode {
        PlanMode::Ideal => ideal_preprocessing_cores(plan.s, backend),
        PlanMode::Real => config.c,
    };
    match backend {
        Backend::Virtual(model) => {
            let durations = model.durations(0, plan.total_queries)?;
            simulate(plan, &durations, c, config.t_hat_factor)
        }
        Backend::Real { engine, clock, options } => {
            let (stats, pre_trace) = real_preprocess(plan.s, c, 0, config.t_hat_factor, *engine, *clock, *options)?;
            execute_real(plan, &stats, pre_trace, 0, *engine, *clock, *options, 0)
        }
    }
}
