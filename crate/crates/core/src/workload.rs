//! Query sets, timing statistics, and the workloads that produce them.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};
use crate::pool::{self, nanos_to_secs, secs_to_nanos, Clock, Nanos, PoolOptions, QueryEngine};
use crate::ppr::{fora_query, PprParams};
use crate::seed;

/// Ordered list of query sources.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySet {
    pub sources: Vec<VertexId>,
    pub seed: u64,
}

impl QuerySet {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// One source id per line.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for s in &self.sources {
            writeln!(out, "{s}")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads one source id per line; blank and `#` lines are skipped.
    /// Every id must be a vertex of `g`.
    pub fn read<R: BufRead>(input: R, g: &Graph) -> Result<Self> {
        let mut sources = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let v: VertexId = t.parse().map_err(|e| Error::Parse {
                line: i + 1,
                message: format!("bad source id {t:?}: {e}"),
            })?;
            if v as usize >= g.n() {
                return Err(Error::VertexOutOfRange { vertex: v as u64, n: g.n() });
            }
            sources.push(v);
        }
        if sources.is_empty() {
            return Err(Error::validation("query file holds no queries"));
        }
        Ok(QuerySet { sources, seed: 0 })
    }
}

/// Draws `count` sources uniformly with replacement from `[0, n)`.
pub fn generate_queries(g: &Graph, count: usize, seed: u64) -> Result<QuerySet> {
    if count == 0 {
        return Err(Error::validation("query count must be at least 1"));
    }
    if g.n() == 0 {
        return Err(Error::validation("cannot draw queries from an empty graph"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sources = (0..count).map(|_| rng.gen_range(0..g.n()) as VertexId).collect();
    Ok(QuerySet { sources, seed })
}

/// Wall-clock seconds of one FORA query; the estimate is dropped.
pub fn time_query(g: &Graph, source: VertexId, params: &PprParams, seed: u64) -> Result<f64> {
    let start = Instant::now();
    let est = fora_query(g, source, params, seed)?;
    let elapsed = start.elapsed();
    std::hint::black_box(est);
    Ok(elapsed.as_secs_f64().max(1e-9))
}

/// Per-query preprocessing times and the statistics the planners use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    /// `t_i` in nanoseconds, in sample order.
    pub durations: Vec<Nanos>,
    /// Cores used during preprocessing (`c`).
    pub cores: usize,
    /// Upper bound on a single query time used by the Hoeffding baseline.
    pub t_hat: Nanos,
    /// Elapsed preprocessing time, distinct from `t_pre` when `c > 1`.
    pub elapsed: Nanos,
}

impl TimingStats {
    /// Builds stats with `t_hat = t_hat_factor * t_max`.
    pub fn new(durations: Vec<Nanos>, cores: usize, t_hat_factor: f64, elapsed: Nanos) -> Result<Self> {
        if durations.is_empty() {
            return Err(Error::validation("timing sample is empty"));
        }
        if durations.contains(&0) {
            return Err(Error::validation("query durations must be positive"));
        }
        if cores == 0 {
            return Err(Error::validation("preprocessing core count must be at least 1"));
        }
        if !(t_hat_factor >= 1.0 && t_hat_factor.is_finite()) {
            return Err(Error::validation(format!(
                "t_hat factor must be at least 1 so that t_hat >= t_max, got {t_hat_factor}"
            )));
        }
        let t_max = *durations.iter().max().unwrap();
        let t_hat = ((t_max as f64) * t_hat_factor).ceil() as Nanos;
        Ok(TimingStats {
            durations,
            cores,
            t_hat: t_hat.max(t_max),
            elapsed,
        })
    }

    pub fn sample_count(&self) -> usize {
        self.durations.len()
    }

    pub fn t_max_ns(&self) -> Nanos {
        *self.durations.iter().max().unwrap()
    }

    pub fn t_pre_ns(&self) -> Nanos {
        self.durations.iter().sum()
    }

    pub fn t_max(&self) -> f64 {
        nanos_to_secs(self.t_max_ns())
    }

    pub fn t_pre(&self) -> f64 {
        nanos_to_secs(self.t_pre_ns())
    }

    /// `c * t_pre / s`.
    pub fn t_avg(&self) -> f64 {
        self.cores as f64 * self.t_pre() / self.sample_count() as f64
    }

    /// Sample mean.
    pub fn t_bar(&self) -> f64 {
        self.t_pre() / self.sample_count() as f64
    }

    pub fn t_hat(&self) -> f64 {
        nanos_to_secs(self.t_hat)
    }

    pub fn elapsed(&self) -> f64 {
        nanos_to_secs(self.elapsed)
    }
}

/// Per-query duration distribution of a synthetic workload, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticWorkload {
    Constant { t: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Log-normal, redrawn whenever a draw exceeds `t_hat`.
    Lognormal { mu: f64, sigma: f64, t_hat: f64 },
}

impl SyntheticWorkload {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SyntheticWorkload::Constant { t } => t > 0.0 && t.is_finite(),
            SyntheticWorkload::Uniform { lo, hi } => lo > 0.0 && hi >= lo && hi.is_finite(),
            SyntheticWorkload::Lognormal { mu, sigma, t_hat } => {
                mu.is_finite() && sigma >= 0.0 && sigma.is_finite() && t_hat > 0.0 && t_hat.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!("invalid synthetic workload {self}")))
        }
    }

    /// Largest duration a draw can produce.
    pub fn upper_bound(&self) -> f64 {
        match *self {
            SyntheticWorkload::Constant { t } => t,
            SyntheticWorkload::Uniform { hi, .. } => hi,
            SyntheticWorkload::Lognormal { t_hat, .. } => t_hat,
        }
    }

    /// `count` durations in nanoseconds, reproducible from `seed`.
    pub fn draw(&self, count: usize, seed: u64) -> Result<Vec<Nanos>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cap = secs_to_nanos(self.upper_bound()).max(1);
        let out = match *self {
            SyntheticWorkload::Constant { t } => vec![secs_to_nanos(t).max(1); count],
            SyntheticWorkload::Uniform { lo, hi } => {
                let (lo, hi) = (secs_to_nanos(lo).max(1), secs_to_nanos(hi).max(1));
                (0..count).map(|_| rng.gen_range(lo..=hi)).collect()
            }
            SyntheticWorkload::Lognormal { mu, sigma, .. } => {
                let dist = LogNormal::new(mu, sigma).map_err(|e| Error::validation(e.to_string()))?;
                (0..count)
                    .map(|_| {
                        let mut ns = cap + 1;
                        for _ in 0..10_000 {
                            ns = secs_to_nanos(dist.sample(&mut rng));
                            if ns <= cap {
                                break;
                            }
                        }
                        ns.clamp(1, cap)
                    })
                    .collect()
            }
        };
        Ok(out)
    }
}

impl fmt::Display for SyntheticWorkload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SyntheticWorkload::Constant { t } => write!(f, "constant:{t}"),
            SyntheticWorkload::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            SyntheticWorkload::Lognormal { mu, sigma, t_hat } => write!(f, "lognormal:{mu},{sigma},{t_hat}"),
        }
    }
}

/// Parses `constant:T`, `uniform:LO,HI`, or `lognormal:MU,SIGMA,T_HAT`.
impl FromStr for SyntheticWorkload {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| Error::validation(format!("expected KIND:ARGS, got {s:?}")))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::validation(format!("bad number in {s:?}: {e}")))?;
        let w = match (kind, nums.as_slice()) {
            ("constant", [t]) => SyntheticWorkload::Constant { t: *t },
            ("uniform", [lo, hi]) => SyntheticWorkload::Uniform { lo: *lo, hi: *hi },
            ("lognormal", [mu, sigma, t_hat]) => SyntheticWorkload::Lognormal {
                mu: *mu,
                sigma: *sigma,
                t_hat: *t_hat,
            },
            _ => return Err(Error::validation(format!("unrecognized workload {s:?}"))),
        };
        w.validate()?;
        Ok(w)
    }
}

/// Source of per-query virtual durations. Each retry round gets its own
/// draw so that re-preprocessing sees fresh fluctuations.
pub trait DurationModel: Sync {
    fn durations(&self, round: u64, count: usize) -> Result<Vec<Nanos>>;
}

/// A synthetic workload bound to a seed.
#[derive(Debug, Clone, Copy)]
pub struct SeededSynthetic {
    pub workload: SyntheticWorkload,
    pub seed: u64,
}

impl DurationModel for SeededSynthetic {
    fn durations(&self, round: u64, count: usize) -> Result<Vec<Nanos>> {
        self.workload.draw(count, seed::indexed_seed(self.seed, round))
    }
}

/// Runs FORA queries over a query set; query `i` of round `r` uses walk
/// seed `indexed_seed(indexed_seed(walk_seed, r), i)`.
pub struct ForaEngine<'a> {
    pub graph: &'a Graph,
    pub queries: &'a QuerySet,
    pub params: PprParams,
    pub walk_seed: u64,
}

impl ForaEngine<'_> {
    fn query_seed(&self, round: u64, query: usize) -> u64 {
        seed::indexed_seed(seed::indexed_seed(self.walk_seed, round), query as u64)
    }

    fn source(&self, query: usize) -> Result<VertexId> {
        self.queries
            .sources
            .get(query)
            .copied()
            .ok_or_else(|| Error::validation(format!("query index {query} outside the query set")))
    }
}

impl QueryEngine for ForaEngine<'_> {
    fn execute(&self, round: u64, query: usize) -> Result<()> {
        let est = fora_query(self.graph, self.source(query)?, &self.params, self.query_seed(round, query))?;
        std::hint::black_box(est);
        Ok(())
    }
}

/// Virtual durations for FORA queries derived from their work count
/// (`base + work * per_unit` nanoseconds), so graph runs can be replayed
/// without a clock.
pub struct ForaCostModel<'a> {
    pub engine: ForaEngine<'a>,
    pub base: Nanos,
    pub per_unit: Nanos,
}

impl DurationModel for ForaCostModel<'_> {
    fn durations(&self, round: u64, count: usize) -> Result<Vec<Nanos>> {
        (0..count)
            .map(|q| {
                let e = &self.engine;
                let est = fora_query(e.graph, e.source(q)?, &e.params, e.query_seed(round, q))?;
                Ok((self.base + est.work * self.per_unit).max(1))
            })
            .collect()
    }
}

/// Sleeps for each query's duration; a real-time stand-in for synthetic
/// workloads.
pub struct SleepEngine {
    pub model: Box<dyn DurationModel>,
    pub count: usize,
    cache: std::sync::Mutex<std::collections::HashMap<u64, std::sync::Arc<Vec<Nanos>>>>,
}

impl SleepEngine {
    pub fn new(model: Box<dyn DurationModel>, count: usize) -> Self {
        SleepEngine {
            model,
            count,
            cache: Default::default(),
        }
    }

    fn round(&self, round: u64) -> Result<std::sync::Arc<Vec<Nanos>>> {
        let mut cache = self.cache.lock().unwrap();
        if let Some(d) = cache.get(&round) {
            return Ok(d.clone());
        }
        let d = std::sync::Arc::new(self.model.durations(round, self.count)?);
        cache.insert(round, d.clone());
        Ok(d)
    }
}

impl QueryEngine for SleepEngine {
    fn execute(&self, round: u64, query: usize) -> Result<()> {
        let d = self.round(round)?;
        let ns = *d
            .get(query)
            .ok_or_else(|| Error::validation(format!("no duration for query {query}")))?;
        std::thread::sleep(std::time::Duration::from_nanos(ns));
        Ok(())
    }
}

/// Times the sample queries `0..s` on `c` real workers.
pub fn preprocess(
    engine: &dyn QueryEngine,
    round: u64,
    s: usize,
    c: usize,
    t_hat_factor: f64,
    clock: &dyn Clock,
    options: PoolOptions,
) -> Result<TimingStats> {
    check_sample(s, c)?;
    let sample: Vec<usize> = (0..s).collect();
    let begin = clock.now();
    let trace = pool::run_pool(&sample, c, round, engine, clock, options)?;
    let elapsed = clock.now() - begin;
    let mut durations = vec![0; s];
    for e in &trace {
        durations[e.query] = e.duration().max(1);
    }
    TimingStats::new(durations, c, t_hat_factor, elapsed)
}

/// Virtual-time preprocessing: sample queries `0..s` list-scheduled on `c`
/// workers; with `c = 1` the elapsed time equals `t_pre` exactly.
pub fn preprocess_virtual(durations: &[Nanos], s: usize, c: usize, t_hat_factor: f64) -> Result<TimingStats> {
    check_sample(s, c)?;
    if durations.len() < s {
        return Err(Error::validation(format!(
            "{} durations supplied for a sample of {s}",
            durations.len()
        )));
    }
    let sample: Vec<usize> = (0..s).collect();
    let trace = pool::list_schedule(&sample, durations, c, 0)?;
    let elapsed = trace.iter().map(|e| e.end).max().unwrap_or(0);
    TimingStats::new(durations[..s].to_vec(), c, t_hat_factor, elapsed)
}

fn check_sample(s: usize, c: usize) -> Result<()> {
    if s == 0 {
        return Err(Error::validation("sample size must be at least 1"));
    }
    if c == 0 {
        return Err(Error::validation("preprocessing core count must be at least 1"));
    }
    if c * 10 > s {
        log::warn!("preprocessing with c = {c} cores for only s = {s} samples; c should be much smaller than s");
    }
    Ok(())
}
