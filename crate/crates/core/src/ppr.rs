//! Single-source personalized PageRank.
//!
//! `pi(s, t)` is the probability that a walk from `s`, stopping with
//! probability `alpha` at each step, stops at `t`. A walk that reaches a dead
//! end stops there, so dead ends behave like self-loops for every routine in
//! this module.
//!
//! [`power_iteration_ppr`] is the exact reference; [`fora_query`] is the
//! approximate forward push + Monte Carlo engine used as the timed workload.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};
use crate::seed::WalkStreams;

pub const DEFAULT_ALPHA: f64 = 0.2;
pub const DEFAULT_EPSILON: f64 = 0.5;

/// Accuracy and cost knobs of a query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PprParams {
    pub alpha: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub p_f: f64,
    pub r_max: f64,
    pub omega: u64,
}

/// User-provided parameters. `r_max` and `omega` are derived when absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PprParamsInput {
    pub alpha: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub p_f: f64,
    pub r_max: Option<f64>,
    pub omega: Option<u64>,
    /// Multiplier on the derived push threshold.
    pub r_max_scale: f64,
}

impl PprParamsInput {
    /// Standard settings: alpha 0.2, epsilon 0.5, delta = p_f = 1/n.
    ///
    /// For graphs with fewer than three vertices `1/n` leaves the open
    /// interval, so delta and p_f are capped at 0.5.
    pub fn defaults_for(n: usize) -> Self {
        let inv = (1.0 / n.max(1) as f64).min(0.5);
        PprParamsInput {
            alpha: DEFAULT_ALPHA,
            epsilon: DEFAULT_EPSILON,
            delta: inv,
            p_f: inv,
            r_max: None,
            omega: None,
            r_max_scale: 1.0,
        }
    }
}

fn open_unit(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::validation(format!("{name} must lie in (0, 1), got {x}")))
    }
}

/// Total walk budget `ceil(((2eps/3 + 2) ln(2/p_f)) / (eps^2 delta))`.
pub fn walk_budget(epsilon: f64, delta: f64, p_f: f64) -> u64 {
    let num = (2.0 * epsilon / 3.0 + 2.0) * (2.0 / p_f).ln();
    (num / (epsilon * epsilon * delta)).ceil() as u64
}

/// Push threshold balancing push and walk cost on a graph with `m` arcs.
pub fn push_threshold(epsilon: f64, delta: f64, p_f: f64, m: usize) -> f64 {
    let denom = m.max(1) as f64 * (2.0 / p_f).ln() * (2.0 * epsilon / 3.0 + 2.0);
    (epsilon * epsilon * delta / denom).sqrt()
}

/// Validates `input` and fills `omega` and `r_max`.
pub fn derive_params(g: &Graph, input: &PprParamsInput) -> Result<PprParams> {
    open_unit("alpha", input.alpha)?;
    open_unit("delta", input.delta)?;
    open_unit("p_f", input.p_f)?;
    if !(input.epsilon > 0.0 && input.epsilon.is_finite()) {
        return Err(Error::validation(format!(
            "epsilon must be positive, got {}",
            input.epsilon
        )));
    }
    if !(input.r_max_scale > 0.0 && input.r_max_scale.is_finite()) {
        return Err(Error::validation("r_max scale must be positive"));
    }
    let omega = match input.omega {
        Some(0) => return Err(Error::validation("omega must be positive")),
        Some(w) => w,
        None => walk_budget(input.epsilon, input.delta, input.p_f),
    };
    let r_max = match input.r_max {
        Some(r) if !(r > 0.0 && r.is_finite()) => {
            return Err(Error::validation(format!("r_max must be positive, got {r}")))
        }
        Some(r) => r,
        None => input.r_max_scale * push_threshold(input.epsilon, input.delta, input.p_f, g.m()),
    };
    Ok(PprParams {
        alpha: input.alpha,
        epsilon: input.epsilon,
        delta: input.delta,
        p_f: input.p_f,
        r_max,
        omega,
    })
}

fn check_source(g: &Graph, source: VertexId) -> Result<usize> {
    if (source as usize) < g.n() {
        Ok(source as usize)
    } else {
        Err(Error::VertexOutOfRange {
            vertex: source as u64,
            n: g.n(),
        })
    }
}

/// Exact PPR by power iteration from `e_source`.
///
/// Stops once the L1 change between iterates drops below `tolerance`.
pub fn power_iteration_ppr(
    g: &Graph,
    source: VertexId,
    alpha: f64,
    tolerance: f64,
    max_iters: usize,
) -> Result<Vec<f64>> {
    let s = check_source(g, source)?;
    open_unit("alpha", alpha)?;
    if !(tolerance > 0.0) {
        return Err(Error::validation("tolerance must be positive"));
    }
    let n = g.n();
    let mut pi = vec![0.0; n];
    pi[s] = 1.0;
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        next.iter_mut().for_each(|x| *x = 0.0);
        next[s] = alpha;
        for (u, &p) in pi.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let moving = (1.0 - alpha) * p;
            let nbrs = g.neighbors_of(u);
            if nbrs.is_empty() {
                next[u] += moving;
            } else {
                let share = moving / nbrs.len() as f64;
                for &v in nbrs {
                    next[v as usize] += share;
                }
            }
        }
        residual = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if residual < tolerance {
            return Ok(pi);
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iters,
        residual,
    })
}

/// Reserve and residue vectors of a forward push from `source`.
#[derive(Debug, Clone, PartialEq)]
pub struct PushState {
    pub source: VertexId,
    pub reserve: Vec<f64>,
    pub residue: Vec<f64>,
}

/// Incremental forward push; [`ForwardPush::step`] performs one push.
pub struct ForwardPush<'g> {
    g: &'g Graph,
    alpha: f64,
    r_max: f64,
    state: PushState,
    queue: VecDeque<usize>,
    queued: Vec<bool>,
    touched: Vec<usize>,
    pushes: u64,
    edge_work: u64,
}

impl<'g> ForwardPush<'g> {
    pub fn new(g: &'g Graph, source: VertexId, alpha: f64, r_max: f64) -> Result<Self> {
        let s = check_source(g, source)?;
        open_unit("alpha", alpha)?;
        if !(r_max > 0.0) {
            return Err(Error::validation("r_max must be positive"));
        }
        let n = g.n();
        let mut fp = ForwardPush {
            g,
            alpha,
            r_max,
            state: PushState {
                source,
                reserve: vec![0.0; n],
                residue: vec![0.0; n],
            },
            queue: VecDeque::new(),
            queued: vec![false; n],
            touched: vec![s],
            pushes: 0,
            edge_work: 0,
        };
        fp.state.residue[s] = 1.0;
        fp.enqueue_if_active(s);
        Ok(fp)
    }

    #[inline]
    fn active(&self, v: usize) -> bool {
        let r = self.state.residue[v];
        match self.g.degree_of(v) {
            0 => r > 0.0,
            d => r > self.r_max * d as f64,
        }
    }

    #[inline]
    fn enqueue_if_active(&mut self, v: usize) {
        if !self.queued[v] && self.active(v) {
            self.queued[v] = true;
            self.queue.push_back(v);
        }
    }

    /// Performs one push. Returns `false` once no vertex qualifies.
    pub fn step(&mut self) -> bool {
        while let Some(v) = self.queue.pop_front() {
            self.queued[v] = false;
            if !self.active(v) {
                continue;
            }
            let r = std::mem::replace(&mut self.state.residue[v], 0.0);
            let nbrs = self.g.neighbors_of(v);
            self.pushes += 1;
            if nbrs.is_empty() {
                // dead end: the walk can only stop here
                self.state.reserve[v] += r;
                return true;
            }
            self.state.reserve[v] += self.alpha * r;
            let share = (1.0 - self.alpha) * r / nbrs.len() as f64;
            self.edge_work += nbrs.len() as u64;
            for &u in nbrs {
                let u = u as usize;
                if self.state.residue[u] == 0.0 {
                    self.touched.push(u);
                }
                self.state.residue[u] += share;
                self.enqueue_if_active(u);
            }
            return true;
        }
        false
    }

    pub fn run(mut self) -> PushOutcome {
        while self.step() {}
        self.finish()
    }

    pub fn state(&self) -> &PushState {
        &self.state
    }

    pub fn pushes(&self) -> u64 {
        self.pushes
    }

    fn finish(mut self) -> PushOutcome {
        self.touched.sort_unstable();
        self.touched.dedup();
        PushOutcome {
            state: self.state,
            touched: self.touched,
            pushes: self.pushes,
            edge_work: self.edge_work,
        }
    }
}

/// Terminal push state plus the vertices whose residue was ever non-zero.
#[derive(Debug, Clone)]
pub struct PushOutcome {
    pub state: PushState,
    pub touched: Vec<usize>,
    pub pushes: u64,
    pub edge_work: u64,
}

/// Runs forward push from `source` until no vertex exceeds its threshold.
pub fn forward_push(g: &Graph, source: VertexId, alpha: f64, r_max: f64) -> Result<PushState> {
    Ok(ForwardPush::new(g, source, alpha, r_max)?.run().state)
}

/// One alpha-terminating random walk; returns the vertex it stops at and the
/// number of moves made.
pub fn random_walk<R: Rng + ?Sized>(g: &Graph, start: VertexId, alpha: f64, rng: &mut R) -> VertexId {
    walk_counting(g, start as usize, alpha, rng).0 as VertexId
}

#[inline]
fn walk_counting<R: Rng + ?Sized>(g: &Graph, start: usize, alpha: f64, rng: &mut R) -> (usize, u64) {
    let mut cur = start;
    let mut steps = 0;
    loop {
        let nbrs = g.neighbors_of(cur);
        if nbrs.is_empty() || rng.gen::<f64>() < alpha {
            return (cur, steps);
        }
        cur = nbrs[rng.gen_range(0..nbrs.len())] as usize;
        steps += 1;
    }
}

/// Sparse PPR estimate for one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PprEstimate {
    pub source: VertexId,
    pub scores: BTreeMap<VertexId, f64>,
    pub params: PprParams,
    pub walks_performed: u64,
    /// Edge relaxations during push plus walk moves; a clock-free cost measure.
    pub work: u64,
}

impl PprEstimate {
    pub fn score(&self, t: VertexId) -> f64 {
        self.scores.get(&t).copied().unwrap_or(0.0)
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for (&t, &x) in &self.scores {
            v[t as usize] = x;
        }
        v
    }

    /// The `limit` highest-scoring targets, ties broken by vertex id.
    pub fn top(&self, limit: usize) -> Vec<(VertexId, f64)> {
        let mut all: Vec<_> = self.scores.iter().map(|(&t, &x)| (t, x)).collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        all.truncate(limit);
        all
    }
}

/// Forward push followed by residue-compensating random walks.
///
/// Every vertex `v` left with residue `r > 0` starts `ceil(r * omega)` walks;
/// each walk credits `r / walks(v)` to the vertex it stops at. Walk `i` of
/// the query (counted across vertices in ascending id order) draws from
/// stream `i` of the generator seeded with `seed`.
pub fn fora_query(g: &Graph, source: VertexId, params: &PprParams, seed: u64) -> Result<PprEstimate> {
    let push = ForwardPush::new(g, source, params.alpha, params.r_max)?.run();
    let PushState { reserve, residue, .. } = &push.state;

    let mut scores = BTreeMap::new();
    for &v in &push.touched {
        if reserve[v] > 0.0 {
            scores.insert(v as VertexId, reserve[v]);
        }
    }

    let mut streams = WalkStreams::new(seed);
    let mut walk_index = 0u64;
    let mut moves = 0u64;
    for &v in &push.touched {
        let r = residue[v];
        if r <= 0.0 {
            continue;
        }
        let count = (r * params.omega as f64).ceil().max(1.0) as u64;
        let credit = r / count as f64;
        for _ in 0..count {
            let (end, steps) = walk_counting(g, v, params.alpha, streams.walk(walk_index));
            walk_index += 1;
            moves += steps;
            *scores.entry(end as VertexId).or_insert(0.0) += credit;
        }
    }

    Ok(PprEstimate {
        source,
        scores,
        params: *params,
        walks_performed: walk_index,
        work: push.edge_work + moves,
    })
}
