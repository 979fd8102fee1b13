//! Bounded worker pools, in real time and in virtual time.
//!
//! Both variants use the same dispatch rule: a worker that becomes idle takes
//! the next unassigned query in list order (greedy list scheduling). In
//! virtual time, ties between workers that free up at the same instant go to
//! the lowest worker index.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nanoseconds, the storage unit for every duration and instant.
pub type Nanos = u64;

pub fn secs_to_nanos(secs: f64) -> Nanos {
    (secs * 1e9).round().max(0.0) as Nanos
}

pub fn nanos_to_secs(ns: Nanos) -> f64 {
    ns as f64 / 1e9
}

/// Monotonic time source; `now` is measured from an arbitrary origin.
pub trait Clock: Sync {
    fn now(&self) -> Nanos;
}

#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        MonotonicClock {
            origin: Instant::now(),
        }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now(&self) -> Nanos {
        self.origin.elapsed().as_nanos() as Nanos
    }
}

/// Work executed by real-time pools. `round` distinguishes retry rounds so
/// engines can vary their random streams between them.
pub trait QueryEngine: Sync {
    fn execute(&self, round: u64, query: usize) -> Result<()>;
}

/// One executed query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub query: usize,
    pub worker: usize,
    pub start: Nanos,
    pub end: Nanos,
}

impl TraceEntry {
    pub fn duration(&self) -> Nanos {
        self.end - self.start
    }
}

/// Per-worker busy time, indexed by worker.
pub fn worker_totals(trace: &[TraceEntry], workers: usize) -> Vec<Nanos> {
    let mut totals = vec![0; workers];
    for e in trace {
        totals[e.worker] += e.duration();
    }
    totals
}

/// Greedy list schedule of `durations` (in list order) over `workers`
/// workers, all idle at `start`. Entries are returned in dispatch order.
pub fn list_schedule(queries: &[usize], durations: &[Nanos], workers: usize, start: Nanos) -> Result<Vec<TraceEntry>> {
    if workers == 0 {
        return Err(Error::validation("worker count must be at least 1"));
    }
    let mut idle: BinaryHeap<Reverse<(Nanos, usize)>> = (0..workers.min(queries.len().max(1)))
        .map(|w| Reverse((start, w)))
        .collect();
    let mut trace = Vec::with_capacity(queries.len());
    for &q in queries {
        let d = *durations
            .get(q)
            .ok_or_else(|| Error::validation(format!("no duration for query {q}")))?;
        let Reverse((free_at, w)) = idle.pop().expect("at least one worker");
        let end = free_at + d;
        trace.push(TraceEntry {
            query: q,
            worker: w,
            start: free_at,
            end,
        });
        idle.push(Reverse((end, w)));
    }
    Ok(trace)
}

/// Options for real-time pools.
#[derive(Debug, Clone, Copy, Default)]
pub struct PoolOptions {
    /// Pin worker `j` to the `j`-th available core where supported.
    pub pin_cores: bool,
}

/// Runs `queries` on at most `workers` OS threads; each worker pulls the next
/// query as soon as it is idle. Durations come from `clock` snapshots taken
/// right before and after each query.
pub fn run_pool(
    queries: &[usize],
    workers: usize,
    round: u64,
    engine: &dyn QueryEngine,
    clock: &dyn Clock,
    options: PoolOptions,
) -> Result<Vec<TraceEntry>> {
    if workers == 0 {
        return Err(Error::validation("worker count must be at least 1"));
    }
    let threads = workers.min(queries.len());
    let next = AtomicUsize::new(0);
    let completed = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let cores = if options.pin_cores {
        core_affinity::get_core_ids().unwrap_or_default()
    } else {
        Vec::new()
    };

    let mut per_worker: Vec<Vec<TraceEntry>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                let (next, completed, abort, failure, cores) = (&next, &completed, &abort, &failure, &cores);
                scope.spawn(move || {
                    if !cores.is_empty() {
                        core_affinity::set_for_current(cores[w % cores.len()]);
                    }
                    let mut local = Vec::new();
                    while !abort.load(Ordering::Relaxed) {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(&q) = queries.get(i) else { break };
                        let start = clock.now();
                        if let Err(e) = engine.execute(round, q) {
                            abort.store(true, Ordering::Relaxed);
                            let mut slot = failure.lock().unwrap();
                            if slot.is_none() {
                                *slot = Some(Error::QueryFailed {
                                    query: q,
                                    completed: completed.load(Ordering::SeqCst),
                                    message: e.to_string(),
                                });
                            }
                            break;
                        }
                        let end = clock.now().max(start);
                        completed.fetch_add(1, Ordering::SeqCst);
                        local.push(TraceEntry {
                            query: q,
                            worker: w,
                            start,
                            end,
                        });
                    }
                    local
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let mut trace: Vec<TraceEntry> = per_worker.drain(..).flatten().collect();
    trace.sort_by_key(|e| (e.start, e.worker));
    Ok(trace)
}
