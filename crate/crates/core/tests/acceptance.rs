//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

#![allow(clippy::needless_range_loop)]

mod common;

use common::Fixed;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use coreplan::executor::{self, simulate, Backend};
use coreplan::manifest::{self, RunManifest};
use coreplan::planner::{self, allocate, slot_cores, Bounds, Plan, PlanConfig, PlanMode, SamplePolicy};
use coreplan::pool::{secs_to_nanos, Nanos};
use coreplan::ppr::{self, derive_params, power_iteration_ppr, ForwardPush, PprParamsInput};
use coreplan::workload::{self, SeededSynthetic, SyntheticWorkload, TimingStats};
use coreplan::{Error, Graph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FORMULA_REL_TOL: f64 = 1e-12;
const FORMULA_CASES: usize = 1_000;
const BRUTE_MAX_QUERIES: usize = 500;
const ORACLE_PLANS: usize = 500;
const ORACLE_MAX_QUERIES: usize = 20;
const CYCLE_SCORE: f64 = 0.555556;
const CYCLE_TOL: f64 = 1e-6;
const SUM_TOL: f64 = 1e-9;
const RANDOM_GRAPHS: usize = 100;
const MAX_SMALL_N: usize = 50;
const MASS_TOL: f64 = 1e-12;
const DECOMPOSITION_TOL: f64 = 1e-6;
const FORA_SEEDS: u64 = 200;
const FORA_MAX_FAILURES: usize = 20;
const ALPHA: f64 = 0.2;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sample_size_at_99() -> Result<String, String> {
    let s = planner::sample_size(2.576, 0.50, 0.05).map_err(|e| e.to_string())?;
    ensure(s == 664, || format!("sample_size(2.576, 0.5, 0.05) = {s}, expected 664"))?;
    Ok("sample_size(2.576, 0.50, 0.05) = 664".into())
}

fn formula_suite() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF0);
    let mut worst_lemma = 0f64;
    let mut worst_hoeffding = 0f64;
    for _ in 0..FORMULA_CASES {
        let x = rng.gen_range(1..1_000_000usize);
        let t_max = rng.gen_range(1e-4..100.0);
        let deadline = t_max * (1.0 + rng.gen_range(1e-3..1e3));
        let got = planner::lemma1_bound(x, deadline, t_max).map_err(|e| e.to_string())?;
        let exact = Fixed::int(x as u64).mul(&Fixed::from_f64(t_max)).div(&Fixed::from_f64(deadline));
        worst_lemma = worst_lemma.max(common::rel_err(got, &exact));

        let s = rng.gen_range(1..1_000usize);
        let durations: Vec<Nanos> = (0..s).map(|_| rng.gen_range(1_000..10_000_000_000u64)).collect();
        let factor = [1.0, 1.5, 2.0, 3.0][rng.gen_range(0..4)];
        let p_f = rng.gen_range(1e-6..0.99);
        let stats = TimingStats::new(durations.clone(), 1, factor, 0).map_err(|e| e.to_string())?;
        let got = planner::hoeffding_baseline(x, deadline, &stats, p_f).map_err(|e| e.to_string())?;

        let billion = Fixed::int(1_000_000_000);
        let sum: u64 = durations.iter().sum();
        let t_bar = Fixed::int(sum).div(&Fixed::int(s as u64)).div(&billion);
        let t_max_ns = *durations.iter().max().unwrap();
        // t_hat is a whole number of nanoseconds: ceil(t_max * factor)
        let twice = t_max_ns * (2.0 * factor) as u64;
        let t_hat = Fixed::int(twice.div_ceil(2)).div(&billion);
        let log = Fixed::int(2).div(&Fixed::from_f64(p_f)).ln();
        let spread = t_hat.mul(&t_hat).mul(&log).div(&Fixed::int(2 * s as u64)).sqrt();
        let exact = Fixed::int(x as u64).div(&Fixed::from_f64(deadline)).mul(&t_bar.add(&spread));
        worst_hoeffding = worst_hoeffding.max(common::rel_err(got, &exact));
    }
    ensure(worst_lemma <= FORMULA_REL_TOL && worst_hoeffding <= FORMULA_REL_TOL, || {
        format!("worst relative error: lower bound {worst_lemma:e}, Hoeffding {worst_hoeffding:e}")
    })?;
    Ok(format!(
        "{FORMULA_CASES} cases, worst relative error {worst_lemma:.1e} (lower bound), {worst_hoeffding:.1e} (Hoeffding)"
    ))
}

fn planner_brute_force() -> Result<String, String> {
    let mut triples = 0u64;
    for x in 2..=BRUTE_MAX_QUERIES {
        for s in 1..x {
            let rest = x - s;
            for ell in 1..=rest {
                let k = slot_cores(x, s, ell).map_err(|e| e.to_string())?;
                ensure((k - 1) * ell < rest && rest <= k * ell, || {
                    format!("X={x} s={s} ell={ell}: k={k} is not the ceiling")
                })?;
                triples += 1;
            }
        }
    }
    // the partition only depends on how many queries remain
    let mut partitions = 0u64;
    for rest in 1..BRUTE_MAX_QUERIES {
        let queries: Vec<usize> = (1..=rest).collect();
        for ell in 1..=rest {
            let k = slot_cores(rest + 1, 1, ell).map_err(|e| e.to_string())?;
            let slots = allocate(&queries, ell, k).map_err(|e| e.to_string())?;
            ensure(slots.len() == ell && slots.iter().all(|s| s.len() <= k), || {
                format!("{rest} queries, ell={ell}: wrong slot shape")
            })?;
            ensure(slots.concat() == queries, || format!("{rest} queries, ell={ell}: not a partition"))?;
            partitions += 1;
        }
    }
    Ok(format!("{triples} (X, s, ell) triples, {partitions} allocations checked"))
}

fn schedule_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5C);
    let mut entries = 0;
    for case in 0..ORACLE_PLANS {
        let x = rng.gen_range(2..=ORACLE_MAX_QUERIES);
        let s = rng.gen_range(1..x);
        let ell = rng.gen_range(1..=x - s);
        let k = slot_cores(x, s, ell).map_err(|e| e.to_string())?;
        let remaining: Vec<usize> = (s..x).collect();
        let plan = Plan {
            mode: if rng.gen_bool(0.5) { PlanMode::Real } else { PlanMode::Ideal },
            total_queries: x,
            deadline: 1.0,
            d: 1.0,
            s,
            ell,
            k,
            required_cores: k,
            assignment: allocate(&remaining, ell, k).map_err(|e| e.to_string())?,
            bounds: Bounds {
                lemma1: 0.0,
                hoeffding: None,
            },
            timing: None,
        };
        let c = rng.gen_range(1..=s);
        let durations: Vec<Nanos> = (0..x).map(|_| rng.gen_range(1..50)).collect();
        let exec = simulate(&plan, &durations, c, 2.0).map_err(|e| e.to_string())?;

        let pre_workers = if plan.mode == PlanMode::Ideal { s } else { c };
        let sample: Vec<usize> = (0..s).collect();
        let pre = common::tick_schedule(&sample, &durations, pre_workers, 0);
        let mut clock = pre.iter().map(|r| r.3).max().unwrap();
        let mut totals = vec![0u64; k];
        let mut slot_no = 0;
        for slot in &plan.assignment {
            if slot.is_empty() {
                continue;
            }
            let workers = k.min(slot.len());
            let runs = common::tick_schedule(slot, &durations, workers, clock);
            let busy = common::busy_totals(&runs, workers);
            let reported: Vec<u64> = exec.report.per_slot[slot_no]
                .worker_totals
                .iter()
                .map(|&t| secs_to_nanos(t))
                .collect();
            ensure(reported == busy, || {
                format!("plan {case}, slot {slot_no}: worker totals {reported:?} vs brute force {busy:?}")
            })?;
            for (j, t) in busy.into_iter().enumerate() {
                totals[j] += t;
            }
            clock = runs.iter().map(|r| r.3).max().unwrap();
            entries += runs.len();
            slot_no += 1;
        }
        let t_max = totals.iter().copied().max().unwrap();
        ensure(secs_to_nanos(exec.report.t_max_total) == t_max, || {
            format!("plan {case}: T_max {} vs brute force {t_max}", exec.report.t_max_total)
        })?;
    }
    Ok(format!("{ORACLE_PLANS} plans, {entries} slot executions identical"))
}

fn unconstrained_feasibility() -> Result<String, String> {
    let mut planned = 0;
    let mut rejected = 0;
    let queries = [2usize, 11, 100, 665, 1_000, 4_321, 10_000];
    let deadlines = [1.0, 7.5, 50.0, 100.0, 999.9, 3_600.0];
    let times = [0.001, 0.3, 1.0, 2.0, 7.0, 13.7];
    for &x in &queries {
        for policy in [SamplePolicy::Count { s: 1 }, SamplePolicy::Count { s: 10 }, SamplePolicy::Cochran] {
            for &deadline in &deadlines {
                for &t in &times {
                    let mut config = PlanConfig::new(x, deadline);
                    config.sample_policy = policy;
                    if config.sample_count().unwrap() >= x {
                        continue;
                    }
                    let model = SeededSynthetic {
                        workload: SyntheticWorkload::Constant { t },
                        seed: 0,
                    };
                    match executor::run_ideal(&config, &Backend::Virtual(&model)) {
                        Ok((_, exec)) => {
                            let r = &exec.report;
                            ensure(r.feasible && r.retries == 0, || {
                                format!("X={x} T={deadline} t={t} {policy}: check {} > deadline", r.check_value)
                            })?;
                            ensure(r.total_elapsed <= deadline * (1.0 + 1e-12), || {
                                format!("X={x} T={deadline} t={t} {policy}: finished at {}", r.total_elapsed)
                            })?;
                            planned += 1;
                        }
                        Err(Error::Infeasible(_)) => rejected += 1,
                        Err(e) => return Err(format!("X={x} T={deadline} t={t}: {e}")),
                    }
                }
            }
        }
    }
    Ok(format!("{planned} planned runs all feasible ({rejected} rejected as infeasible)"))
}

fn bounded_worked_example() -> Result<String, String> {
    let model = SeededSynthetic {
        workload: SyntheticWorkload::Constant { t: 2.0 },
        seed: 0,
    };
    let mut config = PlanConfig::new(110, 50.0);
    config.sample_policy = SamplePolicy::Count { s: 10 };
    let (plan, exec) = executor::run_real(&config, &Backend::Virtual(&model)).map_err(|e| e.to_string())?;
    let r = &exec.report;
    ensure(plan.k == 7 && plan.ell == 15, || format!("k={} ell={}", plan.k, plan.ell))?;
    ensure(r.total_elapsed == 50.0 && r.check_value == 50.0 && r.feasible, || {
        format!("completion {} check {}", r.total_elapsed, r.check_value)
    })?;
    config.c_max = Some(4);
    match executor::run_real(&config, &Backend::Virtual(&model)) {
        Err(Error::ResourceGate {
            available: 4,
            required: 5,
        }) => {}
        other => return Err(format!("c_max=4 should hit the resource gate, got {:?}", other.map(|p| p.0.k))),
    }
    Ok("k=7, ell=15, completion 50s; c_max=4 rejected (needs 5)".into())
}

fn ppr_oracle() -> Result<String, String> {
    let cycle = Graph::from_edges(&[(0, 1), (1, 0)], true).unwrap();
    let pi = power_iteration_ppr(&cycle, 0, ALPHA, 1e-14, 100_000).map_err(|e| e.to_string())?;
    ensure((pi[0] - CYCLE_SCORE).abs() <= CYCLE_TOL, || format!("pi(0,0) = {}", pi[0]))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x70);
    let mut worst = 0f64;
    let mut dead_ends = 0;
    for _ in 0..RANDOM_GRAPHS {
        let n = rng.gen_range(1..=MAX_SMALL_N);
        let (m, directed) = (rng.gen_range(0..4 * n), rng.gen_bool(0.7));
        let g = common::random_graph(&mut rng, n, m, 0.2, directed);
        dead_ends += (0..g.n() as u32).filter(|&v| g.out_degree(v).unwrap() == 0).count();
        let s = rng.gen_range(0..g.n() as u32);
        let pi = power_iteration_ppr(&g, s, ALPHA, 1e-13, 100_000).map_err(|e| e.to_string())?;
        worst = worst.max((pi.iter().sum::<f64>() - 1.0).abs());
    }
    ensure(worst <= SUM_TOL, || format!("worst |sum - 1| = {worst:e}"))?;
    Ok(format!(
        "pi(0,0) = {:.6}; {RANDOM_GRAPHS} graphs ({dead_ends} dead ends) sum to 1 within {worst:.1e}",
        pi[0]
    ))
}

fn push_invariants() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x80);
    let mut steps = 0u64;
    let mut worst_mass = 0f64;
    let mut worst_decomposition = 0f64;
    for case in 0..RANDOM_GRAPHS {
        let n = rng.gen_range(1..=MAX_SMALL_N);
        let (m, directed) = (rng.gen_range(0..4 * n), rng.gen_bool(0.5));
        let g = common::random_graph(&mut rng, n, m, 0.15, directed);
        let s = rng.gen_range(0..g.n() as u32);
        let r_max = 10f64.powf(-rng.gen_range(1.0..7.0));
        let mut push = ForwardPush::new(&g, s, ALPHA, r_max).map_err(|e| e.to_string())?;
        loop {
            let st = push.state();
            let mass = st.reserve.iter().sum::<f64>() + st.residue.iter().sum::<f64>();
            worst_mass = worst_mass.max((mass - 1.0).abs());
            steps += 1;
            if !push.step() {
                break;
            }
        }
        let st = push.state().clone();
        for v in 0..g.n() as u32 {
            let bound = r_max * g.out_degree(v).unwrap() as f64;
            ensure(st.residue[v as usize] <= bound, || {
                format!("graph {case}: residue {} at {v} exceeds {bound}", st.residue[v as usize])
            })?;
        }
        let columns: Vec<Vec<f64>> = (0..g.n() as u32)
            .map(|v| power_iteration_ppr(&g, v, ALPHA, 1e-13, 100_000).unwrap())
            .collect();
        for t in 0..g.n() {
            let rebuilt: f64 = st.reserve[t] + (0..g.n()).map(|v| st.residue[v] * columns[v][t]).sum::<f64>();
            worst_decomposition = worst_decomposition.max((rebuilt - columns[s as usize][t]).abs());
        }
    }
    ensure(worst_mass <= MASS_TOL, || format!("mass drifted by {worst_mass:e}"))?;
    ensure(worst_decomposition <= DECOMPOSITION_TOL, || {
        format!("decomposition off by {worst_decomposition:e}")
    })?;
    Ok(format!(
        "{steps} push states, mass drift {worst_mass:.1e}, decomposition error {worst_decomposition:.1e}"
    ))
}

fn fora_guarantee() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x90);
    let g = common::random_graph(&mut rng, 50, 200, 0.1, true);
    let input = PprParamsInput {
        alpha: ALPHA,
        epsilon: 0.5,
        delta: 0.02,
        p_f: 0.05,
        ..PprParamsInput::defaults_for(g.n())
    };
    let params = derive_params(&g, &input).map_err(|e| e.to_string())?;
    let source = (0..g.n() as u32).max_by_key(|&v| g.out_degree(v).unwrap()).unwrap();
    let truth = power_iteration_ppr(&g, source, ALPHA, 1e-14, 100_000).map_err(|e| e.to_string())?;
    let significant: Vec<usize> = (0..g.n()).filter(|&t| truth[t] >= input.delta).collect();
    ensure(significant.len() > 1, || "too few significant targets".into())?;
    let mut failures = 0;
    for seed in 0..FORA_SEEDS {
        let est = ppr::fora_query(&g, source, &params, seed).map_err(|e| e.to_string())?;
        if significant
            .iter()
            .any(|&t| (est.score(t as u32) - truth[t]).abs() > input.epsilon * truth[t])
        {
            failures += 1;
        }
    }
    ensure(failures <= FORA_MAX_FAILURES, || {
        format!("{failures} of {FORA_SEEDS} runs violated the relative error bound")
    })?;
    Ok(format!(
        "{failures}/{FORA_SEEDS} runs outside the bound on {} targets (omega={}, r_max={:.2e})",
        significant.len(),
        params.omega,
        params.r_max
    ))
}

/// Preferential-attachment graph: each new vertex links to `per` earlier
/// vertices chosen proportionally to degree.
fn attachment_graph(n: u32, per: usize, seed: u64) -> Vec<(u32, u32)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ends: Vec<u32> = vec![0, 1];
    let mut edges = vec![(0, 1)];
    for v in 2..n {
        for _ in 0..per.min(v as usize) {
            let u = ends[rng.gen_range(0..ends.len())];
            edges.push((v, u));
            ends.push(u);
            ends.push(v);
        }
    }
    edges
}

fn baseline_comparison() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("attach10k.txt");
    let edges = attachment_graph(10_000, 5, 0xA0);
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| e.to_string())?);
        for (u, v) in &edges {
            writeln!(f, "{u} {v}").map_err(|e| e.to_string())?;
        }
    }
    let g = Graph::from_edges(&edges, false).map_err(|e| e.to_string())?;
    let input = PprParamsInput {
        delta: 1e-3,
        p_f: 0.01,
        ..PprParamsInput::defaults_for(g.n())
    };
    let params = derive_params(&g, &input).map_err(|e| e.to_string())?;
    let probe = workload::generate_queries(&g, 20, 0xA1).map_err(|e| e.to_string())?;
    let mut probe_time = 0.0;
    for (i, &s) in probe.sources.iter().enumerate() {
        probe_time += workload::time_query(&g, s, &params, i as u64).map_err(|e| e.to_string())?;
    }
    let mean = probe_time / probe.len() as f64;
    let deadline = 60.0 * mean;

    let m = RunManifest {
        dataset: Some("attach10k".into()),
        graph: Some(path),
        queries: vec![200, 400, 600],
        d: vec![1.0, 0.85],
        deadline,
        delta: Some(input.delta),
        p_f: Some(input.p_f),
        sample_policy: SamplePolicy::Fraction { f: 0.05 },
        t_hat_factor: 2.0,
        seed: 0xA2,
        ..RunManifest::default()
    };
    let rows = manifest::cmd_baseline(&m).map_err(|e| e.to_string())?;
    ensure(rows.len() == 6, || format!("{} rows", rows.len()))?;
    let mut summary = Vec::new();
    for r in &rows {
        ensure(r.k <= r.baseline_cores, || {
            format!("X={} d={}: k={} exceeds the baseline {}", r.queries, r.d, r.k, r.baseline_cores)
        })?;
    }
    for x in [200, 400, 600] {
        let k_at = |d: f64| rows.iter().find(|r| r.queries == x && r.d == d).map(|r| r.k).unwrap();
        let (full, scaled) = (k_at(1.0), k_at(0.85));
        ensure(scaled >= full, || format!("X={x}: k(0.85)={scaled} < k(1.00)={full}"))?;
        let base = rows.iter().find(|r| r.queries == x).unwrap().baseline_cores;
        summary.push(format!("X={x}: k={full}/{scaled} baseline={base}"));
    }
    Ok(format!("deadline {deadline:.3}s; {}", summary.join("; ")))
}

fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let graph = dir.path().join("g.txt");
    let mut text = String::new();
    for (u, v) in attachment_graph(300, 3, 0xB0) {
        text.push_str(&format!("{u} {v}\n"));
    }
    std::fs::write(&graph, text).map_err(|e| e.to_string())?;
    let synthetic = RunManifest {
        synthetic: Some(SyntheticWorkload::Lognormal {
            mu: 0.0,
            sigma: 0.5,
            t_hat: 6.0,
        }),
        queries: vec![1_500],
        deadline: 3_000.0,
        virtual_time: true,
        seed: 7,
        ..RunManifest::default()
    };
    let fora = RunManifest {
        graph: Some(graph),
        queries: vec![120],
        deadline: 1.0,
        sample_policy: SamplePolicy::Count { s: 12 },
        virtual_time: true,
        seed: 7,
        ..RunManifest::default()
    };
    let mut sizes = Vec::new();
    for m in [synthetic, fora] {
        let path = dir.path().join("manifest.json");
        m.save(&path).map_err(|e| e.to_string())?;
        let run = || -> Result<String, String> {
            let loaded = RunManifest::load(&path).map_err(|e| e.to_string())?;
            let (report, _) = manifest::cmd_run(&loaded, None).map_err(|e| e.to_string())?;
            manifest::to_json(&report).map_err(|e| e.to_string())
        };
        let (a, b) = (run()?, run()?);
        ensure(a == b, || "report JSON differs between runs".into())?;
        sizes.push(a.len());
    }
    Ok(format!("synthetic and graph reports byte-identical ({} and {} bytes)", sizes[0], sizes[1]))
}

fn main() {
    let checks: [(&str, Check); 11] = [
        ("sample size at 99% confidence", sample_size_at_99),
        ("core-count formulas vs exact arithmetic", formula_suite),
        ("slot arithmetic brute force", planner_brute_force),
        ("virtual schedule vs brute-force simulator", schedule_oracle),
        ("unconstrained plans meet the deadline", unconstrained_feasibility),
        ("bounded worked example", bounded_worked_example),
        ("PPR oracle", ppr_oracle),
        ("forward push invariants", push_invariants),
        ("FORA accuracy guarantee", fora_guarantee),
        ("scaled baseline comparison", baseline_comparison),
        ("virtual runs are deterministic", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.2}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2}s): {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
