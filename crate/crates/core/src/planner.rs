//! Closed-form planning: sample size, slot count, queries per slot, and the
//! two core-count bounds used for comparison.
//!
//! Bounds are returned unrounded; callers take the ceiling when comparing
//! them with integer core counts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::TimingStats;

/// How many queries to time before planning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SamplePolicy {
    /// `ceil(Z^2 p (1 - p) / e^2)`.
    Cochran,
    /// `ceil(f * X)` for a reference query count `X`.
    Fraction { f: f64 },
    /// A fixed number of samples.
    Count { s: usize },
}

impl fmt::Display for SamplePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplePolicy::Cochran => f.write_str("cochran"),
            SamplePolicy::Fraction { f: x } => write!(f, "fraction={x}"),
            SamplePolicy::Count { s } => write!(f, "count={s}"),
        }
    }
}

impl FromStr for SamplePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "cochran" {
            return Ok(SamplePolicy::Cochran);
        }
        if let Some(n) = s.strip_prefix("count=") {
            return match n.parse::<usize>() {
                Ok(n) if n > 0 => Ok(SamplePolicy::Count { s: n }),
                _ => Err(Error::validation(format!("sample count must be a positive integer, got {n:?}"))),
            };
        }
        let f = s
            .strip_prefix("fraction=")
            .and_then(|x| x.parse::<f64>().ok())
            .ok_or_else(|| Error::validation(format!("sample policy must be cochran, fraction=F or count=N, got {s:?}")))?;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::validation(format!("sample fraction must lie in (0, 1], got {f}")));
        }
        Ok(SamplePolicy::Fraction { f })
    }
}

/// Inputs shared by both planning algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub total_queries: usize,
    /// Deadline in seconds.
    pub deadline: f64,
    /// Available cores; `None` means unbounded.
    pub c_max: Option<usize>,
    /// Scaling factor on the deadline, `0 < d <= 1`.
    pub d: f64,
    /// Cores used for preprocessing.
    pub c: usize,
    pub z: f64,
    pub p: f64,
    pub e: f64,
    pub sample_policy: SamplePolicy,
    /// Failure probability of the Hoeffding baseline.
    pub p_f: f64,
    /// `t_hat = t_hat_factor * t_max`.
    pub t_hat_factor: f64,
    /// Bound on re-preprocessing rounds of the unconstrained algorithm.
    pub max_retries: u32,
}

impl PlanConfig {
    /// 99% confidence, `p = 0.5`, `e = 0.05`, `d = 1`, `c = 1`.
    pub fn new(total_queries: usize, deadline: f64) -> Self {
        PlanConfig {
            total_queries,
            deadline,
            c_max: None,
            d: 1.0,
            c: 1,
            z: 2.576,
            p: 0.5,
            e: 0.05,
            sample_policy: SamplePolicy::Cochran,
            p_f: 0.05,
            t_hat_factor: 2.0,
            max_retries: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.total_queries == 0 {
            return bad("query count must be at least 1".into());
        }
        if !(self.deadline > 0.0 && self.deadline.is_finite()) {
            return bad(format!("deadline must be positive, got {}", self.deadline));
        }
        if !(self.d > 0.0 && self.d <= 1.0) {
            return bad(format!("scaling factor d must lie in (0, 1], got {}", self.d));
        }
        if self.c == 0 {
            return bad("preprocessing cores c must be at least 1".into());
        }
        if self.c_max == Some(0) {
            return bad("c_max must be at least 1".into());
        }
        if !(self.p_f > 0.0 && self.p_f < 1.0) {
            return bad(format!("p_f must lie in (0, 1), got {}", self.p_f));
        }
        if !(self.t_hat_factor >= 1.0) {
            return bad(format!("t_hat factor must be at least 1, got {}", self.t_hat_factor));
        }
        check_sampling(self.z, self.p, self.e)
    }

    /// Sample size for this configuration. Fraction policies apply to
    /// `reference_queries`, normally the smallest query count of a sweep.
    pub fn sample_count_for(&self, reference_queries: usize) -> Result<usize> {
        match self.sample_policy {
            SamplePolicy::Cochran => sample_size(self.z, self.p, self.e),
            SamplePolicy::Fraction { f } => Ok(ceil_guarded(f * reference_queries as f64).max(1.0) as usize),
            SamplePolicy::Count { s } => Ok(s),
        }
    }

    pub fn sample_count(&self) -> Result<usize> {
        self.sample_count_for(self.total_queries)
    }
}

fn check_sampling(z: f64, p: f64, e: f64) -> Result<()> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::validation(format!("z-score must be positive, got {z}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::validation(format!("proportion p must lie in (0, 1), got {p}")));
    }
    if !(e > 0.0 && e < 1.0) {
        return Err(Error::validation(format!("sampling error e must lie in (0, 1), got {e}")));
    }
    Ok(())
}

/// Ceiling that snaps values within rounding noise of an integer.
fn ceil_guarded(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// `floor(num / den)` for `den > 0`, corrected so that `q * den <= num < (q + 1) * den`
/// holds in floating point.
fn floor_div(num: f64, den: f64) -> f64 {
    let mut q = (num / den).floor();
    if q * den > num {
        q -= 1.0;
    } else if (q + 1.0) * den <= num {
        q += 1.0;
    }
    q
}

/// Cochran's sample size `ceil(Z^2 p (1 - p) / e^2)`.
pub fn sample_size(z: f64, p: f64, e: f64) -> Result<usize> {
    check_sampling(z, p, e)?;
    Ok(ceil_guarded(z * z * p * (1.0 - p) / (e * e)).max(1.0) as usize)
}

/// Two-sided standard normal quantile for the supported confidence levels.
pub fn z_for_confidence(level: u32) -> Result<f64> {
    match level {
        90 => Ok(1.645),
        95 => Ok(1.960),
        99 => Ok(2.576),
        other => Err(Error::validation(format!(
            "confidence level {other}% is not tabulated (use 90, 95 or 99, or pass the z-score directly)"
        ))),
    }
}

/// Minimum cores `X * t_max / T` for finishing `x` queries by `deadline`.
pub fn lemma1_bound(x: usize, deadline: f64, t_max: f64) -> Result<f64> {
    if !(t_max > 0.0) {
        return Err(Error::validation(format!("t_max must be positive, got {t_max}")));
    }
    if !(deadline > t_max) {
        return Err(Error::Infeasible(format!(
            "deadline {deadline}s does not exceed the longest sampled query ({t_max}s)"
        )));
    }
    Ok(x as f64 * t_max / deadline)
}

/// Hoeffding baseline `(X / T) (t_bar + sqrt(t_hat^2 ln(2 / p_f) / (2k)))`.
pub fn hoeffding_bound(x: usize, deadline: f64, t_bar: f64, t_hat: f64, k: usize, p_f: f64) -> Result<f64> {
    if !(p_f > 0.0 && p_f < 1.0) {
        return Err(Error::validation(format!("p_f must lie in (0, 1), got {p_f}")));
    }
    if k == 0 {
        return Err(Error::validation("Hoeffding baseline needs at least one sample"));
    }
    if !(deadline > 0.0) {
        return Err(Error::validation("deadline must be positive"));
    }
    let spread = (t_hat * t_hat * (2.0 / p_f).ln() / (2.0 * k as f64)).sqrt();
    Ok(x as f64 / deadline * (t_bar + spread))
}

/// [`hoeffding_bound`] with `t_bar`, `t_hat` and `k` taken from `stats`.
pub fn hoeffding_baseline(x: usize, deadline: f64, stats: &TimingStats, p_f: f64) -> Result<f64> {
    hoeffding_bound(x, deadline, stats.t_bar(), stats.t_hat(), stats.sample_count(), p_f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    /// Unconstrained cores, preprocessing fully parallel.
    Ideal,
    /// Bounded cores, preprocessing on `c` cores, scaled deadline.
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lemma1: f64,
    pub hoeffding: Option<f64>,
}

/// Preprocessing statistics a plan was computed from, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanTiming {
    pub t_max: f64,
    pub t_pre: f64,
    pub t_avg: f64,
    pub t_bar: f64,
    pub t_hat: f64,
    pub c: usize,
}

impl PlanTiming {
    pub fn from_stats(stats: &TimingStats) -> Self {
        PlanTiming {
            t_max: stats.t_max(),
            t_pre: stats.t_pre(),
            t_avg: stats.t_avg(),
            t_bar: stats.t_bar(),
            t_hat: stats.t_hat(),
            c: stats.cores,
        }
    }
}

/// A slot schedule for the non-sample queries.
///
/// Query indices `0..s` are the sample; `s..total_queries` are assigned to
/// slots in contiguous blocks of at most `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub mode: PlanMode,
    pub total_queries: usize,
    pub deadline: f64,
    pub d: f64,
    pub s: usize,
    pub ell: usize,
    pub k: usize,
    /// Peak cores needed, including preprocessing where it is the larger.
    pub required_cores: usize,
    pub assignment: Vec<Vec<usize>>,
    pub bounds: Bounds,
    pub timing: Option<PlanTiming>,
}

impl Plan {
    pub fn sample_indices(&self) -> std::ops::Range<usize> {
        0..self.s
    }

    /// Checks the structural invariants; used when loading plans from disk.
    pub fn validate(&self) -> Result<()> {
        let rest = self.total_queries.saturating_sub(self.s);
        if self.ell == 0 || self.k == 0 || self.assignment.len() != self.ell {
            return Err(Error::validation("plan must have ell >= 1, k >= 1 and ell slots"));
        }
        if !((self.k - 1) * self.ell < rest && rest <= self.k * self.ell) {
            return Err(Error::validation("plan k is not the ceiling of (X - s) / ell"));
        }
        let mut seen = vec![false; self.total_queries];
        for slot in &self.assignment {
            if slot.len() > self.k {
                return Err(Error::validation("a slot holds more than k queries"));
            }
            for &q in slot {
                if q < self.s || q >= self.total_queries || std::mem::replace(&mut seen[q], true) {
                    return Err(Error::validation(format!("query {q} is misassigned")));
                }
            }
        }
        if seen[self.s..].iter().any(|x| !x) {
            return Err(Error::validation("plan leaves queries unassigned"));
        }
        Ok(())
    }
}

/// Splits `queries` into `ell` contiguous slots of at most `k`: slot `i`
/// gets positions `[i k, min((i + 1) k, len))`.
pub fn allocate(queries: &[usize], ell: usize, k: usize) -> Result<Vec<Vec<usize>>> {
    if queries.len() > ell.saturating_mul(k) {
        return Err(Error::Internal(format!(
            "{} queries do not fit {ell} slots of {k}",
            queries.len()
        )));
    }
    Ok((0..ell)
        .map(|i| {
            let lo = (i * k).min(queries.len());
            let hi = ((i + 1) * k).min(queries.len());
            queries[lo..hi].to_vec()
        })
        .collect())
}

/// Cores per slot, `ceil((X - s) / ell)`.
pub fn slot_cores(x: usize, s: usize, ell: usize) -> Result<usize> {
    check_sample_fits(x, s)?;
    if ell == 0 {
        return Err(Error::validation("slot count must be at least 1"));
    }
    Ok((x - s).div_ceil(ell))
}

fn slots_and_width(x: usize, s: usize, ell: f64, hint: &str) -> Result<(usize, usize, Vec<Vec<usize>>)> {
    if !(ell >= 1.0) {
        return Err(Error::Infeasible(format!("the deadline leaves no slot after preprocessing; {hint}")));
    }
    let ell = ell as usize;
    let k = slot_cores(x, s, ell)?;
    let remaining: Vec<usize> = (s..x).collect();
    let assignment = allocate(&remaining, ell, k)?;
    Ok((ell, k, assignment))
}

fn check_sample_fits(x: usize, s: usize) -> Result<()> {
    if s == 0 {
        return Err(Error::validation("sample size must be at least 1"));
    }
    if s >= x {
        return Err(Error::validation(format!(
            "sample size {s} leaves no queries to plan out of {x}; lower the sample size or use a fraction policy"
        )));
    }
    Ok(())
}

/// Slot plan for unconstrained cores: `ell = floor((T - t_max) / t_max)`,
/// `k = ceil((X - s) / ell)`.
pub fn plan_ideal(x: usize, deadline: f64, s: usize, t_max: f64) -> Result<Plan> {
    check_sample_fits(x, s)?;
    let lemma1 = lemma1_bound(x, deadline, t_max)?;
    let ell = floor_div(deadline - t_max, t_max);
    let (ell, k, assignment) = slots_and_width(x, s, ell, "raise the deadline")?;
    Ok(Plan {
        mode: PlanMode::Ideal,
        total_queries: x,
        deadline,
        d: 1.0,
        s,
        ell,
        k,
        // preprocessing already ran s queries side by side
        required_cores: k.max(s),
        assignment,
        bounds: Bounds {
            lemma1,
            hoeffding: None,
        },
        timing: None,
    })
}

/// Slot plan under a core budget: gate on `ceil(X t_max / T) <= c_max`, then
/// `ell = floor((d T - t_pre) / t_avg)`, `k = ceil((X - s) / ell)`.
pub fn plan_real(config: &PlanConfig, stats: &TimingStats) -> Result<Plan> {
    config.validate()?;
    let x = config.total_queries;
    let s = stats.sample_count();
    check_sample_fits(x, s)?;
    let lemma1 = lemma1_bound(x, config.deadline, stats.t_max())?;
    if let Some(c_max) = config.c_max {
        let required = ceil_guarded(lemma1) as usize;
        if c_max < required {
            return Err(Error::ResourceGate {
                available: c_max,
                required,
            });
        }
    }
    let ell = floor_div(config.d * config.deadline - stats.t_pre(), stats.t_avg());
    let (ell, k, assignment) = slots_and_width(x, s, ell, "raise the deadline or the scaling factor d")?;
    let hoeffding = hoeffding_baseline(x, config.deadline, stats, config.p_f)?;
    Ok(Plan {
        mode: PlanMode::Real,
        total_queries: x,
        deadline: config.deadline,
        d: config.d,
        s,
        ell,
        k,
        required_cores: k,
        assignment,
        bounds: Bounds {
            lemma1,
            hoeffding: Some(hoeffding),
        },
        timing: Some(PlanTiming::from_stats(stats)),
    })
}
