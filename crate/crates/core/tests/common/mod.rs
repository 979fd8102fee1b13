//! Helpers shared by the integration tests: random graphs, a brute-force
//! schedule simulator and high-precision formula evaluations.
#![allow(dead_code)]

use coreplan::Graph;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;

/// Random multigraph on `n` vertices where roughly `dead_share` of the
/// vertices have no out-edges. Vertex `n - 1` always appears.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, edges: usize, dead_share: f64, directed: bool) -> Graph {
    let dead: Vec<bool> = (0..n).map(|_| rng.gen_bool(dead_share)).collect();
    let live: Vec<u32> = (0..n as u32).filter(|&v| !dead[v as usize]).collect();
    let mut list = Vec::with_capacity(edges + 1);
    if !live.is_empty() {
        for _ in 0..edges {
            let u = live[rng.gen_range(0..live.len())];
            let v = rng.gen_range(0..n as u32);
            list.push((u, v));
        }
    }
    let last = n as u32 - 1;
    let anchor = live.first().copied().unwrap_or(last);
    list.push((anchor, last));
    Graph::from_edges(&list, directed).unwrap()
}

/// One executed query: `(query, worker, start, end)`.
pub type Run = (usize, usize, u64, u64);

/// Greedy list schedule stepped one time unit at a time: at every tick each
/// idle worker, in index order, takes the next query. Durations must be
/// positive.
pub fn tick_schedule(queries: &[usize], durations: &[u64], workers: usize, start: u64) -> Vec<Run> {
    let mut busy_until = vec![start; workers];
    let mut next = 0;
    let mut runs = Vec::new();
    let mut now = start;
    while next < queries.len() {
        for (w, until) in busy_until.iter_mut().enumerate() {
            if next < queries.len() && *until <= now {
                let q = queries[next];
                next += 1;
                runs.push((q, w, now, now + durations[q]));
                *until = now + durations[q];
            }
        }
        now += 1;
    }
    runs
}

/// Per-worker busy time of a set of runs.
pub fn busy_totals(runs: &[Run], workers: usize) -> Vec<u64> {
    let mut totals = vec![0; workers];
    for &(_, w, s, e) in runs {
        totals[w] += e - s;
    }
    totals
}

/// Fractional bits of the fixed-point oracle values.
pub const BITS: u32 = 192;

/// A non-negative real held as `value / 2^BITS`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fixed(BigInt);

impl Fixed {
    pub fn from_ratio(x: &BigRational) -> Fixed {
        Fixed((x.numer() << BITS) / x.denom())
    }

    /// Exact binary value of `x`, truncated to `BITS` fractional bits.
    pub fn from_f64(x: f64) -> Fixed {
        Fixed::from_ratio(&BigRational::from_float(x).expect("finite input"))
    }

    pub fn int(x: u64) -> Fixed {
        Fixed(BigInt::from(x) << BITS)
    }

    pub fn add(&self, o: &Fixed) -> Fixed {
        Fixed(&self.0 + &o.0)
    }

    pub fn sub(&self, o: &Fixed) -> Fixed {
        Fixed(&self.0 - &o.0)
    }

    pub fn mul(&self, o: &Fixed) -> Fixed {
        Fixed((&self.0 * &o.0) >> BITS)
    }

    pub fn div(&self, o: &Fixed) -> Fixed {
        Fixed((&self.0 << BITS) / &o.0)
    }

    pub fn sqrt(&self) -> Fixed {
        Fixed((&self.0 << BITS).sqrt())
    }

    /// Natural logarithm for `self >= 1`.
    pub fn ln(&self) -> Fixed {
        let one = Fixed::int(1);
        let two = Fixed::int(2);
        assert!(*self >= one);
        let mut y = self.clone();
        let mut k = 0u64;
        while y >= two {
            y = Fixed(&y.0 >> 1);
            k += 1;
        }
        let ln2 = atanh(&one.div(&Fixed::int(3))).add(&atanh(&one.div(&Fixed::int(3))));
        let u = y.sub(&one).div(&y.add(&one));
        let t = atanh(&u);
        t.add(&t).add(&Fixed(&ln2.0 * BigInt::from(k)))
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().expect("representable") / 2f64.powi(BITS as i32)
    }
}

/// `atanh(u)` for `0 <= u <= 1/3` by its power series.
fn atanh(u: &Fixed) -> Fixed {
    let u2 = u.mul(u);
    let mut power = u.clone();
    let mut sum = BigInt::zero();
    let mut i = 1u64;
    while !power.0.is_zero() {
        sum += &power.0 / BigInt::from(i);
        power = power.mul(&u2);
        i += 2;
    }
    Fixed(sum)
}

pub fn rel_err(got: f64, exact: &Fixed) -> f64 {
    let e = exact.to_f64();
    if e == 0.0 {
        got.abs()
    } else {
        ((got - e) / e).abs()
    }
}
