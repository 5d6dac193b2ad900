//! Closed-form dispatch probabilities for the single-drone thought
//! experiment: the chance that accepting a far request forfeits a later
//! one, the matching rejection bound, the resulting distance threshold,
//! and a monte-carlo oracle of the same simplified process.
//!
//! This module works in `f64` throughout: its outputs are probabilities
//! pinned to tight tolerances, which `f32` cannot honor, and it shares no
//! state with the generic simulation pipeline.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

/// Parameters of the simplified single-drone model: speed `c` (distance
/// per minute), Poisson request rate `mu` (per minute), maximum request
/// distance `d_max`, and the dispatch horizon `t_horizon`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticParams {
    pub c: f64,
    pub mu: f64,
    pub d_max: f64,
    pub t_horizon: f64,
}

impl AnalyticParams {
    /// Parameter set of the illustrative figure: c = 1.5, mu = 1,
    /// d_max = 40, horizon 420.
    pub fn illustrative() -> Self {
        Self {
            c: 1.5,
            mu: 1.0,
            d_max: 40.0,
            t_horizon: 420.0,
        }
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        let ok = self.c > 0.0
            && self.mu > 0.0
            && self.d_max > 0.0
            && self.t_horizon > 0.0
            && [self.c, self.mu, self.d_max, self.t_horizon]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(AnalyticsError::BadParams)
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("parameters must be positive and finite")]
    BadParams,
    #[error("evaluation time outside [0, horizon]")]
    BadTime,
}

fn clamp01(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

/// A drone busy until `t' + ceil(b'/c)` can still reach one more uniform
/// request iff it arrives early enough; the last possible dispatch minute
/// is `t_horizon - b'/c`.
pub fn feasible_last_dispatch(p: &AnalyticParams, t_prime: f64, b_prime: f64) -> bool {
    t_prime <= p.t_horizon - b_prime / p.c
}

/// Probability that at least one more servable request arrives while the
/// drone finishes a trip of distance `b'` started at `t'`:
/// `1 - exp(-c mu (w - g)(w + g - 1) / (2 d_max))` with `w = T - t'` and
/// `g = ceil(b'/c)`, clamped into [0, 1].
pub fn p_accept_one_more(p: &AnalyticParams, t_prime: f64, b_prime: f64) -> f64 {
    let g = (b_prime / p.c).ceil();
    let w = p.t_horizon - t_prime;
    clamp01(1.0 - (-p.c * p.mu * (w - g) * (w + g - 1.0) / (2.0 * p.d_max)).exp())
}

/// Probability that an idle drone at `t'` sees at least two more servable
/// requests before the horizon. This is the printed double-sum form; it
/// does not depend on the distance of the rejected request. The result is
/// clamped into [0, 1].
pub fn p_reject_two(p: &AnalyticParams, t_prime: f64) -> f64 {
    let t = p.t_horizon;
    let w = (t - t_prime).round() as i64;
    if w <= 0 {
        return 0.0;
    }
    let wf = w as f64;
    let p0 = (-p.c * p.mu * wf * (wf - 1.0) / (2.0 * p.d_max)).exp();
    let mut s = 0.0;
    for k in 1..=w {
        let kf = k as f64;
        let a = (-kf * p.c * p.mu * (2.0 * (t - t_prime) + kf - 1.0) / (2.0 * p.d_max)).exp();
        let m_max = (p.c * (t - t_prime - kf)).floor() as i64;
        let mut inner = 0.0;
        for m in 1..=m_max {
            let gm = (m as f64 / p.c).ceil();
            let q = 2.0 * p.d_max
                + p.c * kf
                + p.c * kf * kf
                - p.c * t
                - 2.0 * p.c * kf * t
                + p.c * t * t
                + p.c * t_prime
                + 2.0 * p.c * kf * t_prime
                - 2.0 * p.c * t * t_prime
                + p.c * t_prime * t_prime
                + p.c * gm
                - p.c * gm * gm;
            inner += (p.mu / p.d_max) * (-(p.mu / (2.0 * p.d_max)) * q).exp();
        }
        s += a * inner;
    }
    clamp01(1.0 - p0 - s)
}

/// The distance threshold derived from the two probabilities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BStar {
    /// Accepting never costs more than rejecting anywhere on the grid.
    AlwaysAccept,
    /// Largest distance whose acceptance probability still dominates.
    Threshold(f64),
}

/// Scans `b'` over [0, d_max] on a 0.1 grid. Returns the largest value
/// with `p_accept_one_more >= p_reject_two` when some grid point fails the
/// comparison, and [`BStar::AlwaysAccept`] when none does.
pub fn b_star(p: &AnalyticParams, t_prime: f64) -> BStar {
    let reject = p_reject_two(p, t_prime);
    let mut best: Option<f64> = None;
    let mut always = true;
    let steps = (p.d_max * 10.0).round() as i64;
    for i in 0..=steps {
        let b = i as f64 / 10.0;
        if p_accept_one_more(p, t_prime, b) >= reject {
            best = Some(b);
        } else {
            always = false;
        }
    }
    if always {
        BStar::AlwaysAccept
    } else {
        BStar::Threshold(best.unwrap_or(0.0))
    }
}

/// A monte-carlo estimate with its binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub p_hat: f64,
    pub se: f64,
    pub trials: u64,
}

/// Simulates the simplified single-drone process from `t'` with the drone
/// busy until `busy_until` and returns how often at least `at_least`
/// requests get served. Requests arrive Poisson(`mu`) after `t'` with
/// distances uniform on [0, d_max]; service is greedy FIFO; dispatches
/// start on whole minutes and occupy the drone for whole minutes.
fn mc_served_at_least(
    p: &AnalyticParams,
    t_prime: f64,
    busy_until: f64,
    at_least: u32,
    trials: u64,
    seed: u64,
) -> McEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exp = Exp::new(p.mu).expect("positive rate");
    let mut hits = 0u64;
    for _ in 0..trials {
        let mut t = t_prime;
        let mut avail = busy_until;
        let mut served = 0u32;
        while served < at_least {
            t += exp.sample(&mut rng);
            if t > p.t_horizon {
                break;
            }
            let d = rng.random_range(0.0..p.d_max);
            let start = avail.max(t.ceil());
            if d <= p.c * (p.t_horizon - start) {
                served += 1;
                avail = start + (d / p.c).ceil();
            }
        }
        if served >= at_least {
            hits += 1;
        }
    }
    let p_hat = hits as f64 / trials as f64;
    McEstimate {
        p_hat,
        se: (p_hat * (1.0 - p_hat) / trials as f64).sqrt(),
        trials,
    }
}

/// Monte-carlo counterpart of [`p_accept_one_more`]: the drone accepted a
/// request of distance `b'` at `t'` and we ask for one further service.
pub fn mc_accept_one_more(
    p: &AnalyticParams,
    t_prime: f64,
    b_prime: f64,
    trials: u64,
    seed: u64,
) -> McEstimate {
    let busy_until = t_prime + (b_prime / p.c).ceil();
    mc_served_at_least(p, t_prime, busy_until, 1, trials, seed)
}

/// Monte-carlo counterpart of [`p_reject_two`]: the drone is idle at `t'`
/// and we ask for two services before the horizon.
pub fn mc_reject_two(p: &AnalyticParams, t_prime: f64, trials: u64, seed: u64) -> McEstimate {
    mc_served_at_least(p, t_prime, t_prime, 2, trials, seed)
}

/// Emits the probability curves as CSV
/// (`t_prime,b_prime,p_accept,p_reject`), one row per grid point.
pub fn emit_curves(p: &AnalyticParams, t_primes: &[f64], b_primes: &[f64]) -> String {
    let mut out = String::from("t_prime,b_prime,p_accept,p_reject\n");
    for &tp in t_primes {
        let reject = p_reject_two(p, tp);
        for &bp in b_primes {
            let accept = p_accept_one_more(p, tp, bp);
            writeln!(out, "{tp},{bp},{accept},{reject}").expect("string write");
        }
    }
    out
}
