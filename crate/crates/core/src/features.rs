//! Feature extraction: state descriptions fed to the value networks, plus
//! min-max normalization with config-derived bounds.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geom::vehicle_travel_time;
use crate::instance::InstanceConfig;
use crate::routing::DELTA_SENTINEL_MIN;
use crate::scalar::Real;
use crate::sim::{Alpha, FeasibilityPair, State};

/// The feature sets. `Full` and `LocalFleet` describe availability as each
/// unit's next depot arrival; `PostDecision` describes the end of each
/// unit's planned workload after a candidate action.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Full,
    LocalFleet,
    ActionOnly,
    PostDecision,
    DistanceOnly,
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown feature set {0:?} (expected full, local, action_only, post_decision, or distance_only)")]
pub struct ParseFeatureKindError(String);

impl FromStr for FeatureKind {
    type Err = ParseFeatureKindError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(FeatureKind::Full),
            "local" => Ok(FeatureKind::LocalFleet),
            "action_only" => Ok(FeatureKind::ActionOnly),
            "post_decision" => Ok(FeatureKind::PostDecision),
            "distance_only" => Ok(FeatureKind::DistanceOnly),
            other => Err(ParseFeatureKindError(other.to_string())),
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FeatureKind::Full => "full",
            FeatureKind::LocalFleet => "local",
            FeatureKind::ActionOnly => "action_only",
            FeatureKind::PostDecision => "post_decision",
            FeatureKind::DistanceOnly => "distance_only",
        };
        write!(f, "{s}")
    }
}

impl FeatureKind {
    /// Feature dimension for a fleet of `m` vehicles and `n` drones.
    pub fn dim(self, m: usize, n: usize) -> usize {
        match self {
            FeatureKind::Full => 3 + m + n,
            FeatureKind::LocalFleet => 5,
            FeatureKind::ActionOnly => 3,
            FeatureKind::PostDecision => 1 + m + n,
            FeatureKind::DistanceOnly => 2,
        }
    }
}

/// A raw feature vector together with its min-max normalized image.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector<R: Real> {
    pub raw: Vec<R>,
    pub normalized: Vec<R>,
}

/// Per-dimension normalization bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds<R: Real> {
    pub lo: Vec<R>,
    pub hi: Vec<R>,
}

impl<R: Real> Bounds<R> {
    /// Clamped min-max normalization of `raw` into [0, 1] per dimension.
    pub fn normalize(&self, raw: &[R]) -> Vec<R> {
        debug_assert_eq!(raw.len(), self.lo.len());
        raw.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&x, (&lo, &hi))| {
                let span = hi - lo;
                let z = if span > R::zero() {
                    (x - lo) / span
                } else {
                    R::zero()
                };
                z.max(R::zero()).min(R::one())
            })
            .collect()
    }
}

/// Travel-time cap for the distance feature: the radius containing 99.9%
/// of request locations (at the widest geography), as vehicle minutes.
pub fn d_cap_minutes<R: Real>(cfg: &InstanceConfig<R>) -> R {
    let sigma = cfg.geography.max_sigma().as_f64();
    let radius_km = sigma * (2.0 * 1000.0_f64.ln()).sqrt();
    let tm = &cfg.travel;
    R::from_f64(radius_km * tm.street_factor.as_f64() * 60.0 / tm.vehicle_speed_kmh.as_f64())
}

/// Normalization bounds per feature set: times and availabilities span
/// [0, drone horizon], completion delays [0, sentinel], distances
/// [0, d_cap].
pub fn normalization_bounds<R: Real>(cfg: &InstanceConfig<R>, kind: FeatureKind) -> Bounds<R> {
    let t_hi = cfg.t_d_max;
    let d_hi = d_cap_minutes(cfg);
    let delta_hi = R::from_f64(DELTA_SENTINEL_MIN);
    let (m, n) = (cfg.fleet_m, cfg.fleet_n);
    let mut hi = Vec::with_capacity(kind.dim(m, n));
    match kind {
        FeatureKind::Full => {
            hi.push(t_hi);
            hi.push(d_hi);
            hi.push(delta_hi);
            hi.extend(std::iter::repeat_n(t_hi, m + n));
        }
        FeatureKind::LocalFleet => {
            hi.push(t_hi);
            hi.push(d_hi);
            hi.push(delta_hi);
            hi.push(t_hi);
            hi.push(t_hi);
        }
        FeatureKind::ActionOnly => {
            hi.push(t_hi);
            hi.push(d_hi);
            hi.push(delta_hi);
        }
        FeatureKind::PostDecision => {
            hi.push(t_hi);
            hi.extend(std::iter::repeat_n(t_hi, m + n));
        }
        FeatureKind::DistanceOnly => {
            hi.push(t_hi);
            hi.push(d_hi);
        }
    }
    Bounds {
        lo: vec![R::zero(); hi.len()],
        hi,
    }
}

/// Next depot arrival of each unit, clamped to the current time. For the
/// in-service availability features this is the first depot stop: planned
/// insertions never move it, but it is when the unit is next physically at
/// the depot.
fn availabilities<R: Real>(state: &State<'_, R>) -> Vec<R> {
    let t = state.t;
    let mut a = Vec::with_capacity(state.plans.vehicles.len() + state.plans.drones.len());
    a.extend(
        state
            .plans
            .vehicles
            .iter()
            .map(|vp| vp.head().arrival.max(t)),
    );
    a.extend(state.plans.drones.iter().map(|dp| dp.head().arrival.max(t)));
    a
}

fn core_triple<R: Real>(
    state: &State<'_, R>,
    feas: &FeasibilityPair<R>,
    cfg: &InstanceConfig<R>,
) -> (R, R, R) {
    // The distance feature is the vehicle travel time from the depot, the
    // same measure the distance-threshold policies cut on.
    let d = vehicle_travel_time(cfg.depot, state.request.location, &cfg.travel);
    let delta = feas
        .vehicle
        .as_ref()
        .map(|i| i.delta)
        .unwrap_or_else(|| R::from_f64(DELTA_SENTINEL_MIN));
    (state.t, d, delta)
}

/// Extracts the in-service feature sets. `PostDecision` has its own entry
/// point, [`post_decision_features`], because it depends on the action.
pub fn extract<R: Real>(
    state: &State<'_, R>,
    feas: &FeasibilityPair<R>,
    kind: FeatureKind,
    cfg: &InstanceConfig<R>,
) -> FeatureVector<R> {
    let (t, d, delta) = core_triple(state, feas, cfg);
    let raw = match kind {
        FeatureKind::Full => {
            let mut raw = vec![t, d, delta];
            raw.extend(availabilities(state));
            raw
        }
        FeatureKind::LocalFleet => {
            // Availability of the units the request would be assigned to;
            // an infeasible side reports the drone horizon.
            let va = feas
                .vehicle
                .as_ref()
                .map(|i| state.plans.vehicles[i.vehicle].head().arrival.max(state.t))
                .unwrap_or(cfg.t_d_max);
            let da = feas
                .drone
                .as_ref()
                .map(|a| state.plans.drones[a.drone].head().arrival.max(state.t))
                .unwrap_or(cfg.t_d_max);
            vec![t, d, delta, va, da]
        }
        FeatureKind::ActionOnly => vec![t, d, delta],
        FeatureKind::DistanceOnly => vec![t, d],
        FeatureKind::PostDecision => {
            unreachable!("post-decision features are extracted per action")
        }
    };
    let bounds = normalization_bounds(cfg, kind);
    let normalized = bounds.normalize(&raw);
    FeatureVector { raw, normalized }
}

/// Post-decision features for taking `alpha` in `state`: the current time
/// followed by every unit's planned completion (end of its queued work,
/// clamped to now) after the action is applied.
pub fn post_decision_features<R: Real>(
    state: &State<'_, R>,
    feas: &FeasibilityPair<R>,
    alpha: Alpha,
    cfg: &InstanceConfig<R>,
) -> FeatureVector<R> {
    let t = state.t;
    let mut raw = Vec::with_capacity(1 + state.plans.vehicles.len() + state.plans.drones.len());
    raw.push(t);
    let assigned_vehicle = match alpha {
        Alpha::Vehicle => feas.vehicle.as_ref(),
        _ => None,
    };
    for (vi, vp) in state.plans.vehicles.iter().enumerate() {
        let completion = match assigned_vehicle {
            Some(ins) if ins.vehicle == vi => ins.plan.completion(),
            _ => vp.completion(),
        };
        raw.push(completion.max(t));
    }
    let assigned_drone = match alpha {
        Alpha::Drone => feas.drone.as_ref(),
        _ => None,
    };
    for (di, dp) in state.plans.drones.iter().enumerate() {
        let completion = match assigned_drone {
            Some(asg) if asg.drone == di => asg.plan.completion(),
            _ => dp.completion(),
        };
        raw.push(completion.max(t));
    }
    let bounds = normalization_bounds(cfg, FeatureKind::PostDecision);
    let normalized = bounds.normalize(&raw);
    FeatureVector { raw, normalized }
}
