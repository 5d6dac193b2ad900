//! Dispatch policies: distance and completion-delay thresholds, random and
//! greedy baselines, threshold tuning by enumeration, and adapters around
//! the trained learners.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dqn::Trainer;
use crate::geom::{vehicle_travel_time, Location, TravelModel};
use crate::instance::{InstanceConfig, SamplePath};
use crate::scalar::Real;
use crate::sim::{run_episode, ActionError, Alpha, FeasibilityPair, Policy, State};

/// Distance-threshold policy: vehicle travel time from the depot decides
/// the fleet. Never denies voluntarily; boundary distances go by vehicle.
pub fn decide_pfa<R: Real>(
    state: &State<'_, R>,
    feas: &FeasibilityPair<R>,
    tau: R,
    cfg: &InstanceConfig<R>,
) -> Alpha {
    let d = vehicle_travel_time(cfg.depot, state.request.location, &cfg.travel);
    match (&feas.vehicle, &feas.drone) {
        (Some(_), Some(_)) => {
            if d <= tau {
                Alpha::Vehicle
            } else {
                Alpha::Drone
            }
        }
        (Some(_), None) => Alpha::Vehicle,
        (None, Some(_)) => Alpha::Drone,
        (None, None) => Alpha::NoService,
    }
}

/// Distance-threshold policy with rejection: only the designated fleet may
/// serve; if it cannot, the request is denied even when the other could.
pub fn decide_pfa_rej<R: Real>(
    state: &State<'_, R>,
    feas: &FeasibilityPair<R>,
    tau: R,
    cfg: &InstanceConfig<R>,
) -> Alpha {
    let d = vehicle_travel_time(cfg.depot, state.request.location, &cfg.travel);
    if d <= tau {
        if feas.vehicle.is_some() {
            Alpha::Vehicle
        } else {
            Alpha::NoService
        }
    } else if feas.drone.is_some() {
        Alpha::Drone
    } else {
        Alpha::NoService
    }
}

/// Completion-delay threshold policy: vehicle only when its insertion
/// delay is strictly below `delta_max`, otherwise drone when feasible,
/// otherwise denial (even when an expensive vehicle insertion exists).
pub fn decide_delta<R: Real>(feas: &FeasibilityPair<R>, delta_max: R) -> Alpha {
    let cheap_vehicle = feas
        .vehicle
        .as_ref()
        .is_some_and(|ins| ins.delta < delta_max);
    if cheap_vehicle {
        Alpha::Vehicle
    } else if feas.drone.is_some() {
        Alpha::Drone
    } else {
        Alpha::NoService
    }
}

/// [`decide_pfa`] as a reusable policy value.
pub struct Pfa<R: Real> {
    pub tau: R,
    depot: Location<R>,
    travel: TravelModel<R>,
    designated_only: bool,
}

impl<R: Real> Pfa<R> {
    pub fn new(tau: R, cfg: &InstanceConfig<R>) -> Self {
        Self {
            tau,
            depot: cfg.depot,
            travel: cfg.travel,
            designated_only: false,
        }
    }

    /// Variant that denies when the designated fleet is infeasible.
    pub fn with_rejection(tau: R, cfg: &InstanceConfig<R>) -> Self {
        Self {
            designated_only: true,
            ..Self::new(tau, cfg)
        }
    }
}

impl<R: Real> Policy<R> for Pfa<R> {
    fn decide(&mut self, state: &State<'_, R>, feas: &FeasibilityPair<R>) -> Alpha {
        let d = vehicle_travel_time(self.depot, state.request.location, &self.travel);
        if self.designated_only {
            if d <= self.tau {
                if feas.vehicle.is_some() {
                    Alpha::Vehicle
                } else {
                    Alpha::NoService
                }
            } else if feas.drone.is_some() {
                Alpha::Drone
            } else {
                Alpha::NoService
            }
        } else {
            match (&feas.vehicle, &feas.drone) {
                (Some(_), Some(_)) => {
                    if d <= self.tau {
                        Alpha::Vehicle
                    } else {
                        Alpha::Drone
                    }
                }
                (Some(_), None) => Alpha::Vehicle,
                (None, Some(_)) => Alpha::Drone,
                (None, None) => Alpha::NoService,
            }
        }
    }
}

/// [`decide_delta`] as a reusable policy value.
pub struct DeltaPolicy<R: Real> {
    pub delta_max: R,
}

impl<R: Real> Policy<R> for DeltaPolicy<R> {
    fn decide(&mut self, _state: &State<'_, R>, feas: &FeasibilityPair<R>) -> Alpha {
        decide_delta(feas, self.delta_max)
    }
}

/// Uniformly random choice among the available actions, denial included.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl<R: Real> Policy<R> for RandomPolicy {
    fn decide(&mut self, _state: &State<'_, R>, feas: &FeasibilityPair<R>) -> Alpha {
        let actions = feas.available_actions();
        actions[self.rng.random_range(0..actions.len())]
    }
}

/// Accepts everything it can, preferring the vehicle.
pub struct GreedyAcceptVehicleFirst;

impl<R: Real> Policy<R> for GreedyAcceptVehicleFirst {
    fn decide(&mut self, _state: &State<'_, R>, feas: &FeasibilityPair<R>) -> Alpha {
        if feas.vehicle.is_some() {
            Alpha::Vehicle
        } else if feas.drone.is_some() {
            Alpha::Drone
        } else {
            Alpha::NoService
        }
    }
}

/// Greedy decision backed by trained networks (no exploration).
pub fn decide_q<R: Real>(
    state: &State<'_, R>,
    feas: &FeasibilityPair<R>,
    trainer: &Trainer<R>,
    cfg: &InstanceConfig<R>,
) -> Alpha {
    trainer.greedy(state, feas, cfg)
}

/// Threshold families that can be tuned by enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThresholdFamily {
    Pfa,
    PfaRej,
    Delta,
}

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("empty tuning grid")]
    EmptyGrid,
    #[error("no tuning paths provided")]
    NoPaths,
    #[error(transparent)]
    Action(#[from] ActionError),
}

/// Mean served requests of one policy over the given days.
pub fn mean_served<R: Real, P: Policy<R>>(
    policy: &mut P,
    paths: &[SamplePath<R>],
    cfg: &InstanceConfig<R>,
) -> Result<f64, ActionError> {
    let mut total = 0u64;
    for p in paths {
        total += u64::from(run_episode(policy, p, cfg)?.served);
    }
    Ok(total as f64 / paths.len().max(1) as f64)
}

/// Exhaustively evaluates every grid value on the tuning days and returns
/// the threshold with the highest mean served count. Ties keep the first
/// (lowest, for an ascending grid) value.
pub fn tune_threshold_by_enumeration<R: Real>(
    family: ThresholdFamily,
    grid: &[R],
    paths: &[SamplePath<R>],
    cfg: &InstanceConfig<R>,
) -> Result<(R, f64), TuneError> {
    if grid.is_empty() {
        return Err(TuneError::EmptyGrid);
    }
    if paths.is_empty() {
        return Err(TuneError::NoPaths);
    }
    let mut best: Option<(R, f64)> = None;
    for &g in grid {
        let mean = match family {
            ThresholdFamily::Pfa => mean_served(&mut Pfa::new(g, cfg), paths, cfg)?,
            ThresholdFamily::PfaRej => {
                mean_served(&mut Pfa::with_rejection(g, cfg), paths, cfg)?
            }
            ThresholdFamily::Delta => {
                mean_served(&mut DeltaPolicy { delta_max: g }, paths, cfg)?
            }
        };
        if best.is_none_or(|(_, b)| mean > b) {
            best = Some((g, mean));
        }
    }
    Ok(best.expect("non-empty grid"))
}

/// Default tuning grid for the distance families: 0..=60 minutes in
/// 1-minute steps.
pub fn default_tau_grid<R: Real>() -> Vec<R> {
    (0..=60).map(|v| R::from_f64(v as f64)).collect()
}

/// Default tuning grid for the delay family: 0..=120 minutes in 1-minute
/// steps.
pub fn default_delta_grid<R: Real>() -> Vec<R> {
    (0..=120).map(|v| R::from_f64(v as f64)).collect()
}
