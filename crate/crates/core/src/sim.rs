//! The decision process itself: states, actions, feasibility, transitions,
//! and whole-day episode rollouts.

use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use crate::geom::vehicle_travel_time;
use crate::instance::{CustomerRequest, InstanceConfig, SamplePath};
use crate::plans::{CustomerBook, FleetPlans};
use crate::routing::{
    advance_in_place, best_vehicle_insertion, drone_fifo_assignment,DroneAssignment,
    VehicleInsertion,
};
use crate::scalar::Real;

/// Dispatch decision for one request.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Alpha {
    NoService,
    Vehicle,
    Drone,
}

impl Alpha {
    pub fn index(self) -> u8 {
        match self {
            Alpha::NoService => 0,
            Alpha::Vehicle => 1,
            Alpha::Drone => 2,
        }
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Decision state: the moment a request arrives, with plans already
/// advanced (clamped) to the request time.
#[derive(Clone, Copy, Debug)]
pub struct State<'a, R: Real> {
    pub t: R,
    pub request: &'a CustomerRequest<R>,
    pub plans: &'a FleetPlans<R>,
}

/// Feasible options for the current request on each fleet.
#[derive(Clone, Debug)]
pub struct FeasibilityPair<R: Real> {
    pub vehicle: Option<VehicleInsertion<R>>,
    pub drone: Option<DroneAssignment<R>>,
}

/// Which fleets can serve the current request.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeasPattern {
    Neither,
    VehicleOnly,
    DroneOnly,
    Both,
}

impl<R: Real> FeasibilityPair<R> {
    pub fn any(&self) -> bool {
        self.vehicle.is_some() || self.drone.is_some()
    }

    pub fn pattern(&self) -> FeasPattern {
        match (&self.vehicle, &self.drone) {
            (None, None) => FeasPattern::Neither,
            (Some(_), None) => FeasPattern::VehicleOnly,
            (None, Some(_)) => FeasPattern::DroneOnly,
            (Some(_), Some(_)) => FeasPattern::Both,
        }
    }

    /// Actions a policy may take in this state, denial always included.
    pub fn available_actions(&self) -> Vec<Alpha> {
        let mut actions = Vec::with_capacity(3);
        if self.vehicle.is_some() {
            actions.push(Alpha::Vehicle);
        }
        if self.drone.is_some() {
            actions.push(Alpha::Drone);
        }
        actions.push(Alpha::NoService);
        actions
    }
}

/// Computes both fleets' options for `c` at time `now`.
pub fn feasibility_check<R: Real>(
    plans: &FleetPlans<R>,
    c: &CustomerRequest<R>,
    cfg: &InstanceConfig<R>,
    book: &CustomerBook<R>,
    now: R,
) -> FeasibilityPair<R> {
    FeasibilityPair {
        vehicle: best_vehicle_insertion(plans, c, cfg, book, now),
        drone: drone_fifo_assignment(plans, c, cfg, book, now),
    }
}

/// A policy chooses among the feasible actions. It is only consulted when
/// at least one fleet is feasible; a denial is always permitted.
pub trait Policy<R: Real> {
    fn decide(&mut self, state: &State<'_, R>, feas: &FeasibilityPair<R>) -> Alpha;
}

/// Adapter turning a closure into a [`Policy`].
pub struct FnPolicy<F>(pub F);

impl<R, F> Policy<R> for FnPolicy<F>
where
    R: Real,
    F: FnMut(&State<'_, R>, &FeasibilityPair<R>) -> Alpha,
{
    fn decide(&mut self, state: &State<'_, R>, feas: &FeasibilityPair<R>) -> Alpha {
        (self.0)(state, feas)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ActionError {
    #[error("action {action:?} chosen for customer {customer} without a feasible option")]
    Infeasible { action: Alpha, customer: u32 },
}

/// Applies a decision: replaces the assigned unit's plan and books the
/// customer as pending. Returns the new plans and the immediate reward
/// (1 when the request is served, 0 otherwise).
pub fn apply_action<R: Real>(
    plans: &FleetPlans<R>,
    alpha: Alpha,
    feas: &FeasibilityPair<R>,
    c: &CustomerRequest<R>,
) -> Result<(FleetPlans<R>, u32), ActionError> {
    let mut out = plans.clone();
    let infeasible = |action| ActionError::Infeasible {
        action,
        customer: c.id,
    };
    match alpha {
        Alpha::NoService => Ok((out, 0)),
        Alpha::Vehicle => {
            let ins = feas.vehicle.as_ref().ok_or(infeasible(alpha))?;
            out.vehicles[ins.vehicle] = ins.plan.clone();
            out.pending_vehicle.insert(c.id);
            Ok((out, 1))
        }
        Alpha::Drone => {
            let asg = feas.drone.as_ref().ok_or(infeasible(alpha))?;
            out.drones[asg.drone] = asg.plan.clone();
            out.pending_drone.insert(c.id);
            Ok((out, 1))
        }
    }
}

/// One row of the per-request decision log.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionRecord<R: Real> {
    pub t: R,
    pub customer: u32,
    /// Vehicle travel time from the depot to the customer (minutes).
    pub dist_vehicle_min: R,
    pub veh_feasible: bool,
    pub drone_feasible: bool,
    pub alpha: Alpha,
    /// Completion delay of the best vehicle insertion (sentinel if none).
    pub delta_vehicle: R,
    /// Planned delivery time when the request was accepted.
    pub planned_arrival: Option<R>,
    /// True when neither fleet was feasible and denial was forced.
    pub forced: bool,
}

/// Outcome of one simulated day.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult<R: Real> {
    pub served: u32,
    pub forced_denials: u32,
    pub policy_denials: u32,
    pub decisions: Vec<DecisionRecord<R>>,
    /// Realized `(customer, delivery time)` pairs over the whole day.
    pub delivered: Vec<(u32, R)>,
}

impl<R: Real> EpisodeResult<R> {
    pub fn requests(&self) -> usize {
        self.decisions.len()
    }
}

/// Simulates one day under `policy`. Requests are processed in order;
/// same-time requests are processed in id order. Plans are advanced to
/// each request's arrival before the decision, and the day is flushed to
/// the terminal time afterwards, so `delivered` holds every served
/// customer's realized delivery time.
pub fn run_episode<R: Real, P: Policy<R> + ?Sized>(
    policy: &mut P,
    path: &SamplePath<R>,
    cfg: &InstanceConfig<R>,
) -> Result<EpisodeResult<R>, ActionError> {
    let mut book = CustomerBook::new();
    let mut plans = FleetPlans::new(cfg);
    let mut delivered = Vec::new();
    let mut decisions = Vec::with_capacity(path.requests.len());
    let mut served = 0u32;
    let mut forced_denials = 0u32;
    let mut policy_denials = 0u32;
    for req in &path.requests {
        advance_in_place(&mut plans, req.request_time, cfg, &mut delivered);
        book.insert(req.id, req.clone());
        let feas = feasibility_check(&plans, req, cfg, &book, req.request_time);
        let forced = !feas.any();
        let alpha = if forced {
            // Both fleets infeasible: denial is forced, no decision is made.
            Alpha::NoService
        } else {
            let state = State {
                t: req.request_time,
                request: req,
                plans: &plans,
            };
            policy.decide(&state, &feas)
        };
        let (next, reward) = apply_action(&plans, alpha, &feas, req)?;
        plans = next;
        served += reward;
        match (alpha, forced) {
            (Alpha::NoService, true) => forced_denials += 1,
            (Alpha::NoService, false) => policy_denials += 1,
            _ => {}
        }
        let planned_arrival = match alpha {
            Alpha::NoService => None,
            Alpha::Vehicle => feas
                .vehicle
                .as_ref()
                .and_then(|i| i.plan.customers().find(|c| c.customer == req.id))
                .map(|c| c.arrival),
            Alpha::Drone => feas
                .drone
                .as_ref()
                .and_then(|a| a.plan.customers().find(|c| c.customer == req.id))
                .map(|c| c.arrival),
        };
        decisions.push(DecisionRecord {
            t: req.request_time,
            customer: req.id,
            dist_vehicle_min: vehicle_travel_time(cfg.depot, req.location, &cfg.travel),
            veh_feasible: feas.vehicle.is_some(),
            drone_feasible: feas.drone.is_some(),
            alpha,
            delta_vehicle: feas
                .vehicle
                .as_ref()
                .map(|i| i.delta)
                .unwrap_or_else(|| R::from_f64(crate::routing::DELTA_SENTINEL_MIN)),
            planned_arrival,
            forced,
        });
    }
    advance_in_place(&mut plans, cfg.day_end(), cfg, &mut delivered);
    debug_assert!(plans.pending_vehicle.is_empty() && plans.pending_drone.is_empty());
    debug_assert_eq!(delivered.len(), served as usize);
    Ok(EpisodeResult {
        served,
        forced_denials,
        policy_denials,
        decisions,
        delivered,
    })
}

/// Decision log as CSV: `t_min,dist_vehicle_min,veh_feasible,drone_feasible,alpha`.
pub fn decision_log_csv<R: Real>(result: &EpisodeResult<R>) -> String {
    let mut out = String::from("t_min,dist_vehicle_min,veh_feasible,drone_feasible,alpha\n");
    for d in &result.decisions {
        writeln!(
            out,
            "{},{},{},{},{}",
            d.t,
            d.dist_vehicle_min,
            u8::from(d.veh_feasible),
            u8::from(d.drone_feasible),
            d.alpha
        )
        .expect("string write");
    }
    out
}
