//! Planned routes for both fleets and the validity conditions they must
//! satisfy at every decision point.
//!
//! A vehicle plan is a single tour: a head depot stop, optionally followed
//! by customer stops and a closing depot stop. A drone plan is a queue of
//! round trips: a head depot stop followed by alternating customer/depot
//! stops. Depot stops carry an arrival time `a` and a loading start `s`;
//! the unit leaves `s + load` after `s`. A tour or trip becomes fixed when
//! its unit leaves the depot; until then new customers may still join it
//! without moving `s`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::geom::{drone_event_time, drone_travel_time, vehicle_travel_time, Location};
use crate::instance::{CustomerRequest, InstanceConfig};
use crate::scalar::{close, Real};

/// Requests currently known to the simulation, keyed by id.
pub type CustomerBook<R> = BTreeMap<u32, CustomerRequest<R>>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepotStop<R: Real> {
    /// Arrival (or clamped availability) time at the depot.
    pub arrival: R,
    /// Loading start for the tour or trip that leaves from this stop. The
    /// horizon is used as a placeholder when nothing is scheduled yet.
    pub start: R,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CustomerStop<R: Real> {
    pub customer: u32,
    pub arrival: R,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stop<R: Real> {
    Depot(DepotStop<R>),
    Customer(CustomerStop<R>),
}

impl<R: Real> Stop<R> {
    pub fn depot(arrival: R, start: R) -> Self {
        Stop::Depot(DepotStop { arrival, start })
    }

    pub fn customer(customer: u32, arrival: R) -> Self {
        Stop::Customer(CustomerStop { customer, arrival })
    }

    pub fn as_depot(&self) -> Option<&DepotStop<R>> {
        match self {
            Stop::Depot(d) => Some(d),
            Stop::Customer(_) => None,
        }
    }

    pub fn as_customer(&self) -> Option<&CustomerStop<R>> {
        match self {
            Stop::Customer(c) => Some(c),
            Stop::Depot(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VehiclePlan<R: Real> {
    pub stops: Vec<Stop<R>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DronePlan<R: Real> {
    pub stops: Vec<Stop<R>>,
    /// Earliest admissible next loading start. Carries the battery-charge
    /// debt of a just-finished trip even after the head stop's arrival has
    /// been clamped forward to the current time.
    pub ready_time: R,
}

impl<R: Real> VehiclePlan<R> {
    /// Idle plan: at the depot since `at`, nothing scheduled.
    pub fn idle(at: R, horizon: R) -> Self {
        Self {
            stops: vec![Stop::depot(at, horizon)],
        }
    }

    pub fn head(&self) -> &DepotStop<R> {
        self.stops[0].as_depot().expect("plan starts at a depot")
    }

    pub fn head_mut(&mut self) -> &mut DepotStop<R> {
        match &mut self.stops[0] {
            Stop::Depot(d) => d,
            Stop::Customer(_) => unreachable!("plan starts at a depot"),
        }
    }

    pub fn customers(&self) -> impl Iterator<Item = &CustomerStop<R>> {
        self.stops.iter().filter_map(Stop::as_customer)
    }

    pub fn customer_ids(&self) -> Vec<u32> {
        self.customers().map(|c| c.customer).collect()
    }

    pub fn has_customers(&self) -> bool {
        self.stops.len() > 1
    }

    /// Arrival time of the final depot stop.
    pub fn completion(&self) -> R {
        self.stops
            .iter()
            .rev()
            .find_map(Stop::as_depot)
            .expect("plan ends at a depot")
            .arrival
    }

    /// At the depot with nothing scheduled and already available at `t`.
    pub fn is_idle_at(&self, t: R) -> bool {
        !self.has_customers() && self.head().arrival <= t
    }

    /// Departure time of the planned tour, if one exists.
    pub fn departure(&self, cfg: &InstanceConfig<R>) -> Option<R> {
        self.has_customers()
            .then(|| self.head().start + cfg.load_vehicle)
    }
}

impl<R: Real> DronePlan<R> {
    pub fn idle(at: R, horizon: R) -> Self {
        Self {
            stops: vec![Stop::depot(at, horizon)],
            ready_time: R::zero(),
        }
    }

    pub fn head(&self) -> &DepotStop<R> {
        self.stops[0].as_depot().expect("plan starts at a depot")
    }

    pub fn head_mut(&mut self) -> &mut DepotStop<R> {
        match &mut self.stops[0] {
            Stop::Depot(d) => d,
            Stop::Customer(_) => unreachable!("plan starts at a depot"),
        }
    }

    pub fn customers(&self) -> impl Iterator<Item = &CustomerStop<R>> {
        self.stops.iter().filter_map(Stop::as_customer)
    }

    pub fn customer_ids(&self) -> Vec<u32> {
        self.customers().map(|c| c.customer).collect()
    }

    pub fn has_customers(&self) -> bool {
        self.stops.len() > 1
    }

    /// Arrival time of the final depot stop (end of the queued trips).
    pub fn completion(&self) -> R {
        self.stops
            .iter()
            .rev()
            .find_map(Stop::as_depot)
            .expect("plan ends at a depot")
            .arrival
    }

    pub fn is_idle_at(&self, t: R) -> bool {
        !self.has_customers() && self.head().arrival <= t
    }

    /// Departure time of the first queued trip, if any.
    pub fn first_departure(&self, cfg: &InstanceConfig<R>) -> Option<R> {
        self.has_customers()
            .then(|| self.head().start + cfg.load_drone)
    }

    /// Earliest time a new trip could start loading if appended now: after
    /// the last queued return plus charging, or for an empty queue after
    /// availability, charge debt, and the current time.
    pub fn next_load_start(&self, cfg: &InstanceConfig<R>, now: R) -> R {
        if self.has_customers() {
            self.completion() + cfg.charge_drone
        } else {
            self.head().arrival.max(self.ready_time).max(now)
        }
    }
}

/// Plans of the whole fleet plus the pending (accepted, not yet delivered)
/// customer sets per fleet.
#[derive(Clone, Debug, PartialEq)]
pub struct FleetPlans<R: Real> {
    pub vehicles: Vec<VehiclePlan<R>>,
    pub drones: Vec<DronePlan<R>>,
    pub pending_vehicle: BTreeSet<u32>,
    pub pending_drone: BTreeSet<u32>,
}

impl<R: Real> FleetPlans<R> {
    /// Start-of-day plans: every unit idle at the depot from time zero.
    pub fn new(cfg: &InstanceConfig<R>) -> Self {
        Self {
            vehicles: (0..cfg.fleet_m)
                .map(|_| VehiclePlan::idle(R::zero(), cfg.t_v_max))
                .collect(),
            drones: (0..cfg.fleet_n)
                .map(|_| DronePlan::idle(R::zero(), cfg.t_d_max))
                .collect(),
            pending_vehicle: BTreeSet::new(),
            pending_drone: BTreeSet::new(),
        }
    }

    /// Checks every plan and the coverage of the pending sets.
    pub fn validate(
        &self,
        cfg: &InstanceConfig<R>,
        book: &CustomerBook<R>,
    ) -> Result<(), PlanViolation> {
        let mut planned_v = BTreeSet::new();
        for vp in &self.vehicles {
            check_vehicle_plan(vp, cfg, book)?;
            for c in vp.customers() {
                if !planned_v.insert(c.customer) {
                    return Err(PlanViolation::DuplicateCustomer(c.customer));
                }
            }
        }
        let mut planned_d = BTreeSet::new();
        for dp in &self.drones {
            check_drone_plan(dp, cfg, book)?;
            for c in dp.customers() {
                if !planned_d.insert(c.customer) {
                    return Err(PlanViolation::DuplicateCustomer(c.customer));
                }
            }
        }
        if planned_v != self.pending_vehicle || planned_d != self.pending_drone {
            return Err(PlanViolation::Coverage);
        }
        if !planned_v.is_disjoint(&planned_d) {
            let c = *planned_v.intersection(&planned_d).next().expect("non-empty");
            return Err(PlanViolation::DuplicateCustomer(c));
        }
        Ok(())
    }

    /// Human-readable dump, one stop per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, vp) in self.vehicles.iter().enumerate() {
            for st in &vp.stops {
                match st {
                    Stop::Depot(d) => {
                        writeln!(out, "v{i} depot a={} s={}", d.arrival, d.start)
                    }
                    Stop::Customer(c) => {
                        writeln!(out, "v{i} cust {} a={}", c.customer, c.arrival)
                    }
                }
                .expect("string write");
            }
        }
        for (i, dp) in self.drones.iter().enumerate() {
            for st in &dp.stops {
                match st {
                    Stop::Depot(d) => {
                        writeln!(out, "d{i} depot a={} s={}", d.arrival, d.start)
                    }
                    Stop::Customer(c) => {
                        writeln!(out, "d{i} cust {} a={}", c.customer, c.arrival)
                    }
                }
                .expect("string write");
            }
        }
        out
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanViolation {
    #[error("plan must start with a depot stop")]
    MissingHead,
    #[error("malformed stop sequence at position {0}")]
    Structure(usize),
    #[error("customer {0} not found in the request book")]
    UnknownCustomer(u32),
    #[error("customer {0} appears in more than one plan position")]
    DuplicateCustomer(u32),
    #[error("customer {customer}: arrival {arrival} after deadline {deadline}")]
    DeadlineMissed {
        customer: u32,
        arrival: f64,
        deadline: f64,
    },
    #[error("depot stop {index}: loading start {start} before arrival {arrival}")]
    StartBeforeArrival { index: usize, start: f64, arrival: f64 },
    #[error("depot stop {index}: loading start {start} inside charge window ending {ready}")]
    ChargeViolated { index: usize, start: f64, ready: f64 },
    #[error("stop {index}: arrival {got}, schedule implies {want}")]
    BadSchedule { index: usize, got: f64, want: f64 },
    #[error("final depot arrival {0} after shift end {1}")]
    LateReturn(f64, f64),
    #[error("pending sets do not match planned customers")]
    Coverage,
}

fn customer_location<R: Real>(
    id: u32,
    book: &CustomerBook<R>,
) -> Result<Location<R>, PlanViolation> {
    book.get(&id)
        .map(|c| c.location)
        .ok_or(PlanViolation::UnknownCustomer(id))
}

/// Checks the vehicle-route conditions: depot-framed structure, loading
/// start after arrival, schedule consistency of every arrival, deadlines,
/// and the depot return before the vehicle horizon.
pub fn check_vehicle_plan<R: Real>(
    plan: &VehiclePlan<R>,
    cfg: &InstanceConfig<R>,
    book: &CustomerBook<R>,
) -> Result<(), PlanViolation> {
    let Some(head) = plan.stops.first().and_then(Stop::as_depot) else {
        return Err(PlanViolation::MissingHead);
    };
    if head.start < head.arrival && !close(head.start, head.arrival) {
        return Err(PlanViolation::StartBeforeArrival {
            index: 0,
            start: head.start.as_f64(),
            arrival: head.arrival.as_f64(),
        });
    }
    if plan.stops.len() == 1 {
        return Ok(());
    }
    let Some(tail) = plan.stops.last().and_then(Stop::as_depot) else {
        return Err(PlanViolation::Structure(plan.stops.len() - 1));
    };
    let mut seen = BTreeSet::new();
    let mut prev_loc = cfg.depot;
    let mut prev_time = head.start + cfg.load_vehicle;
    for (index, st) in plan.stops.iter().enumerate().skip(1) {
        match st {
            Stop::Customer(c) => {
                if !seen.insert(c.customer) {
                    return Err(PlanViolation::DuplicateCustomer(c.customer));
                }
                let loc = customer_location(c.customer, book)?;
                let want = prev_time + vehicle_travel_time(prev_loc, loc, &cfg.travel);
                if !close(c.arrival, want) {
                    return Err(PlanViolation::BadSchedule {
                        index,
                        got: c.arrival.as_f64(),
                        want: want.as_f64(),
                    });
                }
                let deadline = book[&c.customer].deadline;
                if c.arrival > deadline && !close(c.arrival, deadline) {
                    return Err(PlanViolation::DeadlineMissed {
                        customer: c.customer,
                        arrival: c.arrival.as_f64(),
                        deadline: deadline.as_f64(),
                    });
                }
                prev_time = c.arrival + cfg.service_vehicle;
                prev_loc = loc;
            }
            Stop::Depot(d) => {
                if index != plan.stops.len() - 1 {
                    return Err(PlanViolation::Structure(index));
                }
                let want = prev_time + vehicle_travel_time(prev_loc, cfg.depot, &cfg.travel);
                if !close(d.arrival, want) {
                    return Err(PlanViolation::BadSchedule {
                        index,
                        got: d.arrival.as_f64(),
                        want: want.as_f64(),
                    });
                }
            }
        }
    }
    if tail.arrival > cfg.t_v_max && !close(tail.arrival, cfg.t_v_max) {
        return Err(PlanViolation::LateReturn(
            tail.arrival.as_f64(),
            cfg.t_v_max.as_f64(),
        ));
    }
    Ok(())
}

pub fn validate_vehicle_plan<R: Real>(
    plan: &VehiclePlan<R>,
    cfg: &InstanceConfig<R>,
    book: &CustomerBook<R>,
) -> bool {
    check_vehicle_plan(plan, cfg, book).is_ok()
}

/// Checks the drone-route conditions: alternating depot/customer structure,
/// loading starts after arrival plus charging between trips, schedule
/// consistency with the drone's event-time rounding, deadlines, and the
/// final return before the drone horizon.
pub fn check_drone_plan<R: Real>(
    plan: &DronePlan<R>,
    cfg: &InstanceConfig<R>,
    book: &CustomerBook<R>,
) -> Result<(), PlanViolation> {
    let Some(head) = plan.stops.first().and_then(Stop::as_depot) else {
        return Err(PlanViolation::MissingHead);
    };
    if head.start < head.arrival && !close(head.start, head.arrival) {
        return Err(PlanViolation::StartBeforeArrival {
            index: 0,
            start: head.start.as_f64(),
            arrival: head.arrival.as_f64(),
        });
    }
    if plan.stops.len() == 1 {
        return Ok(());
    }
    if plan.stops.len() % 2 == 0 {
        return Err(PlanViolation::Structure(plan.stops.len() - 1));
    }
    let mut seen = BTreeSet::new();
    let mut idx = 0usize;
    while idx + 2 < plan.stops.len() {
        let Some(depot) = plan.stops[idx].as_depot() else {
            return Err(PlanViolation::Structure(idx));
        };
        let Some(cust) = plan.stops[idx + 1].as_customer() else {
            return Err(PlanViolation::Structure(idx + 1));
        };
        let Some(ret) = plan.stops[idx + 2].as_depot() else {
            return Err(PlanViolation::Structure(idx + 2));
        };
        if !seen.insert(cust.customer) {
            return Err(PlanViolation::DuplicateCustomer(cust.customer));
        }
        if depot.start < depot.arrival && !close(depot.start, depot.arrival) {
            return Err(PlanViolation::StartBeforeArrival {
                index: idx,
                start: depot.start.as_f64(),
                arrival: depot.arrival.as_f64(),
            });
        }
        if idx > 0 {
            // This depot stop ends a delivery trip: charge before reloading.
            let ready = depot.arrival + cfg.charge_drone;
            if depot.start < ready && !close(depot.start, ready) {
                return Err(PlanViolation::ChargeViolated {
                    index: idx,
                    start: depot.start.as_f64(),
                    ready: ready.as_f64(),
                });
            }
        }
        let loc = customer_location(cust.customer, book)?;
        let fly_out = drone_travel_time(cfg.depot, loc, &cfg.travel);
        let want_cust =
            drone_event_time(depot.start + cfg.load_drone + fly_out, &cfg.travel);
        if !close(cust.arrival, want_cust) {
            return Err(PlanViolation::BadSchedule {
                index: idx + 1,
                got: cust.arrival.as_f64(),
                want: want_cust.as_f64(),
            });
        }
        let deadline = book[&cust.customer].deadline;
        if cust.arrival > deadline && !close(cust.arrival, deadline) {
            return Err(PlanViolation::DeadlineMissed {
                customer: cust.customer,
                arrival: cust.arrival.as_f64(),
                deadline: deadline.as_f64(),
            });
        }
        let fly_back = drone_travel_time(loc, cfg.depot, &cfg.travel);
        let want_ret =
            drone_event_time(cust.arrival + cfg.service_drone + fly_back, &cfg.travel);
        if !close(ret.arrival, want_ret) {
            return Err(PlanViolation::BadSchedule {
                index: idx + 2,
                got: ret.arrival.as_f64(),
                want: want_ret.as_f64(),
            });
        }
        idx += 2;
    }
    let tail = plan.stops[plan.stops.len() - 1]
        .as_depot()
        .expect("checked alternating structure");
    if tail.arrival > cfg.t_d_max && !close(tail.arrival, cfg.t_d_max) {
        return Err(PlanViolation::LateReturn(
            tail.arrival.as_f64(),
            cfg.t_d_max.as_f64(),
        ));
    }
    Ok(())
}

pub fn validate_drone_plan<R: Real>(
    plan: &DronePlan<R>,
    cfg: &InstanceConfig<R>,
    book: &CustomerBook<R>,
) -> bool {
    check_drone_plan(plan, cfg, book).is_ok()
}
