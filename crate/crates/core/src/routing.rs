//! Route construction: cheapest-insertion for vehicles, FIFO trip
//! assignment for drones, and advancing plans through time.

use crate::geom::{drone_event_time, drone_travel_time, vehicle_travel_time};
use crate::instance::{CustomerRequest, InstanceConfig};
use crate::plans::{CustomerBook, DepotStop, DronePlan, FleetPlans, Stop, VehiclePlan};
use crate::scalar::Real;

/// Completion-delay value reported for requests no vehicle can serve.
pub const DELTA_SENTINEL_MIN: f64 = 10_000.0;

/// A feasible vehicle insertion: the rebuilt plan plus its completion delay.
#[derive(Clone, Debug, PartialEq)]
pub struct VehicleInsertion<R: Real> {
    pub vehicle: usize,
    /// Index within the customer sequence at which the request was placed.
    pub position: usize,
    pub plan: VehiclePlan<R>,
    /// Completion delay: new final depot arrival minus the old one.
    pub delta: R,
}

/// A feasible drone assignment: the plan with the new trip appended.
#[derive(Clone, Debug, PartialEq)]
pub struct DroneAssignment<R: Real> {
    pub drone: usize,
    pub plan: DronePlan<R>,
}

/// Builds a vehicle tour through `seq` leaving the given head, or `None`
/// when a deadline or the vehicle horizon is violated.
fn build_vehicle_tour<R: Real>(
    head: DepotStop<R>,
    load_start: R,
    seq: &[u32],
    cfg: &InstanceConfig<R>,
    book: &CustomerBook<R>,
) -> Option<VehiclePlan<R>> {
    let mut stops = Vec::with_capacity(seq.len() + 2);
    stops.push(Stop::depot(head.arrival, load_start));
    let mut time = load_start + cfg.load_vehicle;
    let mut loc = cfg.depot;
    for &id in seq {
        let c = book.get(&id).expect("customer in book");
        let arrival = time + vehicle_travel_time(loc, c.location, &cfg.travel);
        if arrival > c.deadline {
            return None;
        }
        stops.push(Stop::customer(id, arrival));
        time = arrival + cfg.service_vehicle;
        loc = c.location;
    }
    let ret = time + vehicle_travel_time(loc, cfg.depot, &cfg.travel);
    if ret > cfg.t_v_max {
        return None;
    }
    stops.push(Stop::depot(ret, cfg.t_v_max));
    Some(VehiclePlan { stops })
}

/// Cheapest insertion of `c` over all vehicles and positions.
///
/// If some vehicle is idle at the depot, the lowest-indexed idle vehicle
/// first tries a fresh single-customer tour starting now; only if that
/// fails does the exhaustive search run. The exhaustive search keeps a
/// tour's stored loading start (a tour accepts insertions until the
/// vehicle departs but never postpones loading for them). Within a
/// vehicle, equal completion delays prefer the later position; across
/// vehicles, only a strictly smaller delay displaces the incumbent, so
/// the lowest index wins ties.
pub fn best_vehicle_insertion<R: Real>(
    plans: &FleetPlans<R>,
    c: &CustomerRequest<R>,
    cfg: &InstanceConfig<R>,
    book: &CustomerBook<R>,
    now: R,
) -> Option<VehicleInsertion<R>> {
    if let Some((vi, vp)) = plans
        .vehicles
        .iter()
        .enumerate()
        .find(|(_, vp)| vp.is_idle_at(now))
    {
        let load_start = vp.head().arrival.max(now);
        if let Some(plan) = build_vehicle_tour(*vp.head(), load_start, &[c.id], cfg, book) {
            // An idle tour's stored completion may lie in the past; the
            // insertion's cost is measured from now.
            let delta = plan.completion() - vp.completion().max(now);
            return Some(VehicleInsertion {
                vehicle: vi,
                position: 0,
                plan,
                delta,
            });
        }
    }
    let mut best: Option<VehicleInsertion<R>> = None;
    for (vi, vp) in plans.vehicles.iter().enumerate() {
        let ids = vp.customer_ids();
        let load_start = if ids.is_empty() {
            vp.head().arrival.max(now)
        } else {
            vp.head().start
        };
        let mut local: Option<VehicleInsertion<R>> = None;
        for pos in 0..=ids.len() {
            let mut seq = ids.clone();
            seq.insert(pos, c.id);
            if let Some(plan) = build_vehicle_tour(*vp.head(), load_start, &seq, cfg, book) {
                let delta = plan.completion() - vp.completion().max(now);
                if local.as_ref().is_none_or(|b| delta <= b.delta) {
                    local = Some(VehicleInsertion {
                        vehicle: vi,
                        position: pos,
                        plan,
                        delta,
                    });
                }
            }
        }
        if let Some(cand) = local {
            if best.as_ref().is_none_or(|b| cand.delta < b.delta) {
                best = Some(cand);
            }
        }
    }
    best
}

/// Completion delay of the best vehicle insertion, or the sentinel when no
/// vehicle can serve the request.
pub fn delta_vehicle<R: Real>(
    plans: &FleetPlans<R>,
    c: &CustomerRequest<R>,
    cfg: &InstanceConfig<R>,
    book: &CustomerBook<R>,
    now: R,
) -> R {
    best_vehicle_insertion(plans, c, cfg, book, now)
        .map(|i| i.delta)
        .unwrap_or_else(|| R::from_f64(DELTA_SENTINEL_MIN))
}

/// FIFO drone assignment: trips are only appended at the end of a drone's
/// queue. Drones idle at the depot are tried first (both groups ordered by
/// earliest possible loading start, then index); the first drone whose
/// appended trip meets the deadline and the drone horizon wins.
pub fn drone_fifo_assignment<R: Real>(
    plans: &FleetPlans<R>,
    c: &CustomerRequest<R>,
    cfg: &InstanceConfig<R>,
    book: &CustomerBook<R>,
    now: R,
) -> Option<DroneAssignment<R>> {
    let _ = book;
    let mut order: Vec<(u8, f64, usize)> = plans
        .drones
        .iter()
        .enumerate()
        .map(|(di, dp)| {
            let group = if dp.is_idle_at(now) { 0 } else { 1 };
            (group, dp.next_load_start(cfg, now).as_f64(), di)
        })
        .collect();
    order.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    for &(_, _, di) in &order {
        let dp = &plans.drones[di];
        let load_start = dp.next_load_start(cfg, now);
        let fly_out = drone_travel_time(cfg.depot, c.location, &cfg.travel);
        let arrival = drone_event_time(load_start + cfg.load_drone + fly_out, &cfg.travel);
        if arrival > c.deadline {
            continue;
        }
        let fly_back = drone_travel_time(c.location, cfg.depot, &cfg.travel);
        let ret = drone_event_time(arrival + cfg.service_drone + fly_back, &cfg.travel);
        if ret > cfg.t_d_max {
            continue;
        }
        let mut plan = dp.clone();
        if plan.has_customers() {
            // Set the queue tail's loading start, then extend the queue.
            let last = plan.stops.len() - 1;
            match &mut plan.stops[last] {
                Stop::Depot(d) => d.start = load_start,
                Stop::Customer(_) => unreachable!("drone plan ends at a depot"),
            }
        } else {
            plan.head_mut().start = load_start;
        }
        plan.stops.push(Stop::customer(c.id, arrival));
        plan.stops.push(Stop::depot(ret, cfg.t_d_max));
        return Some(DroneAssignment { drone: di, plan });
    }
    None
}

/// Advances all plans from one decision epoch to `to`, collecting realized
/// deliveries into `delivered` as `(customer, planned arrival)` pairs.
///
/// A tour or trip whose unit has departed (loading start + loading time is
/// at or before `to`) is committed: its customers are delivered exactly as
/// planned and leave the pending sets, and the plan keeps only the depot
/// return. Units waiting at the depot have their availability clamped
/// forward to `to`; a unit mid-loading keeps its schedule untouched.
pub(crate) fn advance_in_place<R: Real>(
    plans: &mut FleetPlans<R>,
    to: R,
    cfg: &InstanceConfig<R>,
    delivered: &mut Vec<(u32, R)>,
) {
    for vp in &mut plans.vehicles {
        if vp.has_customers() && vp.head().start + cfg.load_vehicle <= to {
            for c in vp.customers() {
                delivered.push((c.customer, c.arrival));
                plans.pending_vehicle.remove(&c.customer);
            }
            let ret = *vp
                .stops
                .last()
                .and_then(Stop::as_depot)
                .expect("tour ends at a depot");
            vp.stops = vec![Stop::Depot(ret)];
        }
        let waiting = !vp.has_customers() || to < vp.head().start;
        if waiting && vp.head().arrival <= to {
            vp.head_mut().arrival = to;
        }
    }
    for dp in &mut plans.drones {
        while dp.has_customers() && dp.head().start + cfg.load_drone <= to {
            let c = *dp.stops[1].as_customer().expect("trip after head");
            delivered.push((c.customer, c.arrival));
            plans.pending_drone.remove(&c.customer);
            dp.stops.drain(0..2);
            if !dp.has_customers() {
                // The finished queue leaves a charge debt behind.
                let ready = dp.head().arrival + cfg.charge_drone;
                if ready > dp.ready_time {
                    dp.ready_time = ready;
                }
            }
        }
        let waiting = !dp.has_customers() || to < dp.head().start;
        if waiting && dp.head().arrival <= to {
            dp.head_mut().arrival = to;
        }
    }
}

/// Pure variant of [`advance_in_place`]: returns the advanced plans.
/// Advancing is monotone and idempotent: advancing to `to` twice equals
/// advancing once.
pub fn advance_plans<R: Real>(
    plans: &FleetPlans<R>,
    from: R,
    to: R,
    cfg: &InstanceConfig<R>,
) -> FleetPlans<R> {
    debug_assert!(from <= to, "time must not run backwards");
    let mut out = plans.clone();
    let mut sink = Vec::new();
    advance_in_place(&mut out, to, cfg, &mut sink);
    out
}
