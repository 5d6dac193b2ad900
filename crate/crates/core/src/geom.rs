//! Locations and the travel-time models for both fleets.

use crate::scalar::Real;

/// A point in the service area, in kilometres relative to a fixed origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Location<R: Real> {
    pub x_km: R,
    pub y_km: R,
}

impl<R: Real> Location<R> {
    pub fn new(x_km: R, y_km: R) -> Self {
        Self { x_km, y_km }
    }

    pub fn origin() -> Self {
        Self::new(R::zero(), R::zero())
    }

    pub fn euclid(self, other: Self) -> R {
        let dx = self.x_km - other.x_km;
        let dy = self.y_km - other.y_km;
        (dx * dx + dy * dy).sqrt()
    }

    pub fn manhattan(self, other: Self) -> R {
        (self.x_km - other.x_km).abs() + (self.y_km - other.y_km).abs()
    }

    pub fn is_finite(self) -> bool {
        self.x_km.is_finite() && self.y_km.is_finite()
    }
}

/// Distance metric underlying vehicle travel times.
///
/// `ScaledEuclid` multiplies straight-line distance by a street factor.
/// `Manhattan` is exact grid distance; the small worked grid scenario needs
/// it because no uniform scaling of Euclidean distance reproduces
/// per-segment street travel on a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VehicleMetric {
    ScaledEuclid,
    Manhattan,
}

/// Travel-time model shared by every scheduling computation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TravelModel<R: Real> {
    pub vehicle_speed_kmh: R,
    pub drone_speed_kmh: R,
    /// Multiplier applied to the vehicle metric distance.
    pub street_factor: R,
    pub vehicle_metric: VehicleMetric,
    /// Round drone arrival and return event times up to whole minutes.
    pub drone_round_up: bool,
}

impl<R: Real> TravelModel<R> {
    /// Model used by the computational study: vehicles drive at 30 km/h on a
    /// street network approximated as 1.5x Euclidean distance, drones fly
    /// straight lines at 40 km/h.
    pub fn study() -> Self {
        Self {
            vehicle_speed_kmh: R::from_f64(30.0),
            drone_speed_kmh: R::from_f64(40.0),
            street_factor: R::from_f64(1.5),
            vehicle_metric: VehicleMetric::ScaledEuclid,
            drone_round_up: false,
        }
    }

    /// Model of the small worked grid scenario: 20 minutes per grid segment
    /// for vehicles, 10 minutes per unit of straight-line distance for
    /// drones, drone event times rounded up to whole minutes.
    pub fn grid() -> Self {
        Self {
            vehicle_speed_kmh: R::from_f64(3.0),
            drone_speed_kmh: R::from_f64(6.0),
            street_factor: R::one(),
            vehicle_metric: VehicleMetric::Manhattan,
            drone_round_up: true,
        }
    }
}

/// Vehicle travel time in minutes between two points.
pub fn vehicle_travel_time<R: Real>(a: Location<R>, b: Location<R>, tm: &TravelModel<R>) -> R {
    let dist = match tm.vehicle_metric {
        VehicleMetric::ScaledEuclid => a.euclid(b),
        VehicleMetric::Manhattan => a.manhattan(b),
    };
    dist * tm.street_factor * R::from_f64(60.0) / tm.vehicle_speed_kmh
}

/// Drone travel time in minutes between two points (always straight-line).
pub fn drone_travel_time<R: Real>(a: Location<R>, b: Location<R>, tm: &TravelModel<R>) -> R {
    a.euclid(b) * R::from_f64(60.0) / tm.drone_speed_kmh
}

/// Applies the model's drone event-time rounding to an event time.
pub fn drone_event_time<R: Real>(t: R, tm: &TravelModel<R>) -> R {
    if tm.drone_round_up {
        t.ceil()
    } else {
        t
    }
}
