//! Same-day delivery dispatching with a mixed fleet of vehicles and drones:
//! instance generation, planned-route simulation, dispatch policies, deep
//! Q-learning, closed-form dispatch probabilities, and experiment reporting.
//!
//! The numeric pipeline is generic over the scalar type through [`Real`];
//! the `*64` aliases below fix it to `f64`, which every shipped tool uses.

pub mod analytics;
pub mod dqn;
pub mod experiments;
pub mod features;
pub mod geom;
pub mod instance;
pub mod nn;
pub mod plans;
pub mod policies;
pub mod routing;
pub mod scalar;
pub mod sim;

pub use scalar::Real;

pub type Location64 = geom::Location<f64>;
pub type TravelModel64 = geom::TravelModel<f64>;
pub type InstanceConfig64 = instance::InstanceConfig<f64>;
pub type CustomerRequest64 = instance::CustomerRequest<f64>;
pub type SamplePath64 = instance::SamplePath<f64>;
pub type FleetPlans64 = plans::FleetPlans<f64>;
pub type VehiclePlan64 = plans::VehiclePlan<f64>;
pub type DronePlan64 = plans::DronePlan<f64>;
pub type State64<'a> = sim::State<'a, f64>;
pub type FeasibilityPair64 = sim::FeasibilityPair<f64>;
pub type EpisodeResult64 = sim::EpisodeResult<f64>;
pub type FeatureVector64 = features::FeatureVector<f64>;
pub type Mlp64 = nn::Mlp<f64>;
pub type Trainer64 = dqn::Trainer<f64>;
