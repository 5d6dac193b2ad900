//! Instance configuration, stochastic request generation, and sample-path
//! persistence.

use std::fmt::Write as _;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use thiserror::Error;

use crate::geom::{Location, TravelModel};
use crate::scalar::Real;

/// A single delivery request. The deadline is always
/// `request_time + deadline_len` of the generating config.
#[derive(Clone, Debug, PartialEq)]
pub struct CustomerRequest<R: Real> {
    pub id: u32,
    pub location: Location<R>,
    pub request_time: R,
    pub deadline: R,
}

/// Spatial request distribution: 2D normal around the depot, with either a
/// fixed standard deviation or one that varies with the request time.
#[derive(Clone, Debug, PartialEq)]
pub enum Geography<R: Real> {
    Homogeneous { sigma_km: R },
    /// Spans must be contiguous and cover the whole order window.
    TimeVarying { spans: Vec<GeoSpan<R>> },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeoSpan<R: Real> {
    /// Inclusive start of the request-time interval (minutes).
    pub start: R,
    /// Exclusive end of the request-time interval (minutes).
    pub end: R,
    pub sigma_km: R,
}

impl<R: Real> Geography<R> {
    /// Heterogeneous geography of the computational study: 3.0 km spread in
    /// [0, 120), 1.0 km in [120, 300), 3.0 km in [300, window end).
    pub fn study_heterogeneous(window_end: R) -> Self {
        let s = |a: f64, b: R, sig: f64| GeoSpan {
            start: R::from_f64(a),
            end: b,
            sigma_km: R::from_f64(sig),
        };
        Geography::TimeVarying {
            spans: vec![
                s(0.0, R::from_f64(120.0), 3.0),
                s(120.0, R::from_f64(300.0), 1.0),
                s(300.0, window_end, 3.0),
            ],
        }
    }

    /// Standard deviation for a request arriving at time `t`. Times at or
    /// past the last span's end use the last span.
    pub fn sigma_at(&self, t: R) -> R {
        match self {
            Geography::Homogeneous { sigma_km } => *sigma_km,
            Geography::TimeVarying { spans } => {
                for sp in spans {
                    if t >= sp.start && t < sp.end {
                        return sp.sigma_km;
                    }
                }
                spans.last().expect("validated: non-empty spans").sigma_km
            }
        }
    }

    /// Largest standard deviation over the whole window.
    pub fn max_sigma(&self) -> R {
        match self {
            Geography::Homogeneous { sigma_km } => *sigma_km,
            Geography::TimeVarying { spans } => spans
                .iter()
                .map(|s| s.sigma_km)
                .fold(R::zero(), |a, b| if b > a { b } else { a }),
        }
    }
}

/// Everything that defines a problem instance: horizons, handling times,
/// fleet sizes, demand process, and travel model.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceConfig<R: Real> {
    /// Short identifier stamped into generated sample paths.
    pub name: String,
    /// Requests arrive in [0, order_window_end) (minutes).
    pub order_window_end: R,
    /// Latest depot return for vehicles.
    pub t_v_max: R,
    /// Latest depot return for drones.
    pub t_d_max: R,
    /// Deadline length: deadline = request time + deadline_len.
    pub deadline_len: R,
    /// Vehicle loading time per tour.
    pub load_vehicle: R,
    /// Drone loading time per trip.
    pub load_drone: R,
    /// Vehicle service time per customer stop.
    pub service_vehicle: R,
    /// Drone service time at the customer.
    pub service_drone: R,
    /// Drone battery swap / charge time between trips.
    pub charge_drone: R,
    /// Number of vehicles.
    pub fleet_m: usize,
    /// Number of drones.
    pub fleet_n: usize,
    /// Expected number of Poisson requests over the order window.
    pub expected_requests: R,
    pub depot: Location<R>,
    pub geography: Geography<R>,
    pub travel: TravelModel<R>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("order window end {window} exceeds a fleet horizon ({horizon})")]
    WindowBeyondHorizon { window: f64, horizon: f64 },
    #[error("{name} must be positive (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be nonnegative (got {value})")]
    Negative { name: &'static str, value: f64 },
    #[error("fleet is empty (no vehicles and no drones)")]
    EmptyFleet,
    #[error("geography spans must be contiguous from 0 to the window end")]
    BadGeographySpans,
    #[error("depot coordinates must be finite")]
    BadDepot,
}

impl<R: Real> InstanceConfig<R> {
    /// Instance family of the computational study, parameterised by fleet
    /// size and geography.
    pub fn study(fleet_m: usize, fleet_n: usize, geography: Geography<R>) -> Self {
        let geo_tag = match &geography {
            Geography::Homogeneous { .. } => "hom",
            Geography::TimeVarying { .. } => "het",
        };
        Self {
            name: format!("study-m{fleet_m}-n{fleet_n}-{geo_tag}"),
            order_window_end: R::from_f64(420.0),
            t_v_max: R::from_f64(480.0),
            t_d_max: R::from_f64(720.0),
            deadline_len: R::from_f64(240.0),
            load_vehicle: R::from_f64(3.0),
            load_drone: R::from_f64(3.0),
            service_vehicle: R::from_f64(3.0),
            service_drone: R::from_f64(3.0),
            charge_drone: R::from_f64(20.0),
            fleet_m,
            fleet_n,
            expected_requests: R::from_f64(500.0),
            depot: Location::origin(),
            geography,
            travel: TravelModel::study(),
        }
    }

    /// Homogeneous study instance with the default 3.0 km spread.
    pub fn study_homogeneous(fleet_m: usize, fleet_n: usize) -> Self {
        Self::study(
            fleet_m,
            fleet_n,
            Geography::Homogeneous {
                sigma_km: R::from_f64(3.0),
            },
        )
    }

    /// Small worked grid scenario: one vehicle, one drone, 10-minute
    /// handling times, 20-minute charge, on the grid travel model.
    pub fn grid_example() -> Self {
        Self {
            name: "grid".to_string(),
            order_window_end: R::from_f64(420.0),
            t_v_max: R::from_f64(480.0),
            t_d_max: R::from_f64(720.0),
            deadline_len: R::from_f64(240.0),
            load_vehicle: R::from_f64(10.0),
            load_drone: R::from_f64(10.0),
            service_vehicle: R::from_f64(10.0),
            service_drone: R::from_f64(10.0),
            charge_drone: R::from_f64(20.0),
            fleet_m: 1,
            fleet_n: 1,
            expected_requests: R::from_f64(6.0),
            depot: Location::origin(),
            geography: Geography::Homogeneous {
                sigma_km: R::from_f64(3.0),
            },
            travel: TravelModel::grid(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = |name: &'static str, v: R| {
            if v > R::zero() {
                Ok(())
            } else {
                Err(ConfigError::NonPositive {
                    name,
                    value: v.as_f64(),
                })
            }
        };
        let nonneg = |name: &'static str, v: R| {
            if v >= R::zero() {
                Ok(())
            } else {
                Err(ConfigError::Negative {
                    name,
                    value: v.as_f64(),
                })
            }
        };
        pos("order_window_end", self.order_window_end)?;
        pos("t_v_max", self.t_v_max)?;
        pos("t_d_max", self.t_d_max)?;
        pos("deadline_len", self.deadline_len)?;
        nonneg("load_vehicle", self.load_vehicle)?;
        nonneg("load_drone", self.load_drone)?;
        nonneg("service_vehicle", self.service_vehicle)?;
        nonneg("service_drone", self.service_drone)?;
        nonneg("charge_drone", self.charge_drone)?;
        nonneg("expected_requests", self.expected_requests)?;
        pos("vehicle_speed_kmh", self.travel.vehicle_speed_kmh)?;
        pos("drone_speed_kmh", self.travel.drone_speed_kmh)?;
        pos("street_factor", self.travel.street_factor)?;
        let horizon = self.t_v_max.min(self.t_d_max);
        if self.order_window_end > horizon {
            return Err(ConfigError::WindowBeyondHorizon {
                window: self.order_window_end.as_f64(),
                horizon: horizon.as_f64(),
            });
        }
        if self.fleet_m == 0 && self.fleet_n == 0 {
            return Err(ConfigError::EmptyFleet);
        }
        if !self.depot.is_finite() {
            return Err(ConfigError::BadDepot);
        }
        match &self.geography {
            Geography::Homogeneous { sigma_km } => pos("sigma_km", *sigma_km)?,
            Geography::TimeVarying { spans } => {
                if spans.is_empty() {
                    return Err(ConfigError::BadGeographySpans);
                }
                let mut cursor = R::zero();
                for sp in spans {
                    pos("sigma_km", sp.sigma_km)?;
                    if sp.start != cursor || sp.end <= sp.start {
                        return Err(ConfigError::BadGeographySpans);
                    }
                    cursor = sp.end;
                }
                if cursor < self.order_window_end {
                    return Err(ConfigError::BadGeographySpans);
                }
            }
        }
        Ok(())
    }

    /// End of an operating day: latest of the two fleet horizons.
    pub fn day_end(&self) -> R {
        self.t_v_max.max(self.t_d_max)
    }
}

/// One day of requests, ordered by request time.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath<R: Real> {
    /// Name of the generating config.
    pub config_ref: String,
    pub requests: Vec<CustomerRequest<R>>,
}

/// Draws one sample path: Poisson arrivals over the order window with the
/// configured expected count, locations normal around the depot with the
/// geography's time-dependent spread.
///
/// Identical `(cfg, seed)` always produce the identical path.
pub fn gen_sample_path<R: Real>(cfg: &InstanceConfig<R>, seed: u64) -> SamplePath<R> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let window = cfg.order_window_end.as_f64();
    let rate = cfg.expected_requests.as_f64() / window;
    let mut requests = Vec::new();
    if rate > 0.0 {
        // Sampling happens in f64 regardless of R so that f32 and f64
        // instances draw the same underlying randomness.
        let exp = Exp::new(rate).expect("positive rate");
        let mut t = 0.0_f64;
        let mut id = 0_u32;
        loop {
            t += exp.sample(&mut rng);
            if t >= window {
                break;
            }
            let sigma = cfg.geography.sigma_at(R::from_f64(t)).as_f64();
            let normal = Normal::new(0.0, sigma).expect("positive sigma");
            let dx = normal.sample(&mut rng);
            let dy = normal.sample(&mut rng);
            let request_time = R::from_f64(t);
            requests.push(CustomerRequest {
                id,
                location: Location::new(
                    cfg.depot.x_km + R::from_f64(dx),
                    cfg.depot.y_km + R::from_f64(dy),
                ),
                request_time,
                deadline: request_time + cfg.deadline_len,
            });
            id += 1;
        }
    }
    SamplePath {
        config_ref: cfg.name.clone(),
        requests,
    }
}

/// Generates `days` paths with consecutive seeds starting at `seed0`.
pub fn gen_sample_paths<R: Real>(
    cfg: &InstanceConfig<R>,
    seed0: u64,
    days: usize,
) -> Vec<SamplePath<R>> {
    (0..days)
        .map(|i| gen_sample_path(cfg, seed0.wrapping_add(i as u64)))
        .collect()
}

#[derive(Debug, Error)]
pub enum PathIoError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported format header: {0:?}")]
    Version(String),
}

const PATHS_HEADER: &str = "sameday-paths v1";

/// Writes paths as a line-oriented text format. Floats use Rust's shortest
/// round-trip formatting, so save/load is lossless.
pub fn save_paths<R: Real, W: Write>(paths: &[SamplePath<R>], mut w: W) -> Result<(), PathIoError> {
    let mut out = String::new();
    writeln!(out, "{PATHS_HEADER}").expect("string write");
    for p in paths {
        writeln!(out, "path {} {}", p.config_ref, p.requests.len()).expect("string write");
        for r in &p.requests {
            writeln!(
                out,
                "{} {} {} {} {}",
                r.id,
                r.request_time.as_f64(),
                r.location.x_km.as_f64(),
                r.location.y_km.as_f64(),
                r.deadline.as_f64()
            )
            .expect("string write");
        }
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn load_paths<R: Real, Rd: Read>(r: Rd) -> Result<Vec<SamplePath<R>>, PathIoError> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines().enumerate();
    let parse_err = |line: usize, msg: &str| PathIoError::Parse {
        line: line + 1,
        msg: msg.to_string(),
    };
    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(parse_err(0, "empty file")),
    };
    if header.trim() != PATHS_HEADER {
        return Err(PathIoError::Version(header));
    }
    let mut paths: Vec<SamplePath<R>> = Vec::new();
    let mut remaining = 0usize;
    for (n, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("path ") {
            if remaining > 0 {
                return Err(parse_err(n, "previous path is missing requests"));
            }
            let mut it = rest.split_whitespace();
            let config_ref = it
                .next()
                .ok_or_else(|| parse_err(n, "missing config name"))?
                .to_string();
            remaining = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(n, "missing request count"))?;
            if it.next().is_some() {
                return Err(parse_err(n, "trailing tokens on path line"));
            }
            paths.push(SamplePath {
                config_ref,
                requests: Vec::with_capacity(remaining),
            });
        } else {
            if remaining == 0 {
                return Err(parse_err(n, "request line outside a path"));
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(parse_err(n, "expected: id time x y deadline"));
            }
            let id: u32 = fields[0]
                .parse()
                .map_err(|_| parse_err(n, "bad request id"))?;
            let mut nums = [0.0f64; 4];
            for (slot, f) in nums.iter_mut().zip(&fields[1..]) {
                *slot = f.parse().map_err(|_| parse_err(n, "bad float field"))?;
            }
            let path = paths.last_mut().expect("path header seen");
            let req = CustomerRequest {
                id,
                request_time: R::from_f64(nums[0]),
                location: Location::new(R::from_f64(nums[1]), R::from_f64(nums[2])),
                deadline: R::from_f64(nums[3]),
            };
            if let Some(prev) = path.requests.last() {
                if req.request_time < prev.request_time {
                    return Err(parse_err(n, "request times must be non-decreasing"));
                }
            }
            path.requests.push(req);
            remaining -= 1;
        }
    }
    if remaining > 0 {
        return Err(PathIoError::Parse {
            line: 0,
            msg: "file ended mid-path".to_string(),
        });
    }
    Ok(paths)
}

pub fn save_paths_file<R: Real>(paths: &[SamplePath<R>], path: &Path) -> Result<(), PathIoError> {
    let f = std::fs::File::create(path)?;
    save_paths(paths, io::BufWriter::new(f))
}

pub fn load_paths_file<R: Real>(path: &Path) -> Result<Vec<SamplePath<R>>, PathIoError> {
    let f = std::fs::File::open(path)?;
    load_paths(f)
}
