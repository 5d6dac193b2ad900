//! Experiment orchestration: named policy specs, solution quality and
//! improvement measures, the paired t-test, and the evaluation matrix
//! over fleets and geographies with CSV reporting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::dqn::{trainer_from_checkpoint, CheckpointError, Trainer};
use crate::instance::{gen_sample_paths, Geography, InstanceConfig};
use crate::policies::{DeltaPolicy, GreedyAcceptVehicleFirst, Pfa, RandomPolicy};
use crate::scalar::Real;
use crate::sim::{
    decision_log_csv, run_episode, ActionError, Alpha, EpisodeResult, FeasibilityPair, Policy,
    State,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("samples must be non-empty and equally long")]
    BadSamples,
    #[error("no requests in the evaluated episodes")]
    NoRequests,
    #[error("baseline quality is zero; improvement undefined")]
    ZeroBaseline,
    #[error("bad policy spec {spec:?}: {msg}")]
    BadPolicySpec { spec: String, msg: String },
    #[error("checkpoint fleet ({ckpt_m}, {ckpt_n}) does not match config ({cfg_m}, {cfg_n})")]
    FleetMismatch {
        ckpt_m: usize,
        ckpt_n: usize,
        cfg_m: usize,
        cfg_n: usize,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error("matrix spec needs at least one fleet, geography, policy, and day")]
    EmptyMatrix,
    #[error("bad episode log: {0}")]
    BadEpisodeLog(String),
}

/// Result of a paired t-test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: u32,
    /// True when the differences had zero variance with non-zero mean, so
    /// the statistic degenerates (p reported as 0).
    pub degenerate: bool,
}

/// Two-sided paired t-test on per-day pairs. Identical samples give p = 1;
/// zero-variance differences with non-zero mean give p = 0 with the
/// `degenerate` flag set.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest, ExperimentError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(ExperimentError::BadSamples);
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    let df = (a.len() - 1) as u32;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest {
                t: 0.0,
                p: 1.0,
                df,
                degenerate: false,
            }
        } else {
            TTest {
                t: if mean > 0.0 {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                },
                p: 0.0,
                df,
                degenerate: true,
            }
        });
    }
    let t = mean / (var.sqrt() / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("valid dof");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TTest {
        t,
        p,
        df,
        degenerate: false,
    })
}

/// Fraction of requests served over a set of episodes.
pub fn solution_quality<R: Real>(results: &[EpisodeResult<R>]) -> Result<f64, ExperimentError> {
    let requests: u64 = results.iter().map(|r| r.requests() as u64).sum();
    if requests == 0 {
        return Err(ExperimentError::NoRequests);
    }
    let served: u64 = results.iter().map(|r| u64::from(r.served)).sum();
    Ok(served as f64 / requests as f64)
}

/// Relative improvement of quality `qa` over baseline `qb`, in percent.
pub fn improvement(qa: f64, qb: f64) -> Result<f64, ExperimentError> {
    if qb <= 0.0 {
        return Err(ExperimentError::ZeroBaseline);
    }
    Ok((qa - qb) / qb * 100.0)
}

/// A parsed `name:key=value,...` policy spec.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySpec {
    pub name: String,
    pub params: BTreeMap<String, String>,
    /// The original string, used in report rows and file names.
    pub raw: String,
}

/// Parses specs like `pfa:tau=14`, `delta:delta=35`, `random:seed=3`,
/// `greedy`, or `q:checkpoint=model.ckpt`.
pub fn parse_policy_spec(spec: &str) -> Result<PolicySpec, ExperimentError> {
    let bad = |msg: &str| ExperimentError::BadPolicySpec {
        spec: spec.to_string(),
        msg: msg.to_string(),
    };
    let (name, rest) = match spec.split_once(':') {
        Some((n, r)) => (n, Some(r)),
        None => (spec, None),
    };
    if name.is_empty() {
        return Err(bad("empty policy name"));
    }
    let mut params = BTreeMap::new();
    if let Some(rest) = rest {
        for kv in rest.split(',') {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad("parameters must look like key=value"))?;
            if k.is_empty() || v.is_empty() {
                return Err(bad("empty parameter key or value"));
            }
            if params.insert(k.to_string(), v.to_string()).is_some() {
                return Err(bad("duplicate parameter"));
            }
        }
    }
    Ok(PolicySpec {
        name: name.to_string(),
        params,
        raw: spec.to_string(),
    })
}

fn param_f64(spec: &PolicySpec, key: &str) -> Result<f64, ExperimentError> {
    let raw = spec
        .params
        .get(key)
        .ok_or_else(|| ExperimentError::BadPolicySpec {
            spec: spec.raw.clone(),
            msg: format!("missing required parameter {key:?}"),
        })?;
    raw.parse().map_err(|_| ExperimentError::BadPolicySpec {
        spec: spec.raw.clone(),
        msg: format!("parameter {key:?} is not a number"),
    })
}

/// Greedy dispatch with an owned trained learner.
pub struct TrainedPolicy<R: Real> {
    trainer: Trainer<R>,
    cfg: InstanceConfig<R>,
}

impl<R: Real> TrainedPolicy<R> {
    pub fn new(trainer: Trainer<R>, cfg: &InstanceConfig<R>) -> Result<Self, ExperimentError> {
        if trainer.fleet_m != cfg.fleet_m || trainer.fleet_n != cfg.fleet_n {
            return Err(ExperimentError::FleetMismatch {
                ckpt_m: trainer.fleet_m,
                ckpt_n: trainer.fleet_n,
                cfg_m: cfg.fleet_m,
                cfg_n: cfg.fleet_n,
            });
        }
        Ok(Self {
            trainer,
            cfg: cfg.clone(),
        })
    }
}

impl<R: Real> Policy<R> for TrainedPolicy<R> {
    fn decide(&mut self, state: &State<'_, R>, feas: &FeasibilityPair<R>) -> Alpha {
        self.trainer.greedy(state, feas, &self.cfg)
    }
}

/// Maps policy specs to ready-to-run policies. Implementations may resolve
/// checkpoints differently (e.g. train on demand); the default reads
/// checkpoint files from disk.
pub trait PolicyProvider<R: Real> {
    fn make(
        &mut self,
        cfg: &InstanceConfig<R>,
        spec: &str,
    ) -> Result<Box<dyn Policy<R>>, ExperimentError>;
}

/// Resolves the built-in policy names:
/// `pfa:tau=..`, `pfa_rej:tau=..`, `delta:delta=..`, `random[:seed=..]`,
/// `greedy`, and `q|q_no_rej|post_decision:checkpoint=..` (the trainer
/// kind is read from the checkpoint itself).
pub struct DefaultProvider;

impl<R: Real> PolicyProvider<R> for DefaultProvider {
    fn make(
        &mut self,
        cfg: &InstanceConfig<R>,
        spec: &str,
    ) -> Result<Box<dyn Policy<R>>, ExperimentError> {
        let parsed = parse_policy_spec(spec)?;
        match parsed.name.as_str() {
            "pfa" => {
                let tau = param_f64(&parsed, "tau")?;
                Ok(Box::new(Pfa::new(R::from_f64(tau), cfg)))
            }
            "pfa_rej" => {
                let tau = param_f64(&parsed, "tau")?;
                Ok(Box::new(Pfa::with_rejection(R::from_f64(tau), cfg)))
            }
            "delta" => {
                let delta = param_f64(&parsed, "delta")?;
                Ok(Box::new(DeltaPolicy {
                    delta_max: R::from_f64(delta),
                }))
            }
            "random" => {
                let seed = match parsed.params.get("seed") {
                    Some(_) => param_f64(&parsed, "seed")? as u64,
                    None => 0,
                };
                Ok(Box::new(RandomPolicy::new(seed)))
            }
            "greedy" => Ok(Box::new(GreedyAcceptVehicleFirst)),
            "q" | "q_no_rej" | "post_decision" => {
                let path = parsed.params.get("checkpoint").ok_or_else(|| {
                    ExperimentError::BadPolicySpec {
                        spec: spec.to_string(),
                        msg: "missing required parameter \"checkpoint\"".to_string(),
                    }
                })?;
                let bytes = std::fs::read(Path::new(path))?;
                let trainer = trainer_from_checkpoint::<R>(&bytes, 1)?;
                Ok(Box::new(TrainedPolicy::new(trainer, cfg)?))
            }
            other => Err(ExperimentError::BadPolicySpec {
                spec: spec.to_string(),
                msg: format!("unknown policy {other:?}"),
            }),
        }
    }
}

/// Geography selector for matrix cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeoKind {
    Homogeneous,
    Heterogeneous,
}

impl GeoKind {
    pub fn label(self) -> &'static str {
        match self {
            GeoKind::Homogeneous => "homogeneous",
            GeoKind::Heterogeneous => "heterogeneous",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "homogeneous" => Some(GeoKind::Homogeneous),
            "heterogeneous" => Some(GeoKind::Heterogeneous),
            _ => None,
        }
    }

    /// Geography for a matrix cell. Homogeneous keeps the base config's
    /// sigma when the base is itself homogeneous, else the study default.
    pub fn geography<R: Real>(self, base: &InstanceConfig<R>) -> Geography<R> {
        match self {
            GeoKind::Homogeneous => Geography::Homogeneous {
                sigma_km: match base.geography {
                    Geography::Homogeneous { sigma_km } => sigma_km,
                    _ => R::from_f64(3.0),
                },
            },
            GeoKind::Heterogeneous => Geography::study_heterogeneous(base.order_window_end),
        }
    }
}

/// The evaluation matrix: fleets x geographies, each cell scoring every
/// policy on a shared set of days.
#[derive(Clone, Debug)]
pub struct RunMatrixSpec {
    pub fleets: Vec<(usize, usize)>,
    pub geographies: Vec<GeoKind>,
    pub eval_days: usize,
    pub policies: Vec<String>,
    pub seed: u64,
}

/// One policy's performance in one matrix cell.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub fleet_m: usize,
    pub fleet_n: usize,
    pub geography: GeoKind,
    pub policy: String,
    pub days: usize,
    pub requests: u64,
    pub served: u64,
    pub mean_served: f64,
    pub quality: f64,
    /// Relative improvement over the cell's first policy (None for the
    /// first policy itself or a zero baseline).
    pub improvement_vs_first_pct: Option<f64>,
    pub p_value_vs_first: f64,
    pub per_day_served: Vec<u32>,
}

/// Full matrix output: structured results plus every CSV artifact.
#[derive(Clone, Debug)]
pub struct MatrixOutput {
    pub cells: Vec<CellResult>,
    pub report_csv: String,
    pub episodes_csv: String,
    /// Per (cell, policy): first-day decision scatter CSV.
    pub scatter: Vec<(String, String)>,
    /// Per (cell, policy): first-day feasibility map CSV.
    pub feasmap: Vec<(String, String)>,
}

/// One row of the persisted episode log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRow {
    pub fleet_m: usize,
    pub fleet_n: usize,
    pub geography: String,
    pub policy: String,
    pub day: usize,
    pub requests: u32,
    pub served: u32,
    pub forced_denials: u32,
    pub policy_denials: u32,
}

const EPISODES_HEADER: &str =
    "m,n,geography,policy,day,requests,served,forced_denials,policy_denials";

/// Episode log as CSV (one row per day per policy per cell).
pub fn episodes_csv(rows: &[EpisodeRow]) -> String {
    let mut out = String::from(EPISODES_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.fleet_m,
            r.fleet_n,
            r.geography,
            r.policy,
            r.day,
            r.requests,
            r.served,
            r.forced_denials,
            r.policy_denials
        )
        .expect("string write");
    }
    out
}

/// Parses a persisted episode log back into rows.
pub fn parse_episodes_csv(s: &str) -> Result<Vec<EpisodeRow>, ExperimentError> {
    let mut lines = s.lines();
    let header = lines
        .next()
        .ok_or_else(|| ExperimentError::BadEpisodeLog("empty file".to_string()))?;
    if header != EPISODES_HEADER {
        return Err(ExperimentError::BadEpisodeLog(format!(
            "unexpected header {header:?}"
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(ExperimentError::BadEpisodeLog(format!(
                "line {}: expected 9 fields",
                i + 2
            )));
        }
        let num = |s: &str| -> Result<u64, ExperimentError> {
            s.parse()
                .map_err(|_| ExperimentError::BadEpisodeLog(format!("line {}: bad number", i + 2)))
        };
        rows.push(EpisodeRow {
            fleet_m: num(f[0])? as usize,
            fleet_n: num(f[1])? as usize,
            geography: f[2].to_string(),
            policy: f[3].to_string(),
            day: num(f[4])? as usize,
            requests: num(f[5])? as u32,
            served: num(f[6])? as u32,
            forced_denials: num(f[7])? as u32,
            policy_denials: num(f[8])? as u32,
        });
    }
    Ok(rows)
}

const REPORT_HEADER: &str =
    "m,n,geography,policy,days,requests,served,mean_served,q,improvement_vs_first_pct,p_value_vs_first";

/// Builds the aggregated report from episode rows. Groups appear in
/// first-seen order; within one (fleet, geography) cell, improvement and
/// p-value compare against the cell's first policy on paired days. The
/// report built here from a re-parsed episode log is byte-identical to
/// the one produced by [`run_matrix`].
pub fn report_from_rows(rows: &[EpisodeRow]) -> Result<String, ExperimentError> {
    // Group rows per (m, n, geo, policy) keeping insertion order.
    let mut order: Vec<(usize, usize, String, String)> = Vec::new();
    let mut groups: BTreeMap<(usize, usize, String, String), Vec<&EpisodeRow>> = BTreeMap::new();
    for r in rows {
        let key = (
            r.fleet_m,
            r.fleet_n,
            r.geography.clone(),
            r.policy.clone(),
        );
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    // Baseline per cell: the first policy seen for that (m, n, geo).
    let mut baselines: BTreeMap<(usize, usize, String), (String, Vec<f64>, f64)> = BTreeMap::new();
    for key in &order {
        let rows = &groups[key];
        let days = rows.len();
        let requests: u64 = rows.iter().map(|r| u64::from(r.requests)).sum();
        let served: u64 = rows.iter().map(|r| u64::from(r.served)).sum();
        if requests == 0 {
            return Err(ExperimentError::NoRequests);
        }
        let mean_served = served as f64 / days.max(1) as f64;
        let q = served as f64 / requests as f64;
        let per_day: Vec<f64> = rows.iter().map(|r| f64::from(r.served)).collect();
        let cell = (key.0, key.1, key.2.clone());
        let (improvement_str, p_value) = match baselines.get(&cell) {
            None => {
                baselines.insert(cell, (key.3.clone(), per_day.clone(), q));
                (String::new(), 1.0)
            }
            Some((_, base_days, base_q)) => {
                let imp = if *base_q > 0.0 {
                    format!("{}", (q - base_q) / base_q * 100.0)
                } else {
                    String::new()
                };
                let p = if base_days.len() == per_day.len() && per_day.len() >= 2 {
                    paired_t_test(&per_day, base_days)?.p
                } else {
                    1.0
                };
                (imp, p)
            }
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            key.0,
            key.1,
            key.2,
            key.3,
            days,
            requests,
            served,
            mean_served,
            q,
            improvement_str,
            p_value
        )
        .expect("string write");
    }
    Ok(out)
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Feasibility map CSV: per request, whether each fleet was infeasible.
pub fn feasibility_map_csv<R: Real>(result: &EpisodeResult<R>) -> String {
    let mut out = String::from("t_min,veh_infeasible,drone_infeasible\n");
    for d in &result.decisions {
        writeln!(
            out,
            "{},{},{}",
            d.t,
            u8::from(!d.veh_feasible),
            u8::from(!d.drone_feasible)
        )
        .expect("string write");
    }
    out
}

/// Runs every policy over every (fleet, geography) cell on shared seeded
/// days. Cells copy `base` and override only fleet and geography. Per
/// cell, day `i` uses seed `cell_seed + i`, where `cell_seed` mixes the
/// matrix seed with the cell index, so all policies within a cell see
/// identical request streams.
pub fn run_matrix<R: Real>(
    spec: &RunMatrixSpec,
    base: &InstanceConfig<R>,
    provider: &mut dyn PolicyProvider<R>,
) -> Result<MatrixOutput, ExperimentError> {
    if spec.fleets.is_empty()
        || spec.geographies.is_empty()
        || spec.policies.is_empty()
        || spec.eval_days == 0
    {
        return Err(ExperimentError::EmptyMatrix);
    }
    let mut rows: Vec<EpisodeRow> = Vec::new();
    let mut cells: Vec<CellResult> = Vec::new();
    let mut scatter = Vec::new();
    let mut feasmap = Vec::new();
    let mut cell_index = 0u64;
    for &(m, n) in &spec.fleets {
        for &geo in &spec.geographies {
            let mut cfg = base.clone();
            cfg.fleet_m = m;
            cfg.fleet_n = n;
            cfg.geography = geo.geography(base);
            cfg.name = format!("{}-m{}-n{}-{}", base.name, m, n, geo.label());
            let cell_seed = spec
                .seed
                .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(cell_index + 1));
            cell_index += 1;
            let paths = gen_sample_paths(&cfg, cell_seed, spec.eval_days);
            let mut baseline: Option<(Vec<f64>, f64)> = None;
            for policy_spec in &spec.policies {
                let mut policy = provider.make(&cfg, policy_spec)?;
                let mut per_day: Vec<u32> = Vec::with_capacity(spec.eval_days);
                let mut first_day: Option<EpisodeResult<R>> = None;
                let mut requests = 0u64;
                let mut served = 0u64;
                for (day, path) in paths.iter().enumerate() {
                    let res = run_episode(policy.as_mut(), path, &cfg)?;
                    requests += res.requests() as u64;
                    served += u64::from(res.served);
                    per_day.push(res.served);
                    rows.push(EpisodeRow {
                        fleet_m: m,
                        fleet_n: n,
                        geography: geo.label().to_string(),
                        policy: policy_spec.clone(),
                        day,
                        requests: res.requests() as u32,
                        served: res.served,
                        forced_denials: res.forced_denials,
                        policy_denials: res.policy_denials,
                    });
                    if day == 0 {
                        first_day = Some(res);
                    }
                }
                let first = first_day.expect("eval_days >= 1");
                let tag = format!("m{m}-n{n}-{}-{}", geo.label(), sanitize(policy_spec));
                scatter.push((format!("scatter-{tag}.csv"), decision_log_csv(&first)));
                feasmap.push((format!("feasmap-{tag}.csv"), feasibility_map_csv(&first)));
                if requests == 0 {
                    return Err(ExperimentError::NoRequests);
                }
                let q = served as f64 / requests as f64;
                let per_day_f: Vec<f64> = per_day.iter().map(|&s| f64::from(s)).collect();
                let (imp, p) = match &baseline {
                    None => {
                        baseline = Some((per_day_f.clone(), q));
                        (None, 1.0)
                    }
                    Some((base_days, base_q)) => {
                        let imp = (*base_q > 0.0).then(|| (q - base_q) / base_q * 100.0);
                        let p = paired_t_test(&per_day_f, base_days)?.p;
                        (imp, p)
                    }
                };
                cells.push(CellResult {
                    fleet_m: m,
                    fleet_n: n,
                    geography: geo,
                    policy: policy_spec.clone(),
                    days: spec.eval_days,
                    requests,
                    served,
                    mean_served: served as f64 / spec.eval_days as f64,
                    quality: q,
                    improvement_vs_first_pct: imp,
                    p_value_vs_first: p,
                    per_day_served: per_day,
                });
            }
        }
    }
    let episodes = episodes_csv(&rows);
    let report = report_from_rows(&rows)?;
    Ok(MatrixOutput {
        cells,
        report_csv: report,
        episodes_csv: episodes,
        scatter,
        feasmap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_test_matches_the_textbook_example() {
        let a = [2.0, 4.0, 6.0, 8.0, 10.0];
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        // Differences 1..5.
        let r = paired_t_test(&a, &b).unwrap();
        assert!((r.t - 4.242640687119285).abs() < 1e-12);
        assert!((r.p - 0.013235599563682695).abs() < 1e-12);
        assert_eq!(r.df, 4);
        assert!(!r.degenerate);
    }

    #[test]
    fn t_test_degenerate_cases() {
        let a = [3.0, 3.0, 3.0];
        let r = paired_t_test(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
        let b = [1.0, 1.0, 1.0];
        let r = paired_t_test(&a, &b).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p, 0.0);
        assert!(paired_t_test(&a, &[1.0]).is_err());
        assert!(paired_t_test(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn quality_and_improvement() {
        let mk = |served: u32, total: usize| EpisodeResult::<f64> {
            served,
            forced_denials: 0,
            policy_denials: total as u32 - served,
            decisions: vec![
                crate::sim::DecisionRecord {
                    t: 0.0,
                    customer: 0,
                    dist_vehicle_min: 0.0,
                    veh_feasible: true,
                    drone_feasible: true,
                    alpha: Alpha::NoService,
                    delta_vehicle: 0.0,
                    planned_arrival: None,
                    forced: false,
                };
                total
            ],
            delivered: vec![],
        };
        let q = solution_quality(&[mk(3, 4), mk(1, 4)]).unwrap();
        assert_eq!(q, 0.5);
        assert_eq!(improvement(0.6, 0.5).unwrap(), 19.999999999999996);
        assert!(improvement(0.6, 0.0).is_err());
        assert!(solution_quality::<f64>(&[]).is_err());
    }

    #[test]
    fn policy_specs_parse_and_reject() {
        let p = parse_policy_spec("pfa:tau=14").unwrap();
        assert_eq!(p.name, "pfa");
        assert_eq!(p.params["tau"], "14");
        let p = parse_policy_spec("greedy").unwrap();
        assert!(p.params.is_empty());
        assert!(parse_policy_spec("pfa:tau").is_err());
        assert!(parse_policy_spec(":tau=1").is_err());
        assert!(parse_policy_spec("pfa:tau=1,tau=2").is_err());
        let mut provider = DefaultProvider;
        let cfg = InstanceConfig::<f64>::study_homogeneous(1, 1);
        assert!(PolicyProvider::<f64>::make(&mut provider, &cfg, "pfa:tau=14").is_ok());
        assert!(PolicyProvider::<f64>::make(&mut provider, &cfg, "nope").is_err());
        assert!(PolicyProvider::<f64>::make(&mut provider, &cfg, "delta:delta=abc").is_err());
    }

    fn small_base() -> InstanceConfig<f64> {
        let mut cfg = InstanceConfig::<f64>::study_homogeneous(1, 1);
        cfg.expected_requests = 40.0;
        cfg
    }

    #[test]
    fn episode_log_round_trips_and_report_regenerates() {
        let spec = RunMatrixSpec {
            fleets: vec![(1, 1)],
            geographies: vec![GeoKind::Homogeneous],
            eval_days: 3,
            policies: vec!["greedy".to_string(), "pfa:tau=14".to_string()],
            seed: 5,
        };
        let mut provider = DefaultProvider;
        let out = run_matrix::<f64>(&spec, &small_base(), &mut provider).unwrap();
        let rows = parse_episodes_csv(&out.episodes_csv).unwrap();
        let regenerated = report_from_rows(&rows).unwrap();
        assert_eq!(regenerated, out.report_csv);
        assert_eq!(out.cells.len(), 2);
        assert_eq!(out.scatter.len(), 2);
        assert!(out.report_csv.starts_with(REPORT_HEADER));
        // First policy is its own baseline.
        assert!(out.cells[0].improvement_vs_first_pct.is_none());
        assert_eq!(out.cells[0].p_value_vs_first, 1.0);
    }

    #[test]
    fn matrix_shares_paths_across_policies() {
        let spec = RunMatrixSpec {
            fleets: vec![(1, 1)],
            geographies: vec![GeoKind::Homogeneous],
            eval_days: 2,
            policies: vec!["greedy".to_string(), "greedy".to_string()],
            seed: 17,
        };
        let mut provider = DefaultProvider;
        let out = run_matrix::<f64>(&spec, &small_base(), &mut provider).unwrap();
        // Same policy on shared paths: identical day results, p = 1.
        assert_eq!(
            out.cells[0].per_day_served,
            out.cells[1].per_day_served
        );
        assert_eq!(out.cells[1].p_value_vs_first, 1.0);
    }

    #[test]
    fn empty_matrix_is_rejected() {
        let spec = RunMatrixSpec {
            fleets: vec![],
            geographies: vec![GeoKind::Homogeneous],
            eval_days: 1,
            policies: vec!["greedy".to_string()],
            seed: 0,
        };
        assert!(matches!(
            run_matrix::<f64>(&spec, &small_base(), &mut DefaultProvider),
            Err(ExperimentError::EmptyMatrix)
        ));
    }
}
