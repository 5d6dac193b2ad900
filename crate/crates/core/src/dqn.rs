//! Deep Q-learning for the dispatch problem: feasibility-dependent value
//! networks, undiscounted monte-carlo targets, replay buffers, and the
//! training loop with greedy evaluation checkpoints.

use std::collections::VecDeque;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::{extract, post_decision_features, FeatureKind, FeatureVector};
use crate::instance::{InstanceConfig, SamplePath};
use crate::nn::{adam_step, lr_at, AdamState, Mlp, ModelIoError, TrainBatch};
use crate::scalar::Real;
use crate::sim::{run_episode, ActionError, Alpha, FeasPattern, FeasibilityPair, Policy, State};

/// Which learner is being trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainerKind {
    /// Three Q-networks, one per feasibility pattern, denial allowed.
    QBank,
    /// One two-output Q-network consulted only when both fleets are
    /// feasible; voluntary denial is not available.
    QNoRej,
    /// One scalar value network over post-decision states.
    PostDecisionVfa,
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown trainer {0:?} (expected q, q_no_rej, or post_decision)")]
pub struct ParseTrainerKindError(String);

impl FromStr for TrainerKind {
    type Err = ParseTrainerKindError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "q" => Ok(TrainerKind::QBank),
            "q_no_rej" => Ok(TrainerKind::QNoRej),
            "post_decision" => Ok(TrainerKind::PostDecisionVfa),
            other => Err(ParseTrainerKindError(other.to_string())),
        }
    }
}

impl fmt::Display for TrainerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TrainerKind::QBank => "q",
            TrainerKind::QNoRej => "q_no_rej",
            TrainerKind::PostDecisionVfa => "post_decision",
        };
        write!(f, "{s}")
    }
}

/// Hyperparameters of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSchedule {
    pub total_steps: u64,
    /// Samples per network update, drawn uniformly with replacement.
    pub minibatch: usize,
    pub buffer_capacity: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of total steps over which epsilon decays linearly.
    pub eps_end_frac: f64,
    /// Greedy evaluation every this many steps.
    pub eval_interval: u64,
    /// When false, buffers are cleared before each episode's experiences
    /// are pushed, so every update sees only the newest episode.
    pub replay: bool,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        Self {
            total_steps: 5000,
            minibatch: 5000,
            buffer_capacity: 50_000,
            eps_start: 1.0,
            eps_end: 0.01,
            eps_end_frac: 0.8,
            eval_interval: 100,
            replay: true,
        }
    }
}

/// Exploration rate at `step`: linear from `eps_start` to `eps_end` over
/// the first `eps_end_frac` of the run, constant afterwards.
pub fn eps_at(step: u64, s: &TrainingSchedule) -> f64 {
    let end_step = s.eps_end_frac * s.total_steps as f64;
    if end_step <= 0.0 || step as f64 >= end_step {
        s.eps_end
    } else {
        s.eps_start + (s.eps_end - s.eps_start) * (step as f64 / end_step)
    }
}

/// One stored decision sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Experience<R: Real> {
    pub features: FeatureVector<R>,
    pub action_index: usize,
    /// Undiscounted sum of rewards from this decision to the end of day.
    pub return_to_go: R,
}

/// Bounded FIFO buffer of experiences.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<R: Real> {
    capacity: usize,
    items: VecDeque<Experience<R>>,
}

impl<R: Real> ReplayBuffer<R> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "zero-capacity buffer");
        Self {
            capacity,
            items: VecDeque::new(),
        }
    }

    /// Appends, evicting the oldest entry once full.
    pub fn push(&mut self, e: Experience<R>) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    pub fn get(&self, idx: usize) -> &Experience<R> {
        &self.items[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience<R>> {
        self.items.iter()
    }
}

/// A decision taken during a training episode, before returns are known.
#[derive(Clone, Debug)]
pub struct TakenDecision<R: Real> {
    pub net: usize,
    pub features: FeatureVector<R>,
    pub action_index: usize,
    pub reward: u32,
}

/// Suffix-sums the episode's rewards into monte-carlo return targets.
pub fn finalize_episode_returns<R: Real>(
    taken: Vec<TakenDecision<R>>,
) -> Vec<(usize, Experience<R>)> {
    let mut out: Vec<(usize, Experience<R>)> = Vec::with_capacity(taken.len());
    let mut suffix = 0u32;
    for td in taken.into_iter().rev() {
        suffix += td.reward;
        out.push((
            td.net,
            Experience {
                features: td.features,
                action_index: td.action_index,
                return_to_go: R::from_f64(suffix as f64),
            },
        ));
    }
    out.reverse();
    out
}

/// The learner: networks, optimizer states, and replay buffers.
#[derive(Clone, Debug)]
pub struct Trainer<R: Real> {
    pub kind: TrainerKind,
    pub feature_kind: FeatureKind,
    pub fleet_m: usize,
    pub fleet_n: usize,
    pub nets: Vec<Mlp<R>>,
    pub adam: Vec<AdamState<R>>,
    pub buffers: Vec<ReplayBuffer<R>>,
}

/// Action lists per network; the greedy argmax breaks ties towards the
/// earlier entry.
fn net_actions(kind: TrainerKind, net: usize) -> &'static [Alpha] {
    match kind {
        TrainerKind::QBank => match net {
            0 => &[Alpha::Vehicle, Alpha::NoService],
            1 => &[Alpha::Drone, Alpha::NoService],
            _ => &[Alpha::Vehicle, Alpha::Drone, Alpha::NoService],
        },
        TrainerKind::QNoRej => &[Alpha::Vehicle, Alpha::Drone],
        TrainerKind::PostDecisionVfa => &[Alpha::Vehicle, Alpha::Drone, Alpha::NoService],
    }
}

impl<R: Real> Trainer<R> {
    /// Builds the networks for `cfg`'s fleet: two ReLU hidden layers of
    /// width `10 * max(m, 1)` and a linear output per action.
    pub fn new(
        cfg: &InstanceConfig<R>,
        kind: TrainerKind,
        feature_kind: FeatureKind,
        capacity: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let feature_kind = match kind {
            TrainerKind::PostDecisionVfa => FeatureKind::PostDecision,
            _ => feature_kind,
        };
        let (m, n) = (cfg.fleet_m, cfg.fleet_n);
        let input = feature_kind.dim(m, n);
        let hidden = 10 * m.max(1);
        let outputs: Vec<usize> = match kind {
            TrainerKind::QBank => vec![2, 2, 3],
            TrainerKind::QNoRej => vec![2],
            TrainerKind::PostDecisionVfa => vec![1],
        };
        let nets: Vec<Mlp<R>> = outputs
            .iter()
            .map(|&out| Mlp::new(&[input, hidden, hidden, out], rng))
            .collect();
        let adam = nets.iter().map(AdamState::new).collect();
        let buffers = nets.iter().map(|_| ReplayBuffer::new(capacity)).collect();
        Self {
            kind,
            feature_kind,
            fleet_m: m,
            fleet_n: n,
            nets,
            adam,
            buffers,
        }
    }

    /// Network consulted for a feasibility pattern; `None` when the
    /// decision is forced and no network output is involved.
    fn net_for(&self, pattern: FeasPattern) -> Option<usize> {
        match (self.kind, pattern) {
            (_, FeasPattern::Neither) => None,
            (TrainerKind::QBank, FeasPattern::VehicleOnly) => Some(0),
            (TrainerKind::QBank, FeasPattern::DroneOnly) => Some(1),
            (TrainerKind::QBank, FeasPattern::Both) => Some(2),
            (TrainerKind::QNoRej, FeasPattern::Both) => Some(0),
            (TrainerKind::QNoRej, _) => None,
            (TrainerKind::PostDecisionVfa, _) => Some(0),
        }
    }

    /// Picks an action. With probability `eps` a uniformly random entry of
    /// the consulted network's action list is taken; otherwise the argmax.
    /// Returns the decision sample to store, or `None` when the decision
    /// was forced (no network consulted, nothing to learn from).
    pub fn decide(
        &self,
        state: &State<'_, R>,
        feas: &FeasibilityPair<R>,
        cfg: &InstanceConfig<R>,
        eps: f64,
        rng: &mut ChaCha8Rng,
    ) -> (Alpha, Option<TakenDecision<R>>) {
        debug_assert!(feas.any(), "forced denials bypass the learner");
        let Some(net) = self.net_for(feas.pattern()) else {
            // Single-fleet patterns under the no-rejection learner accept
            // on the feasible fleet without consulting any network.
            let alpha = match feas.pattern() {
                FeasPattern::VehicleOnly => Alpha::Vehicle,
                FeasPattern::DroneOnly => Alpha::Drone,
                _ => unreachable!("feasible state"),
            };
            return (alpha, None);
        };
        match self.kind {
            TrainerKind::QBank | TrainerKind::QNoRej => {
                let fv = extract(state, feas, self.feature_kind, cfg);
                let actions = net_actions(self.kind, net);
                let pick = if eps > 0.0 && rng.random_bool(eps) {
                    rng.random_range(0..actions.len())
                } else {
                    let q = self.nets[net].forward(&fv.normalized);
                    argmax(&q)
                };
                let alpha = actions[pick];
                let reward = u32::from(alpha != Alpha::NoService);
                (
                    alpha,
                    Some(TakenDecision {
                        net,
                        features: fv,
                        action_index: pick,
                        reward,
                    }),
                )
            }
            TrainerKind::PostDecisionVfa => {
                let candidates = feas.available_actions();
                let pick = if eps > 0.0 && rng.random_bool(eps) {
                    rng.random_range(0..candidates.len())
                } else {
                    let values: Vec<R> = candidates
                        .iter()
                        .map(|&a| {
                            let fv = post_decision_features(state, feas, a, cfg);
                            self.nets[net].forward(&fv.normalized)[0]
                        })
                        .collect();
                    argmax(&values)
                };
                let alpha = candidates[pick];
                let fv = post_decision_features(state, feas, alpha, cfg);
                let reward = u32::from(alpha != Alpha::NoService);
                (
                    alpha,
                    Some(TakenDecision {
                        net,
                        features: fv,
                        action_index: 0,
                        reward,
                    }),
                )
            }
        }
    }

    /// Greedy action (no exploration, no sample recorded).
    pub fn greedy(
        &self,
        state: &State<'_, R>,
        feas: &FeasibilityPair<R>,
        cfg: &InstanceConfig<R>,
    ) -> Alpha {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.decide(state, feas, cfg, 0.0, &mut rng).0
    }

    pub fn clear_buffers(&mut self) {
        for b in &mut self.buffers {
            b.clear();
        }
    }

    pub fn push_experiences(&mut self, exps: Vec<(usize, Experience<R>)>) {
        for (net, e) in exps {
            self.buffers[net].push(e);
        }
    }

    /// One optimizer update per non-empty buffer: `min(minibatch, len)`
    /// samples uniform with replacement, masked MSE towards the stored
    /// returns, Adam at the scheduled step size. Returns each network's
    /// minibatch loss.
    pub fn train_step(
        &mut self,
        step: u64,
        minibatch: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Option<f64>> {
        let lr = R::from_f64(lr_at(step));
        let mut losses = Vec::with_capacity(self.nets.len());
        for net in 0..self.nets.len() {
            let buf = &self.buffers[net];
            if buf.is_empty() {
                losses.push(None);
                continue;
            }
            let k = minibatch.min(buf.len());
            let mut batch = TrainBatch {
                inputs: Vec::with_capacity(k),
                targets: Vec::with_capacity(k),
            };
            for _ in 0..k {
                let e = buf.get(rng.random_range(0..buf.len()));
                batch.inputs.push(e.features.normalized.clone());
                batch.targets.push((e.action_index, e.return_to_go));
            }
            let (g, loss) = self.nets[net].gradient(&batch);
            adam_step(&mut self.nets[net], &mut self.adam[net], &g, lr);
            losses.push(Some(loss.as_f64()));
        }
        losses
    }
}

fn argmax<R: Real>(xs: &[R]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Greedy dispatch policy backed by a trainer's networks.
pub struct GreedyQPolicy<'a, R: Real> {
    pub trainer: &'a Trainer<R>,
    pub cfg: &'a InstanceConfig<R>,
}

impl<R: Real> Policy<R> for GreedyQPolicy<'_, R> {
    fn decide(&mut self, state: &State<'_, R>, feas: &FeasibilityPair<R>) -> Alpha {
        self.trainer.greedy(state, feas, self.cfg)
    }
}

/// Exploring policy that records every learnable decision.
struct ExploringPolicy<'a, R: Real> {
    trainer: &'a Trainer<R>,
    cfg: &'a InstanceConfig<R>,
    eps: f64,
    rng: &'a mut ChaCha8Rng,
    taken: Vec<TakenDecision<R>>,
}

impl<R: Real> Policy<R> for ExploringPolicy<'_, R> {
    fn decide(&mut self, state: &State<'_, R>, feas: &FeasibilityPair<R>) -> Alpha {
        let (alpha, td) = self.trainer.decide(state, feas, self.cfg, self.eps, self.rng);
        if let Some(td) = td {
            self.taken.push(td);
        }
        alpha
    }
}

/// Mean served requests of the greedy policy over the given days.
pub fn evaluate_greedy<R: Real>(
    trainer: &Trainer<R>,
    cfg: &InstanceConfig<R>,
    paths: &[SamplePath<R>],
) -> Result<f64, TrainError> {
    if paths.is_empty() {
        return Err(TrainError::NoPaths("evaluation"));
    }
    let mut total = 0u64;
    for p in paths {
        let mut pol = GreedyQPolicy { trainer, cfg };
        let res = run_episode(&mut pol, p, cfg)?;
        total += u64::from(res.served);
    }
    Ok(total as f64 / paths.len() as f64)
}

/// One learning-curve entry (recorded at every evaluation).
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub step: u64,
    pub eval_mean_served: f64,
    /// Latest minibatch loss per network (`None` before a net has data).
    pub losses: Vec<Option<f64>>,
}

/// Result of a training run: the final learner, the best greedy snapshot
/// seen during evaluation, and the learning curve.
#[derive(Clone, Debug)]
pub struct TrainingOutput<R: Real> {
    pub trainer: Trainer<R>,
    pub best_nets: Vec<Mlp<R>>,
    pub best_step: u64,
    pub best_eval: f64,
    pub curve: Vec<CurvePoint>,
}

impl<R: Real> TrainingOutput<R> {
    /// The final learner with its networks replaced by the best snapshot.
    pub fn best_trainer(&self) -> Trainer<R> {
        let mut t = self.trainer.clone();
        t.nets = self.best_nets.clone();
        t
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no {0} paths provided")]
    NoPaths(&'static str),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error("model i/o: {0}")]
    ModelIo(#[from] ModelIoError),
}

/// Runs the full training loop. Per step: draw a training day uniformly
/// with replacement, roll out one epsilon-greedy episode, turn it into
/// return-targeted experiences, push them, and update every network once.
/// Every `eval_interval` steps the greedy policy is scored on the held-out
/// days; the best-scoring snapshot is kept.
pub fn training_run<R: Real>(
    cfg: &InstanceConfig<R>,
    train_paths: &[SamplePath<R>],
    eval_paths: &[SamplePath<R>],
    kind: TrainerKind,
    feature_kind: FeatureKind,
    schedule: &TrainingSchedule,
    seed: u64,
) -> Result<TrainingOutput<R>, TrainError> {
    if train_paths.is_empty() {
        return Err(TrainError::NoPaths("training"));
    }
    if eval_paths.is_empty() {
        return Err(TrainError::NoPaths("evaluation"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trainer = Trainer::new(cfg, kind, feature_kind, schedule.buffer_capacity, &mut rng);
    let mut curve = Vec::new();
    let mut best_nets = trainer.nets.clone();
    let mut best_step = 0u64;
    let mut best_eval = f64::NEG_INFINITY;
    for step in 0..schedule.total_steps {
        let eps = eps_at(step, schedule);
        let day = rng.random_range(0..train_paths.len());
        let mut pol = ExploringPolicy {
            trainer: &trainer,
            cfg,
            eps,
            rng: &mut rng,
            taken: Vec::new(),
        };
        run_episode(&mut pol, &train_paths[day], cfg)?;
        let taken = pol.taken;
        let exps = finalize_episode_returns(taken);
        if !schedule.replay {
            trainer.clear_buffers();
        }
        trainer.push_experiences(exps);
        let losses = trainer.train_step(step, schedule.minibatch, &mut rng);
        let done = step + 1 == schedule.total_steps;
        if (step + 1) % schedule.eval_interval.max(1) == 0 || done {
            let mean = evaluate_greedy(&trainer, cfg, eval_paths)?;
            curve.push(CurvePoint {
                step: step + 1,
                eval_mean_served: mean,
                losses,
            });
            if mean > best_eval {
                best_eval = mean;
                best_step = step + 1;
                best_nets = trainer.nets.clone();
            }
        }
    }
    Ok(TrainingOutput {
        trainer,
        best_nets,
        best_step,
        best_eval,
        curve,
    })
}

/// Learning curve as CSV:
/// `step,eval_mean_served,loss_net0,loss_net1,loss_net2` (losses blank
/// where a network has no data or does not exist).
pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("step,eval_mean_served,loss_net0,loss_net1,loss_net2\n");
    for p in points {
        write!(out, "{},{}", p.step, p.eval_mean_served).expect("string write");
        for i in 0..3 {
            match p.losses.get(i).copied().flatten() {
                Some(l) => write!(out, ",{l}").expect("string write"),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"SDCK";
const CHECKPOINT_VERSION: u8 = 1;

/// Serializes the learner (metadata, networks, optimizer states) so a
/// checkpoint can be evaluated or trained further. Replay buffers are
/// transient and not persisted.
pub fn checkpoint_bytes<R: Real>(trainer: &Trainer<R>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.push(match trainer.kind {
        TrainerKind::QBank => 0,
        TrainerKind::QNoRej => 1,
        TrainerKind::PostDecisionVfa => 2,
    });
    out.push(match trainer.feature_kind {
        FeatureKind::Full => 0,
        FeatureKind::LocalFleet => 1,
        FeatureKind::ActionOnly => 2,
        FeatureKind::PostDecision => 3,
        FeatureKind::DistanceOnly => 4,
    });
    out.extend_from_slice(&(trainer.fleet_m as u32).to_le_bytes());
    out.extend_from_slice(&(trainer.fleet_n as u32).to_le_bytes());
    out.push(trainer.nets.len() as u8);
    for (net, adam) in trainer.nets.iter().zip(&trainer.adam) {
        let blob = crate::nn::serialize_model(net, Some(adam));
        out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
        out.extend_from_slice(&blob);
    }
    out
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint file too short")]
    Truncated,
    #[error("bad magic bytes (not a checkpoint)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u8),
    #[error("corrupt checkpoint field: {0}")]
    Corrupt(&'static str),
    #[error("model i/o: {0}")]
    Model(#[from] ModelIoError),
}

pub fn trainer_from_checkpoint<R: Real>(
    bytes: &[u8],
    buffer_capacity: usize,
) -> Result<Trainer<R>, CheckpointError> {
    let need = |n: usize, pos: usize| {
        if pos + n > bytes.len() {
            Err(CheckpointError::Truncated)
        } else {
            Ok(())
        }
    };
    need(4, 0)?;
    if &bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    need(11, 4)?;
    if bytes[4] != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(bytes[4]));
    }
    let kind = match bytes[5] {
        0 => TrainerKind::QBank,
        1 => TrainerKind::QNoRej,
        2 => TrainerKind::PostDecisionVfa,
        _ => return Err(CheckpointError::Corrupt("trainer kind")),
    };
    let feature_kind = match bytes[6] {
        0 => FeatureKind::Full,
        1 => FeatureKind::LocalFleet,
        2 => FeatureKind::ActionOnly,
        3 => FeatureKind::PostDecision,
        4 => FeatureKind::DistanceOnly,
        _ => return Err(CheckpointError::Corrupt("feature kind")),
    };
    let fleet_m = u32::from_le_bytes(bytes[7..11].try_into().expect("4 bytes")) as usize;
    let fleet_n = u32::from_le_bytes(bytes[11..15].try_into().expect("4 bytes")) as usize;
    need(1, 15)?;
    let n_nets = bytes[15] as usize;
    let expected = match kind {
        TrainerKind::QBank => 3,
        _ => 1,
    };
    if n_nets != expected {
        return Err(CheckpointError::Corrupt("network count"));
    }
    let mut pos = 16usize;
    let mut nets = Vec::with_capacity(n_nets);
    let mut adam = Vec::with_capacity(n_nets);
    for _ in 0..n_nets {
        need(4, pos)?;
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().expect("4 bytes")) as usize;
        pos += 4;
        need(len, pos)?;
        let (net, st) = crate::nn::deserialize_model::<R>(&bytes[pos..pos + len])?;
        pos += len;
        let st = st.ok_or(CheckpointError::Corrupt("missing optimizer state"))?;
        nets.push(net);
        adam.push(st);
    }
    if pos != bytes.len() {
        return Err(CheckpointError::Corrupt("trailing bytes"));
    }
    let buffers = nets
        .iter()
        .map(|_| ReplayBuffer::new(buffer_capacity))
        .collect();
    Ok(Trainer {
        kind,
        feature_kind,
        fleet_m,
        fleet_n,
        nets,
        adam,
        buffers,
    })
}
