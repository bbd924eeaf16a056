//! Exact distributions of the allocation chain on tiny instances.
//!
//! The per-ant transition kernels below are written directly from the
//! algorithms' pseudocode and share no code with [`crate::algorithms`]: they
//! keep full sample memories and enumerate every feedback row and every coin
//! outcome. Ants are exchangeable, so the system state is the multiset of
//! per-ant states, and one round is the convolution of the per-ant kernels.
//!
//! [`compare_mc_oracle`] runs the engine many times and measures the total
//! variation distance between the empirical and the exact law of the load
//! vector at every round.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine;
use crate::model::{validate_config, Action, AlgorithmSpec, InitialAssignmentSpec, IssueCode, SimConfig};
use crate::noise::{sigmoid, AdversaryStrategy, NoiseSpec};
use crate::rng::RandomnessContext;

/// Largest supported aggregated state space per round.
pub const STATE_CAP: usize = 1_000_000;
pub const MAX_ANTS: usize = 12;
pub const MAX_TASKS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("exact evolution needs {states} states in round {round}, above the cap of {cap}")]
    TooLarge { round: u64, states: usize, cap: usize },
    #[error("instance outside the oracle's range: {0}")]
    Unsupported(String),
    #[error("empty sample: at least one Monte Carlo run is needed")]
    EmptySample,
    #[error("engine failed: {0}")]
    Engine(String),
}

/// Per-ant memory, mirroring the pseudocode variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Memory {
    /// `s1` is the full first feedback row.
    Ant {
        s1: u8,
        paused: bool,
    },
    /// `count` holds the lack samples of the current window per task with no
    /// early stopping; `median1` is set at the end of window one.
    Sigmoid {
        paused: bool,
        median1: u8,
        count: [u8; MAX_TASKS],
    },
    /// `replay` is decided when the first lack for the own task arrives, or at `r1`.
    Adversarial {
        dropped: bool,
        replay: Option<bool>,
        all_lack: u8,
        all_overload: u8,
    },
    Trivial,
}

/// One ant: the action it output last round, the `currentTask` latch, and memory.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct AntView {
    action: u8,
    current: u8,
    memory: Memory,
}

/// Multiset of ants, kept sorted.
type Aggregate = Vec<AntView>;

fn action_code(a: Action) -> u8 {
    a.code() as u8
}

/// Branch probabilities, from the pseudocode constants.
#[derive(Clone, Copy, Debug)]
struct Params {
    k: usize,
    /// `m` for PreciseSigmoid.
    window: u64,
    /// `r1` and `r1 + r2` for PreciseAdversarial.
    r1: u64,
    phase: u64,
    ant_pause: f64,
    ant_leave: f64,
    sig_pause: f64,
    sig_leave: f64,
    adv_step: f64,
}

impl Params {
    fn new(c: &SimConfig) -> Self {
        let gamma = c.gamma;
        let eps = c.epsilon;
        let window = (20.0 / eps + 1.0).ceil() as u64;
        let r1 = (32.0 / eps).ceil() as u64;
        let phase = match c.algorithm {
            AlgorithmSpec::Ant => 2,
            AlgorithmSpec::PreciseSigmoid => 2 * window,
            AlgorithmSpec::PreciseAdversarial => 5 * r1,
            _ => 1,
        };
        Params {
            k: c.k,
            window,
            r1,
            phase,
            ant_pause: 7.0 * gamma / 3.0,
            ant_leave: gamma / 19.0,
            sig_pause: eps * 7.0 * gamma / 30.0,
            sig_leave: gamma / 190.0,
            adv_step: eps * gamma / 32.0,
        }
    }
}

/// Pushes `(view, prob)` split over a Bernoulli coin into `out`.
fn coin(out: &mut Vec<(AntView, f64)>, p: f64, prob: f64, yes: AntView, no: AntView) {
    let p = p.clamp(0.0, 1.0);
    if p > 0.0 {
        out.push((yes, prob * p));
    }
    if p < 1.0 {
        out.push((no, prob * (1.0 - p)));
    }
}

/// Uniform join over the tasks in `mask`.
fn join(out: &mut Vec<(AntView, f64)>, prob: f64, mask: u8, make: impl Fn(u8) -> AntView) {
    let c = mask.count_ones();
    if c == 0 {
        out.push((make(0), prob));
        return;
    }
    for j in 0..8u8 {
        if mask >> j & 1 == 1 {
            out.push((make(j + 1), prob / f64::from(c)));
        }
    }
}

/// Outcomes of one ant's round `t` for a fixed feedback row `f` (bit j = lack).
fn kernel(p: &Params, alg: AlgorithmSpec, ant: &AntView, f: u8, t: u64, out: &mut Vec<(AntView, f64)>) {
    let full = ((1u16 << p.k) - 1) as u8;
    match alg {
        AlgorithmSpec::TrivialSync | AlgorithmSpec::TrivialSeq => {
            let view = |a: u8| AntView { action: a, current: a, memory: Memory::Trivial };
            match ant.action {
                0 => join(out, 1.0, f, view),
                j if f >> (j - 1) & 1 == 1 => out.push((view(j), 1.0)),
                _ => out.push((view(0), 1.0)),
            }
        }
        AlgorithmSpec::Ant => {
            if t % 2 == 1 {
                let cur = ant.action;
                let view = |a: u8, paused| AntView { action: a, current: cur, memory: Memory::Ant { s1: f, paused } };
                if cur == 0 {
                    out.push((view(0, false), 1.0));
                } else {
                    coin(out, p.ant_pause, 1.0, view(0, true), view(cur, false));
                }
            } else {
                let Memory::Ant { s1, .. } = ant.memory else { unreachable!() };
                let done = |a: u8| AntView { action: a, current: a, memory: Memory::Ant { s1: 0, paused: false } };
                let cur = ant.current;
                if cur == 0 {
                    join(out, 1.0, s1 & f, done);
                } else {
                    let bit = 1 << (cur - 1);
                    if (s1 | f) & bit == 0 {
                        coin(out, p.ant_leave, 1.0, done(0), done(cur));
                    } else {
                        out.push((done(cur), 1.0));
                    }
                }
            }
        }
        AlgorithmSpec::PreciseSigmoid => {
            let m = p.window;
            let r = t % (2 * m);
            let (mut paused, mut median1, mut count) = match ant.memory {
                Memory::Sigmoid { paused, median1, count } => (paused, median1, count),
                _ => (false, 0, [0; MAX_TASKS]),
            };
            let mut cur = ant.current;
            if r == 1 {
                cur = ant.action;
                paused = false;
                median1 = 0;
                count = [0; MAX_TASKS];
            }
            for (j, c) in count.iter_mut().enumerate().take(p.k) {
                if f >> j & 1 == 1 {
                    *c += 1;
                }
            }
            let medians = |count: &[u8; MAX_TASKS]| {
                (0..p.k).filter(|&j| 2 * u64::from(count[j]) > m).fold(0u8, |acc, j| acc | (1 << j))
            };
            let view = |a: u8, cur: u8, paused, median1, count| AntView {
                action: a,
                current: cur,
                memory: Memory::Sigmoid { paused, median1, count },
            };
            if r == m {
                let med = medians(&count);
                let zero = [0; MAX_TASKS];
                if cur == 0 {
                    out.push((view(0, 0, false, med, zero), 1.0));
                } else {
                    coin(out, p.sig_pause, 1.0, view(0, cur, true, med, zero), view(cur, cur, false, med, zero));
                }
            } else if r != 0 {
                out.push((view(ant.action, cur, paused, median1, count), 1.0));
            } else {
                let both = median1 & medians(&count);
                let neither = !(median1 | medians(&count)) & full;
                let done = |a: u8| view(a, a, false, 0, [0; MAX_TASKS]);
                if cur == 0 {
                    join(out, 1.0, both, done);
                } else if neither >> (cur - 1) & 1 == 1 {
                    coin(out, p.sig_leave, 1.0, done(0), done(cur));
                } else {
                    out.push((done(cur), 1.0));
                }
            }
        }
        AlgorithmSpec::PreciseAdversarial => {
            let r1 = p.r1;
            let r = t % p.phase;
            let (mut dropped, mut replay, mut all_lack, mut all_overload) = match ant.memory {
                Memory::Adversarial { dropped, replay, all_lack, all_overload } => {
                    (dropped, replay, all_lack, all_overload)
                }
                _ => (false, None, full, full),
            };
            let mut cur = ant.current;
            if r == 1 {
                cur = ant.action;
                dropped = false;
                replay = None;
                all_lack = full;
                all_overload = full;
            }
            all_lack &= f;
            all_overload &= !f & full;
            let own_lack = cur != 0 && f >> (cur - 1) & 1 == 1;
            let first = r >= 1 && r < r1 && replay.is_none() && own_lack;
            let view = |a: u8, cur: u8, dropped, replay, all_lack, all_overload| AntView {
                action: a,
                current: cur,
                memory: Memory::Adversarial { dropped, replay, all_lack, all_overload },
            };
            if (2..r1).contains(&r) && cur != 0 && !dropped {
                // Drop coin first; the replayed assignment includes this round's output.
                let yes = view(0, cur, true, if first { Some(false) } else { replay }, all_lack, all_overload);
                let no = view(cur, cur, false, if first { Some(true) } else { replay }, all_lack, all_overload);
                coin(out, p.adv_step, 1.0, yes, no);
            } else if r == 0 {
                let done = |a: u8| view(a, a, false, None, 0, 0);
                if cur == 0 {
                    join(out, 1.0, all_lack, done);
                } else if all_overload >> (cur - 1) & 1 == 1 {
                    coin(out, p.adv_step, 1.0, done(0), done(cur));
                } else {
                    out.push((done(cur), 1.0));
                }
            } else {
                if first {
                    replay = Some(!dropped);
                }
                if r == r1 && replay.is_none() {
                    replay = Some(!dropped);
                }
                let a = if r >= r1 {
                    if replay == Some(true) {
                        cur
                    } else {
                        0
                    }
                } else if dropped {
                    0
                } else {
                    cur
                };
                out.push((view(a, cur, dropped, replay, all_lack, all_overload), 1.0));
            }
        }
    }
}

/// Per-task lack probability for every ant given the deficits.
fn lack_probabilities(noise: &NoiseSpec, demands: &[u32], deficits: &[i64]) -> Vec<f64> {
    deficits
        .iter()
        .zip(demands)
        .map(|(&x, &d)| match *noise {
            NoiseSpec::Sigmoid { lambda, .. } => sigmoid(x as f64, lambda),
            NoiseSpec::NoiseFree => f64::from(u8::from(x > 0)),
            NoiseSpec::Adversarial { gamma_ad, adversary } => {
                let h = gamma_ad * f64::from(d);
                let xf = x as f64;
                let bit = |b: bool| f64::from(u8::from(b));
                match adversary {
                    AdversaryStrategy::Indistinguishability { shifted: false } => bit(xf >= -h),
                    AdversaryStrategy::Indistinguishability { shifted: true } => bit(xf >= h),
                    _ if xf > h => 1.0,
                    _ if xf < -h => 0.0,
                    AdversaryStrategy::AllLackInGrey => 1.0,
                    AdversaryStrategy::AllOverloadInGrey => 0.0,
                    AdversaryStrategy::CorrectOutsideRandomInside { p } => {
                        if x > 0 {
                            1.0 - p
                        } else {
                            p
                        }
                    }
                    AdversaryStrategy::PerAntAlternating => unreachable!("rejected by check"),
                }
            }
        })
        .collect()
}

/// All outcomes of one ant's round, merged over feedback rows.
fn ant_outcomes(p: &Params, alg: AlgorithmSpec, ant: &AntView, probs: &[f64], t: u64) -> Vec<(AntView, f64)> {
    let mut merged: HashMap<AntView, f64> = HashMap::new();
    let mut buf = Vec::new();
    for f in 0..(1u8 << p.k) {
        let mut q = 1.0;
        for (j, &pj) in probs.iter().enumerate() {
            q *= if f >> j & 1 == 1 { pj } else { 1.0 - pj };
        }
        if q == 0.0 {
            continue;
        }
        buf.clear();
        kernel(p, alg, ant, f, t, &mut buf);
        for (v, w) in buf.drain(..) {
            *merged.entry(v).or_default() += q * w;
        }
    }
    merged.into_iter().collect()
}

fn loads_of(ants: &[AntView], k: usize) -> Vec<u32> {
    let mut w = vec![0u32; k];
    for a in ants {
        if a.action > 0 {
            w[a.action as usize - 1] += 1;
        }
    }
    w
}

fn deficits(loads: &[u32], demands: &[u32]) -> Vec<i64> {
    loads.iter().zip(demands).map(|(&w, &d)| i64::from(d) - i64::from(w)).collect()
}

fn initial_view(alg: AlgorithmSpec, a: Action) -> AntView {
    let c = action_code(a);
    let memory = match alg {
        AlgorithmSpec::Ant => Memory::Ant { s1: 0, paused: false },
        AlgorithmSpec::PreciseSigmoid => Memory::Sigmoid { paused: false, median1: 0, count: [0; MAX_TASKS] },
        AlgorithmSpec::PreciseAdversarial => {
            Memory::Adversarial { dropped: false, replay: None, all_lack: 0, all_overload: 0 }
        }
        _ => Memory::Trivial,
    };
    AntView { action: c, current: c, memory }
}

/// Law of the system state after some round.
#[derive(Clone, Debug)]
pub struct ExactDistribution {
    pub round: u64,
    states: HashMap<Aggregate, f64>,
    k: usize,
}

impl ExactDistribution {
    pub fn support_size(&self) -> usize {
        self.states.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.states.values().sum()
    }

    /// Marginal law of the load vector.
    pub fn loads(&self) -> BTreeMap<Vec<u32>, f64> {
        let mut out = BTreeMap::new();
        for (s, &p) in &self.states {
            *out.entry(loads_of(s, self.k)).or_insert(0.0) += p;
        }
        out
    }

    /// Probability that a given ant (any, by exchangeability) is working.
    pub fn working_probability(&self) -> f64 {
        self.states.iter().map(|(s, &p)| p * s.iter().filter(|a| a.action > 0).count() as f64 / s.len() as f64).sum()
    }
}

fn check(config: &SimConfig) -> Result<(), OracleError> {
    let report = validate_config(config);
    if let Some(e) = report.errors().find(|i| i.code != IssueCode::ZeroHorizon) {
        return Err(OracleError::Unsupported(e.to_string()));
    }
    if config.n > MAX_ANTS || config.k > MAX_TASKS {
        return Err(OracleError::Unsupported(format!(
            "needs n <= {MAX_ANTS} and k <= {MAX_TASKS}, got n = {}, k = {}",
            config.n, config.k
        )));
    }
    let params = Params::new(config);
    if config.algorithm == AlgorithmSpec::PreciseSigmoid && params.window > 255 {
        return Err(OracleError::Unsupported(format!("window {} is too long", params.window)));
    }
    let limit = params.phase.max(8);
    if config.horizon > limit {
        return Err(OracleError::Unsupported(format!("horizon {} exceeds {limit} rounds", config.horizon)));
    }
    match config.noise {
        NoiseSpec::Sigmoid { common_random: true, .. } => {
            return Err(OracleError::Unsupported("common random numbers correlate ants".into()))
        }
        NoiseSpec::Adversarial { adversary: AdversaryStrategy::PerAntAlternating, .. } => {
            return Err(OracleError::Unsupported("per-ant alternating feedback breaks exchangeability".into()))
        }
        _ => {}
    }
    if config.algorithm == AlgorithmSpec::TrivialSeq {
        return Err(OracleError::Unsupported("sequential timing is not modelled; use trivial-sync".into()));
    }
    if config.initial == InitialAssignmentSpec::UniformRandom {
        return Err(OracleError::Unsupported("random initial assignments are not modelled".into()));
    }
    Ok(())
}

fn initial_ants(config: &SimConfig) -> Vec<AntView> {
    engine::initial_assignment(config, &RandomnessContext::new(0))
        .into_iter()
        .map(|a| initial_view(config.algorithm, a))
        .collect()
}

/// Exact law of the state after each round `0..=horizon` over ant multisets.
pub fn exact_evolution(config: &SimConfig) -> Result<Vec<ExactDistribution>, OracleError> {
    check(config)?;
    let p = Params::new(config);
    let alg = config.algorithm;
    let mut start = initial_ants(config);
    start.sort();
    let mut current: HashMap<Aggregate, f64> = HashMap::from([(start, 1.0)]);
    let mut out = vec![ExactDistribution { round: 0, states: current.clone(), k: config.k }];
    for t in 1..=config.horizon {
        let mut next: HashMap<Aggregate, f64> = HashMap::new();
        for (state, &mass) in &current {
            let probs =
                lack_probabilities(&config.noise, &config.demands, &deficits(&loads_of(state, p.k), &config.demands));
            // Convolve ant by ant; equal ants share one outcome list.
            let mut partial: HashMap<Aggregate, f64> = HashMap::from([(Vec::new(), mass)]);
            let mut cache: Option<(&AntView, Vec<(AntView, f64)>)> = None;
            for ant in state {
                if cache.as_ref().is_none_or(|(a, _)| *a != ant) {
                    cache = Some((ant, ant_outcomes(&p, alg, ant, &probs, t)));
                }
                let outcomes = &cache.as_ref().unwrap().1;
                let mut grown: HashMap<Aggregate, f64> = HashMap::with_capacity(partial.len() * outcomes.len());
                for (ms, &q) in &partial {
                    for (o, w) in outcomes {
                        let mut v = ms.clone();
                        let pos = v.partition_point(|x| x <= o);
                        v.insert(pos, o.clone());
                        *grown.entry(v).or_default() += q * w;
                    }
                }
                partial = grown;
            }
            for (s, q) in partial {
                *next.entry(s).or_default() += q;
            }
            if next.len() > STATE_CAP {
                return Err(OracleError::TooLarge { round: t, states: next.len(), cap: STATE_CAP });
            }
        }
        current = next;
        out.push(ExactDistribution { round: t, states: current.clone(), k: config.k });
    }
    Ok(out)
}

/// The same chain over ordered per-ant tuples, marginalized to multisets.
/// Only meant as a cross-check of the aggregation for `n <= 4`.
pub fn exact_evolution_unaggregated(config: &SimConfig) -> Result<Vec<ExactDistribution>, OracleError> {
    check(config)?;
    if config.n > 4 {
        return Err(OracleError::Unsupported("the unaggregated chain is limited to n <= 4".into()));
    }
    let p = Params::new(config);
    let alg = config.algorithm;
    let mut current: HashMap<Vec<AntView>, f64> = HashMap::from([(initial_ants(config), 1.0)]);
    let marginal = |m: &HashMap<Vec<AntView>, f64>, round| {
        let mut states: HashMap<Aggregate, f64> = HashMap::new();
        for (s, &q) in m {
            let mut v = s.clone();
            v.sort();
            *states.entry(v).or_default() += q;
        }
        ExactDistribution { round, states, k: config.k }
    };
    let mut out = vec![marginal(&current, 0)];
    for t in 1..=config.horizon {
        let mut next: HashMap<Vec<AntView>, f64> = HashMap::new();
        for (state, &mass) in &current {
            let probs =
                lack_probabilities(&config.noise, &config.demands, &deficits(&loads_of(state, p.k), &config.demands));
            let mut partial: Vec<(Vec<AntView>, f64)> = vec![(Vec::new(), mass)];
            for ant in state {
                let outcomes = ant_outcomes(&p, alg, ant, &probs, t);
                partial = partial
                    .into_iter()
                    .flat_map(|(v, q)| {
                        outcomes.iter().map(move |(o, w)| {
                            let mut v = v.clone();
                            v.push(o.clone());
                            (v, q * w)
                        })
                    })
                    .collect();
            }
            for (s, q) in partial {
                *next.entry(s).or_default() += q;
            }
        }
        current = next;
        out.push(marginal(&current, t));
    }
    Ok(out)
}

/// Largest absolute difference between two exact laws over multisets.
pub fn max_state_difference(a: &ExactDistribution, b: &ExactDistribution) -> f64 {
    let mut diff: f64 = 0.0;
    for (s, &p) in &a.states {
        diff = diff.max((p - b.states.get(s).copied().unwrap_or(0.0)).abs());
    }
    for (s, &p) in &b.states {
        diff = diff.max((p - a.states.get(s).copied().unwrap_or(0.0)).abs());
    }
    diff
}

/// Total variation distance between two laws on load vectors.
pub fn total_variation(p: &BTreeMap<Vec<u32>, f64>, q: &BTreeMap<Vec<u32>, f64>) -> f64 {
    let mut sum = 0.0;
    for (x, &a) in p {
        sum += (a - q.get(x).copied().unwrap_or(0.0)).abs();
    }
    for (x, &b) in q {
        if !p.contains_key(x) {
            sum += b;
        }
    }
    sum / 2.0
}

/// TV radius that an empirical law over `support` points from `runs`
/// samples exceeds with probability at most `alpha`
/// (Bretagnolle–Huber–Carol, the multinomial form of the DKW bound).
pub fn tv_tolerance(support: usize, runs: usize, alpha: f64) -> f64 {
    ((support as f64 * std::f64::consts::LN_2 + (1.0 / alpha).ln()) / (2.0 * runs as f64)).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundDivergence {
    pub round: u64,
    pub tv: f64,
    pub tolerance: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub algorithm: String,
    pub runs: usize,
    /// Overall confidence; each round is tested at `confidence / rounds`.
    pub confidence: f64,
    pub rounds: Vec<RoundDivergence>,
    pub max_tv: f64,
    /// Largest ratio of TV to its round's tolerance.
    pub worst_ratio: f64,
    pub pass: bool,
}

/// Compares the engine against the exact chain at every round.
pub fn compare_mc_oracle(config: &SimConfig, num_mc_runs: usize) -> Result<DivergenceReport, OracleError> {
    compare_runs(config, num_mc_runs, |c| engine::run(c).map_err(|e| OracleError::Engine(e.to_string())))
}

/// As [`compare_mc_oracle`] but with the Monte Carlo traces produced by
/// `run`, e.g. the engine driving a mutated agent.
pub fn compare_runs(
    config: &SimConfig,
    num_mc_runs: usize,
    run: impl Fn(&SimConfig) -> Result<engine::Trace, OracleError>,
) -> Result<DivergenceReport, OracleError> {
    if num_mc_runs == 0 {
        return Err(OracleError::EmptySample);
    }
    let exact = exact_evolution(config)?;
    let h = config.horizon as usize;
    let mut counts: Vec<HashMap<Vec<u32>, usize>> = vec![HashMap::new(); h];
    for i in 0..num_mc_runs {
        let c = config.clone().with_seed(config.seed.wrapping_add(i as u64));
        let trace = run(&c)?;
        for (r, slot) in counts.iter_mut().enumerate() {
            *slot.entry(trace.loads(r).to_vec()).or_default() += 1;
        }
    }
    let alpha = 0.01 / h.max(1) as f64;
    let rounds: Vec<RoundDivergence> = counts
        .iter()
        .enumerate()
        .map(|(r, slot)| {
            let truth = exact[r + 1].loads();
            let emp: BTreeMap<Vec<u32>, f64> =
                slot.iter().map(|(x, &c)| (x.clone(), c as f64 / num_mc_runs as f64)).collect();
            let support = truth.values().filter(|&&p| p > 0.0).count().max(1);
            RoundDivergence {
                round: r as u64 + 1,
                tv: total_variation(&truth, &emp),
                tolerance: tv_tolerance(support, num_mc_runs, alpha),
                support,
            }
        })
        .collect();
    let max_tv = rounds.iter().map(|r| r.tv).fold(0.0, f64::max);
    let worst_ratio = rounds.iter().map(|r| r.tv / r.tolerance).fold(0.0, f64::max);
    Ok(DivergenceReport {
        algorithm: config.algorithm.name().to_string(),
        runs: num_mc_runs,
        confidence: 0.99,
        rounds,
        max_tv,
        worst_ratio,
        pass: worst_ratio <= 1.0,
    })
}
