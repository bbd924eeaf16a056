//! Round driver for the synchronous and sequential timing models.
//!
//! Round `t` (from 1) builds the feedback oracle from the deficits at the end
//! of round `t - 1`, lets the acting ants step on it, and records the loads
//! at the end of round `t`.

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::algorithms::{Agent, AgentState};
use crate::metrics::DecompositionThresholds;
use crate::model::{
    compute_loads, deficit, validate_config, Action, AlgorithmSpec, InitialAssignmentSpec, IssueCode, ModelError,
    SimConfig, ValidationReport,
};
use crate::noise::RoundOracle;
use crate::rng::{tag, RandomnessContext, GLOBAL_ANT};
use crate::with_agent;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid config: {}", .0.errors().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(ValidationReport),
    #[error("algorithm {0} is not defined in the {1} timing model")]
    UnsupportedModel(&'static str, &'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep the loads of every `record_every`-th round. Per-round regret is
    /// always kept for every round.
    pub record_every: u64,
    /// Keep each ant's final agent state in the trace.
    pub keep_states: bool,
    /// Step the ants of a round on the rayon pool. Output is identical.
    pub parallel: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { record_every: 1, keep_states: false, parallel: false }
    }
}

/// Time series of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub config: SimConfig,
    pub phase_length: u64,
    pub record_every: u64,
    pub initial_loads: Vec<u32>,
    /// Round indices of the load records.
    pub rounds: Vec<u64>,
    loads: Vec<u32>,
    /// `r(t)` for `t = 1..=horizon`, at index `t - 1`.
    pub regret: Vec<u64>,
    /// Over-provisioning and under-provisioning parts of `r(t)` at the
    /// config's γ; the remainder is the near-balanced part.
    pub regret_plus: Vec<u64>,
    pub regret_minus: Vec<u64>,
    /// Ants whose action differed from the previous round.
    pub changed: Vec<u32>,
    pub final_assignment: Vec<Action>,
    pub final_states: Option<Vec<AgentState>>,
    pub warnings: Vec<String>,
}

impl Trace {
    fn new(config: &SimConfig, phase_length: u64, options: &RunOptions, initial_loads: Vec<u32>) -> Self {
        let h = config.horizon as usize;
        let recs = h / options.record_every.max(1) as usize;
        Trace {
            config: config.clone(),
            phase_length,
            record_every: options.record_every.max(1),
            initial_loads,
            rounds: Vec::with_capacity(recs),
            loads: Vec::with_capacity(recs * config.k),
            regret: Vec::with_capacity(h),
            regret_plus: Vec::with_capacity(h),
            regret_minus: Vec::with_capacity(h),
            changed: Vec::with_capacity(h),
            final_assignment: Vec::new(),
            final_states: None,
            warnings: Vec::new(),
        }
    }

    fn push(&mut self, round: u64, loads: &[u32], changed: u32, thresholds: &DecompositionThresholds) {
        let d = &self.config.demands;
        let r: u64 = loads.iter().zip(d).map(|(&w, &dj)| u64::from(w.abs_diff(dj))).sum();
        let (plus, minus) = thresholds.split(loads);
        self.regret.push(r);
        self.regret_plus.push(plus);
        self.regret_minus.push(minus);
        self.changed.push(changed);
        if round.is_multiple_of(self.record_every) {
            self.rounds.push(round);
            self.loads.extend_from_slice(loads);
        }
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    /// Number of load records.
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn loads(&self, record: usize) -> &[u32] {
        let k = self.k();
        &self.loads[record * k..(record + 1) * k]
    }

    pub fn deficits(&self, record: usize) -> Vec<i64> {
        deficit(self.loads(record), &self.config.demands).expect("trace loads match demands")
    }

    /// Loads at the end of `round`, if recorded (round 0 is the initial state).
    pub fn loads_at(&self, round: u64) -> Option<&[u32]> {
        if round == 0 {
            return Some(&self.initial_loads);
        }
        if !round.is_multiple_of(self.record_every) {
            return None;
        }
        let i = (round / self.record_every) as usize;
        (i >= 1 && i <= self.len()).then(|| self.loads(i - 1))
    }

    pub fn final_loads(&self) -> Vec<u32> {
        compute_loads(&self.final_assignment, self.k()).expect("final assignment is valid")
    }

    pub fn total_regret(&self) -> u64 {
        self.regret.iter().sum()
    }

    /// Long-format CSV with `#` provenance lines. With `decomposition`, the
    /// three regret parts are appended as extra columns.
    pub fn write_csv<W: Write>(&self, mut w: W, decomposition: bool) -> io::Result<()> {
        let config_json = serde_json::to_string(&self.config).map_err(io::Error::other)?;
        writeln!(w, "# taskalloc trace")?;
        writeln!(w, "# seed: {}", self.config.seed)?;
        writeln!(w, "# config: {config_json}")?;
        write!(w, "round,task,load,deficit,regret")?;
        if decomposition {
            write!(w, ",r_plus,r_approx,r_minus")?;
        }
        writeln!(w)?;
        let d = &self.config.demands;
        for (i, &t) in self.rounds.iter().enumerate() {
            let idx = t as usize - 1;
            let r = self.regret[idx];
            for (j, (&load, &dj)) in self.loads(i).iter().zip(d).enumerate() {
                write!(w, "{t},{},{load},{},{r}", j + 1, i64::from(dj) - i64::from(load))?;
                if decomposition {
                    let (p, m) = (self.regret_plus[idx], self.regret_minus[idx]);
                    write!(w, ",{p},{},{m}", r - p - m)?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self, decomposition: bool) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, decomposition).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

fn check(config: &SimConfig) -> Result<Vec<String>, EngineError> {
    let report = validate_config(config);
    // A zero horizon is rejected for runs but still yields the empty trace.
    if report.errors().any(|i| i.code != IssueCode::ZeroHorizon) {
        return Err(EngineError::Invalid(report));
    }
    Ok(report.warnings().map(|i| i.to_string()).collect())
}

pub fn initial_assignment(config: &SimConfig, rng: &RandomnessContext) -> Vec<Action> {
    match &config.initial {
        InitialAssignmentSpec::AllIdle => vec![Action::Idle; config.n],
        InitialAssignmentSpec::UniformRandom => {
            let s = rng.round(0);
            (0..config.n).map(|i| Action::from_code(s.ant(i as u64).below(tag::INIT, config.k + 1) as u32)).collect()
        }
        InitialAssignmentSpec::Explicit { assignment } => assignment.clone(),
    }
}

/// Runs the config in the timing model its algorithm belongs to.
pub fn run(config: &SimConfig) -> Result<Trace, EngineError> {
    run_with(config, &RunOptions::default())
}

pub fn run_with(config: &SimConfig, options: &RunOptions) -> Result<Trace, EngineError> {
    if config.algorithm == AlgorithmSpec::TrivialSeq {
        run_sequential_with(config, options)
    } else {
        run_synchronous_with(config, options)
    }
}

pub fn run_synchronous(config: &SimConfig) -> Result<Trace, EngineError> {
    run_synchronous_with(config, &RunOptions::default())
}

pub fn run_synchronous_with(config: &SimConfig, options: &RunOptions) -> Result<Trace, EngineError> {
    if config.algorithm == AlgorithmSpec::TrivialSeq {
        return Err(EngineError::UnsupportedModel(config.algorithm.name(), "synchronous"));
    }
    with_agent!(config, |agent| run_agent(config, &agent, options))
}

pub fn run_sequential(config: &SimConfig) -> Result<Trace, EngineError> {
    run_sequential_with(config, &RunOptions::default())
}

pub fn run_sequential_with(config: &SimConfig, options: &RunOptions) -> Result<Trace, EngineError> {
    if config.algorithm != AlgorithmSpec::TrivialSeq {
        return Err(EngineError::UnsupportedModel(config.algorithm.name(), "sequential"));
    }
    run_agent_sequential(config, &crate::algorithms::TrivialAgent, options)
}

struct Setup<A: Agent> {
    rng: RandomnessContext,
    assignment: Vec<Action>,
    states: Vec<A::State>,
    loads: Vec<u32>,
    thresholds: DecompositionThresholds,
    trace: Trace,
}

fn setup<A: Agent>(config: &SimConfig, agent: &A, options: &RunOptions) -> Result<Setup<A>, EngineError> {
    let warnings = check(config)?;
    let rng = RandomnessContext::new(config.seed);
    let assignment = initial_assignment(config, &rng);
    let states = assignment.iter().map(|&a| agent.initial_state(a)).collect();
    let loads = compute_loads(&assignment, config.k)?;
    let mut trace = Trace::new(config, agent.phase_length(), options, loads.clone());
    trace.warnings = warnings;
    let thresholds = DecompositionThresholds::new(&config.demands, config.gamma);
    Ok(Setup { rng, assignment, states, loads, thresholds, trace })
}

fn finish<A: Agent>(s: Setup<A>, options: &RunOptions) -> Trace {
    let mut trace = s.trace;
    trace.final_assignment = s.assignment;
    if options.keep_states {
        trace.final_states = Some(s.states.into_iter().map(Into::into).collect());
    }
    trace
}

fn apply(assignment: &mut Action, next: Action, loads: &mut [u32]) -> bool {
    if *assignment == next {
        return false;
    }
    if let Action::Work(j) = *assignment {
        loads[j] -= 1;
    }
    if let Action::Work(j) = next {
        loads[j] += 1;
    }
    *assignment = next;
    true
}

/// Synchronous run of an arbitrary agent, e.g. one with altered constants.
pub fn run_agent<A: Agent>(config: &SimConfig, agent: &A, options: &RunOptions) -> Result<Trace, EngineError> {
    let mut s = setup(config, agent, options)?;
    for t in 1..=config.horizon {
        let deficits = deficit(&s.loads, &config.demands)?;
        let oracle = RoundOracle::new(&config.noise, &config.demands, &deficits, &s.rng, t);
        let step = |(i, st): (usize, &mut A::State)| {
            let mut stream = oracle.ant_stream(i);
            agent.step(st, &oracle.row_with_stream(i, stream), t, &mut stream)
        };
        let mut changed = 0;
        if options.parallel {
            let next: Vec<Action> = s.states.par_iter_mut().enumerate().map(step).collect();
            for (a, n) in s.assignment.iter_mut().zip(next) {
                changed += u32::from(apply(a, n, &mut s.loads));
            }
        } else {
            for (i, st) in s.states.iter_mut().enumerate() {
                let n = step((i, st));
                changed += u32::from(apply(&mut s.assignment[i], n, &mut s.loads));
            }
        }
        s.trace.push(t, &s.loads, changed, &s.thresholds);
    }
    Ok(finish(s, options))
}

/// Sequential run: each round one uniformly chosen ant steps.
pub fn run_agent_sequential<A: Agent>(
    config: &SimConfig,
    agent: &A,
    options: &RunOptions,
) -> Result<Trace, EngineError> {
    let mut s = setup(config, agent, options)?;
    for t in 1..=config.horizon {
        let deficits = deficit(&s.loads, &config.demands)?;
        let oracle = RoundOracle::new(&config.noise, &config.demands, &deficits, &s.rng, t);
        let actor = oracle.round_stream().ant(GLOBAL_ANT).below(tag::ACTOR, config.n);
        let mut stream = oracle.ant_stream(actor);
        let n = agent.step(&mut s.states[actor], &oracle.row_with_stream(actor, stream), t, &mut stream);
        let changed = u32::from(apply(&mut s.assignment[actor], n, &mut s.loads));
        s.trace.push(t, &s.loads, changed, &s.thresholds);
    }
    Ok(finish(s, options))
}

/// Seed of a continuation run. Derived from the original seed and horizon so
/// the continuation does not replay the first segment's streams.
pub fn resume_seed(seed: u64, horizon: u64) -> u64 {
    let rng = RandomnessContext::new(seed);
    rng.round(horizon).ant(GLOBAL_ANT).bits(tag::INIT)
}

/// Config continuing from the trace's final assignment with new demands.
/// Phase positions restart at round 1 and the seed is [`resume_seed`].
pub fn snapshot_and_resume(trace: &Trace, new_demands: &[u32]) -> Result<SimConfig, EngineError> {
    if new_demands.len() != trace.k() {
        return Err(ModelError::DimensionMismatch { expected: trace.k(), actual: new_demands.len() }.into());
    }
    let mut config = trace.config.clone();
    config.demands = new_demands.to_vec();
    config.initial = InitialAssignmentSpec::Explicit { assignment: trace.final_assignment.clone() };
    config.seed = resume_seed(trace.config.seed, trace.config.horizon);
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{lambda_for_critical_value, NoiseSpec};

    fn ant_config() -> SimConfig {
        let lambda = lambda_for_critical_value(0.1, &[25], 100).unwrap();
        SimConfig::new(100, vec![25], NoiseSpec::Sigmoid { lambda, common_random: false }, AlgorithmSpec::Ant)
            .with_horizon(20)
            .with_seed(5)
    }

    #[test]
    fn zero_horizon_gives_empty_trace() {
        let c = ant_config().with_horizon(0).with_initial(InitialAssignmentSpec::blocks(100, &[3]));
        let t = run(&c).unwrap();
        assert!(t.is_empty() && t.regret.is_empty());
        assert_eq!(t.final_loads(), vec![3]);
    }

    #[test]
    fn ant_joins_in_round_two() {
        let t = run(&ant_config()).unwrap();
        assert_eq!(t.loads(0), &[0]);
        assert!(t.loads(1)[0] > 0);
    }

    #[test]
    fn parallel_matches_serial() {
        let c = ant_config().with_horizon(200);
        let a = run_with(&c, &RunOptions::default()).unwrap();
        let b = run_with(&c, &RunOptions { parallel: true, ..RunOptions::default() }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decimation_keeps_exact_regret() {
        let c = ant_config().with_horizon(200);
        let full = run(&c).unwrap();
        let dec = run_with(&c, &RunOptions { record_every: 10, ..RunOptions::default() }).unwrap();
        assert_eq!(dec.len(), 20);
        assert_eq!(dec.regret, full.regret);
        assert_eq!(dec.loads_at(50), full.loads_at(50));
        assert_eq!(dec.loads_at(55), None);
    }

    #[test]
    fn timing_models_are_exclusive() {
        let mut c = ant_config();
        assert!(matches!(run_sequential(&c), Err(EngineError::UnsupportedModel(..))));
        c.algorithm = AlgorithmSpec::TrivialSeq;
        assert!(matches!(run_synchronous(&c), Err(EngineError::UnsupportedModel(..))));
        assert!(run(&c).is_ok());
    }

    #[test]
    fn sequential_single_ant_acts_every_round() {
        let mut c = SimConfig::new(1, vec![1], NoiseSpec::NoiseFree, AlgorithmSpec::TrivialSeq).with_horizon(6);
        c.gamma = 0.1;
        let t = run(&c).unwrap();
        // Alternates join / leave with correct feedback: lack at load 0, overload at 1.
        assert_eq!(t.changed, vec![1; 6]);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut c = ant_config();
        c.demands = vec![25, 3];
        assert!(matches!(run(&c), Err(EngineError::Invalid(_))));
    }

    #[test]
    fn resume_replaces_demands() {
        let t = run(&ant_config().with_horizon(30)).unwrap();
        let c = snapshot_and_resume(&t, &[12]).unwrap();
        let t2 = run(&c.clone().with_horizon(0)).unwrap();
        assert_eq!(t2.initial_loads, t.final_loads());
        assert!(snapshot_and_resume(&t, &[1, 2]).is_err());
        assert_ne!(c.seed, t.config.seed);
    }
}
