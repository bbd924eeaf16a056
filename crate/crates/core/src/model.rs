//! Domain types shared by every other module: assignments, feedback signals,
//! world state, and the experiment configuration together with its validator.
//!
//! Tasks are indexed from zero internally. Every external representation
//! (config files, CSV, compact state strings) uses the integer code
//! `0 = idle, j = task j` with tasks numbered from one.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noise::{self, AdversaryStrategy, NoiseSpec};

/// Feedback rows and per-task sample memories are stored as bitmasks.
pub const MAX_TASKS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("malformed assignment: ant {ant} is assigned to task {task} but k = {k}")]
    MalformedAssignment { ant: usize, task: usize, k: usize },
    #[error("dimension mismatch: expected length {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// What one ant does during a round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "u32", into = "u32")]
pub enum Action {
    #[default]
    Idle,
    /// Zero-based task index.
    Work(usize),
}

impl Action {
    pub fn is_idle(self) -> bool {
        matches!(self, Action::Idle)
    }

    pub fn task(self) -> Option<usize> {
        match self {
            Action::Idle => None,
            Action::Work(j) => Some(j),
        }
    }

    /// External integer code: 0 for idle, `j + 1` for task `j`.
    pub fn code(self) -> u32 {
        match self {
            Action::Idle => 0,
            Action::Work(j) => j as u32 + 1,
        }
    }

    pub fn from_code(code: u32) -> Self {
        match code {
            0 => Action::Idle,
            c => Action::Work(c as usize - 1),
        }
    }
}

impl From<u32> for Action {
    fn from(code: u32) -> Self {
        Action::from_code(code)
    }
}

impl From<Action> for u32 {
    fn from(a: Action) -> Self {
        a.code()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Idle => f.write_str("idle"),
            Action::Work(j) => write!(f, "work({})", j + 1),
        }
    }
}

/// Binary feedback about one task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Signal {
    Lack,
    Overload,
}

impl Signal {
    pub fn is_lack(self) -> bool {
        self == Signal::Lack
    }

    pub fn from_lack(lack: bool) -> Self {
        if lack {
            Signal::Lack
        } else {
            Signal::Overload
        }
    }
}

/// One ant's view of the feedback of a round, one signal per task.
///
/// Implementations may evaluate entries lazily; an entry must not depend on
/// which other entries were read.
pub trait FeedbackRow {
    fn k(&self) -> usize;
    fn get(&self, task: usize) -> Signal;

    /// Bitmask of the tasks reporting lack.
    fn lack_mask(&self) -> u64 {
        (0..self.k()).filter(|&j| self.get(j).is_lack()).fold(0, |m, j| m | (1 << j))
    }
}

impl FeedbackRow for [Signal] {
    fn k(&self) -> usize {
        self.len()
    }

    fn get(&self, task: usize) -> Signal {
        self[task]
    }
}

impl FeedbackRow for Vec<Signal> {
    fn k(&self) -> usize {
        self.len()
    }

    fn get(&self, task: usize) -> Signal {
        self[task]
    }
}

/// A fully materialized feedback row stored as a lack bitmask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MaskRow {
    pub lack: u64,
    pub k: usize,
}

impl FeedbackRow for MaskRow {
    fn k(&self) -> usize {
        self.k
    }

    fn get(&self, task: usize) -> Signal {
        Signal::from_lack(self.lack >> task & 1 == 1)
    }

    fn lack_mask(&self) -> u64 {
        self.lack
    }
}

/// Per-ant, per-task feedback of one round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeedbackMatrix {
    pub round: u64,
    n: usize,
    k: usize,
    rows: Vec<u64>,
}

impl FeedbackMatrix {
    pub fn from_fn(round: u64, n: usize, k: usize, mut entry: impl FnMut(usize, usize) -> Signal) -> Self {
        let rows = (0..n).map(|i| (0..k).filter(|&j| entry(i, j).is_lack()).fold(0u64, |m, j| m | (1 << j))).collect();
        FeedbackMatrix { round, n, k, rows }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, ant: usize, task: usize) -> Signal {
        Signal::from_lack(self.rows[ant] >> task & 1 == 1)
    }

    pub fn row(&self, ant: usize) -> MaskRow {
        MaskRow { lack: self.rows[ant], k: self.k }
    }

    /// Number of ants receiving lack for `task`.
    pub fn lack_count(&self, task: usize) -> usize {
        self.rows.iter().filter(|&&r| r >> task & 1 == 1).count()
    }
}

/// Counts the ants assigned to each of the `k` tasks.
pub fn compute_loads(assignment: &[Action], k: usize) -> Result<Vec<u32>, ModelError> {
    let mut loads = vec![0u32; k];
    for (ant, a) in assignment.iter().enumerate() {
        if let Action::Work(j) = *a {
            if j >= k {
                return Err(ModelError::MalformedAssignment { ant, task: j + 1, k });
            }
            loads[j] += 1;
        }
    }
    Ok(loads)
}

/// Element-wise `demands - loads`; negative entries are overloads.
pub fn deficit(loads: &[u32], demands: &[u32]) -> Result<Vec<i64>, ModelError> {
    if loads.len() != demands.len() {
        return Err(ModelError::DimensionMismatch { expected: demands.len(), actual: loads.len() });
    }
    Ok(loads.iter().zip(demands).map(|(&w, &d)| i64::from(d) - i64::from(w)).collect())
}

/// Assignment of every ant at the end of a round, plus derived loads and deficits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorldState {
    pub round: u64,
    pub assignment: Vec<Action>,
    pub loads: Vec<u32>,
    pub deficits: Vec<i64>,
}

impl WorldState {
    pub fn new(round: u64, assignment: Vec<Action>, demands: &[u32]) -> Result<Self, ModelError> {
        let loads = compute_loads(&assignment, demands.len())?;
        let deficits = deficit(&loads, demands)?;
        Ok(WorldState { round, assignment, loads, deficits })
    }

    pub fn idle_count(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_idle()).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmSpec {
    Ant,
    PreciseSigmoid,
    PreciseAdversarial,
    /// Trivial algorithm, all ants act every round.
    TrivialSync,
    /// Trivial algorithm, one uniformly chosen ant acts per round.
    TrivialSeq,
}

impl AlgorithmSpec {
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmSpec::Ant => "ant",
            AlgorithmSpec::PreciseSigmoid => "precise-sigmoid",
            AlgorithmSpec::PreciseAdversarial => "precise-adversarial",
            AlgorithmSpec::TrivialSync => "trivial-sync",
            AlgorithmSpec::TrivialSeq => "trivial-seq",
        }
    }

    pub fn is_precise(self) -> bool {
        matches!(self, AlgorithmSpec::PreciseSigmoid | AlgorithmSpec::PreciseAdversarial)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialAssignmentSpec {
    #[default]
    AllIdle,
    /// Every ant independently uniform over `{idle, 1..k}`.
    UniformRandom,
    Explicit {
        assignment: Vec<Action>,
    },
}

impl InitialAssignmentSpec {
    /// Explicit assignment filling tasks in order: the first `loads[0]` ants
    /// work on task 1, the next `loads[1]` on task 2, the rest are idle.
    pub fn blocks(n: usize, loads: &[u32]) -> Self {
        let mut assignment = Vec::with_capacity(n);
        for (j, &w) in loads.iter().enumerate() {
            assignment.extend(std::iter::repeat_n(Action::Work(j), w as usize));
        }
        assignment.resize(n, Action::Idle);
        InitialAssignmentSpec::Explicit { assignment }
    }
}

fn default_epsilon() -> f64 {
    0.25
}

/// Full description of one simulation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub k: usize,
    pub demands: Vec<u32>,
    pub noise: NoiseSpec,
    pub algorithm: AlgorithmSpec,
    pub gamma: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial: InitialAssignmentSpec,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
}

impl SimConfig {
    /// A config with `k = demands.len()` and defaults for everything else:
    /// γ = 0.05, ε = 0.25, horizon 1000, seed 0, all-idle start.
    pub fn new(n: usize, demands: Vec<u32>, noise: NoiseSpec, algorithm: AlgorithmSpec) -> Self {
        SimConfig {
            n,
            k: demands.len(),
            demands,
            noise,
            algorithm,
            gamma: 0.05,
            epsilon: default_epsilon(),
            horizon: 1000,
            seed: 0,
            initial: InitialAssignmentSpec::AllIdle,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_horizon(mut self, horizon: u64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_initial(mut self, initial: InitialAssignmentSpec) -> Self {
        self.initial = initial;
        self
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(s)?)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn demand_sum(&self) -> u64 {
        self.demands.iter().map(|&d| u64::from(d)).sum()
    }

    /// Critical value γ* of the configured noise model.
    pub fn critical_value(&self) -> Result<f64, noise::NoiseError> {
        noise::critical_value(&self.noise, &self.demands, self.n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Severity {
    Error,
    Warning,
}

/// Every predicate the validator can report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueCode {
    DimensionMismatch,
    NoAnts,
    NoTasks,
    TooManyTasks,
    ZeroDemand,
    ZeroHorizon,
    NonPositiveLambda,
    GammaOutOfRange,
    EpsilonOutOfRange,
    GammaAdOutOfRange,
    FlipProbabilityOutOfRange,
    InitialAssignmentLength,
    InitialAssignmentTask,
    DemandSumExceedsHalfN,
    DemandBelowLogN,
    GammaOutsideAntRange,
    CriticalValueNotBelowHalf,
    CriticalValueUndefined,
}

impl IssueCode {
    pub fn name(self) -> &'static str {
        match self {
            IssueCode::DimensionMismatch => "dimension-mismatch",
            IssueCode::NoAnts => "no-ants",
            IssueCode::NoTasks => "no-tasks",
            IssueCode::TooManyTasks => "too-many-tasks",
            IssueCode::ZeroDemand => "zero-demand",
            IssueCode::ZeroHorizon => "zero-horizon",
            IssueCode::NonPositiveLambda => "non-positive-lambda",
            IssueCode::GammaOutOfRange => "gamma-out-of-range",
            IssueCode::EpsilonOutOfRange => "epsilon-out-of-range",
            IssueCode::GammaAdOutOfRange => "gamma-ad-out-of-range",
            IssueCode::FlipProbabilityOutOfRange => "flip-probability-out-of-range",
            IssueCode::InitialAssignmentLength => "initial-assignment-length",
            IssueCode::InitialAssignmentTask => "initial-assignment-task",
            IssueCode::DemandSumExceedsHalfN => "demand-sum-exceeds-half-n",
            IssueCode::DemandBelowLogN => "demand-below-log-n",
            IssueCode::GammaOutsideAntRange => "gamma-outside-ant-range",
            IssueCode::CriticalValueNotBelowHalf => "critical-value-not-below-half",
            IssueCode::CriticalValueUndefined => "critical-value-undefined",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub code: IssueCode,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev} [{}]: {}", self.code.name(), self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    fn push(&mut self, severity: Severity, code: IssueCode, message: impl Into<String>) {
        self.issues.push(Issue { severity, code, message: message.into() });
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    pub fn has(&self, code: IssueCode) -> bool {
        self.issues.iter().any(|i| i.code == code)
    }
}

/// Checks a config. Structural impossibilities are errors; violations of the
/// theory's assumptions are warnings, since the simulator still runs them.
pub fn validate_config(config: &SimConfig) -> ValidationReport {
    use IssueCode::*;
    use Severity::*;
    let mut r = ValidationReport::default();

    if config.n == 0 {
        r.push(Error, NoAnts, "n must be positive");
    }
    if config.k == 0 {
        r.push(Error, NoTasks, "k must be positive");
    }
    if config.k > MAX_TASKS {
        r.push(Error, TooManyTasks, format!("k = {} exceeds the supported maximum {MAX_TASKS}", config.k));
    }
    if config.k != config.demands.len() {
        r.push(
            Error,
            DimensionMismatch,
            format!("dimension mismatch: k = {} but {} demands given", config.k, config.demands.len()),
        );
    }
    if let Some(j) = config.demands.iter().position(|&d| d == 0) {
        r.push(Error, ZeroDemand, format!("demand of task {} must be at least 1", j + 1));
    }
    if config.horizon == 0 {
        r.push(Error, ZeroHorizon, "horizon must be positive");
    }
    if !(config.gamma > 0.0 && config.gamma < 1.0) {
        r.push(Error, GammaOutOfRange, format!("gamma = {} must lie in (0, 1)", config.gamma));
    }
    if !(config.epsilon > 0.0 && config.epsilon <= 1.0) {
        r.push(Error, EpsilonOutOfRange, format!("epsilon = {} must lie in (0, 1]", config.epsilon));
    }
    match &config.noise {
        NoiseSpec::Sigmoid { lambda, .. } => {
            if !lambda.is_finite() || *lambda <= 0.0 {
                r.push(Error, NonPositiveLambda, format!("lambda = {lambda} must be positive"));
            }
        }
        NoiseSpec::Adversarial { gamma_ad, adversary } => {
            if !(*gamma_ad > 0.0 && *gamma_ad < 0.5) {
                r.push(Error, GammaAdOutOfRange, format!("gamma_ad = {gamma_ad} must lie in (0, 1/2)"));
            }
            if let AdversaryStrategy::CorrectOutsideRandomInside { p } = adversary {
                if !(0.0..=1.0).contains(p) {
                    r.push(Error, FlipProbabilityOutOfRange, format!("flip probability {p} must lie in [0, 1]"));
                }
            }
        }
        NoiseSpec::NoiseFree => {}
    }
    if let InitialAssignmentSpec::Explicit { assignment } = &config.initial {
        if assignment.len() != config.n {
            r.push(
                Error,
                InitialAssignmentLength,
                format!("explicit assignment has {} entries but n = {}", assignment.len(), config.n),
            );
        }
        if let Some(a) = assignment.iter().find(|a| a.task().is_some_and(|j| j >= config.k)) {
            r.push(Error, InitialAssignmentTask, format!("explicit assignment names {a} but k = {}", config.k));
        }
    }
    if r.has_errors() {
        return r;
    }

    let sum = config.demand_sum();
    if 2 * sum > config.n as u64 {
        r.push(Warning, DemandSumExceedsHalfN, format!("demand-sum exceeds n/2 ({sum} > {})", config.n as f64 / 2.0));
    }
    let log_n = (config.n as f64).log2();
    if let Some(j) = config.demands.iter().position(|&d| f64::from(d) < log_n) {
        r.push(
            Warning,
            DemandBelowLogN,
            format!(
                "demand {} of task {} is below log2(n) = {log_n:.2}; the analysis needs demands of order log n",
                config.demands[j],
                j + 1
            ),
        );
    }
    match config.critical_value() {
        Ok(gs) => {
            if gs >= 0.5 {
                r.push(Warning, CriticalValueNotBelowHalf, format!("critical value {gs:.6} is not below 1/2"));
            }
            if config.algorithm == AlgorithmSpec::Ant && !(config.gamma >= gs && config.gamma <= 1.0 / 16.0) {
                r.push(
                    Warning,
                    GammaOutsideAntRange,
                    format!("gamma = {} is outside [gamma*, 1/16] = [{gs:.6}, 0.0625]", config.gamma),
                );
            }
        }
        Err(e) => r.push(Warning, CriticalValueUndefined, e.to_string()),
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigmoid_config(n: usize, demands: Vec<u32>) -> SimConfig {
        SimConfig::new(n, demands, NoiseSpec::Sigmoid { lambda: 1.0, common_random: false }, AlgorithmSpec::Ant)
    }

    #[test]
    fn loads_examples() {
        use Action::*;
        assert_eq!(compute_loads(&[Idle, Idle, Idle], 2).unwrap(), vec![0, 0]);
        assert_eq!(compute_loads(&[Work(0), Work(0), Work(1), Idle], 2).unwrap(), vec![2, 1]);
        assert_eq!(compute_loads(&[Work(2); 6], 3).unwrap(), vec![0, 0, 6]);
    }

    #[test]
    fn loads_reject_out_of_range() {
        let err = compute_loads(&[Action::Work(2)], 2).unwrap_err();
        assert_eq!(err, ModelError::MalformedAssignment { ant: 0, task: 3, k: 2 });
    }

    #[test]
    fn deficit_examples() {
        assert_eq!(deficit(&[5], &[5]).unwrap(), vec![0]);
        assert_eq!(deficit(&[8], &[5]).unwrap(), vec![-3]);
        assert_eq!(deficit(&[0, 2], &[4, 7]).unwrap(), vec![4, 5]);
        assert!(matches!(deficit(&[1], &[1, 2]), Err(ModelError::DimensionMismatch { .. })));
    }

    #[test]
    fn validator_accepts_boundary_of_demand_sum() {
        let n = 10_000;
        let demands = vec![1250; 4];
        let lambda = noise::lambda_for_critical_value(0.05, &demands, n).unwrap();
        let mut c = sigmoid_config(n, demands);
        c.noise = NoiseSpec::Sigmoid { lambda, common_random: false };
        c.gamma = c.critical_value().unwrap();
        let report = validate_config(&c);
        assert!(report.issues.is_empty(), "{:?}", report.issues);
    }

    #[test]
    fn validator_warns_on_demand_sum() {
        let report = validate_config(&sigmoid_config(100, vec![80]));
        assert!(!report.has_errors());
        let w = report.warnings().find(|i| i.code == IssueCode::DemandSumExceedsHalfN).unwrap();
        assert!(w.message.contains("demand-sum exceeds n/2"), "{}", w.message);
    }

    #[test]
    fn validator_rejects_dimension_mismatch() {
        let mut c = sigmoid_config(100, vec![10]);
        c.k = 2;
        let report = validate_config(&c);
        let e = report.errors().next().unwrap();
        assert_eq!(e.code, IssueCode::DimensionMismatch);
        assert!(e.message.contains("dimension mismatch"));
    }

    #[test]
    fn validator_structural_errors() {
        let mut c = sigmoid_config(100, vec![10]);
        c.horizon = 0;
        c.noise = NoiseSpec::Sigmoid { lambda: 0.0, common_random: false };
        let report = validate_config(&c);
        assert!(report.has(IssueCode::ZeroHorizon));
        assert!(report.has(IssueCode::NonPositiveLambda));
    }

    #[test]
    fn validator_warns_on_ant_gamma_and_small_demand() {
        let mut c = sigmoid_config(1000, vec![5]);
        c.gamma = 0.2;
        let report = validate_config(&c);
        assert!(report.has(IssueCode::GammaOutsideAntRange));
        assert!(report.has(IssueCode::DemandBelowLogN));
        assert!(!report.has_errors());
    }

    #[test]
    fn config_toml_roundtrip() {
        let mut c = sigmoid_config(10, vec![2, 3]);
        c.initial = InitialAssignmentSpec::blocks(10, &[1, 2]);
        let text = c.to_toml_string().unwrap();
        assert_eq!(SimConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn config_rejects_foreign_noise_fields() {
        let text = r#"
            n = 10
            k = 1
            demands = [2]
            algorithm = "ant"
            gamma = 0.05
            horizon = 10
            [noise]
            kind = "sigmoid"
            lambda = 1.0
            gamma_ad = 0.1
        "#;
        assert!(SimConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn blocks_fill_in_task_order() {
        let InitialAssignmentSpec::Explicit { assignment } = InitialAssignmentSpec::blocks(5, &[2, 1]) else {
            unreachable!()
        };
        assert_eq!(compute_loads(&assignment, 2).unwrap(), vec![2, 1]);
        assert!(assignment[3].is_idle() && assignment[4].is_idle());
    }
}
