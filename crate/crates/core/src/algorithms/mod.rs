//! The agent state machines.
//!
//! Each algorithm implements [`Agent`]: a pure step function from the ant's
//! private state and this round's feedback row to its next action. Agents read
//! feedback entries lazily through [`FeedbackRow`], and only the entries the
//! pseudocode's decisions can depend on are read; the others would not change
//! the outcome.

mod ant;
mod precise_adversarial;
mod precise_sigmoid;
pub mod reach;
mod trivial;

use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use num_rational::Ratio;
use thiserror::Error;

use crate::model::{Action, AlgorithmSpec, FeedbackRow, SimConfig};
use crate::rng::Coins;

pub use ant::{AntAgent, AntState};
pub use precise_adversarial::{sub_phase_lengths, PreciseAdversarialAgent, PreciseAdversarialState};
pub use precise_sigmoid::{window_length, PreciseSigmoidAgent, PreciseSigmoidState};
pub use trivial::{TrivialAgent, TrivialState};

/// Step-size constants shared by Ant and PreciseSigmoid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AntConstants {
    /// Pause multiplier, exactly 7/3.
    pub c_s: Ratio<u32>,
    /// Leave divisor.
    pub c_d: u32,
}

impl Default for AntConstants {
    fn default() -> Self {
        AntConstants { c_s: Ratio::new(7, 3), c_d: 19 }
    }
}

impl AntConstants {
    /// `c_s · x`, multiplying before dividing so no precision is lost to 7/3.
    pub fn c_s_times(&self, x: f64) -> f64 {
        f64::from(*self.c_s.numer()) * x / f64::from(*self.c_s.denom())
    }
}

/// Precision constant of PreciseSigmoid.
pub const C_CHI: u32 = 10;

/// A constant-memory ant.
pub trait Agent: Sync {
    type State: Clone + Send + Sync + Eq + Hash + fmt::Debug + Into<AgentState>;

    /// Rounds per phase; phases start at rounds `1, L + 1, 2L + 1, ...`.
    fn phase_length(&self) -> u64;

    /// State of an ant holding `assignment` at the end of round 0.
    fn initial_state(&self, assignment: Action) -> Self::State;

    /// Executes round `round` (≥ 1) and returns the ant's action for it.
    fn step<F, C>(&self, state: &mut Self::State, feedback: &F, round: u64, coins: &mut C) -> Action
    where
        F: FeedbackRow + ?Sized,
        C: Coins + ?Sized;
}

/// Serializable snapshot of any agent's state.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AgentState {
    Ant(AntState),
    PreciseSigmoid(PreciseSigmoidState),
    PreciseAdversarial(PreciseAdversarialState),
    Trivial(TrivialState),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed agent state {input:?}: {reason}")]
pub struct StateParseError {
    pub input: String,
    pub reason: String,
}

impl AgentState {
    /// Compact text form. Fields are separated by `:` and start with a tag:
    ///
    /// - `ant:<current>:<s1 lack mask, hex>:<paused 0|1>`
    /// - `ps:<current>:<paused>:<ŝ1 lack mask, hex>:<lack counts, comma separated>`
    /// - `pa:<current>:<pause round or 0>:<r_min or 0>:<all-lack mask, hex>:<all-overload mask, hex>`
    /// - `tr:<current>`
    ///
    /// `current` uses the external action code (0 idle, j for task j).
    pub fn to_compact(&self) -> String {
        match self {
            AgentState::Ant(s) => format!("ant:{}:{:x}:{}", s.current.code(), s.sample1, u8::from(s.paused)),
            AgentState::PreciseSigmoid(s) => {
                let counts: Vec<String> = s.counts.iter().map(|c| c.to_string()).collect();
                format!("ps:{}:{}:{:x}:{}", s.current.code(), u8::from(s.paused), s.median1, counts.join(","))
            }
            AgentState::PreciseAdversarial(s) => {
                format!("pa:{}:{}:{}:{:x}:{:x}", s.current.code(), s.pause_round, s.r_min, s.all_lack, s.all_overload)
            }
            AgentState::Trivial(s) => format!("tr:{}", s.current.code()),
        }
    }

    pub fn parse_compact(input: &str) -> Result<Self, StateParseError> {
        let err = |reason: &str| StateParseError { input: input.to_string(), reason: reason.to_string() };
        let fields: Vec<&str> = input.split(':').collect();
        let int = |s: &str| s.parse::<u32>().map_err(|_| err("bad integer field"));
        let hex = |s: &str| u64::from_str_radix(s, 16).map_err(|_| err("bad hex field"));
        let flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(err("bad flag field")),
        };
        match fields.as_slice() {
            ["ant", c, s1, p] => Ok(AgentState::Ant(AntState {
                current: Action::from_code(int(c)?),
                sample1: hex(s1)?,
                paused: flag(p)?,
            })),
            ["ps", c, p, m, counts] => {
                let counts = if counts.is_empty() {
                    Vec::new()
                } else {
                    counts
                        .split(',')
                        .map(|x| x.parse::<u16>().map_err(|_| err("bad count")))
                        .collect::<Result<_, _>>()?
                };
                Ok(AgentState::PreciseSigmoid(PreciseSigmoidState {
                    current: Action::from_code(int(c)?),
                    paused: flag(p)?,
                    median1: hex(m)?,
                    counts,
                }))
            }
            ["pa", c, pr, rm, l, o] => Ok(AgentState::PreciseAdversarial(PreciseAdversarialState {
                current: Action::from_code(int(c)?),
                pause_round: int(pr)?,
                r_min: int(rm)?,
                all_lack: hex(l)?,
                all_overload: hex(o)?,
            })),
            ["tr", c] => Ok(AgentState::Trivial(TrivialState { current: Action::from_code(int(c)?) })),
            _ => Err(err("unknown tag or wrong field count")),
        }
    }

    /// The `currentTask` latch.
    pub fn current(&self) -> Action {
        match self {
            AgentState::Ant(s) => s.current,
            AgentState::PreciseSigmoid(s) => s.current,
            AgentState::PreciseAdversarial(s) => s.current,
            AgentState::Trivial(s) => s.current,
        }
    }
}

impl fmt::Display for AgentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_compact())
    }
}

impl FromStr for AgentState {
    type Err = StateParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentState::parse_compact(s)
    }
}

/// Runs `f` with the concrete agent selected by `config.algorithm`.
///
/// Both trivial variants use [`TrivialAgent`]; the timing model is the
/// engine's concern.
#[macro_export]
macro_rules! with_agent {
    ($config:expr, |$agent:ident| $body:expr) => {{
        use $crate::algorithms::*;
        let c: &$crate::model::SimConfig = $config;
        match c.algorithm {
            $crate::model::AlgorithmSpec::Ant => {
                let $agent = AntAgent::new(c.gamma);
                $body
            }
            $crate::model::AlgorithmSpec::PreciseSigmoid => {
                let $agent = PreciseSigmoidAgent::new(c.gamma, c.epsilon);
                $body
            }
            $crate::model::AlgorithmSpec::PreciseAdversarial => {
                let $agent = PreciseAdversarialAgent::new(c.gamma, c.epsilon);
                $body
            }
            $crate::model::AlgorithmSpec::TrivialSync | $crate::model::AlgorithmSpec::TrivialSeq => {
                let $agent = TrivialAgent;
                $body
            }
        }
    }};
}

/// Phase length of the configured algorithm.
pub fn phase_length(config: &SimConfig) -> u64 {
    match config.algorithm {
        AlgorithmSpec::Ant => 2,
        AlgorithmSpec::PreciseSigmoid => 2 * precise_sigmoid::window_length(config.epsilon),
        AlgorithmSpec::PreciseAdversarial => {
            let (r1, r2) = precise_adversarial::sub_phase_lengths(config.epsilon);
            r1 + r2
        }
        AlgorithmSpec::TrivialSync | AlgorithmSpec::TrivialSeq => 1,
    }
}

/// Index of the `index`-th set bit of `mask`.
pub(crate) fn nth_set_bit(mut mask: u64, index: usize) -> usize {
    for _ in 0..index {
        mask &= mask - 1;
    }
    mask.trailing_zeros() as usize
}

/// Uniform join among the tasks in `mask`, idle if it is empty.
pub(crate) fn join_uniform<C: Coins + ?Sized>(mask: u64, coins: &mut C) -> Action {
    match mask.count_ones() as usize {
        0 => Action::Idle,
        1 => Action::Work(mask.trailing_zeros() as usize),
        c => Action::Work(nth_set_bit(mask, coins.choose(crate::rng::tag::JOIN, c))),
    }
}

/// Lack mask over the tasks in `mask` only.
#[inline]
pub(crate) fn read_lack<F: FeedbackRow + ?Sized>(feedback: &F, mut mask: u64) -> u64 {
    let mut out = 0;
    while mask != 0 {
        let j = mask.trailing_zeros() as usize;
        if feedback.get(j).is_lack() {
            out |= 1 << j;
        }
        mask &= mask - 1;
    }
    out
}

#[inline]
pub(crate) fn all_tasks(k: usize) -> u64 {
    if k >= 64 {
        u64::MAX
    } else {
        (1u64 << k) - 1
    }
}
