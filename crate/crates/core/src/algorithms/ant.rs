//! Algorithm Ant: two-round phases. The first round takes a sample and lets
//! each worker pause with probability `c_s γ`; the second takes another sample
//! and commits. Idle ants join a task only if both samples said lack, workers
//! leave with probability `γ / c_d` only if both said overload.

use super::{all_tasks, join_uniform, read_lack, Agent, AgentState, AntConstants};
use crate::model::{Action, FeedbackRow};
use crate::rng::{tag, Coins};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AntState {
    /// The `currentTask` latch; also the last committed action between phases.
    pub current: Action,
    /// First-round lack mask. Workers keep only their own task's bit.
    pub sample1: u64,
    /// Temporarily idle for the second round of the phase.
    pub paused: bool,
}

impl From<AntState> for AgentState {
    fn from(s: AntState) -> Self {
        AgentState::Ant(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AntAgent {
    pub gamma: f64,
    pub constants: AntConstants,
}

impl AntAgent {
    pub fn new(gamma: f64) -> Self {
        Self::with_constants(gamma, AntConstants::default())
    }

    pub fn with_constants(gamma: f64, constants: AntConstants) -> Self {
        AntAgent { gamma, constants }
    }

    pub fn pause_probability(&self) -> f64 {
        self.constants.c_s_times(self.gamma)
    }

    pub fn leave_probability(&self) -> f64 {
        self.gamma / f64::from(self.constants.c_d)
    }
}

impl Agent for AntAgent {
    type State = AntState;

    fn phase_length(&self) -> u64 {
        2
    }

    fn initial_state(&self, assignment: Action) -> AntState {
        AntState { current: assignment, sample1: 0, paused: false }
    }

    fn step<F, C>(&self, st: &mut AntState, feedback: &F, round: u64, coins: &mut C) -> Action
    where
        F: FeedbackRow + ?Sized,
        C: Coins + ?Sized,
    {
        if round % 2 == 1 {
            // `current` already holds a_{t-1}: the previous phase ended by committing it.
            st.paused = false;
            match st.current {
                Action::Idle => {
                    st.sample1 = read_lack(feedback, all_tasks(feedback.k()));
                    Action::Idle
                }
                Action::Work(j) => {
                    st.sample1 = read_lack(feedback, 1 << j);
                    if coins.bernoulli(tag::PAUSE, self.pause_probability()) {
                        st.paused = true;
                        Action::Idle
                    } else {
                        st.current
                    }
                }
            }
        } else {
            let out = match st.current {
                Action::Idle => join_uniform(read_lack(feedback, st.sample1), coins),
                Action::Work(j) => {
                    let both_overload = st.sample1 == 0 && !feedback.get(j).is_lack();
                    if both_overload && coins.bernoulli(tag::LEAVE, self.leave_probability()) {
                        Action::Idle
                    } else {
                        st.current
                    }
                }
            };
            *st = AntState { current: out, sample1: 0, paused: false };
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Signal::{self, *};
    use crate::rng::RandomnessContext;

    fn run(agent: &AntAgent, st: &mut AntState, rows: &[Vec<Signal>], seed: u64) -> Vec<Action> {
        let rng = RandomnessContext::new(seed);
        rows.iter()
            .enumerate()
            .map(|(t, row)| {
                let mut coins = rng.round(t as u64 + 1).ant(0);
                agent.step(st, row, t as u64 + 1, &mut coins)
            })
            .collect()
    }

    #[test]
    fn idle_joins_on_two_lacks() {
        let a = AntAgent::new(0.05);
        let mut st = a.initial_state(Action::Idle);
        let out = run(&a, &mut st, &[vec![Lack], vec![Lack]], 1);
        assert_eq!(out, vec![Action::Idle, Action::Work(0)]);
    }

    #[test]
    fn idle_needs_agreement_on_one_task() {
        let a = AntAgent::new(0.05);
        for seed in 0..50 {
            let mut st = a.initial_state(Action::Idle);
            let out = run(&a, &mut st, &[vec![Lack, Overload], vec![Overload, Lack]], seed);
            assert_eq!(out[1], Action::Idle);
        }
    }

    #[test]
    fn worker_stays_unless_both_overload() {
        // Never pauses or leaves with γ tiny enough that coins cannot fire.
        let a = AntAgent::new(1e-300);
        let mut st = a.initial_state(Action::Work(0));
        let out = run(&a, &mut st, &[vec![Overload], vec![Lack]], 3);
        assert_eq!(out, vec![Action::Work(0), Action::Work(0)]);
    }

    #[test]
    fn certain_leave_when_probability_saturates() {
        let a = AntAgent::with_constants(0.3, AntConstants { c_s: num_rational::Ratio::from_integer(0), c_d: 0 });
        let mut st = a.initial_state(Action::Work(1));
        let out = run(&a, &mut st, &[vec![Lack, Overload], vec![Lack, Overload]], 3);
        assert_eq!(out, vec![Action::Work(1), Action::Idle]);
    }

    #[test]
    fn paused_worker_returns() {
        let a = AntAgent::with_constants(0.5, AntConstants { c_s: num_rational::Ratio::from_integer(2), c_d: 19 });
        let mut st = a.initial_state(Action::Work(0));
        let out = run(&a, &mut st, &[vec![Lack], vec![Lack]], 0);
        assert_eq!(out, vec![Action::Idle, Action::Work(0)]);
    }
}
