//! Algorithm PreciseAdversarial.
//!
//! A phase has two sub-phases of `r1 = ⌈32/ε⌉` and `r2 = 4 r1` rounds. During
//! rounds `2..r1` every worker that is still on its task drops out with
//! probability `εγ/32` and stays out for the rest of the sub-phase, so the load
//! sweeps down in steps of about `εγ/32` of its start value. `r_min` is the
//! first round before `r1` at which the ant's own task reported lack (`r1` if
//! none). Through the second sub-phase every ant replays the assignment it held
//! at round `r_min`. At the end of the phase idle ants join a task that
//! reported lack in every round of the phase, and workers whose task reported
//! overload in every round leave with probability `εγ/32`.

use super::{all_tasks, join_uniform, read_lack, Agent, AgentState};
use crate::model::{Action, FeedbackRow};
use crate::rng::{tag, Coins};

/// `(r1, r2)` for precision `ε`.
pub fn sub_phase_lengths(epsilon: f64) -> (u64, u64) {
    let r1 = (32.0 / epsilon).ceil() as u64;
    (r1, 4 * r1)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PreciseAdversarialState {
    pub current: Action,
    /// Round of sub-phase 1 at which the worker dropped out, 0 if it did not.
    pub pause_round: u32,
    /// 0 until known. Fixed at the latest at `r = r1`.
    pub r_min: u32,
    /// Tasks that reported lack in every round so far (idle ants only).
    pub all_lack: u64,
    /// Whether the own task reported overload in every round so far (workers only).
    pub all_overload: u64,
}

impl PreciseAdversarialState {
    fn working_at(&self, round: u32) -> bool {
        !self.current.is_idle() && (self.pause_round == 0 || round < self.pause_round)
    }
}

impl From<PreciseAdversarialState> for AgentState {
    fn from(s: PreciseAdversarialState) -> Self {
        AgentState::PreciseAdversarial(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreciseAdversarialAgent {
    pub gamma: f64,
    pub epsilon: f64,
    r1: u64,
    r2: u64,
}

impl PreciseAdversarialAgent {
    pub fn new(gamma: f64, epsilon: f64) -> Self {
        let (r1, r2) = sub_phase_lengths(epsilon);
        PreciseAdversarialAgent { gamma, epsilon, r1, r2 }
    }

    pub fn sub_phases(&self) -> (u64, u64) {
        (self.r1, self.r2)
    }

    /// Both the per-round drop-out and the final leave probability.
    pub fn step_probability(&self) -> f64 {
        self.epsilon * self.gamma / 32.0
    }
}

impl Agent for PreciseAdversarialAgent {
    type State = PreciseAdversarialState;

    fn phase_length(&self) -> u64 {
        self.r1 + self.r2
    }

    fn initial_state(&self, assignment: Action) -> PreciseAdversarialState {
        PreciseAdversarialState { current: assignment, pause_round: 0, r_min: 0, all_lack: 0, all_overload: 0 }
    }

    fn step<F, C>(&self, st: &mut PreciseAdversarialState, feedback: &F, round: u64, coins: &mut C) -> Action
    where
        F: FeedbackRow + ?Sized,
        C: Coins + ?Sized,
    {
        let r1 = self.r1;
        let r = round % (r1 + self.r2);
        if r == 1 {
            st.pause_round = 0;
            st.r_min = 0;
            match st.current {
                Action::Idle => {
                    st.all_lack = all_tasks(feedback.k());
                    st.all_overload = 0;
                }
                Action::Work(j) => {
                    st.all_lack = 0;
                    st.all_overload = 1 << j;
                }
            }
        }

        match st.current {
            Action::Idle => st.all_lack &= read_lack(feedback, st.all_lack),
            Action::Work(j) => {
                let looking = r >= 1 && r < r1 && st.r_min == 0;
                if (looking || st.all_overload != 0) && feedback.get(j).is_lack() {
                    st.all_overload = 0;
                    if looking {
                        st.r_min = r as u32;
                    }
                }
            }
        }

        if r >= 2 && r < r1 {
            if st.working_at(r as u32) && coins.bernoulli(tag::PAUSE, self.step_probability()) {
                st.pause_round = r as u32;
            }
            return if st.working_at(r as u32 + 1) { st.current } else { Action::Idle };
        }
        if r == 1 {
            return st.current;
        }
        if r == r1 && st.r_min == 0 {
            st.r_min = r1 as u32;
        }
        if r != 0 {
            return if st.working_at(st.r_min) { st.current } else { Action::Idle };
        }

        let out = match st.current {
            Action::Idle => join_uniform(st.all_lack, coins),
            Action::Work(_) => {
                if st.all_overload != 0 && coins.bernoulli(tag::LEAVE, self.step_probability()) {
                    Action::Idle
                } else {
                    st.current
                }
            }
        };
        *st = self.initial_state(out);
        out
    }
}
