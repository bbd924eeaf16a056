//! Algorithm PreciseSigmoid: Ant with each sample replaced by the median of a
//! window of `m` samples and all probabilities scaled down by `ε / c_χ`.
//!
//! Phase of `2m` rounds with position `r = t mod 2m`. Window 1 is `r ∈ [1, m]`
//! and the pause is drawn at `r = m`; window 2 is `r ∈ [m+1, 2m-1] ∪ {0}` and
//! the join/leave decision happens at `r = 0`. A median over `m` binary samples
//! is lack iff strictly more than `m/2` samples were lack, so an even split
//! counts as overload.
//!
//! Counters stop once the median of a window is already decided.

use super::{all_tasks, join_uniform, Agent, AgentState, AntConstants, C_CHI};
use crate::model::{Action, FeedbackRow};
use crate::rng::{tag, Coins};

/// `m = ⌈2 c_χ / ε + 1⌉`.
pub fn window_length(epsilon: f64) -> u64 {
    (2.0 * f64::from(C_CHI) / epsilon + 1.0).ceil() as u64
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PreciseSigmoidState {
    pub current: Action,
    pub paused: bool,
    /// Lack mask of the first-window medians, set at `r = m`.
    pub median1: u64,
    /// Lack counts of the window in progress, one per task.
    pub counts: Vec<u16>,
}

impl From<PreciseSigmoidState> for AgentState {
    fn from(s: PreciseSigmoidState) -> Self {
        AgentState::PreciseSigmoid(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreciseSigmoidAgent {
    pub gamma: f64,
    pub epsilon: f64,
    pub constants: AntConstants,
    m: u64,
}

impl PreciseSigmoidAgent {
    pub fn new(gamma: f64, epsilon: f64) -> Self {
        Self::with_constants(gamma, epsilon, AntConstants::default())
    }

    pub fn with_constants(gamma: f64, epsilon: f64, constants: AntConstants) -> Self {
        PreciseSigmoidAgent { gamma, epsilon, constants, m: window_length(epsilon) }
    }

    pub fn window(&self) -> u64 {
        self.m
    }

    pub fn pause_probability(&self) -> f64 {
        self.constants.c_s_times(self.epsilon * self.gamma) / f64::from(C_CHI)
    }

    pub fn leave_probability(&self) -> f64 {
        self.gamma / f64::from(C_CHI * self.constants.c_d)
    }

    /// Feeds one window sample for every task in `mask` whose median is not
    /// yet decided. `seen` is the number of samples already in the window.
    fn accumulate<F: FeedbackRow + ?Sized>(&self, counts: &mut [u16], feedback: &F, mut mask: u64, seen: u64) {
        let m = self.m;
        while mask != 0 {
            let j = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            let c = u64::from(counts[j]);
            let decided = 2 * c > m || 2 * (c + m - seen) <= m;
            if !decided && feedback.get(j).is_lack() {
                counts[j] += 1;
            }
        }
    }

    fn medians(&self, counts: &[u16]) -> u64 {
        counts.iter().enumerate().filter(|(_, &c)| 2 * u64::from(c) > self.m).fold(0, |acc, (j, _)| acc | (1 << j))
    }
}

impl Agent for PreciseSigmoidAgent {
    type State = PreciseSigmoidState;

    fn phase_length(&self) -> u64 {
        2 * self.m
    }

    fn initial_state(&self, assignment: Action) -> PreciseSigmoidState {
        PreciseSigmoidState { current: assignment, paused: false, median1: 0, counts: Vec::new() }
    }

    fn step<F, C>(&self, st: &mut PreciseSigmoidState, feedback: &F, round: u64, coins: &mut C) -> Action
    where
        F: FeedbackRow + ?Sized,
        C: Coins + ?Sized,
    {
        let k = feedback.k();
        let m = self.m;
        let r = round % (2 * m);
        if r == 1 {
            st.paused = false;
            st.median1 = 0;
            st.counts.clear();
            st.counts.resize(k, 0);
        }
        let own = |st: &PreciseSigmoidState| match st.current {
            Action::Idle => all_tasks(k),
            Action::Work(j) => 1 << j,
        };
        let held = |st: &PreciseSigmoidState| if st.paused { Action::Idle } else { st.current };

        if (1..=m).contains(&r) {
            let mask = own(st);
            self.accumulate(&mut st.counts, feedback, mask, r - 1);
            if r == m {
                st.median1 = self.medians(&st.counts);
                st.counts.iter_mut().for_each(|c| *c = 0);
                if !st.current.is_idle() && coins.bernoulli(tag::PAUSE, self.pause_probability()) {
                    st.paused = true;
                }
            }
            return held(st);
        }

        // Window 2. Idle ants only need tasks whose first median was lack.
        let mask = match st.current {
            Action::Idle => st.median1,
            Action::Work(j) => 1 << j,
        };
        let seen = if r == 0 { m - 1 } else { r - m - 1 };
        self.accumulate(&mut st.counts, feedback, mask, seen);
        if r != 0 {
            return held(st);
        }

        let median2 = self.medians(&st.counts);
        let out = match st.current {
            Action::Idle => join_uniform(st.median1 & median2, coins),
            Action::Work(j) => {
                let both_overload = (st.median1 | median2) >> j & 1 == 0;
                if both_overload && coins.bernoulli(tag::LEAVE, self.leave_probability()) {
                    Action::Idle
                } else {
                    st.current
                }
            }
        };
        st.current = out;
        st.paused = false;
        st.median1 = 0;
        st.counts.clear();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MaskRow, Signal};
    use crate::rng::RandomnessContext;

    #[test]
    fn window_lengths() {
        assert_eq!(window_length(0.5), 41);
        assert_eq!(window_length(0.25), 81);
        assert_eq!(PreciseSigmoidAgent::new(0.05, 0.5).phase_length(), 82);
    }

    #[test]
    fn leave_probability_uses_190() {
        let a = PreciseSigmoidAgent::new(0.19, 0.5);
        assert!((a.leave_probability() - 0.001).abs() < 1e-15);
    }

    /// Counts twice the window with independent per-round lack decisions and
    /// checks the result against a direct median over the recorded samples.
    #[test]
    fn early_decision_matches_full_median() {
        let a = PreciseSigmoidAgent::new(1e-300, 0.5);
        let m = a.window() as usize;
        let rng = RandomnessContext::new(11);
        for trial in 0..300u64 {
            let s = rng.round(trial).ant(0);
            let bias = s.uniform(999);
            let lacks: Vec<bool> = (0..2 * m).map(|r| s.uniform(r as u64) < bias).collect();
            let mut st = a.initial_state(Action::Idle);
            let mut out = Action::Idle;
            for (i, &l) in lacks.iter().enumerate() {
                let row = MaskRow { lack: u64::from(l), k: 1 };
                out = a.step(&mut st, &row, i as u64 + 1, &mut rng.round(i as u64).ant(0));
            }
            let w1 = lacks[..m].iter().filter(|&&x| x).count();
            let w2 = lacks[m..].iter().filter(|&&x| x).count();
            let expect = 2 * w1 > m && 2 * w2 > m;
            assert_eq!(out == Action::Work(0), expect, "trial {trial}: {w1} {w2}");
        }
    }

    #[test]
    fn strict_majority_median() {
        let a = PreciseSigmoidAgent::new(0.05, 0.5);
        let mut counts = vec![21, 20];
        assert_eq!(a.medians(&counts), 0b01);
        counts[0] = 20;
        assert_eq!(a.medians(&counts), 0);
        // Idle ants with every sample lack join on the last round of the phase.
        let mut st = a.initial_state(Action::Idle);
        let row = vec![Signal::Lack];
        let mut coins = RandomnessContext::new(0).round(0).ant(0);
        let outs: Vec<_> = (1..=82).map(|t| a.step(&mut st, &row, t, &mut coins)).collect();
        assert!(outs[..81].iter().all(|o| o.is_idle()));
        assert_eq!(outs[81], Action::Work(0));
    }
}
