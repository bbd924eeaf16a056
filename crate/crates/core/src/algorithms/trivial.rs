//! The trivial memoryless algorithm: an idle ant joins a uniformly chosen task
//! reporting lack, a worker quits as soon as its task reports overload.

use super::{all_tasks, join_uniform, read_lack, Agent, AgentState};
use crate::model::{Action, FeedbackRow};
use crate::rng::Coins;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TrivialState {
    pub current: Action,
}

impl From<TrivialState> for AgentState {
    fn from(s: TrivialState) -> Self {
        AgentState::Trivial(s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrivialAgent;

impl Agent for TrivialAgent {
    type State = TrivialState;

    fn phase_length(&self) -> u64 {
        1
    }

    fn initial_state(&self, assignment: Action) -> TrivialState {
        TrivialState { current: assignment }
    }

    fn step<F, C>(&self, st: &mut TrivialState, feedback: &F, _round: u64, coins: &mut C) -> Action
    where
        F: FeedbackRow + ?Sized,
        C: Coins + ?Sized,
    {
        st.current = match st.current {
            Action::Idle => join_uniform(read_lack(feedback, all_tasks(feedback.k())), coins),
            Action::Work(j) if !feedback.get(j).is_lack() => Action::Idle,
            w => w,
        };
        st.current
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Signal::*;
    use crate::rng::RandomnessContext;

    #[test]
    fn examples() {
        let a = TrivialAgent;
        let mut coins = RandomnessContext::new(0).round(1).ant(0);
        let mut st = a.initial_state(Action::Idle);
        assert_eq!(a.step(&mut st, &vec![Overload, Overload], 1, &mut coins), Action::Idle);
        let mut st = a.initial_state(Action::Work(0));
        assert_eq!(a.step(&mut st, &vec![Overload], 1, &mut coins), Action::Idle);
        let mut st = a.initial_state(Action::Work(0));
        assert_eq!(a.step(&mut st, &vec![Lack, Overload], 1, &mut coins), Action::Work(0));
    }

    #[test]
    fn join_is_uniform() {
        let rng = RandomnessContext::new(7);
        let n = 40_000;
        let ones = (0..n)
            .filter(|&i| {
                let mut st = TrivialAgent.initial_state(Action::Idle);
                TrivialAgent.step(&mut st, &vec![Lack, Lack], 1, &mut rng.round(1).ant(i)) == Action::Work(0)
            })
            .count();
        // 3 sigma of Binomial(40000, 1/2) is 300.
        assert!((ones as i64 - 20_000).abs() < 300, "{ones}");
    }
}
