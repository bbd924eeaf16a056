//! Property tests over the model, noise, metrics and agent state machines.

use proptest::prelude::*;
use taskalloc::algorithms::{Agent, AgentState, AntAgent, PreciseAdversarialAgent, PreciseSigmoidAgent, TrivialAgent};
use taskalloc::engine::{self, RunOptions};
use taskalloc::metrics;
use taskalloc::model::{compute_loads, deficit, Action, MaskRow};
use taskalloc::noise::{self, sigmoid};
use taskalloc::rng::RandomnessContext;
use taskalloc::{AdversaryStrategy, AlgorithmSpec, InitialAssignmentSpec, NoiseSpec, SimConfig};

fn action(k: usize) -> impl Strategy<Value = Action> {
    (0..=k).prop_map(|c| Action::from_code(c as u32))
}

fn algorithm() -> impl Strategy<Value = AlgorithmSpec> {
    prop_oneof![
        Just(AlgorithmSpec::Ant),
        Just(AlgorithmSpec::PreciseSigmoid),
        Just(AlgorithmSpec::PreciseAdversarial),
        Just(AlgorithmSpec::TrivialSync),
        Just(AlgorithmSpec::TrivialSeq),
    ]
}

fn noise_spec() -> impl Strategy<Value = NoiseSpec> {
    prop_oneof![
        (0.05f64..3.0).prop_map(|lambda| NoiseSpec::Sigmoid { lambda, common_random: false }),
        (0.02f64..0.45, 0.0f64..=1.0).prop_map(|(gamma_ad, p)| NoiseSpec::Adversarial {
            gamma_ad,
            adversary: AdversaryStrategy::CorrectOutsideRandomInside { p },
        }),
        (0.02f64..0.45)
            .prop_map(|gamma_ad| NoiseSpec::Adversarial { gamma_ad, adversary: AdversaryStrategy::PerAntAlternating }),
        Just(NoiseSpec::NoiseFree),
    ]
}

/// Small configs over every algorithm and noise model.
fn small_config() -> impl Strategy<Value = SimConfig> {
    (1usize..=4, 10usize..80, algorithm(), noise_spec(), 0.01f64..0.3, any::<u64>()).prop_flat_map(
        |(k, n, alg, noise, gamma, seed)| {
            proptest::collection::vec(1u32..=(n as u32 / 2), k).prop_map(move |demands| {
                SimConfig::new(n, demands, noise, alg)
                    .with_gamma(gamma)
                    .with_epsilon(0.9)
                    .with_horizon(120)
                    .with_seed(seed)
                    .with_initial(InitialAssignmentSpec::UniformRandom)
            })
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn loads_plus_deficit_is_demand(k in 1usize..6, seed in any::<u64>(), n in 1usize..60) {
        let rng = RandomnessContext::new(seed).round(0);
        let a: Vec<Action> = (0..n).map(|i| Action::from_code(rng.ant(i as u64).below(0, k + 1) as u32)).collect();
        let d: Vec<u32> = (0..k).map(|j| rng.ant(j as u64).below(1, 50) as u32 + 1).collect();
        let w = compute_loads(&a, k).unwrap();
        let delta = deficit(&w, &d).unwrap();
        for j in 0..k {
            prop_assert_eq!(delta[j] + i64::from(w[j]), i64::from(d[j]));
            prop_assert!(delta[j].unsigned_abs() <= u64::from(d[j]).max(n as u64));
        }
        let mut rev = a.clone();
        rev.reverse();
        prop_assert_eq!(compute_loads(&rev, k).unwrap(), w);
    }

    #[test]
    fn sigmoid_antisymmetric_and_monotone(x in -500.0f64..500.0, dx in 1e-6f64..10.0, lambda in 1e-3f64..20.0) {
        let s = sigmoid(x, lambda) + sigmoid(-x, lambda);
        prop_assert!((s - 1.0).abs() <= f64::EPSILON, "{s}");
        prop_assert!(sigmoid(x, lambda) <= sigmoid(x + dx, lambda));
        if sigmoid(x, lambda) > 1e-300 && sigmoid(x + dx, lambda) < 1.0 {
            prop_assert!(sigmoid(x, lambda) < sigmoid(x + dx, lambda));
        }
    }

    #[test]
    fn critical_value_inequality(lambda in 1e-3f64..50.0, n in 2usize..2_000_000, d in proptest::collection::vec(1u32..100_000, 1..5)) {
        let gs = noise::sigmoid_critical_value(lambda, &d, n).unwrap();
        let target = (n as f64).powi(-8);
        for &dj in &d {
            prop_assert!(sigmoid(-gs * f64::from(dj), lambda) <= target);
        }
        let dmin = f64::from(*d.iter().min().unwrap());
        prop_assert!(sigmoid(-gs * (1.0 - 1e-6) * dmin, lambda) > target);
    }

    #[test]
    fn decomposition_identity_and_bounds(
        d in proptest::collection::vec(1u32..500, 1..6),
        seed in any::<u64>(),
        gamma in 0.001f64..0.5,
    ) {
        let n: u32 = 2 * d.iter().sum::<u32>();
        let rng = RandomnessContext::new(seed).round(0);
        let w: Vec<u32> = (0..d.len()).map(|j| rng.ant(j as u64).below(0, n as usize + 1) as u32).collect();
        let r = metrics::instantaneous_regret(&w, &d).unwrap();
        let z = metrics::regret_decomposition(&w, &d, gamma).unwrap();
        prop_assert_eq!(z.plus + z.approx + z.minus, r);
        if z.plus == 0 && z.minus == 0 {
            let bound: f64 = d.iter().map(|&dj| metrics::C_MINUS.max(metrics::C_PLUS) * gamma * f64::from(dj)).sum::<f64>() + d.len() as f64;
            prop_assert!(z.approx as f64 <= bound, "{} > {}", z.approx, bound);
        }
    }

    #[test]
    fn traces_conserve_ants_and_repeat_exactly(c in small_config()) {
        let t = engine::run(&c).unwrap();
        let n = c.n as u64;
        prop_assert_eq!(t.final_assignment.len(), c.n);
        prop_assert_eq!(compute_loads(&t.final_assignment, c.k).unwrap(), t.final_loads());
        let thresholds = metrics::DecompositionThresholds::new(&c.demands, c.gamma);
        for i in 0..t.len() {
            let loads = t.loads(i);
            prop_assert!(loads.iter().map(|&w| u64::from(w)).sum::<u64>() <= n);
            let (plus, minus) = thresholds.split(loads);
            let z = metrics::regret_decomposition(loads, &c.demands, c.gamma).unwrap();
            prop_assert_eq!((z.plus, z.minus), (plus, minus));
            prop_assert_eq!(z.total(), metrics::instantaneous_regret(loads, &c.demands).unwrap());
        }
        for (t_i, &r) in t.regret.iter().enumerate() {
            prop_assert!(r <= 2 * n);
            prop_assert_eq!(r, metrics::instantaneous_regret(t.loads(t_i), &c.demands).unwrap());
        }
        if c.algorithm == AlgorithmSpec::TrivialSeq {
            prop_assert!(t.changed.iter().all(|&x| x <= 1));
        }
        let again = engine::run_with(&c, &RunOptions { parallel: true, ..RunOptions::default() }).unwrap();
        prop_assert_eq!(t.to_csv_string(true), again.to_csv_string(true));
    }

    #[test]
    fn ant_pausing_never_adds_load(c in small_config()) {
        let c = SimConfig { algorithm: AlgorithmSpec::Ant, ..c };
        let t = engine::run(&c).unwrap();
        for round in (1..=c.horizon).step_by(2) {
            let before = t.loads_at(round - 1).unwrap();
            let after = t.loads_at(round).unwrap();
            prop_assert!(before.iter().zip(after).all(|(b, a)| a <= b), "round {round}");
        }
    }
}

/// Drives one agent through `rounds` rounds of random feedback, checking at
/// every step that it never switches tasks without passing through idle and
/// that its compact state stays within `max_len` characters.
fn drive<A: Agent>(agent: &A, k: usize, start: Action, rounds: u64, seed: u64, max_len: usize) -> Result<(), String> {
    let rng = RandomnessContext::new(seed);
    let mut st = agent.initial_state(start);
    let mut current = start;
    for t in 1..=rounds {
        let s = rng.round(t).ant(0);
        let row = MaskRow { lack: s.bits(7) & ((1u64 << k) - 1), k };
        let out = agent.step(&mut st, &row, t, &mut rng.round(t).ant(1));
        if let (Action::Work(i), Action::Work(j)) = (current, out) {
            if i != j {
                return Err(format!("switched {i} -> {j} at round {t}"));
            }
        }
        let full: AgentState = st.clone().into();
        let compact = full.to_compact();
        if compact.len() > max_len {
            return Err(format!("state {compact} longer than {max_len}"));
        }
        if AgentState::parse_compact(&compact).as_ref() != Ok(&full) {
            return Err(format!("state {compact} does not round-trip"));
        }
        current = full.current();
    }
    Ok(())
}

fn digits(x: u64) -> usize {
    x.to_string().len()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn agents_never_switch_directly_and_stay_small(k in 1usize..=8, start in action(8), seed in any::<u64>(), gamma in 0.01f64..0.9, eps in 0.3f64..1.0) {
        let start = match start {
            Action::Work(j) if j >= k => Action::Idle,
            a => a,
        };
        let hex = k.div_ceil(4);
        // "tag:" plus the current action and separators.
        let head = 4 + digits(k as u64) + 4;
        drive(&TrivialAgent, k, start, 200, seed, head).map_err(TestCaseError::fail)?;
        drive(&AntAgent::new(gamma), k, start, 200, seed, head + hex + 2).map_err(TestCaseError::fail)?;
        let ps = PreciseSigmoidAgent::new(gamma, eps);
        let m = ps.window();
        drive(&ps, k, start, 4 * m, seed, head + 2 + hex + k * (digits(m) + 1)).map_err(TestCaseError::fail)?;
        let pa = PreciseAdversarialAgent::new(gamma, eps);
        let (r1, r2) = pa.sub_phases();
        drive(&pa, k, start, 2 * (r1 + r2), seed, head + 2 * (digits(r1) + 1) + 2 * (hex + 1)).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn closeness_of_all_idle_trace_is_inverse_critical_value() {
    let demands = vec![30, 50];
    let n = 400;
    let lambda = noise::lambda_for_critical_value(0.2, &demands, n).unwrap();
    let c = SimConfig::new(n, demands.clone(), NoiseSpec::Sigmoid { lambda, common_random: false }, AlgorithmSpec::Ant)
        .with_horizon(10);
    let t = engine::run_agent(&c, &NeverJoin, &RunOptions::default()).unwrap();
    let gs = c.critical_value().unwrap();
    let close = metrics::closeness(&t, gs, &demands, 0).unwrap();
    assert!((close.estimate - 1.0 / gs).abs() < 1e-9, "{close:?}");
}

/// An agent that stays idle forever.
struct NeverJoin;

impl Agent for NeverJoin {
    type State = taskalloc::algorithms::TrivialState;

    fn phase_length(&self) -> u64 {
        1
    }

    fn initial_state(&self, assignment: Action) -> Self::State {
        TrivialAgent.initial_state(assignment)
    }

    fn step<F, C>(&self, st: &mut Self::State, _: &F, _: u64, _: &mut C) -> Action
    where
        F: taskalloc::model::FeedbackRow + ?Sized,
        C: taskalloc::rng::Coins + ?Sized,
    {
        st.current = Action::Idle;
        Action::Idle
    }
}
