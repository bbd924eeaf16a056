//! Packaged acceptance experiments.
//!
//! Each suite runs a fixed desk-scale scenario and returns one [`Check`] per
//! measured quantity, tagged with the criterion number it belongs to. The CLI
//! `accept` command and the `acceptance` test target both drive these.

use std::fmt;
use std::time::Instant;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::algorithms::reach::reachability;
use crate::algorithms::{Agent, AntAgent, AntConstants, PreciseAdversarialAgent, PreciseSigmoidAgent, TrivialAgent};
use crate::engine::{self, EngineError, RunOptions, Trace};
use crate::metrics::{self, MetricsError};
use crate::model::{Action, AlgorithmSpec, InitialAssignmentSpec, MaskRow, Signal, SimConfig};
use crate::noise::{self, AdversaryStrategy, NoiseError, NoiseSpec};
use crate::oracle::{self, OracleError};
use crate::rng::RandomnessContext;

/// Suites accepted by [`run_suite`], in the order `all` runs them.
pub const SUITES: [&str; 7] = [
    "oracle-equivalence",
    "ant-closeness",
    "precise-sigmoid",
    "adversarial-lower-bound",
    "precise-adversarial",
    "trivial-oscillation",
    "invariants",
];

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("unknown suite `{0}`; valid suites: {list}", list = SUITES.join(", "))]
    Unknown(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

/// Overrides for the packaged sample sizes. `None` keeps the default.
#[derive(Clone, Debug, Default)]
pub struct SuiteOptions {
    pub seeds: Option<usize>,
    /// Monte Carlo runs per oracle comparison.
    pub runs: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub criterion: u8,
    pub name: String,
    pub measured: f64,
    pub expected: String,
    /// `None` for informational lines that do not gate the suite.
    pub pass: Option<bool>,
    pub detail: String,
}

impl Check {
    fn gate(criterion: u8, name: impl Into<String>, measured: f64, expected: impl Into<String>, pass: bool) -> Self {
        Check {
            criterion,
            name: name.into(),
            measured,
            expected: expected.into(),
            pass: Some(pass),
            detail: String::new(),
        }
    }

    fn info(criterion: u8, name: impl Into<String>, measured: f64, expected: impl Into<String>) -> Self {
        Check { criterion, name: name.into(), measured, expected: expected.into(), pass: None, detail: String::new() }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn status(&self) -> &'static str {
        match self.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "INFO",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} C{} {}: measured {} (expected {})",
            self.status(),
            self.criterion,
            self.name,
            fmt_num(self.measured),
            self.expected
        )?;
        if !self.detail.is_empty() {
            write!(f, " [{}]", self.detail)?;
        }
        Ok(())
    }
}

fn fmt_num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e12 {
        format!("{x:.0}")
    } else if x.abs() >= 100.0 {
        format!("{x:.1}")
    } else {
        format!("{x:.4}")
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass != Some(false))
    }

    /// Criteria covered, each with whether all its gating checks passed.
    pub fn criteria(&self) -> Vec<(u8, bool)> {
        let mut out: Vec<(u8, bool)> = Vec::new();
        for c in &self.checks {
            let ok = c.pass != Some(false);
            match out.iter_mut().find(|(n, _)| *n == c.criterion) {
                Some(e) => e.1 &= ok,
                None => out.push((c.criterion, ok)),
            }
        }
        out
    }
}

/// Short title of an acceptance criterion.
pub fn criterion_title(criterion: u8) -> &'static str {
    match criterion {
        1 => "oracle equivalence",
        2 => "Ant closeness",
        3 => "Ant scaling in gamma",
        4 => "PreciseSigmoid improvement",
        5 => "adversarial lower bound",
        6 => "PreciseAdversarial upper bound",
        7 => "Trivial oscillation",
        8 => "invariant suites",
        _ => "unknown",
    }
}

pub fn run_suite(name: &str, opts: &SuiteOptions) -> Result<SuiteReport, SuiteError> {
    let start = Instant::now();
    let checks = match name {
        "oracle-equivalence" => oracle_equivalence(opts)?,
        "ant-closeness" => ant_closeness(opts)?,
        "precise-sigmoid" => precise_sigmoid(opts)?,
        "adversarial-lower-bound" => adversarial_lower_bound(opts)?,
        "precise-adversarial" => precise_adversarial(opts)?,
        "trivial-oscillation" => trivial_oscillation(opts)?,
        "invariants" => invariants(opts)?,
        other => return Err(SuiteError::Unknown(other.to_string())),
    };
    Ok(SuiteReport { suite: name.to_string(), checks, seconds: start.elapsed().as_secs_f64() })
}

fn sigmoid(n: usize, demands: &[u32], gamma_star: f64) -> Result<(NoiseSpec, f64), NoiseError> {
    let lambda = noise::lambda_for_critical_value(gamma_star, demands, n)?;
    let exact = noise::sigmoid_critical_value(lambda, demands, n)?;
    Ok((NoiseSpec::Sigmoid { lambda, common_random: false }, exact))
}

fn par_seeds<T: Send>(
    seeds: usize,
    f: impl Fn(u64) -> Result<T, SuiteError> + Sync + Send,
) -> Result<Vec<T>, SuiteError> {
    (0..seeds as u64).into_par_iter().map(f).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------------------
// Oracle equivalence

fn oracle_configs() -> Vec<SimConfig> {
    let noise = |lambda| NoiseSpec::Sigmoid { lambda, common_random: false };
    vec![
        SimConfig::new(4, vec![1, 1], noise(1.0), AlgorithmSpec::Ant).with_gamma(0.2).with_horizon(4),
        SimConfig::new(4, vec![1, 1], noise(0.7), AlgorithmSpec::TrivialSync).with_gamma(0.2).with_horizon(4),
        // One full phase each: 2m = 44 and r1 + r2 = 165 rounds.
        SimConfig::new(3, vec![1], noise(1.0), AlgorithmSpec::PreciseSigmoid)
            .with_gamma(0.3)
            .with_epsilon(0.99)
            .with_horizon(44),
        // From all-idle nobody would ever join here; two workers exercise the
        // drop-outs and the replay.
        SimConfig::new(3, vec![1], noise(1.0), AlgorithmSpec::PreciseAdversarial)
            .with_gamma(0.9)
            .with_epsilon(0.99)
            .with_horizon(165)
            .with_initial(InitialAssignmentSpec::blocks(3, &[2])),
    ]
}

fn oracle_equivalence(opts: &SuiteOptions) -> Result<Vec<Check>, SuiteError> {
    let runs = opts.runs.unwrap_or(100_000);
    let mut checks = Vec::new();
    for c in oracle_configs() {
        let r = oracle::compare_mc_oracle(&c, runs)?;
        checks.push(
            Check::gate(1, format!("{} max TV", c.algorithm.name()), r.max_tv, "TV within 99% BHC radius", r.pass)
                .with_detail(format!(
                    "n={} k={} rounds={} runs={runs} worst TV/radius {:.3}",
                    c.n, c.k, c.horizon, r.worst_ratio
                )),
        );
    }
    // A mutated Ant with half the pause probability must be caught.
    let c = oracle_configs().remove(0);
    let mutated = AntAgent::with_constants(c.gamma, AntConstants { c_s: Ratio::new(7, 6), c_d: 19 });
    let r = oracle::compare_runs(&c, runs, |cfg| {
        engine::run_agent(cfg, &mutated, &RunOptions::default()).map_err(|e| OracleError::Engine(e.to_string()))
    })?;
    checks.push(
        Check::gate(1, "mutated ant detected", r.worst_ratio, "worst TV/radius > 1", !r.pass)
            .with_detail(format!("pause constant 7/6 instead of 7/3, max TV {:.4}", r.max_tv)),
    );
    Ok(checks)
}

// ---------------------------------------------------------------------------
// Ant closeness and scaling

const DESK_N: usize = 10_000;
const DESK_K: usize = 4;
const DESK_D: u32 = 1250;
const DESK_GAMMA_STAR: f64 = 0.05;

fn desk_ant(seed: u64, gamma_mult: f64, horizon: u64) -> Result<(SimConfig, f64), SuiteError> {
    let demands = vec![DESK_D; DESK_K];
    let (noise, gs) = sigmoid(DESK_N, &demands, DESK_GAMMA_STAR)?;
    let c = SimConfig::new(DESK_N, demands, noise, AlgorithmSpec::Ant)
        .with_gamma(gs * gamma_mult)
        .with_horizon(horizon)
        .with_seed(seed);
    Ok((c, gs))
}

struct AntRun {
    closeness: f64,
    mean_regret: f64,
    clean_fraction: f64,
}

fn ant_run(seed: u64, gamma_mult: f64, horizon: u64) -> Result<AntRun, SuiteError> {
    let (c, gs) = desk_ant(seed, gamma_mult, horizon)?;
    let trace = engine::run(&c)?;
    let burn_in = metrics::default_burn_in_for(&c);
    let close = metrics::closeness(&trace, gs, &c.demands, burn_in)?;
    let osc = metrics::oscillation_report_after(&trace, 2, &vec![0.0; c.k], burn_in)?;
    Ok(AntRun {
        closeness: close.estimate,
        mean_regret: close.mean_regret,
        clean_fraction: 1.0 - osc.exception_rounds as f64 / osc.rounds as f64,
    })
}

fn ant_closeness(opts: &SuiteOptions) -> Result<Vec<Check>, SuiteError> {
    let seeds = opts.seeds.unwrap_or(20);
    let horizon = 20_000;
    let mults = [1.0, 2.0, 4.0];
    let mut by_gamma = Vec::new();
    for &g in &mults {
        by_gamma.push(par_seeds(seeds, |s| ant_run(s, g, horizon))?);
    }
    let base = &by_gamma[0];
    let close: Vec<f64> = base.iter().map(|r| r.closeness).collect();
    let clean: Vec<f64> = base.iter().map(|r| r.clean_fraction).collect();
    let mut checks = vec![
        Check::gate(2, "mean closeness", mean(&close), "<= 5.5", mean(&close) <= 5.5)
            .with_detail(format!("{seeds} seeds, max {:.3}", max(&close))),
        Check::gate(2, "rounds with |deficit| <= 5γd+3", min(&clean), ">= 0.99 on every seed", min(&clean) >= 0.99)
            .with_detail(format!("mean {:.5}", mean(&clean))),
    ];
    let regrets: Vec<f64> =
        by_gamma.iter().map(|runs| mean(&runs.iter().map(|r| r.mean_regret).collect::<Vec<_>>())).collect();
    let increasing = regrets.windows(2).all(|w| w[1] > w[0]);
    checks.push(
        Check::gate(3, "regret increasing in γ", regrets[2] - regrets[0], "R(γ*) < R(2γ*) < R(4γ*)", increasing)
            .with_detail(format!("mean regret {:.1} / {:.1} / {:.1}", regrets[0], regrets[1], regrets[2])),
    );
    let ratio = regrets[2] / regrets[0];
    checks.push(Check::gate(3, "regret(4γ*)/regret(γ*)", ratio, "in [2, 8]", (2.0..=8.0).contains(&ratio)));
    Ok(checks)
}

// ---------------------------------------------------------------------------
// Precise Sigmoid

fn precise_sigmoid(opts: &SuiteOptions) -> Result<Vec<Check>, SuiteError> {
    let seeds = opts.seeds.unwrap_or(5);
    let epsilon = 0.25;
    let demands = vec![DESK_D; DESK_K];
    let (noise, gs) = sigmoid(DESK_N, &demands, DESK_GAMMA_STAR)?;
    let phase = 2 * crate::algorithms::window_length(epsilon);
    let horizon = 200 * phase;
    // Convergence from all-idle takes far longer than the horizon, so the
    // colony starts one ant above the grey zone.
    let start = ((1.0 + gs) * f64::from(DESK_D)).floor() as u32 + 1;
    let base = SimConfig::new(DESK_N, demands.clone(), noise, AlgorithmSpec::PreciseSigmoid)
        .with_gamma(gs)
        .with_epsilon(epsilon)
        .with_horizon(horizon)
        .with_initial(InitialAssignmentSpec::blocks(DESK_N, &[start; DESK_K]));
    let burn_in = horizon / 2;
    let results = par_seeds(seeds, |s| {
        let trace = engine::run(&base.clone().with_seed(s))?;
        let ps = metrics::mean_regret_after(&trace, burn_in)?;
        let ant = ant_run(s, 1.0, 20_000)?.mean_regret;
        Ok((ps, ant))
    })?;
    let sum: f64 = demands.iter().map(|&d| f64::from(d)).sum();
    let bound = 2.0 * gs * epsilon * sum + 4.0 * DESK_K as f64;
    let ps: Vec<f64> = results.iter().map(|r| r.0).collect();
    let below_ant = results.iter().filter(|r| r.0 < r.1).count();
    Ok(vec![
        Check::gate(
            4,
            "max post-burn-in mean regret",
            max(&ps),
            format!("<= 2γεΣd + 4k = {bound:.1}"),
            max(&ps) <= bound,
        )
        .with_detail(format!(
            "per seed {}, horizon {horizon}",
            ps.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(" / ")
        )),
        Check::gate(4, "seeds below Ant", below_ant as f64, format!("= {seeds}"), below_ant == seeds)
            .with_detail(format!("Ant mean regret {:.1}", mean(&results.iter().map(|r| r.1).collect::<Vec<_>>()))),
    ])
}

// ---------------------------------------------------------------------------
// Adversarial scenarios

const ADV_N: usize = 4000;
const ADV_K: usize = 2;
const ADV_GAMMA: f64 = 0.05;

fn adversarial_base(alg: AlgorithmSpec, demands: Vec<u32>, adversary: AdversaryStrategy) -> SimConfig {
    let eps = 0.25;
    let horizon = match alg {
        AlgorithmSpec::PreciseSigmoid => 200 * 2 * crate::algorithms::window_length(eps),
        AlgorithmSpec::PreciseAdversarial => {
            let (r1, r2) = crate::algorithms::sub_phase_lengths(eps);
            100 * (r1 + r2)
        }
        _ => 20_000,
    };
    let mut c = SimConfig::new(ADV_N, demands, NoiseSpec::Adversarial { gamma_ad: ADV_GAMMA, adversary }, alg)
        .with_gamma(ADV_GAMMA)
        .with_epsilon(eps)
        .with_horizon(horizon);
    if alg.is_precise() {
        let d = f64::from(ADV_N as u32 / (2 * ADV_K as u32));
        let start = ((1.0 + ADV_GAMMA) * d).floor() as u32 + 1;
        c.initial = InitialAssignmentSpec::blocks(ADV_N, &[start; ADV_K]);
    }
    c
}

fn adversarial_lower_bound(opts: &SuiteOptions) -> Result<Vec<Check>, SuiteError> {
    let seeds = opts.seeds.unwrap_or(1);
    let demands = vec![(ADV_N / (2 * ADV_K)) as u32; ADV_K];
    let shifted = noise::indistinguishable_demands(&demands, ADV_GAMMA, ADV_N as u32)
        .expect("an indistinguishable demand vector exists at this scale");
    let sum: f64 = demands.iter().map(|&d| f64::from(d)).sum();
    let bound = 0.8 * ADV_GAMMA * sum;
    let mut checks = Vec::new();
    for alg in [AlgorithmSpec::Ant, AlgorithmSpec::PreciseSigmoid, AlgorithmSpec::PreciseAdversarial] {
        let results = par_seeds(seeds, |s| {
            let a = adversarial_base(alg, demands.clone(), AdversaryStrategy::Indistinguishability { shifted: false })
                .with_seed(s);
            let b = adversarial_base(alg, shifted.clone(), AdversaryStrategy::Indistinguishability { shifted: true })
                .with_seed(s);
            let (ta, tb) = (engine::run(&a)?, engine::run(&b)?);
            let burn_in = a.horizon / 2;
            let same = (0..ta.len()).all(|i| ta.loads(i) == tb.loads(i));
            Ok((metrics::mean_regret_after(&ta, burn_in)?, metrics::mean_regret_after(&tb, burn_in)?, same))
        })?;
        let ra: Vec<f64> = results.iter().map(|r| r.0).collect();
        let rb: Vec<f64> = results.iter().map(|r| r.1).collect();
        let same = results.iter().all(|r| r.2);
        checks.push(
            Check::gate(
                5,
                format!("{} R/t", alg.name()),
                min(&ra),
                format!(">= 0.8γΣd = {bound:.0}"),
                min(&ra) >= bound,
            )
            .with_detail(format!("shifted demands {:?}: R/t {:.1}", shifted, min(&rb))),
        );
        checks.push(Check::gate(
            5,
            format!("{} identical trajectories in both worlds", alg.name()),
            f64::from(u8::from(same)),
            "1",
            same,
        ));
    }
    Ok(checks)
}

fn precise_adversarial(opts: &SuiteOptions) -> Result<Vec<Check>, SuiteError> {
    let seeds = opts.seeds.unwrap_or(2);
    let demands = vec![(ADV_N / (2 * ADV_K)) as u32; ADV_K];
    let sum: f64 = demands.iter().map(|&d| f64::from(d)).sum();
    let bound = 2.0 * ADV_GAMMA * 1.25 * sum + 4.0 * ADV_K as f64;
    let mut checks = Vec::new();
    for adv in [AdversaryStrategy::AllLackInGrey, AdversaryStrategy::AllOverloadInGrey] {
        let base = adversarial_base(AlgorithmSpec::PreciseAdversarial, demands.clone(), adv);
        let burn_in = base.horizon / 2;
        let regrets = par_seeds(seeds, |s| {
            let trace = engine::run(&base.clone().with_seed(s))?;
            Ok(metrics::mean_regret_after(&trace, burn_in)?)
        })?;
        checks.push(
            Check::gate(
                6,
                format!("{adv:?} mean regret"),
                max(&regrets),
                format!("<= 2γ(1+ε)Σd + 4k = {bound:.0}"),
                max(&regrets) <= bound,
            )
            .with_detail(format!("{seeds} seeds, horizon {}", base.horizon)),
        );
    }
    Ok(checks)
}

// ---------------------------------------------------------------------------
// Trivial oscillation

/// Fraction of post-burn-in rounds with `|Δ| ∈ [γ*d/40, 4γ*d]`, and the
/// first round at which the load reached `(1 − γ*)d`.
fn sequential_band(
    n: usize,
    d: u32,
    gamma_star: f64,
    horizon: u64,
    seed: u64,
) -> Result<(f64, Option<u64>), SuiteError> {
    let (noise, gs) = sigmoid(n, &[d], gamma_star)?;
    let c = SimConfig::new(n, vec![d], noise, AlgorithmSpec::TrivialSeq)
        .with_gamma(gs)
        .with_horizon(horizon)
        .with_seed(seed);
    let trace = engine::run(&c)?;
    let (lo, hi) = (gs * f64::from(d) / 40.0, 4.0 * gs * f64::from(d));
    let burn_in = (horizon / 2) as usize;
    let inside = (burn_in..trace.len())
        .filter(|&i| {
            let x = (i64::from(d) - i64::from(trace.loads(i)[0])).unsigned_abs() as f64;
            x >= lo && x <= hi
        })
        .count();
    let reached =
        (0..trace.len()).find(|&i| f64::from(trace.loads(i)[0]) >= (1.0 - gs) * f64::from(d)).map(|i| trace.rounds[i]);
    Ok((inside as f64 / (trace.len() - burn_in) as f64, reached))
}

fn trivial_oscillation(opts: &SuiteOptions) -> Result<Vec<Check>, SuiteError> {
    let seeds = opts.seeds.unwrap_or(3);
    let n = 2000;
    let d = (n / 4) as u32;
    let gamma_star = 0.3;
    let (noise, gs) = sigmoid(n, &[d], gamma_star)?;
    let sync = SimConfig::new(n, vec![d], noise, AlgorithmSpec::TrivialSync).with_gamma(gs).with_horizon(1000);
    let windows = par_seeds(seeds, |s| {
        let trace = engine::run(&sync.clone().with_seed(s))?;
        let threshold = (n as f64 / 2.0) / f64::from(d);
        let rep = metrics::oscillation_report(&trace, 10, &[threshold])?;
        Ok((rep.windows, rep.tasks[0].flagged_windows, rep.tasks[0].min_amplitude))
    })?;
    let all = windows.iter().all(|w| w.0 > 0 && w.0 == w.1);
    let min_amp = windows.iter().map(|w| w.2).min().unwrap_or(0);
    let mut checks = vec![Check::gate(
        7,
        "sync: windows with amplitude >= n/2",
        windows.iter().map(|w| w.1).sum::<usize>() as f64,
        format!("all {} windows of 10 rounds", windows.iter().map(|w| w.0).sum::<usize>()),
        all,
    )
    .with_detail(format!("n={n} d={d} γ*={gs:.3}, smallest amplitude {min_amp}"))];

    // The steady deficit of the sequential process is Θ(γ*d) only when d is
    // of order √n; with d = n/4 it settles near γ*d/55.
    let horizon = 400_000;
    let d_sqrt = (n as f64).sqrt().round() as u32;
    let seq = par_seeds(seeds, |s| sequential_band(n, d_sqrt, gamma_star, horizon, s))?;
    let frac: Vec<f64> = seq.iter().map(|r| r.0).collect();
    let rose = seq.iter().all(|r| r.1.is_some());
    checks.push(
        Check::gate(7, "seq: rounds with |deficit| in [γ*d/40, 4γ*d]", min(&frac), ">= 0.9", min(&frac) >= 0.9 && rose)
            .with_detail(format!(
                "n={n} d={d_sqrt} γ*={gamma_star}, load reached (1-γ*)d by round {}",
                seq.iter().filter_map(|r| r.1).max().unwrap_or(0)
            )),
    );
    let literal = sequential_band(n, d, gamma_star, horizon, 0)?;
    checks.push(
        Check::info(7, "seq with d = n/4: rounds in band", literal.0, ">= 0.9 not expected")
            .with_detail(format!("n={n} d={d} γ*={gamma_star}")),
    );
    Ok(checks)
}

// ---------------------------------------------------------------------------
// Invariants

fn invariant_configs() -> Vec<SimConfig> {
    let sig = NoiseSpec::Sigmoid { lambda: 0.3, common_random: false };
    let adv =
        NoiseSpec::Adversarial { gamma_ad: 0.1, adversary: AdversaryStrategy::CorrectOutsideRandomInside { p: 0.5 } };
    let d = vec![20, 30];
    let mut out = Vec::new();
    for alg in [
        AlgorithmSpec::Ant,
        AlgorithmSpec::PreciseSigmoid,
        AlgorithmSpec::PreciseAdversarial,
        AlgorithmSpec::TrivialSync,
        AlgorithmSpec::TrivialSeq,
    ] {
        for noise in [sig, adv, NoiseSpec::NoiseFree] {
            out.push(
                SimConfig::new(200, d.clone(), noise, alg)
                    .with_gamma(0.05)
                    .with_epsilon(0.5)
                    .with_horizon(2000)
                    .with_seed(17)
                    .with_initial(InitialAssignmentSpec::UniformRandom),
            );
        }
    }
    out
}

fn decomposition_holds(t: &Trace) -> bool {
    let thresholds = metrics::DecompositionThresholds::new(&t.config.demands, t.config.gamma);
    (0..t.len()).all(|i| {
        let loads = t.loads(i);
        let r = metrics::instantaneous_regret(loads, &t.config.demands).unwrap_or(u64::MAX);
        let (plus, minus) = thresholds.split(loads);
        let z = metrics::regret_decomposition(loads, &t.config.demands, t.config.gamma);
        z.is_ok_and(|z| z.total() == r && z.plus == plus && z.minus == minus)
    }) && t.regret.iter().zip(&t.regret_plus).zip(&t.regret_minus).all(|((&r, &p), &m)| p + m <= r)
}

/// Observed frequency of a branch over `draws` independent ant streams, and
/// its distance from `p` in binomial standard deviations.
fn branch_frequency(draws: u64, p: f64, mut fires: impl FnMut(u64) -> bool) -> (f64, f64) {
    let hits = (0..draws).filter(|&i| fires(i)).count() as f64;
    let sd = (draws as f64 * p * (1.0 - p)).sqrt();
    (hits / draws as f64, (hits - draws as f64 * p).abs() / sd)
}

/// A named coin-driven branch: its intended probability and a sampler.
type Branch<'a> = (&'static str, f64, Box<dyn FnMut(u64) -> bool + 'a>);

fn invariants(opts: &SuiteOptions) -> Result<Vec<Check>, SuiteError> {
    let mut checks = Vec::new();
    let configs = invariant_configs();
    let mut traces = Vec::new();
    for c in &configs {
        let opts = RunOptions { keep_states: true, ..RunOptions::default() };
        traces.push(engine::run_with(c, &opts)?);
    }

    let bad = traces.iter().filter(|t| !decomposition_holds(t)).count();
    checks.push(
        Check::gate(8, "decomposition identity violations", bad as f64, "0", bad == 0)
            .with_detail(format!("{} traces", traces.len())),
    );

    let bad = traces
        .iter()
        .filter(|t| {
            let n = t.config.n as u64;
            let per_round = (0..t.len()).all(|i| t.loads(i).iter().map(|&w| u64::from(w)).sum::<u64>() <= n);
            let finals = crate::model::compute_loads(&t.final_assignment, t.k()).ok() == Some(t.final_loads());
            let bounded = t.regret.iter().all(|&r| r <= 2 * n);
            !(per_round && finals && bounded && t.final_assignment.len() == t.config.n)
        })
        .count();
    checks.push(Check::gate(8, "conservation violations", bad as f64, "0", bad == 0));

    let mut bad = 0;
    for c in configs.iter().step_by(2) {
        let a = engine::run(c)?.to_csv_string(true);
        let b = engine::run(c)?.to_csv_string(true);
        let p = engine::run_with(c, &RunOptions { parallel: true, ..RunOptions::default() })?.to_csv_string(true);
        if a != b || a != p {
            bad += 1;
        }
    }
    checks.push(
        Check::gate(8, "non-reproducible runs", f64::from(bad), "0", bad == 0)
            .with_detail("repeat and parallel runs compared byte for byte"),
    );

    let lambda = 0.37;
    let grid: Vec<f64> = (-400..=400).map(|i| f64::from(i) * 0.25).collect();
    let antisym =
        grid.iter().map(|&x| (noise::sigmoid(x, lambda) + noise::sigmoid(-x, lambda) - 1.0).abs()).fold(0.0, f64::max);
    let monotone = grid.windows(2).all(|w| noise::sigmoid(w[0], lambda) <= noise::sigmoid(w[1], lambda));
    checks.push(Check::gate(
        8,
        "sigmoid |s(x)+s(-x)-1|",
        antisym,
        "<= 1e-15 and monotone",
        antisym <= 1e-15 && monotone,
    ));

    let mut worst = 0usize;
    for (n, d) in [(100usize, vec![10u32, 20]), (10_000, vec![1250; 4]), (4000, vec![1000, 1000]), (2000, vec![45])] {
        for lambda in [0.05, 0.3, 1.0, 4.0] {
            let gs = noise::sigmoid_critical_value(lambda, &d, n)?;
            let dmin = f64::from(*d.iter().min().unwrap());
            let target = (n as f64).powi(-8);
            let holds = noise::sigmoid(-gs * dmin, lambda) <= target;
            let below = gs * (1.0 - 1e-9);
            let minimal = noise::sigmoid(-below * dmin, lambda) > target;
            if !(holds && minimal) {
                worst += 1;
            }
        }
    }
    checks.push(
        Check::gate(8, "critical-value inequality failures", worst as f64, "0", worst == 0)
            .with_detail("s(-γ* d_min) <= n^-8 and fails just below γ*"),
    );

    let cap = 2_000_000;
    let graphs: Vec<(&str, Result<_, _>)> = vec![
        ("trivial k=3", reachability(&TrivialAgent, 3, cap)),
        ("ant k=3", reachability(&AntAgent::new(0.05), 3, cap)),
        ("precise-sigmoid k=2", reachability(&PreciseSigmoidAgent::new(0.05, 0.99), 2, cap)),
        ("precise-adversarial k=2", reachability(&PreciseAdversarialAgent::new(0.05, 0.99), 2, cap)),
    ];
    for (name, g) in graphs {
        let (ok, detail) = match g {
            Ok(r) => (r.strongly_connected(), format!("{} nodes, {} edges", r.nodes, r.edges)),
            Err(e) => (false, e.to_string()),
        };
        checks.push(
            Check::gate(8, format!("{name} state graph strongly connected"), f64::from(u8::from(ok)), "1", ok)
                .with_detail(detail),
        );
    }

    let draws = opts.runs.unwrap_or(1_000_000) as u64;
    let rng = RandomnessContext::new(99);
    let gamma = 0.05;
    let eps = 0.25;
    let over = [Signal::Overload];
    let ant = AntAgent::new(gamma);
    let ps = PreciseSigmoidAgent::new(gamma, eps);
    let pa = PreciseAdversarialAgent::new(gamma, eps);
    let m = ps.window();
    let branches: Vec<Branch> = vec![
        (
            "ant pause c_s·γ",
            ant.pause_probability(),
            Box::new(|i| {
                let mut st = ant.initial_state(Action::Work(0));
                ant.step(&mut st, &over[..], 1, &mut rng.round(1).ant(i)).is_idle()
            }),
        ),
        (
            "ant leave γ/c_d",
            ant.leave_probability(),
            Box::new(|i| {
                let mut st = ant.initial_state(Action::Work(0));
                ant.step(&mut st, &over[..], 2, &mut rng.round(2).ant(i)).is_idle()
            }),
        ),
        (
            "precise-sigmoid pause εc_sγ/c_χ",
            ps.pause_probability(),
            Box::new(|i| {
                let mut st = ps.initial_state(Action::Work(0));
                st.counts = vec![0];
                ps.step(&mut st, &over[..], m, &mut rng.round(m).ant(i)).is_idle()
            }),
        ),
        (
            "precise-sigmoid leave γ/(c_d c_χ)",
            ps.leave_probability(),
            Box::new(|i| {
                let mut st = ps.initial_state(Action::Work(0));
                st.counts = vec![0];
                ps.step(&mut st, &over[..], 2 * m, &mut rng.round(2 * m).ant(i)).is_idle()
            }),
        ),
        (
            "precise-adversarial drop εγ/32",
            pa.step_probability(),
            Box::new(|i| {
                let mut st = pa.initial_state(Action::Work(0));
                st.all_overload = 1;
                pa.step(&mut st, &over[..], 2, &mut rng.round(2).ant(i));
                st.pause_round == 2
            }),
        ),
    ];
    for (name, p, f) in branches {
        let (freq, z) = branch_frequency(draws, p, f);
        checks.push(
            Check::gate(8, format!("branch {name}"), freq, format!("{p:.6} within 3σ"), z <= 3.0)
                .with_detail(format!("{draws} draws, {z:.2}σ")),
        );
    }
    let (freq, z) = branch_frequency(draws, 0.5, |i| {
        let mut st = ant.initial_state(Action::Idle);
        st.sample1 = 0b11;
        let row = MaskRow { lack: 0b11, k: 2 };
        ant.step(&mut st, &row, 2, &mut rng.round(2).ant(i)) == Action::Work(0)
    });
    checks.push(
        Check::gate(8, "branch ant join uniform over lack tasks", freq, "0.5 within 3σ", z <= 3.0)
            .with_detail(format!("{z:.2}σ")),
    );
    Ok(checks)
}
