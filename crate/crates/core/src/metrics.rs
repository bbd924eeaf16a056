//! Regret and diagnostics over traces.
//!
//! All regret arithmetic is on integers. The decomposition thresholds
//! `(1 + c⁺γ)d` and `(1 − c⁻γ)d` are rounded to the nearest integer load, so
//! the three parts always add up to `r(t)` exactly.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Trace;
use crate::model::{ModelError, SimConfig};

/// `c⁺ = 1.2 c_s = 14/5`.
pub const C_PLUS: f64 = 14.0 / 5.0;
/// `c⁻ = 1 + 1.2 c_s = 19/5`.
pub const C_MINUS: f64 = 19.0 / 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("closeness is undefined when gamma* times the demand sum is zero")]
    UndefinedCloseness,
    #[error("burn-in {burn_in} leaves no rounds of a horizon of {horizon}")]
    BurnInTooLong { burn_in: u64, horizon: u64 },
    #[error("window must be at least 2, got {0}")]
    WindowTooShort(usize),
}

fn check_len(loads: &[u32], demands: &[u32]) -> Result<(), ModelError> {
    if loads.len() != demands.len() {
        return Err(ModelError::DimensionMismatch { expected: demands.len(), actual: loads.len() });
    }
    Ok(())
}

/// `r(t) = Σ_j |d_j − w_j|`.
pub fn instantaneous_regret(loads: &[u32], demands: &[u32]) -> Result<u64, ModelError> {
    check_len(loads, demands)?;
    Ok(loads.iter().zip(demands).map(|(&w, &d)| u64::from(w.abs_diff(d))).sum())
}

/// Nearest integer. `(1 + 2.8 · 0.05) · 100` evaluates to 114.00000000000001
/// and has to count as 114.
fn snap(x: f64) -> i64 {
    x.round() as i64
}

/// Integer load thresholds of the decomposition for one γ.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecompositionThresholds {
    upper: Vec<i64>,
    lower: Vec<i64>,
}

impl DecompositionThresholds {
    pub fn new(demands: &[u32], gamma: f64) -> Self {
        let upper = demands.iter().map(|&d| snap((1.0 + C_PLUS * gamma) * f64::from(d))).collect();
        let lower = demands.iter().map(|&d| snap((1.0 - C_MINUS * gamma) * f64::from(d)).max(0)).collect();
        DecompositionThresholds { upper, lower }
    }

    /// `(r⁺, r⁻)` for a load vector of matching length.
    pub fn split(&self, loads: &[u32]) -> (u64, u64) {
        let mut plus = 0;
        let mut minus = 0;
        for ((&w, &u), &l) in loads.iter().zip(&self.upper).zip(&self.lower) {
            let w = i64::from(w);
            plus += (w - u).max(0) as u64;
            minus += (l - w).max(0) as u64;
        }
        (plus, minus)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub plus: u64,
    pub approx: u64,
    pub minus: u64,
}

impl Decomposition {
    pub fn total(&self) -> u64 {
        self.plus + self.approx + self.minus
    }
}

pub fn regret_decomposition(loads: &[u32], demands: &[u32], gamma: f64) -> Result<Decomposition, ModelError> {
    let r = instantaneous_regret(loads, demands)?;
    let (plus, minus) = DecompositionThresholds::new(demands, gamma).split(loads);
    Ok(Decomposition { plus, approx: r - plus - minus, minus })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretSeries {
    pub rounds: Vec<u64>,
    pub regret: Vec<u64>,
    pub cumulative: Vec<u64>,
    pub decomposition: Vec<Decomposition>,
}

/// Regret over the recorded rounds of `trace`, decomposed at `gamma`. The
/// cumulative column sums every round, recorded or not.
pub fn regret_series(trace: &Trace, gamma: f64) -> RegretSeries {
    let d = &trace.config.demands;
    let th = DecompositionThresholds::new(d, gamma);
    let mut running = Vec::with_capacity(trace.regret.len());
    let mut acc = 0;
    for &r in &trace.regret {
        acc += r;
        running.push(acc);
    }
    let mut out = RegretSeries::default();
    for (i, &t) in trace.rounds.iter().enumerate() {
        let loads = trace.loads(i);
        let r = trace.regret[t as usize - 1];
        let (plus, minus) = th.split(loads);
        out.rounds.push(t);
        out.regret.push(r);
        out.cumulative.push(running[t as usize - 1]);
        out.decomposition.push(Decomposition { plus, approx: r - plus - minus, minus });
    }
    out
}

/// `Φ = Σ_j ((1+γ)d_j − w_j)⁺` and `Ψ = #{j : (1+γ)d_j > w_j}`.
pub fn potential_values(loads: &[u32], demands: &[u32], gamma: f64) -> (f64, u32) {
    let mut phi = 0.0;
    let mut psi = 0;
    for (&w, &d) in loads.iter().zip(demands) {
        let gap = (1.0 + gamma) * f64::from(d) - f64::from(w);
        if gap > 0.0 {
            phi += gap;
            psi += 1;
        }
    }
    (phi, psi)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PotentialSeries {
    pub rounds: Vec<u64>,
    pub phi: Vec<f64>,
    pub psi: Vec<u32>,
}

/// Potentials at every recorded phase boundary, starting with round 0.
pub fn potentials(trace: &Trace, gamma: f64) -> PotentialSeries {
    let mut out = PotentialSeries::default();
    let len = trace.phase_length.max(1);
    let d = &trace.config.demands;
    let mut t = 0;
    while t <= trace.config.horizon {
        if let Some(loads) = trace.loads_at(t) {
            let (phi, psi) = potential_values(loads, d, gamma);
            out.rounds.push(t);
            out.phi.push(phi);
            out.psi.push(psi);
        }
        t += len;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Closeness {
    /// Mean post-burn-in regret divided by `γ* Σ d`.
    pub estimate: f64,
    pub mean_regret: f64,
    pub rounds: u64,
}

pub fn closeness(trace: &Trace, gamma_star: f64, demands: &[u32], burn_in: u64) -> Result<Closeness, MetricsError> {
    let scale = gamma_star * demands.iter().map(|&d| f64::from(d)).sum::<f64>();
    if scale.is_nan() || scale <= 0.0 {
        return Err(MetricsError::UndefinedCloseness);
    }
    let mean = mean_regret_after(trace, burn_in)?;
    Ok(Closeness { estimate: mean / scale, mean_regret: mean, rounds: trace.regret.len() as u64 - burn_in })
}

/// Mean of `r(t)` over `t > burn_in`.
pub fn mean_regret_after(trace: &Trace, burn_in: u64) -> Result<f64, MetricsError> {
    let h = trace.regret.len() as u64;
    if burn_in >= h {
        return Err(MetricsError::BurnInTooLong { burn_in, horizon: h });
    }
    let tail = &trace.regret[burn_in as usize..];
    Ok(tail.iter().sum::<u64>() as f64 / tail.len() as f64)
}

pub fn saturation(loads: &[u32], demands: &[u32], gamma: f64) -> bool {
    // Compare w ≥ (1−γ)d as (w − d) ≥ −γd to keep 0.9 · 100 exact.
    loads.iter().zip(demands).all(|(&w, &d)| (f64::from(w) - f64::from(d)) >= -gamma * f64::from(d))
}

/// Default burn-in `4 c_d k log₂(n) / γ`, capped at half the horizon.
pub fn default_burn_in(n: usize, k: usize, gamma: f64, horizon: u64) -> u64 {
    let formula = (4.0 * 19.0 * k as f64 * (n.max(2) as f64).log2() / gamma).ceil();
    (formula as u64).min(horizon / 2)
}

pub fn default_burn_in_for(config: &SimConfig) -> u64 {
    default_burn_in(config.n, config.k, config.gamma, config.horizon)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskOscillation {
    pub task: usize,
    /// Amplitude at or above which a window is flagged.
    pub threshold: f64,
    /// Max minus min deficit of each window, by window start.
    pub amplitudes: Vec<i64>,
    pub flagged_windows: usize,
    pub max_amplitude: i64,
    pub min_amplitude: i64,
    /// Rounds with `|Δ_j| > 5γd_j + 3`.
    pub exception_rounds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub window: usize,
    pub windows: usize,
    pub tasks: Vec<TaskOscillation>,
    /// Rounds in which at least one task is an exception.
    pub exception_rounds: usize,
    pub rounds: usize,
}

impl OscillationReport {
    /// Whether every window of every task was flagged.
    pub fn all_flagged(&self) -> bool {
        self.windows > 0 && self.tasks.iter().all(|t| t.flagged_windows == self.windows)
    }
}

pub fn oscillation_report(
    trace: &Trace,
    window: usize,
    threshold_fractions: &[f64],
) -> Result<OscillationReport, MetricsError> {
    oscillation_report_after(trace, window, threshold_fractions, 0)
}

/// [`oscillation_report`] restricted to records after round `after`.
/// Windows slide over consecutive records; exceptions use the config's γ.
pub fn oscillation_report_after(
    trace: &Trace,
    window: usize,
    threshold_fractions: &[f64],
    after: u64,
) -> Result<OscillationReport, MetricsError> {
    if window < 2 {
        return Err(MetricsError::WindowTooShort(window));
    }
    let k = trace.k();
    check_len(&vec![0; threshold_fractions.len()], &trace.config.demands)?;
    let first = trace.rounds.partition_point(|&t| t <= after);
    let records: Vec<usize> = (first..trace.len()).collect();
    let gamma = trace.config.gamma;
    let demands = &trace.config.demands;

    let mut any_exception = vec![false; records.len()];
    let mut tasks = Vec::with_capacity(k);
    for j in 0..k {
        let d = f64::from(demands[j]);
        let series: Vec<i64> = records.iter().map(|&i| i64::from(demands[j]) - i64::from(trace.loads(i)[j])).collect();
        let limit = 5.0 * gamma * d + 3.0;
        let mut exceptions = 0;
        for (r, &x) in series.iter().enumerate() {
            if x.unsigned_abs() as f64 > limit {
                exceptions += 1;
                any_exception[r] = true;
            }
        }
        let amplitudes = sliding_range(&series, window);
        let threshold = threshold_fractions[j] * d;
        tasks.push(TaskOscillation {
            task: j + 1,
            threshold,
            flagged_windows: amplitudes.iter().filter(|&&a| a as f64 >= threshold).count(),
            max_amplitude: amplitudes.iter().copied().max().unwrap_or(0),
            min_amplitude: amplitudes.iter().copied().min().unwrap_or(0),
            amplitudes,
            exception_rounds: exceptions,
        });
    }
    Ok(OscillationReport {
        window,
        windows: records.len().saturating_sub(window - 1),
        tasks,
        exception_rounds: any_exception.iter().filter(|&&e| e).count(),
        rounds: records.len(),
    })
}

/// Max minus min of every length-`w` window, via monotone deques.
fn sliding_range(xs: &[i64], w: usize) -> Vec<i64> {
    if xs.len() < w {
        return Vec::new();
    }
    let mut hi: VecDeque<usize> = VecDeque::new();
    let mut lo: VecDeque<usize> = VecDeque::new();
    let mut out = Vec::with_capacity(xs.len() - w + 1);
    for (i, &x) in xs.iter().enumerate() {
        while hi.back().is_some_and(|&b| xs[b] <= x) {
            hi.pop_back();
        }
        hi.push_back(i);
        while lo.back().is_some_and(|&b| xs[b] >= x) {
            lo.pop_back();
        }
        lo.push_back(i);
        if i + 1 >= w {
            let start = i + 1 - w;
            while hi[0] < start {
                hi.pop_front();
            }
            while lo[0] < start {
                lo.pop_front();
            }
            out.push(xs[hi[0]] - xs[lo[0]]);
        }
    }
    out
}

/// Per-run numbers for JSON export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: SimConfig,
    pub seed: u64,
    pub warnings: Vec<String>,
    pub horizon: u64,
    pub burn_in: u64,
    pub total_regret: u64,
    pub avg_regret: f64,
    pub avg_regret_after_burn_in: Option<f64>,
    pub critical_value: Option<f64>,
    pub closeness: Option<f64>,
    pub exception_rounds: usize,
    pub r_plus: u64,
    pub r_approx: u64,
    pub r_minus: u64,
    pub phi_final: f64,
    pub psi_final: u32,
    pub final_loads: Vec<u32>,
}

/// Summarizes a trace; `r_plus`, `r_approx`, `r_minus` are cumulative over all rounds.
pub fn summarize(trace: &Trace, burn_in: u64) -> RunSummary {
    let c = &trace.config;
    let total = trace.total_regret();
    let h = trace.regret.len() as u64;
    let plus: u64 = trace.regret_plus.iter().sum();
    let minus: u64 = trace.regret_minus.iter().sum();
    let gamma_star = c.critical_value().ok();
    let close = gamma_star.and_then(|g| closeness(trace, g, &c.demands, burn_in).ok());
    let final_loads = trace.final_loads();
    let (phi, psi) = potential_values(&final_loads, &c.demands, c.gamma);
    let exceptions =
        oscillation_report_after(trace, 2, &vec![0.0; c.k], burn_in).map(|r| r.exception_rounds).unwrap_or(0);
    RunSummary {
        config: c.clone(),
        seed: c.seed,
        warnings: trace.warnings.clone(),
        horizon: h,
        burn_in,
        total_regret: total,
        avg_regret: if h == 0 { 0.0 } else { total as f64 / h as f64 },
        avg_regret_after_burn_in: mean_regret_after(trace, burn_in).ok(),
        critical_value: gamma_star,
        closeness: close.map(|x| x.estimate),
        exception_rounds: exceptions,
        r_plus: plus,
        r_approx: total - plus - minus,
        r_minus: minus,
        phi_final: phi,
        psi_final: psi,
        final_loads,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regret_examples() {
        assert_eq!(instantaneous_regret(&[5, 5], &[5, 5]).unwrap(), 0);
        assert_eq!(instantaneous_regret(&[0, 0], &[4, 7]).unwrap(), 11);
        assert_eq!(instantaneous_regret(&[8, 3], &[5, 5]).unwrap(), 5);
        assert!(instantaneous_regret(&[1], &[1, 1]).is_err());
    }

    #[test]
    fn decomposition_examples() {
        let z = regret_decomposition(&[100], &[100], 0.05).unwrap();
        assert_eq!(z, Decomposition::default());
        let over = regret_decomposition(&[120], &[100], 0.05).unwrap();
        assert_eq!(over, Decomposition { plus: 6, approx: 14, minus: 0 });
        let under = regret_decomposition(&[0], &[100], 0.05).unwrap();
        assert_eq!(under, Decomposition { plus: 0, approx: 19, minus: 81 });
    }

    #[test]
    fn potential_examples() {
        assert_eq!(potential_values(&[110, 300], &[100, 100], 0.05), (0.0, 0));
        let (phi, psi) = potential_values(&[0, 200], &[100, 100], 0.05);
        assert_eq!(psi, 1);
        assert!((phi - 105.0).abs() < 1e-12);
    }

    #[test]
    fn saturation_examples() {
        assert!(saturation(&[100], &[100], 0.1));
        assert!(saturation(&[90], &[100], 0.1));
        assert!(!saturation(&[89], &[100], 0.1));
    }

    #[test]
    fn sliding_range_brute_force() {
        let xs: Vec<i64> = (0..200).map(|i: i64| (i * 37 % 23) - (i % 7) * 3).collect();
        for w in [2, 3, 10, 50] {
            let fast = sliding_range(&xs, w);
            let slow: Vec<i64> = xs.windows(w).map(|s| s.iter().max().unwrap() - s.iter().min().unwrap()).collect();
            assert_eq!(fast, slow);
        }
        assert!(sliding_range(&xs[..3], 5).is_empty());
    }

    #[test]
    fn burn_in_default() {
        // 4 · 19 · 4 · log2(10^4) / 0.05 ≈ 80 792, capped at half of 2·10^4.
        assert_eq!(default_burn_in(10_000, 4, 0.05, 20_000), 10_000);
        assert_eq!(default_burn_in(16, 1, 0.5, 10_000), 608);
    }
}
