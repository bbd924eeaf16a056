//! Feedback oracles: the sigmoid model, the adversarial model with pluggable
//! grey-zone strategies, and a noise-free reference oracle.
//!
//! [`RoundOracle`] is the workhorse. It is prepared once per round from the
//! deficits and then evaluates single `(ant, task)` entries on demand, so
//! agents only pay for the entries they actually read.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FeedbackMatrix, FeedbackRow, Signal};
use crate::rng::{tag, AntStream, RandomnessContext, RoundStream, GLOBAL_ANT, U_MAX, U_MIN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("critical value needs n >= 2, got n = {0}")]
    TooFewAnts(usize),
    #[error("critical value needs at least one positive demand")]
    NoDemand,
    #[error("critical value must be positive, got {0}")]
    NonPositiveGamma(f64),
}

/// How the adversary fills the grey zone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AdversaryStrategy {
    AllLackInGrey,
    AllOverloadInGrey,
    /// Correct feedback (lack iff Δ > 0) flipped independently per entry with probability `p`.
    CorrectOutsideRandomInside {
        p: f64,
    },
    /// Threshold feedback of the lower-bound construction:
    /// lack iff Δ ≥ −γd (unshifted) or Δ ≥ γd (shifted).
    Indistinguishability {
        shifted: bool,
    },
    /// Lack iff `ant + round` is even.
    PerAntAlternating,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    Sigmoid {
        lambda: f64,
        /// Share one uniform draw per (round, task) across all ants.
        #[serde(default)]
        common_random: bool,
    },
    Adversarial {
        gamma_ad: f64,
        adversary: AdversaryStrategy,
    },
    /// Correct feedback everywhere: lack iff Δ > 0.
    NoiseFree,
}

/// The interval of deficits in which feedback carries no guarantee.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreyZone {
    pub lo: f64,
    pub hi: f64,
}

impl GreyZone {
    pub fn contains(&self, deficit: i64) -> bool {
        let x = deficit as f64;
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

pub fn grey_zone(demands: &[u32], gamma_star: f64) -> Vec<GreyZone> {
    demands
        .iter()
        .map(|&d| {
            let h = gamma_star * f64::from(d);
            GreyZone { lo: -h, hi: h }
        })
        .collect()
}

/// Logistic feedback probability `1 / (1 + e^{-λx})`, evaluated without
/// overflow for either sign of `x`.
#[inline]
pub fn sigmoid(x: f64, lambda: f64) -> f64 {
    let z = lambda * x;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(n^8 - 1)` without cancellation.
fn ln_n8_minus_1(n: usize) -> f64 {
    let nf = n as f64;
    8.0 * nf.ln() + (-nf.powi(-8)).ln_1p()
}

fn min_demand(demands: &[u32]) -> Result<f64, NoiseError> {
    demands.iter().copied().filter(|&d| d > 0).min().map(f64::from).ok_or(NoiseError::NoDemand)
}

/// Least γ with `s(−γ d_j) ≤ n^-8` for every task.
pub fn sigmoid_critical_value(lambda: f64, demands: &[u32], n: usize) -> Result<f64, NoiseError> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(NoiseError::NonPositiveLambda(lambda));
    }
    if n < 2 {
        return Err(NoiseError::TooFewAnts(n));
    }
    let d_min = min_demand(demands)?;
    let target = (n as f64).powi(-8);
    let mut g = ln_n8_minus_1(n) / (lambda * d_min);
    // The closed form can land an ulp or two short of the defining inequality.
    while sigmoid(-g * d_min, lambda) > target {
        g = g.next_up();
    }
    Ok(g)
}

/// The λ whose critical value is `gamma_star`.
pub fn lambda_for_critical_value(gamma_star: f64, demands: &[u32], n: usize) -> Result<f64, NoiseError> {
    if gamma_star.is_nan() || gamma_star <= 0.0 {
        return Err(NoiseError::NonPositiveGamma(gamma_star));
    }
    if n < 2 {
        return Err(NoiseError::TooFewAnts(n));
    }
    Ok(ln_n8_minus_1(n) / (gamma_star * min_demand(demands)?))
}

/// γ* of a noise model: the sigmoid critical value, γ^ad verbatim for the
/// adversarial model, and 0 for noise-free feedback.
pub fn critical_value(noise: &NoiseSpec, demands: &[u32], n: usize) -> Result<f64, NoiseError> {
    match *noise {
        NoiseSpec::Sigmoid { lambda, .. } => sigmoid_critical_value(lambda, demands, n),
        NoiseSpec::Adversarial { gamma_ad, .. } => Ok(gamma_ad),
        NoiseSpec::NoiseFree => Ok(0.0),
    }
}

/// Demands `d'` for which the shifted threshold rule on `d'` produces exactly
/// the feedback of the unshifted rule on `d`, for every load in `0..=max_load`.
///
/// This is the pair of worlds of the adversarial lower bound; `d'` lies
/// roughly `2γd` above `d`. Returns `None` if no such demand exists for some task.
pub fn indistinguishable_demands(demands: &[u32], gamma_ad: f64, max_load: u32) -> Option<Vec<u32>> {
    demands
        .iter()
        .map(|&d| {
            let lack_a = |w: u32| Signal::from_lack(threshold_lack(d, w, -gamma_ad));
            let hi = (f64::from(d) * (1.0 + gamma_ad) / (1.0 - gamma_ad)).ceil() as u32 + 2;
            (d..=hi).find(|&dp| (0..=max_load).all(|w| lack_a(w) == Signal::from_lack(threshold_lack(dp, w, gamma_ad))))
        })
        .collect()
}

/// `Δ ≥ g·d` with Δ = d − w.
#[inline]
fn threshold_lack(d: u32, w: u32, g: f64) -> bool {
    (i64::from(d) - i64::from(w)) as f64 >= g * f64::from(d)
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Rule {
    Fixed(Signal),
    /// Lack iff the entry's uniform draw is below `p`.
    Bernoulli(f64),
    /// Lack iff `ant + round` is even.
    Alternating,
    /// `truth`, flipped with probability `p`.
    Flip {
        truth: Signal,
        p: f64,
    },
}

impl Rule {
    /// Collapses probabilities that can never (or always) be met by a draw.
    fn bernoulli(p: f64) -> Rule {
        if p <= U_MIN {
            Rule::Fixed(Signal::Overload)
        } else if p > U_MAX {
            Rule::Fixed(Signal::Lack)
        } else {
            Rule::Bernoulli(p)
        }
    }
}

/// Feedback of one round, evaluated entry by entry on demand.
#[derive(Clone, Debug)]
pub struct RoundOracle {
    round: u64,
    stream: RoundStream,
    common: Option<AntStream>,
    rules: Vec<Rule>,
}

impl RoundOracle {
    pub fn new(noise: &NoiseSpec, demands: &[u32], deficits: &[i64], rng: &RandomnessContext, round: u64) -> Self {
        let stream = rng.round(round);
        let mut common = None;
        let rules = match *noise {
            NoiseSpec::Sigmoid { lambda, common_random } => {
                if common_random {
                    common = Some(stream.ant(GLOBAL_ANT));
                }
                deficits.iter().map(|&x| Rule::bernoulli(sigmoid(x as f64, lambda))).collect()
            }
            NoiseSpec::Adversarial { gamma_ad, adversary } => {
                deficits.iter().zip(demands).map(|(&x, &d)| adversarial_rule(x, d, gamma_ad, adversary)).collect()
            }
            NoiseSpec::NoiseFree => deficits.iter().map(|&x| Rule::Fixed(Signal::from_lack(x > 0))).collect(),
        };
        RoundOracle { round, stream, common, rules }
    }

    pub fn k(&self) -> usize {
        self.rules.len()
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Stream of `ant` in this round; decision coins draw from it too.
    pub fn ant_stream(&self, ant: usize) -> AntStream {
        self.stream.ant(ant as u64)
    }

    pub fn round_stream(&self) -> RoundStream {
        self.stream
    }

    #[inline]
    pub fn entry(&self, ant: usize, stream: &AntStream, task: usize) -> Signal {
        match self.rules[task] {
            Rule::Fixed(s) => s,
            Rule::Bernoulli(p) => {
                let s = self.common.as_ref().unwrap_or(stream);
                Signal::from_lack(s.uniform(task as u64) < p)
            }
            Rule::Alternating => Signal::from_lack((ant as u64).wrapping_add(self.round).is_multiple_of(2)),
            Rule::Flip { truth, p } => {
                if stream.bernoulli(tag::FLIP + task as u64, p) {
                    Signal::from_lack(!truth.is_lack())
                } else {
                    truth
                }
            }
        }
    }

    pub fn row(&self, ant: usize) -> OracleRow<'_> {
        self.row_with_stream(ant, self.ant_stream(ant))
    }

    pub fn row_with_stream(&self, ant: usize, stream: AntStream) -> OracleRow<'_> {
        OracleRow { oracle: self, ant, stream }
    }

    pub fn matrix(&self, n: usize) -> FeedbackMatrix {
        FeedbackMatrix::from_fn(self.round, n, self.k(), |i, j| self.entry(i, &self.ant_stream(i), j))
    }
}

fn adversarial_rule(x: i64, d: u32, gamma_ad: f64, adversary: AdversaryStrategy) -> Rule {
    let dx = x as f64;
    let h = gamma_ad * f64::from(d);
    if let AdversaryStrategy::Indistinguishability { shifted } = adversary {
        let g = if shifted { h } else { -h };
        return Rule::Fixed(Signal::from_lack(dx >= g));
    }
    if dx > h {
        return Rule::Fixed(Signal::Lack);
    }
    if dx < -h {
        return Rule::Fixed(Signal::Overload);
    }
    match adversary {
        AdversaryStrategy::AllLackInGrey => Rule::Fixed(Signal::Lack),
        AdversaryStrategy::AllOverloadInGrey => Rule::Fixed(Signal::Overload),
        AdversaryStrategy::CorrectOutsideRandomInside { p } => Rule::Flip { truth: Signal::from_lack(x > 0), p },
        AdversaryStrategy::PerAntAlternating => Rule::Alternating,
        AdversaryStrategy::Indistinguishability { .. } => unreachable!(),
    }
}

/// One ant's lazily evaluated row.
#[derive(Clone, Copy, Debug)]
pub struct OracleRow<'a> {
    oracle: &'a RoundOracle,
    ant: usize,
    stream: AntStream,
}

impl FeedbackRow for OracleRow<'_> {
    fn k(&self) -> usize {
        self.oracle.k()
    }

    #[inline]
    fn get(&self, task: usize) -> Signal {
        self.oracle.entry(self.ant, &self.stream, task)
    }
}

pub fn sample_feedback_sigmoid(
    deficits: &[i64],
    lambda: f64,
    rng: &RandomnessContext,
    round: u64,
    n: usize,
) -> FeedbackMatrix {
    let noise = NoiseSpec::Sigmoid { lambda, common_random: false };
    RoundOracle::new(&noise, &[], deficits, rng, round).matrix(n)
}

pub fn adversarial_feedback(
    deficits: &[i64],
    demands: &[u32],
    gamma_ad: f64,
    strategy: AdversaryStrategy,
    rng: &RandomnessContext,
    round: u64,
    n: usize,
) -> FeedbackMatrix {
    let noise = NoiseSpec::Adversarial { gamma_ad, adversary: strategy };
    RoundOracle::new(&noise, demands, deficits, rng, round).matrix(n)
}

pub fn noise_free_feedback(deficits: &[i64], round: u64, n: usize) -> FeedbackMatrix {
    RoundOracle::new(&NoiseSpec::NoiseFree, &[], deficits, &RandomnessContext::new(0), round).matrix(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_strategies() -> Vec<AdversaryStrategy> {
        vec![
            AdversaryStrategy::AllLackInGrey,
            AdversaryStrategy::AllOverloadInGrey,
            AdversaryStrategy::CorrectOutsideRandomInside { p: 0.3 },
            AdversaryStrategy::Indistinguishability { shifted: false },
            AdversaryStrategy::Indistinguishability { shifted: true },
            AdversaryStrategy::PerAntAlternating,
        ]
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0, 2.5), 0.5);
        assert_eq!(sigmoid(1e6, 1.0), 1.0);
        assert_eq!(sigmoid(-1e6, 1.0), 0.0);
        assert!((sigmoid(1.0, 3f64.ln()) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn critical_value_examples() {
        // Closed form evaluated independently in long-hand.
        let expected = ((16f64).powi(8) - 1.0).ln() / 100.0;
        let g = sigmoid_critical_value(1.0, &[100], 16).unwrap();
        assert!((g - expected).abs() < 1e-12);
        assert!((g - 0.221807).abs() < 1e-6);
        let t = 16f64.powi(-8);
        assert!(sigmoid(-g * 100.0, 1.0) <= t);
        assert!(sigmoid(-(g - 1e-6) * 100.0, 1.0) > t);

        let g2 = sigmoid_critical_value(1.0, &[100, 50], 16).unwrap();
        assert!((g2 - 0.443614).abs() < 1e-6);

        let adv = NoiseSpec::Adversarial { gamma_ad: 0.05, adversary: AdversaryStrategy::AllLackInGrey };
        assert_eq!(critical_value(&adv, &[100], 16).unwrap(), 0.05);
        assert_eq!(sigmoid_critical_value(1.0, &[100], 1), Err(NoiseError::TooFewAnts(1)));
    }

    #[test]
    fn lambda_inverts_critical_value() {
        let demands = [1250, 1250];
        let lambda = lambda_for_critical_value(0.05, &demands, 10_000).unwrap();
        let g = sigmoid_critical_value(lambda, &demands, 10_000).unwrap();
        assert!((g - 0.05).abs() < 1e-12, "{g}");
    }

    #[test]
    fn grey_zone_examples() {
        assert_eq!(grey_zone(&[100], 0.05), vec![GreyZone { lo: -5.0, hi: 5.0 }]);
        assert_eq!(grey_zone(&[100], 0.0)[0].width(), 0.0);
        let z = grey_zone(&[10, 20], 0.1);
        assert!((z[0].hi - 1.0).abs() < 1e-12 && (z[1].hi - 2.0).abs() < 1e-12);
        assert!(z[1].contains(-2) && !z[1].contains(3));
    }

    #[test]
    fn sigmoid_feedback_saturation_and_balance() {
        let rng = RandomnessContext::new(3);
        let m = sample_feedback_sigmoid(&[60, 0], 1.0, &rng, 1, 100_000);
        assert_eq!(m.lack_count(0), 100_000);
        let frac = m.lack_count(1) as f64 / 100_000.0;
        assert!((frac - 0.5).abs() < 0.005, "{frac}");
        assert_eq!(m, sample_feedback_sigmoid(&[60, 0], 1.0, &rng, 1, 100_000));
    }

    #[test]
    fn common_random_shares_draws() {
        let noise = NoiseSpec::Sigmoid { lambda: 1.0, common_random: true };
        let o = RoundOracle::new(&noise, &[], &[0, 0, 0], &RandomnessContext::new(1), 4);
        let m = o.matrix(50);
        for j in 0..3 {
            let c = m.lack_count(j);
            assert!(c == 0 || c == 50);
        }
    }

    #[test]
    fn adversarial_examples() {
        let rng = RandomnessContext::new(2);
        for s in all_strategies() {
            let m = adversarial_feedback(&[10], &[100], 0.05, s, &rng, 1, 20);
            assert_eq!(m.lack_count(0), 20, "{s:?}");
        }
        let m = adversarial_feedback(&[0], &[100], 0.05, AdversaryStrategy::AllOverloadInGrey, &rng, 1, 20);
        assert_eq!(m.lack_count(0), 0);
        let a = adversarial_feedback(
            &[0],
            &[100],
            0.1,
            AdversaryStrategy::Indistinguishability { shifted: false },
            &rng,
            1,
            5,
        );
        let b = adversarial_feedback(
            &[0],
            &[100],
            0.1,
            AdversaryStrategy::Indistinguishability { shifted: true },
            &rng,
            1,
            5,
        );
        assert_eq!((a.lack_count(0), b.lack_count(0)), (5, 0));
    }

    #[test]
    fn adversarial_outside_grey_is_strategy_independent() {
        let rng = RandomnessContext::new(8);
        let demands = [100, 100, 100, 100];
        let deficits = [6, -6, 50, -40];
        let reference = adversarial_feedback(&deficits, &demands, 0.05, AdversaryStrategy::AllLackInGrey, &rng, 3, 30);
        for s in all_strategies() {
            assert_eq!(adversarial_feedback(&deficits, &demands, 0.05, s, &rng, 3, 30), reference, "{s:?}");
        }
    }

    #[test]
    fn indistinguishable_pair_gives_identical_feedback() {
        let d = [1000_u32, 400];
        let dp = indistinguishable_demands(&d, 0.05, 3000).unwrap();
        assert_eq!(dp[0], 1106);
        let rng = RandomnessContext::new(0);
        for w0 in (0..3000).step_by(7) {
            for w1 in [0, 380, 420, 441, 442, 460] {
                let da = [1000 - w0 as i64, 400 - w1 as i64];
                let db = [dp[0] as i64 - w0 as i64, dp[1] as i64 - w1 as i64];
                let a = adversarial_feedback(
                    &da,
                    &d,
                    0.05,
                    AdversaryStrategy::Indistinguishability { shifted: false },
                    &rng,
                    1,
                    3,
                );
                let b = adversarial_feedback(
                    &db,
                    &dp,
                    0.05,
                    AdversaryStrategy::Indistinguishability { shifted: true },
                    &rng,
                    1,
                    3,
                );
                assert_eq!(a, b, "loads {w0} {w1}");
            }
        }
    }

    #[test]
    fn flip_strategy_rate() {
        let rng = RandomnessContext::new(4);
        let s = AdversaryStrategy::CorrectOutsideRandomInside { p: 0.25 };
        let m = adversarial_feedback(&[-1], &[100], 0.05, s, &rng, 1, 40_000);
        let frac = m.lack_count(0) as f64 / 40_000.0;
        assert!((frac - 0.25).abs() < 0.01, "{frac}");
    }

    #[test]
    fn alternating_strategy() {
        let rng = RandomnessContext::new(4);
        let m = adversarial_feedback(&[0], &[100], 0.05, AdversaryStrategy::PerAntAlternating, &rng, 1, 4);
        let col: Vec<_> = (0..4).map(|i| m.get(i, 0)).collect();
        assert_eq!(col, vec![Signal::Overload, Signal::Lack, Signal::Overload, Signal::Lack]);
    }
}
