//! Counter-based randomness.
//!
//! Every random quantity is a pure function of `(seed, round, ant, tag)`, so a
//! round can be evaluated in any order (or in parallel) and still reproduce
//! the same trace. Feedback entries use the task index as tag; decision coins
//! use the reserved tags in [`tag`], which are all at least `2^32` and so can
//! never collide with a task index.

/// Tags for decision coins.
pub mod tag {
    pub const PAUSE: u64 = 1 << 32;
    pub const LEAVE: u64 = (1 << 32) + 1;
    pub const JOIN: u64 = (1 << 32) + 2;
    pub const ACTOR: u64 = (1 << 32) + 3;
    pub const INIT: u64 = (1 << 32) + 4;
    /// Base tag for adversary coin flips; the task index is added.
    pub const FLIP: u64 = 1 << 33;
}

/// Ant index reserved for per-round draws that belong to no ant
/// (actor selection, common random numbers).
pub const GLOBAL_ANT: u64 = u64::MAX;

/// Smallest and largest values returned by [`AntStream::uniform`].
pub const U_MIN: f64 = 0.5 / (1u64 << 53) as f64;
pub const U_MAX: f64 = 1.0 - U_MIN;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn combine(key: u64, value: u64) -> u64 {
    mix(key ^ mix(value.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// Root of all random streams for one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomnessContext {
    key: u64,
}

impl RandomnessContext {
    pub fn new(seed: u64) -> Self {
        RandomnessContext { key: mix(seed ^ 0x6a09_e667_f3bc_c909) }
    }

    pub fn round(&self, round: u64) -> RoundStream {
        RoundStream { key: combine(self.key, round) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RoundStream {
    key: u64,
}

impl RoundStream {
    pub fn ant(&self, ant: u64) -> AntStream {
        AntStream { key: combine(self.key, ant) }
    }
}

/// Stateless stream of one ant in one round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AntStream {
    key: u64,
}

impl AntStream {
    #[inline]
    pub fn bits(&self, tag: u64) -> u64 {
        combine(self.key, tag)
    }

    /// Uniform draw in the open interval (0, 1).
    #[inline]
    pub fn uniform(&self, tag: u64) -> f64 {
        ((self.bits(tag) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// True with probability `p`. Probabilities at or beyond the range of
    /// [`uniform`](Self::uniform) are decided without hashing; the result is
    /// identical to the hashed comparison.
    #[inline]
    pub fn bernoulli(&self, tag: u64, p: f64) -> bool {
        if p <= U_MIN {
            false
        } else if p > U_MAX {
            true
        } else {
            self.uniform(tag) < p
        }
    }

    /// Uniform index in `0..len`. `len` must be positive.
    #[inline]
    pub fn below(&self, tag: u64, len: usize) -> usize {
        debug_assert!(len > 0);
        ((u128::from(self.bits(tag)) * len as u128) >> 64) as usize
    }
}

/// Source of the decision coins an agent flips during one step.
///
/// The engine passes an [`AntStream`]; the exact oracle passes an
/// enumerator that branches over both outcomes.
pub trait Coins {
    fn bernoulli(&mut self, tag: u64, p: f64) -> bool;
    fn choose(&mut self, tag: u64, len: usize) -> usize;
}

impl Coins for AntStream {
    fn bernoulli(&mut self, tag: u64, p: f64) -> bool {
        AntStream::bernoulli(self, tag, p)
    }

    fn choose(&mut self, tag: u64, len: usize) -> usize {
        self.below(tag, len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a = RandomnessContext::new(1).round(3).ant(4);
        let b = RandomnessContext::new(1).round(3).ant(4);
        assert_eq!(a.bits(7), b.bits(7));
        assert_ne!(a.bits(7), a.bits(8));
        assert_ne!(a.bits(7), RandomnessContext::new(1).round(4).ant(4).bits(7));
        assert_ne!(a.bits(7), RandomnessContext::new(2).round(3).ant(4).bits(7));
    }

    #[test]
    fn uniform_stays_open() {
        let s = RandomnessContext::new(9).round(1).ant(0);
        for t in 0..100_000 {
            let u = s.uniform(t);
            assert!((U_MIN..=U_MAX).contains(&u));
        }
    }

    #[test]
    fn uniform_mean_and_below_range() {
        let s = RandomnessContext::new(5).round(2).ant(1);
        let m = 200_000;
        let mean: f64 = (0..m).map(|t| s.uniform(t)).sum::<f64>() / m as f64;
        // 1/sqrt(12 m) is about 6.5e-4
        assert!((mean - 0.5).abs() < 4e-3, "{mean}");
        let mut hist = [0usize; 3];
        for t in 0..30_000 {
            hist[s.below(t, 3)] += 1;
        }
        assert!(hist.iter().all(|&h| (9_400..10_600).contains(&h)), "{hist:?}");
    }

    #[test]
    fn saturated_bernoulli_matches_comparison() {
        let s = RandomnessContext::new(0).round(0).ant(0);
        for t in 0..1000 {
            assert_eq!(s.bernoulli(t, 1e-300), s.uniform(t) < 1e-300);
            assert_eq!(s.bernoulli(t, 1.0), s.uniform(t) < 1.0);
        }
    }
}
