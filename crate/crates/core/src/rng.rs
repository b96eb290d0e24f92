//! Deterministic counter-based pseudo-random numbers.
//!
//! Every random quantity in the crate is derived from a single master seed
//! through explicit stream derivation, so ensembles are reproducible
//! bit-for-bit regardless of thread count or evaluation order. The
//! generator is splitmix64: output `i` is the avalanche of
//! `key + (i+1)·GOLDEN`, a pure function of `(key, i)` with no sequential
//! state beyond the draw counter.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_SALT: u64 = 0xD1B5_4A32_D192_ED03;

/// splitmix64 finalizer; bijective on u64 with full avalanche.
#[inline]
fn avalanche(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based generator: a key plus a draw counter.
///
/// Draw `i` equals `avalanche(key + (i+1)·GOLDEN)`, so two generators with
/// the same key always produce the same sequence and a generator can be
/// reconstructed from `(key, counter)` alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    /// Generator seeded directly with `key`.
    pub fn new(key: u64) -> Self {
        CounterRng { key, counter: 0 }
    }

    /// Independent stream `stream` derived from `master`.
    ///
    /// The master seed is avalanched, translated by an odd multiple of the
    /// stream index, and avalanched again; distinct `(master, stream)`
    /// pairs land on unrelated keys.
    pub fn stream(master: u64, stream: u64) -> Self {
        let key = avalanche(avalanche(master).wrapping_add(stream.wrapping_mul(STREAM_SALT)));
        CounterRng { key, counter: 0 }
    }

    /// Child stream derived from this generator's key (not its counter),
    /// for splitting a replica's randomness into e.g. noise and masks.
    pub fn substream(&self, stream: u64) -> Self {
        CounterRng::stream(self.key, stream)
    }

    /// Next raw 64-bit draw.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        avalanche(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform draw in [0, 1) with 53 significant bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Bernoulli draw: true with probability `p`.
    ///
    /// Defined as `next_f64() < p`, consuming exactly one u64.
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal draw via Box–Muller.
    ///
    /// Consumes exactly two uniforms per call and keeps no cached second
    /// variate, so the draw count per replica is a fixed function of the
    /// trajectory shape.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // in (0, 1]; log stays finite
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Rademacher draw: ±1 with equal probability.
    #[inline]
    pub fn next_rademacher(&mut self) -> f64 {
        if self.next_u64() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_reference_splitmix64_vectors() {
        // Frozen reference outputs of splitmix64 with seed 1234567; these
        // pin the generator across refactors and platforms.
        let mut rng = CounterRng::new(1234567);
        assert_eq!(rng.next_u64(), 6457827717110365317);
        assert_eq!(rng.next_u64(), 3203168211198807973);
        assert_eq!(rng.next_u64(), 9817491932198370423);
        assert_eq!(rng.next_u64(), 4593380528125082431);
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = CounterRng::new(42);
        let mut b = CounterRng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let mut s0 = CounterRng::stream(42, 0);
        let mut s1 = CounterRng::stream(42, 1);
        let mut s0_again = CounterRng::stream(42, 0);
        let a: Vec<u64> = (0..8).map(|_| s0.next_u64()).collect();
        let b: Vec<u64> = (0..8).map(|_| s1.next_u64()).collect();
        let c: Vec<u64> = (0..8).map(|_| s0_again.next_u64()).collect();
        assert_eq!(a, c);
        assert_ne!(a, b);
    }

    #[test]
    fn uniforms_lie_in_unit_interval_with_correct_mean() {
        let mut rng = CounterRng::new(7);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let u = rng.next_f64();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        let mean = sum / n as f64;
        // 4 sigma band around 1/2 for the mean of n uniforms.
        let sigma = (1.0 / 12.0_f64 / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 4.0 * sigma, "mean {mean}");
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = CounterRng::new(11);
        let n = 200_000;
        let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let g = rng.next_gaussian();
            s1 += g;
            s2 += g * g;
            s4 += g * g * g * g;
        }
        let nf = n as f64;
        assert!((s1 / nf).abs() < 4.0 / nf.sqrt());
        assert!((s2 / nf - 1.0).abs() < 4.0 * (2.0_f64 / nf).sqrt());
        // fourth moment of a standard normal is 3, variance of g^4 is 96
        assert!((s4 / nf - 3.0).abs() < 4.0 * (96.0_f64 / nf).sqrt());
    }

    #[test]
    fn bernoulli_mean_within_binomial_band() {
        let mut rng = CounterRng::new(3);
        let p = 0.3;
        let n = 100_000;
        let hits = (0..n).filter(|_| rng.bernoulli(p)).count() as f64;
        let mean = hits / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((mean - p).abs() < 4.0 * sigma, "mean {mean}");
    }

    #[test]
    fn rademacher_is_balanced() {
        let mut rng = CounterRng::new(5);
        let n = 100_000;
        let sum: f64 = (0..n).map(|_| rng.next_rademacher()).sum();
        assert!((sum / n as f64).abs() < 4.0 / (n as f64).sqrt());
    }
}
