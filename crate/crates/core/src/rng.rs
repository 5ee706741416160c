//! Counter-based 64-bit generator used for every random draw in the crate.
//!
//! The generator is SplitMix64 written in counter form, so any language can
//! reproduce a stream from `(key, counter)` alone:
//!
//! ```text
//! GAMMA = 0x9E3779B97F4A7C15
//! mix(z):
//!     z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!     z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!     return z ^ (z >> 31)
//! output_i = mix(key + i * GAMMA)        for i = 1, 2, 3, ...   (wrapping u64)
//! ```
//!
//! Derived quantities:
//!
//! * `stream(seed, id)` uses `key = mix(seed ^ mix(id + GAMMA))`.
//! * `uniform()` is `(output >> 11) * 2^-53`, in `[0, 1)`.
//! * `below(n)` is Lemire's multiply-shift with rejection: take
//!   `m = output * n` as a 128-bit product; reject while `low64(m) < (2^64 - n) mod n`;
//!   return `high64(m)`.
//! * `normal()` is Box-Muller on two uniforms, `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`;
//!   the sine half is discarded.
//! * `shuffle` is Fisher-Yates from the last index down, `j = below(i + 1)`.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self {
            key: seed,
            counter: 0,
        }
    }

    /// Independent stream for a `(seed, purpose)` pair.
    pub fn stream(seed: u64, id: u64) -> Self {
        Self::new(mix(seed ^ mix(id.wrapping_add(GAMMA))))
    }

    /// Value at an arbitrary position of this stream, without advancing it.
    pub fn at(&self, index: u64) -> u64 {
        mix(self.key.wrapping_add(index.wrapping_mul(GAMMA)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        self.at(self.counter)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// A uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_reference_splitmix64() {
        // Reference values of SplitMix64 seeded with 0.
        let mut rng = CounterRng::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(rng.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn at_is_random_access() {
        let mut rng = CounterRng::new(42);
        let third = rng.at(3);
        rng.next_u64();
        rng.next_u64();
        assert_eq!(rng.next_u64(), third);
    }

    #[test]
    fn below_stays_in_range_and_covers_it() {
        let mut rng = CounterRng::new(7);
        let mut seen = [false; 5];
        for _ in 0..1000 {
            let v = rng.below(5);
            assert!(v < 5);
            seen[v as usize] = true;
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn normal_moments() {
        let mut rng = CounterRng::new(11);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // 5-sigma bounds on the sample mean and variance.
        assert!(mean.abs() < 5.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn streams_differ() {
        let a = CounterRng::stream(1, 0).next_u64();
        let b = CounterRng::stream(1, 1).next_u64();
        let c = CounterRng::stream(2, 0).next_u64();
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut rng = CounterRng::new(3);
        let mut p = rng.permutation(100);
        p.sort_unstable();
        assert_eq!(p, (0..100).collect::<Vec<_>>());
    }
}
