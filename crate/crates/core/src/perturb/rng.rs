//! Counter-based draws for perturbation operators.
//!
//! Draw `k` (0-based) of a stream with state `s` is the SplitMix64 finalizer
//! applied to `s + (k + 1) * 0x9E3779B97F4A7C15` (wrapping). Integers below
//! `n` are taken as the high 64 bits of `draw * n`. Streams let an operator
//! keep independent draw counters per purpose: stream `t` of seed `s` starts
//! from state `mix(s ^ mix((t + 1) * 0xD1B54A32D192ED03))`.
//!
//! Everything is plain 64-bit integer arithmetic, so outputs are identical on
//! every platform.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_GAMMA: u64 = 0xD1B5_4A32_D192_ED03;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SeededDraws {
    state: u64,
    counter: u64,
}

impl SeededDraws {
    pub fn new(seed: u64) -> Self {
        SeededDraws { state: seed, counter: 0 }
    }

    /// Independent stream `tag` derived from `seed`.
    pub fn stream(seed: u64, tag: u64) -> Self {
        SeededDraws::new(mix64(seed ^ mix64(tag.wrapping_add(1).wrapping_mul(STREAM_GAMMA))))
    }

    /// Number of draws taken so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        mix64(self.state.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform integer in `0..n`. Panics when `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    pub fn coin(&mut self) -> bool {
        self.next_u64() >> 63 == 1
    }

    pub fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len())]
    }

    /// `k` distinct indices from `0..n` via partial Fisher–Yates, in draw order.
    pub fn sample(&mut self, n: usize, k: usize) -> Vec<usize> {
        let k = k.min(n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }

    /// Fisher–Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            p.swap(i, j);
        }
        p
    }
}
