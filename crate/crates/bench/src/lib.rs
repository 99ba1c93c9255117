//! Input builders shared by the benchmarks.

use trace_contam_core::perturb::rng::SeededDraws;
use trace_contam_core::sim::{generate_pair, Scenario, ScenarioSpec};
use trace_contam_core::Trace;

/// A sequence of `len` symbols drawn from `alphabet` values.
pub fn symbols(len: usize, alphabet: usize, seed: u64) -> Vec<u32> {
    let mut g = SeededDraws::new(seed);
    (0..len).map(|_| g.below(alphabet) as u32).collect()
}

/// `b` is `a` with roughly one edit per `every` positions.
pub fn edited(a: &[u32], every: usize, seed: u64) -> Vec<u32> {
    let mut g = SeededDraws::new(seed);
    let mut out = Vec::with_capacity(a.len() + a.len() / every + 1);
    for &x in a {
        match g.below(every * 3) {
            0 => {}
            1 => out.push(x + 1000),
            2 => {
                out.push(x);
                out.push(x + 2000);
            }
            _ => out.push(x),
        }
    }
    out
}

/// A simulated pair with the given clean length.
pub fn pair(scenario: Scenario, clean_length: usize, seed: u64) -> (Trace, Trace) {
    let (c, p, _) = generate_pair(&ScenarioSpec::new(scenario, clean_length, seed), "bench").expect("valid spec");
    (c, p)
}
