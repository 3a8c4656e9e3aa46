//! Inputs shared by the benchmarks.

use crashscene::dsl::{parse_scenario, Scenario};

pub const CROSSING: &str = include_str!("../../../fixtures/scenarios/intersection_crossing.scenario");
pub const MERGING: &str = include_str!("../../../fixtures/scenarios/merging_on_ramp.scenario");

/// A chatty model reply that ends with the canonical block.
pub const REPLY: &str = include_str!("../../../fixtures/responses/case_119489/scenario.txt");

pub fn scenario(text: &str) -> Scenario {
    parse_scenario(text).expect("bench fixtures parse")
}

/// Two samples of `n` deterministic pseudo-random values, the second shifted.
pub fn samples(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = 0x9e37_79b9_7f4a_7c15u64;
    let mut next = || {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        (x >> 11) as f64 / (1u64 << 53) as f64
    };
    let a = (0..n).map(|_| next()).collect();
    let b = (0..n).map(|_| next() + 0.2).collect();
    (a, b)
}
