#![allow(dead_code)]

pub mod grads;

use burstrank::dataset::{synth_generate, SynthConfig, SynthOutput};

/// 150 bursts of 11 frames split 100/25/25.
pub fn planted_100(seed: u64) -> SynthOutput {
    let cfg = SynthConfig {
        val_fraction: 1.0 / 6.0,
        test_fraction: 1.0 / 6.0,
        ..SynthConfig::default()
    };
    synth_generate(&cfg, 150, 11, seed).expect("synthetic dataset")
}

/// 50 bursts of 11 frames split 20/10/20, with heavier feature noise.
pub fn planted_low_data(seed: u64) -> SynthOutput {
    let cfg = SynthConfig {
        val_fraction: 0.2,
        test_fraction: 0.4,
        noise_amplitude: 0.5,
        ..SynthConfig::default()
    };
    synth_generate(&cfg, 50, 11, seed).expect("synthetic dataset")
}
