//! Shared fixtures for the benchmarks.

use mre_core::forward::ForceNoiseMask;
use mre_core::scenario::{Measurement, NoiseSettings, Phantom};
use mre_core::{MaterialParams, PhantomSpec};

/// Default two-material phantom on an `n x n` grid with one noisy
/// measurement at relative level `delta`.
pub fn fixture(n: usize, delta: f64) -> (Phantom, Measurement) {
    let spec = PhantomSpec {
        nx: n,
        ny: n,
        ..PhantomSpec::default()
    };
    let phantom = Phantom::new(&spec, &MaterialParams::default(), 1.0).expect("valid phantom");
    let u = phantom.clean_displacement().expect("forward solve");
    let noise = NoiseSettings {
        force_mask: ForceNoiseMask::Loaded,
        ..NoiseSettings::level(delta)
    };
    let m = phantom.measure(&u, &noise, 0).expect("measurement");
    (phantom, m)
}
