//! Fixtures shared by the benchmarks.

use tiered_core::{DampedMode, Environment, PVector, SpectralDensity, SystemModel, Thermal, TimeGrid};

pub fn model() -> SystemModel {
    SystemModel::spin_boson(0.0, std::f64::consts::FRAC_PI_2)
}

pub fn biased_model() -> SystemModel {
    SystemModel::spin_boson(0.4, std::f64::consts::FRAC_PI_2)
}

pub fn up() -> PVector {
    PVector::from_expectations(2, &[0.0, 0.0, 1.0]).expect("valid state")
}

/// One damped mode plus a super-Ohmic continuum at kT = 6.546.
pub fn environment() -> Environment {
    let thermal = Thermal::from_kt(6.546).expect("positive temperature");
    Environment::new(
        vec![
            SpectralDensity::modes(vec![DampedMode::new(1.6, 0.1, 0.05)]),
            SpectralDensity::ohmic_gaussian(0.0027, 3.0, 2.2),
        ],
        thermal,
    )
}

pub fn grid(steps: usize) -> TimeGrid {
    TimeGrid::new(0.01, 0.01 * steps as f64).expect("valid grid")
}
