//! Built-in regression checks against published measurements.

use std::fmt;

use serde::Serialize;

use crate::energy::{savings, system_power, EnergyTable, Pipeline};
use crate::error::Result;
use crate::fidelity::NoiseModel;
use crate::presets::{PresetStore, WORKLOADS};
use crate::thermal::{calibrate, jump_within_latency, steady_state, temperature_jump, transient_step, ThermalStack, ThermalState};

/// Measured (power W, die temperature °C) pairs used for calibration.
pub const VALIDATION_PAIRS: [(f64, f64); 2] = [(0.25, 34.8), (0.15, 31.4)];

/// Published (traditional W, near-sensor W) system powers per bundled workload.
pub const PUBLISHED_POWERS: [(&str, f64, f64); 4] = [
    ("alexnet", 3.0, 1.86),
    ("mobilenet_ssd", 1.92, 0.9),
    ("googlenet", 3.13, 1.81),
    ("resnet50", 2.67, 1.34),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub expected: String,
    pub actual: f64,
    pub passed: bool,
}

impl Check {
    fn within(name: impl Into<String>, actual: f64, target: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            expected: format!("{target} ± {tol}"),
            actual,
            passed: (actual - target).abs() <= tol,
        }
    }

    fn between(name: impl Into<String>, actual: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            expected: format!("[{lo}, {hi}]"),
            actual,
            passed: (lo..=hi).contains(&actual),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<4} {:<40} {:>12.4}  expected {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.actual,
            self.expected
        )
    }
}

/// Runs every check with the given model parameters.
pub fn regression_suite(
    stack: &ThermalStack,
    energy: &EnergyTable,
    _noise: &NoiseModel,
    presets: &PresetStore,
) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let fit = calibrate(&VALIDATION_PAIRS, None)?;
    let calibrated = stack.with_die_to_ambient(fit.r_die_ambient)?;
    for (p, t) in VALIDATION_PAIRS {
        let die = steady_state(&calibrated, p, fit.ambient)?.die;
        checks.push(Check::within(format!("steady state at {p} W (°C)"), die, t, 0.1));
    }

    let jump = temperature_jump(stack, 2.5, 0.1)?;
    checks.push(Check::within("jump 2.5 W -> 0.1 W (°C)", jump, 13.2, 0.2));
    let realized = jump_within_latency(stack, jump, 20e-3)? / jump;
    checks.push(Check::between("jump realized within 20 ms", realized, 0.98, 1.0));

    // One gated frame from the steady 2.5 W junction profile at 87 °C.
    let start = ThermalState {
        t_die: 87.0,
        t_pkg: 87.0 - 2.5 * stack.alpha_jump,
        time: 0.0,
    };
    let after = transient_step(stack, &start, 0.1, 25.0, 0.033)?;
    checks.push(Check::within("one-frame stop from 87 °C (°C)", after.t_die, 74.0, 1.0));

    let mut all_savings = Vec::new();
    for (name, trad, near) in PUBLISHED_POWERS {
        let profile = presets.get(name)?;
        let t = system_power(energy, &profile, Pipeline::Traditional)?.total();
        let n = system_power(energy, &profile, Pipeline::NearSensor)?.total();
        checks.push(Check::within(format!("{name} traditional power (W)"), t, trad, 0.01));
        checks.push(Check::within(format!("{name} near-sensor power (W)"), n, near, 0.01));
        all_savings.push(savings(t, n)?);
    }
    debug_assert_eq!(all_savings.len(), WORKLOADS.len());
    for (s, (name, ..)) in all_savings.iter().zip(PUBLISHED_POWERS) {
        // Savings are quoted in whole percent.
        checks.push(Check::between(format!("{name} savings (%)"), (s * 100.0).round(), 22.0, 53.0));
    }
    Ok(checks)
}
