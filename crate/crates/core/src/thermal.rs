//! Lumped RC thermal model of a stacked image sensor.
//!
//! The sensor, DRAM and VPU layers are collapsed into one die node sitting on
//! top of a package node. The package charges towards `ambient + p * r_eff`
//! with the slow package time constant, while the die-to-package gap relaxes
//! towards `p * alpha_jump` with the fast junction time constant `tau_die`.

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power density above which lateral temperature gradients stop being negligible, W/cm².
pub const UNIFORM_POWER_DENSITY_LIMIT: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalStack {
    /// Case-to-ambient, K/W.
    pub r_ca: f64,
    /// Junction-to-case, K/W.
    pub r_jc: f64,
    /// Junction-to-board, K/W.
    pub r_jb: f64,
    /// Board-to-ambient, K/W.
    pub r_ba: f64,
    /// Sensor-to-DRAM, K/W.
    pub r_sd: f64,
    /// DRAM-to-VPU, K/W.
    pub r_dv: f64,
    /// Package heat capacitance, J/K.
    pub c_pkg: f64,
    /// Combined die-stack capacitance, J/K.
    pub c_die: f64,
    /// Die-to-package effective resistance, K/W.
    pub alpha_jump: f64,
    /// Junction time constant, s.
    pub tau_die: f64,
    /// Die footprint used for the power-density check, cm².
    pub die_area_cm2: f64,
}

impl Default for ThermalStack {
    fn default() -> Self {
        Self {
            r_ca: 56.0,
            r_jc: 6.0,
            r_jb: 40.0,
            r_ba: 14.0,
            r_sd: 0.6,
            r_dv: 0.6,
            c_pkg: 1.0,
            c_die: 1.95e-3,
            alpha_jump: 5.5,
            tau_die: 5e-3,
            // 2.5 W over this footprint is 16 W/cm².
            die_area_cm2: 0.156_25,
        }
    }
}

impl ThermalStack {
    /// Checks positivity and warns when the layer-collapse assumption is weak.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("r_ca", self.r_ca),
            ("r_jc", self.r_jc),
            ("r_jb", self.r_jb),
            ("r_ba", self.r_ba),
            ("r_sd", self.r_sd),
            ("r_dv", self.r_dv),
            ("c_pkg", self.c_pkg),
            ("c_die", self.c_die),
            ("alpha_jump", self.alpha_jump),
            ("tau_die", self.tau_die),
            ("die_area_cm2", self.die_area_cm2),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "thermal.{name} must be finite and > 0, got {v}"
                )));
            }
        }
        let termination = self.r_ca.min(self.r_jc).min(self.r_jb).min(self.r_ba);
        let inter_layer = self.r_sd.max(self.r_dv);
        static WARNED: AtomicBool = AtomicBool::new(false);
        if inter_layer * 100.0 > termination && !WARNED.swap(true, Ordering::Relaxed) {
            log::warn!(
                "inter-layer resistance {inter_layer} K/W is within two orders of magnitude \
                 of termination resistance {termination} K/W; single-node die model is approximate"
            );
        }
        Ok(())
    }

    /// Parallel combination of the case path and the board path, K/W.
    pub fn r_eff(&self) -> f64 {
        let top = self.r_jc + self.r_ca;
        let bottom = self.r_jb + self.r_ba;
        top * bottom / (top + bottom)
    }

    /// Steady-state die-to-ambient resistance including the junction offset, K/W.
    pub fn r_die_ambient(&self) -> f64 {
        self.r_eff() + self.alpha_jump
    }

    /// Package time constant `c_pkg * r_eff`, s.
    pub fn package_time_constant(&self) -> f64 {
        self.c_pkg * self.r_eff()
    }

    /// Time to realize ~98% of a junction jump.
    pub fn t_jump(&self) -> f64 {
        4.0 * self.tau_die
    }

    /// Junction time constant implied by the layer capacitances, `c_die * alpha_jump`.
    pub fn implied_tau_die(&self) -> f64 {
        self.c_die * self.alpha_jump
    }

    pub fn power_density(&self, p_near_sensor: f64) -> f64 {
        p_near_sensor / self.die_area_cm2
    }

    /// Returns the power density when it exceeds the uniform-temperature limit.
    pub fn power_density_warning(&self, p_near_sensor: f64) -> Option<f64> {
        let density = self.power_density(p_near_sensor);
        if density > UNIFORM_POWER_DENSITY_LIMIT {
            log::warn!(
                "power density {density:.1} W/cm² exceeds {UNIFORM_POWER_DENSITY_LIMIT} W/cm²; \
                 lateral gradients are not modeled"
            );
            Some(density)
        } else {
            None
        }
    }

    /// Rescales both termination branches so that the die-to-ambient resistance
    /// becomes `r_total`, keeping `alpha_jump` and the branch ratio.
    pub fn with_die_to_ambient(&self, r_total: f64) -> Result<Self> {
        let target = r_total - self.alpha_jump;
        if !(target.is_finite() && target > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "die-to-ambient resistance {r_total} K/W must exceed alpha_jump {} K/W",
                self.alpha_jump
            )));
        }
        let k = target / self.r_eff();
        Ok(Self {
            r_ca: self.r_ca * k,
            r_jc: self.r_jc * k,
            r_jb: self.r_jb * k,
            r_ba: self.r_ba * k,
            ..*self
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    /// Die (junction) temperature, °C.
    pub t_die: f64,
    /// Package temperature, °C.
    pub t_pkg: f64,
    /// Seconds since scenario start.
    pub time: f64,
}

impl ThermalState {
    pub fn at_ambient(t_ambient: f64) -> Self {
        Self {
            t_die: t_ambient,
            t_pkg: t_ambient,
            time: 0.0,
        }
    }

    /// Equilibrium under constant near-sensor power.
    pub fn steady(stack: &ThermalStack, p_near_sensor: f64, t_ambient: f64) -> Result<Self> {
        let s = steady_state(stack, p_near_sensor, t_ambient)?;
        Ok(Self {
            t_die: s.die,
            t_pkg: s.pkg,
            time: 0.0,
        })
    }

    pub fn gap(&self) -> f64 {
        self.t_die - self.t_pkg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyTemps {
    pub die: f64,
    pub pkg: f64,
}

fn check_power(p: f64) -> Result<()> {
    if !(p.is_finite() && p >= 0.0) {
        return Err(Error::Domain(format!(
            "near-sensor power must be finite and >= 0, got {p} W"
        )));
    }
    Ok(())
}

pub fn steady_state(stack: &ThermalStack, p_near_sensor: f64, t_ambient: f64) -> Result<SteadyTemps> {
    check_power(p_near_sensor)?;
    let pkg = t_ambient + p_near_sensor * stack.r_eff();
    Ok(SteadyTemps {
        die: pkg + p_near_sensor * stack.alpha_jump,
        pkg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerTemps {
    pub sensor: f64,
    pub dram: f64,
    pub vpu: f64,
}

/// Steady per-layer temperatures with the heat source in the bottom (VPU) layer.
///
/// The sensor layer is anchored to the collapsed die temperature; the DRAM and VPU
/// layers sit above it by the drop across the inter-layer resistances carried by
/// the heat leaving through the case path.
pub fn layer_temperatures(stack: &ThermalStack, p_near_sensor: f64, t_ambient: f64) -> Result<LayerTemps> {
    let die = steady_state(stack, p_near_sensor, t_ambient)?.die;
    let top = stack.r_sd + stack.r_dv + stack.r_jc + stack.r_ca;
    let bottom = stack.r_jb + stack.r_ba;
    let q_top = p_near_sensor * bottom / (top + bottom);
    let dram = die + q_top * stack.r_sd;
    Ok(LayerTemps {
        sensor: die,
        dram,
        vpu: dram + q_top * stack.r_dv,
    })
}

/// Exact update over a fixed step for piecewise-constant power.
///
/// Caches the two decay factors so the simulator can advance many substeps
/// of identical length cheaply.
#[derive(Debug, Clone, Copy)]
pub struct ExactStepper {
    stack: ThermalStack,
    dt: f64,
    pkg_decay: f64,
    gap_decay: f64,
}

impl ExactStepper {
    pub fn new(stack: &ThermalStack, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Domain(format!("dt must be > 0, got {dt}")));
        }
        Ok(Self {
            stack: *stack,
            dt,
            pkg_decay: (-dt / stack.package_time_constant()).exp(),
            gap_decay: (-dt / stack.tau_die).exp(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, state: &ThermalState, p_near_sensor: f64, t_ambient: f64) -> ThermalState {
        let pkg_target = t_ambient + p_near_sensor * self.stack.r_eff();
        let gap_target = p_near_sensor * self.stack.alpha_jump;
        let t_pkg = pkg_target + (state.t_pkg - pkg_target) * self.pkg_decay;
        let gap = gap_target + (state.gap() - gap_target) * self.gap_decay;
        ThermalState {
            t_die: t_pkg + gap,
            t_pkg,
            time: state.time + self.dt,
        }
    }
}

/// Advances the two-node model by `dt` under constant power.
pub fn transient_step(
    stack: &ThermalStack,
    state: &ThermalState,
    p_near_sensor: f64,
    t_ambient: f64,
    dt: f64,
) -> Result<ThermalState> {
    check_power(p_near_sensor)?;
    Ok(ExactStepper::new(stack, dt)?.step(state, p_near_sensor, t_ambient))
}

/// Die drop when near-sensor power falls from `p_nsp` to `p_cap`.
pub fn temperature_jump(stack: &ThermalStack, p_nsp: f64, p_cap: f64) -> Result<f64> {
    check_power(p_cap)?;
    check_power(p_nsp)?;
    if p_cap > p_nsp {
        return Err(Error::Domain(format!(
            "jump is defined for power removal; p_cap {p_cap} W > p_nsp {p_nsp} W"
        )));
    }
    Ok(stack.alpha_jump * (p_nsp - p_cap))
}

/// Portion of `full_jump` realized within `t_latency` seconds.
pub fn jump_within_latency(stack: &ThermalStack, full_jump: f64, t_latency: f64) -> Result<f64> {
    if t_latency.is_nan() || t_latency < 0.0 {
        return Err(Error::Domain(format!("latency must be >= 0, got {t_latency}")));
    }
    Ok(full_jump * (1.0 - (-t_latency / stack.tau_die).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyFit {
    /// Fitted die-to-ambient resistance, K/W.
    pub r_die_ambient: f64,
    pub ambient: f64,
    /// Root-mean-square residual of the fit, °C.
    pub rms_residual: f64,
}

/// Least-squares fit of `T = ambient + p * r` to measured steady die temperatures.
///
/// When `ambient` is known only the slope is fitted.
pub fn calibrate(pairs: &[(f64, f64)], ambient: Option<f64>) -> Result<SteadyFit> {
    if pairs.len() < 2 && ambient.is_none() {
        return Err(Error::SingularFit("need at least two (power, temperature) pairs".into()));
    }
    if pairs.is_empty() {
        return Err(Error::SingularFit("need at least one (power, temperature) pair".into()));
    }
    for &(p, t) in pairs {
        check_power(p)?;
        if !t.is_finite() {
            return Err(Error::Domain(format!("temperature must be finite, got {t}")));
        }
    }
    let n = pairs.len() as f64;
    let (r, a) = match ambient {
        Some(a) => {
            let spp: f64 = pairs.iter().map(|(p, _)| p * p).sum();
            if spp == 0.0 {
                return Err(Error::SingularFit("all powers are zero".into()));
            }
            let spt: f64 = pairs.iter().map(|(p, t)| p * (t - a)).sum();
            (spt / spp, a)
        }
        None => {
            let mean_p = pairs.iter().map(|(p, _)| p).sum::<f64>() / n;
            let mean_t = pairs.iter().map(|(_, t)| t).sum::<f64>() / n;
            let sxx: f64 = pairs.iter().map(|(p, _)| (p - mean_p).powi(2)).sum();
            if sxx <= f64::EPSILON * mean_p.abs().max(1.0) {
                return Err(Error::SingularFit("all powers are equal".into()));
            }
            let sxy: f64 = pairs.iter().map(|(p, t)| (p - mean_p) * (t - mean_t)).sum();
            let r = sxy / sxx;
            (r, mean_t - r * mean_p)
        }
    };
    let sse: f64 = pairs.iter().map(|(p, t)| (t - (a + r * p)).powi(2)).sum();
    Ok(SteadyFit {
        r_die_ambient: r,
        ambient: a,
        rms_residual: (sse / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn table_defaults() {
        let s = ThermalStack::default();
        s.validate().unwrap();
        assert_abs_diff_eq!(s.r_eff(), 62.0 * 54.0 / 116.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.r_eff(), 28.862, epsilon = 1e-3);
        assert_abs_diff_eq!(s.implied_tau_die(), 10.725e-3, epsilon = 1e-9);
        assert!(s.package_time_constant() > 28.0 && s.package_time_constant() < 34.0);
        assert_abs_diff_eq!(s.power_density(2.5), 16.0, epsilon = 1e-12);
        assert!(s.power_density_warning(2.5).is_none());
        assert!(s.power_density_warning(3.5).is_some());
    }

    #[test]
    fn rejects_non_positive_parameters() {
        let s = ThermalStack {
            c_pkg: 0.0,
            ..Default::default()
        };
        assert!(matches!(s.validate(), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn zero_power_sits_at_ambient() {
        let s = steady_state(&ThermalStack::default(), 0.0, 31.0).unwrap();
        assert_eq!(s.die, 31.0);
        assert_eq!(s.pkg, 31.0);
    }

    #[test]
    fn negative_power_is_domain_error() {
        let stack = ThermalStack::default();
        assert!(matches!(steady_state(&stack, -0.1, 25.0), Err(Error::Domain(_))));
        let st = ThermalState::at_ambient(25.0);
        assert!(transient_step(&stack, &st, -1.0, 25.0, 1e-3).is_err());
        assert!(transient_step(&stack, &st, 1.0, 25.0, 0.0).is_err());
    }

    #[test]
    fn one_watt_layer_gradients_are_small() {
        let stack = ThermalStack::default();
        let ambient = 60.7 - stack.r_die_ambient();
        let l = layer_temperatures(&stack, 1.0, ambient).unwrap();
        assert_abs_diff_eq!(l.sensor, 60.7, epsilon = 1e-9);
        assert!(l.dram > l.sensor && l.vpu > l.dram);
        assert!(l.dram - l.sensor <= 0.3);
        assert!(l.vpu - l.dram <= 0.3);
    }

    #[test]
    fn jump_arithmetic() {
        let stack = ThermalStack::default();
        assert_abs_diff_eq!(temperature_jump(&stack, 2.5, 0.1).unwrap(), 13.2, epsilon = 1e-12);
        assert_eq!(temperature_jump(&stack, 0.7, 0.7).unwrap(), 0.0);
        assert_abs_diff_eq!(temperature_jump(&stack, 1.0, 0.1).unwrap(), 4.95, epsilon = 1e-12);
        assert!(temperature_jump(&stack, 0.1, 2.5).is_err());
    }

    #[test]
    fn jump_latency_limits() {
        let stack = ThermalStack::default();
        assert_eq!(jump_within_latency(&stack, 13.2, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(jump_within_latency(&stack, 13.2, 1e3).unwrap(), 13.2, epsilon = 1e-12);
        let one_tau = jump_within_latency(&stack, 13.2, stack.tau_die).unwrap();
        assert_abs_diff_eq!(one_tau, 8.344, epsilon = 1e-3);
        let four_tau = jump_within_latency(&stack, 1.0, stack.t_jump()).unwrap();
        assert_abs_diff_eq!(four_tau, 0.98168, epsilon = 1e-5);
        assert!(jump_within_latency(&stack, 1.0, -1.0).is_err());
    }

    #[test]
    fn four_tau_step_realizes_98_percent_of_gap_change() {
        let stack = ThermalStack::default();
        let start = ThermalState::steady(&stack, 2.5, 25.0).unwrap();
        let after = transient_step(&stack, &start, 0.1, 25.0, 4.0 * stack.tau_die).unwrap();
        let realized = (start.gap() - after.gap()) / (13.75 - 0.55);
        assert_abs_diff_eq!(realized, 1.0 - (-4.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn calibrate_two_points_is_exact() {
        let fit = calibrate(&[(0.25, 34.8), (0.15, 31.4)], None).unwrap();
        assert_abs_diff_eq!(fit.r_die_ambient, 34.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.ambient, 26.3, epsilon = 1e-9);
        assert!(fit.rms_residual < 1e-9);

        let fit = calibrate(&[(0.0, 22.0), (1.0, 52.5)], None).unwrap();
        assert_abs_diff_eq!(fit.r_die_ambient, 30.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.ambient, 22.0, epsilon = 1e-12);
    }

    #[test]
    fn calibrate_known_ambient() {
        let fit = calibrate(&[(0.5, 42.0)], Some(25.0)).unwrap();
        assert_abs_diff_eq!(fit.r_die_ambient, 34.0, epsilon = 1e-12);
    }

    #[test]
    fn calibrate_singular() {
        assert!(matches!(
            calibrate(&[(0.2, 30.0), (0.2, 31.0)], None),
            Err(Error::SingularFit(_))
        ));
        assert!(matches!(calibrate(&[(0.2, 30.0)], None), Err(Error::SingularFit(_))));
    }

    #[test]
    fn rescaled_stack_matches_fit() {
        let stack = ThermalStack::default().with_die_to_ambient(34.0).unwrap();
        assert_abs_diff_eq!(stack.r_die_ambient(), 34.0, epsilon = 1e-12);
        assert!(ThermalStack::default().with_die_to_ambient(5.0).is_err());
    }
}
