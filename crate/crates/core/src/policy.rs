//! Runtime thermal policies: boundary derivation, the closed-form duty-cycle
//! schedule, and the per-frame controllers for stop-capture-go, seasonal
//! migration and full-far processing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::energy::ModePowers;
use crate::error::{Error, Result};
use crate::fidelity::{CameraSettings, NoiseModel};
use crate::thermal::{jump_within_latency, steady_state, temperature_jump, ThermalStack};

/// Handshake latency of a pre-copy migration, s.
pub const DEFAULT_SWITCH_LATENCY: f64 = 100e-6;
pub const DEFAULT_GAP: f64 = 5.0;
const GAP_SWEEP: std::ops::RangeInclusive<u32> = 1..=15;

/// Application fidelity requirements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelitySpec {
    /// Continuous vision SNR, dB.
    pub vision_snr: f64,
    /// On-demand imaging SNR, dB; `None` when no high-fidelity captures are needed.
    pub imaging_snr: Option<f64>,
    /// Deadline for an on-demand capture, s.
    pub capture_latency: f64,
}

impl Default for FidelitySpec {
    fn default() -> Self {
        Self {
            vision_snr: 16.0,
            imaging_snr: Some(26.0),
            capture_latency: 20e-3,
        }
    }
}

impl FidelitySpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(img) = self.imaging_snr {
            if img < self.vision_snr {
                return Err(Error::InvalidParameter(format!(
                    "imaging_snr ({img} dB) must be >= vision_snr ({} dB)",
                    self.vision_snr
                )));
            }
        }
        if !(self.capture_latency > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "capture_latency must be > 0, got {}",
                self.capture_latency
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundaries {
    pub t_vision: f64,
    /// `None` when on-demand imaging is not requested.
    pub t_imaging: Option<f64>,
    pub t_high: f64,
    pub t_low: f64,
}

impl Boundaries {
    pub fn gap(&self) -> f64 {
        self.t_high - self.t_low
    }

    /// Highest die temperature at which an on-demand capture is allowed.
    pub fn capture_limit(&self) -> f64 {
        self.t_imaging.unwrap_or(f64::INFINITY)
    }

    fn with_gap(&self, gap: f64) -> Self {
        Self {
            t_low: self.t_high - gap,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapStrategy {
    Fixed(f64),
    #[default]
    /// Pick the integer gap in 1..=15 °C minimizing the closed-form average power.
    MinimizePower,
}

/// Inputs that pin the boundaries besides the fidelity thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryContext<'a> {
    pub stack: &'a ThermalStack,
    pub noise: &'a NoiseModel,
    pub powers: &'a ModePowers,
    pub t_ambient: f64,
    pub gap: GapStrategy,
    /// Replaces the fidelity-derived `t_high` when set.
    pub t_high_override: Option<f64>,
    /// Energy per migration used by the gap optimizer, J.
    pub e_switch: f64,
}

pub fn derive_boundaries(spec: &FidelitySpec, settings: &CameraSettings, ctx: &BoundaryContext<'_>) -> Result<Boundaries> {
    spec.validate()?;
    let t_vision = ctx.noise.threshold_temperature(settings, spec.vision_snr)?;
    let t_imaging = spec
        .imaging_snr
        .map(|q| ctx.noise.threshold_temperature(settings, q))
        .transpose()?;
    let t_high = match (ctx.t_high_override, t_imaging) {
        (Some(t), _) => t,
        (None, None) => t_vision,
        (None, Some(t_img)) => {
            let full = temperature_jump(ctx.stack, ctx.powers.p_nsp_near_sensor, ctx.powers.p_cap_near)?;
            let reachable = jump_within_latency(ctx.stack, full, spec.capture_latency)?;
            t_vision.min(t_img + reachable)
        }
    };
    let base = Boundaries {
        t_vision,
        t_imaging,
        t_high,
        t_low: t_high - DEFAULT_GAP,
    };
    match ctx.gap {
        GapStrategy::Fixed(g) => {
            if !(g > 0.0) {
                return Err(Error::InvalidParameter(format!("gap must be > 0, got {g}")));
            }
            Ok(base.with_gap(g))
        }
        GapStrategy::MinimizePower => Ok(optimize_gap(base, ctx)),
    }
}

fn optimize_gap(base: Boundaries, ctx: &BoundaryContext<'_>) -> Boundaries {
    let cost = |b: &Boundaries| -> Option<f64> {
        let s = analytic_schedule(ctx.stack, ctx.powers, b, ctx.t_ambient).ok()?;
        average_power(s.duty_cycle, ctx.powers.p_nsp_system, ctx.powers.p_far_system, s.f_migration, ctx.e_switch).ok()
    };
    // The default gap wins ties.
    let mut best = base.with_gap(DEFAULT_GAP);
    let mut best_cost = cost(&best);
    for g in GAP_SWEEP {
        let candidate = base.with_gap(f64::from(g));
        if let Some(c) = cost(&candidate) {
            if best_cost.is_none_or(|b| c < b - 1e-12) {
                best = candidate;
                best_cost = Some(c);
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub t_warming: f64,
    pub t_cooling: f64,
    pub duty_cycle: f64,
    pub f_migration: f64,
}

/// Closed-form warming/cooling times of the hysteresis cycle between `t_low` and `t_high`.
///
/// Cooling runs in CAP mode from `t_high - T_jump` until the die is low enough
/// that resuming NSP lands it at `t_low`; warming then climbs from `t_low` to
/// `t_high` along the NSP charging curve. Each phase also pays one junction
/// settling time `4 * tau_die`.
pub fn analytic_schedule(
    stack: &ThermalStack,
    powers: &ModePowers,
    bounds: &Boundaries,
    t_ambient: f64,
) -> Result<Schedule> {
    if !(bounds.t_low < bounds.t_high) {
        return Err(Error::Schedule(format!(
            "t_low ({:.3} °C) must be below t_high ({:.3} °C)",
            bounds.t_low, bounds.t_high
        )));
    }
    let ss_nsp = steady_state(stack, powers.p_nsp_near_sensor, t_ambient)?.die;
    if ss_nsp <= bounds.t_high {
        return Ok(Schedule {
            t_warming: f64::INFINITY,
            t_cooling: 0.0,
            duty_cycle: 1.0,
            f_migration: 0.0,
        });
    }
    let ss_cap = steady_state(stack, powers.p_cap_near, t_ambient)?.die;
    let jump = temperature_jump(stack, powers.p_nsp_near_sensor, powers.p_cap_near)?;
    let rc = stack.package_time_constant();
    let t_jump = stack.t_jump();

    let cool_end = bounds.t_low - jump - ss_cap;
    if cool_end <= 0.0 {
        return Err(Error::Schedule(format!(
            "t_low - T_jump ({:.3} °C) must exceed the CAP steady-state temperature ({ss_cap:.3} °C)",
            bounds.t_low - jump
        )));
    }
    let t_warming = rc * ((ss_nsp - bounds.t_low) / (ss_nsp - bounds.t_high)).ln() + t_jump;
    let t_cooling = rc * ((bounds.t_high - jump - ss_cap) / cool_end).ln() + t_jump;
    let period = t_warming + t_cooling;
    Ok(Schedule {
        t_warming,
        t_cooling,
        duty_cycle: t_warming / period,
        f_migration: 2.0 / period,
    })
}

/// Average system power for duty cycle `d` including switching overhead.
pub fn average_power(d: f64, p_nsp_system: f64, p_cap_system: f64, f_switch: f64, e_switch: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::Domain(format!("duty cycle must lie in [0, 1], got {d}")));
    }
    Ok(d * p_nsp_system + (1.0 - d) * p_cap_system + f_switch * e_switch)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchOverhead {
    pub latency: f64,
    pub energy: f64,
}

/// Pre-copy migration: a fixed handshake latency plus both VPUs active for `overlap` seconds.
pub fn migration_handshake(overlap: f64, p_near: f64, p_far: f64) -> SwitchOverhead {
    SwitchOverhead {
        latency: DEFAULT_SWITCH_LATENCY,
        energy: overlap.max(0.0) * (p_near + p_far),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    FullFar,
    StopCaptureGo,
    SeasonalMigration,
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_far" => Ok(PolicyKind::FullFar),
            "stop_capture_go" => Ok(PolicyKind::StopCaptureGo),
            "seasonal_migration" => Ok(PolicyKind::SeasonalMigration),
            other => Err(Error::InvalidParameter(format!(
                "unknown policy `{other}` (expected full_far, stop_capture_go or seasonal_migration)"
            ))),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::FullFar => "full_far",
            PolicyKind::StopCaptureGo => "stop_capture_go",
            PolicyKind::SeasonalMigration => "seasonal_migration",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Nsp,
    Cap,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Nsp => "NSP",
            Mode::Cap => "CAP",
        }
    }
}

/// Where vision processing runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Site {
    Near,
    Far,
    /// Processing gated.
    Idle,
}

impl Site {
    pub fn as_str(&self) -> &'static str {
        match self {
            Site::Near => "near",
            Site::Far => "far",
            Site::Idle => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameAction {
    ProcessNear,
    ProcessFar,
    Drop,
    /// Frame reserved for an on-demand capture.
    Capture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub mode: Mode,
    pub site: Site,
    pub action: FrameAction,
}

impl Decision {
    /// Whether the frame reaches a vision pipeline.
    pub fn processed(&self) -> bool {
        match self.action {
            FrameAction::ProcessNear | FrameAction::ProcessFar => true,
            FrameAction::Drop => false,
            FrameAction::Capture => self.site == Site::Far,
        }
    }
}

/// What a controller sees at a frame boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameInput {
    pub time: f64,
    pub t_die: f64,
    /// Die temperature at the next frame boundary if this frame ran in NSP mode.
    pub projected_nsp_die: f64,
    /// An on-demand capture has been requested and not yet taken.
    pub pending_capture: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GatingPhase {
    Running,
    Stopped { frames: u32 },
    Capturing { frames: u32, was_stopped: bool },
}

/// Clock-gates the near-sensor VPU and DRAM for whole frames.
#[derive(Debug, Clone)]
pub struct StopCaptureGo {
    stop_frames: u32,
    phase: GatingPhase,
}

impl StopCaptureGo {
    pub fn new(stop_frames: u32) -> Self {
        Self {
            stop_frames: stop_frames.max(1),
            phase: GatingPhase::Running,
        }
    }

    pub fn step(&mut self, input: &FrameInput, bounds: &Boundaries) -> Decision {
        use GatingPhase::*;
        self.phase = match self.phase {
            Running if input.pending_capture => Capturing {
                frames: 0,
                was_stopped: false,
            },
            Running if input.projected_nsp_die >= bounds.t_high => Stopped { frames: 0 },
            Stopped { frames } if frames >= self.stop_frames && input.projected_nsp_die <= bounds.t_low => Running,
            Capturing { frames, was_stopped } if !input.pending_capture && frames >= self.stop_frames => {
                if was_stopped || input.projected_nsp_die >= bounds.t_high {
                    Stopped { frames }
                } else {
                    Running
                }
            }
            other => other,
        };
        let decision = match self.phase {
            Running => Decision {
                mode: Mode::Nsp,
                site: Site::Near,
                action: FrameAction::ProcessNear,
            },
            Stopped { .. } | Capturing { .. } => Decision {
                mode: Mode::Cap,
                site: Site::Idle,
                action: if input.pending_capture {
                    FrameAction::Capture
                } else {
                    FrameAction::Drop
                },
            },
        };
        match &mut self.phase {
            Stopped { frames } | Capturing { frames, .. } => *frames += 1,
            Running => {}
        }
        decision
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MigrationPhase {
    Efficiency,
    Cooling,
}

/// Alternates processing between the in-stack VPU and the SoC VPU.
#[derive(Debug, Clone)]
pub struct SeasonalMigration {
    phase: MigrationPhase,
}

impl Default for SeasonalMigration {
    fn default() -> Self {
        Self {
            phase: MigrationPhase::Efficiency,
        }
    }
}

impl SeasonalMigration {
    pub fn step(&mut self, input: &FrameInput, bounds: &Boundaries) -> Decision {
        use MigrationPhase::*;
        self.phase = match self.phase {
            _ if input.pending_capture => Cooling,
            Efficiency if input.projected_nsp_die >= bounds.t_high => Cooling,
            Cooling if input.projected_nsp_die <= bounds.t_low => Efficiency,
            p => p,
        };
        match self.phase {
            Efficiency => Decision {
                mode: Mode::Nsp,
                site: Site::Near,
                action: FrameAction::ProcessNear,
            },
            Cooling => Decision {
                mode: Mode::Cap,
                site: Site::Far,
                action: if input.pending_capture {
                    FrameAction::Capture
                } else {
                    FrameAction::ProcessFar
                },
            },
        }
    }
}

/// Per-frame controller for any of the three policies.
#[derive(Debug, Clone)]
pub enum Controller {
    FullFar,
    StopCaptureGo(StopCaptureGo),
    SeasonalMigration(SeasonalMigration),
}

impl Controller {
    pub fn new(kind: PolicyKind, stop_frames: u32) -> Self {
        match kind {
            PolicyKind::FullFar => Controller::FullFar,
            PolicyKind::StopCaptureGo => Controller::StopCaptureGo(StopCaptureGo::new(stop_frames)),
            PolicyKind::SeasonalMigration => Controller::SeasonalMigration(SeasonalMigration::default()),
        }
    }

    pub fn step(&mut self, input: &FrameInput, bounds: &Boundaries) -> Decision {
        match self {
            Controller::FullFar => Decision {
                mode: Mode::Cap,
                site: Site::Far,
                action: if input.pending_capture {
                    FrameAction::Capture
                } else {
                    FrameAction::ProcessFar
                },
            },
            Controller::StopCaptureGo(c) => c.step(input, bounds),
            Controller::SeasonalMigration(c) => c.step(input, bounds),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn powers(p_nsp: f64) -> ModePowers {
        ModePowers {
            p_nsp_system: p_nsp,
            p_far_system: 2.67,
            p_nsp_near_sensor: p_nsp,
            p_cap_near: 0.1,
            p_sensing: 0.04,
        }
    }

    fn bounds(t_high: f64, t_low: f64) -> Boundaries {
        Boundaries {
            t_vision: t_high,
            t_imaging: None,
            t_high,
            t_low,
        }
    }

    fn input(t_die: f64, projected: f64, pending: bool) -> FrameInput {
        FrameInput {
            time: 0.0,
            t_die,
            projected_nsp_die: projected,
            pending_capture: pending,
        }
    }

    #[test]
    fn eq3_values() {
        assert_eq!(average_power(1.0, 1.34, 2.67, 0.0, 0.3).unwrap(), 1.34);
        assert_abs_diff_eq!(average_power(0.77, 1.34, 2.67, 0.0, 0.0).unwrap(), 1.6459, epsilon = 1e-9);
        let e = migration_handshake(100e-6, 1.34, 2.67).energy;
        let with = average_power(0.77, 1.34, 2.67, 1.0, e).unwrap();
        assert!(with - 1.6459 < 1e-3);
        assert!(average_power(1.2, 1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn handshake() {
        let h = migration_handshake(0.0, 1.0, 3.0);
        assert_eq!(h.latency, 100e-6);
        assert_eq!(h.energy, 0.0);
        assert_abs_diff_eq!(migration_handshake(100e-6, 1.0, 3.0).energy, 0.4e-3, epsilon = 1e-15);
    }

    #[test]
    fn schedule_saturates_below_boundary() {
        let stack = ThermalStack::default();
        let s = analytic_schedule(&stack, &powers(0.5), &bounds(80.0, 75.0), 25.0).unwrap();
        assert_eq!(s.duty_cycle, 1.0);
        assert_eq!(s.f_migration, 0.0);
    }

    #[test]
    fn symmetric_schedule_is_half_duty() {
        // With no CAP residual and no junction jump the cycle is symmetric when
        // the boundaries sit symmetrically between the two steady states.
        let stack = ThermalStack {
            alpha_jump: 1e-12,
            ..Default::default()
        };
        let p = ModePowers {
            p_cap_near: 0.0,
            ..powers(2.0)
        };
        let ss_nsp = 25.0 + 2.0 * stack.r_die_ambient();
        let mid = 0.5 * (ss_nsp + 25.0);
        let s = analytic_schedule(&stack, &p, &bounds(mid + 3.0, mid - 3.0), 25.0).unwrap();
        assert_abs_diff_eq!(s.t_warming, s.t_cooling, epsilon = 1e-6);
        assert_abs_diff_eq!(s.duty_cycle, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn schedule_configuration_errors() {
        let stack = ThermalStack::default();
        assert!(matches!(
            analytic_schedule(&stack, &powers(2.5), &bounds(60.0, 60.0), 25.0),
            Err(Error::Schedule(_))
        ));
        // t_low - T_jump below the CAP steady state: cooling never completes.
        assert!(matches!(
            analytic_schedule(&stack, &powers(2.5), &bounds(40.0, 35.0), 25.0),
            Err(Error::Schedule(_))
        ));
    }

    #[test]
    fn latency_shrinks_reachable_margin() {
        let stack = ThermalStack::default();
        let noise = NoiseModel::default();
        let p = powers(2.5);
        let settings = CameraSettings::for_lux(320.0).unwrap();
        let mk = |latency: f64| {
            let spec = FidelitySpec {
                vision_snr: 16.0,
                imaging_snr: Some(35.0),
                capture_latency: latency,
            };
            let ctx = BoundaryContext {
                stack: &stack,
                noise: &noise,
                powers: &p,
                t_ambient: 25.0,
                gap: GapStrategy::Fixed(5.0),
                t_high_override: None,
                e_switch: 0.0,
            };
            derive_boundaries(&spec, &settings, &ctx).unwrap()
        };
        let b = mk(20e-3);
        let t_img = b.t_imaging.unwrap();
        assert_abs_diff_eq!(b.t_high - t_img, 13.2 * (1.0 - (-4.0f64).exp()), epsilon = 1e-9);
        assert_abs_diff_eq!(b.t_high - t_img, 12.958, epsilon = 1e-3);
        let slow = mk(10.0);
        assert_abs_diff_eq!(slow.t_high, (t_img + 13.2).min(slow.t_vision), epsilon = 1e-9);
        assert_abs_diff_eq!(b.gap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn dont_care_imaging_uses_vision_bound() {
        let stack = ThermalStack::default();
        let noise = NoiseModel::default();
        let p = powers(1.5);
        let settings = CameraSettings::for_lux(320.0).unwrap();
        let spec = FidelitySpec {
            imaging_snr: None,
            ..Default::default()
        };
        let ctx = BoundaryContext {
            stack: &stack,
            noise: &noise,
            powers: &p,
            t_ambient: 25.0,
            gap: GapStrategy::MinimizePower,
            t_high_override: None,
            e_switch: 0.0,
        };
        let b = derive_boundaries(&spec, &settings, &ctx).unwrap();
        assert_eq!(b.t_high, b.t_vision);
    }

    #[test]
    fn imaging_below_vision_rejected() {
        let spec = FidelitySpec {
            vision_snr: 26.0,
            imaging_snr: Some(20.0),
            capture_latency: 0.02,
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn migration_hysteresis() {
        let b = bounds(60.0, 55.0);
        let mut c = SeasonalMigration::default();
        assert_eq!(c.step(&input(50.0, 59.0, false), &b).mode, Mode::Nsp);
        // ≥ t_high triggers cooling.
        assert_eq!(c.step(&input(59.5, 60.0, false), &b).site, Site::Far);
        assert_eq!(c.step(&input(50.0, 56.0, false), &b).site, Site::Far);
        // ≤ t_low resumes.
        assert_eq!(c.step(&input(49.0, 55.0, false), &b).site, Site::Near);
        // On-demand capture forces cooling regardless of temperature.
        let d = c.step(&input(30.0, 35.0, true), &b);
        assert_eq!((d.mode, d.action), (Mode::Cap, FrameAction::Capture));
        assert!(d.processed());
    }

    #[test]
    fn gating_never_stops_below_boundary() {
        let b = bounds(80.0, 75.0);
        let mut c = StopCaptureGo::new(1);
        for _ in 0..100 {
            let d = c.step(&input(60.0, 61.0, false), &b);
            assert_eq!(d.action, FrameAction::ProcessNear);
        }
    }

    #[test]
    fn gating_stops_whole_frames() {
        let b = bounds(60.0, 55.0);
        let mut c = StopCaptureGo::new(3);
        assert_eq!(c.step(&input(59.0, 60.0, false), &b).action, FrameAction::Drop);
        // Cool enough already, but the stop lasts three frames.
        assert_eq!(c.step(&input(40.0, 50.0, false), &b).action, FrameAction::Drop);
        assert_eq!(c.step(&input(40.0, 50.0, false), &b).action, FrameAction::Drop);
        assert_eq!(c.step(&input(40.0, 50.0, false), &b).action, FrameAction::ProcessNear);
    }

    #[test]
    fn gating_capture_resumes_when_cool() {
        let b = bounds(60.0, 55.0);
        let mut c = StopCaptureGo::new(1);
        let d = c.step(&input(50.0, 51.0, true), &b);
        assert_eq!(d.action, FrameAction::Capture);
        assert!(!d.processed());
        assert_eq!(c.step(&input(45.0, 51.0, false), &b).action, FrameAction::ProcessNear);
    }

    #[test]
    fn policy_names_round_trip() {
        for k in [PolicyKind::FullFar, PolicyKind::StopCaptureGo, PolicyKind::SeasonalMigration] {
            assert_eq!(k.to_string().parse::<PolicyKind>().unwrap(), k);
        }
        assert!("heat_and_run".parse::<PolicyKind>().is_err());
    }
}
