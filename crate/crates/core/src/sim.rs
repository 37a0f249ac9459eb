//! Fixed-step scenario engine.
//!
//! The controller is ticked once per frame; the thermal state advances in
//! `ceil(frame_period / (tau_die / 5))` equal substeps per frame so the
//! junction jump is resolved. Every substep produces one trace row.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyTable, ModePowers, PowerProfile};
use crate::error::{Error, Result};
use crate::fidelity::{CameraSettings, NoiseModel};
use crate::policy::{
    derive_boundaries, migration_handshake, Boundaries, BoundaryContext, Controller, Decision, FidelitySpec,
    FrameInput, GapStrategy, Mode, PolicyKind, Site, DEFAULT_SWITCH_LATENCY,
};
use crate::thermal::{ExactStepper, ThermalStack, ThermalState};

pub const DEFAULT_FRAME_PERIOD: f64 = 1.0 / 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub gap: GapStrategy,
    /// Minimum stop length for stop-capture-go, frames.
    pub stop_frames: u32,
    /// Manual boundary placement; replaces the fidelity-derived `t_high`.
    pub t_high_override: Option<f64>,
    /// Dual-active window of a migration, s.
    pub switch_overlap: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::SeasonalMigration,
            gap: GapStrategy::MinimizePower,
            stop_frames: 1,
            t_high_override: None,
            switch_overlap: DEFAULT_SWITCH_LATENCY,
        }
    }
}

/// A fully resolved simulation input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub duration: f64,
    pub frame_period: f64,
    pub workload: PowerProfile,
    pub policy: PolicyConfig,
    pub fidelity: FidelitySpec,
    /// Piecewise-constant (time s, °C); the first value also applies before its time.
    pub ambient_trace: Vec<(f64, f64)>,
    /// Piecewise-constant (time s, lux).
    pub lighting_trace: Vec<(f64, f64)>,
    /// Explicit on-demand capture requests, s.
    pub triggers: Vec<f64>,
    /// Mean rate of additional random triggers, Hz.
    pub trigger_rate: Option<f64>,
    pub rng_seed: u64,
    pub thermal: ThermalStack,
    pub energy: EnergyTable,
    pub noise: NoiseModel,
}

impl Scenario {
    /// A scenario with default models and constant conditions.
    pub fn new(workload: PowerProfile, kind: PolicyKind) -> Self {
        Self {
            duration: 120.0,
            frame_period: DEFAULT_FRAME_PERIOD,
            workload,
            policy: PolicyConfig {
                kind,
                ..Default::default()
            },
            fidelity: FidelitySpec::default(),
            ambient_trace: vec![(0.0, 25.0)],
            lighting_trace: vec![(0.0, 320.0)],
            triggers: Vec::new(),
            trigger_rate: None,
            rng_seed: 0,
            thermal: ThermalStack::default(),
            energy: EnergyTable::default(),
            noise: NoiseModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidParameter(format!("duration must be > 0, got {}", self.duration)));
        }
        if !(self.frame_period > 0.0 && self.frame_period <= self.duration) {
            return Err(Error::InvalidParameter(format!(
                "frame_period must be in (0, duration], got {}",
                self.frame_period
            )));
        }
        for (name, trace) in [("ambient_trace", &self.ambient_trace), ("lighting_trace", &self.lighting_trace)] {
            if trace.is_empty() {
                return Err(Error::InvalidParameter(format!("{name} is empty")));
            }
            if trace.windows(2).any(|w| w[1].0 < w[0].0) {
                return Err(Error::InvalidParameter(format!("{name} must be sorted by time")));
            }
        }
        if let Some(&(t, lux)) = self.lighting_trace.iter().find(|(_, lux)| !(*lux > 0.0)) {
            return Err(Error::InvalidParameter(format!("lighting_trace at {t} s: {lux} lux must be > 0")));
        }
        if let Some(t) = self.triggers.iter().find(|t| !(0.0..=self.duration).contains(*t)) {
            return Err(Error::InvalidParameter(format!("trigger at {t} s lies outside the scenario")));
        }
        if let Some(rate) = self.trigger_rate {
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(Error::InvalidParameter(format!("trigger_rate must be >= 0, got {rate}")));
            }
        }
        if !(self.policy.switch_overlap >= 0.0) {
            return Err(Error::InvalidParameter("switch_overlap must be >= 0".into()));
        }
        self.thermal.validate()?;
        self.energy.validate()?;
        self.noise.validate()?;
        self.workload.validate()?;
        self.fidelity.validate()
    }

    pub fn ambient_at(&self, t: f64) -> f64 {
        piecewise(&self.ambient_trace, t)
    }

    pub fn lux_at(&self, t: f64) -> f64 {
        piecewise(&self.lighting_trace, t)
    }

    pub fn mode_powers(&self) -> Result<ModePowers> {
        ModePowers::from_profile(&self.energy, &self.workload)
    }

    /// Explicit triggers merged with the seeded random ones, sorted.
    pub fn trigger_times(&self) -> Vec<f64> {
        let mut out = self.triggers.clone();
        if let Some(rate) = self.trigger_rate.filter(|r| *r > 0.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
            let mut t = 0.0;
            loop {
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                t += -u.ln() / rate;
                if t > self.duration {
                    break;
                }
                out.push(t);
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }

    /// Boundaries in effect under the given conditions.
    pub fn boundaries(&self, t_ambient: f64, lux: f64) -> Result<Boundaries> {
        let powers = self.mode_powers()?;
        let settings = CameraSettings::for_lux(lux)?;
        let e_switch = migration_handshake(self.policy.switch_overlap, powers.p_nsp_system, powers.p_far_system).energy;
        let ctx = BoundaryContext {
            stack: &self.thermal,
            noise: &self.noise,
            powers: &powers,
            t_ambient,
            gap: self.policy.gap,
            t_high_override: self.policy.t_high_override,
            e_switch,
        };
        derive_boundaries(&self.fidelity, &settings, &ctx)
    }
}

fn piecewise(trace: &[(f64, f64)], t: f64) -> f64 {
    let idx = trace.partition_point(|(time, _)| *time <= t);
    trace[idx.saturating_sub(1)].1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    BoundaryUpdate,
    ToCap,
    ToNsp,
    Trigger,
    Capture,
}

impl Event {
    pub fn as_str(&self) -> &'static str {
        match self {
            Event::BoundaryUpdate => "boundary_update",
            Event::ToCap => "to_cap",
            Event::ToNsp => "to_nsp",
            Event::Trigger => "trigger",
            Event::Capture => "capture",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// End of the substep, s.
    pub time: f64,
    pub mode: Mode,
    pub site: Site,
    pub t_die: f64,
    pub t_pkg: f64,
    /// Mean system power over the substep, W.
    pub p_system: f64,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureRecord {
    pub time: f64,
    pub trigger_time: f64,
    pub t_die: f64,
    pub snr_db: f64,
}

impl CaptureRecord {
    pub fn latency(&self) -> f64 {
        self.time - self.trigger_time
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRecord {
    pub time: f64,
    pub t_vision: f64,
    pub t_imaging: Option<f64>,
    pub t_high: f64,
    pub t_low: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub avg_power_w: f64,
    pub duty_cycle: f64,
    pub migrations_per_s: f64,
    pub frames_total: u64,
    pub frames_dropped: u64,
    pub captures: Vec<CaptureRecord>,
    pub boundaries: Vec<BoundaryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTrace {
    pub rows: Vec<TraceRow>,
    pub metrics: Metrics,
    /// Triggers that were never served.
    pub unserved_triggers: Vec<f64>,
}

/// A maximal run of one mode between two switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseInterval {
    pub mode: Mode,
    pub start: f64,
    pub end: f64,
}

impl PhaseInterval {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }
}

/// Duty cycle and switching rate measured over whole cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    pub duty_cycle: f64,
    pub f_migration: f64,
    pub cycles: usize,
    pub start: f64,
    pub end: f64,
}

impl ScenarioTrace {
    /// Mode intervals bounded by switches on both sides.
    pub fn phase_intervals(&self) -> Vec<PhaseInterval> {
        let mut out = Vec::new();
        let mut start: Option<(Mode, f64)> = None;
        let mut prev_end = 0.0;
        let mut prev_mode: Option<Mode> = None;
        for row in &self.rows {
            if prev_mode.is_some_and(|m| m != row.mode) {
                if let Some((mode, s)) = start {
                    out.push(PhaseInterval { mode, start: s, end: prev_end });
                }
                start = Some((row.mode, prev_end));
            }
            prev_mode = Some(row.mode);
            prev_end = row.time;
        }
        out
    }

    /// Statistics between the first and last NSP→CAP switch.
    pub fn cycle_stats(&self) -> Option<CycleStats> {
        self.cycle_stats_between(f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Like [`Self::cycle_stats`] but only over cycles lying inside `[from, to]`.
    pub fn cycle_stats_between(&self, from: f64, to: f64) -> Option<CycleStats> {
        let phases: Vec<_> = self
            .phase_intervals()
            .into_iter()
            .filter(|p| p.start >= from && p.end <= to)
            .collect();
        let first = phases.iter().position(|p| p.mode == Mode::Cap)?;
        let last = phases.iter().rposition(|p| p.mode == Mode::Nsp)?;
        if last <= first {
            return None;
        }
        let window = &phases[first..=last];
        let cycles = window.len() / 2;
        if cycles == 0 {
            return None;
        }
        let start = window[0].start;
        let end = window[window.len() - 1].end;
        let nsp: f64 = window.iter().filter(|p| p.mode == Mode::Nsp).map(PhaseInterval::len).sum();
        Some(CycleStats {
            duty_cycle: nsp / (end - start),
            f_migration: 2.0 * cycles as f64 / (end - start),
            cycles,
            start,
            end,
        })
    }
}

struct FramePower {
    heat: f64,
    system: f64,
}

fn frame_power(kind: PolicyKind, d: &Decision, p: &ModePowers) -> FramePower {
    match (d.mode, d.site) {
        (Mode::Nsp, _) => FramePower {
            heat: p.p_nsp_near_sensor,
            system: p.p_nsp_system,
        },
        (Mode::Cap, Site::Far) if kind == PolicyKind::FullFar => FramePower {
            heat: p.p_sensing,
            system: p.p_far_system,
        },
        (Mode::Cap, Site::Far) => FramePower {
            heat: p.p_cap_near,
            system: p.p_far_system,
        },
        (Mode::Cap, _) => FramePower {
            heat: p.p_cap_near,
            system: p.p_cap_near,
        },
    }
}

struct Engine<'a> {
    scenario: &'a Scenario,
    powers: ModePowers,
    e_switch: f64,
    state: ThermalState,
    rows: Vec<TraceRow>,
    energy: f64,
    nsp_time: f64,
    pending: VecDeque<f64>,
    upcoming: VecDeque<f64>,
    captures: Vec<CaptureRecord>,
}

impl Engine<'_> {
    /// Advances one substep under a fixed decision.
    #[allow(clippy::too_many_arguments)]
    fn substep(&mut self, stepper: &ExactStepper, end_time: f64, decision: &Decision, power: &FramePower, bounds: &Boundaries, extra_energy: f64, mut events: Vec<Event>) {
        let dt = stepper.dt();
        let prev = self.state;
        let ambient = self.scenario.ambient_at(prev.time);
        let mut next = stepper.step(&prev, power.heat, ambient);
        next.time = end_time;
        self.state = next;

        while self.upcoming.front().is_some_and(|t| *t <= end_time) {
            self.pending.extend(self.upcoming.pop_front());
            events.push(Event::Trigger);
        }
        if decision.mode == Mode::Cap {
            self.try_capture(&prev, bounds, &mut events);
        }

        let p_row = power.system + extra_energy / dt;
        self.energy += p_row * dt;
        if decision.mode == Mode::Nsp {
            self.nsp_time += dt;
        }
        self.rows.push(TraceRow {
            time: end_time,
            mode: decision.mode,
            site: decision.site,
            t_die: next.t_die,
            t_pkg: next.t_pkg,
            p_system: p_row,
            events,
        });
    }

    fn try_capture(&mut self, prev: &ThermalState, bounds: &Boundaries, events: &mut Vec<Event>) {
        let Some(&trigger) = self.pending.front() else {
            return;
        };
        let limit = bounds.capture_limit();
        let cur = self.state;
        if cur.t_die > limit {
            return;
        }
        // Earliest instant in this substep at which the die is cool enough.
        let t_start = prev.time.max(trigger);
        let die_at = |t: f64| prev.t_die + (cur.t_die - prev.t_die) * (t - prev.time) / (cur.time - prev.time);
        let (time, t_die) = if die_at(t_start) <= limit {
            (t_start, die_at(t_start))
        } else {
            let frac = (prev.t_die - limit) / (prev.t_die - cur.t_die);
            (prev.time + frac * (cur.time - prev.time), limit)
        };
        let lux = self.scenario.lux_at(time);
        let snr_db = CameraSettings::for_lux(lux)
            .and_then(|s| self.scenario.noise.snr_db(&s, t_die))
            .unwrap_or(f64::NAN);
        self.pending.pop_front();
        self.captures.push(CaptureRecord {
            time,
            trigger_time: trigger,
            t_die,
            snr_db,
        });
        events.push(Event::Capture);
    }
}

pub fn run(scenario: &Scenario) -> Result<ScenarioTrace> {
    scenario.validate()?;
    let powers = scenario.mode_powers()?;
    scenario.thermal.power_density_warning(powers.p_nsp_near_sensor);
    let kind = scenario.policy.kind;
    let e_switch = if kind == PolicyKind::SeasonalMigration {
        migration_handshake(scenario.policy.switch_overlap, powers.p_nsp_system, powers.p_far_system).energy
    } else {
        0.0
    };

    let fp = scenario.frame_period;
    let substeps = (fp / (scenario.thermal.tau_die / 5.0)).ceil().max(1.0) as usize;
    let dt = fp / substeps as f64;
    let stepper = ExactStepper::new(&scenario.thermal, dt)?;
    let projector = ExactStepper::new(&scenario.thermal, fp)?;
    let frames_total = ((scenario.duration / fp) * (1.0 + 1e-12)).floor() as u64;

    let mut engine = Engine {
        scenario,
        powers,
        e_switch,
        state: ThermalState::at_ambient(scenario.ambient_at(0.0)),
        rows: Vec::with_capacity(frames_total as usize * substeps + substeps),
        energy: 0.0,
        nsp_time: 0.0,
        pending: VecDeque::new(),
        upcoming: scenario.trigger_times().into(),
        captures: Vec::new(),
    };
    let mut controller = Controller::new(kind, scenario.policy.stop_frames);
    let mut boundary_log: Vec<BoundaryRecord> = Vec::new();
    let mut conditions: Option<(f64, f64)> = None;
    let mut bounds: Option<Boundaries> = None;
    let mut last_mode: Option<Mode> = None;
    let mut switches = 0u64;
    let mut dropped = 0u64;
    let mut decision = Decision {
        mode: Mode::Nsp,
        site: Site::Near,
        action: crate::policy::FrameAction::ProcessNear,
    };

    for k in 0..frames_total {
        let t = k as f64 * fp;
        let mut events = Vec::new();
        let now = (scenario.ambient_at(t), scenario.lux_at(t));
        if conditions != Some(now) {
            let b = scenario.boundaries(now.0, now.1).map_err(|e| match e {
                Error::InfeasibleFidelity(msg) => {
                    Error::InfeasibleFidelity(format!("at t = {t:.3} s (ambient {} °C, {} lux): {msg}", now.0, now.1))
                }
                other => other,
            })?;
            boundary_log.push(BoundaryRecord {
                time: t,
                t_vision: b.t_vision,
                t_imaging: b.t_imaging,
                t_high: b.t_high,
                t_low: b.t_low,
            });
            if conditions.is_some() {
                events.push(Event::BoundaryUpdate);
            }
            conditions = Some(now);
            bounds = Some(b);
        }
        let b = bounds.expect("boundaries set above");

        let projected = projector.step(&engine.state, engine.powers.p_nsp_near_sensor, now.0).t_die;
        let input = FrameInput {
            time: t,
            t_die: engine.state.t_die,
            projected_nsp_die: projected,
            pending_capture: !engine.pending.is_empty(),
        };
        decision = controller.step(&input, &b);
        let mut extra = 0.0;
        if let Some(prev) = last_mode {
            if prev != decision.mode {
                switches += 1;
                extra = engine.e_switch;
                events.push(if decision.mode == Mode::Cap { Event::ToCap } else { Event::ToNsp });
            }
        }
        last_mode = Some(decision.mode);
        if !decision.processed() {
            dropped += 1;
        }
        let power = frame_power(kind, &decision, &engine.powers);
        for j in 0..substeps {
            let end = if j + 1 == substeps { (k + 1) as f64 * fp } else { t + (j + 1) as f64 * dt };
            let ev = if j == 0 { std::mem::take(&mut events) } else { Vec::new() };
            engine.substep(&stepper, end, &decision, &power, &b, if j == 0 { extra } else { 0.0 }, ev);
        }
    }

    // Tail shorter than a frame: the last decision holds, no frame is counted.
    let tail_start = frames_total as f64 * fp;
    let tail = scenario.duration - tail_start;
    if tail > 1e-9 * fp {
        let n = (tail / dt).ceil().max(1.0) as usize;
        let tail_stepper = ExactStepper::new(&scenario.thermal, tail / n as f64)?;
        let power = frame_power(kind, &decision, &engine.powers);
        let b = bounds.expect("at least one frame");
        for j in 0..n {
            let end = if j + 1 == n { scenario.duration } else { tail_start + (j + 1) as f64 * tail_stepper.dt() };
            engine.substep(&tail_stepper, end, &decision, &power, &b, 0.0, Vec::new());
        }
    }

    let total = scenario.duration;
    let unserved = engine.pending.iter().chain(engine.upcoming.iter()).copied().collect();
    Ok(ScenarioTrace {
        metrics: Metrics {
            avg_power_w: engine.energy / total,
            duty_cycle: engine.nsp_time / total,
            migrations_per_s: switches as f64 / total,
            frames_total,
            frames_dropped: dropped,
            captures: engine.captures,
            boundaries: boundary_log,
        },
        rows: engine.rows,
        unserved_triggers: unserved,
    })
}

/// Header of the trace CSV.
pub const TRACE_HEADER: &str = "time_s,mode,site,t_die_c,t_pkg_c,p_system_w,event";

impl TraceRow {
    /// Events joined with `;`, empty when none.
    pub fn event_label(&self) -> String {
        self.events.iter().map(Event::as_str).collect::<Vec<_>>().join(";")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "time_s": self.time,
            "mode": self.mode.as_str(),
            "site": self.site.as_str(),
            "t_die_c": self.t_die,
            "t_pkg_c": self.t_pkg,
            "p_system_w": self.p_system,
            "event": self.event_label(),
        })
    }
}

impl ScenarioTrace {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{:.6},{},{},{:.4},{:.4},{:.6},{}",
                r.time,
                r.mode.as_str(),
                r.site.as_str(),
                r.t_die,
                r.t_pkg,
                r.p_system,
                r.event_label()
            )?;
        }
        Ok(())
    }

    pub fn write_json<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        let rows: Vec<_> = self.rows.iter().map(TraceRow::to_json).collect();
        serde_json::to_writer(out, &rows).map_err(std::io::Error::other)
    }
}

impl Metrics {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("metrics serialize to JSON")
    }

    /// Scalar metrics in a fixed order, for long-format tables.
    pub fn scalars(&self) -> [(&'static str, f64); 6] {
        [
            ("avg_power_w", self.avg_power_w),
            ("duty_cycle", self.duty_cycle),
            ("migrations_per_s", self.migrations_per_s),
            ("frames_total", self.frames_total as f64),
            ("frames_dropped", self.frames_dropped as f64),
            ("captures", self.captures.len() as f64),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NspPower,
    FidelitySnr,
    Ambient,
    Gap,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nsp_power" => Ok(SweepAxis::NspPower),
            "fidelity_snr" => Ok(SweepAxis::FidelitySnr),
            "ambient" => Ok(SweepAxis::Ambient),
            "gap" => Ok(SweepAxis::Gap),
            other => Err(Error::InvalidParameter(format!(
                "unknown sweep axis `{other}` (expected nsp_power, fidelity_snr, ambient or gap)"
            ))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::NspPower => "nsp_power",
            SweepAxis::FidelitySnr => "fidelity_snr",
            SweepAxis::Ambient => "ambient",
            SweepAxis::Gap => "gap",
        })
    }
}

/// One point on a sweep axis. `None` is only meaningful for `fidelity_snr` (no on-demand imaging).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AxisValue {
    Value(f64),
    None,
}

impl fmt::Display for AxisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisValue::Value(v) => write!(f, "{v}"),
            AxisValue::None => f.write_str("none"),
        }
    }
}

impl SweepAxis {
    pub fn apply(&self, base: &Scenario, value: AxisValue) -> Result<Scenario> {
        let mut s = base.clone();
        match (self, value) {
            (SweepAxis::FidelitySnr, v) => {
                s.fidelity.imaging_snr = match v {
                    AxisValue::Value(q) => Some(q),
                    AxisValue::None => None,
                }
            }
            (_, AxisValue::None) => {
                return Err(Error::InvalidParameter(format!("axis {self} needs a numeric value")));
            }
            (SweepAxis::NspPower, AxisValue::Value(p)) => s.workload.nsp_power_override = Some(p),
            (SweepAxis::Ambient, AxisValue::Value(a)) => s.ambient_trace = vec![(0.0, a)],
            (SweepAxis::Gap, AxisValue::Value(g)) => s.policy.gap = GapStrategy::Fixed(g),
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub value: AxisValue,
    pub metrics: Result<Metrics>,
}

/// Runs one scenario per axis value in parallel; results keep the input order.
pub fn sweep(base: &Scenario, axis: SweepAxis, values: &[AxisValue]) -> Vec<SweepCell> {
    values
        .par_iter()
        .map(|&value| SweepCell {
            value,
            metrics: axis.apply(base, value).and_then(|s| run(&s)).map(|t| t.metrics),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn resnet(kind: PolicyKind) -> Scenario {
        Scenario::new(presets::workload("resnet50").unwrap(), kind)
    }

    #[test]
    fn piecewise_lookup() {
        let tr = [(0.0, 20.0), (10.0, 30.0), (20.0, 40.0)];
        assert_eq!(piecewise(&tr, -1.0), 20.0);
        assert_eq!(piecewise(&tr, 9.99), 20.0);
        assert_eq!(piecewise(&tr, 10.0), 30.0);
        assert_eq!(piecewise(&tr, 100.0), 40.0);
    }

    #[test]
    fn frame_accounting() {
        let mut s = resnet(PolicyKind::FullFar);
        s.duration = 10.01;
        let tr = run(&s).unwrap();
        assert_eq!(tr.metrics.frames_total, 300);
        assert_eq!(tr.metrics.frames_dropped, 0);
        assert!((tr.rows.last().unwrap().time - 10.01).abs() < 1e-12);
    }

    #[test]
    fn energy_bookkeeping_matches_rows() {
        let mut s = resnet(PolicyKind::SeasonalMigration);
        s.policy.t_high_override = Some(50.0);
        s.duration = 60.0;
        let tr = run(&s).unwrap();
        let mut prev = 0.0;
        let integral: f64 = tr
            .rows
            .iter()
            .map(|r| {
                let e = r.p_system * (r.time - prev);
                prev = r.time;
                e
            })
            .sum();
        let rel = (integral / s.duration - tr.metrics.avg_power_w).abs() / tr.metrics.avg_power_w;
        assert!(rel < 1e-9, "relative mismatch {rel}");
    }

    #[test]
    fn rejects_unsorted_trace_and_late_trigger() {
        let mut s = resnet(PolicyKind::FullFar);
        s.ambient_trace = vec![(5.0, 20.0), (1.0, 30.0)];
        assert!(run(&s).is_err());
        let mut s = resnet(PolicyKind::FullFar);
        s.triggers = vec![s.duration + 1.0];
        assert!(run(&s).is_err());
    }

    #[test]
    fn seeded_triggers_are_reproducible() {
        let mut s = resnet(PolicyKind::FullFar);
        s.trigger_rate = Some(0.5);
        s.rng_seed = 11;
        let a = s.trigger_times();
        assert_eq!(a, s.trigger_times());
        assert!(!a.is_empty());
        s.rng_seed = 12;
        assert_ne!(a, s.trigger_times());
    }

    #[test]
    fn infeasible_fidelity_names_time() {
        let mut s = resnet(PolicyKind::SeasonalMigration);
        s.duration = 10.0;
        s.lighting_trace = vec![(0.0, 320.0), (5.0, 3.2)];
        s.fidelity.imaging_snr = Some(35.0);
        match run(&s) {
            Err(Error::InfeasibleFidelity(msg)) => assert!(msg.contains("t = 5.0"), "{msg}"),
            other => panic!("expected infeasible fidelity, got {other:?}"),
        }
    }

    #[test]
    fn sweep_preserves_order_and_reports_cells() {
        let mut s = resnet(PolicyKind::SeasonalMigration);
        s.duration = 5.0;
        let vals = [AxisValue::Value(35.0), AxisValue::Value(10.0), AxisValue::None];
        let cells = sweep(&s, SweepAxis::FidelitySnr, &vals);
        assert_eq!(cells.len(), 3);
        assert_eq!(cells[1].value, AxisValue::Value(10.0));
        // 10 dB imaging is below the 16 dB vision requirement.
        assert!(cells[1].metrics.is_err());
        assert!(cells[0].metrics.is_ok() && cells[2].metrics.is_ok());
        assert!(SweepAxis::Gap.apply(&s, AxisValue::None).is_err());
    }
}
