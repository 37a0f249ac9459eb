//! Sectioned key-value scenario files with unit-suffixed values.
//!
//! ```text
//! [scenario]
//! duration = 120 s
//! workload = resnet50
//! ambient_trace = 0 s: 20 C, 60 s: 30 C
//!
//! [fidelity]
//! imaging_snr = 26 dB
//! ```
//!
//! `#` and `;` start comments. Every dimensional value needs its unit.

use std::fmt::Write as _;

use crate::energy::{EnergyTable, PowerProfile};
use crate::error::{Error, Result};
use crate::fidelity::NoiseModel;
use crate::policy::{FidelitySpec, GapStrategy, PolicyKind};
use crate::presets::PresetStore;
use crate::sim::{PolicyConfig, Scenario, DEFAULT_FRAME_PERIOD};
use crate::thermal::ThermalStack;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Time,
    Temperature,
    Power,
    Decibel,
    Illuminance,
    Resistance,
    Capacitance,
    EnergyPerPixel,
    Frequency,
    Area,
    Scalar,
}

impl Unit {
    /// Scale factors into the library's base units (s, °C, W, dB, lux, K/W, J/K, pJ, Hz, cm²).
    fn suffixes(self) -> &'static [(&'static str, f64)] {
        match self {
            Unit::Time => &[("s", 1.0), ("ms", 1e-3), ("us", 1e-6)],
            Unit::Temperature => &[("C", 1.0), ("degC", 1.0), ("°C", 1.0)],
            Unit::Power => &[("W", 1.0), ("mW", 1e-3)],
            Unit::Decibel => &[("dB", 1.0)],
            Unit::Illuminance => &[("lux", 1.0), ("lx", 1.0)],
            Unit::Resistance => &[("K/W", 1.0)],
            Unit::Capacitance => &[("J/K", 1.0), ("mJ/K", 1e-3)],
            Unit::EnergyPerPixel => &[("pJ", 1.0)],
            Unit::Frequency => &[("Hz", 1.0), ("fps", 1.0)],
            Unit::Area => &[("cm2", 1.0), ("mm2", 1e-2)],
            Unit::Scalar => &[("", 1.0)],
        }
    }

    fn canonical(self) -> &'static str {
        self.suffixes()[0].0
    }
}

/// Parses `"<number> <unit>"`; the space is optional.
pub fn parse_quantity(text: &str, unit: Unit) -> std::result::Result<f64, String> {
    let text = text.trim();
    let split = text
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
        .unwrap_or(text.len());
    let (num, suffix) = text.split_at(split);
    let suffix = suffix.trim();
    let value: f64 = num
        .parse()
        .map_err(|_| format!("`{text}` is not a number followed by a unit"))?;
    if !value.is_finite() {
        return Err(format!("`{text}` is not finite"));
    }
    match unit.suffixes().iter().find(|(s, _)| *s == suffix) {
        Some((_, scale)) => Ok(value * scale),
        None if suffix.is_empty() => Err(format!("`{text}` is missing a unit (expected {})", unit.canonical())),
        None => {
            let allowed: Vec<_> = unit.suffixes().iter().map(|(s, _)| *s).collect();
            Err(format!("unit `{suffix}` not allowed here (expected one of {})", allowed.join(", ")))
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

#[derive(Debug, Clone)]
struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

fn tokenize(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split(['#', ';']).next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::config(line, "unterminated section header"))?
                .trim();
            if sections.iter().any(|s| s.name == name) {
                return Err(Error::config(line, format!("duplicate section [{name}]")));
            }
            sections.push(Section {
                name: name.to_string(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::config(line, format!("expected `key = value`, got `{content}`")))?;
        let section = sections
            .last_mut()
            .ok_or_else(|| Error::config(line, "key outside of any section"))?;
        let key = key.trim();
        if section.entries.iter().any(|e| e.key == key) {
            return Err(Error::config(line, format!("duplicate key `{key}` in [{}]", section.name)));
        }
        section.entries.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(sections)
}

impl Entry {
    fn quantity(&self, unit: Unit) -> Result<f64> {
        parse_quantity(&self.value, unit).map_err(|m| Error::config(self.line, format!("{}: {m}", self.key)))
    }

    fn optional_quantity(&self, unit: Unit) -> Result<Option<f64>> {
        if self.value.eq_ignore_ascii_case("none") {
            Ok(None)
        } else {
            self.quantity(unit).map(Some)
        }
    }

    fn integer<T: std::str::FromStr>(&self) -> Result<T> {
        self.value
            .parse()
            .map_err(|_| Error::config(self.line, format!("{}: `{}` is not a valid integer", self.key, self.value)))
    }

    fn list(&self, unit: Unit) -> Result<Vec<f64>> {
        self.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| parse_quantity(s, unit).map_err(|m| Error::config(self.line, format!("{}: {m}", self.key))))
            .collect()
    }

    fn trace(&self, unit: Unit) -> Result<Vec<(f64, f64)>> {
        self.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|point| {
                let (t, v) = point
                    .split_once(':')
                    .ok_or_else(|| Error::config(self.line, format!("{}: expected `time: value`, got `{point}`", self.key)))?;
                let err = |m| Error::config(self.line, format!("{}: {m}", self.key));
                Ok((parse_quantity(t, Unit::Time).map_err(err)?, parse_quantity(v, unit).map_err(err)?))
            })
            .collect()
    }

    fn unknown(&self, section: &str) -> Error {
        Error::config(self.line, format!("unknown key `{}` in [{section}]", self.key))
    }

    fn parse<T: std::str::FromStr<Err = Error>>(&self) -> Result<T> {
        self.value.parse().map_err(|e: Error| Error::config(self.line, format!("{}: {e}", self.key)))
    }
}

/// Reads a `[workload]` section on top of `base`; a missing base requires every field.
fn read_workload(section: &Section, base: Option<PowerProfile>) -> Result<PowerProfile> {
    let mut name = base.as_ref().map(|b| b.name.clone());
    let mut width = base.as_ref().map(|b| b.width);
    let mut height = base.as_ref().map(|b| b.height);
    let mut fps = base.as_ref().map(|b| b.fps);
    let mut compute = base.as_ref().map(|b| b.compute_power);
    let mut p_cap_near = base.as_ref().map_or(0.1, |b| b.p_cap_near);
    let mut multiplier = base.as_ref().and_then(|b| b.dram_traffic_multiplier);
    let mut nsp = base.as_ref().and_then(|b| b.nsp_power_override);
    for e in &section.entries {
        match e.key.as_str() {
            "name" => name = Some(e.value.clone()),
            "width" => width = Some(e.integer()?),
            "height" => height = Some(e.integer()?),
            "fps" => fps = Some(e.quantity(Unit::Frequency)?),
            "compute_power" => compute = Some(e.quantity(Unit::Power)?),
            "p_cap_near" => p_cap_near = e.quantity(Unit::Power)?,
            "dram_traffic_multiplier" => multiplier = e.optional_quantity(Unit::Scalar)?,
            "nsp_power" => nsp = e.optional_quantity(Unit::Power)?,
            _ => return Err(e.unknown("workload")),
        }
    }
    let missing = |what: &str| Error::config(section.line, format!("[workload] needs `{what}`"));
    Ok(PowerProfile {
        name: name.ok_or_else(|| missing("name"))?,
        width: width.ok_or_else(|| missing("width"))?,
        height: height.ok_or_else(|| missing("height"))?,
        fps: fps.ok_or_else(|| missing("fps"))?,
        compute_power: compute.ok_or_else(|| missing("compute_power"))?,
        p_cap_near,
        dram_traffic_multiplier: multiplier,
        nsp_power_override: nsp,
    })
}

/// Parses a preset file consisting of a single `[workload]` section.
pub fn parse_workload(text: &str) -> Result<PowerProfile> {
    let sections = tokenize(text)?;
    let mut found = None;
    for s in &sections {
        if s.name != "workload" {
            return Err(Error::config(s.line, format!("unexpected section [{}] in workload preset", s.name)));
        }
        found = Some(read_workload(s, None)?);
    }
    let profile = found.ok_or_else(|| Error::config(1, "missing [workload] section"))?;
    profile.validate()?;
    Ok(profile)
}

fn read_thermal(section: &Section, t: &mut ThermalStack) -> Result<()> {
    for e in &section.entries {
        let r = || e.quantity(Unit::Resistance);
        match e.key.as_str() {
            "r_ca" => t.r_ca = r()?,
            "r_jc" => t.r_jc = r()?,
            "r_jb" => t.r_jb = r()?,
            "r_ba" => t.r_ba = r()?,
            "r_sd" => t.r_sd = r()?,
            "r_dv" => t.r_dv = r()?,
            "alpha_jump" => t.alpha_jump = r()?,
            "c_pkg" => t.c_pkg = e.quantity(Unit::Capacitance)?,
            "c_die" => t.c_die = e.quantity(Unit::Capacitance)?,
            "tau_die" => t.tau_die = e.quantity(Unit::Time)?,
            "die_area" => t.die_area_cm2 = e.quantity(Unit::Area)?,
            _ => return Err(e.unknown("thermal")),
        }
    }
    t.validate().map_err(|err| Error::config(section.line, err.to_string()))
}

fn read_energy(section: &Section, t: &mut EnergyTable) -> Result<()> {
    for e in &section.entries {
        let pj = || e.quantity(Unit::EnergyPerPixel);
        match e.key.as_str() {
            "sensing" => t.sensing = pj()?,
            "csi_tx" => t.csi_tx = pj()?,
            "ddr_tx" => t.ddr_tx = pj()?,
            "dram_read" => t.dram_read = pj()?,
            "dram_write" => t.dram_write = pj()?,
            "dram_traffic_multiplier" => t.dram_traffic_multiplier = e.quantity(Unit::Scalar)?,
            _ => return Err(e.unknown("energy")),
        }
    }
    t.validate().map_err(|err| Error::config(section.line, err.to_string()))
}

fn read_noise(section: &Section, n: &mut NoiseModel) -> Result<()> {
    for e in &section.entries {
        match e.key.as_str() {
            "read_var_ref" => n.read_var_ref = e.quantity(Unit::Scalar)?,
            "dark_current_ref" => n.dark_current_ref = e.quantity(Unit::Scalar)?,
            "doubling_temp" => n.doubling_temp = e.quantity(Unit::Temperature)?,
            "gain_k" => n.gain_k = e.quantity(Unit::Scalar)?,
            "full_well_clip" => n.full_well_clip = e.quantity(Unit::Scalar)?,
            "t0" => n.t0 = e.quantity(Unit::Temperature)?,
            _ => return Err(e.unknown("noise")),
        }
    }
    n.validate().map_err(|err| Error::config(section.line, err.to_string()))
}

fn read_fidelity(section: &Section, f: &mut FidelitySpec) -> Result<()> {
    for e in &section.entries {
        match e.key.as_str() {
            "vision_snr" => f.vision_snr = e.quantity(Unit::Decibel)?,
            "imaging_snr" => f.imaging_snr = e.optional_quantity(Unit::Decibel)?,
            "capture_latency" => f.capture_latency = e.quantity(Unit::Time)?,
            _ => return Err(e.unknown("fidelity")),
        }
    }
    f.validate().map_err(|err| Error::config(section.line, err.to_string()))
}

fn read_policy(section: &Section, p: &mut PolicyConfig) -> Result<()> {
    for e in &section.entries {
        match e.key.as_str() {
            "kind" => p.kind = e.parse::<PolicyKind>()?,
            "gap" => {
                p.gap = if e.value == "auto" {
                    GapStrategy::MinimizePower
                } else {
                    GapStrategy::Fixed(e.quantity(Unit::Temperature)?)
                }
            }
            "stop_frames" => p.stop_frames = e.integer()?,
            "t_high" => p.t_high_override = e.optional_quantity(Unit::Temperature)?,
            "switch_overlap" => p.switch_overlap = e.quantity(Unit::Time)?,
            _ => return Err(e.unknown("policy")),
        }
    }
    Ok(())
}

/// Parses a scenario file. Workload names resolve through `presets`.
pub fn parse_scenario(text: &str, presets: &PresetStore) -> Result<Scenario> {
    let sections = tokenize(text)?;
    let find = |name: &str| sections.iter().find(|s| s.name == name);
    if let Some(s) = sections.iter().find(|s| {
        !matches!(
            s.name.as_str(),
            "scenario" | "workload" | "fidelity" | "policy" | "thermal" | "energy" | "noise"
        )
    }) {
        return Err(Error::config(s.line, format!("unknown section [{}]", s.name)));
    }

    let mut duration = 120.0;
    let mut frame_period = DEFAULT_FRAME_PERIOD;
    let mut workload_name: Option<(String, usize)> = None;
    let mut ambient = vec![(0.0, 25.0)];
    let mut lighting = vec![(0.0, 320.0)];
    let mut triggers = Vec::new();
    let mut trigger_rate = None;
    let mut seed = 0u64;
    if let Some(s) = find("scenario") {
        for e in &s.entries {
            match e.key.as_str() {
                "duration" => duration = e.quantity(Unit::Time)?,
                "frame_period" => frame_period = e.quantity(Unit::Time)?,
                "frame_rate" => {
                    let fps = e.quantity(Unit::Frequency)?;
                    if !(fps > 0.0) {
                        return Err(Error::config(e.line, "frame_rate must be > 0"));
                    }
                    frame_period = 1.0 / fps;
                }
                "workload" => workload_name = Some((e.value.clone(), e.line)),
                "ambient" => ambient = vec![(0.0, e.quantity(Unit::Temperature)?)],
                "ambient_trace" => ambient = e.trace(Unit::Temperature)?,
                "lighting" => lighting = vec![(0.0, e.quantity(Unit::Illuminance)?)],
                "lighting_trace" => lighting = e.trace(Unit::Illuminance)?,
                "triggers" => triggers = e.list(Unit::Time)?,
                "trigger_rate" => trigger_rate = e.optional_quantity(Unit::Frequency)?,
                "seed" => seed = e.integer()?,
                _ => return Err(e.unknown("scenario")),
            }
        }
    }

    let base = match &workload_name {
        Some((name, line)) => Some(presets.get(name).map_err(|err| Error::config(*line, err.to_string()))?),
        None => None,
    };
    let workload = match (find("workload"), base) {
        (Some(s), base) => read_workload(s, base)?,
        (None, Some(b)) => b,
        (None, None) => return Err(Error::config(1, "no workload: set [scenario] workload or add a [workload] section")),
    };

    let mut scenario = Scenario::new(workload, PolicyKind::SeasonalMigration);
    scenario.duration = duration;
    scenario.frame_period = frame_period;
    scenario.ambient_trace = ambient;
    scenario.lighting_trace = lighting;
    scenario.triggers = triggers;
    scenario.trigger_rate = trigger_rate;
    scenario.rng_seed = seed;
    if let Some(s) = find("fidelity") {
        read_fidelity(s, &mut scenario.fidelity)?;
    }
    if let Some(s) = find("policy") {
        read_policy(s, &mut scenario.policy)?;
    }
    if let Some(s) = find("thermal") {
        read_thermal(s, &mut scenario.thermal)?;
    }
    if let Some(s) = find("energy") {
        read_energy(s, &mut scenario.energy)?;
    }
    if let Some(s) = find("noise") {
        read_noise(s, &mut scenario.noise)?;
    }
    scenario.validate().map_err(|err| match err {
        Error::InvalidParameter(m) => Error::config(0, m),
        other => other,
    })?;
    Ok(scenario)
}

/// Parses only the model-override sections (`[thermal]`, `[energy]`, `[noise]`).
pub fn parse_overrides(text: &str) -> Result<(ThermalStack, EnergyTable, NoiseModel)> {
    let mut thermal = ThermalStack::default();
    let mut energy = EnergyTable::default();
    let mut noise = NoiseModel::default();
    for s in tokenize(text)? {
        match s.name.as_str() {
            "thermal" => read_thermal(&s, &mut thermal)?,
            "energy" => read_energy(&s, &mut energy)?,
            "noise" => read_noise(&s, &mut noise)?,
            other => return Err(Error::config(s.line, format!("section [{other}] is not a model override"))),
        }
    }
    Ok((thermal, energy, noise))
}

fn join_trace(trace: &[(f64, f64)], unit: &str) -> String {
    trace
        .iter()
        .map(|(t, v)| format!("{t} s: {v} {unit}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn opt(v: Option<f64>, unit: &str) -> String {
    v.map_or_else(|| "none".to_string(), |x| format!("{x} {unit}"))
}

/// Writes a scenario in the format read by [`parse_scenario`], with the workload inlined.
pub fn write_scenario(s: &Scenario) -> String {
    let mut out = String::new();
    let w = &s.workload;
    let t = &s.thermal;
    let e = &s.energy;
    let n = &s.noise;
    let gap = match s.policy.gap {
        GapStrategy::Fixed(g) => format!("{g} C"),
        GapStrategy::MinimizePower => "auto".into(),
    };
    let triggers: Vec<_> = s.triggers.iter().map(|t| format!("{t} s")).collect();
    // Writing to a String cannot fail.
    let _ = write!(
        out,
        "[scenario]\nduration = {} s\nframe_period = {} s\nambient_trace = {}\nlighting_trace = {}\ntriggers = {}\ntrigger_rate = {}\nseed = {}\n\n",
        s.duration,
        s.frame_period,
        join_trace(&s.ambient_trace, "C"),
        join_trace(&s.lighting_trace, "lux"),
        triggers.join(", "),
        opt(s.trigger_rate, "Hz"),
        s.rng_seed,
    );
    let _ = write!(
        out,
        "[workload]\nname = {}\nwidth = {}\nheight = {}\nfps = {} Hz\ncompute_power = {} W\np_cap_near = {} W\ndram_traffic_multiplier = {}\nnsp_power = {}\n\n",
        w.name,
        w.width,
        w.height,
        w.fps,
        w.compute_power,
        w.p_cap_near,
        w.dram_traffic_multiplier.map_or_else(|| "none".to_string(), |m| m.to_string()),
        opt(w.nsp_power_override, "W"),
    );
    let _ = write!(
        out,
        "[fidelity]\nvision_snr = {} dB\nimaging_snr = {}\ncapture_latency = {} s\n\n",
        s.fidelity.vision_snr,
        opt(s.fidelity.imaging_snr, "dB"),
        s.fidelity.capture_latency,
    );
    let _ = write!(
        out,
        "[policy]\nkind = {}\ngap = {gap}\nstop_frames = {}\nt_high = {}\nswitch_overlap = {} s\n\n",
        s.policy.kind,
        s.policy.stop_frames,
        opt(s.policy.t_high_override, "C"),
        s.policy.switch_overlap,
    );
    let _ = write!(
        out,
        "[thermal]\nr_ca = {} K/W\nr_jc = {} K/W\nr_jb = {} K/W\nr_ba = {} K/W\nr_sd = {} K/W\nr_dv = {} K/W\nalpha_jump = {} K/W\nc_pkg = {} J/K\nc_die = {} J/K\ntau_die = {} s\ndie_area = {} cm2\n\n",
        t.r_ca, t.r_jc, t.r_jb, t.r_ba, t.r_sd, t.r_dv, t.alpha_jump, t.c_pkg, t.c_die, t.tau_die, t.die_area_cm2,
    );
    let _ = write!(
        out,
        "[energy]\nsensing = {} pJ\ncsi_tx = {} pJ\nddr_tx = {} pJ\ndram_read = {} pJ\ndram_write = {} pJ\ndram_traffic_multiplier = {}\n\n",
        e.sensing, e.csi_tx, e.ddr_tx, e.dram_read, e.dram_write, e.dram_traffic_multiplier,
    );
    let _ = write!(
        out,
        "[noise]\nread_var_ref = {}\ndark_current_ref = {}\ndoubling_temp = {} C\ngain_k = {}\nfull_well_clip = {}\nt0 = {} C\n",
        n.read_var_ref, n.dark_current_ref, n.doubling_temp, n.gain_k, n.full_well_clip, n.t0,
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> PresetStore {
        PresetStore::builtin()
    }

    #[test]
    fn quantities() {
        assert_eq!(parse_quantity("33 ms", Unit::Time).unwrap(), 0.033);
        assert_eq!(parse_quantity("100mW", Unit::Power).unwrap(), 0.1);
        assert_eq!(parse_quantity("-5 degC", Unit::Temperature).unwrap(), -5.0);
        assert_eq!(parse_quantity("1.95 mJ/K", Unit::Capacitance).unwrap(), 1.95e-3);
        assert_eq!(parse_quantity("2.5e-3 s", Unit::Time).unwrap(), 2.5e-3);
        assert_eq!(parse_quantity("4", Unit::Scalar).unwrap(), 4.0);
        assert!(parse_quantity("33", Unit::Time).unwrap_err().contains("missing a unit"));
        assert!(parse_quantity("33 W", Unit::Time).unwrap_err().contains("not allowed"));
        assert!(parse_quantity("fast", Unit::Time).is_err());
    }

    #[test]
    fn minimal_scenario() {
        let s = parse_scenario("[scenario]\nworkload = resnet50\n", &store()).unwrap();
        assert_eq!(s.workload.name, "resnet50");
        assert_eq!(s.duration, 120.0);
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = parse_scenario("[scenario]\nworkload = resnet50\n\n[policy]\nflavour = mild\n", &store()).unwrap_err();
        assert_eq!(
            err,
            Error::Config {
                line: 5,
                message: "unknown key `flavour` in [policy]".into()
            }
        );
    }

    #[test]
    fn imaging_below_vision_is_config_error() {
        let text = "[scenario]\nworkload = resnet50\n[fidelity]\nvision_snr = 30 dB\nimaging_snr = 20 dB\n";
        match parse_scenario(text, &store()) {
            Err(Error::Config { line: 3, message }) => assert!(message.contains("imaging_snr"), "{message}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_preset_and_missing_workload() {
        assert!(matches!(
            parse_scenario("[scenario]\nworkload = vgg\n", &store()),
            Err(Error::Config { line: 2, .. })
        ));
        assert!(parse_scenario("[scenario]\nduration = 1 s\n", &store()).is_err());
    }

    #[test]
    fn overrides_only_accept_model_sections() {
        let (t, _, _) = parse_overrides("[thermal]\nalpha_jump = 2.75 K/W\n").unwrap();
        assert_eq!(t.alpha_jump, 2.75);
        assert!(parse_overrides("[policy]\nkind = full_far\n").is_err());
    }

    #[test]
    fn round_trip() {
        let mut s = parse_scenario("[scenario]\nworkload = googlenet\n", &store()).unwrap();
        s.ambient_trace = vec![(0.0, 20.0), (40.0, 30.0)];
        s.lighting_trace = vec![(0.0, 32000.0), (10.0, 3.2)];
        s.triggers = vec![1.5, 7.25];
        s.trigger_rate = Some(0.2);
        s.fidelity.imaging_snr = None;
        s.policy.gap = GapStrategy::Fixed(3.0);
        s.policy.t_high_override = Some(57.5);
        s.thermal.tau_die = 0.01;
        let text = write_scenario(&s);
        assert_eq!(parse_scenario(&text, &store()).unwrap(), s);
    }
}
