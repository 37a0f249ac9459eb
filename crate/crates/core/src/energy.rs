//! Per-pixel energy model of the capture, interface, storage and compute stages.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PJ: f64 = 1e-12;

/// Energy per pixel of each pipeline stage, pJ/pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyTable {
    pub sensing: f64,
    /// Sensor-to-SoC camera serial interface.
    pub csi_tx: f64,
    /// SoC-to-DRAM interface.
    pub ddr_tx: f64,
    pub dram_read: f64,
    pub dram_write: f64,
    /// DRAM accesses per input pixel, used when a profile does not carry its own.
    pub dram_traffic_multiplier: f64,
}

impl Default for EnergyTable {
    fn default() -> Self {
        Self {
            sensing: 595.0,
            csi_tx: 900.0,
            ddr_tx: 2800.0,
            dram_read: 283.0,
            dram_write: 394.0,
            dram_traffic_multiplier: 1.0,
        }
    }
}

impl EnergyTable {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sensing", self.sensing),
            ("csi_tx", self.csi_tx),
            ("ddr_tx", self.ddr_tx),
            ("dram_read", self.dram_read),
            ("dram_write", self.dram_write),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("energy.{name} must be >= 0, got {v}")));
            }
        }
        check_multiplier(self.dram_traffic_multiplier)
    }
}

fn check_multiplier(m: f64) -> Result<()> {
    if !(m.is_finite() && m >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "dram_traffic_multiplier must be >= 1, got {m}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    pub name: String,
    pub width: u32,
    pub height: u32,
    /// Frames per second.
    pub fps: f64,
    /// VPU power while processing, W.
    pub compute_power: f64,
    /// Residual near-sensor power in CAP mode, W.
    pub p_cap_near: f64,
    /// Workload-specific intermediate DRAM traffic; falls back to the table value.
    pub dram_traffic_multiplier: Option<f64>,
    /// Forces the NSP-mode near-sensor (and system) power, W. Used for power sweeps.
    pub nsp_power_override: Option<f64>,
}

impl PowerProfile {
    pub fn resolution(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution() == 0 {
            return Err(Error::InvalidParameter(format!("{}: resolution must be > 0", self.name)));
        }
        if !(self.fps.is_finite() && self.fps >= 0.0) {
            return Err(Error::InvalidParameter(format!("{}: fps must be >= 0", self.name)));
        }
        if !(self.compute_power.is_finite() && self.compute_power >= 0.0) {
            return Err(Error::InvalidParameter(format!("{}: compute_power must be >= 0", self.name)));
        }
        if !(self.p_cap_near.is_finite() && self.p_cap_near >= 0.0) {
            return Err(Error::InvalidParameter(format!("{}: p_cap_near must be >= 0", self.name)));
        }
        if let Some(m) = self.dram_traffic_multiplier {
            check_multiplier(m)?;
        }
        if let Some(p) = self.nsp_power_override {
            if !(p.is_finite() && p >= self.p_cap_near) {
                return Err(Error::InvalidParameter(format!(
                    "{}: NSP power {p} W must be >= CAP residual {} W",
                    self.name, self.p_cap_near
                )));
            }
        }
        Ok(())
    }

    fn multiplier(&self, table: &EnergyTable) -> f64 {
        self.dram_traffic_multiplier.unwrap_or(table.dram_traffic_multiplier)
    }

    fn raw_pixel_rate(&self) -> f64 {
        self.resolution() as f64 * self.fps
    }
}

/// Pixels per second streamed by the sensor.
pub fn pixel_rate(profile: &PowerProfile) -> Result<f64> {
    if profile.resolution() == 0 || !(profile.fps > 0.0) {
        return Err(Error::Domain(format!(
            "pixel rate needs resolution > 0 and fps > 0 ({}: {} px, {} fps)",
            profile.name,
            profile.resolution(),
            profile.fps
        )));
    }
    Ok(profile.raw_pixel_rate())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Processing on the SoC VPU, frames buffered in off-chip DRAM.
    Traditional,
    /// DRAM and VPU stacked under the sensor.
    NearSensor,
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "traditional" | "far_sensor" => Ok(Pipeline::Traditional),
            "near_sensor" | "nsp" => Ok(Pipeline::NearSensor),
            other => Err(Error::Domain(format!("unknown pipeline tag `{other}`"))),
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pipeline::Traditional => "traditional",
            Pipeline::NearSensor => "near_sensor",
        })
    }
}

/// System power split by component, W.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub sensing: f64,
    pub csi: f64,
    pub ddr: f64,
    pub dram: f64,
    pub compute: f64,
}

impl PowerBreakdown {
    pub fn total(&self) -> f64 {
        self.sensing + self.csi + self.ddr + self.dram + self.compute
    }
}

pub fn system_power(table: &EnergyTable, profile: &PowerProfile, pipeline: Pipeline) -> Result<PowerBreakdown> {
    table.validate()?;
    profile.validate()?;
    let rate = profile.raw_pixel_rate();
    let m = profile.multiplier(table);
    let dram = (table.dram_read + table.dram_write) * m * rate * PJ;
    let mut b = PowerBreakdown {
        sensing: table.sensing * rate * PJ,
        csi: 0.0,
        ddr: 0.0,
        dram,
        compute: profile.compute_power,
    };
    if pipeline == Pipeline::Traditional {
        b.csi = table.csi_tx * rate * PJ;
        b.ddr = table.ddr_tx * m * rate * PJ;
    }
    Ok(b)
}

/// Fractional savings of the near-sensor pipeline.
pub fn savings(traditional: f64, near_sensor: f64) -> Result<f64> {
    if !(traditional > 0.0) {
        return Err(Error::Domain(format!("traditional power must be > 0, got {traditional}")));
    }
    if near_sensor > traditional {
        log::warn!("near-sensor power {near_sensor} W exceeds traditional {traditional} W");
    }
    Ok((traditional - near_sensor) / traditional)
}

/// Per-mode powers consumed by the policies, W.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModePowers {
    /// System power with processing on the in-stack VPU.
    pub p_nsp_system: f64,
    /// System power with processing on the SoC VPU.
    pub p_far_system: f64,
    /// Heat dissipated in the stack during NSP mode.
    pub p_nsp_near_sensor: f64,
    /// Heat dissipated in the stack during CAP mode; also the system power of a gated CAP frame.
    pub p_cap_near: f64,
    /// Heat dissipated in the stack by capture alone, used for full-far processing.
    pub p_sensing: f64,
}

impl ModePowers {
    pub fn from_profile(table: &EnergyTable, profile: &PowerProfile) -> Result<Self> {
        let near = system_power(table, profile, Pipeline::NearSensor)?;
        let far = system_power(table, profile, Pipeline::Traditional)?;
        let p_nsp = profile.nsp_power_override.unwrap_or_else(|| near.total());
        Ok(Self {
            p_nsp_system: p_nsp,
            p_far_system: far.total(),
            p_nsp_near_sensor: p_nsp,
            p_cap_near: profile.p_cap_near,
            p_sensing: near.sensing,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn hd(fps: f64) -> PowerProfile {
        PowerProfile {
            name: "test".into(),
            width: 1920,
            height: 1080,
            fps,
            compute_power: 0.5,
            p_cap_near: 0.1,
            dram_traffic_multiplier: Some(2.0),
            nsp_power_override: None,
        }
    }

    #[test]
    fn pixel_rates() {
        assert_eq!(pixel_rate(&hd(34.0)).unwrap(), 70_502_400.0);
        let vga = PowerProfile {
            width: 640,
            height: 480,
            fps: 12.0,
            ..hd(1.0)
        };
        assert_eq!(pixel_rate(&vga).unwrap(), 3_686_400.0);
        assert!(pixel_rate(&hd(0.0)).is_err());
    }

    #[test]
    fn idle_pipeline_draws_nothing() {
        let p = PowerProfile {
            compute_power: 0.0,
            dram_traffic_multiplier: Some(1.0),
            fps: 0.0,
            ..hd(0.0)
        };
        let t = EnergyTable::default();
        assert_eq!(system_power(&t, &p, Pipeline::Traditional).unwrap().total(), 0.0);
        assert_eq!(system_power(&t, &p, Pipeline::NearSensor).unwrap().total(), 0.0);
    }

    #[test]
    fn breakdown_is_additive_and_doubling_fps_scales_traffic() {
        let t = EnergyTable::default();
        let a = system_power(&t, &hd(30.0), Pipeline::Traditional).unwrap();
        let b = system_power(&t, &hd(60.0), Pipeline::Traditional).unwrap();
        assert_eq!(a.total(), a.sensing + a.csi + a.ddr + a.dram + a.compute);
        assert_abs_diff_eq!(b.sensing, 2.0 * a.sensing, epsilon = 1e-15);
        assert_abs_diff_eq!(b.csi, 2.0 * a.csi, epsilon = 1e-15);
        assert_abs_diff_eq!(b.ddr, 2.0 * a.ddr, epsilon = 1e-15);
        assert_abs_diff_eq!(b.dram, 2.0 * a.dram, epsilon = 1e-15);
        assert_eq!(b.compute, a.compute);
    }

    #[test]
    fn pipeline_tags() {
        assert_eq!("near_sensor".parse::<Pipeline>().unwrap(), Pipeline::NearSensor);
        assert!("sideways".parse::<Pipeline>().is_err());
    }

    #[test]
    fn savings_values() {
        assert_abs_diff_eq!(savings(2.7, 1.3).unwrap(), 0.5185, epsilon = 1e-4);
        assert_eq!(savings(1.5, 1.5).unwrap(), 0.0);
        assert_abs_diff_eq!(savings(1.92, 0.9).unwrap(), 0.53125, epsilon = 1e-9);
        assert!(savings(2.0, 2.5).unwrap() < 0.0);
        assert!(savings(0.0, 1.0).is_err());
    }

    #[test]
    fn multiplier_below_one_rejected() {
        let p = PowerProfile {
            dram_traffic_multiplier: Some(0.5),
            ..hd(30.0)
        };
        assert!(p.validate().is_err());
    }
}
