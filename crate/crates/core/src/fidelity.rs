//! Temperature-dependent noise and SNR of the image sensor.
//!
//! Noise variance is the sum of a read-noise term proportional to absolute
//! temperature and a dark-current term that doubles every `doubling_temp`
//! degrees. Both are amplified by the analog gain (ISO / 100).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest reportable SNR, dB (12-bit quantization).
pub const SNR_CEILING_DB: f64 = 96.0;
pub const MIN_TEMPERATURE: f64 = -20.0;
pub const MAX_TEMPERATURE: f64 = 150.0;
const KELVIN: f64 = 273.15;
const BISECTION_RESOLUTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSettings {
    pub exposure_ms: f64,
    pub iso: f64,
    pub lux: f64,
}

impl CameraSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.exposure_ms > 0.0 && self.exposure_ms.is_finite()) {
            return Err(Error::InvalidParameter(format!("exposure must be > 0 ms, got {}", self.exposure_ms)));
        }
        if !(self.iso >= 100.0 && self.iso.is_finite()) {
            return Err(Error::InvalidParameter(format!("iso must be >= 100, got {}", self.iso)));
        }
        if !(self.lux > 0.0 && self.lux.is_finite()) {
            return Err(Error::InvalidParameter(format!("illumination must be > 0 lux, got {}", self.lux)));
        }
        Ok(())
    }

    pub fn gain(&self) -> f64 {
        self.iso / 100.0
    }

    /// Auto-exposure settings for a scene illumination.
    ///
    /// Exposure and ISO are interpolated linearly in log10(lux) between
    /// dim office (3.2 lux), office (320 lux) and daylight (32000 lux),
    /// and held constant outside that range.
    pub fn for_lux(lux: f64) -> Result<Self> {
        if !(lux > 0.0 && lux.is_finite()) {
            return Err(Error::InvalidParameter(format!("illumination must be > 0 lux, got {lux}")));
        }
        const TABLE: [(f64, f64, f64); 3] = [(3.2, 64.0, 800.0), (320.0, 32.0, 400.0), (32000.0, 16.0, 100.0)];
        let x = lux.log10();
        let (exposure_ms, iso) = if lux <= TABLE[0].0 {
            (TABLE[0].1, TABLE[0].2)
        } else if lux >= TABLE[2].0 {
            (TABLE[2].1, TABLE[2].2)
        } else {
            let i = if lux <= TABLE[1].0 { 0 } else { 1 };
            let (l0, e0, s0) = TABLE[i];
            let (l1, e1, s1) = TABLE[i + 1];
            let w = (x - l0.log10()) / (l1.log10() - l0.log10());
            (e0 + w * (e1 - e0), s0 + w * (s1 - s0))
        };
        Ok(Self { exposure_ms, iso, lux })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Read-noise variance at `t0` and unity gain, pixel intensity².
    pub read_var_ref: f64,
    /// Dark-signal variance rate at `t0` and unity gain, pixel intensity² per ms.
    pub dark_current_ref: f64,
    /// Temperature increase that doubles dark current, °C.
    pub doubling_temp: f64,
    /// Signal per lux·ms at unity gain, pixel intensity.
    pub gain_k: f64,
    pub full_well_clip: f64,
    /// Reference temperature, °C.
    pub t0: f64,
}

impl Default for NoiseModel {
    /// Calibrated so that 64 ms / ISO 800 reaches 26 dB at ~52 °C.
    fn default() -> Self {
        Self {
            read_var_ref: 100.0,
            dark_current_ref: 0.38,
            doubling_temp: 6.0,
            gain_k: 2.5,
            full_well_clip: 4095.0,
            t0: 25.0,
        }
    }
}

/// Read and dark components of the noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseVariance {
    pub read: f64,
    pub dark: f64,
}

impl NoiseVariance {
    pub fn total(&self) -> f64 {
        self.read + self.dark
    }
}

fn check_temperature(t_die: f64) -> Result<()> {
    if !(MIN_TEMPERATURE..=MAX_TEMPERATURE).contains(&t_die) {
        return Err(Error::Domain(format!(
            "die temperature {t_die} °C outside {MIN_TEMPERATURE}..{MAX_TEMPERATURE} °C"
        )));
    }
    Ok(())
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("read_var_ref", self.read_var_ref),
            ("dark_current_ref", self.dark_current_ref),
            ("doubling_temp", self.doubling_temp),
            ("gain_k", self.gain_k),
            ("full_well_clip", self.full_well_clip),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("noise.{name} must be > 0, got {v}")));
            }
        }
        if !(self.t0 + KELVIN > 0.0) {
            return Err(Error::InvalidParameter("noise.t0 must be above absolute zero".into()));
        }
        Ok(())
    }

    pub fn noise_components(&self, settings: &CameraSettings, t_die: f64) -> Result<NoiseVariance> {
        check_temperature(t_die)?;
        settings.validate()?;
        let g2 = settings.gain().powi(2);
        Ok(NoiseVariance {
            read: g2 * self.read_var_ref * (t_die + KELVIN) / (self.t0 + KELVIN),
            dark: g2
                * settings.exposure_ms
                * self.dark_current_ref
                * 2f64.powf((t_die - self.t0) / self.doubling_temp),
        })
    }

    /// Noise variance in pixel-intensity units.
    pub fn noise_variance(&self, settings: &CameraSettings, t_die: f64) -> Result<f64> {
        Ok(self.noise_components(settings, t_die)?.total())
    }

    pub fn signal(&self, settings: &CameraSettings) -> f64 {
        (self.gain_k * settings.lux * settings.exposure_ms * settings.gain()).min(self.full_well_clip)
    }

    pub fn snr_db(&self, settings: &CameraSettings, t_die: f64) -> Result<f64> {
        let var = self.noise_variance(settings, t_die)?;
        Ok(snr_from(self.signal(settings), var))
    }

    /// Highest die temperature at which `snr_db >= snr_target`, to 0.01 °C.
    ///
    /// Returns the upper end of the admissible range when the target is met
    /// everywhere.
    pub fn threshold_temperature(&self, settings: &CameraSettings, snr_target: f64) -> Result<f64> {
        let meets = |t: f64| self.snr_db(settings, t).map(|s| s >= snr_target);
        if !meets(0.0)? {
            return Err(Error::InfeasibleFidelity(format!(
                "{snr_target} dB is unreachable even at 0 °C (exposure {} ms, ISO {}, {} lux)",
                settings.exposure_ms, settings.iso, settings.lux
            )));
        }
        if meets(MAX_TEMPERATURE)? {
            return Ok(MAX_TEMPERATURE);
        }
        let (mut lo, mut hi) = (0.0, MAX_TEMPERATURE);
        while hi - lo > BISECTION_RESOLUTION {
            let mid = 0.5 * (lo + hi);
            if meets(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }
}

fn snr_from(signal: f64, variance: f64) -> f64 {
    if signal <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if variance <= 0.0 {
        return SNR_CEILING_DB;
    }
    (20.0 * (signal / variance.sqrt()).log10()).min(SNR_CEILING_DB)
}
