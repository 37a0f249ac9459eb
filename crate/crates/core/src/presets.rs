//! Bundled workload presets and preset directories.

use std::collections::BTreeMap;
use std::path::Path;

use crate::config::parse_workload;
use crate::energy::PowerProfile;
use crate::error::{Error, Result};

/// Overrides the preset directory when set.
pub const PRESET_DIR_ENV: &str = "NSP_SIM_PRESET_DIR";

const BUILTIN: [(&str, &str); 4] = [
    ("alexnet", include_str!("../presets/alexnet.cfg")),
    ("mobilenet_ssd", include_str!("../presets/mobilenet_ssd.cfg")),
    ("googlenet", include_str!("../presets/googlenet.cfg")),
    ("resnet50", include_str!("../presets/resnet50.cfg")),
];

/// Names of the bundled workloads, in the order they are usually reported.
pub const WORKLOADS: [&str; 4] = ["alexnet", "mobilenet_ssd", "googlenet", "resnet50"];

#[derive(Debug, Clone, PartialEq)]
pub struct PresetStore {
    profiles: BTreeMap<String, PowerProfile>,
    source: String,
}

impl PresetStore {
    pub fn builtin() -> Self {
        let profiles = BUILTIN
            .iter()
            .map(|(name, text)| {
                let p = parse_workload(text).unwrap_or_else(|e| panic!("bundled preset {name} is broken: {e}"));
                (name.to_string(), p)
            })
            .collect();
        Self {
            profiles,
            source: "builtin".into(),
        }
    }

    /// Loads every `*.cfg` file in `dir`; the file stem is the preset name.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let entries = std::fs::read_dir(dir)
            .map_err(|e| Error::Preset(format!("cannot read preset directory {}: {e}", dir.display())))?;
        let mut profiles = BTreeMap::new();
        for entry in entries {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("cfg") {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let text = std::fs::read_to_string(&path)?;
            let profile = parse_workload(&text).map_err(|e| Error::Preset(format!("{}: {e}", path.display())))?;
            profiles.insert(stem.to_string(), profile);
        }
        Ok(Self {
            profiles,
            source: dir.display().to_string(),
        })
    }

    /// The directory named by the environment override, or the bundled set.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(PRESET_DIR_ENV) {
            Some(dir) => Self::from_dir(Path::new(&dir)),
            None => Ok(Self::builtin()),
        }
    }

    pub fn get(&self, name: &str) -> Result<PowerProfile> {
        self.profiles.get(name).cloned().ok_or_else(|| {
            Error::Preset(format!(
                "no workload preset `{name}` in {} (available: {})",
                self.source,
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.profiles.keys().cloned().collect()
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

/// A bundled workload preset.
pub fn workload(name: &str) -> Result<PowerProfile> {
    PresetStore::builtin().get(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_names() {
        let s = PresetStore::builtin();
        let mut expected: Vec<_> = WORKLOADS.iter().map(|s| s.to_string()).collect();
        expected.sort();
        assert_eq!(s.names(), expected);
        assert!(matches!(s.get("vgg16"), Err(Error::Preset(_))));
    }

    #[test]
    fn missing_directory() {
        assert!(matches!(
            PresetStore::from_dir(Path::new("/nonexistent/presets")),
            Err(Error::Preset(_))
        ));
    }
}
