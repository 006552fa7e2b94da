use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NoiseConfig, SceneConfig};
use crate::array_channel::ChannelConfig;
use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 2] = ["scenario5", "scenario7"];

const SCENARIO5: &str = include_str!("../../presets/scenario5.toml");
const SCENARIO7: &str = include_str!("../../presets/scenario7.toml");

/// Everything needed to generate one dataset: scene geometry, channel model
/// and detector noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub name: String,
    pub scene: SceneConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
}

impl Preset {
    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name {
            "scenario5" => SCENARIO5,
            "scenario7" => SCENARIO7,
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}` (available: {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Self::parse(text, Path::new(name))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, origin: &Path) -> Result<Self> {
        let preset: Preset = toml::from_str(text).map_err(|e| Error::parse(origin, e))?;
        preset.validate()?;
        Ok(preset)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("preset serializes")
    }

    /// Same geometry with detector noise and scatterers switched off.
    pub fn noiseless(mut self) -> Self {
        self.noise = NoiseConfig::default();
        self.channel.num_nlos_paths = 0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.channel.validate()?;
        self.noise.validate()?;
        let max_az = self.channel.max_azimuth();
        for p in [self.scene.road_start, self.scene.road_end] {
            let az = p[0].atan2(p[1]);
            if az.abs() > max_az {
                return Err(Error::Config(format!(
                    "road point {p:?} (azimuth {:.2} deg) lies outside the codebook coverage",
                    az.to_degrees()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_sample_counts() {
        assert_eq!(Preset::builtin("scenario5").unwrap().scene.num_samples, 2300);
        assert_eq!(Preset::builtin("scenario7").unwrap().scene.num_samples, 854);
    }

    #[test]
    fn unknown_preset_lists_choices() {
        let msg = Preset::builtin("scenario9").unwrap_err().to_string();
        assert!(msg.contains("scenario5") && msg.contains("scenario7"));
    }

    #[test]
    fn toml_round_trip() {
        let p = Preset::builtin("scenario7").unwrap();
        let back: Preset = toml::from_str(&p.to_toml()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn out_of_coverage_road_is_rejected() {
        let mut p = Preset::builtin("scenario5").unwrap();
        p.channel.max_azimuth_deg = 45.0;
        assert!(matches!(p.validate(), Err(Error::Config(_))));
    }
}
