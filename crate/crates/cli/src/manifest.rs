//! Experiment description shared by the flags and the JSON configuration file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Planar,
    StickSlip,
    Coupled,
    /// User system read from `system_file`.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Svg,
    Both,
}

impl Format {
    pub fn svg(self) -> bool {
        matches!(self, Format::Svg | Format::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RescaleName {
    #[default]
    Uniform,
    Piecewise,
}

/// Sustained perturbation `p -> p + eps e_p`, optionally confined to some regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    /// Parameter name, or `region` for the planar `(alpha + eps, omega - eps)` perturbation.
    pub parameter: String,
    pub eps: f64,
    #[serde(default)]
    pub region_mask: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSpec {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12 }
    }
}

/// Angles of the planar entry and exit rays bounding timing region 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub entry_angle: f64,
    pub exit_angle: f64,
}

impl Default for SectionSpec {
    fn default() -> Self {
        let r = lcsc::models::planar::PlanarRegions::default();
        Self { entry_angle: r.entry_angle, exit_angle: r.exit_angle }
    }
}

fn default_samples() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub model: ModelName,
    #[serde(default)]
    pub system_file: Option<PathBuf>,
    /// Parameter overrides by name.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub perturbation: Option<PerturbationSpec>,
    #[serde(default)]
    pub format: Format,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    /// Seed of the randomly placed sampling curves.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sections: SectionSpec,
    #[serde(default)]
    pub rescale: RescaleName,
    /// Event index used as the shape-response section.
    #[serde(default)]
    pub section_event: Option<usize>,
    #[serde(default)]
    pub u0: Option<Vec<f64>>,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub lag: Option<f64>,
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl ExperimentManifest {
    pub fn new(model: ModelName) -> Self {
        Self {
            model,
            system_file: None,
            params: BTreeMap::new(),
            perturbation: None,
            format: Format::Csv,
            tolerances: ToleranceSpec::default(),
            seed: 0,
            sections: SectionSpec::default(),
            rescale: RescaleName::Uniform,
            section_event: None,
            u0: None,
            t_end: None,
            lag: None,
            grid: None,
            samples: default_samples(),
        }
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("invalid manifest {}: {e}", path.display()))
    }
}
