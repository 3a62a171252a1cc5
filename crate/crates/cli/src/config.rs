//! Run configuration: a TOML file with one section per concern.

use std::path::{Path, PathBuf};

use porelife::field::{NotchSpec, PoreFieldStats, DEFAULT_LOAD_LEVELS};
use porelife::likelihood::DEFAULT_SYNTHETIC_FIELDS;
use porelife::material_point::{ChabocheParams, DEFAULT_SAMPLES_PER_CYCLE, DEFAULT_STABILIZED_CYCLE};
use porelife::optimize::{FreeMask, DEFAULT_BUDGET, DEFAULT_STARTS, ONE_LINE, ONE_LINE_NO_LIMIT, PARAMETER_NAMES, TWO_LINE};
use porelife::strain_life::StrainLifeParams;
use porelife::weakest_link::{DEFAULT_QUANTILES, DEFAULT_RUN_OUT};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Nominal stress amplitudes, MPa, strictly ascending.
    pub load_levels: Vec<f64>,
    /// Synthetic fields per observation in unknown-pores calibration.
    pub n_k: usize,
    pub n_cycles: usize,
    pub samples_per_cycle: usize,
    pub n_max: f64,
    pub quantiles: Vec<f64>,
    pub samples_per_structure: usize,
    pub shells: usize,
    pub material: ChabocheParams,
    pub fatigue: Option<StrainLifeParams>,
    pub calibration: CalibrationConfig,
    pub pores: PoreFieldStats,
    pub notch: NotchSpec,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            load_levels: DEFAULT_LOAD_LEVELS.to_vec(),
            n_k: DEFAULT_SYNTHETIC_FIELDS,
            n_cycles: DEFAULT_STABILIZED_CYCLE,
            samples_per_cycle: DEFAULT_SAMPLES_PER_CYCLE,
            n_max: DEFAULT_RUN_OUT,
            quantiles: DEFAULT_QUANTILES.to_vec(),
            samples_per_structure: 1000,
            shells: porelife::field::DEFAULT_SHELLS,
            material: ChabocheParams::cast_aluminium(),
            fatigue: None,
            calibration: CalibrationConfig::default(),
            pores: PoreFieldStats::default(),
            notch: NotchSpec::default(),
            paths: PathsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// `one-line`, `two-line`, `one-line-no-limit`, or `custom` with `free`.
    pub model: String,
    /// Free parameter names when `model = "custom"`.
    pub free: Vec<String>,
    pub budget: usize,
    pub starts: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            model: "one-line".into(),
            free: Vec::new(),
            budget: DEFAULT_BUDGET,
            starts: DEFAULT_STARTS,
        }
    }
}

impl CalibrationConfig {
    pub fn free_mask(&self) -> Result<FreeMask, CliError> {
        match self.model.as_str() {
            "one-line" => Ok(ONE_LINE),
            "two-line" => Ok(TWO_LINE),
            "one-line-no-limit" => Ok(ONE_LINE_NO_LIMIT),
            "custom" => {
                let mut mask = [false; 6];
                for name in &self.free {
                    let i = PARAMETER_NAMES
                        .iter()
                        .position(|p| p == name)
                        .ok_or_else(|| CliError::Validation(format!("unknown parameter `{name}` in calibration.free")))?;
                    mask[i] = true;
                }
                if !mask.iter().any(|&f| f) {
                    return Err(CliError::Validation("calibration.free lists no parameter".into()));
                }
                Ok(mask)
            }
            other => Err(CliError::Validation(format!("unknown calibration model `{other}`"))),
        }
    }
}

/// Input files; relative paths resolve against the configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub observations: Option<PathBuf>,
    pub reference_observations: Option<PathBuf>,
    pub tables: Vec<PathBuf>,
    pub challenge_tables: Vec<PathBuf>,
    pub challenge_homogeneous: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.paths.resolve(base)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        if self.load_levels.is_empty() {
            return bad("load_levels is empty".into());
        }
        if self.load_levels.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return bad(format!("load_levels must be positive, got {:?}", self.load_levels));
        }
        if self.load_levels.windows(2).any(|w| !(w[1] > w[0])) {
            return bad(format!("load_levels must be strictly ascending, got {:?}", self.load_levels));
        }
        if self.n_k == 0 || self.n_cycles == 0 || self.samples_per_cycle < 4 || self.samples_per_structure == 0 {
            return bad("n_k, n_cycles and samples_per_structure must be positive; samples_per_cycle at least 4".into());
        }
        if !(self.n_max > 0.0 && self.n_max.is_finite()) {
            return bad(format!("n_max must be positive, got {}", self.n_max));
        }
        if self.quantiles.is_empty() || self.quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            return bad(format!("quantiles must lie in (0, 1), got {:?}", self.quantiles));
        }
        if self.shells == 0 {
            return bad("shells must be positive".into());
        }
        self.material.validate().map_err(|e| CliError::Validation(format!("material: {e}")))?;
        if let Some(f) = &self.fatigue {
            f.validate().map_err(|e| CliError::Validation(format!("fatigue: {e}")))?;
        }
        self.pores.validate().map_err(|e| CliError::Validation(format!("pores: {e}")))?;
        self.calibration.free_mask()?;
        if self.calibration.budget == 0 || self.calibration.starts == 0 {
            return bad("calibration budget and starts must be positive".into());
        }
        Ok(())
    }
}

impl PathsConfig {
    fn resolve(&mut self, base: &Path) -> Result<(), CliError> {
        let fix = |p: &mut PathBuf| -> Result<(), CliError> {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.exists() {
                return Err(CliError::Validation(format!("path {} does not exist", p.display())));
            }
            Ok(())
        };
        for p in self
            .observations
            .iter_mut()
            .chain(self.reference_observations.iter_mut())
            .chain(self.tables.iter_mut())
            .chain(self.challenge_tables.iter_mut())
            .chain(self.challenge_homogeneous.iter_mut())
        {
            fix(p)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_protocol_constants() {
        let c = RunConfig::default();
        assert_eq!(c.load_levels, vec![20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0]);
        assert_eq!(c.n_k, 10);
        assert_eq!(c.n_cycles, 20);
        assert_eq!(c.n_max, 2e6);
        assert_eq!(c.quantiles, vec![0.01, 0.15, 0.5, 0.85, 0.99]);
        assert_eq!(c.calibration.budget, 400);
        assert_eq!(c.calibration.starts, 5);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn reference_file_parses_to_defaults() {
        let text = include_str!("../porelife.toml");
        let mut c: RunConfig = toml::from_str(text).unwrap();
        assert!(c.validate().is_ok());
        assert!(c.fatigue.is_some());
        c.fatigue = None;
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn rejects_descending_levels_and_unknown_keys() {
        let c: RunConfig = toml::from_str("load_levels = [50.0, 40.0]").unwrap();
        assert!(matches!(c.validate(), Err(CliError::Validation(m)) if m.contains("ascending")));
        assert!(toml::from_str::<RunConfig>("n_kk = 3").is_err());
    }

    #[test]
    fn custom_mask() {
        let c = CalibrationConfig {
            model: "custom".into(),
            free: vec!["m".into(), "C".into()],
            ..Default::default()
        };
        assert_eq!(c.free_mask().unwrap(), [true, false, false, false, false, true]);
        let bad = CalibrationConfig {
            model: "custom".into(),
            free: vec!["q".into()],
            ..Default::default()
        };
        assert!(bad.free_mask().is_err());
    }
}
