//! Cyclic elasto-plastic response of a single material point.
//!
//! The constitutive law combines von Mises plasticity with nonlinear
//! kinematic hardening (`C`, `D`) and saturating isotropic hardening
//! `R(p) = Q (1 − exp(−b p))`. Two paths turn an elastic stress history into
//! a stabilized elasto-plastic cycle: the full return-mapping integrator and a
//! cyclic Neuber corrector for proportional loading.

mod chaboche;
mod criterion;
mod neuber;
pub mod reference;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{IsotropicElasticity, SymTensor};

pub use chaboche::{chaboche_cycle, chaboche_step, uniaxial_cycle, yield_function, CycleOptions, CycleResponse};
pub use criterion::{critical_direction, criterion_delta_eps, elastic_delta_eps};
pub use neuber::{neuber_correct, CorrectedCycle};

/// Default samples per load cycle.
pub const DEFAULT_SAMPLES_PER_CYCLE: usize = 40;

/// Default index of the stabilized cycle.
pub const DEFAULT_STABILIZED_CYCLE: usize = 20;

/// Elasto-plastic material constants in MPa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChabocheParams {
    #[serde(rename = "E")]
    pub youngs_modulus: f64,
    #[serde(rename = "nu", default = "default_poisson")]
    pub poisson_ratio: f64,
    #[serde(rename = "sigma_y")]
    pub yield_stress: f64,
    /// Isotropic saturation rate `b`.
    #[serde(rename = "b")]
    pub iso_rate: f64,
    /// Isotropic saturation stress `Q`.
    #[serde(rename = "Q")]
    pub iso_saturation: f64,
    /// Kinematic hardening modulus `C`.
    #[serde(rename = "C_kin")]
    pub kin_modulus: f64,
    /// Kinematic recall constant `D`.
    #[serde(rename = "D")]
    pub kin_recall: f64,
}

fn default_poisson() -> f64 {
    0.3
}

impl Default for ChabocheParams {
    fn default() -> Self {
        Self::cast_aluminium()
    }
}

impl ChabocheParams {
    /// Cast aluminium alloy constants with an assumed Poisson ratio of 0.3.
    pub fn cast_aluminium() -> Self {
        Self {
            youngs_modulus: 75500.0,
            poisson_ratio: 0.3,
            yield_stress: 170.0,
            iso_rate: 19.0,
            iso_saturation: 20.0,
            kin_modulus: 127499.0,
            kin_recall: 1334.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.youngs_modulus > 0.0
            && self.poisson_ratio > 0.0
            && self.poisson_ratio < 0.5
            && self.yield_stress > 0.0
            && self.iso_saturation >= 0.0
            && self.iso_rate >= 0.0
            && self.kin_modulus >= 0.0
            && self.kin_recall >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("inadmissible elasto-plastic constants {self:?}")))
        }
    }

    pub fn elasticity(&self) -> IsotropicElasticity {
        IsotropicElasticity::new(self.youngs_modulus, self.poisson_ratio)
    }

    /// Isotropic hardening `R(p)`.
    pub fn isotropic(&self, p: f64) -> f64 {
        self.iso_saturation * (1.0 - (-self.iso_rate * p).exp())
    }

    /// `dR/dp`.
    pub fn isotropic_slope(&self, p: f64) -> f64 {
        self.iso_saturation * self.iso_rate * (-self.iso_rate * p).exp()
    }
}

/// Internal variables of the constitutive law.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MaterialPointState {
    pub plastic_strain: SymTensor,
    pub backstress: SymTensor,
    /// Cumulative plastic strain `p`.
    pub cumulative_plastic: f64,
}

impl MaterialPointState {
    pub fn virgin() -> Self {
        Self::default()
    }
}

/// Pseudo-time series of symmetric tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorHistory {
    times: Vec<f64>,
    values: Vec<SymTensor>,
}

impl TensorHistory {
    pub fn new(times: Vec<f64>, values: Vec<SymTensor>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Domain(format!(
                "history has {} times but {} tensors",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("history times must be strictly increasing".into()));
        }
        Ok(Self { times, values })
    }

    /// One R = −1 cycle `amplitude · sin(2π t)` sampled at `t = i / samples`.
    pub fn sinusoid(amplitude: SymTensor, samples: usize) -> Self {
        let times: Vec<f64> = (0..samples).map(|i| i as f64 / samples as f64).collect();
        let values = times
            .iter()
            .map(|t| amplitude * (2.0 * std::f64::consts::PI * t).sin())
            .collect();
        Self { times, values }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[SymTensor] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl FnMut(&SymTensor) -> SymTensor) -> Self {
        Self {
            times: self.times.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }

    pub(crate) fn with_values(&self, values: Vec<SymTensor>) -> Self {
        debug_assert_eq!(values.len(), self.times.len());
        Self {
            times: self.times.clone(),
            values,
        }
    }
}
