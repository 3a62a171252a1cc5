//! Prediction pipelines built on criterion tables: pooled Wöhler quantiles,
//! synthetic test campaigns, and the homogenized-model transfer study.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::CriterionTable;
use crate::likelihood::{FatigueObservation, PreparedLikelihood, SpecimenModel};
use crate::optimize::{calibrate, initial_guess, CalibrationProblem, FreeMask};
use crate::strain_life::{element_lifetime, Cycles, StrainLifeParams};
use crate::weakest_link::{
    mixture_median, sample_lifetimes_stream, structure_lifetime, wohler_quantiles, SamplingOptions, StructureLifetime,
    WohlerTable, DEFAULT_RUN_OUT,
};

/// Weakest-link lifetime of a tabulated field at nominal amplitude `sigma_a`.
pub fn table_structure(params: &StrainLifeParams, table: &CriterionTable, sigma_a: f64) -> Result<StructureLifetime> {
    let strains = table.at_load(sigma_a)?;
    let elements = strains
        .iter()
        .zip(&table.volumes)
        .map(|(&d, &v)| element_lifetime(params, d, v))
        .collect::<Result<Vec<_>>>()?;
    structure_lifetime(&elements)
}

/// Lifetime of a uniformly loaded specimen; strain range `2σa/E`.
pub fn homogeneous_structure(
    params: &StrainLifeParams,
    volume: f64,
    youngs_modulus: f64,
    sigma_a: f64,
) -> Result<StructureLifetime> {
    element_lifetime(params, 2.0 * sigma_a / youngs_modulus, volume)
}

/// Structure distributions of every table at every level.
pub fn level_structures(
    params: &StrainLifeParams,
    tables: &[CriterionTable],
    levels: &[f64],
) -> Result<Vec<(f64, Vec<StructureLifetime>)>> {
    params.validate()?;
    if tables.is_empty() {
        return Err(Error::Domain("no criterion tables given".into()));
    }
    levels
        .par_iter()
        .map(|&level| {
            let structures = tables
                .iter()
                .map(|t| table_structure(params, t, level))
                .collect::<Result<Vec<_>>>()?;
            Ok((level, structures))
        })
        .collect()
}

/// Pooled quantile curve over a set of fields.
pub fn predict_wohler(
    params: &StrainLifeParams,
    tables: &[CriterionTable],
    levels: &[f64],
    quantiles: &[f64],
    options: &SamplingOptions,
) -> Result<WohlerTable> {
    wohler_quantiles(&level_structures(params, tables, levels)?, quantiles, options)
}

/// Draws `count` specimens per level, cycling over the level's structures,
/// and censors every draw reaching `run_out`.
pub fn synthetic_campaign(
    levels: &[(f64, Vec<StructureLifetime>)],
    count: usize,
    seed: u64,
    run_out: f64,
) -> Result<Vec<FatigueObservation>> {
    if levels.iter().any(|(_, s)| s.is_empty()) {
        return Err(Error::Domain("every load level needs at least one structure".into()));
    }
    let mut observations = Vec::with_capacity(levels.len() * count);
    for (l, (sigma_a, structures)) in levels.iter().enumerate() {
        let k = structures.len();
        for (j, s) in structures.iter().enumerate() {
            let share = count / k + usize::from(j < count % k);
            let stream = ((l as u64) << 32) | j as u64;
            for draw in sample_lifetimes_stream(s, share, seed, stream, run_out) {
                observations.push(if draw.censored || draw.cycles >= run_out {
                    FatigueObservation::run_out(*sigma_a, run_out)
                } else {
                    FatigueObservation::failure(*sigma_a, draw.cycles)
                });
            }
        }
    }
    Ok(observations)
}

/// One observation per distinct amplitude, picked uniformly at random.
pub fn one_per_level(observations: &[FatigueObservation], seed: u64) -> Vec<FatigueObservation> {
    let mut levels: Vec<f64> = observations.iter().map(|o| o.sigma_a).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    levels
        .iter()
        .map(|&l| {
            let at: Vec<&FatigueObservation> = observations.iter().filter(|o| o.sigma_a == l).collect();
            *at[rng.random_range(0..at.len())]
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct HomogenizationSetup<'a> {
    /// Multi-scale strain-life parameters.
    pub params: StrainLifeParams,
    pub cylinder: &'a [CriterionTable],
    /// Porous realizations of the challenge geometry.
    pub challenge: &'a [CriterionTable],
    /// Pore-free table of the challenge geometry.
    pub challenge_homogeneous: &'a CriterionTable,
    /// Volume and modulus of the homogeneous cylinder model.
    pub cylinder_volume: f64,
    pub youngs_modulus: f64,
    pub levels: Vec<f64>,
    pub samples_per_level: usize,
    pub free_mask: FreeMask,
    /// Starting point of the homogenized fit; derived from the synthetic
    /// data when absent.
    pub initial: Option<StrainLifeParams>,
    pub budget: usize,
    pub starts: usize,
    pub seed: u64,
    pub run_out: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MedianPair {
    pub load_mpa: f64,
    /// Multi-scale model; `None` for infinite life.
    pub multiscale: Option<f64>,
    /// Homogenized model.
    pub homogenized: Option<f64>,
}

impl MedianPair {
    /// Relative gap `|B − A| / A`; `None` unless both are finite.
    pub fn relative_gap(&self) -> Option<f64> {
        match (self.multiscale, self.homogenized) {
            (Some(a), Some(b)) => Some((b - a).abs() / a),
            _ => None,
        }
    }

    /// Homogenized median strictly above the multi-scale one; infinite
    /// counts as larger than any finite life.
    pub fn homogenized_longer(&self) -> bool {
        match (self.multiscale, self.homogenized) {
            (Some(a), Some(b)) => b > a,
            (Some(_), None) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HomogenizationReport {
    pub homogenized_params: StrainLifeParams,
    pub homogenized_log_likelihood: f64,
    pub n_failures: usize,
    pub n_run_outs: usize,
    pub cylinder: Vec<MedianPair>,
    pub challenge: Vec<MedianPair>,
}

fn finite(c: Cycles) -> Option<f64> {
    c.finite()
}

/// Fits a homogeneous model on lifetimes sampled from the multi-scale model
/// on the cylinder fields, then compares both models' median lives on the
/// cylinder and on the challenge geometry.
pub fn homogenize(setup: &HomogenizationSetup) -> Result<HomogenizationReport> {
    let cylinder = level_structures(&setup.params, setup.cylinder, &setup.levels)?;
    let data = synthetic_campaign(&cylinder, setup.samples_per_level, setup.seed, setup.run_out)?;
    let prepared = PreparedLikelihood::new(
        &data,
        &SpecimenModel::Homogeneous {
            volume: setup.cylinder_volume,
            youngs_modulus: setup.youngs_modulus,
        },
    )?;
    let initial = match setup.initial {
        Some(p) => p,
        None => initial_guess(&data, setup.cylinder_volume, setup.youngs_modulus, setup.params.v0)?,
    };
    let mut problem = CalibrationProblem::new(vec![&prepared], setup.free_mask, initial);
    problem.budget = setup.budget;
    problem.starts = setup.starts;
    problem.seed = setup.seed;
    let fit = calibrate(&problem)?;
    let b = fit.params;

    let challenge = level_structures(&setup.params, setup.challenge, &setup.levels)?;
    let mut cylinder_pairs = Vec::with_capacity(setup.levels.len());
    let mut challenge_pairs = Vec::with_capacity(setup.levels.len());
    for (l, &level) in setup.levels.iter().enumerate() {
        let b_cyl = homogeneous_structure(&b, setup.cylinder_volume, setup.youngs_modulus, level)?;
        cylinder_pairs.push(MedianPair {
            load_mpa: level,
            multiscale: finite(mixture_median(&cylinder[l].1)),
            homogenized: finite(b_cyl.median()),
        });
        let b_chal = table_structure(&b, setup.challenge_homogeneous, level)?;
        challenge_pairs.push(MedianPair {
            load_mpa: level,
            multiscale: finite(mixture_median(&challenge[l].1)),
            homogenized: finite(b_chal.median()),
        });
    }
    let n_failures = data.iter().filter(|o| !o.censored).count();
    Ok(HomogenizationReport {
        homogenized_params: b,
        homogenized_log_likelihood: fit.log_likelihood,
        n_failures,
        n_run_outs: data.len() - n_failures,
        cylinder: cylinder_pairs,
        challenge: challenge_pairs,
    })
}

impl<'a> HomogenizationSetup<'a> {
    pub fn new(
        params: StrainLifeParams,
        cylinder: &'a [CriterionTable],
        challenge: &'a [CriterionTable],
        challenge_homogeneous: &'a CriterionTable,
        youngs_modulus: f64,
    ) -> Self {
        Self {
            params,
            cylinder,
            challenge,
            challenge_homogeneous,
            cylinder_volume: cylinder.first().map_or(params.v0, |t| t.total_volume()),
            youngs_modulus,
            levels: cylinder.first().map(|t| t.load_levels.clone()).unwrap_or_default(),
            samples_per_level: 1000,
            free_mask: crate::optimize::ONE_LINE,
            initial: None,
            budget: crate::optimize::DEFAULT_BUDGET,
            starts: crate::optimize::DEFAULT_STARTS,
            seed: 0,
            run_out: DEFAULT_RUN_OUT,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{criterion_table, CriterionOptions, ElasticElementField};
    use crate::material_point::ChabocheParams;
    use approx::assert_relative_eq;

    fn params() -> StrainLifeParams {
        StrainLifeParams::one_line(6.0, 0.45, 0.55, 1.1e-3)
    }

    #[test]
    fn bulk_table_matches_homogeneous() {
        let mat = ChabocheParams::cast_aluminium();
        let table = criterion_table(
            &ElasticElementField::bulk(593.0).unwrap(),
            &mat,
            &[100.0, 120.0],
            &CriterionOptions::default(),
        )
        .unwrap();
        let a = table_structure(&params(), &table, 110.0).unwrap();
        let b = homogeneous_structure(&params(), 593.0, mat.youngs_modulus, 110.0).unwrap();
        assert_relative_eq!(a.ln_scale().unwrap(), b.ln_scale().unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn campaign_counts_and_censoring() {
        let p = params();
        let s = homogeneous_structure(&p, 593.0, 75500.0, 150.0).unwrap();
        let low = homogeneous_structure(&p, 593.0, 75500.0, 60.0).unwrap();
        assert!(low.is_infinite());
        let levels = vec![(150.0, vec![s, s, s]), (60.0, vec![low])];
        let obs = synthetic_campaign(&levels, 10, 3, 2e6).unwrap();
        assert_eq!(obs.len(), 20);
        assert!(obs[..10].iter().all(|o| !o.censored && o.sigma_a == 150.0));
        assert!(obs[10..].iter().all(|o| o.censored && o.n_cycles == 2e6));
        assert_eq!(obs, synthetic_campaign(&levels, 10, 3, 2e6).unwrap());
    }

    #[test]
    fn one_per_level_picks_each_amplitude() {
        let obs: Vec<FatigueObservation> = (0..12)
            .map(|i| FatigueObservation::failure(100.0 + 10.0 * (i % 3) as f64, 1e5 + i as f64))
            .collect();
        let picked = one_per_level(&obs, 9);
        assert_eq!(picked.iter().map(|o| o.sigma_a).collect::<Vec<_>>(), vec![100.0, 110.0, 120.0]);
        assert!(picked.iter().all(|p| obs.contains(p)));
    }

    #[test]
    fn median_pair_ordering() {
        let p = |a, b| MedianPair {
            load_mpa: 1.0,
            multiscale: a,
            homogenized: b,
        };
        assert!(p(Some(1.0), Some(2.0)).homogenized_longer());
        assert!(p(Some(1.0), None).homogenized_longer());
        assert!(!p(None, None).homogenized_longer());
        assert!(!p(Some(2.0), Some(2.0)).homogenized_longer());
        assert_eq!(p(Some(2.0), Some(2.2)).relative_gap().map(|g| (g * 10.0).round()), Some(1.0));
    }
}
