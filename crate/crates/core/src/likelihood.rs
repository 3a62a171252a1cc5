//! Censored log-likelihood of fatigue observations.
//!
//! Failures contribute `ln(f(N) + ε)` and run-outs `ln(S(N) + ε)`, where `f`
//! and `S` are the structure density and survival averaged over the
//! synthetic fields assigned to the observation and `ε = 1e-10`.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::CriterionTable;
use crate::strain_life::{ln_g_inverse, ln_volume_factor, StrainLifeParams, WeibullLifetime};
use crate::weakest_link::ln_structure_scale;

/// Additive floor inside every logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

/// Synthetic fields averaged per observation.
pub const DEFAULT_SYNTHETIC_FIELDS: usize = 10;

pub const OBSERVATIONS_HEADER: &str = "sigma_a_MPa,n_cycles,censored";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FatigueObservation {
    /// Nominal stress amplitude, MPa.
    pub sigma_a: f64,
    /// Cycles at failure, or at test stop for a run-out.
    pub n_cycles: f64,
    pub censored: bool,
}

impl FatigueObservation {
    pub fn failure(sigma_a: f64, n_cycles: f64) -> Self {
        Self {
            sigma_a,
            n_cycles,
            censored: false,
        }
    }

    pub fn run_out(sigma_a: f64, n_cycles: f64) -> Self {
        Self {
            sigma_a,
            n_cycles,
            censored: true,
        }
    }
}

pub fn read_observations<R: BufRead>(input: R) -> Result<Vec<FatigueObservation>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header = reader.headers().map_err(|e| Error::parse(1, e.to_string()))?.clone();
    if header.iter().map(str::trim).collect::<Vec<_>>().join(",") != OBSERVATIONS_HEADER {
        return Err(Error::parse(1, format!("expected header `{OBSERVATIONS_HEADER}`")));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 3 {
            return Err(Error::parse(line, format!("expected 3 columns, found {}", record.len())));
        }
        let num = |k: usize| -> Result<f64> {
            record[k]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0 && v.is_finite())
                .ok_or_else(|| Error::parse(line, format!("expected a positive number, found `{}`", &record[k])))
        };
        let censored = match record[2].trim() {
            "0" => false,
            "1" => true,
            other => return Err(Error::parse(line, format!("censored flag must be 0 or 1, found `{other}`"))),
        };
        out.push(FatigueObservation {
            sigma_a: num(0)?,
            n_cycles: num(1)?,
            censored,
        });
    }
    Ok(out)
}

pub fn load_observations(path: impl AsRef<Path>) -> Result<Vec<FatigueObservation>> {
    read_observations(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_observations<W: Write>(observations: &[FatigueObservation], mut out: W) -> Result<()> {
    writeln!(out, "{OBSERVATIONS_HEADER}")?;
    for o in observations {
        writeln!(out, "{},{},{}", o.sigma_a, o.n_cycles, u8::from(o.censored))?;
    }
    Ok(())
}

/// How the specimen behind each observation is represented.
#[derive(Debug, Clone)]
pub enum SpecimenModel {
    /// Uniform uniaxial stress over `volume`, strain range `2σa/E`.
    Homogeneous { volume: f64, youngs_modulus: f64 },
    /// Known fields: one table shared by all observations, or one per observation.
    Heterogeneous { tables: Vec<CriterionTable> },
    /// Pool of synthetic tables; `assignment[i]` lists the pool indices
    /// averaged for observation `i`.
    UnknownPores {
        pool: Vec<CriterionTable>,
        assignment: Vec<Vec<usize>>,
    },
}

impl SpecimenModel {
    /// Every observation averages over the whole pool.
    pub fn unknown_pores_shared(pool: Vec<CriterionTable>, n_observations: usize) -> Self {
        let all: Vec<usize> = (0..pool.len()).collect();
        Self::UnknownPores {
            assignment: vec![all; n_observations],
            pool,
        }
    }

    /// Frozen per-observation draw of `n_k` distinct pool members.
    pub fn unknown_pores_sampled(pool: Vec<CriterionTable>, n_observations: usize, n_k: usize, seed: u64) -> Result<Self> {
        if n_k == 0 || n_k > pool.len() {
            return Err(Error::Domain(format!("cannot draw {n_k} fields from a pool of {}", pool.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let assignment = (0..n_observations)
            .map(|_| {
                let mut picks = sample(&mut rng, pool.len(), n_k).into_vec();
                picks.sort_unstable();
                picks
            })
            .collect();
        Ok(Self::UnknownPores { pool, assignment })
    }

    /// Tables of observation `i`, keyed by their position in the model.
    fn tables_for(&self, observation: usize) -> Result<Vec<(usize, &CriterionTable)>> {
        match self {
            SpecimenModel::Homogeneous { .. } => Ok(Vec::new()),
            SpecimenModel::Heterogeneous { tables } => match tables.len() {
                1 => Ok(vec![(0, &tables[0])]),
                n if observation < n => Ok(vec![(observation, &tables[observation])]),
                n => Err(Error::Domain(format!("{n} tables for observation {observation}"))),
            },
            SpecimenModel::UnknownPores { pool, assignment } => {
                let picks = assignment
                    .get(observation)
                    .ok_or_else(|| Error::Domain(format!("no field assignment for observation {observation}")))?;
                if picks.is_empty() {
                    return Err(Error::Domain("each observation needs at least one synthetic field".into()));
                }
                picks
                    .iter()
                    .map(|&k| {
                        pool.get(k)
                            .map(|t| (k, t))
                            .ok_or_else(|| Error::Domain(format!("pool index {k} out of range")))
                    })
                    .collect()
            }
        }
    }
}

/// One structure as (strain index, volume) pairs.
#[derive(Debug, Clone)]
struct ElementSet {
    elements: Vec<(usize, f64)>,
}

/// Observation data resolved against the specimen model once, so each
/// parameter evaluation only inverts the strain-life curve and aggregates.
#[derive(Debug, Clone)]
pub struct PreparedLikelihood {
    /// Distinct criterion ranges.
    strains: Vec<f64>,
    sets: Vec<ElementSet>,
    /// Structure set indices and observation per likelihood term.
    terms: Vec<(Vec<usize>, FatigueObservation)>,
}

impl PreparedLikelihood {
    pub fn new(observations: &[FatigueObservation], model: &SpecimenModel) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::Domain("no observations".into()));
        }
        let mut strain_index: HashMap<u64, usize> = HashMap::new();
        let mut strains = Vec::new();
        let mut set_index: HashMap<(usize, u64), usize> = HashMap::new();
        let mut sets = Vec::new();
        let mut terms = Vec::with_capacity(observations.len());
        let mut intern = |value: f64, strains: &mut Vec<f64>| {
            *strain_index.entry(value.to_bits()).or_insert_with(|| {
                strains.push(value);
                strains.len() - 1
            })
        };
        for (i, obs) in observations.iter().enumerate() {
            if !(obs.sigma_a > 0.0 && obs.n_cycles > 0.0) {
                return Err(Error::Domain(format!("observation {i} must have positive load and cycles")));
            }
            let indices = match model {
                SpecimenModel::Homogeneous { volume, youngs_modulus } => {
                    if !(*volume > 0.0 && *youngs_modulus > 0.0) {
                        return Err(Error::InvalidParameter("homogeneous volume and modulus must be positive".into()));
                    }
                    let k = intern(2.0 * obs.sigma_a / youngs_modulus, &mut strains);
                    sets.push(ElementSet {
                        elements: vec![(k, *volume)],
                    });
                    vec![sets.len() - 1]
                }
                _ => {
                    let mut indices = Vec::new();
                    for (position, table) in model.tables_for(i)? {
                        let key = (position, obs.sigma_a.to_bits());
                        if let Some(&s) = set_index.get(&key) {
                            indices.push(s);
                            continue;
                        }
                        let row = table.at_load(obs.sigma_a)?;
                        let elements = row
                            .iter()
                            .zip(&table.volumes)
                            .map(|(&d, &v)| (intern(d, &mut strains), v))
                            .collect();
                        sets.push(ElementSet { elements });
                        set_index.insert(key, sets.len() - 1);
                        indices.push(sets.len() - 1);
                    }
                    indices
                }
            };
            terms.push((indices, *obs));
        }
        Ok(Self { strains, sets, terms })
    }

    pub fn n_observations(&self) -> usize {
        self.terms.len()
    }

    pub fn n_failures(&self) -> usize {
        self.terms.iter().filter(|(_, o)| !o.censored).count()
    }

    /// Structure lifetime of every distinct structure.
    fn structures(&self, params: &StrainLifeParams) -> Result<Vec<WeibullLifetime>> {
        params.validate()?;
        let m = params.m;
        let ln_lives: Vec<Option<f64>> = self.strains.par_iter().map(|&d| ln_g_inverse(params, 0.5 * d)).collect();
        Ok(self
            .sets
            .par_iter()
            .map(|set| {
                let weights: Vec<f64> = set
                    .elements
                    .iter()
                    .filter_map(|&(k, v)| ln_lives[k].map(|ln_n| -m * (ln_n + ln_volume_factor(params, v))))
                    .collect();
                WeibullLifetime::from_ln_scale(ln_structure_scale(&weights, m), m)
            })
            .collect())
    }

    /// Per-observation likelihood terms in input order.
    pub fn terms(&self, params: &StrainLifeParams) -> Result<Vec<f64>> {
        let structures = self.structures(params)?;
        Ok(self
            .terms
            .par_iter()
            .map(|(indices, obs)| {
                let k = indices.len() as f64;
                let avg = indices
                    .iter()
                    .map(|&s| {
                        let st = &structures[s];
                        if obs.censored {
                            st.survival(obs.n_cycles)
                        } else {
                            st.pdf(obs.n_cycles)
                        }
                    })
                    .sum::<f64>()
                    / k;
                (avg + LOG_FLOOR).ln()
            })
            .collect())
    }

    /// Total log-likelihood, summed in observation order.
    pub fn evaluate(&self, params: &StrainLifeParams) -> Result<f64> {
        Ok(self.terms(params)?.iter().sum())
    }
}

/// Structure distributions behind an observation at amplitude `sigma_a`:
/// one for homogeneous and heterogeneous models, one per table otherwise.
pub fn structure_for(
    params: &StrainLifeParams,
    model: &SpecimenModel,
    observation: usize,
    sigma_a: f64,
) -> Result<Vec<WeibullLifetime>> {
    let single = match model {
        SpecimenModel::UnknownPores { pool, assignment } => SpecimenModel::UnknownPores {
            pool: pool.clone(),
            assignment: vec![assignment
                .get(observation)
                .cloned()
                .ok_or_else(|| Error::Domain(format!("no field assignment for observation {observation}")))?],
        },
        SpecimenModel::Heterogeneous { tables } if tables.len() > 1 => SpecimenModel::Heterogeneous {
            tables: vec![tables
                .get(observation)
                .cloned()
                .ok_or_else(|| Error::Domain(format!("no table for observation {observation}")))?],
        },
        other => other.clone(),
    };
    let prepared = PreparedLikelihood::new(&[FatigueObservation::failure(sigma_a, 1.0)], &single)?;
    prepared.structures(params)
}

pub fn loglik_homogeneous(
    params: &StrainLifeParams,
    observations: &[FatigueObservation],
    volume: f64,
    youngs_modulus: f64,
) -> Result<f64> {
    PreparedLikelihood::new(observations, &SpecimenModel::Homogeneous { volume, youngs_modulus })?.evaluate(params)
}

/// `tables[i]` is the known field of observation `i`; a single table is shared.
pub fn loglik_heterogeneous(params: &StrainLifeParams, observations: &[FatigueObservation], tables: &[CriterionTable]) -> Result<f64> {
    PreparedLikelihood::new(
        observations,
        &SpecimenModel::Heterogeneous {
            tables: tables.to_vec(),
        },
    )?
    .evaluate(params)
}

/// Every observation averages over all `tables`.
pub fn loglik_unknown_pores(params: &StrainLifeParams, observations: &[FatigueObservation], tables: &[CriterionTable]) -> Result<f64> {
    if tables.is_empty() {
        return Err(Error::Domain("at least one synthetic field is required".into()));
    }
    PreparedLikelihood::new(
        observations,
        &SpecimenModel::unknown_pores_shared(tables.to_vec(), observations.len()),
    )?
    .evaluate(params)
}
