use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;

use super::{csv_io, ElasticElementField};
use crate::error::{Error, Result};
use crate::material_point::{
    critical_direction, criterion_delta_eps, elastic_delta_eps, neuber_correct, ChabocheParams, TensorHistory,
    DEFAULT_SAMPLES_PER_CYCLE, DEFAULT_STABILIZED_CYCLE,
};

pub const CRITERION_HEADER: &str = "element_id,load_MPa,delta_eps,volume_mm3";

/// Nominal stress amplitudes of the standard test campaign, MPa.
pub const DEFAULT_LOAD_LEVELS: [f64; 9] = [20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionOptions {
    /// Repetitions before the stabilized cycle is read.
    pub n_cycles: usize,
    pub samples_per_cycle: usize,
}

impl Default for CriterionOptions {
    fn default() -> Self {
        Self {
            n_cycles: DEFAULT_STABILIZED_CYCLE,
            samples_per_cycle: DEFAULT_SAMPLES_PER_CYCLE,
        }
    }
}

/// Stabilized-cycle criterion `Δε*` per element and nominal load level.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionTable {
    pub load_levels: Vec<f64>,
    pub element_ids: Vec<u64>,
    pub volumes: Vec<f64>,
    /// `delta_eps[element][level]`.
    pub delta_eps: Vec<Vec<f64>>,
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Domain("no load levels given".into()));
    }
    if levels.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::Domain(format!("load levels must be positive, got {levels:?}")));
    }
    if levels.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain(format!("load levels must be strictly ascending, got {levels:?}")));
    }
    Ok(())
}

/// Criterion range of one unit-load tensor at amplitude `level`.
pub(crate) fn element_delta_eps(
    params: &ChabocheParams,
    sigma_unit: &crate::tensor::SymTensor,
    level: f64,
    options: &CriterionOptions,
) -> Result<f64> {
    let amplitude = *sigma_unit * level;
    if amplitude.von_mises() <= params.yield_stress {
        return Ok(elastic_delta_eps(&params.elasticity(), &amplitude));
    }
    let history = TensorHistory::sinusoid(amplitude, options.samples_per_cycle);
    let corrected = neuber_correct(params, &history, options.n_cycles)?;
    let value = criterion_delta_eps(&corrected.strain, &critical_direction(sigma_unit))?;
    if !value.is_finite() {
        return Err(Error::Correction(format!("non-finite criterion at level {level}")));
    }
    Ok(value)
}

/// Criterion table of a field; identical unit tensors are corrected once.
pub fn criterion_table(
    field: &ElasticElementField,
    params: &ChabocheParams,
    load_levels: &[f64],
    options: &CriterionOptions,
) -> Result<CriterionTable> {
    let (rows, failures) = tabulate(field, params, load_levels, options)?;
    match failures.into_iter().next() {
        Some((id, source)) => Err(Error::Element {
            id,
            source: Box::new(source),
        }),
        None => Ok(assemble(field, load_levels, rows)),
    }
}

/// Element whose correction failed in a lenient tabulation.
#[derive(Debug)]
pub struct ElementFailure {
    pub id: u64,
    pub error: Error,
}

/// Like [`criterion_table`], but elements whose correction fails are left
/// out of the table and reported instead.
pub fn criterion_table_lenient(
    field: &ElasticElementField,
    params: &ChabocheParams,
    load_levels: &[f64],
    options: &CriterionOptions,
) -> Result<(CriterionTable, Vec<ElementFailure>)> {
    let (rows, failures) = tabulate(field, params, load_levels, options)?;
    let table = assemble(field, load_levels, rows);
    let failures = failures
        .into_iter()
        .map(|(id, error)| ElementFailure { id, error })
        .collect();
    Ok((table, failures))
}

type Rows = Vec<Option<Vec<f64>>>;

fn assemble(field: &ElasticElementField, load_levels: &[f64], rows: Rows) -> CriterionTable {
    let mut table = CriterionTable {
        load_levels: load_levels.to_vec(),
        element_ids: Vec::with_capacity(rows.len()),
        volumes: Vec::with_capacity(rows.len()),
        delta_eps: Vec::with_capacity(rows.len()),
    };
    for (e, row) in field.elements.iter().zip(rows) {
        if let Some(row) = row {
            table.element_ids.push(e.id);
            table.volumes.push(e.volume);
            table.delta_eps.push(row);
        }
    }
    table
}

fn tabulate(
    field: &ElasticElementField,
    params: &ChabocheParams,
    load_levels: &[f64],
    options: &CriterionOptions,
) -> Result<(Rows, Vec<(u64, Error)>)> {
    check_levels(load_levels)?;
    params.validate()?;
    field.validate()?;
    let mut unique: HashMap<[u64; 6], usize> = HashMap::new();
    let mut representatives = Vec::new();
    let mut index = Vec::with_capacity(field.len());
    for e in &field.elements {
        let key = e.sigma_unit.0.map(f64::to_bits);
        let next = representatives.len();
        let k = *unique.entry(key).or_insert_with(|| {
            representatives.push(*e);
            next
        });
        index.push(k);
    }
    let tasks: Vec<(usize, usize)> = (0..representatives.len())
        .flat_map(|u| (0..load_levels.len()).map(move |l| (u, l)))
        .collect();
    let values: Vec<Result<f64>> = tasks
        .par_iter()
        .map(|&(u, l)| element_delta_eps(params, &representatives[u].sigma_unit, load_levels[l], options))
        .collect();
    let n_levels = load_levels.len();
    let mut unique_rows: Vec<std::result::Result<Vec<f64>, String>> = Vec::with_capacity(representatives.len());
    let mut first_errors: Vec<Option<Error>> = Vec::with_capacity(representatives.len());
    let mut values = values.into_iter();
    for _ in 0..representatives.len() {
        let mut row = Vec::with_capacity(n_levels);
        let mut error = None;
        for v in values.by_ref().take(n_levels) {
            match v {
                Ok(x) => row.push(x),
                Err(e) => {
                    if error.is_none() {
                        error = Some(e);
                    }
                }
            }
        }
        match error {
            None => {
                unique_rows.push(Ok(row));
                first_errors.push(None);
            }
            Some(e) => {
                unique_rows.push(Err(e.to_string()));
                first_errors.push(Some(e));
            }
        }
    }
    let mut failures = Vec::new();
    let rows = field
        .elements
        .iter()
        .zip(&index)
        .map(|(e, &u)| match &unique_rows[u] {
            Ok(row) => Some(row.clone()),
            Err(message) => {
                let error = if representatives[u].id == e.id {
                    first_errors[u].take().unwrap_or_else(|| Error::Correction(message.clone()))
                } else {
                    Error::Correction(message.clone())
                };
                failures.push((e.id, error));
                None
            }
        })
        .collect();
    Ok((rows, failures))
}

impl CriterionTable {
    pub fn n_elements(&self) -> usize {
        self.element_ids.len()
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }

    /// Elements sharing an identical row merge into one with the summed
    /// volume; the weakest-link scale is unchanged.
    pub fn compact(&self) -> CriterionTable {
        let mut groups: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut out = CriterionTable {
            load_levels: self.load_levels.clone(),
            element_ids: Vec::new(),
            volumes: Vec::new(),
            delta_eps: Vec::new(),
        };
        for i in 0..self.n_elements() {
            let key: Vec<u64> = self.delta_eps[i].iter().map(|v| v.to_bits()).collect();
            match groups.get(&key) {
                Some(&g) => {
                    out.volumes[g] += self.volumes[i];
                    out.element_ids[g] = out.element_ids[g].min(self.element_ids[i]);
                }
                None => {
                    groups.insert(key, out.element_ids.len());
                    out.element_ids.push(self.element_ids[i]);
                    out.volumes.push(self.volumes[i]);
                    out.delta_eps.push(self.delta_eps[i].clone());
                }
            }
        }
        out
    }

    /// Piecewise-linear `Δε*` of every element at amplitude `sigma_a`.
    /// Tabulated levels are returned exactly; extrapolation is an error.
    pub fn at_load(&self, sigma_a: f64) -> Result<Vec<f64>> {
        let levels = &self.load_levels;
        let (min, max) = (levels[0], *levels.last().expect("nonempty levels"));
        if let Some(l) = levels.iter().position(|&x| x == sigma_a) {
            return Ok(self.delta_eps.iter().map(|row| row[l]).collect());
        }
        if !(sigma_a > min && sigma_a < max) {
            return Err(Error::Extrapolation { sigma_a, min, max });
        }
        let hi = levels.partition_point(|&x| x < sigma_a);
        let lo = hi - 1;
        let t = (sigma_a - levels[lo]) / (levels[hi] - levels[lo]);
        Ok(self
            .delta_eps
            .iter()
            .map(|row| row[lo] + t * (row[hi] - row[lo]))
            .collect())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CRITERION_HEADER.split(',')).map_err(csv_io)?;
        for i in 0..self.n_elements() {
            for (l, level) in self.load_levels.iter().enumerate() {
                w.write_record([
                    self.element_ids[i].to_string(),
                    level.to_string(),
                    self.delta_eps[i][l].to_string(),
                    self.volumes[i].to_string(),
                ])
                .map_err(csv_io)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let header = reader.headers().map_err(|e| Error::parse(1, e.to_string()))?.clone();
        if header.iter().collect::<Vec<_>>().join(",") != CRITERION_HEADER {
            return Err(Error::parse(1, format!("expected header `{CRITERION_HEADER}`")));
        }
        let mut order: Vec<u64> = Vec::new();
        let mut rows: HashMap<u64, (f64, Vec<(f64, f64)>)> = HashMap::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::parse(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != 4 {
                return Err(Error::parse(line, format!("expected 4 columns, found {}", record.len())));
            }
            let id: u64 = record[0]
                .trim()
                .parse()
                .map_err(|_| Error::parse(line, format!("invalid element id `{}`", &record[0])))?;
            let num = |k: usize| -> Result<f64> {
                record[k]
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(line, format!("invalid number `{}`", &record[k])))
            };
            let (level, delta, volume) = (num(1)?, num(2)?, num(3)?);
            if delta < 0.0 {
                return Err(Error::parse(line, "criterion range must be nonnegative"));
            }
            if volume <= 0.0 {
                return Err(Error::parse(line, format!("element {id} has nonpositive volume {volume}")));
            }
            let entry = rows.entry(id).or_insert_with(|| {
                order.push(id);
                (volume, Vec::new())
            });
            if entry.0 != volume {
                return Err(Error::parse(line, format!("element {id} has inconsistent volumes")));
            }
            entry.1.push((level, delta));
        }
        let first = order.first().ok_or_else(|| Error::parse(1, "criterion table is empty"))?;
        let load_levels: Vec<f64> = rows[first].1.iter().map(|(l, _)| *l).collect();
        check_levels(&load_levels).map_err(|e| Error::parse(1, e.to_string()))?;
        let mut table = CriterionTable {
            load_levels,
            element_ids: Vec::with_capacity(order.len()),
            volumes: Vec::with_capacity(order.len()),
            delta_eps: Vec::with_capacity(order.len()),
        };
        for id in order {
            let (volume, entries) = &rows[&id];
            if entries.len() != table.load_levels.len() || entries.iter().zip(&table.load_levels).any(|((l, _), m)| l != m) {
                return Err(Error::parse(0, format!("element {id} does not cover the common load levels")));
            }
            table.element_ids.push(id);
            table.volumes.push(*volume);
            table.delta_eps.push(entries.iter().map(|(_, d)| *d).collect());
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{synth_field, Element, PoreFieldStats};
    use crate::tensor::SymTensor;
    use approx::assert_relative_eq;

    fn params() -> ChabocheParams {
        ChabocheParams::cast_aluminium()
    }

    #[test]
    fn lenient_tabulation_reports_failed_elements() {
        let field = ElasticElementField::new(
            vec![
                Element {
                    id: 0,
                    volume: 1.0,
                    sigma_unit: SymTensor::uniaxial_z(1.0),
                },
                Element {
                    id: 5,
                    volume: 1.0,
                    sigma_unit: SymTensor::uniaxial_z(1e12),
                },
            ],
            "t",
        )
        .unwrap();
        let mat = ChabocheParams::cast_aluminium();
        let (table, failures) = criterion_table_lenient(&field, &mat, &[10.0, 20.0], &CriterionOptions::default()).unwrap();
        assert_eq!(table.element_ids, vec![0]);
        assert_eq!(failures.len(), 1);
        assert_eq!(failures[0].id, 5);
        assert!(matches!(
            criterion_table(&field, &mat, &[10.0, 20.0], &CriterionOptions::default()),
            Err(Error::Element { id: 5, .. })
        ));
    }

    #[test]
    fn bulk_element_is_elastic() {
        let field = ElasticElementField::bulk(593.0).unwrap();
        let t = criterion_table(&field, &params(), &[80.0], &CriterionOptions::default()).unwrap();
        assert!((t.delta_eps[0][0] - 2.1192e-3).abs() < 1e-7);
        assert_relative_eq!(t.delta_eps[0][0], 160.0 / 75500.0, max_relative = 1e-14);
    }

    #[test]
    fn cavity_peak_shell_widens_range() {
        let kt = crate::field::cavity_concentration(0.3);
        let field = ElasticElementField::new(
            vec![Element {
                id: 3,
                volume: 1.0,
                sigma_unit: SymTensor::uniaxial_z(kt),
            }],
            "shell",
        )
        .unwrap();
        let t = criterion_table(&field, &params(), &[100.0], &CriterionOptions::default()).unwrap();
        assert!(t.delta_eps[0][0] > 2.0 * 100.0 * kt / 75500.0);
    }

    #[test]
    fn rows_nondecreasing_and_sub_yield_exact() {
        let stats = PoreFieldStats::default();
        let field = synth_field(&stats, 8, 1).unwrap().field;
        let p = params();
        let t = criterion_table(&field, &p, &DEFAULT_LOAD_LEVELS, &CriterionOptions::default()).unwrap();
        assert_eq!(t.n_elements(), field.len());
        for (i, row) in t.delta_eps.iter().enumerate() {
            for w in row.windows(2) {
                assert!(w[1] >= w[0], "element {i}: {row:?}");
            }
            for (l, level) in DEFAULT_LOAD_LEVELS.iter().enumerate() {
                let amp = field.elements[i].sigma_unit * *level;
                if amp.von_mises() <= p.yield_stress {
                    assert_eq!(row[l], elastic_delta_eps(&p.elasticity(), &amp));
                }
            }
        }
    }

    #[test]
    fn levels_must_ascend() {
        let field = ElasticElementField::bulk(1.0).unwrap();
        let opts = CriterionOptions::default();
        assert!(criterion_table(&field, &params(), &[40.0, 20.0], &opts).is_err());
        assert!(criterion_table(&field, &params(), &[], &opts).is_err());
        assert!(criterion_table(&field, &params(), &[-1.0, 20.0], &opts).is_err());
    }

    #[test]
    fn csv_round_trip_compaction_and_interpolation() {
        let field = ElasticElementField::new(
            vec![
                Element {
                    id: 0,
                    volume: 500.0,
                    sigma_unit: SymTensor::uniaxial_z(1.0),
                },
                Element {
                    id: 1,
                    volume: 2.0,
                    sigma_unit: SymTensor::uniaxial_z(2.0),
                },
                Element {
                    id: 2,
                    volume: 3.0,
                    sigma_unit: SymTensor::uniaxial_z(1.0),
                },
            ],
            "t",
        )
        .unwrap();
        let t = criterion_table(&field, &params(), &[20.0, 60.0, 100.0], &CriterionOptions::default()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with(CRITERION_HEADER));
        assert_eq!(CriterionTable::read_csv(buf.as_slice()).unwrap(), t);

        let c = t.compact();
        assert_eq!(c.n_elements(), 2);
        assert_eq!(c.volumes, vec![503.0, 2.0]);

        assert_eq!(t.at_load(60.0).unwrap()[1], t.delta_eps[1][1]);
        let mid = t.at_load(40.0).unwrap();
        assert_relative_eq!(mid[0], 0.5 * (t.delta_eps[0][0] + t.delta_eps[0][1]), max_relative = 1e-14);
        assert!(matches!(t.at_load(110.0), Err(Error::Extrapolation { .. })));
        assert!(matches!(t.at_load(10.0), Err(Error::Extrapolation { .. })));
    }
}
