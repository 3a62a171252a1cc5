//! Per-element volumes and unit-load elastic stresses of a specimen.
//!
//! Stresses scale linearly with the nominal amplitude, so one elastic
//! solution serves every load level.

mod criterion;
mod synth;

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::SymTensor;

pub use criterion::{
    criterion_table, criterion_table_lenient, CriterionOptions, CriterionTable, ElementFailure, CRITERION_HEADER,
    DEFAULT_LOAD_LEVELS,
};
pub use synth::{
    cavity_concentration, cavity_profile, DEFAULT_SHELLS, notched_field, synth_field, thin_variant, NotchSpec, Pore, PoreFieldStats,
    SynthesizedField,
};

pub const FIELD_HEADER: &str = "id,volume_mm3,sxx,syy,szz,sxy,syz,sxz";
const GEOMETRY_PREFIX: &str = "# geometry:";
const NOTE_PREFIX: &str = "# note:";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    pub id: u64,
    /// mm³
    pub volume: f64,
    /// Stress per unit nominal amplitude.
    pub sigma_unit: SymTensor,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ElasticElementField {
    pub elements: Vec<Element>,
    pub geometry_tag: String,
    pub note: Option<String>,
}

impl ElasticElementField {
    pub fn new(elements: Vec<Element>, geometry_tag: impl Into<String>) -> Result<Self> {
        let field = Self {
            elements,
            geometry_tag: geometry_tag.into(),
            note: None,
        };
        field.validate()?;
        Ok(field)
    }

    /// Homogeneous uniaxial field along z.
    pub fn bulk(volume: f64) -> Result<Self> {
        Self::new(
            vec![Element {
                id: 0,
                volume,
                sigma_unit: SymTensor::uniaxial_z(1.0),
            }],
            "bulk",
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.elements.is_empty() {
            return Err(Error::Domain("field has no elements".into()));
        }
        let mut seen = HashSet::with_capacity(self.elements.len());
        for e in &self.elements {
            if !(e.volume > 0.0 && e.volume.is_finite()) {
                return Err(Error::Domain(format!("element {} has nonpositive volume {}", e.id, e.volume)));
            }
            if !e.sigma_unit.is_finite() {
                return Err(Error::Domain(format!("element {} has a non-finite stress", e.id)));
            }
            if !seen.insert(e.id) {
                return Err(Error::Domain(format!("duplicate element id {}", e.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn total_volume(&self) -> f64 {
        self.elements.iter().map(|e| e.volume).sum()
    }

    /// `k` concatenated copies with ids renumbered from zero.
    pub fn tile(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("tiling needs at least one copy".into()));
        }
        if k == 1 {
            return Ok(self.clone());
        }
        let mut elements = Vec::with_capacity(self.len() * k);
        for _ in 0..k {
            for e in &self.elements {
                elements.push(Element {
                    id: elements.len() as u64,
                    ..*e
                });
            }
        }
        Ok(Self {
            elements,
            geometry_tag: format!("{} x{k}", self.geometry_tag),
            note: self.note.clone(),
        })
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        if !self.geometry_tag.is_empty() {
            writeln!(out, "{GEOMETRY_PREFIX} {}", self.geometry_tag)?;
        }
        if let Some(note) = &self.note {
            writeln!(out, "{NOTE_PREFIX} {note}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(FIELD_HEADER.split(',')).map_err(csv_io)?;
        for e in &self.elements {
            let mut row = vec![e.id.to_string(), e.volume.to_string()];
            row.extend(e.sigma_unit.0.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(file))
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let mut geometry_tag = String::new();
        let mut note = None;
        let mut body = String::new();
        let mut first_line = 0;
        for (i, line) in lines.by_ref() {
            let line = line?;
            let trimmed = line.trim();
            if let Some(tag) = trimmed.strip_prefix(GEOMETRY_PREFIX) {
                geometry_tag = tag.trim().to_string();
            } else if let Some(n) = trimmed.strip_prefix(NOTE_PREFIX) {
                note = Some(n.trim().to_string());
            } else if trimmed.starts_with('#') || trimmed.is_empty() {
            } else {
                if trimmed != FIELD_HEADER {
                    return Err(Error::parse(i + 1, format!("expected header `{FIELD_HEADER}`")));
                }
                first_line = i + 1;
                break;
            }
        }
        if first_line == 0 {
            return Err(Error::parse(1, "missing header"));
        }
        for (_, line) in lines {
            body.push_str(&line?);
            body.push('\n');
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .from_reader(body.as_bytes());
        let mut elements = Vec::new();
        let mut seen = HashSet::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                Error::parse(first_line + line, e.to_string())
            })?;
            let line = first_line + record.position().map_or(0, |p| p.line() as usize);
            if record.len() != 8 {
                return Err(Error::parse(line, format!("expected 8 columns, found {}", record.len())));
            }
            let id: u64 = record[0]
                .trim()
                .parse()
                .map_err(|_| Error::parse(line, format!("invalid element id `{}`", &record[0])))?;
            let mut values = [0.0f64; 7];
            for (k, v) in values.iter_mut().enumerate() {
                let cell = record[k + 1].trim();
                *v = cell
                    .parse()
                    .map_err(|_| Error::parse(line, format!("invalid number `{cell}`")))?;
            }
            if !(values[0] > 0.0 && values[0].is_finite()) {
                return Err(Error::parse(line, format!("element {id} has nonpositive volume {}", values[0])));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(line, format!("element {id} has a non-finite value")));
            }
            if !seen.insert(id) {
                return Err(Error::parse(line, format!("duplicate element id {id}")));
            }
            elements.push(Element {
                id,
                volume: values[0],
                sigma_unit: SymTensor([values[1], values[2], values[3], values[4], values[5], values[6]]),
            });
        }
        if elements.is_empty() {
            return Err(Error::parse(first_line, "field has no elements"));
        }
        Ok(Self {
            elements,
            geometry_tag,
            note,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file))
    }
}

pub fn load_field(path: impl AsRef<Path>) -> Result<ElasticElementField> {
    ElasticElementField::load(path)
}

pub fn tile_field(field: &ElasticElementField, k: usize) -> Result<ElasticElementField> {
    field.tile(k)
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
