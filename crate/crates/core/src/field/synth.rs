use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{ElasticElementField, Element};
use crate::error::{Error, Result};
use crate::strain_life::DEFAULT_REFERENCE_VOLUME;
use crate::tensor::SymTensor;

/// Default number of concentric shells discretizing one pore.
pub const DEFAULT_SHELLS: usize = 8;

/// Outer shell radius relative to the pore radius.
const SHELL_EXTENT: f64 = 3.0;

/// Equatorial stress concentration of a spherical cavity under remote
/// uniaxial tension.
pub fn cavity_concentration(nu: f64) -> f64 {
    (27.0 - 15.0 * nu) / (2.0 * (7.0 - 5.0 * nu))
}

/// Equatorial axial stress around a spherical cavity relative to the remote
/// stress, as a function of `a / r`.
pub fn cavity_profile(nu: f64, radius_ratio: f64) -> f64 {
    let d = 2.0 * (7.0 - 5.0 * nu);
    1.0 + (4.0 - 5.0 * nu) / d * radius_ratio.powi(3) + 9.0 / d * radius_ratio.powi(5)
}

/// Statistical description of a porous gauge section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoreFieldStats {
    /// Pores per mm³ above the acceptance radius.
    pub pore_density: f64,
    pub radius_median_um: f64,
    pub radius_log_sd: f64,
    pub accept_radius_um: f64,
    pub max_radius_um: f64,
    pub gauge_radius_mm: f64,
    pub gauge_length_mm: f64,
    pub surface_kt_boost: f64,
    pub poisson_ratio: f64,
}

impl Default for PoreFieldStats {
    fn default() -> Self {
        let radius = 3.0;
        let stats = Self {
            pore_density: 1.0,
            radius_median_um: 40.0,
            radius_log_sd: 0.5,
            accept_radius_um: 50.0,
            max_radius_um: 300.0,
            gauge_radius_mm: radius,
            gauge_length_mm: DEFAULT_REFERENCE_VOLUME / (std::f64::consts::PI * radius * radius),
            surface_kt_boost: 1.25,
            poisson_ratio: 0.3,
        };
        stats.with_volume_fraction(0.0028)
    }
}

impl PoreFieldStats {
    pub fn validate(&self) -> Result<()> {
        let ok = self.pore_density >= 0.0
            && self.pore_density.is_finite()
            && self.radius_median_um > 0.0
            && self.radius_log_sd > 0.0
            && self.accept_radius_um > 0.0
            && self.max_radius_um > self.accept_radius_um
            && self.gauge_radius_mm > 0.0
            && self.gauge_length_mm > 0.0
            && self.surface_kt_boost >= 1.0
            && self.poisson_ratio > 0.0
            && self.poisson_ratio < 0.5;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("inadmissible pore statistics {self:?}")))
        }
    }

    pub fn gauge_volume(&self) -> f64 {
        std::f64::consts::PI * self.gauge_radius_mm * self.gauge_radius_mm * self.gauge_length_mm
    }

    fn log_bounds(&self) -> (Normal, f64, f64) {
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        let z = |r: f64| (r / self.radius_median_um).ln() / self.radius_log_sd;
        (normal, z(self.accept_radius_um), z(self.max_radius_um))
    }

    /// Cumulative distribution of the truncated log-normal radius law (µm).
    pub fn radius_cdf(&self, radius_um: f64) -> f64 {
        let (normal, lo, hi) = self.log_bounds();
        let z = ((radius_um / self.radius_median_um).ln() / self.radius_log_sd).clamp(lo, hi);
        (normal.cdf(z) - normal.cdf(lo)) / (normal.cdf(hi) - normal.cdf(lo))
    }

    /// Mean pore volume in mm³ under the truncated radius law.
    pub fn mean_pore_volume(&self) -> f64 {
        let (normal, lo, hi) = self.log_bounds();
        let s = self.radius_log_sd;
        let median_mm = self.radius_median_um * 1e-3;
        let mass = normal.cdf(hi) - normal.cdf(lo);
        let third_moment = median_mm.powi(3) * (4.5 * s * s).exp() * (normal.cdf(hi - 3.0 * s) - normal.cdf(lo - 3.0 * s)) / mass;
        4.0 / 3.0 * std::f64::consts::PI * third_moment
    }

    pub fn volume_fraction(&self) -> f64 {
        self.pore_density * self.mean_pore_volume()
    }

    /// Same statistics with the density set to reach an expected pore
    /// volume fraction.
    pub fn with_volume_fraction(mut self, fraction: f64) -> Self {
        self.pore_density = fraction / self.mean_pore_volume();
        self
    }

    fn sample_radius_mm(&self, rng: &mut impl Rng) -> f64 {
        let (normal, lo, hi) = self.log_bounds();
        let (plo, phi) = (normal.cdf(lo), normal.cdf(hi));
        let u: f64 = rng.random();
        let z = normal.inverse_cdf(plo + u * (phi - plo)).clamp(lo, hi);
        self.radius_median_um * (self.radius_log_sd * z).exp() * 1e-3
    }
}

/// Iso-volume slender variant: radius divided by `d`, length multiplied by `d²`.
pub fn thin_variant(stats: &PoreFieldStats, radius_divisor: f64) -> Result<PoreFieldStats> {
    if !(radius_divisor >= 1.0 && radius_divisor.is_finite()) {
        return Err(Error::Domain(format!("radius divisor must be at least 1, got {radius_divisor}")));
    }
    Ok(PoreFieldStats {
        gauge_radius_mm: stats.gauge_radius_mm / radius_divisor,
        gauge_length_mm: stats.gauge_length_mm * radius_divisor * radius_divisor,
        ..*stats
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pore {
    /// mm, gauge axis along z.
    pub center: [f64; 3],
    /// mm
    pub radius: f64,
    pub surface_breaking: bool,
}

impl Pore {
    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.radius.powi(3)
    }

    fn axial_distance(&self) -> f64 {
        self.center[0].hypot(self.center[1])
    }
}

#[derive(Debug, Clone)]
pub struct SynthesizedField {
    pub field: ElasticElementField,
    pub pores: Vec<Pore>,
    pub gauge_volume: f64,
}

impl SynthesizedField {
    pub fn pore_volume_fraction(&self) -> f64 {
        self.pores.iter().map(Pore::volume).sum::<f64>() / self.gauge_volume
    }

    pub fn surface_breaking_fraction(&self) -> f64 {
        if self.pores.is_empty() {
            return 0.0;
        }
        self.pores.iter().filter(|p| p.surface_breaking).count() as f64 / self.pores.len() as f64
    }
}

fn draw_pores(stats: &PoreFieldStats, rng: &mut ChaCha8Rng) -> Vec<Pore> {
    let mean = stats.pore_density * stats.gauge_volume();
    let count = if mean > 0.0 {
        Poisson::new(mean).expect("positive Poisson mean").sample(rng) as usize
    } else {
        0
    };
    (0..count)
        .map(|_| {
            let r = stats.gauge_radius_mm * rng.random::<f64>().sqrt();
            let theta = std::f64::consts::TAU * rng.random::<f64>();
            let z = stats.gauge_length_mm * (rng.random::<f64>() - 0.5);
            let radius = stats.sample_radius_mm(rng);
            let mut pore = Pore {
                center: [r * theta.cos(), r * theta.sin(), z],
                radius,
                surface_breaking: false,
            };
            pore.surface_breaking = pore.axial_distance() > stats.gauge_radius_mm - radius;
            pore
        })
        .collect()
}

/// Shell volumes and unit-load axial stress factors of one pore.
fn pore_shells<'a>(stats: &'a PoreFieldStats, pore: &Pore, shells: usize) -> impl Iterator<Item = (f64, f64)> + 'a {
    let a = pore.radius;
    let boost = if pore.surface_breaking { stats.surface_kt_boost } else { 1.0 };
    (0..shells).map(move |i| {
        let inner = a * SHELL_EXTENT.powf(i as f64 / shells as f64);
        let outer = a * SHELL_EXTENT.powf((i + 1) as f64 / shells as f64);
        let volume = 4.0 / 3.0 * std::f64::consts::PI * (outer.powi(3) - inner.powi(3));
        let mut factor = cavity_profile(stats.poisson_ratio, a / inner);
        if i == 0 {
            factor *= boost;
        }
        (volume, factor)
    })
}

/// Statistical porous field: Poisson pore count, uniform centres in the
/// gauge cylinder, truncated log-normal radii and analytical cavity shells.
/// The remaining gauge volume is one bulk element at the nominal stress.
pub fn synth_field(stats: &PoreFieldStats, shells: usize, seed: u64) -> Result<SynthesizedField> {
    synthesize(stats, shells, seed, None).map(|(f, _)| f)
}

/// Surface layer of elevated stress mimicking a notch root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NotchSpec {
    /// Elastic stress concentration inside the layer.
    pub kt: f64,
    /// Layer depth below the lateral surface, mm.
    pub depth_mm: f64,
}

impl Default for NotchSpec {
    fn default() -> Self {
        Self { kt: 2.5, depth_mm: 0.3 }
    }
}

/// Notched porous field and its pore-free counterpart. Pores whose centre
/// lies in the notch layer see the layer stress times their own concentration.
pub fn notched_field(
    stats: &PoreFieldStats,
    notch: &NotchSpec,
    shells: usize,
    seed: u64,
) -> Result<(SynthesizedField, ElasticElementField)> {
    if !(notch.kt >= 1.0 && notch.depth_mm > 0.0 && notch.depth_mm < stats.gauge_radius_mm) {
        return Err(Error::InvalidParameter(format!("inadmissible notch {notch:?}")));
    }
    let (porous, layer_volume) = synthesize(stats, shells, seed, Some(notch))?;
    let gauge = stats.gauge_volume();
    let pore_free = ElasticElementField::new(
        vec![
            Element {
                id: 0,
                volume: gauge - layer_volume,
                sigma_unit: SymTensor::uniaxial_z(1.0),
            },
            Element {
                id: 1,
                volume: layer_volume,
                sigma_unit: SymTensor::uniaxial_z(notch.kt),
            },
        ],
        "notched pore-free",
    )?;
    Ok((porous, pore_free))
}

fn synthesize(
    stats: &PoreFieldStats,
    shells: usize,
    seed: u64,
    notch: Option<&NotchSpec>,
) -> Result<(SynthesizedField, f64)> {
    stats.validate()?;
    if shells == 0 {
        return Err(Error::Domain("a pore needs at least one shell".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pores = draw_pores(stats, &mut rng);
    let gauge = stats.gauge_volume();
    let layer_inner = notch.map(|n| stats.gauge_radius_mm - n.depth_mm);
    let layer_volume = layer_inner.map_or(0.0, |inner| {
        std::f64::consts::PI * (stats.gauge_radius_mm.powi(2) - inner.powi(2)) * stats.gauge_length_mm
    });

    let mut elements = Vec::with_capacity(2 + pores.len() * shells);
    let mut core_shells = 0.0;
    let mut layer_shells = 0.0;
    for pore in &pores {
        let in_layer = layer_inner.is_some_and(|inner| pore.axial_distance() > inner);
        let remote = if in_layer { notch.map_or(1.0, |n| n.kt) } else { 1.0 };
        for (volume, factor) in pore_shells(stats, pore, shells) {
            if in_layer {
                layer_shells += volume;
            } else {
                core_shells += volume;
            }
            elements.push(Element {
                id: 0,
                volume,
                sigma_unit: SymTensor::uniaxial_z(remote * factor),
            });
        }
    }
    let core_volume = gauge - layer_volume - core_shells;
    let layer_remaining = layer_volume - layer_shells;
    if core_volume <= 0.0 || (notch.is_some() && layer_remaining <= 0.0) {
        return Err(Error::Domain("pore shells exceed the gauge volume; lower the pore density".into()));
    }
    let mut all = vec![Element {
        id: 0,
        volume: core_volume,
        sigma_unit: SymTensor::uniaxial_z(1.0),
    }];
    if let Some(n) = notch {
        all.push(Element {
            id: 0,
            volume: layer_remaining,
            sigma_unit: SymTensor::uniaxial_z(n.kt),
        });
    }
    all.extend(elements);
    for (i, e) in all.iter_mut().enumerate() {
        e.id = i as u64;
    }
    let tag = match notch {
        Some(n) => format!("notched porous cylinder kt={} r={} L={}", n.kt, stats.gauge_radius_mm, stats.gauge_length_mm),
        None => format!("porous cylinder r={} L={}", stats.gauge_radius_mm, stats.gauge_length_mm),
    };
    let field = ElasticElementField::new(all, tag)?;
    Ok((
        SynthesizedField {
            field,
            pores,
            gauge_volume: gauge,
        },
        layer_volume,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::distribution::ChiSquared;

    #[test]
    fn cavity_factor() {
        assert!((cavity_concentration(0.3) - 2.045).abs() < 1e-3);
        assert_relative_eq!(cavity_profile(0.3, 1.0), cavity_concentration(0.3), epsilon = 1e-15);
        assert_relative_eq!(cavity_profile(0.3, 0.0), 1.0);
    }

    #[test]
    fn pore_free_limit_is_single_bulk_element() {
        let stats = PoreFieldStats {
            pore_density: 0.0,
            ..Default::default()
        };
        let s = synth_field(&stats, DEFAULT_SHELLS, 3).unwrap();
        assert_eq!(s.field.len(), 1);
        assert_eq!(s.field.elements[0].sigma_unit, SymTensor::uniaxial_z(1.0));
        assert_relative_eq!(s.field.total_volume(), stats.gauge_volume(), max_relative = 1e-12);
        assert_relative_eq!(stats.gauge_volume(), DEFAULT_REFERENCE_VOLUME, max_relative = 1e-12);
    }

    #[test]
    fn peak_shell_carries_cavity_factor() {
        let stats = PoreFieldStats::default();
        let s = synth_field(&stats, DEFAULT_SHELLS, 11).unwrap();
        let embedded = s.pores.iter().position(|p| !p.surface_breaking).unwrap();
        let peak = s.field.elements[1 + embedded * DEFAULT_SHELLS].sigma_unit.0[2];
        assert!((peak - 2.045).abs() < 1e-3, "{peak}");
        if let Some(surface) = s.pores.iter().position(|p| p.surface_breaking) {
            let boosted = s.field.elements[1 + surface * DEFAULT_SHELLS].sigma_unit.0[2];
            assert_relative_eq!(boosted, 1.25 * cavity_concentration(0.3), max_relative = 1e-14);
        }
    }

    #[test]
    fn volume_conserved_and_deterministic() {
        let stats = PoreFieldStats::default();
        for seed in 0..10 {
            let a = synth_field(&stats, DEFAULT_SHELLS, seed).unwrap();
            let b = synth_field(&stats, DEFAULT_SHELLS, seed).unwrap();
            assert_eq!(a.field, b.field);
            assert!((a.field.total_volume() / stats.gauge_volume() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn volume_fraction_over_seeds() {
        let stats = PoreFieldStats::default();
        assert_relative_eq!(stats.volume_fraction(), 0.0028, max_relative = 1e-12);
        let mean: f64 = (0..100).map(|s| synth_field(&stats, 1, s).unwrap().pore_volume_fraction()).sum::<f64>() / 100.0;
        assert!((mean - 0.0028).abs() < 0.0005, "{mean}");
    }

    #[test]
    fn mean_pore_volume_matches_monte_carlo() {
        let stats = PoreFieldStats::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let mc: f64 = (0..n)
            .map(|_| 4.0 / 3.0 * std::f64::consts::PI * stats.sample_radius_mm(&mut rng).powi(3))
            .sum::<f64>()
            / n as f64;
        assert!((mc / stats.mean_pore_volume() - 1.0).abs() < 0.01);
    }

    #[test]
    fn thin_variant_preserves_volume_and_exposes_more_surface() {
        let stats = PoreFieldStats::default();
        let thin = thin_variant(&stats, 4.0).unwrap();
        assert!((thin.gauge_volume() / stats.gauge_volume() - 1.0).abs() < 1e-12);
        assert_eq!(thin_variant(&stats, 1.0).unwrap(), stats);
        assert!(thin_variant(&stats, 0.5).is_err());
        let frac = |s: &PoreFieldStats| {
            (0..100)
                .map(|seed| synth_field(s, 1, seed).unwrap().surface_breaking_fraction())
                .sum::<f64>()
        };
        assert!(frac(&thin) > frac(&stats));
    }

    #[test]
    fn pore_counts_are_poisson() {
        let stats = PoreFieldStats::default();
        let mean = stats.pore_density * stats.gauge_volume();
        let counts: Vec<f64> = (0..200).map(|s| synth_field(&stats, 1, s).unwrap().pores.len() as f64).collect();
        // Dispersion test: (n − 1) s² / μ is χ² with n − 1 degrees of freedom.
        let dispersion: f64 = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / mean;
        let chi = ChiSquared::new(199.0).unwrap();
        let p = 2.0 * chi.cdf(dispersion).min(1.0 - chi.cdf(dispersion));
        assert!(p > 0.01, "dispersion {dispersion}, p {p}");
        let avg = counts.iter().sum::<f64>() / 200.0;
        assert!((avg - mean).abs() < 4.0 * (mean / 200.0).sqrt(), "{avg} vs {mean}");
    }

    #[test]
    fn radii_follow_truncated_law() {
        let stats = PoreFieldStats::default();
        let mut radii: Vec<f64> = (0..200)
            .flat_map(|s| synth_field(&stats, 1, s).unwrap().pores.into_iter().map(|p| p.radius * 1e3))
            .take(5000)
            .collect();
        radii.sort_by(f64::total_cmp);
        assert!(radii[0] >= stats.accept_radius_um && *radii.last().unwrap() <= stats.max_radius_um);
        let n = radii.len() as f64;
        let d = radii
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let f = stats.radius_cdf(r);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        // Asymptotic Kolmogorov critical value at the 1% level.
        assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn notched_field_layers() {
        let stats = PoreFieldStats::default();
        let notch = NotchSpec::default();
        let (porous, free) = notched_field(&stats, &notch, DEFAULT_SHELLS, 4).unwrap();
        assert!((porous.field.total_volume() / stats.gauge_volume() - 1.0).abs() < 1e-6);
        assert_relative_eq!(free.total_volume(), stats.gauge_volume(), max_relative = 1e-12);
        assert_eq!(free.elements[1].sigma_unit.0[2], 2.5);
        let max = porous.field.elements.iter().map(|e| e.sigma_unit.0[2]).fold(0.0, f64::max);
        assert!(max > 2.5 * cavity_concentration(0.3) - 1e-12);
    }
}
