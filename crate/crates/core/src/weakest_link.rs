//! Weakest-link aggregation of independent Weibull elements.
//!
//! With independent elements sharing the shape `m`, the structure survives
//! `N` cycles only if every element does, which is again Weibull with
//! `λ^s = (Σ λᵢ^(−m))^(−1/m)`. Sums run in the log domain with a max shift;
//! element scales routinely span many orders of magnitude.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::strain_life::{Cycles, WeibullLifetime};

/// Structure lifetimes are Weibull distributions of the same family.
pub type StructureLifetime = WeibullLifetime;

/// Run-out cap of the fatigue test protocol, cycles.
pub const DEFAULT_RUN_OUT: f64 = 2e6;

/// Quantiles of the Wöhler master curve.
pub const DEFAULT_QUANTILES: [f64; 5] = [0.01, 0.15, 0.5, 0.85, 0.99];

/// Fixed-order `ln Σ exp(tᵢ)`; `None` if every term is `−∞` or the input is empty.
pub(crate) fn log_sum_exp(terms: &[f64]) -> Option<f64> {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    Some(max + sum.ln())
}

/// `ln λ^s` from per-element log-hazard weights `−m·ln λᵢ`.
pub(crate) fn ln_structure_scale(log_hazard_weights: &[f64], m: f64) -> Option<f64> {
    log_sum_exp(log_hazard_weights).map(|lse| -lse / m)
}

/// Structure scale `λ^s` from element scales sharing shape `m`.
pub fn structure_scale(element_scales: &[Cycles], m: f64) -> Result<Cycles> {
    if !(m > 0.0) {
        return Err(Error::InvalidParameter(format!("Weibull shape must be positive, got {m}")));
    }
    if element_scales.is_empty() {
        return Err(Error::Domain("structure needs at least one element".into()));
    }
    let mut weights = Vec::with_capacity(element_scales.len());
    for scale in element_scales {
        match *scale {
            Cycles::Finite(lambda) if lambda > 0.0 => weights.push(-m * lambda.ln()),
            Cycles::Finite(lambda) => {
                return Err(Error::InvalidParameter(format!("element scale must be positive, got {lambda}")))
            }
            Cycles::Infinite => {}
        }
    }
    Ok(match ln_structure_scale(&weights, m) {
        Some(ln) => Cycles::Finite(ln.exp()),
        None => Cycles::Infinite,
    })
}

/// Structure lifetime built from element distributions; all shapes must agree.
pub fn structure_lifetime(elements: &[WeibullLifetime]) -> Result<StructureLifetime> {
    let first = elements
        .first()
        .ok_or_else(|| Error::Domain("structure needs at least one element".into()))?;
    let m = first.shape();
    if elements.iter().any(|e| e.shape() != m) {
        return Err(Error::InvalidParameter("elements must share one Weibull shape".into()));
    }
    let scales: Vec<Cycles> = elements.iter().map(|e| e.scale()).collect();
    Ok(match structure_scale(&scales, m)? {
        Cycles::Finite(l) => WeibullLifetime::new(l, m)?,
        Cycles::Infinite => WeibullLifetime::infinite(m),
    })
}

pub fn structure_cdf(structure: &StructureLifetime, n: f64) -> f64 {
    structure.cdf(n)
}

/// One Monte Carlo lifetime draw. Infinite lives come back as the run-out
/// cap with `censored` set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifeSample {
    pub cycles: f64,
    pub censored: bool,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Inverse-CDF sampling from one independent stream of the master seed.
pub fn sample_lifetimes_stream(
    structure: &StructureLifetime,
    count: usize,
    seed: u64,
    stream: u64,
    run_out: f64,
) -> Vec<LifeSample> {
    match structure.scale() {
        Cycles::Infinite => vec![
            LifeSample {
                cycles: run_out,
                censored: true,
            };
            count
        ],
        Cycles::Finite(lambda) => {
            let mut rng = stream_rng(seed, stream);
            let inv_m = 1.0 / structure.shape();
            (0..count)
                .map(|_| {
                    // 1 − U lies in (0, 1], so the log is finite.
                    let u: f64 = 1.0 - rng.random::<f64>();
                    LifeSample {
                        cycles: lambda * (-u.ln()).powf(inv_m),
                        censored: false,
                    }
                })
                .collect()
        }
    }
}

pub fn sample_lifetimes(structure: &StructureLifetime, count: usize, seed: u64) -> Vec<LifeSample> {
    sample_lifetimes_stream(structure, count, seed, 0, DEFAULT_RUN_OUT)
}

/// Linear-interpolation empirical quantile of sorted data (infinite entries last).
pub(crate) fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let (a, b) = (sorted[lo], sorted[hi]);
    if lo == hi || a == b {
        return a;
    }
    if b.is_infinite() {
        return f64::INFINITY;
    }
    a + (h - lo as f64) * (b - a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WohlerRow {
    pub load: f64,
    /// Cycles per requested quantile; `inf` where the quantile falls among
    /// infinite-life draws.
    pub values: Vec<f64>,
    /// Fraction of pooled draws at or beyond the run-out cap.
    pub censored_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WohlerTable {
    pub quantiles: Vec<f64>,
    pub rows: Vec<WohlerRow>,
}

impl WohlerTable {
    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec!["load_MPa".to_string()];
        names.extend(self.quantiles.iter().map(|q| format!("q{:02}", (q * 100.0).round() as i64)));
        names.push("censored_fraction".into());
        names
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.column_names().join(","))?;
        for row in &self.rows {
            let mut cells = vec![format!("{}", row.load)];
            cells.extend(row.values.iter().map(|v| format!("{v}")));
            cells.push(format!("{}", row.censored_fraction));
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Sampling setup for pooled quantile tables.
#[derive(Debug, Clone, Copy)]
pub struct SamplingOptions {
    pub samples_per_structure: usize,
    pub seed: u64,
    pub run_out: f64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            samples_per_structure: 1000,
            seed: 0,
            run_out: DEFAULT_RUN_OUT,
        }
    }
}

/// Pooled draws of one load level; stream ids are `(level << 32) | structure`.
pub fn pooled_samples(level_index: usize, structures: &[StructureLifetime], options: &SamplingOptions) -> Vec<LifeSample> {
    structures
        .iter()
        .enumerate()
        .flat_map(|(k, s)| {
            let stream = ((level_index as u64) << 32) | k as u64;
            sample_lifetimes_stream(s, options.samples_per_structure, options.seed, stream, options.run_out)
        })
        .collect()
}

/// Pooled empirical quantiles per load level over all given structures.
pub fn wohler_quantiles(
    levels: &[(f64, Vec<StructureLifetime>)],
    quantiles: &[f64],
    options: &SamplingOptions,
) -> Result<WohlerTable> {
    if quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
        return Err(Error::Domain(format!("quantiles must lie in (0, 1), got {quantiles:?}")));
    }
    if options.samples_per_structure == 0 {
        return Err(Error::Domain("samples per structure must be at least one".into()));
    }
    if levels.is_empty() || levels.iter().any(|(_, s)| s.is_empty()) {
        return Err(Error::Domain("every load level needs at least one structure".into()));
    }
    let rows = levels
        .par_iter()
        .enumerate()
        .map(|(i, (load, structures))| {
            let samples = pooled_samples(i, structures, options);
            let total = samples.len() as f64;
            let censored = samples.iter().filter(|s| s.censored || s.cycles >= options.run_out).count();
            let mut sorted: Vec<f64> = samples
                .iter()
                .map(|s| if s.censored { f64::INFINITY } else { s.cycles })
                .collect();
            sorted.sort_by(f64::total_cmp);
            WohlerRow {
                load: *load,
                values: quantiles.iter().map(|&q| empirical_quantile(&sorted, q)).collect(),
                censored_fraction: censored as f64 / total,
            }
        })
        .collect();
    Ok(WohlerTable {
        quantiles: quantiles.to_vec(),
        rows,
    })
}

/// Median of the equal-weight mixture of structure distributions, found by
/// bisection on the mixture CDF; infinite when at least half the mass never fails.
pub fn mixture_median(structures: &[StructureLifetime]) -> Cycles {
    mixture_quantile(structures, 0.5)
}

pub fn mixture_quantile(structures: &[StructureLifetime], q: f64) -> Cycles {
    let finite: Vec<&StructureLifetime> = structures.iter().filter(|s| !s.is_infinite()).collect();
    if finite.is_empty() || (finite.len() as f64) / (structures.len() as f64) <= q {
        return Cycles::Infinite;
    }
    let k = structures.len() as f64;
    let cdf = |n: f64| finite.iter().map(|s| s.cdf(n)).sum::<f64>() / k;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for s in &finite {
        let med = s.quantile(q).finite().unwrap_or(f64::MAX);
        lo = lo.min(med);
        hi = hi.max(med);
    }
    let (mut lo, mut hi) = (lo.ln() - 1.0, hi.ln() + 1.0);
    while cdf(hi.exp()) < q {
        hi += 2.0;
    }
    while cdf(lo.exp()) > q {
        lo -= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid.exp()) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Cycles::Finite((0.5 * (lo + hi)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn finite(v: Cycles) -> f64 {
        v.finite().expect("finite scale")
    }

    #[test]
    fn eight_identical_elements() {
        let s = structure_scale(&[Cycles::Finite(100.0); 8], 2.0).unwrap();
        assert!((finite(s) - 35.355_339).abs() < 1e-6);
    }

    #[test]
    fn single_element_is_identity() {
        let s = structure_scale(&[Cycles::Finite(1234.5)], 3.7).unwrap();
        assert_relative_eq!(finite(s), 1234.5, max_relative = 1e-14);
    }

    #[test]
    fn infinite_elements_drop_out() {
        let s = structure_scale(&[Cycles::Finite(50.0), Cycles::Infinite, Cycles::Infinite], 3.0).unwrap();
        assert_relative_eq!(finite(s), 50.0, max_relative = 1e-14);
        let all = structure_scale(&[Cycles::Infinite; 4], 3.0).unwrap();
        assert_eq!(all, Cycles::Infinite);
        assert!(structure_scale(&[], 3.0).is_err());
    }

    #[test]
    fn wide_range_does_not_overflow() {
        let scales = [Cycles::Finite(1e2), Cycles::Finite(1e200), Cycles::Finite(1e-50)];
        let s = finite(structure_scale(&scales, 12.0).unwrap());
        assert_relative_eq!(s, 1e-50, max_relative = 1e-12);
    }

    #[test]
    fn cdf_median_and_origin() {
        let s = WeibullLifetime::new(777.0, 4.0).unwrap();
        assert_eq!(structure_cdf(&s, 0.0), 0.0);
        let med = 777.0 * std::f64::consts::LN_2.powf(0.25);
        assert!((structure_cdf(&s, med) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_deterministic_and_converges_to_median() {
        let s = WeibullLifetime::new(1000.0, 2.0).unwrap();
        let a = sample_lifetimes(&s, 1000, 42);
        let b = sample_lifetimes(&s, 1000, 42);
        assert_eq!(a, b);
        let mut big: Vec<f64> = sample_lifetimes(&s, 1_000_000, 7).iter().map(|x| x.cycles).collect();
        big.sort_by(f64::total_cmp);
        let median = empirical_quantile(&big, 0.5);
        assert!((median / 832.555 - 1.0).abs() < 0.01, "{median}");
    }

    #[test]
    fn infinite_structure_samples_are_censored() {
        let s = WeibullLifetime::infinite(2.0);
        let draws = sample_lifetimes(&s, 10, 1);
        assert!(draws.iter().all(|d| d.censored && d.cycles == DEFAULT_RUN_OUT));
    }

    #[test]
    fn single_structure_quantiles_match_closed_form() {
        let s = WeibullLifetime::new(5e5, 4.0).unwrap();
        let opts = SamplingOptions {
            samples_per_structure: 200_000,
            seed: 3,
            run_out: 1e12,
        };
        let table = wohler_quantiles(&[(80.0, vec![s])], &DEFAULT_QUANTILES, &opts).unwrap();
        for (q, v) in DEFAULT_QUANTILES.iter().zip(&table.rows[0].values) {
            let exact = finite(s.quantile(*q));
            assert!((v / exact - 1.0).abs() < 0.02, "q={q}: {v} vs {exact}");
        }
    }

    #[test]
    fn pooling_identical_structures_matches_single_with_more_samples() {
        let s = WeibullLifetime::new(2e5, 3.0).unwrap();
        let pooled = wohler_quantiles(
            &[(50.0, vec![s; 10])],
            &DEFAULT_QUANTILES,
            &SamplingOptions {
                samples_per_structure: 2000,
                seed: 11,
                run_out: 1e12,
            },
        )
        .unwrap();
        let single = wohler_quantiles(
            &[(50.0, vec![s])],
            &DEFAULT_QUANTILES,
            &SamplingOptions {
                samples_per_structure: 20_000,
                seed: 12,
                run_out: 1e12,
            },
        )
        .unwrap();
        for (a, b) in pooled.rows[0].values.iter().zip(&single.rows[0].values) {
            assert!((a / b - 1.0).abs() < 0.05, "{a} vs {b}");
        }
    }

    #[test]
    fn pooled_median_lies_between_component_medians() {
        let a = WeibullLifetime::new(1e5, 30.0).unwrap();
        let b = WeibullLifetime::new(2e5, 30.0).unwrap();
        let t = wohler_quantiles(&[(60.0, vec![a, b])], &[0.5], &SamplingOptions::default()).unwrap();
        let med = t.rows[0].values[0];
        assert!(med > finite(a.median()) && med < finite(b.median()), "{med}");
        let exact = finite(mixture_median(&[a, b]));
        assert!(exact > finite(a.median()) && exact < finite(b.median()));
    }

    #[test]
    fn empty_structure_set_is_rejected() {
        let r = wohler_quantiles(&[(60.0, vec![])], &[0.5], &SamplingOptions::default());
        assert!(r.is_err());
        let s = WeibullLifetime::new(1e5, 3.0).unwrap();
        assert!(wohler_quantiles(&[(60.0, vec![s])], &[1.0], &SamplingOptions::default()).is_err());
    }

    #[test]
    fn csv_header_and_censoring() {
        let table = wohler_quantiles(
            &[(20.0, vec![WeibullLifetime::infinite(3.0)])],
            &DEFAULT_QUANTILES,
            &SamplingOptions::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "load_MPa,q01,q15,q50,q85,q99,censored_fraction");
        assert_eq!(lines.next().unwrap(), "20,inf,inf,inf,inf,inf,1");
    }

    #[test]
    fn mixture_median_of_identical_is_component_median() {
        let s = WeibullLifetime::new(3e5, 5.0).unwrap();
        let med = finite(mixture_median(&[s, s, s]));
        assert_relative_eq!(med, finite(s.median()), max_relative = 1e-10);
        assert_eq!(mixture_median(&[s, WeibullLifetime::infinite(5.0)]), Cycles::Infinite);
    }

    fn arb_scales() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(1e2f64..1e8, 1..20)
    }

    proptest! {
        #[test]
        fn product_of_survivals(scales in arb_scales(), m in 0.5f64..12.0, t in 0.01f64..3.0) {
            let elems: Vec<Cycles> = scales.iter().map(|&l| Cycles::Finite(l)).collect();
            let ls = finite(structure_scale(&elems, m).unwrap());
            let s = WeibullLifetime::new(ls, m).unwrap();
            let n = t * ls;
            let brute = 1.0 - scales.iter().map(|l| (-(n / l).powf(m)).exp()).product::<f64>();
            prop_assert!((s.cdf(n) - brute).abs() < 1e-12);
        }

        #[test]
        fn adding_a_finite_element_decreases_scale(scales in arb_scales(), extra in 1e2f64..1e8, m in 0.5f64..12.0) {
            let mut elems: Vec<Cycles> = scales.iter().map(|&l| Cycles::Finite(l)).collect();
            let before = finite(structure_scale(&elems, m).unwrap());
            elems.push(Cycles::Finite(extra));
            let after = finite(structure_scale(&elems, m).unwrap());
            prop_assert!(after <= before);
            if extra <= scales.iter().copied().fold(f64::INFINITY, f64::min) {
                prop_assert!(after < before);
            }
        }

        #[test]
        fn bounded_by_weakest_element(scales in arb_scales(), m in 0.5f64..12.0) {
            let elems: Vec<Cycles> = scales.iter().map(|&l| Cycles::Finite(l)).collect();
            let ls = finite(structure_scale(&elems, m).unwrap());
            let min = scales.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(ls <= min * (1.0 + 1e-14));
        }

        #[test]
        fn tiling_scales_by_k_to_minus_one_over_m(scales in arb_scales(), m in 0.5f64..12.0, k in 1usize..9) {
            let elems: Vec<Cycles> = scales.iter().map(|&l| Cycles::Finite(l)).collect();
            let tiled: Vec<Cycles> = (0..k).flat_map(|_| elems.iter().copied()).collect();
            let one = finite(structure_scale(&elems, m).unwrap());
            let many = finite(structure_scale(&tiled, m).unwrap());
            prop_assert!((many / (one * (k as f64).powf(-1.0 / m)) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn permutation_invariant(mut scales in arb_scales(), m in 0.5f64..12.0) {
            let elems: Vec<Cycles> = scales.iter().map(|&l| Cycles::Finite(l)).collect();
            let a = finite(structure_scale(&elems, m).unwrap());
            scales.reverse();
            let elems: Vec<Cycles> = scales.iter().map(|&l| Cycles::Finite(l)).collect();
            let b = finite(structure_scale(&elems, m).unwrap());
            prop_assert!((a / b - 1.0).abs() < 1e-13);
        }
    }
}
