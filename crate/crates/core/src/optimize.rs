//! Derivative-free maximum-likelihood calibration of strain-life parameters.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::likelihood::{FatigueObservation, PreparedLikelihood};
use crate::strain_life::StrainLifeParams;

/// Iteration budget per start.
pub const DEFAULT_BUDGET: usize = 400;
pub const DEFAULT_STARTS: usize = 5;

/// Names of the parameter vector `[m, A, B, α, β, C]`.
pub const PARAMETER_NAMES: [&str; 6] = ["m", "A", "B", "alpha", "beta", "C"];

/// Offset keeping the logarithm of parameters allowed to reach zero finite.
const ZERO_OFFSET: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop once best and worst vertex values differ by less than this.
    pub f_tol: f64,
    /// Relative initial perturbation per coordinate.
    pub initial_step: f64,
    /// Perturbation used for coordinates at zero.
    pub zero_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_BUDGET,
            f_tol: 1e-9,
            initial_step: 0.05,
            zero_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best vertex after initialization (iteration 0) and after every iteration.
    pub trace: Vec<TraceEntry>,
}

/// Maximizes `f` with the simplex method (reflection 1, expansion 2,
/// contraction 0.5, shrink 0.5). Non-finite values count as `−∞`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], options: &NelderMeadOptions) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] = if x[i] != 0.0 { x[i] * (1.0 + options.initial_step) } else { options.zero_step };
        let v = eval(&x);
        simplex.push((x, v));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| b.1.total_cmp(&a.1));
    order(&mut simplex);
    let mut trace = vec![TraceEntry {
        iteration: 0,
        x: simplex[0].0.clone(),
        f: simplex[0].1,
    }];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iter {
        let spread = simplex[0].1 - simplex[n].1;
        if spread.abs() < options.f_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..n).map(|j| centroid[j] + t * (simplex[n].0[j] - centroid[j])).collect()
        };
        let reflected = along(-1.0);
        let f_r = eval(&reflected);
        if f_r > simplex[0].1 {
            let expanded = along(-2.0);
            let f_e = eval(&expanded);
            simplex[n] = if f_e > f_r { (expanded, f_e) } else { (reflected, f_r) };
        } else if f_r > simplex[n - 1].1 {
            simplex[n] = (reflected, f_r);
        } else {
            let outside = f_r > simplex[n].1;
            let contracted = along(if outside { -0.5 } else { 0.5 });
            let f_c = eval(&contracted);
            let threshold = if outside { f_r } else { simplex[n].1 };
            if f_c >= threshold && f_c > f64::NEG_INFINITY {
                simplex[n] = (contracted, f_c);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = (0..n).map(|j| best[j] + 0.5 * (vertex.0[j] - best[j])).collect();
                    let v = eval(&x);
                    *vertex = (x, v);
                }
            }
        }
        order(&mut simplex);
        trace.push(TraceEntry {
            iteration: iterations,
            x: simplex[0].0.clone(),
            f: simplex[0].1,
        });
    }
    if !converged {
        converged = (simplex[0].1 - simplex[n].1).abs() < options.f_tol;
    }
    NelderMeadResult {
        x: simplex[0].0.clone(),
        f: simplex[0].1,
        iterations,
        converged,
        trace,
    }
}

/// Which of `[m, A, B, α, β, C]` are optimized.
pub type FreeMask = [bool; 6];

/// `m, A, α, C` free with `B = β = 0`.
pub const ONE_LINE: FreeMask = [true, true, false, true, false, true];
pub const TWO_LINE: FreeMask = [true; 6];
/// One-line model without fatigue limit.
pub const ONE_LINE_NO_LIMIT: FreeMask = [true, true, false, true, false, false];

fn allows_zero(index: usize) -> bool {
    matches!(index, 2 | 4 | 5)
}

fn to_search(index: usize, value: f64) -> f64 {
    if allows_zero(index) {
        (value + ZERO_OFFSET).ln()
    } else {
        value.ln()
    }
}

fn from_search(index: usize, y: f64) -> f64 {
    if allows_zero(index) {
        let v = y.exp() - ZERO_OFFSET;
        if v <= ZERO_OFFSET * 1e-6 {
            0.0
        } else {
            v
        }
    } else {
        y.exp()
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationProblem<'a> {
    /// Terms of the objective; the log-likelihood is their sum.
    pub terms: Vec<&'a PreparedLikelihood>,
    pub free_mask: FreeMask,
    /// Starting point; pinned entries are used as given.
    pub initial: StrainLifeParams,
    pub budget: usize,
    pub starts: usize,
    pub seed: u64,
    /// Spread of the multiplicative jitter applied to additional starts.
    pub jitter: f64,
}

impl<'a> CalibrationProblem<'a> {
    pub fn new(terms: Vec<&'a PreparedLikelihood>, free_mask: FreeMask, initial: StrainLifeParams) -> Self {
        Self {
            terms,
            free_mask,
            initial,
            budget: DEFAULT_BUDGET,
            starts: DEFAULT_STARTS,
            seed: 0,
            jitter: 0.3,
        }
    }

    fn log_likelihood(&self, params: &StrainLifeParams) -> f64 {
        let mut total = 0.0;
        for t in &self.terms {
            match t.evaluate(params) {
                Ok(v) => total += v,
                Err(_) => return f64::NEG_INFINITY,
            }
        }
        total
    }

    fn free_indices(&self) -> Vec<usize> {
        (0..6).filter(|&i| self.free_mask[i]).collect()
    }

    fn assemble(&self, y: &[f64]) -> StrainLifeParams {
        let mut v = self.initial.to_vector();
        for (k, &i) in self.free_indices().iter().enumerate() {
            v[i] = from_search(i, y[k]);
        }
        StrainLifeParams::from_vector(v, self.initial.v0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTraceRow {
    pub iteration: usize,
    pub params: StrainLifeParams,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone)]
pub struct StartOutcome {
    pub initial: StrainLifeParams,
    pub params: StrainLifeParams,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<CalibrationTraceRow>,
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub params: StrainLifeParams,
    pub log_likelihood: f64,
    pub best_start: usize,
    pub starts: Vec<StartOutcome>,
}

impl Calibration {
    pub fn trace(&self) -> &[CalibrationTraceRow] {
        &self.starts[self.best_start].trace
    }

    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,{},log_likelihood", PARAMETER_NAMES.join(","))?;
        for row in self.trace() {
            let v = row.params.to_vector();
            let cells: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            writeln!(out, "{},{},{}", row.iteration, cells.join(","), row.log_likelihood)?;
        }
        Ok(())
    }
}

/// Maximizes the summed log-likelihood from `starts` deterministic
/// initializations (the given one first) and keeps the best.
pub fn calibrate(problem: &CalibrationProblem) -> Result<Calibration> {
    problem.initial.validate()?;
    if problem.terms.is_empty() {
        return Err(Error::Domain("calibration needs at least one likelihood term".into()));
    }
    if problem.terms.iter().all(|t| t.n_failures() == 0) {
        return Err(Error::Degenerate(
            "no failures in the data; the likelihood grows without bound toward infinite life".into(),
        ));
    }
    let free = problem.free_indices();
    if free.is_empty() {
        return Err(Error::Domain("no free parameters".into()));
    }
    let start_points: Vec<Vec<f64>> = (0..problem.starts.max(1))
        .map(|s| {
            let base: Vec<f64> = free.iter().map(|&i| to_search(i, problem.initial.to_vector()[i])).collect();
            if s == 0 {
                return base;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
            rng.set_stream(s as u64);
            base.iter().map(|y| y + problem.jitter * (2.0 * rng.random::<f64>() - 1.0)).collect()
        })
        .collect();
    let options = NelderMeadOptions {
        max_iter: problem.budget,
        ..Default::default()
    };
    let starts: Vec<StartOutcome> = start_points
        .par_iter()
        .map(|y0| {
            let result = nelder_mead(|y| problem.log_likelihood(&problem.assemble(y)), y0, &options);
            StartOutcome {
                initial: problem.assemble(y0),
                params: problem.assemble(&result.x),
                log_likelihood: result.f,
                iterations: result.iterations,
                converged: result.converged,
                trace: result
                    .trace
                    .iter()
                    .map(|t| CalibrationTraceRow {
                        iteration: t.iteration,
                        params: problem.assemble(&t.x),
                        log_likelihood: t.f,
                    })
                    .collect(),
            }
        })
        .collect();
    let best_start = starts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.log_likelihood.total_cmp(&b.1.log_likelihood).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .expect("at least one start");
    Ok(Calibration {
        params: starts[best_start].params,
        log_likelihood: starts[best_start].log_likelihood,
        best_start,
        starts,
    })
}

/// Data-driven one-line starting point for uniformly loaded specimens.
///
/// The fatigue limit is placed between the highest amplitude without any
/// failure and the lowest failing one, the exponent and coefficient come
/// from a log-log fit of per-level median lives, and the shape from the
/// pooled within-level scatter of log lives.
pub fn initial_guess(
    observations: &[FatigueObservation],
    volume: f64,
    youngs_modulus: f64,
    v0: f64,
) -> Result<StrainLifeParams> {
    let mut amplitudes: Vec<f64> = observations.iter().map(|o| o.sigma_a).collect();
    amplitudes.sort_by(f64::total_cmp);
    amplitudes.dedup();
    let mut levels = Vec::new();
    let mut quiet_max = 0.0_f64;
    for &s in &amplitudes {
        let mut ln_n: Vec<f64> = observations
            .iter()
            .filter(|o| o.sigma_a == s && !o.censored)
            .map(|o| o.n_cycles.ln())
            .collect();
        if ln_n.is_empty() {
            quiet_max = quiet_max.max(s / youngs_modulus);
            continue;
        }
        ln_n.sort_by(f64::total_cmp);
        levels.push((s / youngs_modulus, ln_n));
    }
    if levels.is_empty() {
        return Err(Error::Degenerate("no failures to start a calibration from".into()));
    }
    let eps_min = levels[0].0;
    let c = if quiet_max > 0.0 && quiet_max < eps_min {
        0.5 * (quiet_max + eps_min)
    } else {
        0.5 * eps_min
    };

    let (mut ss, mut dof) = (0.0, 0usize);
    for (_, ln_n) in &levels {
        let mean = ln_n.iter().sum::<f64>() / ln_n.len() as f64;
        ss += ln_n.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        dof += ln_n.len() - 1;
    }
    let m = if dof > 0 && ss > 0.0 {
        (std::f64::consts::PI / (6.0_f64.sqrt() * (ss / dof as f64).sqrt())).clamp(1.0, 50.0)
    } else {
        5.0
    };

    let shift = (volume / v0).ln() / m;
    let points: Vec<(f64, f64)> = levels
        .iter()
        .map(|(eps, ln_n)| {
            let k = ln_n.len();
            let median = if k % 2 == 1 { ln_n[k / 2] } else { 0.5 * (ln_n[k / 2 - 1] + ln_n[k / 2]) };
            (median + shift, (eps - c).ln())
        })
        .collect();
    let (alpha, ln_a) = if points.len() >= 2 {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let alpha = if sxx > 0.0 { (-sxy / sxx).clamp(0.01, 5.0) } else { 0.5 };
        (alpha, my + alpha * mx)
    } else {
        (0.5, points[0].1 + 0.5 * points[0].0)
    };
    let guess = StrainLifeParams::one_line(m, ln_a.exp(), alpha, c).with_reference_volume(v0);
    guess.validate()?;
    Ok(guess)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::SpecimenModel;
    use crate::strain_life::element_lifetime;
    use crate::weakest_link::sample_lifetimes_stream;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_bowl() {
        let c = [1.5, -2.0, 0.25];
        let r = nelder_mead(
            |x| -x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
            &[1.4, -1.9, 0.3],
            &NelderMeadOptions {
                max_iter: 2000,
                f_tol: 1e-16,
                ..Default::default()
            },
        );
        for (a, b) in r.x.iter().zip(c) {
            assert!((a - b).abs() < 1e-6, "{:?}", r.x);
        }
    }

    #[test]
    fn one_dimensional_from_zero() {
        let r = nelder_mead(
            |x| -(x[0] - 3.0).powi(2),
            &[0.0],
            &NelderMeadOptions {
                max_iter: 500,
                f_tol: 1e-16,
                ..Default::default()
            },
        );
        assert!((r.x[0] - 3.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn rosenbrock_valley() {
        let r = nelder_mead(
            |x| -((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)),
            &[-1.2, 1.0],
            &NelderMeadOptions {
                max_iter: 2000,
                f_tol: 1e-14,
                ..Default::default()
            },
        );
        assert!(r.f > -1e-6, "{r:?}");
    }

    #[test]
    fn trace_is_monotone() {
        let r = nelder_mead(|x| -(x[0] - 1.0).powi(4) - (x[1] + 2.0).powi(2), &[3.0, 3.0], &NelderMeadOptions::default());
        assert_eq!(r.trace[0].iteration, 0);
        for w in r.trace.windows(2) {
            assert!(w[1].f >= w[0].f);
        }
    }

    #[test]
    fn transform_round_trip() {
        for i in 0..6 {
            for v in [1e-3, 0.5, 12.0] {
                assert_relative_eq!(from_search(i, to_search(i, v)), v, max_relative = 1e-9);
            }
        }
        assert_eq!(from_search(5, to_search(5, 0.0)), 0.0);
        assert_eq!(from_search(2, -100.0), 0.0);
    }

    fn synthetic(truth: &StrainLifeParams, seed: u64) -> Vec<FatigueObservation> {
        let levels = [60.0, 70.0, 80.0, 90.0, 100.0];
        let mut obs = Vec::new();
        for (l, sigma) in levels.iter().enumerate() {
            let s = element_lifetime(truth, 2.0 * sigma / 75500.0, truth.v0).unwrap();
            for d in sample_lifetimes_stream(&s, 30, seed, l as u64, 2e6) {
                obs.push(if d.censored || d.cycles >= 2e6 {
                    FatigueObservation::run_out(*sigma, 2e6)
                } else {
                    FatigueObservation::failure(*sigma, d.cycles)
                });
            }
        }
        obs
    }

    #[test]
    fn calibration_respects_pins_and_improves() {
        let truth = StrainLifeParams::one_line(6.0, 0.45, 0.55, 1.1e-3);
        let obs = synthetic(&truth, 1);
        let prepared = PreparedLikelihood::new(
            &obs,
            &SpecimenModel::Homogeneous {
                volume: truth.v0,
                youngs_modulus: 75500.0,
            },
        )
        .unwrap();
        let start = StrainLifeParams::one_line(4.0, 0.6, 0.5, 9e-4);
        let mut problem = CalibrationProblem::new(vec![&prepared], ONE_LINE, start);
        problem.starts = 3;
        let fit = calibrate(&problem).unwrap();
        assert!(fit.log_likelihood >= prepared.evaluate(&start).unwrap());
        for s in &fit.starts {
            for row in &s.trace {
                assert_eq!(row.params.b, 0.0);
                assert_eq!(row.params.beta, 0.0);
                assert!(row.params.validate().is_ok());
            }
            for w in s.trace.windows(2) {
                assert!(w[1].log_likelihood >= w[0].log_likelihood);
            }
        }
        assert!(fit.starts.iter().all(|s| s.log_likelihood <= fit.log_likelihood));
        let again = calibrate(&problem).unwrap();
        assert_eq!(again.trace(), fit.trace());
        let mut buf = Vec::new();
        fit.write_trace_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("iteration,m,A,B,alpha,beta,C,log_likelihood"));
    }

    #[test]
    fn all_censored_is_degenerate() {
        let obs = vec![FatigueObservation::run_out(40.0, 2e6); 5];
        let prepared = PreparedLikelihood::new(
            &obs,
            &SpecimenModel::Homogeneous {
                volume: 593.0,
                youngs_modulus: 75500.0,
            },
        )
        .unwrap();
        let problem = CalibrationProblem::new(vec![&prepared], ONE_LINE, StrainLifeParams::one_line(5.0, 0.5, 0.5, 1e-3));
        assert!(matches!(calibrate(&problem), Err(Error::Degenerate(_))));
    }

    #[test]
    fn initial_guess_lands_near_truth() {
        let truth = StrainLifeParams::one_line(6.0, 0.45, 0.55, 1.1e-3);
        let obs = synthetic(&truth, 2);
        let guess = initial_guess(&obs, truth.v0, 75500.0, truth.v0).unwrap();
        assert!(guess.validate().is_ok());
        assert!((guess.m / truth.m - 1.0).abs() < 0.5, "{guess:?}");
        assert!((guess.alpha / truth.alpha - 1.0).abs() < 0.5, "{guess:?}");
        assert!((guess.c / truth.c - 1.0).abs() < 0.5, "{guess:?}");
        let none = vec![FatigueObservation::run_out(50.0, 2e6)];
        assert!(matches!(initial_guess(&none, 593.0, 75500.0, 593.0), Err(Error::Degenerate(_))));
    }
}
