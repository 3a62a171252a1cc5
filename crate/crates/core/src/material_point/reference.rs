//! Full return-mapping counterpart of the Neuber corrector.
//!
//! The stress is held proportional to a fixed direction while the normal
//! strain on the critical plane follows a sinusoid; the strain amplitude is
//! then tuned until the stabilized loop satisfies the Neuber product. The
//! result is an independent check on the uniaxial-equivalent reduction used
//! by [`neuber_correct`](super::neuber_correct).

use nalgebra::{DVector, Vector3};

use super::chaboche::{chaboche_step, run_cycles};
use super::{critical_direction, criterion_delta_eps, elastic_delta_eps, ChabocheParams, CycleOptions, CycleResponse, TensorHistory};
use crate::error::{Error, Result};
use crate::solve::{illinois, newton_fd};
use crate::tensor::SymTensor;

const TOL: f64 = 1e-9;
const MAX_ITER: usize = 50;

/// Cycle with stress `s(t)·direction` and `n·ε(t)·n = amplitude·sin(2πt)`.
pub fn proportional_strain_cycle(
    params: &ChabocheParams,
    direction: &SymTensor,
    normal: &Vector3<f64>,
    amplitude: f64,
    samples: usize,
    options: &CycleOptions,
) -> Result<CycleResponse> {
    params.validate()?;
    let el = params.elasticity();
    let e = params.youngs_modulus;
    let compliance = el.strain(direction).normal_component(normal);
    if compliance.abs() < 1e-12 / e {
        return Err(Error::Degenerate("stress direction produces no normal strain on the critical plane".into()));
    }
    let cycle = TensorHistory::sinusoid(SymTensor::uniaxial_z(amplitude), samples);
    let targets: Vec<f64> = cycle.values().iter().map(|t| t.0[2]).collect();
    let mut steps = vec![1e-9; 7];
    steps[6] = 1e-6;
    run_cycles(
        cycle.times(),
        &targets,
        0.0,
        options,
        |a, b, t| a + (b - a) * t,
        |state, target, previous| {
            let s_prev = previous.normal_component(normal);
            let current_scale = state_stress_scale(params, state, previous, direction);
            let s_guess = current_scale + (target - s_prev) / compliance;
            let guess_strain = *previous + el.strain(&(*direction * (s_guess - current_scale)));
            let mut x0 = DVector::zeros(7);
            for i in 0..6 {
                x0[i] = guess_strain.0[i];
            }
            x0[6] = s_guess;
            let x = newton_fd(x0, &steps, TOL, MAX_ITER, |x| {
                let eps = SymTensor([x[0], x[1], x[2], x[3], x[4], x[5]]);
                let (_, sigma) = chaboche_step(params, state, &eps)?;
                let mismatch = sigma - *direction * x[6];
                let mut r = DVector::zeros(7);
                for i in 0..6 {
                    r[i] = mismatch.0[i];
                }
                r[6] = e * (eps.normal_component(normal) - target);
                Ok(r)
            })?;
            let eps = SymTensor([x[0], x[1], x[2], x[3], x[4], x[5]]);
            let (next, sigma) = chaboche_step(params, state, &eps)?;
            Ok((next, sigma, eps))
        },
    )
}

fn state_stress_scale(
    params: &ChabocheParams,
    state: &super::MaterialPointState,
    strain: &SymTensor,
    direction: &SymTensor,
) -> f64 {
    let sigma = params.elasticity().stress(&(*strain - state.plastic_strain));
    sigma.ddot(direction) / direction.ddot(direction)
}

/// Half ranges of the uniaxial-equivalent stress and strain over a cycle.
fn equivalent_amplitudes(params: &ChabocheParams, response: &CycleResponse, direction: &SymTensor) -> (f64, f64) {
    let dev = direction.deviator();
    let half_range = |values: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        0.5 * (hi - lo)
    };
    let stress: Vec<f64> = response
        .stress
        .values()
        .iter()
        .map(|s| s.ddot(direction) / direction.ddot(direction))
        .collect();
    let strain: Vec<f64> = stress
        .iter()
        .zip(response.plastic_strain.values())
        .map(|(s, ep)| s / params.youngs_modulus + ep.ddot(&dev) / (1.5 * dev.ddot(&dev)))
        .collect();
    (half_range(&mut stress.iter().copied()), half_range(&mut strain.iter().copied()))
}

/// Stabilized criterion range of the full integrator driven to the
/// Neuber-consistent amplitude for an R = −1 elastic cycle of amplitude
/// `elastic_amplitude`.
pub fn neuber_reference_delta_eps(
    params: &ChabocheParams,
    elastic_amplitude: &SymTensor,
    samples: usize,
    options: &CycleOptions,
) -> Result<f64> {
    let el = params.elasticity();
    let s_a = elastic_amplitude.von_mises();
    if s_a <= params.yield_stress {
        return Ok(elastic_delta_eps(&el, elastic_amplitude));
    }
    let direction = *elastic_amplitude * (1.0 / s_a);
    let normal = critical_direction(elastic_amplitude);
    let a_elastic = el.strain(elastic_amplitude).normal_component(&normal);
    let target = s_a * s_a / params.youngs_modulus;
    let mismatch = |a: f64| -> Result<(f64, CycleResponse)> {
        let response = proportional_strain_cycle(params, &direction, &normal, a, samples, options)?;
        let (sigma_a, eps_a) = equivalent_amplitudes(params, &response, &direction);
        Ok(((sigma_a * eps_a - target) / target, response))
    };
    let lo = a_elastic;
    let f_lo = mismatch(lo)?.0;
    let mut hi = 1.25 * a_elastic;
    let mut f_hi = mismatch(hi)?.0;
    let mut expansions = 0;
    while f_hi <= 0.0 {
        hi *= 1.5;
        f_hi = mismatch(hi)?.0;
        expansions += 1;
        if expansions > 30 {
            return Err(Error::Correction("reference amplitude search diverged".into()));
        }
    }
    let a = illinois(lo, hi, f_lo, f_hi, 1e-7 * a_elastic.abs(), 100, |a| Ok(mismatch(a)?.0))?;
    let response = mismatch(a)?.1;
    criterion_delta_eps(&response.strain, &normal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material_point::{neuber_correct, DEFAULT_SAMPLES_PER_CYCLE, DEFAULT_STABILIZED_CYCLE};

    #[test]
    fn uniaxial_corrector_matches_reference() {
        let p = ChabocheParams::cast_aluminium();
        let amp = SymTensor::uniaxial_z(1.333 * p.yield_stress);
        let opts = CycleOptions::default();
        let reference = neuber_reference_delta_eps(&p, &amp, DEFAULT_SAMPLES_PER_CYCLE, &opts).unwrap();
        let hist = TensorHistory::sinusoid(amp, DEFAULT_SAMPLES_PER_CYCLE);
        let corrected = neuber_correct(&p, &hist, DEFAULT_STABILIZED_CYCLE).unwrap();
        let fast = criterion_delta_eps(&corrected.strain, &critical_direction(&amp)).unwrap();
        assert!(reference > 2.0 * amp.0[2] / p.youngs_modulus);
        assert!((fast / reference - 1.0).abs() < 0.05, "{fast} vs {reference}");
    }

    #[test]
    fn elastic_case_driven_to_elastic_amplitude() {
        let p = ChabocheParams::cast_aluminium();
        let amp = SymTensor::diag(60.0, 30.0, 0.0);
        let normal = critical_direction(&amp);
        let a = p.elasticity().strain(&amp).normal_component(&normal);
        let r = proportional_strain_cycle(&p, &(amp * (1.0 / amp.von_mises())), &normal, a, 40, &CycleOptions { n_cycles: 1, substeps: 2 }).unwrap();
        let peak = r.stress.values()[10];
        for (x, y) in peak.0.iter().zip(amp.0) {
            assert!((x - y).abs() < 1e-6, "{peak:?}");
        }
    }
}
