use nalgebra::DVector;

use super::{ChabocheParams, MaterialPointState, TensorHistory, DEFAULT_STABILIZED_CYCLE};
use crate::error::{Error, Result};
use crate::solve::newton_fd;
use crate::tensor::SymTensor;

const CONSISTENCY_TOL: f64 = 1e-8;
const MAX_CONSISTENCY_ITER: usize = 100;
const MIXED_TOL: f64 = 1e-9;
const MIXED_MAX_ITER: usize = 50;
const STRAIN_FD_STEP: f64 = 1e-9;

/// `J` of a deviatoric tensor.
fn j2(dev: &SymTensor) -> f64 {
    (1.5 * dev.ddot(dev)).sqrt()
}

/// `J(σ' − X) − σ_y − R(p)`.
pub fn yield_function(params: &ChabocheParams, state: &MaterialPointState, stress: &SymTensor) -> f64 {
    j2(&(stress.deviator() - state.backstress)) - params.yield_stress - params.isotropic(state.cumulative_plastic)
}

/// Backward-Euler return mapping for an imposed total strain.
pub fn chaboche_step(
    params: &ChabocheParams,
    state: &MaterialPointState,
    strain: &SymTensor,
) -> Result<(MaterialPointState, SymTensor)> {
    let el = params.elasticity();
    let trial = el.stress(&(*strain - state.plastic_strain));
    let f_trial = yield_function(params, state, &trial);
    if f_trial <= 0.0 {
        return Ok((*state, trial));
    }

    let three_g = 3.0 * el.shear_modulus();
    let c = params.kin_modulus;
    let d = params.kin_recall;
    let s_trial = trial.deviator();
    let x_n = state.backstress;
    let p_n = state.cumulative_plastic;

    let consistency = |dp: f64| -> (f64, f64) {
        let beta = 1.0 / (1.0 + d * dp);
        let xi = s_trial - x_n * beta;
        let j = j2(&xi);
        let dj = if j > 0.0 { 1.5 * xi.ddot(&x_n) * d * beta * beta / j } else { 0.0 };
        let value = j - (three_g + c * beta) * dp - params.yield_stress - params.isotropic(p_n + dp);
        let slope = dj - (three_g + c * beta) + c * d * beta * beta * dp - params.isotropic_slope(p_n + dp);
        (value, slope)
    };

    let mut lo = 0.0;
    let mut hi = f_trial / three_g;
    let mut expansions = 0;
    while consistency(hi).0 > 0.0 {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::Integration {
                iterations: expansions,
                residual: consistency(hi).0,
            });
        }
    }

    let mut dp = f_trial / (three_g + c + params.isotropic_slope(p_n));
    if !(dp > lo && dp < hi) {
        dp = 0.5 * (lo + hi);
    }
    let mut converged = false;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_CONSISTENCY_ITER {
        let (value, slope) = consistency(dp);
        residual = value.abs();
        if residual < CONSISTENCY_TOL {
            converged = true;
            break;
        }
        if value > 0.0 {
            lo = dp;
        } else {
            hi = dp;
        }
        let newton = dp - value / slope;
        dp = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    if !converged {
        return Err(Error::Integration {
            iterations: MAX_CONSISTENCY_ITER,
            residual,
        });
    }

    let beta = 1.0 / (1.0 + d * dp);
    let xi = s_trial - x_n * beta;
    let direction = xi * (1.0 / j2(&xi));
    let plastic_strain = state.plastic_strain + direction * (1.5 * dp);
    let backstress = (x_n + direction * (c * dp)) * beta;
    let new_state = MaterialPointState {
        plastic_strain,
        backstress,
        cumulative_plastic: p_n + dp,
    };
    let stress = el.stress(&(*strain - plastic_strain));
    Ok((new_state, stress))
}

/// Repetition and sub-stepping controls for cyclic drivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleOptions {
    pub n_cycles: usize,
    /// Integration increments between consecutive history samples.
    pub substeps: usize,
}

impl Default for CycleOptions {
    fn default() -> Self {
        Self {
            n_cycles: DEFAULT_STABILIZED_CYCLE,
            substeps: 8,
        }
    }
}

/// Final-cycle response of a cyclic driver.
#[derive(Debug, Clone)]
pub struct CycleResponse {
    pub stress: TensorHistory,
    pub strain: TensorHistory,
    pub plastic_strain: TensorHistory,
    pub final_state: MaterialPointState,
    /// Largest component-wise stress change between the last two cycles;
    /// `None` for a single cycle.
    pub stabilization: Option<f64>,
    /// Same metric for every cycle after the first.
    pub cycle_metrics: Vec<f64>,
    /// Peak von Mises stress of each cycle.
    pub peak_stress: Vec<f64>,
}

type Solved = (MaterialPointState, SymTensor, SymTensor);

pub(crate) fn run_cycles<T, L, S>(
    times: &[f64],
    targets: &[T],
    zero: T,
    options: &CycleOptions,
    lerp: L,
    mut solve: S,
) -> Result<CycleResponse>
where
    T: Copy,
    L: Fn(&T, &T, f64) -> T,
    S: FnMut(&MaterialPointState, &T, &SymTensor) -> Result<Solved>,
{
    if options.n_cycles == 0 || options.substeps == 0 {
        return Err(Error::Domain("cycle count and substeps must be positive".into()));
    }
    if targets.is_empty() {
        return Err(Error::Domain("loading cycle has no samples".into()));
    }
    let mut state = MaterialPointState::virgin();
    let mut strain = SymTensor::ZERO;
    let mut previous_target = zero;
    let mut previous_stress: Option<Vec<SymTensor>> = None;
    let mut cycle_metrics = Vec::new();
    let mut peak_stress = Vec::with_capacity(options.n_cycles);
    let mut stresses = Vec::new();
    let mut strains = Vec::new();
    let mut plastic = Vec::new();
    for _ in 0..options.n_cycles {
        stresses = Vec::with_capacity(targets.len());
        strains = Vec::with_capacity(targets.len());
        plastic = Vec::with_capacity(targets.len());
        let mut stress = SymTensor::ZERO;
        for target in targets {
            for k in 1..=options.substeps {
                let t = k as f64 / options.substeps as f64;
                let local = if k == options.substeps { *target } else { lerp(&previous_target, target, t) };
                let (s, sigma, eps) = solve(&state, &local, &strain)?;
                state = s;
                stress = sigma;
                strain = eps;
            }
            previous_target = *target;
            stresses.push(stress);
            strains.push(strain);
            plastic.push(state.plastic_strain);
        }
        peak_stress.push(stresses.iter().map(|s| s.von_mises()).fold(0.0, f64::max));
        if let Some(prev) = &previous_stress {
            let metric = prev
                .iter()
                .zip(&stresses)
                .map(|(a, b)| (*a - *b).max_abs())
                .fold(0.0, f64::max);
            cycle_metrics.push(metric);
        }
        previous_stress = Some(stresses.clone());
    }
    let times = times.to_vec();
    Ok(CycleResponse {
        stress: TensorHistory::new(times.clone(), stresses)?,
        strain: TensorHistory::new(times.clone(), strains)?,
        plastic_strain: TensorHistory::new(times, plastic)?,
        final_state: state,
        stabilization: cycle_metrics.last().copied(),
        cycle_metrics,
        peak_stress,
    })
}

fn lerp_tensor(a: &SymTensor, b: &SymTensor, t: f64) -> SymTensor {
    *a + (*b - *a) * t
}

/// Strain-driven response: repeats `eps_path` from a virgin state.
pub fn chaboche_cycle(params: &ChabocheParams, eps_path: &TensorHistory, options: &CycleOptions) -> Result<CycleResponse> {
    params.validate()?;
    run_cycles(
        eps_path.times(),
        eps_path.values(),
        SymTensor::ZERO,
        options,
        lerp_tensor,
        |state, target, _| {
            let (s, sigma) = chaboche_step(params, state, target)?;
            Ok((s, sigma, *target))
        },
    )
}

/// Solves for the free strain components that leave their stresses at zero.
pub(crate) fn mixed_step(
    params: &ChabocheParams,
    state: &MaterialPointState,
    controlled: &[Option<f64>; 6],
    guess: &SymTensor,
) -> Result<Solved> {
    let free: Vec<usize> = (0..6).filter(|&i| controlled[i].is_none()).collect();
    let assemble = |x: &DVector<f64>| {
        let mut eps = SymTensor::ZERO;
        let mut k = 0;
        for i in 0..6 {
            eps.0[i] = match controlled[i] {
                Some(v) => v,
                None => {
                    k += 1;
                    x[k - 1]
                }
            };
        }
        eps
    };
    if free.is_empty() {
        let eps = assemble(&DVector::zeros(0));
        let (s, sigma) = chaboche_step(params, state, &eps)?;
        return Ok((s, sigma, eps));
    }
    let x0 = DVector::from_iterator(free.len(), free.iter().map(|&i| guess.0[i]));
    let steps = vec![STRAIN_FD_STEP; free.len()];
    let x = newton_fd(x0, &steps, MIXED_TOL, MIXED_MAX_ITER, |x| {
        let (_, sigma) = chaboche_step(params, state, &assemble(x))?;
        Ok(DVector::from_iterator(free.len(), free.iter().map(|&i| sigma.0[i])))
    })?;
    let eps = assemble(&x);
    let (s, sigma) = chaboche_step(params, state, &eps)?;
    Ok((s, sigma, eps))
}

/// Uniaxial-stress response: the strain along `axis` (0, 1 or 2) follows
/// `axial_strain` while every other stress component stays zero.
pub fn uniaxial_cycle(
    params: &ChabocheParams,
    axial_strain: &[f64],
    axis: usize,
    options: &CycleOptions,
) -> Result<CycleResponse> {
    params.validate()?;
    if axis > 2 {
        return Err(Error::Domain(format!("loading axis must be 0, 1 or 2, got {axis}")));
    }
    let times: Vec<f64> = (0..axial_strain.len()).map(|i| i as f64 / axial_strain.len() as f64).collect();
    let nu = params.poisson_ratio;
    run_cycles(
        &times,
        axial_strain,
        0.0,
        options,
        |a, b, t| a + (b - a) * t,
        |state, target, previous| {
            let mut controlled = [None; 6];
            controlled[axis] = Some(*target);
            let mut guess = *previous;
            let increment = target - previous.0[axis];
            for i in (0..3).filter(|&i| i != axis) {
                guess.0[i] -= nu * increment;
            }
            mixed_step(params, state, &controlled, &guess)
        },
    )
}
