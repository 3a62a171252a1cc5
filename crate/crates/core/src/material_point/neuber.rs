use super::{ChabocheParams, TensorHistory};
use crate::error::{Error, Result};
use crate::solve::illinois;
use crate::tensor::SymTensor;

const PROPORTIONALITY_TOL: f64 = 1e-6;
const MAX_ROOT_ITER: usize = 200;
const MAX_BRACKET_EXPANSIONS: usize = 60;

/// Stabilized elasto-plastic cycle recovered from an elastic history.
#[derive(Debug, Clone)]
pub struct CorrectedCycle {
    pub stress: TensorHistory,
    pub strain: TensorHistory,
    /// False when the elastic history never reaches yield and the
    /// correction is the identity.
    pub plastic: bool,
}

/// Uniaxial-equivalent internal variables: signed equivalent plastic strain,
/// backstress and cumulative plastic strain.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct EquivalentState {
    q: f64,
    x: f64,
    p: f64,
}

fn equivalent_step(params: &ChabocheParams, state: &EquivalentState, eps: f64) -> Result<(EquivalentState, f64)> {
    let e = params.youngs_modulus;
    let (c, d) = (params.kin_modulus, params.kin_recall);
    let trial = e * (eps - state.q);
    let f_trial = (trial - state.x).abs() - params.yield_stress - params.isotropic(state.p);
    if f_trial <= 0.0 {
        return Ok((*state, trial));
    }
    let phi = |dp: f64| {
        let beta = 1.0 / (1.0 + d * dp);
        (trial - beta * state.x).abs() - (e + c * beta) * dp - params.yield_stress - params.isotropic(state.p + dp)
    };
    let mut hi = f_trial / e;
    let mut expansions = 0;
    while phi(hi) > 0.0 {
        hi *= 2.0;
        expansions += 1;
        if expansions > MAX_BRACKET_EXPANSIONS {
            return Err(Error::Correction("uniaxial-equivalent return mapping diverged".into()));
        }
    }
    let dp = illinois(0.0, hi, f_trial, phi(hi), 1e-16, MAX_ROOT_ITER, |dp| Ok(phi(dp)))?;
    let beta = 1.0 / (1.0 + d * dp);
    let sign = (trial - beta * state.x).signum();
    let next = EquivalentState {
        q: state.q + sign * dp,
        x: beta * (state.x + c * sign * dp),
        p: state.p + dp,
    };
    Ok((next, e * (eps - next.q)))
}

/// Strain-driven uniaxial-equivalent integration with automatic sub-steps.
fn equivalent_advance(
    params: &ChabocheParams,
    state: &EquivalentState,
    from: f64,
    to: f64,
) -> Result<(EquivalentState, f64)> {
    let max_increment = 0.02 * params.yield_stress / params.youngs_modulus;
    let n = ((to - from).abs() / max_increment).ceil().clamp(1.0, 5000.0) as usize;
    let mut s = *state;
    let mut sigma = params.youngs_modulus * (from - state.q);
    for k in 1..=n {
        let eps = if k == n { to } else { from + (to - from) * k as f64 / n as f64 };
        let (next, out) = equivalent_step(params, &s, eps)?;
        s = next;
        sigma = out;
    }
    Ok((s, sigma))
}

/// Direction tensor and signed equivalent values of a proportional history.
fn proportional_decomposition(history: &TensorHistory) -> Result<Option<(SymTensor, Vec<f64>)>> {
    let Some(peak) = history
        .values()
        .iter()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .filter(|t| t.norm() > 0.0)
    else {
        return Ok(None);
    };
    let unit = *peak * (1.0 / peak.norm());
    for (index, sigma) in history.values().iter().enumerate() {
        let norm = sigma.norm();
        if norm == 0.0 {
            continue;
        }
        let along = sigma.ddot(&unit);
        let deviation = (*sigma - unit * along).norm() / norm;
        if deviation > PROPORTIONALITY_TOL {
            return Err(Error::NonProportional { index, deviation });
        }
    }
    let scale = unit.von_mises();
    if scale == 0.0 {
        return Ok(None);
    }
    let direction = unit * (1.0 / scale);
    let signed = history.values().iter().map(|s| s.ddot(&unit) * scale).collect();
    Ok(Some((direction, signed)))
}

/// Cyclic-branch Neuber correction with the stress direction locked to the
/// elastic one.
///
/// The elastic history is one cycle, repeated `n_cycles` times from a virgin
/// state; the returned histories are the last repetition. Along each branch
/// from the latest reversal, `(σ − σ_r)(ε − ε_r) = (s − s_r)² / E` holds
/// in uniaxial-equivalent variables.
pub fn neuber_correct(params: &ChabocheParams, elastic: &TensorHistory, n_cycles: usize) -> Result<CorrectedCycle> {
    params.validate()?;
    if elastic.is_empty() || n_cycles == 0 {
        return Err(Error::Domain("correction needs a non-empty cycle and at least one repetition".into()));
    }
    let el = params.elasticity();
    let decomposition = proportional_decomposition(elastic)?;
    let peak = elastic.values().iter().map(|s| s.von_mises()).fold(0.0, f64::max);
    let Some((direction, signed)) = decomposition.filter(|_| peak > params.yield_stress) else {
        return Ok(CorrectedCycle {
            stress: elastic.clone(),
            strain: elastic.map(|s| el.strain(s)),
            plastic: false,
        });
    };

    let e = params.youngs_modulus;
    let mut state = EquivalentState::default();
    let (mut eps, mut sigma, mut s_prev) = (0.0, 0.0, 0.0);
    let (mut eps_r, mut sigma_r, mut s_r) = (0.0, 0.0, 0.0);
    let mut direction_sign = 0.0;
    let mut final_sigma = vec![0.0; signed.len()];
    let mut final_q = vec![0.0; signed.len()];

    for cycle in 0..n_cycles {
        for (i, &s) in signed.iter().enumerate() {
            let ds = s - s_prev;
            if ds != 0.0 {
                let sign = ds.signum();
                if direction_sign != 0.0 && sign != direction_sign {
                    eps_r = eps;
                    sigma_r = sigma;
                    s_r = s_prev;
                }
                direction_sign = sign;
                let target = (s - s_r) * (s - s_r) / e;
                let start = state;
                let h = |trial_eps: f64| -> Result<(f64, EquivalentState, f64)> {
                    let (next, out) = equivalent_advance(params, &start, eps, trial_eps)?;
                    Ok(((out - sigma_r) * (trial_eps - eps_r) - target, next, out))
                };
                let h_lo = (sigma - sigma_r) * (eps - eps_r) - target;
                let mut width = 2.0 * ds.abs() / e;
                let mut hi = eps + sign * width;
                let mut h_hi = h(hi)?.0;
                let mut expansions = 0;
                while h_hi <= 0.0 {
                    width *= 2.0;
                    hi = eps + sign * width;
                    h_hi = h(hi)?.0;
                    expansions += 1;
                    if expansions > MAX_BRACKET_EXPANSIONS {
                        return Err(Error::Correction(format!("no Neuber bracket at sample {i}")));
                    }
                }
                let root = if h_lo >= 0.0 {
                    eps
                } else {
                    let tol = 1e-13 * hi.abs().max(eps.abs()).max(1e-6);
                    illinois(eps, hi, h_lo, h_hi, tol, MAX_ROOT_ITER, |x| Ok(h(x)?.0))?
                };
                let (_, next, out) = h(root)?;
                state = next;
                eps = root;
                sigma = out;
                s_prev = s;
            }
            if cycle + 1 == n_cycles {
                final_sigma[i] = sigma;
                final_q[i] = state.q;
            }
        }
    }

    let deviatoric = direction.deviator();
    let stresses: Vec<SymTensor> = final_sigma.iter().map(|&s| direction * s).collect();
    let strains = stresses
        .iter()
        .zip(&final_q)
        .map(|(sig, &q)| el.strain(sig) + deviatoric * (1.5 * q))
        .collect();
    Ok(CorrectedCycle {
        stress: elastic.with_values(stresses),
        strain: elastic.with_values(strains),
        plastic: true,
    })
}
