use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Newton iteration on a small square system with a forward-difference Jacobian.
///
/// `steps[j]` is the difference increment for unknown `j`; iteration stops
/// once the infinity norm of the residual drops below `tol`.
pub(crate) fn newton_fd<F>(mut x: DVector<f64>, steps: &[f64], tol: f64, max_iter: usize, mut f: F) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    let mut r = f(&x)?;
    for _ in 0..max_iter {
        let norm = r.amax();
        if norm < tol {
            return Ok(x);
        }
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.clone();
            xp[j] += steps[j];
            let rp = f(&xp)?;
            jac.set_column(j, &((rp - &r) / steps[j]));
        }
        let dx = jac
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| Error::Integration {
                iterations: 0,
                residual: norm,
            })?;
        // Backtrack when a full step overshoots across a yield kink.
        let mut t = 1.0;
        loop {
            let trial = &x + &dx * t;
            let rt = f(&trial)?;
            if rt.amax() < norm || t < 1e-3 {
                x = trial;
                r = rt;
                break;
            }
            t *= 0.5;
        }
    }
    let residual = r.amax();
    if residual < tol {
        Ok(x)
    } else {
        Err(Error::Integration {
            iterations: max_iter,
            residual,
        })
    }
}

/// Illinois false position on a sign-changing bracket `[lo, hi]`.
pub(crate) fn illinois<F>(mut lo: f64, mut hi: f64, mut f_lo: f64, mut f_hi: f64, x_tol: f64, max_iter: usize, mut f: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Correction(format!("root is not bracketed: f({lo})={f_lo}, f({hi})={f_hi}")));
    }
    let mut side = 0i8;
    for _ in 0..max_iter {
        let x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let x = if x.is_finite() && x != lo && x != hi { x } else { 0.5 * (lo + hi) };
        let fx = f(x)?;
        if fx == 0.0 || (hi - lo).abs() < x_tol {
            return Ok(x);
        }
        if fx.signum() == f_hi.signum() {
            hi = x;
            f_hi = fx;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        } else {
            lo = x;
            f_lo = fx;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        }
        let resolution = 4.0 * f64::EPSILON * lo.abs().max(hi.abs());
        if (hi - lo).abs() < x_tol.max(resolution) {
            return Ok(if f_lo.abs() < f_hi.abs() { lo } else { hi });
        }
    }
    Err(Error::Correction(format!("no convergence in {max_iter} iterations on [{lo}, {hi}]")))
}
