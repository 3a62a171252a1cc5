use nalgebra::{SymmetricEigen, Vector3};

use super::TensorHistory;
use crate::error::{Error, Result};
use crate::tensor::{IsotropicElasticity, SymTensor};

const TIE_TOL: f64 = 1e-9;

/// Unit eigenvector of the largest principal value.
///
/// When the top eigenvalue is repeated within `1e-9 ‖σ‖`, the vector is the
/// member of the top eigenspace with the largest `|x|`, then `|y|`, then `|z|`,
/// signed so its first nonzero component is positive.
pub fn critical_direction(sigma: &SymTensor) -> Vector3<f64> {
    let eig = SymmetricEigen::new(sigma.to_matrix());
    let top = eig.eigenvalues.max();
    let tol = TIE_TOL * sigma.norm().max(f64::MIN_POSITIVE);
    let basis: Vec<Vector3<f64>> = (0..3)
        .filter(|&i| top - eig.eigenvalues[i] <= tol)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    let mut chosen = basis[0];
    if basis.len() == 1 {
        chosen = basis[0];
    } else {
        let orthonormal = gram_schmidt(&basis);
        for axis in 0..3 {
            let mut e = Vector3::zeros();
            e[axis] = 1.0;
            let projection: Vector3<f64> = orthonormal.iter().map(|b| b * b.dot(&e)).sum();
            if projection.norm() > 1e-8 {
                chosen = projection;
                break;
            }
        }
    }
    let mut n = chosen.normalize();
    if let Some(first) = n.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            n = -n;
        }
    }
    n
}

fn gram_schmidt(vectors: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let mut out: Vec<Vector3<f64>> = Vec::new();
    for v in vectors {
        let mut w = *v;
        for u in &out {
            w -= u * u.dot(&w);
        }
        if w.norm() > 1e-10 {
            out.push(w.normalize());
        }
    }
    out
}

/// Range of the normal strain `n·ε·n` over the provided cycle.
pub fn criterion_delta_eps(strain: &TensorHistory, normal: &Vector3<f64>) -> Result<f64> {
    if strain.is_empty() {
        return Err(Error::Domain("strain history is empty".into()));
    }
    if (normal.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("critical direction must be a unit vector, |n| = {}", normal.norm())));
    }
    let (lo, hi) = strain
        .values()
        .iter()
        .map(|e| e.normal_component(normal))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Ok(hi - lo)
}

/// Closed-form range for an elastic R = −1 cycle of stress amplitude `sigma`.
pub fn elastic_delta_eps(elasticity: &IsotropicElasticity, sigma: &SymTensor) -> f64 {
    let n = critical_direction(sigma);
    2.0 * elasticity.strain(sigma).normal_component(&n).abs()
}
