//! Symmetric second-order tensors stored in Voigt order.
//!
//! Components are `[xx, yy, zz, xy, yz, xz]`. Shear entries are tensor
//! components, not engineering shear strains, so `ε_xy` here is half of `γ_xy`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{Matrix3, Vector3};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymTensor(pub [f64; 6]);

impl SymTensor {
    pub const ZERO: SymTensor = SymTensor([0.0; 6]);
    pub const IDENTITY: SymTensor = SymTensor([1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);

    pub fn new(xx: f64, yy: f64, zz: f64, xy: f64, yz: f64, xz: f64) -> Self {
        SymTensor([xx, yy, zz, xy, yz, xz])
    }

    pub fn diag(xx: f64, yy: f64, zz: f64) -> Self {
        SymTensor([xx, yy, zz, 0.0, 0.0, 0.0])
    }

    /// Unit uniaxial tensor along the z axis.
    pub fn uniaxial_z(value: f64) -> Self {
        SymTensor([0.0, 0.0, value, 0.0, 0.0, 0.0])
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }

    pub fn deviator(&self) -> Self {
        let h = self.trace() / 3.0;
        let c = self.0;
        SymTensor([c[0] - h, c[1] - h, c[2] - h, c[3], c[4], c[5]])
    }

    /// Full double contraction `a : b`, counting each off-diagonal pair twice.
    pub fn ddot(&self, other: &SymTensor) -> f64 {
        let a = self.0;
        let b = other.0;
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + 2.0 * (a[3] * b[3] + a[4] * b[4] + a[5] * b[5])
    }

    pub fn norm(&self) -> f64 {
        self.ddot(self).sqrt()
    }

    /// von Mises invariant `sqrt(3/2 s:s)` of the deviatoric part.
    pub fn von_mises(&self) -> f64 {
        let s = self.deviator();
        (1.5 * s.ddot(&s)).sqrt()
    }

    /// Quadratic form `n · T · n`.
    pub fn normal_component(&self, n: &Vector3<f64>) -> f64 {
        let c = self.0;
        c[0] * n[0] * n[0]
            + c[1] * n[1] * n[1]
            + c[2] * n[2] * n[2]
            + 2.0 * (c[3] * n[0] * n[1] + c[4] * n[1] * n[2] + c[5] * n[0] * n[2])
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let c = self.0;
        Matrix3::new(c[0], c[3], c[5], c[3], c[1], c[4], c[5], c[4], c[2])
    }

    /// Symmetric part of `m` in Voigt order.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        SymTensor([
            m[(0, 0)],
            m[(1, 1)],
            m[(2, 2)],
            0.5 * (m[(0, 1)] + m[(1, 0)]),
            0.5 * (m[(1, 2)] + m[(2, 1)]),
            0.5 * (m[(0, 2)] + m[(2, 0)]),
        ])
    }

    /// `R · T · Rᵀ`.
    pub fn rotated(&self, r: &Matrix3<f64>) -> Self {
        SymTensor::from_matrix(&(r * self.to_matrix() * r.transpose()))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Add for SymTensor {
    type Output = SymTensor;
    fn add(self, rhs: SymTensor) -> SymTensor {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o += r;
        }
        SymTensor(out)
    }
}

impl AddAssign for SymTensor {
    fn add_assign(&mut self, rhs: SymTensor) {
        *self = *self + rhs;
    }
}

impl Sub for SymTensor {
    type Output = SymTensor;
    fn sub(self, rhs: SymTensor) -> SymTensor {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o -= r;
        }
        SymTensor(out)
    }
}

impl SubAssign for SymTensor {
    fn sub_assign(&mut self, rhs: SymTensor) {
        *self = *self - rhs;
    }
}

impl Mul<f64> for SymTensor {
    type Output = SymTensor;
    fn mul(self, k: f64) -> SymTensor {
        SymTensor(self.0.map(|v| v * k))
    }
}

impl Mul<SymTensor> for f64 {
    type Output = SymTensor;
    fn mul(self, t: SymTensor) -> SymTensor {
        t * self
    }
}

impl Neg for SymTensor {
    type Output = SymTensor;
    fn neg(self) -> SymTensor {
        self * -1.0
    }
}

/// Isotropic linear elasticity in Lamé form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotropicElasticity {
    pub youngs: f64,
    pub poisson: f64,
}

impl IsotropicElasticity {
    pub fn new(youngs: f64, poisson: f64) -> Self {
        Self { youngs, poisson }
    }

    pub fn shear_modulus(&self) -> f64 {
        self.youngs / (2.0 * (1.0 + self.poisson))
    }

    pub fn lame_lambda(&self) -> f64 {
        self.youngs * self.poisson / ((1.0 + self.poisson) * (1.0 - 2.0 * self.poisson))
    }

    /// `σ = λ tr(ε) I + 2μ ε`.
    pub fn stress(&self, strain: &SymTensor) -> SymTensor {
        SymTensor::IDENTITY * (self.lame_lambda() * strain.trace()) + *strain * (2.0 * self.shear_modulus())
    }

    /// `ε = ((1+ν) σ − ν tr(σ) I) / E`.
    pub fn strain(&self, stress: &SymTensor) -> SymTensor {
        let e = self.youngs;
        let nu = self.poisson;
        (*stress * (1.0 + nu) - SymTensor::IDENTITY * (nu * stress.trace())) * (1.0 / e)
    }
}

/// Rotation matrix from a unit quaternion built out of four arbitrary numbers.
pub fn rotation_from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Matrix3<f64> {
    let n = (w * w + x * x + y * y + z * z).sqrt();
    let (w, x, y, z) = (w / n, x / n, y / n, z / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}
