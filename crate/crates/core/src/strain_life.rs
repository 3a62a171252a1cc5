//! Probabilistic strain-life law at the material-point level.
//!
//! The deterministic curve is the two-line law
//! `Δε/2 = g(N) = A·N^(−α) + B·N^(−β) + C`. An element of volume `V` loaded
//! with criterion `Δε*` has a Weibull lifetime of shape `m` whose scale is
//! `g⁻¹(Δε*/2)·(V0/(V·ln 2))^(1/m)`, so that an element of the reference
//! volume `V0` has its median exactly on the curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference volume of the gauge section of the standard specimen, mm³.
pub const DEFAULT_REFERENCE_VOLUME: f64 = 593.0;

/// Lives beyond `exp(MAX_LN_CYCLES)` are indistinguishable from the fatigue
/// limit and are reported as infinite.
pub const MAX_LN_CYCLES: f64 = 690.0;

const LN_BRACKET_LO: f64 = 0.0;
const LN_BRACKET_HI: f64 = 36.841_361_487_904_734; // ln(1e16)
const LN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrainLifeParams {
    /// Weibull shape.
    pub m: f64,
    /// HCF line coefficient.
    #[serde(rename = "A")]
    pub a: f64,
    /// HCF exponent.
    pub alpha: f64,
    /// LCF line coefficient; zero gives the one-line model.
    #[serde(rename = "B", default)]
    pub b: f64,
    /// LCF exponent.
    #[serde(default)]
    pub beta: f64,
    /// Fatigue-limit strain amplitude.
    #[serde(rename = "C", default)]
    pub c: f64,
    /// Reference volume, mm³.
    #[serde(rename = "V0", default = "default_v0")]
    pub v0: f64,
}

fn default_v0() -> f64 {
    DEFAULT_REFERENCE_VOLUME
}

impl StrainLifeParams {
    /// One-line model `A·N^(−α) + C` at the default reference volume.
    pub fn one_line(m: f64, a: f64, alpha: f64, c: f64) -> Self {
        Self {
            m,
            a,
            alpha,
            b: 0.0,
            beta: 0.0,
            c,
            v0: DEFAULT_REFERENCE_VOLUME,
        }
    }

    pub fn two_line(m: f64, a: f64, alpha: f64, b: f64, beta: f64, c: f64) -> Self {
        Self {
            m,
            a,
            alpha,
            b,
            beta,
            c,
            v0: DEFAULT_REFERENCE_VOLUME,
        }
    }

    pub fn with_reference_volume(mut self, v0: f64) -> Self {
        self.v0 = v0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.m > 0.0, "m must be positive"),
            (self.a > 0.0, "A must be positive"),
            (self.alpha > 0.0, "alpha must be positive"),
            (self.b >= 0.0, "B must be nonnegative"),
            (self.beta >= 0.0, "beta must be nonnegative"),
            (self.c >= 0.0, "C must be nonnegative"),
            (self.v0 > 0.0, "V0 must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidParameter(format!("{msg} (got {self:?})")));
            }
        }
        let all = [self.m, self.a, self.alpha, self.b, self.beta, self.c, self.v0];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite strain-life parameter in {self:?}")));
        }
        Ok(())
    }

    /// Parameter vector in the order `[m, A, B, α, β, C]`.
    pub fn to_vector(&self) -> [f64; 6] {
        [self.m, self.a, self.b, self.alpha, self.beta, self.c]
    }

    pub fn from_vector(v: [f64; 6], v0: f64) -> Self {
        Self {
            m: v[0],
            a: v[1],
            b: v[2],
            alpha: v[3],
            beta: v[4],
            c: v[5],
            v0,
        }
    }

    fn g_of_ln(&self, ln_n: f64) -> f64 {
        let lcf = if self.b > 0.0 { self.b * (-self.beta * ln_n).exp() } else { 0.0 };
        self.a * (-self.alpha * ln_n).exp() + lcf + self.c
    }

    fn dg_dln(&self, ln_n: f64) -> f64 {
        let lcf = if self.b > 0.0 {
            -self.beta * self.b * (-self.beta * ln_n).exp()
        } else {
            0.0
        };
        -self.alpha * self.a * (-self.alpha * ln_n).exp() + lcf
    }
}

/// Strain amplitude on the deterministic curve after `n` cycles.
pub fn g(params: &StrainLifeParams, n: f64) -> Result<f64> {
    if !(n > 0.0) {
        return Err(Error::Domain(format!("g requires N > 0, got {n}")));
    }
    if n.is_infinite() {
        return Ok(params.c);
    }
    Ok(params.g_of_ln(n.ln()))
}

/// Cycle count, possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cycles {
    Finite(f64),
    Infinite,
}

impl Cycles {
    pub fn finite(self) -> Option<f64> {
        match self {
            Cycles::Finite(n) => Some(n),
            Cycles::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Cycles::Infinite)
    }
}

/// `ln g⁻¹(eps_amp)`, or `None` when the amplitude does not exceed the
/// fatigue limit.
pub fn ln_g_inverse(params: &StrainLifeParams, eps_amp: f64) -> Option<f64> {
    if !(eps_amp > params.c) {
        return None;
    }
    let residual = |x: f64| params.g_of_ln(x) - eps_amp;

    let mut lo = LN_BRACKET_LO;
    let mut hi = LN_BRACKET_HI;
    // g is strictly decreasing in ln N: residual(lo) must be ≥ 0, residual(hi) ≤ 0.
    while residual(lo) < 0.0 {
        hi = lo;
        lo -= 32.0;
        if lo < -700.0 {
            return Some(lo);
        }
    }
    while residual(hi) > 0.0 {
        lo = hi;
        hi = (hi * 2.0).max(hi + 32.0);
        if hi > MAX_LN_CYCLES {
            if residual(MAX_LN_CYCLES) > 0.0 {
                return None;
            }
            hi = MAX_LN_CYCLES;
        }
    }

    while hi - lo > LN_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    let slope = params.dg_dln(mid);
    let polished = if slope < 0.0 { mid - residual(mid) / slope } else { mid };
    let root = if polished >= lo - LN_TOLERANCE && polished <= hi + LN_TOLERANCE {
        polished
    } else {
        mid
    };
    if root > MAX_LN_CYCLES {
        None
    } else {
        Some(root)
    }
}

/// Inverse of [`g`] on `]C, ∞)`; amplitudes at or below the fatigue limit
/// give an infinite life.
pub fn g_inverse(params: &StrainLifeParams, eps_amp: f64) -> Result<Cycles> {
    if !(eps_amp >= 0.0) {
        return Err(Error::Domain(format!("strain amplitude must be nonnegative, got {eps_amp}")));
    }
    Ok(match ln_g_inverse(params, eps_amp) {
        Some(ln_n) => Cycles::Finite(ln_n.exp()),
        None => Cycles::Infinite,
    })
}

/// Two-parameter Weibull lifetime with an explicit infinite-life state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullLifetime {
    scale: Cycles,
    shape: f64,
}

impl WeibullLifetime {
    pub fn new(scale: f64, shape: f64) -> Result<Self> {
        if !(scale > 0.0) || !(shape > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Weibull scale and shape must be positive (scale {scale}, shape {shape})"
            )));
        }
        Ok(Self {
            scale: if scale.is_finite() { Cycles::Finite(scale) } else { Cycles::Infinite },
            shape,
        })
    }

    pub fn infinite(shape: f64) -> Self {
        Self {
            scale: Cycles::Infinite,
            shape,
        }
    }

    pub(crate) fn from_ln_scale(ln_scale: Option<f64>, shape: f64) -> Self {
        let scale = match ln_scale {
            Some(ln) if ln <= MAX_LN_CYCLES => Cycles::Finite(ln.exp()),
            _ => Cycles::Infinite,
        };
        Self { scale, shape }
    }

    pub fn scale(&self) -> Cycles {
        self.scale
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn is_infinite(&self) -> bool {
        self.scale.is_infinite()
    }

    pub fn ln_scale(&self) -> Option<f64> {
        self.scale.finite().map(f64::ln)
    }

    /// `(N/λ)^m`, the cumulative hazard.
    pub fn cumulative_hazard(&self, n: f64) -> f64 {
        match self.scale {
            Cycles::Infinite => 0.0,
            Cycles::Finite(lambda) => (n / lambda).powf(self.shape),
        }
    }

    pub fn cdf(&self, n: f64) -> f64 {
        if n <= 0.0 {
            return 0.0;
        }
        -(-self.cumulative_hazard(n)).exp_m1()
    }

    pub fn survival(&self, n: f64) -> f64 {
        if n <= 0.0 {
            return 1.0;
        }
        (-self.cumulative_hazard(n)).exp()
    }

    pub fn pdf(&self, n: f64) -> f64 {
        match self.scale {
            Cycles::Infinite => 0.0,
            Cycles::Finite(lambda) => {
                if n < 0.0 {
                    return 0.0;
                }
                let m = self.shape;
                let x = n / lambda;
                (m / lambda) * x.powf(m - 1.0) * (-x.powf(m)).exp()
            }
        }
    }

    pub fn quantile(&self, q: f64) -> Cycles {
        match self.scale {
            Cycles::Infinite => Cycles::Infinite,
            Cycles::Finite(lambda) => Cycles::Finite(lambda * (-(-q).ln_1p()).powf(1.0 / self.shape)),
        }
    }

    pub fn median(&self) -> Cycles {
        self.quantile(0.5)
    }
}

pub fn weibull_cdf(dist: &WeibullLifetime, n: f64) -> f64 {
    dist.cdf(n)
}

pub fn weibull_pdf(dist: &WeibullLifetime, n: f64) -> f64 {
    dist.pdf(n)
}

/// `ln λ` contribution of the volume factor `(1/m)·ln(V0/(V·ln 2))`.
pub(crate) fn ln_volume_factor(params: &StrainLifeParams, volume: f64) -> f64 {
    (params.v0.ln() - volume.ln() - std::f64::consts::LN_2.ln()) / params.m
}

/// Weibull lifetime of one element with criterion `delta_eps` and volume `volume`.
pub fn element_lifetime(params: &StrainLifeParams, delta_eps: f64, volume: f64) -> Result<WeibullLifetime> {
    if !(delta_eps >= 0.0) {
        return Err(Error::Domain(format!("strain range must be nonnegative, got {delta_eps}")));
    }
    if !(volume > 0.0) {
        return Err(Error::Domain(format!("element volume must be positive, got {volume}")));
    }
    let ln_scale = ln_g_inverse(params, 0.5 * delta_eps).map(|ln_n| ln_n + ln_volume_factor(params, volume));
    Ok(WeibullLifetime::from_ln_scale(ln_scale, params.m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn power_law() -> StrainLifeParams {
        StrainLifeParams::two_line(2.0, 1.0, 0.5, 0.0, 0.0, 0.0)
    }

    fn two_line() -> StrainLifeParams {
        StrainLifeParams::two_line(2.0, 0.1, 0.3, 0.5, 0.7, 0.001)
    }

    #[test]
    fn g_single_power_law() {
        assert_relative_eq!(g(&power_law(), 100.0).unwrap(), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn g_two_line_reference_value() {
        // 0.1·10^-1.2 + 0.5·10^-2.8 + 0.001, evaluated independently.
        let expected = 0.1 * 10f64.powf(-1.2) + 0.5 * 10f64.powf(-2.8) + 0.001;
        let got = g(&two_line(), 1e4).unwrap();
        assert!((got - 0.008_102_0).abs() < 1e-7, "{got}");
        assert_relative_eq!(got, expected, epsilon = 1e-15);
    }

    #[test]
    fn g_tends_to_fatigue_limit() {
        let p = two_line();
        assert_eq!(g(&p, f64::INFINITY).unwrap(), p.c);
        assert!((g(&p, 1e40).unwrap() - p.c).abs() < 1e-12);
    }

    #[test]
    fn g_rejects_nonpositive_cycles() {
        assert!(matches!(g(&two_line(), 0.0), Err(Error::Domain(_))));
        assert!(matches!(g(&two_line(), -3.0), Err(Error::Domain(_))));
    }

    #[test]
    fn g_inverse_analytic_power_law() {
        let n = g_inverse(&power_law(), 0.1).unwrap().finite().unwrap();
        assert_relative_eq!(n, 100.0, max_relative = 1e-10);
    }

    #[test]
    fn g_inverse_two_line_round_trip() {
        let p = two_line();
        let eps = g(&p, 1e4).unwrap();
        let n = g_inverse(&p, eps).unwrap().finite().unwrap();
        assert_relative_eq!(n, 1e4, max_relative = 1e-10);
        // The stated rounded amplitude maps back to 10⁴ within 0.01 %.
        let n_rounded = g_inverse(&p, 0.008_102_0).unwrap().finite().unwrap();
        assert_relative_eq!(n_rounded, 1e4, max_relative = 1e-4);
    }

    #[test]
    fn g_inverse_agrees_with_plain_bisection() {
        let p = two_line();
        for eps in [0.0011, 0.002, 0.01, 0.05, 0.3] {
            // Independent oracle: bisection on N itself, geometric midpoints.
            let (mut lo, mut hi) = (1e-6_f64, 1e30_f64);
            for _ in 0..400 {
                let mid = (lo * hi).sqrt();
                if g(&p, mid).unwrap() > eps {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let n = g_inverse(&p, eps).unwrap().finite().unwrap();
            assert_relative_eq!(n, lo, max_relative = 1e-10);
        }
    }

    #[test]
    fn g_inverse_below_limit_is_infinite() {
        let p = two_line();
        assert_eq!(g_inverse(&p, p.c / 2.0).unwrap(), Cycles::Infinite);
        assert_eq!(g_inverse(&p, p.c).unwrap(), Cycles::Infinite);
        assert!(g_inverse(&p, -1.0).is_err());
    }

    #[test]
    fn element_median_at_reference_volume_is_on_curve() {
        let p = two_line();
        let eps_amp = 0.004;
        let dist = element_lifetime(&p, 2.0 * eps_amp, p.v0).unwrap();
        let median = dist.median().finite().unwrap();
        let on_curve = g_inverse(&p, eps_amp).unwrap().finite().unwrap();
        assert_relative_eq!(median, on_curve, max_relative = 1e-12);
    }

    #[test]
    fn element_scale_volume_oracle() {
        // g⁻¹ = 1000 for the power law at eps = 1000^-0.5.
        let p = power_law().with_reference_volume(10.0);
        let eps_amp = 1000f64.powf(-0.5);
        let dist = element_lifetime(&p, 2.0 * eps_amp, 40.0).unwrap();
        let lambda = dist.scale().finite().unwrap();
        assert!((lambda - 600.561).abs() < 1e-3, "{lambda}");
    }

    #[test]
    fn element_below_limit_is_infinite() {
        let p = two_line();
        assert!(element_lifetime(&p, p.c, 1.0).unwrap().is_infinite());
    }

    #[test]
    fn weibull_reference_values() {
        let d = WeibullLifetime::new(1000.0, 2.0).unwrap();
        let median = 1000.0 * std::f64::consts::LN_2.sqrt();
        assert!((d.cdf(median) - 0.5).abs() < 1e-9);
        let d = WeibullLifetime::new(3e6, 2.0).unwrap();
        assert!((d.cdf(2e6) - (1.0 - (-4.0f64 / 9.0).exp())).abs() < 1e-12);
        assert!((d.cdf(2e6) - 0.35882).abs() < 1e-5);
        let inf = WeibullLifetime::infinite(2.0);
        assert_eq!(inf.cdf(1e9), 0.0);
        assert_eq!(inf.pdf(1e9), 0.0);
        assert_eq!(inf.survival(1e9), 1.0);
    }

    #[test]
    fn weibull_pdf_integrates_to_one() {
        let d = WeibullLifetime::new(1500.0, 3.5).unwrap();
        let upper = 20.0 * 1500.0;
        let n = 200_000;
        let h = upper / n as f64;
        // Composite Simpson.
        let mut sum = d.pdf(0.0) + d.pdf(upper);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * d.pdf(i as f64 * h);
        }
        let integral = sum * h / 3.0;
        assert!((integral - 1.0).abs() < 1e-6, "{integral}");
    }

    fn arb_params() -> impl Strategy<Value = StrainLifeParams> {
        (
            0.5f64..20.0,
            1e-3f64..1.0,
            0.02f64..1.5,
            prop_oneof![Just(0.0), 1e-3f64..1.0],
            0.0f64..1.5,
            0.0f64..5e-3,
        )
            .prop_map(|(m, a, alpha, b, beta, c)| StrainLifeParams::two_line(m, a, alpha, b, beta, c))
    }

    proptest! {
        #[test]
        fn g_is_strictly_decreasing(p in arb_params(), n1 in 1.0f64..1e8, factor in 1.001f64..100.0) {
            let n2 = n1 * factor;
            prop_assert!(g(&p, n1).unwrap() > g(&p, n2).unwrap());
        }

        #[test]
        fn round_trip_above_limit(p in arb_params(), u in 1e-4f64..1.0) {
            let g1 = g(&p, 1.0).unwrap();
            let eps = p.c + u * (g1 - p.c);
            let n = g_inverse(&p, eps).unwrap().finite().unwrap();
            let back = g(&p, n).unwrap();
            prop_assert!(((back - eps) / eps).abs() < 1e-8);
        }

        #[test]
        fn scale_nonincreasing_in_volume_and_strain(p in arb_params(), u in 0.01f64..1.0, v in 1e-3f64..1e3) {
            let eps_amp = p.c + u * (g(&p, 1.0).unwrap() - p.c);
            let base = element_lifetime(&p, 2.0 * eps_amp, v).unwrap();
            let bigger_v = element_lifetime(&p, 2.0 * eps_amp, 2.0 * v).unwrap();
            let bigger_eps = element_lifetime(&p, 2.0 * eps_amp * 1.05, v).unwrap();
            let lb = base.scale().finite().unwrap();
            prop_assert!(bigger_v.scale().finite().unwrap() <= lb);
            prop_assert!(bigger_eps.scale().finite().unwrap() <= lb);
        }

        #[test]
        fn cdf_is_a_distribution_function(lambda in 1.0f64..1e7, m in 0.3f64..15.0, x1 in 0.0f64..5.0, dx in 0.0f64..5.0) {
            let d = WeibullLifetime::new(lambda, m).unwrap();
            let (a, b) = (x1 * lambda, (x1 + dx) * lambda);
            prop_assert!(d.cdf(a) <= d.cdf(b));
            prop_assert_eq!(d.cdf(0.0), 0.0);
            let closed = 1.0 - (-(b / lambda).powf(m)).exp();
            prop_assert!((d.cdf(b) - closed).abs() < 1e-14);
        }
    }
}
