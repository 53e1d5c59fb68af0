//! Problem parameters, odd-rational powers and the radial mean curvature.
//!
//! Everything here is a pure function of its inputs. A flow instance is the
//! quadruple `(N, alpha, b, k)`; the boundary slope `k` is optional because
//! profiles on the whole line do not depend on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to decide `c == b`.
pub const C_EQ_B_TOL: f64 = 1e-12;

/// Power semantics for `x^e`.
///
/// With `odd_rational` set, `alpha = q/p` with `p, q` odd and every power is
/// taken with the sign of the base, so `x^alpha` and `x^(1/alpha)` are odd,
/// increasing functions on the whole line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSpec {
    pub alpha: f64,
    pub odd_rational: bool,
}

/// `x^e` under `spec`. Negative bases are only admitted for odd-rational specs.
pub fn signed_pow(x: f64, e: f64, spec: PowerSpec) -> Result<f64> {
    if x < 0.0 {
        if !spec.odd_rational {
            return Err(Error::Domain(format!(
                "negative base {x} needs an odd-rational exponent (alpha = {})",
                spec.alpha
            )));
        }
        return Ok(-pow_abs(-x, e));
    }
    Ok(pow_abs(x, e))
}

#[inline]
pub(crate) fn pow_abs(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x
    } else if e == 0.5 {
        x.sqrt()
    } else if e == 3.0 {
        x * x * x
    } else {
        x.powf(e)
    }
}

/// A boundary slope `k = g / sqrt(1 - g^2)`, possibly infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slope {
    Finite(f64),
    PosInfinity,
    NegInfinity,
}

impl Slope {
    pub fn finite(self) -> Option<f64> {
        match self {
            Slope::Finite(k) => Some(k),
            _ => None,
        }
    }

    pub fn signum(self) -> f64 {
        match self {
            Slope::Finite(k) if k > 0.0 => 1.0,
            Slope::Finite(k) if k < 0.0 => -1.0,
            Slope::Finite(_) => 0.0,
            Slope::PosInfinity => 1.0,
            Slope::NegInfinity => -1.0,
        }
    }
}

impl std::fmt::Display for Slope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Slope::Finite(k) => write!(f, "{k}"),
            Slope::PosInfinity => write!(f, "+inf"),
            Slope::NegInfinity => write!(f, "-inf"),
        }
    }
}

/// The flow `u_t = (H^alpha + b) sqrt(1 + u_r^2)` in the unit ball of `R^N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub n: u32,
    pub alpha: f64,
    /// `(q, p)` with `alpha = q/p`, both odd.
    pub alpha_odd: Option<(u32, u32)>,
    pub b: f64,
    pub k: Option<Slope>,
}

impl FlowParams {
    pub fn new(n: u32, alpha: f64, b: f64) -> Result<Self> {
        let p = FlowParams {
            n,
            alpha,
            alpha_odd: None,
            b,
            k: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// `alpha = q/p` with odd `q` and `p`.
    pub fn odd(n: u32, q: u32, p: u32, b: f64) -> Result<Self> {
        let fp = FlowParams {
            n,
            alpha: q as f64 / p as f64,
            alpha_odd: Some((q, p)),
            b,
            k: None,
        };
        fp.validate()?;
        Ok(fp)
    }

    pub fn with_k(mut self, k: Slope) -> Self {
        self.k = Some(k);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidInput(format!(
                "dimension N must be at least 2, got {}",
                self.n
            )));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !self.b.is_finite() {
            return Err(Error::InvalidInput("b must be finite".into()));
        }
        if let Some((q, p)) = self.alpha_odd {
            if q == 0 || p == 0 || q % 2 == 0 || p % 2 == 0 {
                return Err(Error::InvalidInput(format!(
                    "alpha_odd = {q}/{p} needs positive odd integers"
                )));
            }
            let ratio = q as f64 / p as f64;
            if (ratio - self.alpha).abs() > 4.0 * f64::EPSILON * ratio {
                return Err(Error::InvalidInput(format!(
                    "alpha = {} does not match {q}/{p}",
                    self.alpha
                )));
            }
        }
        if let Some(Slope::Finite(k)) = self.k {
            if !k.is_finite() {
                return Err(Error::InvalidInput("finite slope k is not finite".into()));
            }
        }
        Ok(())
    }

    pub fn power(&self) -> PowerSpec {
        PowerSpec {
            alpha: self.alpha,
            odd_rational: self.alpha_odd.is_some(),
        }
    }

    pub fn is_odd(&self) -> bool {
        self.alpha_odd.is_some()
    }

    pub fn dim(&self) -> f64 {
        self.n as f64
    }

    pub fn inv_alpha(&self) -> f64 {
        match self.alpha_odd {
            Some((q, p)) => p as f64 / q as f64,
            None => 1.0 / self.alpha,
        }
    }

    /// `x^(1/alpha)` under this instance's power semantics.
    pub fn pow_inv_alpha(&self, x: f64) -> Result<f64> {
        signed_pow(x, self.inv_alpha(), self.power())
    }

    /// `x^alpha` under this instance's power semantics.
    pub fn pow_alpha(&self, x: f64) -> Result<f64> {
        signed_pow(x, self.alpha, self.power())
    }

    pub fn slope(&self) -> Result<Slope> {
        self.k
            .ok_or_else(|| Error::InvalidInput("boundary slope k is required".into()))
    }
}

/// Mean curvature of the radial graph `u(r)`:
/// `u_rr / (1+u_r^2)^{3/2} + (N-1) u_r / (r sqrt(1+u_r^2))`, and `N u_rr` at the axis.
pub fn curvature_radial(r: f64, ur: f64, urr: f64, n: u32) -> Result<f64> {
    if r < 0.0 || !r.is_finite() {
        return Err(Error::Domain(format!("radius must be >= 0, got {r}")));
    }
    if r == 0.0 {
        if ur != 0.0 {
            return Err(Error::Domain(format!(
                "u_r(0) = {ur} breaks radial symmetry"
            )));
        }
        return Ok(n as f64 * urr);
    }
    Ok(curvature_unchecked(r, ur, urr, n as f64))
}

#[inline]
pub(crate) fn curvature_unchecked(r: f64, ur: f64, urr: f64, n: f64) -> f64 {
    if r == 0.0 {
        return n * urr;
    }
    let xi2 = 1.0 + ur * ur;
    let xi = xi2.sqrt();
    urr / (xi2 * xi) + (n - 1.0) * ur / (r * xi)
}

/// The five families of translating profiles, by the sign pattern of `(b, c)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RegimeTag {
    /// `b = 0`: grim-reaper-like bowl, `R_inf = inf`.
    BZero,
    /// `b < 0`: cup, gradient blow-up at a finite radius.
    BNeg,
    /// `c > b > 0`: approximate cone.
    CGtBPos,
    /// `c = b > 0`: flat.
    CEqB,
    /// `b > c > 0` (odd alpha): cap, gradient blow-up to `-inf`.
    BGtCPos,
}

impl RegimeTag {
    pub fn finite_r_inf(self) -> bool {
        matches!(self, RegimeTag::BNeg | RegimeTag::BGtCPos)
    }

    /// Sign of `zeta` (and `Psi`) away from the axis.
    pub fn orientation(self) -> f64 {
        match self {
            RegimeTag::BGtCPos => -1.0,
            RegimeTag::CEqB => 0.0,
            _ => 1.0,
        }
    }

    pub fn positive_curvature(self) -> bool {
        !matches!(self, RegimeTag::BGtCPos)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RegimeTag::BZero => "B_ZERO",
            RegimeTag::BNeg => "B_NEG",
            RegimeTag::CGtBPos => "C_GT_B_POS",
            RegimeTag::CEqB => "C_EQ_B",
            RegimeTag::BGtCPos => "B_GT_C_POS",
        }
    }
}

impl std::fmt::Display for RegimeTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn classify_regime(params: &FlowParams, c: f64) -> Result<RegimeTag> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(Error::InvalidInput(format!("speed must be >= 0, got {c}")));
    }
    let b = params.b;
    if b == 0.0 {
        return Ok(RegimeTag::BZero);
    }
    if b < 0.0 {
        return Ok(RegimeTag::BNeg);
    }
    if (c - b).abs() <= C_EQ_B_TOL * b.max(1.0) {
        return Ok(RegimeTag::CEqB);
    }
    if c > b {
        return Ok(RegimeTag::CGtBPos);
    }
    if !params.is_odd() {
        return Err(Error::Regime(format!(
            "b = {b} > c = {c} gives negative curvature; alpha must be q/p with q, p odd"
        )));
    }
    Ok(RegimeTag::BGtCPos)
}

/// Proven bracket for `R_inf(c, b)` in the finite regimes.
pub fn r_inf_bounds(params: &FlowParams, c: f64, regime: RegimeTag) -> Option<(f64, f64)> {
    let n = params.dim();
    let ia = params.inv_alpha();
    match regime {
        RegimeTag::BNeg => Some((n * (c - params.b).powf(-ia), n * (-params.b).powf(-ia))),
        RegimeTag::BGtCPos => Some((n * params.b.powf(-ia), n * (params.b - c).powf(-ia))),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn odd() -> PowerSpec {
        PowerSpec {
            alpha: 1.0 / 3.0,
            odd_rational: true,
        }
    }

    #[test]
    fn signed_pow_examples() {
        assert!((signed_pow(8.0, 1.0 / 3.0, odd()).unwrap() - 2.0).abs() < 1e-15);
        assert!((signed_pow(-8.0, 1.0 / 3.0, odd()).unwrap() + 2.0).abs() < 1e-15);
        let plain = PowerSpec {
            alpha: 1.0 / 3.0,
            odd_rational: false,
        };
        assert!(matches!(
            signed_pow(-8.0, 1.0 / 3.0, plain),
            Err(Error::Domain(_))
        ));
        assert_eq!(signed_pow(0.0, 0.7, plain).unwrap(), 0.0);
    }

    #[test]
    fn curvature_axis_and_flat() {
        assert_eq!(curvature_radial(0.0, 0.0, 1.5, 3).unwrap(), 4.5);
        assert_eq!(curvature_radial(0.3, 0.0, 0.0, 3).unwrap(), 0.0);
        assert!(curvature_radial(0.0, 0.1, 1.0, 2).is_err());
        assert!(curvature_radial(-1.0, 0.0, 1.0, 2).is_err());
    }

    // Finite differences of the sphere cap, independent of the closed-form derivatives.
    #[test]
    fn sphere_cap_curvature_by_finite_differences() {
        let big_r = 2.0;
        let u = |r: f64| -(big_r * big_r - r * r).sqrt();
        let h = 1e-4;
        for n in 2..=5u32 {
            for i in 1..10 {
                let r = 0.9 * big_r * i as f64 / 10.0;
                let ur = (u(r + h) - u(r - h)) / (2.0 * h);
                let urr = (u(r + h) - 2.0 * u(r) + u(r - h)) / (h * h);
                let hh = curvature_radial(r, ur, urr, n).unwrap();
                assert!((hh - n as f64 / big_r).abs() < 1e-5, "n={n} r={r} H={hh}");
            }
        }
    }

    #[test]
    fn sphere_cap_curvature_exact_derivatives() {
        for &big_r in &[0.5, 1.0, 2.0, 7.0] {
            for i in 1..90 {
                let r = 0.9 * big_r * i as f64 / 90.0;
                let s = big_r * big_r - r * r;
                let ur = r / s.sqrt();
                let urr = big_r * big_r / (s * s.sqrt());
                for n in 2..=4u32 {
                    let hh = curvature_radial(r, ur, urr, n).unwrap();
                    assert!((hh - n as f64 / big_r).abs() < 1e-10 * (n as f64 / big_r));
                }
            }
        }
    }

    #[test]
    fn curvature_continuous_at_axis() {
        // u = a r^2 + d r^4
        for &(a, d) in &[(0.5, 0.1), (-1.0, 2.0), (3.0, -0.7)] {
            let limit = 3.0 * 2.0 * a;
            for k in 2..=8 {
                let r = 10f64.powi(-k);
                let ur = 2.0 * a * r + 4.0 * d * r.powi(3);
                let urr = 2.0 * a + 12.0 * d * r * r;
                let hh = curvature_radial(r, ur, urr, 3).unwrap();
                assert!((hh - limit).abs() < 50.0 * r, "k={k} H={hh} limit={limit}");
            }
        }
    }

    #[test]
    fn regimes() {
        let p0 = FlowParams::new(2, 1.0, 0.0).unwrap();
        assert_eq!(classify_regime(&p0, 1.0).unwrap(), RegimeTag::BZero);
        let p3 = FlowParams::new(2, 1.0, 3.0).unwrap();
        assert_eq!(classify_regime(&p3, 5.0).unwrap(), RegimeTag::CGtBPos);
        assert_eq!(classify_regime(&p3, 3.0).unwrap(), RegimeTag::CEqB);
        let p5 = FlowParams::odd(2, 1, 3, 5.0).unwrap();
        assert_eq!(classify_regime(&p5, 3.0).unwrap(), RegimeTag::BGtCPos);
        let p5_plain = FlowParams::new(2, 0.5, 5.0).unwrap();
        assert!(matches!(
            classify_regime(&p5_plain, 3.0),
            Err(Error::Regime(_))
        ));
        let pn = FlowParams::new(3, 2.0, -1.0).unwrap();
        assert_eq!(classify_regime(&pn, 0.0).unwrap(), RegimeTag::BNeg);
        assert!(classify_regime(&pn, -1.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(FlowParams::new(1, 1.0, 0.0).is_err());
        assert!(FlowParams::new(2, 0.0, 0.0).is_err());
        assert!(FlowParams::odd(2, 2, 3, 1.0).is_err());
        assert!(FlowParams::odd(2, 3, 5, 1.0).is_ok());
        let mut p = FlowParams::odd(2, 1, 3, 1.0).unwrap();
        p.alpha = 0.34;
        assert!(p.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn odd_power_roundtrip(x in -10.0f64..10.0, qi in 0u32..4, pi in 0u32..4) {
                let q = 2 * qi + 1;
                let p = 2 * pi + 1;
                let e = q as f64 / p as f64;
                let spec = PowerSpec { alpha: e, odd_rational: true };
                let y = signed_pow(x, e, spec).unwrap();
                let back = signed_pow(y, p as f64 / q as f64, spec).unwrap();
                prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(1e-300));
                let prod = y * signed_pow(x, 1.0 / e, spec).unwrap();
                prop_assert!(x == 0.0 || prod.signum() == 1.0);
                prop_assert!(y == 0.0 || y.signum() == x.signum());
            }

            #[test]
            fn odd_power_monotone(a in -10.0f64..10.0, d in 1e-6f64..5.0) {
                let spec = PowerSpec { alpha: 3.0, odd_rational: true };
                let lo = signed_pow(a, 1.0 / 3.0, spec).unwrap();
                let hi = signed_pow(a + d, 1.0 / 3.0, spec).unwrap();
                prop_assert!(hi > lo);
            }
        }
    }
}
