//! Standard-normal primitives: density, distribution function, quantile,
//! and rectangle probabilities in up to three dimensions.
//!
//! Bounds may be `f64::NEG_INFINITY` / `f64::INFINITY`; they are never
//! replaced by large finite stand-ins.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, integrate_adaptive};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Absolute tolerance handed to the trivariate quadrature.
const RECT3_TOL: f64 = 1e-10;

#[inline]
pub fn std_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

#[inline]
pub fn std_log_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Φ(z). NaN propagates.
#[inline]
pub fn std_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Φ⁻¹(p) for p strictly inside (0, 1).
pub fn std_quantile(p: f64) -> Result<f64> {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("quantile requires p in (0,1), got {p}")));
    }
    if p == 0.0 || p == 1.0 {
        return Err(Error::InfiniteQuantile(p));
    }
    Ok(quantile_ext(p))
}

/// Φ⁻¹ extended to the closed interval: 0 ↦ −∞ and 1 ↦ +∞.
pub fn quantile_ext(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        // 1 - p is exact here
        return -lower_quantile(1.0 - p);
    }
    lower_quantile(p)
}

// Acklam's rational approximation followed by one Newton step on Φ.
fn lower_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let x = if p < 0.02425 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let dens = std_pdf(x);
    if dens > 0.0 {
        x - (std_cdf(x) - p) / dens
    } else {
        x
    }
}

/// P(l < Z ≤ u) for Z ~ N(0,1), evaluated on the tail side that keeps precision.
#[inline]
pub fn interval_prob(l: f64, u: f64) -> f64 {
    if l >= u {
        return 0.0;
    }
    if l > 0.0 {
        (std_cdf(-l) - std_cdf(-u)).max(0.0)
    } else {
        (std_cdf(u) - std_cdf(l)).max(0.0)
    }
}

/// Inverse-CDF draw from N(0,1) restricted to (l, u], using position `p` in [0,1).
pub fn truncated_std_normal_inv(l: f64, u: f64, p: f64) -> f64 {
    if l > 0.0 {
        return -truncated_std_normal_inv(-u, -l, 1.0 - p);
    }
    let cl = std_cdf(l);
    let cu = std_cdf(u);
    let z = quantile_ext(cl + p * (cu - cl));
    if z.is_nan() {
        return if l.is_finite() { l } else { u };
    }
    z.clamp(l, u)
}

fn bvnd_rule(rho_abs: f64) -> &'static [(f64, f64)] {
    static RULES: OnceLock<[Vec<(f64, f64)>; 3]> = OnceLock::new();
    let rules = RULES.get_or_init(|| {
        let half = |n: usize| -> Vec<(f64, f64)> {
            gauss_legendre(n).into_iter().filter(|&(x, _)| x < 0.0).collect()
        };
        [half(6), half(12), half(20)]
    });
    if rho_abs < 0.3 {
        &rules[0]
    } else if rho_abs < 0.75 {
        &rules[1]
    } else {
        &rules[2]
    }
}

/// P(X > dh, Y > dk) for a standard bivariate normal with correlation `r`.
///
/// Drezner–Wesolowsky with Genz's double-precision refinements; for
/// |r| ≥ 0.925 and r < 0 only `k` is reflected, as in the original tvpack.
pub fn bvn_upper(dh: f64, dk: f64, r: f64) -> f64 {
    if dh == f64::INFINITY || dk == f64::INFINITY {
        return 0.0;
    }
    if dh == f64::NEG_INFINITY {
        return std_cdf(-dk);
    }
    if dk == f64::NEG_INFINITY {
        return std_cdf(-dh);
    }
    if r == 0.0 {
        return std_cdf(-dh) * std_cdf(-dk);
    }
    let rule = bvnd_rule(r.abs());
    let h = dh;
    let mut k = dk;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = r.asin();
        for &(x, w) in rule {
            for sx in [x, -x] {
                let sn = (0.5 * asr * (sx + 1.0)).sin();
                bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        return bvn * asr / (4.0 * PI) + std_cdf(-h) * std_cdf(-k);
    }
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let a_s = (1.0 - r) * (1.0 + r);
        let mut a = a_s.sqrt();
        let b_s = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        bvn = a
            * (-0.5 * (b_s / a_s + hk)).exp()
            * (1.0 - c * (b_s - a_s) * (1.0 - d * b_s / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
        if hk > -160.0 {
            let b = b_s.sqrt();
            bvn -= (-0.5 * hk).exp()
                * SQRT_2PI
                * std_cdf(-b / a)
                * b
                * (1.0 - c * b_s * (1.0 - d * b_s / 5.0) / 3.0);
        }
        a *= 0.5;
        for &(x, w) in rule {
            for sx in [x, -x] {
                let xs = (a * (sx + 1.0)).powi(2);
                let rs = (1.0 - xs).sqrt();
                let e = -0.5 * (b_s / xs + hk);
                if e > -100.0 {
                    bvn += a
                        * w
                        * e.exp()
                        * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                            - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
        }
        bvn = -bvn / (2.0 * PI);
    }
    if r > 0.0 {
        bvn + std_cdf(-h.max(k))
    } else {
        bvn = -bvn;
        if k > h {
            if h < 0.0 {
                bvn += std_cdf(k) - std_cdf(h);
            } else {
                bvn += std_cdf(-h) - std_cdf(-k);
            }
        }
        bvn
    }
}

/// P(X ≤ h, Y ≤ k) for a standard bivariate normal with correlation `r`.
#[inline]
pub fn bvn_cdf(h: f64, k: f64, r: f64) -> f64 {
    bvn_upper(-h, -k, r)
}

/// Bivariate rectangle probability by inclusion–exclusion on the CDF.
pub fn rect2_prob(l: [f64; 2], u: [f64; 2], r: f64) -> f64 {
    if l[0] >= u[0] || l[1] >= u[1] {
        return 0.0;
    }
    // Reflect coordinates lying entirely in the upper tail so the corner
    // terms are evaluated where they are small.
    let (mut l, mut u, mut r) = (l, u, r);
    for i in 0..2 {
        if l[i] > 0.0 {
            let (nl, nu) = (-u[i], -l[i]);
            l[i] = nl;
            u[i] = nu;
            r = -r;
        }
    }
    let p = bvn_cdf(u[0], u[1], r) - bvn_cdf(l[0], u[1], r) - bvn_cdf(u[0], l[1], r)
        + bvn_cdf(l[0], l[1], r);
    p.clamp(0.0, 1.0)
}

/// Trivariate rectangle probability: the first coordinate is integrated by
/// adaptive Gauss–Legendre quadrature (on the Φ scale) of the conditional
/// bivariate rectangle.
pub fn rect3_prob(l: [f64; 3], u: [f64; 3], corr: &[[f64; 3]; 3]) -> Result<f64> {
    if (0..3).any(|i| l[i] >= u[i]) {
        return Ok(0.0);
    }
    let mut r01 = corr[0][1];
    let mut r02 = corr[0][2];
    let r12 = corr[1][2];
    let (mut l0, mut u0) = (l[0], u[0]);
    if l0 > 0.0 {
        (l0, u0) = (-u0, -l0);
        r01 = -r01;
        r02 = -r02;
    }
    let v1 = 1.0 - r01 * r01;
    let v2 = 1.0 - r02 * r02;
    if v1 <= 1e-12 || v2 <= 1e-12 {
        return Err(Error::Conditioning(
            "trivariate rectangle with a unit correlation on the conditioning coordinate".into(),
        ));
    }
    let (s1, s2) = (v1.sqrt(), v2.sqrt());
    let rc = ((r12 - r01 * r02) / (s1 * s2)).clamp(-1.0, 1.0);
    let a = std_cdf(l0);
    let b = std_cdf(u0);
    let g = |s: f64| {
        let t = quantile_ext(s);
        rect2_prob(
            [(l[1] - r01 * t) / s1, (l[2] - r02 * t) / s2],
            [(u[1] - r01 * t) / s1, (u[2] - r02 * t) / s2],
            rc,
        )
    };
    Ok(integrate_adaptive(g, a, b, RECT3_TOL).clamp(0.0, 1.0))
}

/// Integration region for [`mvn_rect`]: one to three coordinates with a
/// correlation matrix (only the leading `dim × dim` block is used).
#[derive(Debug, Clone, PartialEq)]
pub struct Rect3 {
    pub dim: usize,
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    pub corr: [[f64; 3]; 3],
}

impl Rect3 {
    pub fn new(lower: [f64; 3], upper: [f64; 3], corr: [[f64; 3]; 3]) -> Self {
        Self { dim: 3, lower, upper, corr }
    }

    pub fn bivariate(lower: [f64; 2], upper: [f64; 2], rho: f64) -> Self {
        let mut corr = identity3();
        corr[0][1] = rho;
        corr[1][0] = rho;
        Self {
            dim: 2,
            lower: [lower[0], lower[1], f64::NEG_INFINITY],
            upper: [upper[0], upper[1], f64::INFINITY],
            corr,
        }
    }

    pub fn univariate(lower: f64, upper: f64) -> Self {
        Self {
            dim: 1,
            lower: [lower, f64::NEG_INFINITY, f64::NEG_INFINITY],
            upper: [upper, f64::INFINITY, f64::INFINITY],
            corr: identity3(),
        }
    }
}

pub(crate) fn identity3() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

/// Checks symmetry, unit diagonal and positive definiteness of the leading block.
pub fn validate_corr(corr: &[[f64; 3]; 3], dim: usize) -> Result<()> {
    for i in 0..dim {
        if (corr[i][i] - 1.0).abs() > 1e-12 {
            return Err(Error::NotPositiveDefinite(format!("diagonal entry {i} is {}", corr[i][i])));
        }
        for j in 0..i {
            if (corr[i][j] - corr[j][i]).abs() > 1e-12 || !corr[i][j].is_finite() {
                return Err(Error::NotPositiveDefinite("matrix is not symmetric".into()));
            }
        }
    }
    cholesky3(corr, dim).map(|_| ())
}

/// Lower Cholesky factor of the leading `dim × dim` block.
pub(crate) fn cholesky3(a: &[[f64; 3]; 3], dim: usize) -> Result<[[f64; 3]; 3]> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 1e-14 {
                    return Err(Error::NotPositiveDefinite(format!("pivot {i} is {s:e}")));
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

/// P(lower < Z ≤ upper) for Z ~ N(0, corr) in one to three dimensions.
pub fn mvn_rect(rect: &Rect3) -> Result<f64> {
    let d = rect.dim;
    if !(1..=3).contains(&d) {
        return Err(Error::Invalid(format!("mvn_rect supports 1 to 3 dimensions, got {d}")));
    }
    if (0..d).any(|i| rect.lower[i].is_nan() || rect.upper[i].is_nan()) {
        return Err(Error::Domain("NaN rectangle bound".into()));
    }
    validate_corr(&rect.corr, d)?;
    match d {
        1 => Ok(interval_prob(rect.lower[0], rect.upper[0])),
        2 => Ok(rect2_prob(
            [rect.lower[0], rect.lower[1]],
            [rect.upper[0], rect.upper[1]],
            rect.corr[0][1],
        )),
        _ => rect3_prob(rect.lower, rect.upper, &rect.corr),
    }
}
