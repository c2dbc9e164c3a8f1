//! Marginal GLMs (stage one) and the map from observed values to latent
//! standard-normal coordinates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{quantile_ext, std_cdf, std_log_pdf};

const IRLS_MAX_ITER: usize = 100;
/// Sup-norm of the per-observation score at which IRLS stops.
const IRLS_SCORE_TOL: f64 = 1e-8;
/// Linear predictors beyond this make logistic probabilities numerically 0 or 1.
const LOGIT_SATURATION: f64 = 36.0;
/// Poisson upper truncation: smallest k with F(k) ≥ 1 − this.
const POISSON_TAIL: f64 = 1e-12;
/// Gaussian latent points are clamped to ±this, beyond which Φ saturates.
const Z_CLAMP: f64 = 37.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    GaussianIdentity,
    BernoulliLogit,
    PoissonLog,
}

impl Family {
    pub fn is_discrete(self) -> bool {
        !matches!(self, Family::GaussianIdentity)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::GaussianIdentity => "gaussian_identity",
            Family::BernoulliLogit => "bernoulli_logit",
            Family::PoissonLog => "poisson_log",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian_identity" | "gaussian" | "normal" => Ok(Family::GaussianIdentity),
            "bernoulli_logit" | "bernoulli" | "binomial" | "logit" => Ok(Family::BernoulliLogit),
            "poisson_log" | "poisson" => Ok(Family::PoissonLog),
            other => Err(Error::Invalid(format!("unknown family `{other}`"))),
        }
    }

    /// Checks that `value` lies in the family's support.
    pub fn check_support(self, value: f64) -> Result<()> {
        let ok = match self {
            Family::GaussianIdentity => value.is_finite(),
            Family::BernoulliLogit => value == 0.0 || value == 1.0,
            Family::PoissonLog => value.is_finite() && value >= 0.0 && value.fract() == 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Support { family: self.name().into(), value, location: None })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateSet {
    W1Only,
    WFull,
    InterceptOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarginalSpec {
    pub family: Family,
    pub covariate_set: CovariateSet,
}

impl MarginalSpec {
    pub fn new(family: Family, covariate_set: CovariateSet) -> Self {
        Self { family, covariate_set }
    }
}

/// Dense row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Design {
    pub fn from_row_major(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::Invalid(format!(
                "design buffer has {} entries, expected {nrows}×{ncols}",
                data.len()
            )));
        }
        Ok(Self { nrows, ncols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Invalid("ragged design rows".into()));
        }
        Ok(Self { nrows: rows.len(), ncols, data: rows.concat() })
    }

    pub fn intercept(nrows: usize) -> Self {
        Self { nrows, ncols: 1, data: vec![1.0; nrows] }
    }

    /// An `nrows × 0` matrix.
    pub fn empty(nrows: usize) -> Self {
        Self { nrows, ncols: 0, data: Vec::new() }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    /// Column-wise concatenation `[self | other]`.
    pub fn hcat(&self, other: &Design) -> Result<Design> {
        if self.nrows != other.nrows {
            return Err(Error::Invalid("row counts differ in column concatenation".into()));
        }
        let ncols = self.ncols + other.ncols;
        let mut data = Vec::with_capacity(self.nrows * ncols);
        for i in 0..self.nrows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Design { nrows: self.nrows, ncols, data })
    }

    /// Rows selected by index, in the given order (repeats allowed).
    pub fn select_rows(&self, idx: &[usize]) -> Design {
        let mut data = Vec::with_capacity(idx.len() * self.ncols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Design { nrows: idx.len(), ncols: self.ncols, data }
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            for (acc, v) in m.iter_mut().zip(self.row(i)) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.nrows.max(1) as f64);
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalFit {
    pub family: Family,
    pub coefficients: Vec<f64>,
    /// φ: the residual variance for Gaussian margins, 1 otherwise.
    pub dispersion: f64,
    pub n_obs: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatentCoord {
    Point(f64),
    /// Half-open interval (l, u]; bounds may be infinite.
    Interval { l: f64, u: f64 },
}

impl LatentCoord {
    pub fn is_point(&self) -> bool {
        matches!(self, LatentCoord::Point(_))
    }
}

#[inline]
pub(crate) fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl MarginalFit {
    pub fn sd(&self) -> f64 {
        self.dispersion.sqrt()
    }

    fn check_width(&self, w: &[f64]) {
        debug_assert_eq!(w.len(), self.coefficients.len(), "covariate row width");
    }

    pub fn linear_predictor(&self, w: &[f64]) -> f64 {
        self.check_width(w);
        dot(w, &self.coefficients)
    }

    /// μ = g⁻¹(wᵀβ).
    pub fn mean(&self, w: &[f64]) -> f64 {
        let eta = self.linear_predictor(w);
        match self.family {
            Family::GaussianIdentity => eta,
            Family::BernoulliLogit => expit(eta),
            Family::PoissonLog => eta.exp(),
        }
    }

    /// F(value | w).
    pub fn cdf(&self, w: &[f64], value: f64) -> Result<f64> {
        self.family.check_support(value)?;
        let eta = self.linear_predictor(w);
        Ok(match self.family {
            Family::GaussianIdentity => std_cdf((value - eta) / self.sd()),
            Family::BernoulliLogit => {
                if value == 0.0 {
                    expit(-eta)
                } else {
                    1.0
                }
            }
            Family::PoissonLog => poisson_cdf(eta.exp(), value as u64),
        })
    }

    /// Log density (Gaussian) or log mass (discrete families).
    pub fn log_density(&self, w: &[f64], value: f64) -> Result<f64> {
        self.family.check_support(value)?;
        let eta = self.linear_predictor(w);
        Ok(match self.family {
            Family::GaussianIdentity => {
                let s = self.sd();
                std_log_pdf((value - eta) / s) - s.ln()
            }
            Family::BernoulliLogit => {
                // log expit(±η) without cancellation
                let t = if value == 1.0 { eta } else { -eta };
                -softplus(-t)
            }
            Family::PoissonLog => poisson_log_pmf(eta.exp(), value as u64),
        })
    }

    /// log f(value|w) − log φ(z) at the latent point z; zero for discrete families.
    pub fn log_jacobian(&self, _w: &[f64], _value: f64) -> f64 {
        match self.family {
            Family::GaussianIdentity => -0.5 * self.dispersion.ln(),
            _ => 0.0,
        }
    }

    /// Latent normal coordinate of an observed value.
    pub fn latent_coord(&self, w: &[f64], value: f64) -> Result<LatentCoord> {
        self.family.check_support(value)?;
        let eta = self.linear_predictor(w);
        match self.family {
            Family::GaussianIdentity => {
                let z = (value - eta) / self.sd();
                if z.abs() > Z_CLAMP {
                    log::warn!("latent coordinate {z:e} saturates; clamped to ±{Z_CLAMP}");
                    return Ok(LatentCoord::Point(z.clamp(-Z_CLAMP, Z_CLAMP)));
                }
                Ok(LatentCoord::Point(z))
            }
            Family::BernoulliLogit => {
                let cut = quantile_ext(expit(-eta));
                Ok(if value == 0.0 {
                    LatentCoord::Interval { l: f64::NEG_INFINITY, u: cut }
                } else {
                    LatentCoord::Interval { l: cut, u: f64::INFINITY }
                })
            }
            Family::PoissonLog => {
                let (l, u) = poisson_interval(eta.exp(), value as u64);
                Ok(LatentCoord::Interval { l, u })
            }
        }
    }

    /// Observed value whose latent coordinate contains `z`.
    pub fn value_from_latent(&self, w: &[f64], z: f64) -> f64 {
        let eta = self.linear_predictor(w);
        match self.family {
            Family::GaussianIdentity => eta + self.sd() * z,
            Family::BernoulliLogit => {
                if z > quantile_ext(expit(-eta)) {
                    1.0
                } else {
                    0.0
                }
            }
            Family::PoissonLog => {
                let mu = eta.exp();
                let k_max = poisson_truncation(mu);
                let mut k = 0;
                let mut acc = poisson_log_pmf(mu, 0).exp();
                while k < k_max && quantile_ext(acc.min(1.0)) < z {
                    k += 1;
                    acc += poisson_log_pmf(mu, k).exp();
                }
                k as f64
            }
        }
    }

    /// Latent cut points of a discrete margin: value k occupies
    /// (cuts[k−1], cuts[k]] with cuts[−1] = −∞ and cuts[len] = +∞.
    pub fn latent_cuts(&self, w: &[f64]) -> Vec<f64> {
        let eta = self.linear_predictor(w);
        match self.family {
            Family::GaussianIdentity => Vec::new(),
            Family::BernoulliLogit => vec![quantile_ext(expit(-eta))],
            Family::PoissonLog => {
                let mu = eta.exp();
                let k_max = poisson_truncation(mu);
                let mut acc = 0.0;
                (0..k_max)
                    .map(|k| {
                        acc += poisson_log_pmf(mu, k).exp();
                        quantile_ext(acc.min(1.0))
                    })
                    .collect()
            }
        }
    }

    /// Σᵢ log f(yᵢ | wᵢ).
    pub fn loglik(&self, design: &Design, y: &[f64]) -> Result<f64> {
        (0..design.nrows()).map(|i| self.log_density(design.row(i), y[i])).sum()
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn poisson_log_pmf(mu: f64, k: u64) -> f64 {
    let kf = k as f64;
    if mu == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    kf * mu.ln() - mu - libm::lgamma(kf + 1.0)
}

fn poisson_cdf(mu: f64, k: u64) -> f64 {
    (0..=k).map(|j| poisson_log_pmf(mu, j).exp()).sum::<f64>().min(1.0)
}

/// Smallest k with F(k) ≥ 1 − 1e-12.
fn poisson_truncation(mu: f64) -> u64 {
    let mut acc = 0.0;
    let mut k = 0u64;
    loop {
        acc += poisson_log_pmf(mu, k).exp();
        if acc >= 1.0 - POISSON_TAIL || k > 100_000 {
            return k;
        }
        k += 1;
    }
}

/// Latent interval of a Poisson count; counts at or beyond the truncation
/// point share the upper tail interval.
fn poisson_interval(mu: f64, k: u64) -> (f64, f64) {
    let k_max = poisson_truncation(mu);
    let k = k.min(k_max);
    let lo = if k == 0 { f64::NEG_INFINITY } else { quantile_ext(poisson_cdf(mu, k - 1)) };
    let hi = if k == k_max { f64::INFINITY } else { quantile_ext(poisson_cdf(mu, k)) };
    (lo, hi)
}

/// Fits a canonical-link GLM by iteratively reweighted least squares.
pub fn fit_glm(design: &Design, response: &[f64], family: Family) -> Result<MarginalFit> {
    let n = design.nrows();
    let p = design.ncols();
    if response.len() != n {
        return Err(Error::Invalid(format!("response has {} rows, design has {n}", response.len())));
    }
    if n <= p {
        return Err(Error::Invalid(format!("{n} observations for {p} coefficients")));
    }
    for (i, &v) in response.iter().enumerate() {
        if let Err(Error::Support { family, value, .. }) = family.check_support(v) {
            return Err(Error::Support { family, value, location: Some(format!("row {}", i + 1)) });
        }
    }
    check_rank(design)?;

    if family == Family::GaussianIdentity {
        let beta = weighted_ls(design, |_| 1.0, |i| response[i])?;
        let rss: f64 = (0..n)
            .map(|i| (response[i] - dot(design.row(i), &beta)).powi(2))
            .sum();
        let dispersion = rss / n as f64;
        if !(dispersion > 0.0) {
            return Err(Error::Domain("Gaussian margin has zero residual variance".into()));
        }
        return Ok(MarginalFit { family, coefficients: beta, dispersion, n_obs: n, iterations: 1 });
    }

    let ybar = response.iter().sum::<f64>() / n as f64;
    let start = match family {
        Family::BernoulliLogit => {
            if ybar == 0.0 || ybar == 1.0 {
                return Err(Error::NonConvergence {
                    iterations: 0,
                    reason: "binary response is constant".into(),
                });
            }
            (ybar / (1.0 - ybar)).ln()
        }
        Family::PoissonLog => {
            if ybar == 0.0 {
                return Err(Error::NonConvergence {
                    iterations: 0,
                    reason: "count response is identically zero".into(),
                });
            }
            ybar.ln()
        }
        Family::GaussianIdentity => unreachable!(),
    };
    // Start from the intercept-only fit when the first column is constant.
    let mut beta = vec![0.0; p];
    if (0..n).all(|i| design.row(i)[0] == 1.0) {
        beta[0] = start;
    }

    let inv_link = |eta: f64| match family {
        Family::BernoulliLogit => expit(eta),
        _ => eta.exp(),
    };
    let loglik = |b: &[f64]| -> f64 {
        (0..n)
            .map(|i| {
                let eta = dot(design.row(i), b);
                match family {
                    Family::BernoulliLogit => {
                        -softplus(if response[i] == 1.0 { -eta } else { eta })
                    }
                    _ => response[i] * eta - eta.exp(),
                }
            })
            .sum()
    };
    let score = |b: &[f64]| -> Vec<f64> {
        let mut s = vec![0.0; p];
        for i in 0..n {
            let row = design.row(i);
            let r = response[i] - inv_link(dot(row, b));
            for j in 0..p {
                s[j] += row[j] * r;
            }
        }
        s
    };

    let mut ll = loglik(&beta);
    for iter in 1..=IRLS_MAX_ITER {
        let etas: Vec<f64> = (0..n).map(|i| dot(design.row(i), &beta)).collect();
        if family == Family::BernoulliLogit && etas.iter().any(|e| e.abs() > LOGIT_SATURATION) {
            return Err(Error::NonConvergence {
                iterations: iter,
                reason: "fitted probabilities saturate at 0 or 1 (separation)".into(),
            });
        }
        if family == Family::PoissonLog && etas.iter().any(|e| *e > 700.0) {
            return Err(Error::NonConvergence { iterations: iter, reason: "fitted mean overflows".into() });
        }
        let mus: Vec<f64> = etas.iter().map(|&e| inv_link(e)).collect();
        let weight = |i: usize| match family {
            Family::BernoulliLogit => mus[i] * (1.0 - mus[i]),
            _ => mus[i],
        };
        let target: Vec<f64> = (0..n).map(|i| etas[i] + (response[i] - mus[i]) / weight(i)).collect();
        let proposal = weighted_ls(design, weight, |i| target[i])?;

        // Step halving keeps the likelihood nondecreasing.
        let mut step = 1.0;
        let mut next = proposal.clone();
        let mut next_ll = loglik(&next);
        while !(next_ll >= ll - 1e-12 * ll.abs()) && step > 1e-6 {
            step *= 0.5;
            next = beta.iter().zip(&proposal).map(|(b, q)| b + step * (q - b)).collect();
            next_ll = loglik(&next);
        }
        beta = next;
        ll = next_ll;
        let s = score(&beta);
        let sup = s.iter().fold(0.0f64, |m, v| m.max(v.abs())) / n as f64;
        if sup <= IRLS_SCORE_TOL {
            return Ok(MarginalFit { family, coefficients: beta, dispersion: 1.0, n_obs: n, iterations: iter });
        }
    }
    Err(Error::NonConvergence {
        iterations: IRLS_MAX_ITER,
        reason: "score did not vanish".into(),
    })
}

/// Solves (XᵀWX) β = XᵀW t by Cholesky.
fn weighted_ls(design: &Design, weight: impl Fn(usize) -> f64, target: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
    let p = design.ncols();
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    for i in 0..design.nrows() {
        let row = design.row(i);
        let w = weight(i);
        let t = target(i);
        for a in 0..p {
            xty[a] += w * row[a] * t;
            for b in 0..=a {
                xtx[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(b, a)] = xtx[(a, b)];
        }
    }
    let chol = xtx.cholesky().ok_or(Error::SingularDesign)?;
    Ok(chol.solve(&xty).iter().copied().collect())
}

/// Rejects designs whose scaled cross-product matrix is numerically singular.
fn check_rank(design: &Design) -> Result<()> {
    let p = design.ncols();
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    for i in 0..design.nrows() {
        let row = design.row(i);
        for a in 0..p {
            for b in 0..p {
                xtx[(a, b)] += row[a] * row[b];
            }
        }
    }
    let d: Vec<f64> = (0..p).map(|a| xtx[(a, a)].sqrt()).collect();
    if d.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::SingularDesign);
    }
    let scaled = DMatrix::from_fn(p, p, |a, b| xtx[(a, b)] / (d[a] * d[b]));
    let eig = scaled.symmetric_eigenvalues();
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < 1e-10 {
        return Err(Error::SingularDesign);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Design {
        Design::from_row_major(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn gaussian_intercept_only() {
        let fit = fit_glm(&Design::intercept(3), &[1.0, 2.0, 3.0], Family::GaussianIdentity).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-14);
        assert!((fit.dispersion - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn bernoulli_intercept_only_is_logit_of_mean() {
        let fit = fit_glm(&Design::intercept(4), &[1.0, 1.0, 1.0, 0.0], Family::BernoulliLogit).unwrap();
        assert!((fit.coefficients[0] - 3f64.ln()).abs() < 1e-10);
        assert!((fit.coefficients[0] - 1.098612).abs() < 1e-6);
    }

    #[test]
    fn poisson_intercept_only_is_log_of_mean() {
        let fit = fit_glm(&Design::intercept(5), &[0.0, 1.0, 2.0, 4.0, 3.0], Family::PoissonLog).unwrap();
        assert!((fit.coefficients[0] - 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn singular_design_rejected() {
        let d = Design::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(fit_glm(&d, &[1.0, 2.0, 4.0], Family::GaussianIdentity), Err(Error::SingularDesign));
    }

    #[test]
    fn separation_reports_iterations() {
        let x = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![1.0, v]).collect();
        let d = Design::from_rows(&rows).unwrap();
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        match fit_glm(&d, &y, Family::BernoulliLogit) {
            Err(Error::NonConvergence { iterations, .. }) => assert!(iterations > 0),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn support_violation_names_row() {
        let err = fit_glm(&Design::intercept(3), &[0.0, 2.0, 1.0], Family::BernoulliLogit).unwrap_err();
        assert_eq!(
            err,
            Error::Support { family: "bernoulli_logit".into(), value: 2.0, location: Some("row 2".into()) }
        );
    }

    fn fit_with(family: Family, beta: Vec<f64>, dispersion: f64) -> MarginalFit {
        MarginalFit { family, coefficients: beta, dispersion, n_obs: 10, iterations: 0 }
    }

    #[test]
    fn cdf_examples() {
        let g = fit_with(Family::GaussianIdentity, vec![0.0], 1.0);
        assert_eq!(g.cdf(&[1.0], 0.0).unwrap(), 0.5);
        let eta = (0.3f64 / 0.7).ln();
        let b = fit_with(Family::BernoulliLogit, vec![eta], 1.0);
        assert!((b.cdf(&[1.0], 0.0).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(b.cdf(&[1.0], 1.0).unwrap(), 1.0);
        let p = fit_with(Family::PoissonLog, vec![2f64.ln()], 1.0);
        let want = (-2f64).exp() * 3.0;
        assert!((p.cdf(&[1.0], 1.0).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.406006).abs() < 1e-6);
        assert!(matches!(p.cdf(&[1.0], -1.0), Err(Error::Support { .. })));
        assert!(matches!(b.cdf(&[1.0], 0.5), Err(Error::Support { .. })));
    }

    #[test]
    fn latent_coord_examples() {
        let b = fit_with(Family::BernoulliLogit, vec![0.0], 1.0);
        assert_eq!(b.latent_coord(&[1.0], 0.0).unwrap(), LatentCoord::Interval { l: f64::NEG_INFINITY, u: 0.0 });
        let eta = 0.8;
        let b = fit_with(Family::BernoulliLogit, vec![eta], 1.0);
        let want = -quantile_ext(expit(eta));
        match b.latent_coord(&[1.0], 0.0).unwrap() {
            LatentCoord::Interval { l, u } => {
                assert_eq!(l, f64::NEG_INFINITY);
                assert!((u - want).abs() < 1e-14);
            }
            _ => panic!(),
        }
        let g = fit_with(Family::GaussianIdentity, vec![1.0], 4.0);
        assert_eq!(g.latent_coord(&[1.0], 3.0).unwrap(), LatentCoord::Point(1.0));
    }

    #[test]
    fn poisson_intervals_abut_and_exhaust() {
        let p = fit_with(Family::PoissonLog, vec![1.3f64.ln()], 1.0);
        let k_max = poisson_truncation(1.3);
        let mut prev_u = f64::NEG_INFINITY;
        let mut total = 0.0;
        for k in 0..=k_max {
            let LatentCoord::Interval { l, u } = p.latent_coord(&[1.0], k as f64).unwrap() else { panic!() };
            assert_eq!(l, prev_u);
            total += crate::normal::interval_prob(l, u);
            prev_u = u;
        }
        assert_eq!(prev_u, f64::INFINITY);
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn value_from_latent_inverts_latent_coord() {
        let w = [1.0];
        for fit in [
            fit_with(Family::BernoulliLogit, vec![-0.4], 1.0),
            fit_with(Family::PoissonLog, vec![0.9], 1.0),
            fit_with(Family::GaussianIdentity, vec![0.3], 2.0),
        ] {
            for z in [-2.5, -0.7, -0.01, 0.0, 0.4, 1.3, 3.1] {
                let v = fit.value_from_latent(&w, z);
                match fit.latent_coord(&w, v).unwrap() {
                    LatentCoord::Point(p) => assert!((p - z).abs() < 1e-12),
                    LatentCoord::Interval { l, u } => assert!(l < z && z <= u, "{:?} z={z} v={v}", fit.family),
                }
            }
        }
    }

    #[test]
    fn gaussian_log_jacobian_identity() {
        let g = fit_with(Family::GaussianIdentity, vec![0.5], 2.25);
        let w = [1.0];
        for v in [-1.0, 0.5, 3.0] {
            let LatentCoord::Point(z) = g.latent_coord(&w, v).unwrap() else { panic!() };
            let lhs = g.log_density(&w, v).unwrap() - std_log_pdf(z);
            assert!((lhs - g.log_jacobian(&w, v)).abs() < 1e-14);
        }
    }

    #[test]
    fn cuts_agree_with_intervals() {
        let w = [1.0];
        for fit in [fit_with(Family::BernoulliLogit, vec![0.7], 1.0), fit_with(Family::PoissonLog, vec![0.4], 1.0)] {
            let cuts = fit.latent_cuts(&w);
            for (k, c) in cuts.iter().enumerate() {
                let LatentCoord::Interval { u, .. } = fit.latent_coord(&w, k as f64).unwrap() else { panic!() };
                assert!((u - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn design_helpers() {
        let a = col(&[1.0, 2.0]);
        let b = Design::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let c = a.hcat(&b).unwrap();
        assert_eq!(c.row(1), &[2.0, 5.0, 6.0]);
        assert_eq!(c.select_rows(&[1, 1]).row(0), &[2.0, 5.0, 6.0]);
        assert_eq!(c.column_means(), vec![1.5, 4.0, 5.0]);
    }
}
