//! DAG-structured Gaussian copula over (X, M, Y): latent covariance,
//! scalings, and the per-observation likelihood for all mixed-type patterns.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginals::{Family, LatentCoord};
use crate::normal::{cholesky3, interval_prob, rect2_prob, rect3_prob, validate_corr};

/// Rectangle probabilities below this are floored before taking logs.
pub const PROB_FLOOR: f64 = 1e-300;
/// Observations per chunk in the fixed-order likelihood reduction.
const CHUNK: usize = 1024;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Path coefficients: α (X→M), β (M→Y), γ (X→Y).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DagParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl DagParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// Continuous (C) / discrete (D) type of X, M and Y, in that order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ScenarioCode {
    discrete: [bool; 3],
}

impl ScenarioCode {
    pub const CCC: ScenarioCode = ScenarioCode { discrete: [false, false, false] };
    pub const CDC: ScenarioCode = ScenarioCode { discrete: [false, true, false] };
    pub const CCD: ScenarioCode = ScenarioCode { discrete: [false, false, true] };
    pub const DDD: ScenarioCode = ScenarioCode { discrete: [true, true, true] };

    pub fn from_families(f: [Family; 3]) -> Self {
        Self { discrete: f.map(Family::is_discrete) }
    }

    pub fn is_discrete(&self, i: usize) -> bool {
        self.discrete[i]
    }

    pub fn all() -> impl Iterator<Item = ScenarioCode> {
        (0..8u8).map(|b| ScenarioCode { discrete: [b & 4 != 0, b & 2 != 0, b & 1 != 0] })
    }
}

impl fmt::Display for ScenarioCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.discrete {
            f.write_str(if d { "D" } else { "C" })?;
        }
        Ok(())
    }
}

impl From<ScenarioCode> for String {
    fn from(s: ScenarioCode) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for ScenarioCode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl std::str::FromStr for ScenarioCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let b = s.as_bytes();
        if b.len() != 3 {
            return Err(Error::Invalid(format!("scenario code `{s}` must have three letters")));
        }
        let mut discrete = [false; 3];
        for (d, c) in discrete.iter_mut().zip(b) {
            *d = match c.to_ascii_uppercase() {
                b'C' => false,
                b'D' => true,
                _ => return Err(Error::Invalid(format!("scenario code `{s}` must use C and D"))),
            };
        }
        Ok(Self { discrete })
    }
}

pub type Mat3 = [[f64; 3]; 3];

/// Unit lower-triangular factor L = (I − Θ)⁻¹ of the latent chain.
fn chain_factor(p: &DagParams) -> Mat3 {
    let DagParams { alpha: a, beta: b, gamma: g } = *p;
    [[1.0, 0.0, 0.0], [a, 1.0, 0.0], [g + a * b, b, 1.0]]
}

fn sandwich(l: &Mat3, s: &Mat3) -> Mat3 {
    let mut ls = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            ls[i][j] = (0..3).map(|k| l[i][k] * s[k][j]).sum();
        }
    }
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| ls[i][k] * l[j][k]).sum();
        }
    }
    out
}

/// Covariance (I − Θ)⁻¹ Σ (I − Θ)⁻ᵀ of the latent chain, Σ = diag(sigma²).
pub fn gamma_matrix(params: &DagParams, sigma: [f64; 3]) -> Mat3 {
    let mut s = [[0.0; 3]; 3];
    for i in 0..3 {
        s[i][i] = sigma[i] * sigma[i];
    }
    sandwich(&chain_factor(params), &s)
}

/// Latent covariance with unit error variances and corr(ε_m, ε_y) = rho.
pub fn gamma_matrix_rho(params: &DagParams, rho: f64) -> Mat3 {
    let s = [[1.0, 0.0, 0.0], [0.0, 1.0, rho], [0.0, rho, 1.0]];
    sandwich(&chain_factor(params), &s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentStructure {
    pub tau_m: f64,
    pub tau_y: f64,
    /// Correlation matrix of (Z_x, Z*_m, Z*_y).
    pub corr: Mat3,
}

fn standardize(cov: Mat3) -> LatentStructure {
    let d = [1.0, cov[1][1].sqrt(), cov[2][2].sqrt()];
    let mut corr = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            corr[i][j] = if i == j { 1.0 } else { cov[i][j] / (d[i] * d[j]) };
        }
    }
    LatentStructure { tau_m: d[1], tau_y: d[2], corr }
}

pub fn latent_structure(params: &DagParams) -> LatentStructure {
    standardize(gamma_matrix(params, [1.0; 3]))
}

/// Latent structure when the mediator and outcome errors are correlated.
pub fn latent_structure_rho(params: &DagParams, rho: f64) -> Result<LatentStructure> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Domain(format!("error correlation must lie in (-1, 1), got {rho}")));
    }
    let ls = standardize(gamma_matrix_rho(params, rho));
    validate_corr(&ls.corr, 3)?;
    Ok(ls)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLik {
    pub value: f64,
    /// The rectangle probability was below the floor and replaced by it.
    pub floored: bool,
}

/// Precomputed conditional-normal pieces for one correlation matrix and one
/// point/interval pattern. Point coordinates are conditioned on first.
#[derive(Debug, Clone)]
pub struct LikelihoodPlan {
    points: Vec<usize>,
    intervals: Vec<usize>,
    /// R_PP⁻¹ (np × np).
    prec: Vec<Vec<f64>>,
    log_norm: f64,
    /// B = R_IP R_PP⁻¹ (ni × np).
    b: Vec<Vec<f64>>,
    cond_sd: Vec<f64>,
    cond_corr: Mat3,
}

impl LikelihoodPlan {
    pub fn new(corr: &Mat3, scenario: ScenarioCode) -> Result<Self> {
        validate_corr(corr, 3)?;
        let points: Vec<usize> = (0..3).filter(|&i| !scenario.is_discrete(i)).collect();
        let intervals: Vec<usize> = (0..3).filter(|&i| scenario.is_discrete(i)).collect();
        let np = points.len();
        let ni = intervals.len();

        let mut rpp = [[0.0; 3]; 3];
        for (a, &i) in points.iter().enumerate() {
            for (b, &j) in points.iter().enumerate() {
                rpp[a][b] = corr[i][j];
            }
        }
        let mut prec = vec![vec![0.0; np]; np];
        let mut log_norm = 0.0;
        if np > 0 {
            let l = cholesky3(&rpp, np)?;
            let log_det: f64 = (0..np).map(|i| 2.0 * l[i][i].ln()).sum();
            log_norm = -0.5 * (np as f64 * LN_2PI + log_det);
            // Inverse via forward/back substitution on unit vectors.
            for c in 0..np {
                let mut y = [0.0; 3];
                for i in 0..np {
                    let mut s = if i == c { 1.0 } else { 0.0 };
                    for k in 0..i {
                        s -= l[i][k] * y[k];
                    }
                    y[i] = s / l[i][i];
                }
                let mut x = [0.0; 3];
                for i in (0..np).rev() {
                    let mut s = y[i];
                    for k in i + 1..np {
                        s -= l[k][i] * x[k];
                    }
                    x[i] = s / l[i][i];
                }
                for r in 0..np {
                    prec[r][c] = x[r];
                }
            }
        }
        let mut b = vec![vec![0.0; np]; ni];
        for (a, &i) in intervals.iter().enumerate() {
            for c in 0..np {
                b[a][c] = (0..np).map(|k| corr[i][points[k]] * prec[k][c]).sum();
            }
        }
        let mut cond = [[0.0; 3]; 3];
        for (a, &i) in intervals.iter().enumerate() {
            for (c, &j) in intervals.iter().enumerate() {
                let adj: f64 = (0..np).map(|k| b[a][k] * corr[points[k]][j]).sum();
                cond[a][c] = corr[i][j] - adj;
            }
        }
        let mut cond_sd = vec![0.0; ni];
        for a in 0..ni {
            if cond[a][a] <= 1e-12 {
                return Err(Error::Conditioning(format!(
                    "conditional variance {:e} of latent coordinate {}",
                    cond[a][a], intervals[a]
                )));
            }
            cond_sd[a] = cond[a][a].sqrt();
        }
        let mut cond_corr = crate::normal::identity3();
        for a in 0..ni {
            for c in 0..ni {
                if a != c {
                    cond_corr[a][c] = (cond[a][c] / (cond_sd[a] * cond_sd[c])).clamp(-1.0, 1.0);
                }
            }
        }
        if ni >= 2 {
            validate_corr(&cond_corr, ni).map_err(|_| {
                Error::Conditioning("conditional correlation of the discrete coordinates is degenerate".into())
            })?;
        }
        Ok(Self { points, intervals, prec, log_norm, b, cond_sd, cond_corr })
    }

    /// Log joint density/mass of one observation, excluding marginal Jacobians.
    pub fn eval(&self, coords: &[LatentCoord; 3]) -> Result<LogLik> {
        let np = self.points.len();
        let mut zp = [0.0; 3];
        for (a, &i) in self.points.iter().enumerate() {
            zp[a] = match coords[i] {
                LatentCoord::Point(z) => z,
                LatentCoord::Interval { .. } => {
                    return Err(Error::Invalid(format!("latent coordinate {i} should be a point")))
                }
            };
        }
        let mut value = self.log_norm;
        for a in 0..np {
            for c in 0..np {
                value -= 0.5 * zp[a] * self.prec[a][c] * zp[c];
            }
        }
        let ni = self.intervals.len();
        if ni == 0 {
            return Ok(LogLik { value, floored: false });
        }
        let mut lo = [f64::NEG_INFINITY; 3];
        let mut hi = [f64::INFINITY; 3];
        for (a, &i) in self.intervals.iter().enumerate() {
            let (l, u) = match coords[i] {
                LatentCoord::Interval { l, u } => (l, u),
                LatentCoord::Point(_) => {
                    return Err(Error::Invalid(format!("latent coordinate {i} should be an interval")))
                }
            };
            let mean: f64 = (0..np).map(|k| self.b[a][k] * zp[k]).sum();
            lo[a] = (l - mean) / self.cond_sd[a];
            hi[a] = (u - mean) / self.cond_sd[a];
        }
        let prob = match ni {
            1 => interval_prob(lo[0], hi[0]),
            2 => rect2_prob([lo[0], lo[1]], [hi[0], hi[1]], self.cond_corr[0][1]),
            _ => rect3_prob(lo, hi, &self.cond_corr)?,
        };
        if prob < PROB_FLOOR || prob.is_nan() {
            return Ok(LogLik { value: value + PROB_FLOOR.ln(), floored: true });
        }
        Ok(LogLik { value: value + prob.ln(), floored: false })
    }

    /// Σ over observations with a fixed-order chunked reduction; returns the
    /// total and the number of floored terms.
    pub fn total(&self, coords: &[[LatentCoord; 3]], log_jac: &[f64]) -> Result<(f64, usize)> {
        let parts: Vec<Result<(f64, usize)>> = coords
            .par_chunks(CHUNK)
            .zip(log_jac.par_chunks(CHUNK))
            .map(|(cs, js)| {
                let mut s = 0.0;
                let mut floored = 0;
                for (c, j) in cs.iter().zip(js) {
                    let ll = self.eval(c)?;
                    s += ll.value + j;
                    floored += ll.floored as usize;
                }
                Ok((s, floored))
            })
            .collect();
        let mut total = 0.0;
        let mut floored = 0;
        for p in parts {
            let (s, f) = p?;
            total += s;
            floored += f;
        }
        Ok((total, floored))
    }
}

/// log π of one observation: Jacobians of point margins plus the latent
/// density/probability under the copula implied by `params`.
pub fn obs_loglik(coords: &[LatentCoord; 3], log_jacobians: &[f64], params: &DagParams) -> Result<LogLik> {
    let scenario = ScenarioCode {
        discrete: [0, 1, 2].map(|i| !coords[i].is_point()),
    };
    let ls = latent_structure(params);
    let plan = LikelihoodPlan::new(&ls.corr, scenario)?;
    let mut out = plan.eval(coords)?;
    out.value += log_jacobians.iter().sum::<f64>();
    Ok(out)
}
