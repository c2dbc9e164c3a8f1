//! Parametric and nonparametric bootstrap percentile intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimands::{estimate_effects, odds_from_table, odds_ratios, EffectQuery};
use crate::estimation::{fit_with_rho, Dataset, GsemFit};
use crate::marginals::Family;
use crate::optimizer::SimplexConfig;
use crate::simgen::simulate_from_fit;

pub const MIN_REPLICATES: usize = 100;
/// Failure share above which the result carries a reliability warning.
pub const FAILURE_WARNING_SHARE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootKind {
    Parametric,
    Nonparametric,
}

impl std::str::FromStr for BootKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parametric" => Ok(Self::Parametric),
            "nonparametric" => Ok(Self::Nonparametric),
            other => Err(Error::Invalid(format!("unknown bootstrap kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub targets: Vec<String>,
    /// Point estimates on the original data, in target order.
    pub point: Vec<f64>,
    /// Successful replicates in replicate-index order, one row per replicate.
    pub replicates: Vec<Vec<f64>>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    /// Requested number of replicates.
    pub b: usize,
    pub n_failed: usize,
    pub kind: BootKind,
    pub seed: u64,
    pub warning: Option<String>,
}

impl BootstrapResult {
    pub fn index(&self, target: &str) -> Option<usize> {
        self.targets.iter().position(|t| t == target)
    }

    /// (lower, upper) interval of a named target.
    pub fn ci(&self, target: &str) -> Option<(f64, f64)> {
        self.index(target).map(|k| (self.ci_lower[k], self.ci_upper[k]))
    }

    /// Standard deviation of the replicates of a named target.
    pub fn se(&self, target: &str) -> Option<f64> {
        let k = self.index(target)?;
        let col: Vec<f64> = self.replicates.iter().map(|r| r[k]).collect();
        let n = col.len() as f64;
        if col.len() < 2 {
            return None;
        }
        let mean = col.iter().sum::<f64>() / n;
        Some((col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
    }
}

/// Linear-interpolation quantile of sorted data: h = (n−1)p, zero-based.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Target names for a model: path coefficients, effects, and odds ratios
/// when Y is binary.
pub fn target_names(fit: &GsemFit) -> Vec<String> {
    let mut names: Vec<String> = ["alpha", "beta", "gamma", "nde", "nie"].iter().map(|s| s.to_string()).collect();
    if fit.fit_y.family == Family::BernoulliLogit {
        names.push("or_nde".into());
        names.push("or_nie".into());
    }
    names
}

/// Target values of a fitted model at a resolved query.
pub fn target_values(fit: &GsemFit, q: &EffectQuery) -> Result<Vec<f64>> {
    let e = estimate_effects(fit, q)?;
    let mut v = vec![fit.dag.alpha, fit.dag.beta, fit.dag.gamma, e.nde, e.nie];
    if fit.fit_y.family == Family::BernoulliLogit {
        let or = if fit.fit_m.family == Family::BernoulliLogit {
            odds_ratios(fit, q)?
        } else {
            odds_from_table(e.counterfactual_means, e.method)?
        };
        v.push(or.or_nde);
        v.push(or.or_nie);
    }
    Ok(v)
}

pub fn bootstrap(data: &Dataset, fit: &GsemFit, q: &EffectQuery, b: usize, kind: BootKind, seed: u64) -> Result<BootstrapResult> {
    bootstrap_with(data, fit, q, b, kind, seed, &SimplexConfig::default())
}

/// Bootstrap with an explicit optimizer configuration. Each replicate
/// refits the full two-stage model at the fit's error correlation.
pub fn bootstrap_with(
    data: &Dataset,
    fit: &GsemFit,
    q: &EffectQuery,
    b: usize,
    kind: BootKind,
    seed: u64,
    config: &SimplexConfig,
) -> Result<BootstrapResult> {
    if b < MIN_REPLICATES {
        return Err(Error::Invalid(format!("bootstrap needs at least {MIN_REPLICATES} replicates, got {b}")));
    }
    let q = q.resolve(fit)?;
    let targets = target_names(fit);
    let point = target_values(fit, &q)?;
    let n = data.n();

    let rows: Vec<Option<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let sample = match kind {
                BootKind::Parametric => simulate_from_fit(fit, data.w1.clone(), data.w2.clone(), &mut rng).ok()?,
                BootKind::Nonparametric => {
                    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                    data.select_rows(&idx)
                }
            };
            let refit = fit_with_rho(&sample, &fit.spec, config, fit.rho).ok()?;
            let v = target_values(&refit, &q).ok()?;
            v.iter().all(|x| x.is_finite()).then_some(v)
        })
        .collect();

    let replicates: Vec<Vec<f64>> = rows.into_iter().flatten().collect();
    let n_failed = b - replicates.len();
    if replicates.is_empty() {
        return Err(Error::Invalid("every bootstrap replicate failed".into()));
    }
    let (ci_lower, ci_upper) = (0..targets.len())
        .map(|k| {
            let mut col: Vec<f64> = replicates.iter().map(|r| r[k]).collect();
            col.sort_by(f64::total_cmp);
            (percentile(&col, 0.025), percentile(&col, 0.975))
        })
        .unzip();
    let warning = (n_failed as f64 > FAILURE_WARNING_SHARE * b as f64)
        .then(|| format!("{n_failed} of {b} replicates failed; intervals may be unreliable"));
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(BootstrapResult { targets, point, replicates, ci_lower, ci_upper, b, n_failed, kind, seed, warning })
}
