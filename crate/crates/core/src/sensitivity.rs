//! Effects under correlated mediator and outcome latent errors, refitting
//! the path coefficients at each fixed error correlation ρ.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimands::{estimate_effects, EffectEstimate, EffectQuery};
use crate::estimation::{fit_from_stage1, stage1, Dataset, ModelSpec};
use crate::copula::DagParams;
use crate::inference::{bootstrap_with, BootKind};
use crate::optimizer::SimplexConfig;

/// ρ from −0.7 to 0.7 in steps of 0.1, with an exact zero.
pub fn default_grid() -> Vec<f64> {
    (-7..=7).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapSpec {
    pub b: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityRow {
    pub rho: f64,
    /// Set when the grid point was skipped; the remaining fields are then empty.
    pub skipped: Option<String>,
    pub dag: Option<DagParams>,
    pub loglik: Option<f64>,
    pub effects: Option<EffectEstimate>,
    pub nde_ci: Option<(f64, f64)>,
    pub nie_ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityScan {
    pub rho_grid: Vec<f64>,
    pub rows: Vec<SensitivityRow>,
}

impl SensitivityScan {
    pub fn at(&self, rho: f64) -> Option<&SensitivityRow> {
        self.rows.iter().find(|r| r.rho == rho)
    }
}

/// Scans `grid`, sharing one stage-one fit across all points. Points with
/// |ρ| ≥ 1 or a failed refit are kept as flagged rows.
pub fn sensitivity_scan(
    data: &Dataset,
    spec: &ModelSpec,
    q: &EffectQuery,
    grid: &[f64],
    config: &SimplexConfig,
    boot: Option<BootstrapSpec>,
) -> Result<SensitivityScan> {
    if grid.is_empty() {
        return Err(Error::Invalid("sensitivity grid is empty".into()));
    }
    if let Some(&r) = grid.iter().find(|r| !r.is_finite()) {
        return Err(Error::Invalid(format!("grid value {r} is not finite")));
    }
    let s1 = stage1(data, spec)?;
    let p = data.w1.ncols() + data.w2.ncols();
    let rows = grid
        .par_iter()
        .map(|&rho| {
            let skip = |reason: String| SensitivityRow {
                rho,
                skipped: Some(reason),
                dag: None,
                loglik: None,
                effects: None,
                nde_ci: None,
                nie_ci: None,
            };
            if rho.abs() >= 1.0 {
                return Ok(skip("implied latent correlation is not positive definite".into()));
            }
            let fit = match fit_from_stage1(s1.clone(), config, rho, p) {
                Ok(f) => f,
                Err(e) => return Ok(skip(e.to_string())),
            };
            let q = q.resolve(&fit)?;
            let effects = match estimate_effects(&fit, &q) {
                Ok(e) => e,
                Err(e) => return Ok(skip(e.to_string())),
            };
            let (nde_ci, nie_ci) = match boot {
                Some(bs) => {
                    let r = bootstrap_with(data, &fit, &q, bs.b, BootKind::Parametric, bs.seed, config)?;
                    (r.ci("nde"), r.ci("nie"))
                }
                None => (None, None),
            };
            Ok(SensitivityRow {
                rho,
                skipped: None,
                dag: Some(fit.dag),
                loglik: Some(fit.loglik),
                effects: Some(effects),
                nde_ci,
                nie_ci,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityScan { rho_grid: grid.to_vec(), rows })
}
