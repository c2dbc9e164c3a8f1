//! Two-stage estimation: marginal GLMs first, then the three path
//! coefficients by profile likelihood with the marginals held fixed.

use serde::{Deserialize, Serialize};

use crate::copula::{latent_structure, latent_structure_rho, DagParams, LikelihoodPlan, ScenarioCode};
use crate::error::{Error, Result};
use crate::marginals::{fit_glm, CovariateSet, Design, Family, LatentCoord, MarginalFit, MarginalSpec};
use crate::optimizer::{minimize, OptimStatus, SimplexConfig};

/// Complete-case data. `w1` carries the intercept column first; `w2` holds
/// covariates that affect only M and Y.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub m: Vec<f64>,
    pub y: Vec<f64>,
    pub w1: Design,
    pub w2: Design,
}

impl Dataset {
    pub fn new(x: Vec<f64>, m: Vec<f64>, y: Vec<f64>, w1: Design, w2: Design) -> Result<Self> {
        let n = x.len();
        if m.len() != n || y.len() != n || w1.nrows() != n || w2.nrows() != n {
            return Err(Error::Invalid("dataset columns have unequal lengths".into()));
        }
        if w1.ncols() == 0 || (0..n).any(|i| w1.row(i)[0] != 1.0) {
            return Err(Error::Invalid("first column of W1 must be the intercept".into()));
        }
        let all = x.iter().chain(&m).chain(&y);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite value in X, M or Y".into()));
        }
        Ok(Self { x, m, y, w1, w2 })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn p1(&self) -> usize {
        self.w1.ncols()
    }

    /// W = [W1 | W2].
    pub fn w_full(&self) -> Design {
        self.w1.hcat(&self.w2).expect("row counts validated at construction")
    }

    /// Rows in the given order; used by the nonparametric bootstrap.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            x: pick(&self.x),
            m: pick(&self.m),
            y: pick(&self.y),
            w1: self.w1.select_rows(idx),
            w2: self.w2.select_rows(idx),
        }
    }

    /// Covariate means: the representative profile for effect queries.
    pub fn mean_profile(&self) -> Vec<f64> {
        self.w_full().column_means()
    }
}

/// Marginal specifications of X, M and Y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub x: MarginalSpec,
    pub m: MarginalSpec,
    pub y: MarginalSpec,
}

impl ModelSpec {
    /// X on W1, M and Y on the full W.
    pub fn new(fx: Family, fm: Family, fy: Family) -> Self {
        Self {
            x: MarginalSpec::new(fx, CovariateSet::W1Only),
            m: MarginalSpec::new(fm, CovariateSet::WFull),
            y: MarginalSpec::new(fy, CovariateSet::WFull),
        }
    }

    /// Skips the exposure model: X enters through its empirical standardization.
    pub fn conditional_x(self) -> Self {
        Self { x: MarginalSpec::new(Family::GaussianIdentity, CovariateSet::InterceptOnly), ..self }
    }

    pub fn families(&self) -> [Family; 3] {
        [self.x.family, self.m.family, self.y.family]
    }

    pub fn scenario(&self) -> ScenarioCode {
        ScenarioCode::from_families(self.families())
    }
}

/// Covariate row seen by a margin, given the full row `w` and the W1 width.
pub fn margin_row<'a>(set: CovariateSet, w: &'a [f64], p1: usize) -> &'a [f64] {
    const ONE: &[f64] = &[1.0];
    match set {
        CovariateSet::W1Only => &w[..p1],
        CovariateSet::WFull => w,
        CovariateSet::InterceptOnly => ONE,
    }
}

fn design_for(set: CovariateSet, data: &Dataset, full: &Design) -> Design {
    match set {
        CovariateSet::W1Only => data.w1.clone(),
        CovariateSet::WFull => full.clone(),
        CovariateSet::InterceptOnly => Design::intercept(data.n()),
    }
}

/// Stage-one output: fitted margins and per-observation latent coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1 {
    pub spec: ModelSpec,
    pub fits: [MarginalFit; 3],
    pub coords: Vec<[LatentCoord; 3]>,
    /// Sum of log-Jacobians of the point margins, per observation.
    pub log_jac: Vec<f64>,
    pub p1: usize,
}

impl Stage1 {
    pub fn scenario(&self) -> ScenarioCode {
        self.spec.scenario()
    }
}

pub fn stage1(data: &Dataset, spec: &ModelSpec) -> Result<Stage1> {
    let full = data.w_full();
    let p1 = data.p1();
    let specs = [spec.x, spec.m, spec.y];
    let values = [&data.x, &data.m, &data.y];
    let names = ["X", "M", "Y"];
    let mut fits = Vec::with_capacity(3);
    for k in 0..3 {
        let design = design_for(specs[k].covariate_set, data, &full);
        let fit = fit_glm(&design, values[k], specs[k].family).map_err(|e| e.in_margin(names[k]))?;
        fits.push(fit);
    }
    let fits: [MarginalFit; 3] = fits.try_into().expect("three margins");
    let mut coords = Vec::with_capacity(data.n());
    let mut log_jac = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let w = full.row(i);
        let mut c = [LatentCoord::Point(0.0); 3];
        let mut jac = 0.0;
        for k in 0..3 {
            let row = margin_row(specs[k].covariate_set, w, p1);
            let v = values[k][i];
            c[k] = fits[k].latent_coord(row, v).map_err(|e| e.in_margin(names[k]))?;
            jac += fits[k].log_jacobian(row, v);
        }
        coords.push(c);
        log_jac.push(jac);
    }
    Ok(Stage1 { spec: *spec, fits, coords, log_jac, p1 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2 {
    pub dag: DagParams,
    pub loglik: f64,
    pub n_floored: usize,
    pub status: OptimStatus,
    pub iterations: usize,
}

/// Profile log-likelihood Σ log π at `dag`, with the error correlation `rho`.
pub fn profile_loglik(s1: &Stage1, dag: &DagParams, rho: f64) -> Result<(f64, usize)> {
    let ls = if rho == 0.0 { latent_structure(dag) } else { latent_structure_rho(dag, rho)? };
    let plan = LikelihoodPlan::new(&ls.corr, s1.scenario())?;
    plan.total(&s1.coords, &s1.log_jac)
}

pub fn stage2(s1: &Stage1, config: &SimplexConfig, rho: f64) -> Result<Stage2> {
    if config.init.len() != 3 {
        return Err(Error::Optimizer("stage two optimizes exactly three parameters".into()));
    }
    let objective = |t: &[f64]| -> f64 {
        let dag = DagParams::new(t[0], t[1], t[2]);
        match profile_loglik(s1, &dag, rho) {
            Ok((ll, _)) => -ll,
            // Parameters with a degenerate latent law are simply infeasible.
            Err(_) => f64::INFINITY,
        }
    };
    let min = minimize(objective, config)?;
    let dag = DagParams::new(min.argmin[0], min.argmin[1], min.argmin[2]);
    let (loglik, n_floored) = profile_loglik(s1, &dag, rho)?;
    if n_floored > 0 {
        log::warn!("{n_floored} likelihood terms floored at the optimum");
    }
    Ok(Stage2 { dag, loglik, n_floored, status: min.status, iterations: min.iterations })
}

/// Fitted model: marginals, path coefficients, and the stage-one state
/// needed by effects and resampling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GsemFit {
    pub spec: ModelSpec,
    pub scenario: ScenarioCode,
    pub fit_x: MarginalFit,
    pub fit_m: MarginalFit,
    pub fit_y: MarginalFit,
    pub dag: DagParams,
    /// Correlation of the mediator and outcome errors held fixed in stage two.
    pub rho: f64,
    pub loglik: f64,
    pub n_floored: usize,
    pub status: OptimStatus,
    pub iterations: usize,
    pub n: usize,
    /// Number of W1 columns, intercept included.
    pub p1: usize,
    /// Number of columns of the full W.
    pub p: usize,
    #[serde(skip)]
    pub stage1: Stage1,
}

impl GsemFit {
    pub fn margin(&self, k: usize) -> &MarginalFit {
        match k {
            0 => &self.fit_x,
            1 => &self.fit_m,
            _ => &self.fit_y,
        }
    }

    pub fn margin_spec(&self, k: usize) -> MarginalSpec {
        [self.spec.x, self.spec.m, self.spec.y][k]
    }

    /// A model assembled from known components, e.g. true simulation
    /// parameters; it carries no stage-one data.
    pub fn from_parts(spec: ModelSpec, fits: [MarginalFit; 3], dag: DagParams, rho: f64, p1: usize, p: usize) -> Self {
        let [fit_x, fit_m, fit_y] = fits.clone();
        GsemFit {
            spec,
            scenario: spec.scenario(),
            fit_x,
            fit_m,
            fit_y,
            dag,
            rho,
            loglik: f64::NAN,
            n_floored: 0,
            status: OptimStatus::Converged,
            iterations: 0,
            n: 0,
            p1,
            p,
            stage1: Stage1 { spec, fits, coords: Vec::new(), log_jac: Vec::new(), p1 },
        }
    }

    /// The covariate row of margin `k` taken from a full W row.
    pub fn row<'a>(&self, k: usize, w: &'a [f64]) -> &'a [f64] {
        margin_row(self.margin_spec(k).covariate_set, w, self.p1)
    }
}

pub fn fit(data: &Dataset, spec: &ModelSpec, config: &SimplexConfig) -> Result<GsemFit> {
    fit_with_rho(data, spec, config, 0.0)
}

pub fn fit_with_rho(data: &Dataset, spec: &ModelSpec, config: &SimplexConfig, rho: f64) -> Result<GsemFit> {
    let s1 = stage1(data, spec)?;
    fit_from_stage1(s1, config, rho, data.w1.ncols() + data.w2.ncols())
}

/// Stage two on an existing stage-one result.
pub fn fit_from_stage1(s1: Stage1, config: &SimplexConfig, rho: f64, p: usize) -> Result<GsemFit> {
    let s2 = stage2(&s1, config, rho)?;
    let [fit_x, fit_m, fit_y] = s1.fits.clone();
    Ok(GsemFit {
        spec: s1.spec,
        scenario: s1.scenario(),
        fit_x,
        fit_m,
        fit_y,
        dag: s2.dag,
        rho,
        loglik: s2.loglik,
        n_floored: s2.n_floored,
        status: s2.status,
        iterations: s2.iterations,
        n: s1.coords.len(),
        p1: s1.p1,
        p,
        stage1: s1,
    })
}
