//! Conditional natural direct and indirect effects at a covariate profile.
//!
//! Counterfactual means E{Y(x_a, M(x_b))} follow the nested expectation
//! E_M{E_Y(Y | M, X = x_a) | X = x_b}. The outcome law given the latent
//! exposure and mediator is Z_y = γ Z_x + β Z_m + ε_y with unit error
//! variance, read on the Y scale through Z*_y = Z_y / τ_y.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{gamma_matrix, latent_structure, latent_structure_rho, DagParams, ScenarioCode};
use crate::error::{Error, Result};
use crate::estimation::GsemFit;
use crate::marginals::{Family, LatentCoord};
use crate::quadrature::integrate_adaptive;
use crate::normal::{interval_prob, rect2_prob, rect3_prob, std_cdf, std_pdf, truncated_std_normal_inv};

pub const DEFAULT_MC_DRAWS: usize = 100_000;
pub const MIN_MC_DRAWS: usize = 1000;
/// Draws per independently seeded stream.
const MC_CHUNK: usize = 4096;
/// Relative tolerance of the exposure-interval quadrature.
const RECT_MEAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectQuery {
    /// Reference exposure; defaults to z = 0 (continuous X) or 0 (discrete X).
    pub x0: Option<f64>,
    /// Contrast exposure; defaults to z = 1 (continuous X) or 1 (discrete X).
    pub x1: Option<f64>,
    /// Full covariate row W = [W1 | W2], intercept first.
    pub w: Vec<f64>,
    pub mc_draws: usize,
    pub seed: u64,
}

impl EffectQuery {
    pub fn new(w: Vec<f64>) -> Self {
        Self { x0: None, x1: None, w, mc_draws: DEFAULT_MC_DRAWS, seed: 0 }
    }

    pub fn with_x(mut self, x0: f64, x1: f64) -> Self {
        self.x0 = Some(x0);
        self.x1 = Some(x1);
        self
    }

    pub fn with_draws(mut self, mc_draws: usize) -> Self {
        self.mc_draws = mc_draws;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Fills in default exposure levels and checks the covariate width.
    pub fn resolve(&self, fit: &GsemFit) -> Result<EffectQuery> {
        if self.w.len() != fit.p {
            return Err(Error::Invalid(format!(
                "covariate row has {} entries, model expects {}",
                self.w.len(),
                fit.p
            )));
        }
        let (d0, d1) = match fit.fit_x.family {
            Family::GaussianIdentity => {
                let mu = fit.fit_x.mean(fit.row(0, &self.w));
                (mu, mu + fit.fit_x.sd())
            }
            _ => (0.0, 1.0),
        };
        let x0 = self.x0.unwrap_or(d0);
        let x1 = self.x1.unwrap_or(d1);
        if x0 == x1 {
            return Err(Error::Invalid("x0 and x1 must differ".into()));
        }
        fit.fit_x.family.check_support(x0).map_err(|e| e.in_margin("X"))?;
        fit.fit_x.family.check_support(x1).map_err(|e| e.in_margin("X"))?;
        Ok(EffectQuery { x0: Some(x0), x1: Some(x1), ..self.clone() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectMethod {
    ClosedForm,
    MonteCarlo,
    Enumeration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSe {
    pub nde: f64,
    pub nie: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub nde: f64,
    pub nie: f64,
    pub total: f64,
    pub method: EffectMethod,
    pub mc_se: Option<McSe>,
    /// E{Y(x_a, M(x_b))} indexed `[a][b]`.
    pub counterfactual_means: [[f64; 2]; 2],
    pub x0: f64,
    pub x1: f64,
}

impl EffectEstimate {
    fn from_means(means: [[f64; 2]; 2], method: EffectMethod, mc_se: Option<McSe>, x0: f64, x1: f64) -> Self {
        Self {
            nde: means[1][0] - means[0][0],
            nie: means[1][1] - means[1][0],
            total: means[1][1] - means[0][0],
            method,
            mc_se,
            counterfactual_means: means,
            x0,
            x1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsRatioEstimate {
    pub or_nde: f64,
    pub or_nie: f64,
    /// P{Y(x_a, M(x_b)) = 1} indexed `[a][b]`.
    pub a_table: [[f64; 2]; 2],
    pub method: EffectMethod,
}

/// Latent position of an exposure level.
#[derive(Debug, Clone, Copy)]
enum XLatent {
    Point(f64),
    Interval(f64, f64),
}

/// A margin at a fixed covariate row, on its latent standard-normal scale.
#[derive(Debug, Clone)]
enum LatentMargin {
    Continuous { mu: f64, sd: f64 },
    /// Value k occupies (cuts[k−1], cuts[k]].
    Discrete { cuts: Vec<f64> },
}

impl LatentMargin {
    fn new(fit: &GsemFit, k: usize, w: &[f64]) -> Self {
        let m = fit.margin(k);
        let row = fit.row(k, w);
        match m.family {
            Family::GaussianIdentity => LatentMargin::Continuous { mu: m.mean(row), sd: m.sd() },
            _ => LatentMargin::Discrete { cuts: m.latent_cuts(row) },
        }
    }

    fn category(&self, z: f64) -> usize {
        match self {
            LatentMargin::Discrete { cuts } => cuts.iter().take_while(|&&c| c < z).count(),
            LatentMargin::Continuous { .. } => 0,
        }
    }

    fn interval(&self, k: usize) -> (f64, f64) {
        match self {
            LatentMargin::Discrete { cuts } => {
                let l = if k == 0 { f64::NEG_INFINITY } else { cuts[k - 1] };
                let u = cuts.get(k).copied().unwrap_or(f64::INFINITY);
                (l, u)
            }
            LatentMargin::Continuous { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// E[value] when the latent coordinate is N(mean, sd²).
    fn expect(&self, mean: f64, sd: f64) -> f64 {
        match self {
            LatentMargin::Continuous { mu, sd: s } => mu + s * mean,
            LatentMargin::Discrete { cuts } => cuts.iter().map(|c| std_cdf((mean - c) / sd)).sum(),
        }
    }
}

/// Everything the effect formulas need at one covariate profile.
struct Profile {
    dag: DagParams,
    tau_m: f64,
    tau_y: f64,
    x: [XLatent; 2],
    m: LatentMargin,
    y: LatentMargin,
    x0: f64,
    x1: f64,
    /// E[Y | X = x_a, M = k] for discrete X and M, indexed `[a][k]`.
    rect_means: [Vec<f64>; 2],
}

impl Profile {
    fn new(fit: &GsemFit, q: &EffectQuery) -> Result<Self> {
        let q = q.resolve(fit)?;
        let (x0, x1) = (q.x0.unwrap(), q.x1.unwrap());
        let ls = if fit.rho == 0.0 { latent_structure(&fit.dag) } else { latent_structure_rho(&fit.dag, fit.rho)? };
        let xrow = fit.row(0, &q.w);
        let lat = |x: f64| -> Result<XLatent> {
            Ok(match fit.fit_x.latent_coord(xrow, x).map_err(|e| e.in_margin("X"))? {
                // Unclamped so that extreme exposure contrasts stay exact.
                LatentCoord::Point(_) => XLatent::Point((x - fit.fit_x.mean(xrow)) / fit.fit_x.sd()),
                LatentCoord::Interval { l, u } => XLatent::Interval(l, u),
            })
        };
        let mut p = Self {
            dag: fit.dag,
            tau_m: ls.tau_m,
            tau_y: ls.tau_y,
            x: [lat(x0)?, lat(x1)?],
            m: LatentMargin::new(fit, 1, &q.w),
            y: LatentMargin::new(fit, 2, &q.w),
            x0,
            x1,
            rect_means: [Vec::new(), Vec::new()],
        };
        if let LatentMargin::Discrete { cuts } = &p.m {
            for a in 0..2 {
                if let XLatent::Interval(l, u) = p.x[a] {
                    p.rect_means[a] = (0..=cuts.len()).map(|k| p.rect_mean((l, u), p.m.interval(k))).collect();
                }
            }
        }
        Ok(p)
    }

    /// E[Y | Z_x ∈ xi, Z*_m ∈ mi] by quadrature over Z_x of the conditional
    /// (Z_m, Z_y) law given Z_x.
    fn rect_mean(&self, xi: (f64, f64), mi: (f64, f64)) -> f64 {
        let DagParams { alpha, beta, gamma } = self.dag;
        let (ml, mu) = (self.tau_m * mi.0, self.tau_m * mi.1);
        let sy = (beta * beta + 1.0).sqrt();
        let r = beta / sy;
        let mass = |x: f64| interval_prob(ml - alpha * x, mu - alpha * x);
        let weighted = |x: f64| -> f64 {
            let lo = ml - alpha * x;
            let hi = mu - alpha * x;
            match &self.y {
                LatentMargin::Continuous { mu: my, sd } => {
                    let pk = interval_prob(lo, hi);
                    let dens = |t: f64| if t.is_finite() { std_pdf(t) } else { 0.0 };
                    // E[Z_m 1{Z_m ∈ I} | x] for Z_m ~ N(αx, 1).
                    let em = alpha * x * pk + dens(lo) - dens(hi);
                    my * pk + sd / self.tau_y * (gamma * x * pk + beta * em)
                }
                LatentMargin::Discrete { cuts } => cuts
                    .iter()
                    .map(|c| {
                        let t = (self.tau_y * c - (gamma + alpha * beta) * x) / sy;
                        rect2_prob([lo, t], [hi, f64::INFINITY], r)
                    })
                    .sum(),
            }
        };
        // Integrate on the Φ scale, reflected for upper-tail intervals.
        let (sign, a, b) = if xi.0 > 0.0 {
            (-1.0, std_cdf(-xi.1), std_cdf(-xi.0))
        } else {
            (1.0, std_cdf(xi.0), std_cdf(xi.1))
        };
        let at = |s: f64| sign * crate::normal::quantile_ext(s);
        let den = integrate_adaptive(|s| mass(at(s)), a, b, 1e-14);
        if den <= 0.0 {
            return 0.0;
        }
        integrate_adaptive(|s| weighted(at(s)), a, b, RECT_MEAN_TOL * den) / den
    }

    fn z(&self, a: usize) -> Result<f64> {
        match self.x[a] {
            XLatent::Point(z) => Ok(z),
            XLatent::Interval(..) => Err(Error::Invalid("closed forms need a continuous exposure".into())),
        }
    }

    /// E[Y | Z_x = zx, Z*_m = zm].
    fn expect_y(&self, zx: f64, zm: f64) -> f64 {
        let DagParams { beta, gamma, .. } = self.dag;
        let mean = (gamma * zx + beta * self.tau_m * zm) / self.tau_y;
        self.y.expect(mean, 1.0 / self.tau_y)
    }
}

fn require(fit: &GsemFit, expected: ScenarioCode, families: [Family; 3]) -> Result<()> {
    if fit.scenario != expected || fit.spec.families() != families {
        return Err(Error::ScenarioMismatch { expected: expected.to_string(), found: fit.scenario.to_string() });
    }
    Ok(())
}

/// All three margins Gaussian.
pub fn effects_ccc(fit: &GsemFit, q: &EffectQuery) -> Result<EffectEstimate> {
    use Family::GaussianIdentity as G;
    require(fit, ScenarioCode::CCC, [G, G, G])?;
    let p = Profile::new(fit, q)?;
    let DagParams { alpha, beta, gamma } = p.dag;
    let (mu_y, sd_y) = match p.y {
        LatentMargin::Continuous { mu, sd } => (mu, sd),
        _ => unreachable!(),
    };
    let z = [p.z(0)?, p.z(1)?];
    let mut means = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            means[a][b] = mu_y + sd_y * (gamma * z[a] + alpha * beta * z[b]) / p.tau_y;
        }
    }
    let mut est = EffectEstimate::from_means(means, EffectMethod::ClosedForm, None, p.x0, p.x1);
    // Exact forms, free of the cancellation in the mean differences.
    let dz = z[1] - z[0];
    est.nde = sd_y * gamma * dz / p.tau_y;
    est.nie = sd_y * alpha * beta * dz / p.tau_y;
    est.total = est.nde + est.nie;
    Ok(est)
}

/// Gaussian exposure and outcome with a Bernoulli mediator.
pub fn effects_cdc(fit: &GsemFit, q: &EffectQuery) -> Result<EffectEstimate> {
    use Family::{BernoulliLogit as B, GaussianIdentity as G};
    require(fit, ScenarioCode::CDC, [G, B, G])?;
    let p = Profile::new(fit, q)?;
    let DagParams { alpha, beta, gamma } = p.dag;
    let (mu_y, sd_y) = match p.y {
        LatentMargin::Continuous { mu, sd } => (mu, sd),
        _ => unreachable!(),
    };
    // u_m = −Φ⁻¹(expit(wᵀβ_m)) is the latent cut below which M = 0.
    let u_m = match &p.m {
        LatentMargin::Discrete { cuts } => cuts[0],
        _ => unreachable!(),
    };
    let z = [p.z(0)?, p.z(1)?];
    let mut pz = [0.0; 2];
    let mut dz = [0.0; 2];
    for a in 0..2 {
        let t = p.tau_m * u_m - alpha * z[a];
        pz[a] = std_cdf(t);
        dz[a] = std_pdf(t);
        if !(pz[a] > 0.0 && pz[a] < 1.0) {
            return Err(Error::DegenerateMediator(pz[a]));
        }
    }
    let mut means = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let shift = dz[a] * ((1.0 - pz[b]) / (1.0 - pz[a]) - pz[b] / pz[a]);
            means[a][b] = mu_y + sd_y / p.tau_y * ((gamma + alpha * beta) * z[a] + beta * shift);
        }
    }
    let mut est = EffectEstimate::from_means(means, EffectMethod::ClosedForm, None, p.x0, p.x1);
    let ratio = pz[0] / pz[1] - (1.0 - pz[0]) / (1.0 - pz[1]);
    est.nde = sd_y / p.tau_y * ((gamma + alpha * beta) * (z[1] - z[0]) - beta * dz[1] * ratio);
    est.nie = sd_y * beta / p.tau_y * dz[1] * ratio;
    est.total = est.nde + est.nie;
    Ok(est)
}

/// Running sums of per-draw counterfactual values.
#[derive(Debug, Clone, Copy, Default)]
struct McAccum {
    n: usize,
    means: [[f64; 2]; 2],
    /// Σ and Σ² of per-draw NDE, NIE, total.
    s: [f64; 3],
    s2: [f64; 3],
}

impl McAccum {
    fn push(&mut self, v: [[f64; 2]; 2]) {
        self.n += 1;
        for a in 0..2 {
            for b in 0..2 {
                self.means[a][b] += v[a][b];
            }
        }
        let d = [v[1][0] - v[0][0], v[1][1] - v[1][0], v[1][1] - v[0][0]];
        for k in 0..3 {
            self.s[k] += d[k];
            self.s2[k] += d[k] * d[k];
        }
    }

    fn merge(mut self, o: &McAccum) -> Self {
        self.n += o.n;
        for a in 0..2 {
            for b in 0..2 {
                self.means[a][b] += o.means[a][b];
            }
        }
        for k in 0..3 {
            self.s[k] += o.s[k];
            self.s2[k] += o.s2[k];
        }
        self
    }

    fn finish(&self, x0: f64, x1: f64) -> EffectEstimate {
        let n = self.n as f64;
        let mut means = self.means;
        means.iter_mut().flatten().for_each(|v| *v /= n);
        let se = |k: usize| {
            let m = self.s[k] / n;
            ((self.s2[k] / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt()
        };
        let mut est = EffectEstimate::from_means(
            means,
            EffectMethod::MonteCarlo,
            Some(McSe { nde: se(0), nie: se(1), total: se(2) }),
            x0,
            x1,
        );
        // Average of per-draw contrasts; identical to the mean differences up to rounding.
        est.nde = self.s[0] / n;
        est.nie = self.s[1] / n;
        est.total = self.s[2] / n;
        est
    }
}

/// Runs `draw` over `mc_draws` draws in fixed chunks, each with its own
/// ChaCha stream keyed by `seed`, and reduces in chunk order.
fn run_mc<F>(mc_draws: usize, seed: u64, draw: F) -> Result<McAccum>
where
    F: Fn(&mut ChaCha8Rng) -> Result<[[f64; 2]; 2]> + Sync,
{
    if mc_draws < MIN_MC_DRAWS {
        return Err(Error::TooFewDraws(mc_draws));
    }
    let chunks = mc_draws.div_ceil(MC_CHUNK);
    let parts: Vec<Result<McAccum>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = MC_CHUNK.min(mc_draws - c * MC_CHUNK);
            let mut acc = McAccum::default();
            for _ in 0..len {
                acc.push(draw(&mut rng)?);
            }
            Ok(acc)
        })
        .collect();
    let mut total = McAccum::default();
    for p in parts {
        total = total.merge(&p?);
    }
    Ok(total)
}

/// Gaussian exposure and mediator with a Bernoulli outcome: average of
/// ψ(z_a) = Φ(τ_y l_y − γ z_a − τ_m β z*_m) over z*_m ~ N(α z_b / τ_m, 1/τ_m²).
pub fn effects_ccd(fit: &GsemFit, q: &EffectQuery) -> Result<EffectEstimate> {
    use Family::{BernoulliLogit as B, GaussianIdentity as G};
    require(fit, ScenarioCode::CCD, [G, G, B])?;
    let p = Profile::new(fit, q)?;
    let DagParams { alpha, beta, gamma } = p.dag;
    let l_y = match &p.y {
        LatentMargin::Discrete { cuts } => cuts[0],
        _ => unreachable!(),
    };
    let z = [p.z(0)?, p.z(1)?];
    let acc = run_mc(q.mc_draws, q.seed, |rng| {
        let e: f64 = rng.sample(StandardNormal);
        let mut v = [[0.0; 2]; 2];
        for b in 0..2 {
            let zm = (alpha * z[b] + e) / p.tau_m;
            for a in 0..2 {
                let psi = std_cdf(p.tau_y * l_y - gamma * z[a] - p.tau_m * beta * zm);
                v[a][b] = 1.0 - psi;
            }
        }
        Ok(v)
    })?;
    Ok(acc.finish(p.x0, p.x1))
}

/// Uniforms and normals shared by the four (a, b) combinations of one draw.
struct Common {
    u_x: f64,
    e_m: f64,
    u_m: f64,
    u_x2: f64,
}

/// Monte Carlo over the latent chain for any combination of margins.
pub fn effects_generic(fit: &GsemFit, q: &EffectQuery) -> Result<EffectEstimate> {
    let p = Profile::new(fit, q)?;
    let acc = run_mc(q.mc_draws, q.seed, |rng| {
        let c = Common {
            u_x: rng.random(),
            e_m: rng.sample(StandardNormal),
            u_m: rng.random(),
            u_x2: rng.random(),
        };
        generic_draw(&p, &c)
    })?;
    Ok(acc.finish(p.x0, p.x1))
}

fn generic_draw(p: &Profile, c: &Common) -> Result<[[f64; 2]; 2]> {
    let DagParams { alpha, .. } = p.dag;
    let tau_m = p.tau_m;
    // Mediator under exposure x_b: latent value and observed category.
    let mut zm_b = [0.0; 2];
    let mut cat_b = [0usize; 2];
    for b in 0..2 {
        let zx = match p.x[b] {
            XLatent::Point(z) => z,
            XLatent::Interval(l, u) => truncated_std_normal_inv(l, u, c.u_x),
        };
        zm_b[b] = (alpha * zx + c.e_m) / tau_m;
        cat_b[b] = p.m.category(zm_b[b]);
    }
    let mut v = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            v[a][b] = match (p.x[a], &p.m) {
                (XLatent::Point(za), LatentMargin::Continuous { .. }) => p.expect_y(za, zm_b[b]),
                (XLatent::Point(za), LatentMargin::Discrete { .. }) => {
                    // Z_m | Z_x = z_a is N(α z_a, 1), truncated to the category.
                    let (l, u) = p.m.interval(cat_b[b]);
                    let e = truncated_std_normal_inv(tau_m * l - alpha * za, tau_m * u - alpha * za, c.u_m);
                    p.expect_y(za, (alpha * za + e) / tau_m)
                }
                (XLatent::Interval(l, u), LatentMargin::Continuous { .. }) => {
                    // Z_x | Z_m = z is N(α z / (1 + α²), 1 / (1 + α²)), truncated to the exposure interval.
                    let zm = zm_b[b] * tau_m;
                    let s = 1.0 / tau_m;
                    let mean = alpha * zm / (tau_m * tau_m);
                    let zx = mean + s * truncated_std_normal_inv((l - mean) / s, (u - mean) / s, c.u_x2);
                    p.expect_y(zx, zm_b[b])
                }
                (XLatent::Interval(..), LatentMargin::Discrete { .. }) => p.rect_means[a][cat_b[b]],
            };
        }
    }
    Ok(v)
}

/// Closed form where one exists, Monte Carlo otherwise.
pub fn estimate_effects(fit: &GsemFit, q: &EffectQuery) -> Result<EffectEstimate> {
    use Family::{BernoulliLogit as B, GaussianIdentity as G};
    match fit.spec.families() {
        [G, G, G] => effects_ccc(fit, q),
        [G, B, G] => effects_cdc(fit, q),
        [G, G, B] => effects_ccd(fit, q),
        _ => effects_generic(fit, q),
    }
}

fn odds(p: f64) -> f64 {
    p / (1.0 - p)
}

/// Odds ratios from a table of counterfactual success probabilities.
pub fn odds_from_table(a: [[f64; 2]; 2], method: EffectMethod) -> Result<OddsRatioEstimate> {
    for &v in a.iter().flatten() {
        if !(v > 1e-15 && v < 1.0 - 1e-15) {
            return Err(Error::SaturatedProbability(v));
        }
    }
    Ok(OddsRatioEstimate {
        or_nde: odds(a[1][0]) / odds(a[0][0]),
        or_nie: odds(a[1][1]) / odds(a[1][0]),
        a_table: a,
        method,
    })
}

/// Odds ratios of the natural effects for a Bernoulli outcome.
pub fn odds_ratios(fit: &GsemFit, q: &EffectQuery) -> Result<OddsRatioEstimate> {
    if fit.fit_y.family != Family::BernoulliLogit {
        return Err(Error::ScenarioMismatch {
            expected: "a Bernoulli outcome".into(),
            found: fit.scenario.to_string(),
        });
    }
    if fit.fit_m.family == Family::BernoulliLogit {
        return odds_ratios_enumerated(fit, q);
    }
    let est = estimate_effects(fit, q)?;
    odds_from_table(est.counterfactual_means, est.method)
}

/// Exact A table for a binary mediator: a two-term mixture over M of
/// P(Y = 1 | M = m, X = x_a) weighted by P(M = m | X = x_b).
pub fn odds_ratios_enumerated(fit: &GsemFit, q: &EffectQuery) -> Result<OddsRatioEstimate> {
    let p = Profile::new(fit, q)?;
    if fit.fit_m.family != Family::BernoulliLogit || fit.fit_y.family != Family::BernoulliLogit {
        return Err(Error::ScenarioMismatch { expected: "binary M and Y".into(), found: fit.scenario.to_string() });
    }
    let a = mixture_table(&p)?;
    odds_from_table(a, EffectMethod::Enumeration)
}

fn mixture_table(p: &Profile) -> Result<[[f64; 2]; 2]> {
    let y_cut = match &p.y {
        LatentMargin::Discrete { cuts } => cuts[0],
        _ => unreachable!(),
    };
    // Unscaled latent covariance with unit errors; thresholds carry the τ scalings.
    let cov = gamma_matrix(&p.dag, [1.0; 3]);
    let sd = [1.0, cov[1][1].sqrt(), cov[2][2].sqrt()];
    let mut corr = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            corr[i][j] = cov[i][j] / (sd[i] * sd[j]);
        }
    }
    let y_lo = p.tau_y * y_cut / sd[2];
    let m_bounds = |k: usize| {
        let (l, u) = p.m.interval(k);
        (p.tau_m * l / sd[1], p.tau_m * u / sd[1])
    };
    // P(M = k | x) and P(M = k, Y = 1 | x).
    let probs = |x: XLatent, k: usize| -> Result<(f64, f64)> {
        let (ml, mu) = m_bounds(k);
        match x {
            XLatent::Point(z) => {
                let DagParams { alpha, beta, gamma } = p.dag;
                // (Z_m, Z_y) | Z_x = z: means (α z, (γ + αβ) z), covariance [[1, β], [β, β² + 1]].
                let sy = (beta * beta + 1.0).sqrt();
                let r = beta / sy;
                let mm = alpha * z;
                let my = (gamma + alpha * beta) * z;
                let pm = interval_prob(ml * sd[1] - mm, mu * sd[1] - mm);
                let pmy = rect2_prob(
                    [ml * sd[1] - mm, (y_lo * sd[2] - my) / sy],
                    [mu * sd[1] - mm, f64::INFINITY],
                    r,
                );
                Ok((pm, pmy))
            }
            XLatent::Interval(xl, xu) => {
                let px = interval_prob(xl, xu);
                let pm = rect2_prob([xl, ml], [xu, mu], corr[0][1]) / px;
                let pmy = rect3_prob([xl, ml, y_lo], [xu, mu, f64::INFINITY], &corr)? / px;
                Ok((pm, pmy))
            }
        }
    };
    let mut table = [[0.0; 2]; 2];
    for a in 0..2 {
        let cond: Vec<(f64, f64)> = (0..2).map(|k| probs(p.x[a], k)).collect::<Result<_>>()?;
        for b in 0..2 {
            let mut acc = 0.0;
            for k in 0..2 {
                let weight = if a == b { cond[k].0 } else { probs(p.x[b], k)?.0 };
                let (pm, pmy) = cond[k];
                if pm > 0.0 {
                    acc += weight * pmy / pm;
                }
            }
            table[a][b] = acc;
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::ModelSpec;
    use crate::marginals::MarginalFit;

    fn margin(family: Family, beta: Vec<f64>, dispersion: f64) -> MarginalFit {
        MarginalFit { family, coefficients: beta, dispersion, n_obs: 1000, iterations: 1 }
    }

    fn model(families: [Family; 3], dag: DagParams) -> GsemFit {
        let fits = families.map(|f| match f {
            Family::GaussianIdentity => margin(f, vec![0.2, 0.1], 0.09),
            Family::BernoulliLogit => margin(f, vec![-0.2, 0.4], 1.0),
            Family::PoissonLog => margin(f, vec![0.3, 0.2], 1.0),
        });
        let mut spec = ModelSpec::new(families[0], families[1], families[2]);
        spec.x.covariate_set = crate::marginals::CovariateSet::WFull;
        GsemFit::from_parts(spec, fits, dag, 0.0, 1, 2)
    }

    fn query() -> EffectQuery {
        EffectQuery::new(vec![1.0, 0.3]).with_draws(200_000).with_seed(7)
    }

    use Family::{BernoulliLogit as B, GaussianIdentity as G, PoissonLog as P};

    #[test]
    fn ccc_reference_values() {
        let fit = model([G, G, G], DagParams::new(0.2, 0.2, 0.1));
        let est = effects_ccc(&fit, &query()).unwrap();
        assert!((est.nde - 0.0291437).abs() < 1e-6, "{}", est.nde);
        assert!((est.nie - 0.0116575).abs() < 1e-6, "{}", est.nie);
        assert_eq!(est.method, EffectMethod::ClosedForm);
    }

    #[test]
    fn ccc_zero_paths() {
        let e = effects_ccc(&model([G, G, G], DagParams::new(0.4, 0.3, 0.0)), &query()).unwrap();
        assert_eq!(e.nde, 0.0);
        let e = effects_ccc(&model([G, G, G], DagParams::new(0.0, 0.3, 0.2)), &query()).unwrap();
        assert_eq!(e.nie, 0.0);
    }

    #[test]
    fn scenario_mismatch_is_reported() {
        let fit = model([G, B, G], DagParams::default());
        assert!(matches!(effects_ccc(&fit, &query()), Err(Error::ScenarioMismatch { .. })));
        assert!(matches!(effects_ccd(&fit, &query()), Err(Error::ScenarioMismatch { .. })));
    }

    #[test]
    fn too_few_draws_rejected() {
        let fit = model([G, P, G], DagParams::default());
        assert_eq!(effects_generic(&fit, &query().with_draws(999)), Err(Error::TooFewDraws(999)));
    }

    #[test]
    fn cdc_zero_when_gamma_and_alpha_vanish() {
        let fit = model([G, B, G], DagParams::new(0.0, 0.75, 0.0));
        let e = effects_cdc(&fit, &query()).unwrap();
        assert!(e.nde.abs() < 1e-15 && e.nie.abs() < 1e-15);
    }

    #[test]
    fn cdc_closed_form_matches_generic() {
        for dag in [DagParams::new(0.5, 0.75, 0.0), DagParams::new(-0.5, 0.5, 0.5), DagParams::new(0.15, 0.75, 0.1)] {
            let fit = model([G, B, G], dag);
            let cf = effects_cdc(&fit, &query()).unwrap();
            let mc = effects_generic(&fit, &query()).unwrap();
            let se = mc.mc_se.unwrap();
            assert!((cf.nde - mc.nde).abs() < 4.0 * se.nde + 1e-12, "{dag:?}: {} vs {} ± {}", cf.nde, mc.nde, se.nde);
            assert!((cf.nie - mc.nie).abs() < 4.0 * se.nie + 1e-12, "{dag:?}: {} vs {} ± {}", cf.nie, mc.nie, se.nie);
        }
    }

    #[test]
    fn ccd_matches_gaussian_integral() {
        // E Φ(A − B Z) for Z ~ N(μ, s²) is Φ((A − Bμ)/√(1 + B²s²)).
        let dag = DagParams::new(0.7, 0.18, 0.1);
        let fit = model([G, G, B], dag);
        let est = effects_ccd(&fit, &query()).unwrap();
        let ls = latent_structure(&dag);
        let eta = -0.2 + 0.4 * 0.3;
        let l_y = crate::normal::quantile_ext(crate::marginals::expit(-eta));
        let z = [0.0, 1.0];
        let exact = |a: usize, b: usize| {
            1.0 - std_cdf((ls.tau_y * l_y - dag.gamma * z[a] - dag.alpha * dag.beta * z[b]) / (1.0 + dag.beta * dag.beta).sqrt())
        };
        for a in 0..2 {
            for b in 0..2 {
                assert!((est.counterfactual_means[a][b] - exact(a, b)).abs() < 3e-3);
            }
        }
        let nde = exact(1, 0) - exact(0, 0);
        assert!((est.nde - nde).abs() < 4.0 * est.mc_se.unwrap().nde);
    }

    #[test]
    fn ccd_alpha_zero_has_exactly_zero_nie() {
        let fit = model([G, G, B], DagParams::new(0.0, 0.5, 0.3));
        assert_eq!(effects_ccd(&fit, &query()).unwrap().nie, 0.0);
    }

    #[test]
    fn generic_is_deterministic() {
        let fit = model([B, P, G], DagParams::new(0.3, 0.2, 0.1));
        let q = query().with_draws(5000);
        assert_eq!(effects_generic(&fit, &q).unwrap(), effects_generic(&fit, &q).unwrap());
    }

    #[test]
    fn odds_ratios_unity_under_independence() {
        let fit = model([G, B, B], DagParams::default());
        let or = odds_ratios(&fit, &query()).unwrap();
        assert!((or.or_nde - 1.0).abs() < 1e-12 && (or.or_nie - 1.0).abs() < 1e-12);
        let fit = model([G, G, B], DagParams::default());
        let or = odds_ratios(&fit, &query()).unwrap();
        assert!((or.or_nde - 1.0).abs() < 1e-12 && (or.or_nie - 1.0).abs() < 1e-12);
    }

    #[test]
    fn enumeration_matches_generic_for_binary_mediator() {
        for families in [[G, B, B], [B, B, B]] {
            let fit = model(families, DagParams::new(0.6, 0.5, 0.3));
            let exact = odds_ratios_enumerated(&fit, &query()).unwrap();
            let mc = effects_generic(&fit, &query()).unwrap();
            for a in 0..2 {
                for b in 0..2 {
                    let d = (exact.a_table[a][b] - mc.counterfactual_means[a][b]).abs();
                    assert!(d < 4e-3, "{families:?} [{a}][{b}] {} vs {}", exact.a_table[a][b], mc.counterfactual_means[a][b]);
                }
            }
        }
    }

    #[test]
    fn default_exposure_levels() {
        let fit = model([G, G, G], DagParams::default());
        let q = query().resolve(&fit).unwrap();
        let mu = 0.2 + 0.1 * 0.3;
        assert!((q.x0.unwrap() - mu).abs() < 1e-15);
        assert!((q.x1.unwrap() - mu - 0.3).abs() < 1e-15);
        let fit = model([B, G, G], DagParams::default());
        let q = query().resolve(&fit).unwrap();
        assert_eq!((q.x0, q.x1), (Some(0.0), Some(1.0)));
        assert!(query().with_x(1.0, 1.0).resolve(&fit).is_err());
    }
}
