//! Acceptance criteria. Each test prints one PASS/FAIL line per criterion
//! and then asserts it.

use gsem::copula::{latent_structure, DagParams, LikelihoodPlan, ScenarioCode};
use gsem::estimands::{effects_ccc, effects_ccd, effects_cdc, effects_generic, odds_ratios, EffectQuery};
use gsem::estimation::{fit_with_rho, GsemFit};
use gsem::inference::BootKind;
use gsem::marginals::{Family, LatentCoord, MarginalFit};
use gsem::normal::{mvn_rect, rect2_prob, std_cdf, std_pdf, std_quantile, Rect3};
use gsem::optimizer::SimplexConfig;
use gsem::quadrature::integrate_adaptive;
use gsem::sensitivity::sensitivity_scan;
use gsem::simgen::{generate, replicate_seed, run_study, SimSetting, StudyConfig, StudyRow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn report(criterion: u32, checks: &[(String, bool)]) {
    let pass = checks.iter().all(|(_, ok)| *ok);
    println!("criterion {criterion}: {}", if pass { "PASS" } else { "FAIL" });
    for (msg, ok) in checks {
        println!("  [{}] {msg}", if *ok { "ok" } else { "FAIL" });
    }
    assert!(pass, "criterion {criterion} failed");
}

fn row<'a>(rows: &'a [StudyRow], target: &str) -> &'a StudyRow {
    rows.iter().find(|r| r.target == target).expect("target present")
}

fn model(setting: &SimSetting, dag: DagParams) -> GsemFit {
    SimSetting { dag, ..setting.clone() }.true_fit().unwrap()
}

#[test]
fn criterion_1_parameter_recovery() {
    // Reference MSE (×1e-3) at n = 1000 for alpha, gamma, beta.
    let table = [
        (ScenarioCode::CCC, [0.98, 0.98, 1.11]),
        (ScenarioCode::CDC, [1.68, 1.32, 3.43]),
        (ScenarioCode::CCD, [1.65, 2.57, 1.71]),
    ];
    let cfg = StudyConfig { n_sims: 200, ..Default::default() };
    let mut checks = Vec::new();
    for (scenario, mse_ref) in table {
        let s = SimSetting::recovery(scenario, 1000, 101).unwrap();
        let res = run_study(&[s], &cfg).unwrap().remove(0);
        for (target, reference) in ["alpha", "gamma", "beta"].into_iter().zip(mse_ref) {
            let r = row(&res.rows, target);
            let limit = 2.0 * reference * 1e-3;
            checks.push((
                format!(
                    "{scenario} {target}: bias {:+.5} (limit 0.02), MSE {:.3e} (limit {limit:.3e}), {} sims",
                    r.bias, r.mse, r.n_sims
                ),
                r.bias.abs() <= 0.02 && r.mse <= limit && r.n_sims == 200,
            ));
        }
    }
    report(1, &checks);
}

#[test]
fn criterion_2_bootstrap_coverage() {
    let mut checks = Vec::new();
    for scenario in [ScenarioCode::CCC, ScenarioCode::CDC, ScenarioCode::CCD] {
        let cfg = StudyConfig {
            n_sims: 200,
            b_boot: 200,
            boot_kinds: vec![BootKind::Parametric],
            mc_draws: 20_000,
            ..Default::default()
        };
        let s = SimSetting::recovery(scenario, 500, 202).unwrap();
        let res = run_study(&[s], &cfg).unwrap().remove(0);
        for target in ["nde", "nie"] {
            let c = row(&res.rows, target).coverage_pb.unwrap();
            checks.push((
                format!("{scenario} {target}: parametric coverage {:.1}% (band 91-98%)", 100.0 * c),
                (0.91..=0.98).contains(&c),
            ));
        }
    }
    report(2, &checks);
}

fn dag_grid() -> Vec<DagParams> {
    let levels = [-0.5, 0.1, 0.6];
    let mut out = Vec::new();
    for a in levels {
        for b in levels {
            for g in levels {
                out.push(DagParams::new(a, b, g));
            }
        }
    }
    out
}

/// Counterfactual simulation of P{Y(x_a, M(x_b)) = 1} for a CCD model:
/// draws the latent mediator and outcome errors directly. Returns the four
/// means plus per-draw NDE and NIE standard errors.
fn ccd_oracle(f: &GsemFit, q: &EffectQuery, draws: usize, seed: u64) -> ([[f64; 2]; 2], f64, f64) {
    let DagParams { alpha, beta, gamma } = f.dag;
    let tau_y = ((gamma + alpha * beta).powi(2) + beta * beta + 1.0).sqrt();
    let wx = f.row(0, &q.w);
    let z = |x: f64| (x - f.fit_x.mean(wx)) / f.fit_x.sd();
    let za = [z(q.x0.unwrap()), z(q.x1.unwrap())];
    let eta_y = f.fit_y.linear_predictor(f.row(2, &q.w));
    let p_y = 1.0 / (1.0 + (-eta_y).exp());
    let cut = std_quantile(1.0 - p_y).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = [[0.0; 2]; 2];
    let (mut nde, mut nde2, mut nie, mut nie2) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..draws {
        let em: f64 = rng.sample(StandardNormal);
        let ey: f64 = rng.sample(StandardNormal);
        let mut y = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let zm = alpha * za[b] + em;
                let zy = gamma * za[a] + beta * zm + ey;
                y[a][b] = (zy / tau_y > cut) as u8 as f64;
                sum[a][b] += y[a][b];
            }
        }
        let d = y[1][0] - y[0][0];
        let i = y[1][1] - y[1][0];
        nde += d;
        nde2 += d * d;
        nie += i;
        nie2 += i * i;
    }
    let n = draws as f64;
    let se = |s: f64, s2: f64| ((s2 / n - (s / n).powi(2)) / n).sqrt();
    (sum.map(|r| r.map(|v| v / n)), se(nde, nde2), se(nie, nie2))
}

#[test]
fn criterion_3_closed_forms_match_oracles() {
    let draws = 1_000_000;
    let mut checks = Vec::new();
    for (scenario, closed) in [
        (ScenarioCode::CCC, effects_ccc as fn(&GsemFit, &EffectQuery) -> gsem::Result<_>),
        (ScenarioCode::CDC, effects_cdc),
    ] {
        let setting = SimSetting::recovery(scenario, 1000, 0).unwrap();
        let q = EffectQuery::new(setting.mean_profile()).with_x(0.0, 1.0).with_draws(draws).with_seed(303);
        let mut worst: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        let mut ok = true;
        for dag in dag_grid() {
            let f = model(&setting, dag);
            let c = closed(&f, &q).unwrap();
            let g = effects_generic(&f, &q).unwrap();
            let se = g.mc_se.unwrap();
            for (cv, gv, s) in [(c.nde, g.nde, se.nde), (c.nie, g.nie, se.nie)] {
                ok &= (cv - gv).abs() <= 3.0 * s + 1e-12;
                max_abs = max_abs.max((cv - gv).abs());
                if s > 0.0 {
                    worst = worst.max((cv - gv).abs() / s);
                }
            }
        }
        checks.push((format!("{scenario} closed form vs generic engine, 27 points: max |diff| {max_abs:.1e}, max |diff|/SE {worst:.2}"), ok));
    }

    let setting = SimSetting::recovery(ScenarioCode::CCD, 1000, 0).unwrap();
    let q = EffectQuery::new(setting.mean_profile()).with_x(0.0, 1.0).with_draws(draws).with_seed(304);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for (k, dag) in dag_grid().into_iter().enumerate() {
        let f = model(&setting, dag);
        let e = effects_ccd(&f, &q).unwrap();
        let se = e.mc_se.unwrap();
        let (means, se_nde, se_nie) = ccd_oracle(&f, &q, draws, 9000 + k as u64);
        let o_nde = means[1][0] - means[0][0];
        let o_nie = means[1][1] - means[1][0];
        for (v, o, s) in [(e.nde, o_nde, (se.nde.powi(2) + se_nde.powi(2)).sqrt()), (e.nie, o_nie, (se.nie.powi(2) + se_nie.powi(2)).sqrt())] {
            ok &= (v - o).abs() <= 3.0 * s + 1e-12;
            if s > 0.0 {
                worst = worst.max((v - o).abs() / s);
            }
        }
    }
    checks.push((format!("CCD estimator vs counterfactual simulation, 27 points: max |diff|/SE {worst:.2}"), ok));
    report(3, &checks);
}

#[test]
fn criterion_4_mediation_leakage() {
    let setting = SimSetting::recovery(ScenarioCode::CDC, 1000, 0).unwrap();
    let q = EffectQuery::new(setting.mean_profile()).with_x(0.0, 1.0).with_draws(1_000_000).with_seed(404);
    let mut checks = Vec::new();

    let f = model(&setting, DagParams::new(0.5, 0.75, 0.0));
    let c = effects_cdc(&f, &q).unwrap();
    let g = effects_generic(&f, &q).unwrap();
    let se = g.mc_se.unwrap().nde;
    checks.push((
        format!("gamma=0, alpha=0.5, beta=0.75: closed NDE {:.5}, MC NDE {:.5}, MC SE {se:.2e}", c.nde, g.nde),
        c.nde.abs() > 5.0 * se && g.nde.abs() > 5.0 * se,
    ));
    for dag in [DagParams::new(0.0, 0.75, 0.0), DagParams::new(0.5, 0.0, 0.0)] {
        let f = model(&setting, dag);
        let c = effects_cdc(&f, &q).unwrap();
        let g = effects_generic(&f, &q).unwrap();
        let se = g.mc_se.unwrap().nde;
        checks.push((
            format!(
                "gamma=0, alpha={}, beta={}: closed NDE {:.2e}, MC NDE {:.2e}, MC SE {se:.2e}",
                dag.alpha, dag.beta, c.nde, g.nde
            ),
            c.nde.abs() <= 1e-12 && g.nde.abs() <= 3.0 * se + 1e-12,
        ));
    }
    report(4, &checks);
}

#[test]
fn criterion_5_odds_ratios() {
    let mut checks = Vec::new();
    let s = SimSetting::odds_ratio(true, 2000, 505);
    let q = EffectQuery::new(s.mean_profile()).with_x(0.0, 1.0).with_draws(4_000_000).with_seed(505);
    let or = odds_ratios(&s.true_fit().unwrap(), &q).unwrap();
    for (name, got, want) in [("OR_NDE", or.or_nde, 1.704), ("OR_NIE", or.or_nie, 1.762)] {
        let rel = (got - want).abs() / want;
        checks.push((format!("model-implied {name} {got:.4} vs {want} (relative gap {:.1}%, limit 5%)", 100.0 * rel), rel <= 0.05));
    }
    let cfg = StudyConfig { n_sims: 200, ..Default::default() };
    let res = run_study(&[s], &cfg).unwrap().remove(0);
    for (target, bias_ref, mse_ref) in [("or_nde", 0.022, 0.091), ("or_nie", 0.017, 0.027)] {
        let r = row(&res.rows, target);
        checks.push((
            format!(
                "n=2000 {target}: bias {:+.4} (limit {:.3}), MSE {:.4} (limit {:.3})",
                r.bias,
                2.0 * bias_ref,
                r.mse,
                2.0 * mse_ref
            ),
            r.bias.abs() <= 2.0 * bias_ref && r.mse <= 2.0 * mse_ref,
        ));
    }
    report(5, &checks);
}

fn bernoulli(beta: Vec<f64>) -> MarginalFit {
    MarginalFit { family: Family::BernoulliLogit, coefficients: beta, dispersion: 1.0, n_obs: 0, iterations: 0 }
}

#[test]
fn criterion_6_likelihood_normalization() {
    let mut checks = Vec::new();
    let dag = DagParams::new(0.6, -0.4, 0.3);
    let ls = latent_structure(&dag);
    let margins = [bernoulli(vec![0.3]), bernoulli(vec![-0.8]), bernoulli(vec![1.1])];
    let w = [1.0];
    let coord = |k: usize, v: f64| margins[k].latent_coord(&w, v).unwrap();
    let ddd = LikelihoodPlan::new(&ls.corr, ScenarioCode::DDD).unwrap();
    let mut total = 0.0;
    let mut max_gap: f64 = 0.0;
    for x in [0.0, 1.0] {
        for m in [0.0, 1.0] {
            let mut pair = 0.0;
            for y in [0.0, 1.0] {
                let p = ddd.eval(&[coord(0, x), coord(1, m), coord(2, y)]).unwrap().value.exp();
                total += p;
                pair += p;
            }
            let (LatentCoord::Interval { l: lx, u: ux }, LatentCoord::Interval { l: lm, u: um }) = (coord(0, x), coord(1, m)) else {
                unreachable!()
            };
            max_gap = max_gap.max((pair - rect2_prob([lx, lm], [ux, um], ls.corr[0][1])).abs());
        }
    }
    checks.push((format!("DDD mass over 8 outcomes {total:.15}"), (total - 1.0).abs() <= 1e-8));
    checks.push((format!("DDD summed over Y vs bivariate (X, M) mass: max gap {max_gap:.2e}"), max_gap <= 1e-8));

    // CDC on the latent scale: integrating over the exposure leaves the
    // (M, Y) mixed density φ(z_y)·P(Z_m ∈ I | z_y).
    let cdc = LikelihoodPlan::new(&ls.corr, ScenarioCode::CDC).unwrap();
    let mut gap: f64 = 0.0;
    for (l, u, zy) in [(f64::NEG_INFINITY, -0.3, 0.4), (-0.3, f64::INFINITY, -1.2), (-0.5, 0.7, 0.0)] {
        let joint = integrate_adaptive(
            |zx| cdc.eval(&[LatentCoord::Point(zx), LatentCoord::Interval { l, u }, LatentCoord::Point(zy)]).unwrap().value.exp(),
            -12.0,
            12.0,
            1e-13,
        );
        let r = ls.corr[1][2];
        let s = (1.0 - r * r).sqrt();
        let cond = std_cdf((u - r * zy) / s) - std_cdf((l - r * zy) / s);
        gap = gap.max((joint - std_pdf(zy) * cond).abs());
    }
    checks.push((format!("CDC integrated over X vs (M, Y) density: max gap {gap:.2e}"), gap <= 1e-8));

    // CCD summed over Y leaves the bivariate normal density of (X, M).
    let ccd = LikelihoodPlan::new(&ls.corr, ScenarioCode::CCD).unwrap();
    let mut gap: f64 = 0.0;
    for (zx, zm) in [(0.2, -0.7), (-1.5, 1.1), (2.0, 0.3)] {
        let cut = 0.25;
        let sum: f64 = [(f64::NEG_INFINITY, cut), (cut, f64::INFINITY)]
            .iter()
            .map(|&(l, u)| ccd.eval(&[LatentCoord::Point(zx), LatentCoord::Point(zm), LatentCoord::Interval { l, u }]).unwrap().value.exp())
            .sum();
        let r = ls.corr[0][1];
        let det = 1.0 - r * r;
        let dens = (-(zx * zx - 2.0 * r * zx * zm + zm * zm) / (2.0 * det)).exp() / (2.0 * std::f64::consts::PI * det.sqrt());
        gap = gap.max((sum - dens).abs());
    }
    checks.push((format!("CCD summed over Y vs bivariate (X, M) density: max gap {gap:.2e}"), gap <= 1e-8));
    report(6, &checks);
}

#[test]
fn criterion_7_sensitivity() {
    let mut checks = Vec::new();
    let cfg = SimplexConfig::default();
    for scenario in [ScenarioCode::CCC, ScenarioCode::CDC] {
        let base = SimSetting { error_rho: 0.3, ..SimSetting::recovery(scenario, 1000, 707).unwrap() };
        let spec = base.true_fit().unwrap().spec;
        let q = EffectQuery::new(base.mean_profile()).with_x(0.0, 1.0);

        let data = generate(&base).unwrap();
        let scan = sensitivity_scan(&data, &spec, &q, &[0.0, 0.3], &cfg, None).unwrap();
        let baseline = fit_with_rho(&data, &spec, &cfg, 0.0).unwrap();
        let e0 = gsem::estimands::estimate_effects(&baseline, &q).unwrap();
        let s0 = scan.at(0.0).unwrap().effects.as_ref().unwrap();
        let gap = (s0.nde - e0.nde).abs().max((s0.nie - e0.nie).abs());
        checks.push((format!("{scenario} scan at rho=0 vs baseline fit: max effect gap {gap:.1e}"), gap <= 1e-10));

        let reps = 100;
        let mut est = vec![[0.0; 3]; 0];
        let mut naive = vec![[0.0; 3]; 0];
        for r in 0..reps {
            let s = SimSetting { seed: replicate_seed(base.seed, r), ..base.clone() };
            let d = generate(&s).unwrap();
            est.push(fit_with_rho(&d, &spec, &cfg, 0.3).unwrap().dag.to_array());
            naive.push(fit_with_rho(&d, &spec, &cfg, 0.0).unwrap().dag.to_array());
        }
        let truth = base.dag.to_array();
        for (k, name) in ["alpha", "beta", "gamma"].iter().enumerate() {
            let col: Vec<f64> = est.iter().map(|e| e[k]).collect();
            let mean = col.iter().sum::<f64>() / reps as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
            let se = sd / (reps as f64).sqrt();
            let naive_mean = naive.iter().map(|e| e[k]).sum::<f64>() / reps as f64;
            checks.push((
                format!(
                    "{scenario} rho=0.3 data, {name}: true {:.3}, mean at rho=0.3 {mean:.4} (SE {se:.4}), mean at rho=0 {naive_mean:.4}",
                    truth[k]
                ),
                (mean - truth[k]).abs() <= 3.0 * se,
            ));
        }
    }
    report(7, &checks);
}

fn random_corr(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let a: Vec<[f64; 3]> = (0..3).map(|_| [0; 3].map(|_| rng.sample(StandardNormal))).collect();
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * a[j][k]).sum::<f64>() + if i == j { 0.3 } else { 0.0 };
        }
    }
    let d = [0, 1, 2].map(|i| c[i][i].sqrt());
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] /= d[i] * d[j];
        }
    }
    c
}

#[test]
fn criterion_8_kernel_accuracy() {
    let mut checks = Vec::new();
    let mut worst: f64 = 0.0;
    for i in 1..10_000 {
        let p = i as f64 / 10_000.0;
        worst = worst.max((std_cdf(std_quantile(p).unwrap()) - p).abs());
    }
    for k in 1..=300 {
        let p = 10f64.powf(-(k as f64));
        worst = worst.max(((std_cdf(std_quantile(p).unwrap()) - p) / p).abs());
    }
    let mut z_worst: f64 = 0.0;
    for i in -500..=500 {
        let z = i as f64 / 100.0;
        z_worst = z_worst.max((std_quantile(std_cdf(z)).unwrap() - z).abs());
    }
    checks.push((format!("p round trip max error {worst:.1e}; z round trip on [-5, 5] max error {z_worst:.1e}"), worst <= 1e-10 && z_worst <= 1e-10));

    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let draws = 10_000_000usize;
    let mut max_z: f64 = 0.0;
    let mut ok = true;
    for _ in 0..10 {
        let c = random_corr(&mut rng);
        let lower = [f64::NEG_INFINITY; 3];
        let upper = [0.0; 3];
        let p = mvn_rect(&Rect3::new(lower, upper, c)).unwrap();
        let l = [
            [c[0][0].sqrt(), 0.0, 0.0],
            [c[1][0], (1.0 - c[1][0] * c[1][0]).sqrt(), 0.0],
            [0.0; 3],
        ];
        let l20 = c[2][0];
        let l21 = (c[2][1] - l20 * l[1][0]) / l[1][1];
        let l22 = (1.0 - l20 * l20 - l21 * l21).sqrt();
        let mut hits = 0usize;
        for _ in 0..draws {
            let e: [f64; 3] = [0; 3].map(|_| rng.sample(StandardNormal));
            let z0 = e[0];
            let z1 = l[1][0] * e[0] + l[1][1] * e[1];
            let z2 = l20 * e[0] + l21 * e[1] + l22 * e[2];
            hits += (z0 <= 0.0 && z1 <= 0.0 && z2 <= 0.0) as usize;
        }
        let mc = hits as f64 / draws as f64;
        let se = (mc * (1.0 - mc) / draws as f64).sqrt();
        let z = (p - mc).abs() / se;
        max_z = max_z.max(z);
        ok &= z <= 3.0;
    }
    checks.push((format!("orthant probabilities of 10 random correlation matrices vs 1e7 draws: max |diff|/SE {max_z:.2}"), ok));
    report(8, &checks);
}
