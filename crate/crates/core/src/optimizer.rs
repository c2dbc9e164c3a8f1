//! Nelder–Mead simplex minimization using function values only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    pub tol_f: f64,
    pub tol_x: f64,
    pub max_iter: usize,
    pub init: Vec<f64>,
    /// Axis step of the initial simplex.
    pub initial_step: f64,
    /// Axis step of the restart simplex; `None` disables the restart.
    pub restart_step: Option<f64>,
}

impl Default for SimplexConfig {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            tol_f: 1e-9,
            tol_x: 1e-7,
            max_iter: 2000,
            init: vec![0.0; 3],
            initial_step: 0.25,
            restart_step: Some(0.05),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub argmin: Vec<f64>,
    pub value: f64,
    pub status: OptimStatus,
    pub iterations: usize,
    /// Best value after each iteration of the first run followed by the restart.
    pub trace: Vec<f64>,
}

fn check(point: &[f64], v: f64) -> Result<f64> {
    if v.is_nan() {
        Err(Error::NanObjective { point: point.to_vec() })
    } else {
        Ok(v)
    }
}

/// Minimizes `f` from `config.init`, then restarts once from the result.
pub fn minimize(mut f: impl FnMut(&[f64]) -> f64, config: &SimplexConfig) -> Result<Minimum> {
    validate(config)?;
    let mut trace = Vec::new();
    let first = run(&mut f, &config.init, config.initial_step, config, &mut trace)?;
    let Some(step) = config.restart_step else {
        return Ok(Minimum { trace, ..first });
    };
    let second = run(&mut f, &first.argmin, step, config, &mut trace)?;
    let iterations = first.iterations + second.iterations;
    // The restart simplex contains the previous optimum, so it cannot do worse.
    Ok(Minimum { iterations, trace, ..second })
}

fn validate(c: &SimplexConfig) -> Result<()> {
    let ok = c.reflection > 0.0
        && c.expansion > 1.0
        && c.expansion > c.reflection
        && c.contraction > 0.0
        && c.contraction < 1.0
        && c.shrink > 0.0
        && c.shrink < 1.0
        && c.tol_f > 0.0
        && c.tol_x > 0.0
        && !c.init.is_empty()
        && c.initial_step != 0.0;
    if ok {
        Ok(())
    } else {
        Err(Error::Optimizer("inadmissible simplex configuration".into()))
    }
}

fn run(
    f: &mut impl FnMut(&[f64]) -> f64,
    init: &[f64],
    step: f64,
    c: &SimplexConfig,
    trace: &mut Vec<f64>,
) -> Result<Minimum> {
    let n = init.len();
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(init.to_vec());
    for i in 0..n {
        let mut p = init.to_vec();
        p[i] += step;
        pts.push(p);
    }
    let mut vals = Vec::with_capacity(n + 1);
    for p in &pts {
        let v = check(p, f(p))?;
        if !v.is_finite() {
            return Err(Error::Optimizer(format!("objective is not finite at initial vertex {p:?}")));
        }
        vals.push(v);
    }

    let mut order: Vec<usize> = (0..=n).collect();
    let mut iterations = 0;
    let mut status = OptimStatus::MaxIterations;
    loop {
        // Stable sort keeps the earlier vertex first on ties.
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let (best, worst, second) = (order[0], order[n], order[n - 1]);
        if iterations > 0 {
            trace.push(vals[best]);
        }
        let spread = vals[worst] - vals[best];
        let diameter = pts
            .iter()
            .map(|p| p.iter().zip(&pts[best]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        // A perfectly flat simplex stops at once; otherwise both tolerances must hold.
        if spread == 0.0 || (spread < c.tol_f && diameter < c.tol_x) {
            status = OptimStatus::Converged;
            break;
        }
        if iterations >= c.max_iter {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (acc, v) in centroid.iter_mut().zip(&pts[i]) {
                *acc += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&pts[worst]).map(|(m, w)| m + t * (m - w)).collect()
        };

        let xr = along(c.reflection);
        let fr = check(&xr, f(&xr))?;
        if fr < vals[best] {
            let xe = along(c.reflection * c.expansion);
            let fe = check(&xe, f(&xe))?;
            if fe < fr {
                pts[worst] = xe;
                vals[worst] = fe;
            } else {
                pts[worst] = xr;
                vals[worst] = fr;
            }
            continue;
        }
        if fr < vals[second] {
            pts[worst] = xr;
            vals[worst] = fr;
            continue;
        }
        // Outside contraction when the reflected point beats the worst, inside otherwise.
        let (xc, fc) = if fr < vals[worst] {
            let x = along(c.reflection * c.contraction);
            let v = check(&x, f(&x))?;
            (x, v)
        } else {
            let x = along(-c.contraction);
            let v = check(&x, f(&x))?;
            (x, v)
        };
        if fc < vals[worst].min(fr) {
            pts[worst] = xc;
            vals[worst] = fc;
            continue;
        }
        let anchor = pts[best].clone();
        for &i in &order[1..] {
            let p: Vec<f64> = anchor.iter().zip(&pts[i]).map(|(b, x)| b + c.shrink * (x - b)).collect();
            vals[i] = check(&p, f(&p))?;
            pts[i] = p;
        }
    }
    let best = order[0];
    Ok(Minimum {
        argmin: pts[best].clone(),
        value: vals[best],
        status,
        iterations,
        trace: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convex_quadratic() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2) + x[2] * x[2];
        let m = minimize(f, &SimplexConfig::default()).unwrap();
        assert_eq!(m.status, OptimStatus::Converged);
        for (got, want) in m.argmin.iter().zip([1.0, -2.0, 0.0]) {
            assert!((got - want).abs() < 1e-5, "{:?}", m.argmin);
        }
    }

    #[test]
    fn rosenbrock_three_dimensional() {
        let f = |x: &[f64]| {
            (0..2).map(|i| 100.0 * (x[i + 1] - x[i] * x[i]).powi(2) + (1.0 - x[i]).powi(2)).sum::<f64>()
        };
        let m = minimize(f, &SimplexConfig::default()).unwrap();
        assert_eq!(m.status, OptimStatus::Converged);
        assert!(m.value < 1e-6, "value {}", m.value);
    }

    #[test]
    fn constant_objective_stops_at_init() {
        let m = minimize(|_| 4.5, &SimplexConfig::default()).unwrap();
        assert_eq!(m.argmin, vec![0.0; 3]);
        assert_eq!(m.value, 4.5);
        assert_eq!(m.iterations, 0);
        assert_eq!(m.status, OptimStatus::Converged);
    }

    #[test]
    fn nan_objective_reports_point() {
        let f = |x: &[f64]| if x[0] > 0.1 { f64::NAN } else { x[0] * x[0] };
        match minimize(f, &SimplexConfig::default()) {
            Err(Error::NanObjective { point }) => assert!(point[0] > 0.1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infinite_values_are_rejected_moves() {
        let f = |x: &[f64]| if x[0] < -0.5 { f64::INFINITY } else { (x[0] + 0.4).powi(2) + x[1] * x[1] + x[2] * x[2] };
        let m = minimize(f, &SimplexConfig::default()).unwrap();
        assert!((m.argmin[0] + 0.4).abs() < 1e-4);
    }

    #[test]
    fn max_iterations_status() {
        let cfg = SimplexConfig { max_iter: 3, restart_step: None, ..Default::default() };
        let m = minimize(|x: &[f64]| x.iter().map(|v| (v - 3.0).powi(2)).sum(), &cfg).unwrap();
        assert_eq!(m.status, OptimStatus::MaxIterations);
        assert_eq!(m.iterations, 3);
    }
}
