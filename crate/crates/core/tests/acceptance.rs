//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

mod common;

use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use conereg::data::{compute_returns, load_prices};
use conereg::portfolio::{
    self, market_neutral, max_return, one_over_n, realized_series, robust_max_return, stdev,
    EllipsoidalUncertainty, PortfolioConstraints,
};
use conereg::prediction::{lagged_design, ma_design};
use conereg::regression::{lasso, lsq, power_three_halves, ridge, RegressionProblem, Regulariser};
use conereg::solver::{residual_report, solve, SolverConfig, Status};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn bundled() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/data.csv")
}

fn solver_correctness() -> Outcome {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    let mut slowest = Duration::ZERO;
    for k in 0..100 {
        let g = feasible_socp(&mut r, 200, 100);
        let start = Instant::now();
        let out = solve(&g.problem, &cfg()).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        ensure(out.status == Status::Optimal, || {
            format!("instance {k}: {}", out.status)
        })?;
        let rep = residual_report(&g.problem, &out);
        worst = worst
            .max(rep.gap)
            .max(rep.primal_residual)
            .max(rep.dual_residual);
        ensure(worst <= 1e-7, || format!("instance {k}: {rep:?}"))?;
    }
    ensure(slowest < Duration::from_secs(1), || {
        format!("slowest solve {slowest:?}")
    })?;
    let mut cert = 0.0f64;
    for k in 0..20 {
        let p = primal_infeasible_socp(&mut r, 200, 100);
        let out = solve(&p, &cfg()).map_err(|e| e.to_string())?;
        ensure(out.status == Status::PrimalInfeasible, || {
            format!("infeasible {k}: {}", out.status)
        })?;
        let res = dense_a(&p).transpose() * DVector::from_column_slice(&out.y)
            + DVector::from_column_slice(&out.s);
        cert = cert.max(res.norm());
        ensure(
            res.norm() <= 1e-7
                && p.cone().dual_contains(&out.s, 1e-7)
                && out.dual_objective(&p) > 0.0,
            || format!("infeasible {k}: residual {:e}", res.norm()),
        )?;

        let p = dual_infeasible_socp(&mut r, 200, 100);
        let out = solve(&p, &cfg()).map_err(|e| e.to_string())?;
        ensure(out.status == Status::DualInfeasible, || {
            format!("unbounded {k}: {}", out.status)
        })?;
        let ax = dense_a(&p) * DVector::from_column_slice(&out.x);
        cert = cert.max(ax.norm());
        ensure(
            ax.norm() <= 1e-7 && in_cone(p.cone(), &out.x, 1e-7) && out.primal_objective(&p) < 0.0,
            || format!("unbounded {k}: residual {:e}", ax.norm()),
        )?;
    }
    Ok(format!(
        "100 optimal (worst residual {worst:.1e}, slowest {:.0} ms), 40 certificates (worst {cert:.1e})",
        slowest.as_secs_f64() * 1e3
    ))
}

fn lsq_oracle() -> Outcome {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for k in 0..50 {
        let n = r.gen_range(30..=100);
        let m = r.gen_range(4..=8);
        let p = RegressionProblem::new(random_matrix(&mut r, n, m), random_vector(&mut r, n))
            .map_err(|e| e.to_string())?;
        let f = lsq(&p, &cfg()).map_err(|e| e.to_string())?;
        let err = (&f.weights - qr_least_squares(p.x(), p.y())).amax();
        worst = worst.max(err);
        ensure(err <= 1e-6, || format!("instance {k} ({n}x{m}): {err:e}"))?;
    }
    Ok(format!("50 instances, max |w - w_qr| = {worst:.1e}"))
}

fn ridge_oracle() -> Outcome {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for k in 0..5 {
        let (n, m) = (40, 6);
        let p = RegressionProblem::new(random_matrix(&mut r, n, m), random_vector(&mut r, n))
            .map_err(|e| e.to_string())?;
        let (gamma, w0) = if k == 0 {
            (DMatrix::identity(m, m), DVector::zeros(m))
        } else {
            (
                DMatrix::identity(m, m) + random_matrix(&mut r, m, m) * 0.2,
                random_vector(&mut r, m),
            )
        };
        let gtg = gamma.transpose() * &gamma;
        for lambda in [0.01, 0.1, 1.0, 10.0] {
            let reg = Regulariser::ridge(lambda)
                .with_gamma(gamma.clone())
                .with_anchor(w0.clone());
            let f = ridge(&p, &reg, &cfg()).map_err(|e| e.to_string())?;
            let lhs = p.x().transpose() * p.x() + &gtg * lambda;
            let rhs = p.x().transpose() * p.y() + &gtg * &w0 * lambda;
            let oracle = lhs
                .cholesky()
                .ok_or("oracle not positive definite")?
                .solve(&rhs);
            let err = (&f.weights - oracle).amax();
            worst = worst.max(err);
            ensure(err <= 1e-6, || {
                format!("instance {k}, lambda {lambda}: {err:e}")
            })?;
        }
    }
    Ok(format!("5 instances x 4 lambdas, max error {worst:.1e}"))
}

fn lasso_oracle() -> Outcome {
    let mut r = rng(4);
    let mut worst = 0.0f64;
    let grid = [0.1, 1.0, 4.0, 10.0, 25.0, 60.0];
    for k in 0..20 {
        let n = r.gen_range(30..=60);
        let m = r.gen_range(4..=8);
        let p = RegressionProblem::new(random_matrix(&mut r, n, m), random_vector(&mut r, n))
            .map_err(|e| e.to_string())?;
        let lambda = r.gen_range(0.1..5.0);
        let f = lasso(&p, &Regulariser::lasso(lambda), &cfg()).map_err(|e| e.to_string())?;
        let w = lasso_coordinate_descent(p.x(), p.y(), lambda, 1e-12);
        let oracle = (p.x() * &w - p.y()).norm_squared() + lambda * w.abs().sum();
        let err = (f.objective - oracle).abs();
        worst = worst.max(err);
        ensure(err <= 1e-4, || {
            format!("instance {k}: objective {} vs {oracle}", f.objective)
        })?;

        let mut prev = usize::MAX;
        for l in grid {
            let f = lasso(&p, &Regulariser::lasso(l), &cfg()).map_err(|e| e.to_string())?;
            let support = f.weights.iter().filter(|w| w.abs() > 1e-6).count();
            ensure(support <= prev, || {
                format!("instance {k}: support grew to {support} at lambda {l}")
            })?;
            prev = support;
        }
    }
    Ok(format!(
        "20 instances, max objective gap {worst:.1e}, support monotone on the grid"
    ))
}

fn power_oracle() -> Outcome {
    let mut r = rng(5);
    let mut worst = 0.0f64;
    for k in 0..5 {
        let n = 20;
        let x = random_matrix(&mut r, n, 1);
        let y = random_vector(&mut r, n);
        let lambda = r.gen_range(0.5..5.0);
        let p = RegressionProblem::new(x.clone(), y.clone()).map_err(|e| e.to_string())?;
        let f = power_three_halves(&p, &Regulariser::power_three_halves(lambda), &cfg())
            .map_err(|e| e.to_string())?;
        let col = x.column(0).into_owned();
        let (aa, bb, cc) = (col.norm_squared(), col.dot(&y), y.norm_squared());
        let g = |w: f64| aa * w * w - 2.0 * bb * w + cc + lambda * w.abs().powf(1.5);
        let bound = col.dot(&y).abs() / col.norm_squared() + 1.0;
        let (_, best) = scalar_grid_min(g, -bound, bound, 1e-6);
        let err = (f.objective - best).abs();
        worst = worst.max(err);
        ensure(err <= 1e-4, || {
            format!("instance {k}: {} vs grid {best}", f.objective)
        })?;
    }
    let mut tight = 0.0f64;
    for k in 0..5 {
        let p = RegressionProblem::new(random_matrix(&mut r, 30, 4), random_vector(&mut r, 30))
            .map_err(|e| e.to_string())?;
        let f = power_three_halves(&p, &Regulariser::power_three_halves(1.0 + k as f64), &cfg())
            .map_err(|e| e.to_string())?;
        let pc = f.power_cones.ok_or("power cone levels missing")?;
        for i in 0..4 {
            let err = (pc.z[i] - pc.t[i].powf(1.5)).abs();
            tight = tight.max(err);
            ensure(err <= 1e-5, || {
                format!("instance {k}, coefficient {i}: z - t^1.5 = {err:e}")
            })?;
        }
    }
    Ok(format!(
        "grid gap {worst:.1e} on 5 scalar instances, cone slack {tight:.1e}"
    ))
}

fn robust_formula() -> Outcome {
    let mut r = rng(6);
    let mut worst_attain = 0.0f64;
    for k in 0..20 {
        let m = r.gen_range(3..=6);
        let x = random_matrix(&mut r, 60, m) * 0.01;
        let mu = random_vector(&mut r, m) * 0.001;
        let b = random_matrix(&mut r, m, m);
        let a = &b * b.transpose() * (0.0005 / m as f64);
        let a = (&a + a.transpose()) * 0.5;
        let unc = EllipsoidalUncertainty::new(mu.clone(), a.clone()).map_err(|e| e.to_string())?;
        let sigma2 = 2.0 * (&x * one_over_n(m)).norm_squared();
        let sol = robust_max_return(&x, &unc, sigma2, &PortfolioConstraints::default(), &cfg())
            .map_err(|e| e.to_string())?;
        let w = &sol.weights;
        let bound = w.dot(&mu) - (&a * w).norm();
        // A is symmetric, so wᵀ(Au + μ⁰) = (Aw)ᵀu + wᵀμ⁰
        let aw = &a * w;
        let base = w.dot(&mu);
        let mut sampled = f64::INFINITY;
        let mut u = vec![0.0; m];
        for _ in 0..100_000 {
            u.iter_mut().for_each(|v| *v = normal(&mut r));
            let scale =
                r.gen::<f64>().powf(1.0 / m as f64) / u.iter().map(|v| v * v).sum::<f64>().sqrt();
            let value = base + scale * aw.iter().zip(&u).map(|(p, q)| p * q).sum::<f64>();
            sampled = sampled.min(value);
        }
        ensure(bound <= sampled + 1e-12, || {
            format!("instance {k}: bound {bound} above sample {sampled}")
        })?;
        let at_star = if aw.norm() > 0.0 {
            w.dot(&(&a * (-&aw / aw.norm()) + &mu))
        } else {
            w.dot(&mu)
        };
        let err = (at_star - bound).abs().max((sampled - bound).abs());
        worst_attain = worst_attain.max(err);
        ensure(err <= 1e-3, || {
            format!("instance {k}: attainment error {err:e}")
        })?;
    }
    Ok(format!(
        "20 instances x 1e5 samples, max attainment error {worst_attain:.1e}"
    ))
}

fn bundled_reproduction() -> Outcome {
    let frame = load_prices(&bundled()).map_err(|e| e.to_string())?;
    let returns = compute_returns(&frame).map_err(|e| e.to_string())?;
    let names: Vec<String> = ["GOOG", "T", "AAPL", "IBM", "GS"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let stocks = returns.select(&names).map_err(|e| e.to_string())?;
    let x = stocks.values();
    let index = returns.column("^GSPC").ok_or("index column missing")?;

    let minvar = portfolio::min_variance(x, &PortfolioConstraints::default(), &cfg())
        .map_err(|e| e.to_string())?;
    let w = &minvar.weights;
    let argmax = w.imax();
    ensure((w.sum() - 1.0).abs() <= 1e-8, || {
        format!("weights sum to {}", w.sum())
    })?;
    ensure(w.iter().all(|&v| v >= -1e-8), || {
        format!("negative weight in {w}")
    })?;
    ensure(names[argmax] == "T", || {
        format!("largest weight on {}", names[argmax])
    })?;
    ensure(w[4] <= 0.02, || format!("GS weight {}", w[4]))?;

    let tracker = portfolio::track_index(x, &index, &PortfolioConstraints::default(), &cfg())
        .map_err(|e| e.to_string())?;
    let sd = |w: &DVector<f64>| stdev(realized_series(x, w).as_slice()).unwrap_or(f64::NAN);
    let (s_min, s_track, s_eq) = (sd(w), sd(&tracker.weights), sd(&one_over_n(5)));
    ensure(s_min < s_track && s_track <= s_eq, || {
        format!("std ordering violated: min {s_min:.4}, tracking {s_track:.4}, 1/N {s_eq:.4}")
    })?;

    let start = Instant::now();
    for cmd in ["minvar", "track", "equal"] {
        let out = Command::new(env!("CARGO_BIN_EXE_conereg"))
            .args([cmd, "--data", bundled().to_str().unwrap(), "--json"])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || {
            format!("{cmd} exited with {}", out.status)
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || {
        format!("CLI runs took {elapsed:?}")
    })?;

    let fmt = |w: &DVector<f64>| {
        names
            .iter()
            .zip(w.iter())
            .map(|(n, v)| format!("{n} {v:.2}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    Ok(format!(
        "min variance [{}]; std min {s_min:.4} < tracking {s_track:.4} <= 1/N {s_eq:.4}; CLI {:.0} ms",
        fmt(w),
        elapsed.as_secs_f64() * 1e3
    ))
}

fn leverage() -> Outcome {
    let mut r = rng(8);
    let (mut budget_err, mut gross_max, mut neutral_err, mut neutral_gross) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for k in 0..20 {
        let m = r.gen_range(4..=8);
        let x = random_matrix(&mut r, 120, m) * 0.01;
        let mu = random_vector(&mut r, m) * 0.001;
        let sigma2 = 3.0 * (&x * one_over_n(m)).norm_squared();
        let sol = max_return(
            &x,
            &mu,
            sigma2,
            &PortfolioConstraints::leveraged(1.6),
            &cfg(),
        )
        .map_err(|e| format!("130/30 instance {k}: {e}"))?;
        budget_err = budget_err.max((sol.weights.sum() - 1.0).abs());
        gross_max = gross_max.max(sol.weights.abs().sum());

        let pair = x.column(0) - x.column(1);
        let sol = market_neutral(&x, &mu, 2.0 * pair.norm_squared(), &cfg())
            .map_err(|e| format!("market-neutral instance {k}: {e}"))?;
        neutral_err = neutral_err.max(sol.weights.sum().abs());
        neutral_gross = neutral_gross.max(sol.weights.abs().sum());
    }
    ensure(budget_err <= 1e-8 && gross_max <= 1.6 + 1e-6, || {
        format!("130/30: |sum w - 1| {budget_err:e}, gross {gross_max}")
    })?;
    ensure(neutral_err <= 1e-8 && neutral_gross <= 2.0 + 1e-6, || {
        format!("market neutral: |sum w| {neutral_err:e}, gross {neutral_gross}")
    })?;
    Ok(format!(
        "130/30 |sum-1| {budget_err:.1e}, gross {gross_max:.6}; neutral |sum| {neutral_err:.1e}, gross {neutral_gross:.6}"
    ))
}

fn prediction_recovery() -> Outcome {
    let mut r = rng(9);
    let mut series = Vec::with_capacity(10_000);
    let mut prev = 0.0;
    for _ in 0..10_000 {
        prev = 0.5 * prev + normal(&mut r);
        series.push(prev);
    }
    let d = lagged_design(&series, 1).map_err(|e| e.to_string())?;
    let p = RegressionProblem::new(d.x().clone(), d.y().clone()).map_err(|e| e.to_string())?;
    let phi = lsq(&p, &cfg()).map_err(|e| e.to_string())?.weights[0];
    ensure((phi - 0.5).abs() <= 0.1, || {
        format!("estimated coefficient {phi}")
    })?;

    for draw in 0..1000 {
        let t = r.gen_range(2..120);
        let s: Vec<f64> = (0..t).map(|_| normal(&mut r)).collect();
        let p = r.gen_range(1..t);
        let d = lagged_design(&s, p).map_err(|e| e.to_string())?;
        for k in 0..d.x().nrows() {
            let target = d.target_indices()[k];
            ensure(
                d.feature_indices(k).end <= target && d.y()[k] == s[target],
                || format!("lag draw {draw}, row {k}"),
            )?;
        }
        let mut windows: Vec<usize> = Vec::new();
        let q = r.gen_range(1..=3usize).min(t - 1);
        while windows.len() < q {
            let w = r.gen_range(1..t);
            if !windows.contains(&w) {
                windows.push(w);
            }
        }
        let d = ma_design(&s, &windows).map_err(|e| e.to_string())?;
        for k in 0..d.x().nrows() {
            let target = d.target_indices()[k];
            for j in 0..windows.len() {
                ensure(d.feature_indices(k, j).end <= target, || {
                    format!("ma draw {draw}, row {k}")
                })?;
            }
        }
    }
    Ok(format!(
        "AR(1) estimate {phi:.4}; 1000 look-ahead draws clean"
    ))
}

fn determinism() -> Outcome {
    let run = |cmd: &str| {
        Command::new(env!("CARGO_BIN_EXE_conereg"))
            .args([cmd, "--data", bundled().to_str().unwrap(), "--json"])
            .output()
            .map(|o| o.stdout)
            .map_err(|e| e.to_string())
    };
    for cmd in ["minvar", "track"] {
        let (a, b) = (run(cmd)?, run(cmd)?);
        ensure(!a.is_empty() && a == b, || format!("{cmd} reports differ"))?;
    }
    Ok("minvar and track JSON reports byte-identical across runs".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 solver correctness", solver_correctness),
        ("2 least squares vs QR", lsq_oracle),
        ("3 ridge vs normal equations", ridge_oracle),
        ("4 lasso vs coordinate descent", lasso_oracle),
        ("5 3/2 penalty vs grid", power_oracle),
        ("6 robust worst case", robust_formula),
        ("7 bundled data reproduction", bundled_reproduction),
        ("8 leverage", leverage),
        ("9 prediction recovery", prediction_recovery),
        ("10 end-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL criterion {name}: {reason}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
