mod common;

use common::{
    lasso_coordinate_descent, qr_least_squares, random_matrix, random_vector, rng, scalar_grid_min,
};
use conereg::regression::{
    elastic_net, fit, lasso, lsq, power_three_halves, ridge, ConstraintSet, RegressionError,
    RegressionProblem, Regulariser,
};
use conereg::solver::SolverConfig;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn random_problem(seed: u64, n: usize, m: usize) -> RegressionProblem {
    let mut r = rng(seed);
    RegressionProblem::new(random_matrix(&mut r, n, m), random_vector(&mut r, n)).unwrap()
}

fn ridge_oracle(
    p: &RegressionProblem,
    lambda: f64,
    gamma: &DMatrix<f64>,
    w0: &DVector<f64>,
) -> DVector<f64> {
    let gtg = gamma.transpose() * gamma;
    let lhs = p.x().transpose() * p.x() + &gtg * lambda;
    let rhs = p.x().transpose() * p.y() + &gtg * w0 * lambda;
    lhs.cholesky().expect("positive definite").solve(&rhs)
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.amax()
}

#[test]
fn unconstrained_lsq_matches_qr() {
    let p = random_problem(10, 30, 4);
    let f = lsq(&p, &cfg()).unwrap();
    assert!(max_abs(&(&f.weights - qr_least_squares(p.x(), p.y()))) <= 1e-6);
}

#[test]
fn unconstrained_residual_is_orthogonal() {
    let p = random_problem(11, 40, 6);
    let f = lsq(&p, &cfg()).unwrap();
    let g = p.x().transpose() * (p.x() * &f.weights - p.y());
    assert!(max_abs(&g) <= 1e-6, "{g}");
}

#[test]
fn simplex_constraints_hold() {
    for seed in 0..5 {
        let p = random_problem(20 + seed, 50, 5)
            .with_constraints(ConstraintSet::simplex())
            .unwrap();
        let f = lsq(&p, &cfg()).unwrap();
        assert!(
            (f.weights.sum() - 1.0).abs() <= 1e-8,
            "{}",
            f.weights.sum() - 1.0
        );
        assert!(f.weights.iter().all(|&w| w >= -1e-8));
    }
}

#[test]
fn box_constraints_hold() {
    let p = random_problem(12, 30, 5)
        .with_constraints(ConstraintSet {
            lower: Some(vec![-0.1; 5]),
            upper: Some(vec![0.1, f64::INFINITY, 0.1, 0.1, 0.1]),
            ..ConstraintSet::none()
        })
        .unwrap();
    let f = lsq(&p, &cfg()).unwrap();
    for (i, &w) in f.weights.iter().enumerate() {
        assert!(w >= -0.1 - 1e-7, "{i}: {w}");
        if i != 1 {
            assert!(w <= 0.1 + 1e-7, "{i}: {w}");
        }
    }
}

#[test]
fn ridge_with_zero_lambda_is_lsq() {
    let p = random_problem(13, 30, 4);
    let a = lsq(&p, &cfg()).unwrap();
    let b = ridge(&p, &Regulariser::ridge(0.0), &cfg()).unwrap();
    assert!(max_abs(&(&a.weights - &b.weights)) <= 1e-6);
}

#[test]
fn ridge_matches_modified_normal_equations() {
    let p = random_problem(14, 30, 5);
    let mut r = rng(15);
    let gamma = DMatrix::identity(5, 5) + random_matrix(&mut r, 5, 5) * 0.2;
    let w0 = random_vector(&mut r, 5);
    for lambda in [0.01, 0.1, 1.0, 10.0] {
        let reg = Regulariser::ridge(lambda)
            .with_gamma(gamma.clone())
            .with_anchor(w0.clone());
        let f = ridge(&p, &reg, &cfg()).unwrap();
        let oracle = ridge_oracle(&p, lambda, &gamma, &w0);
        assert!(max_abs(&(&f.weights - oracle)) <= 1e-6, "lambda {lambda}");
    }
}

#[test]
fn dominant_ridge_penalty_anchors_at_w0() {
    let p = RegressionProblem::new(
        random_matrix(&mut rng(16), 20, 2),
        random_vector(&mut rng(17), 20),
    )
    .unwrap();
    let w0 = DVector::from_vec(vec![0.3, 0.7]);
    let f = ridge(&p, &Regulariser::ridge(1e6).with_anchor(w0.clone()), &cfg()).unwrap();
    assert!(max_abs(&(&f.weights - w0)) <= 1e-3);
}

#[test]
fn ridge_shrinks_the_norm() {
    let p = random_problem(18, 30, 5);
    let norms: Vec<f64> = [0.0, 0.1, 1.0, 10.0, 100.0]
        .iter()
        .map(|&l| {
            ridge(&p, &Regulariser::ridge(l), &cfg())
                .unwrap()
                .weights
                .norm()
        })
        .collect();
    for w in norms.windows(2) {
        assert!(w[1] <= w[0] + 1e-7, "{norms:?}");
    }
}

#[test]
fn lasso_with_zero_lambda_is_lsq() {
    let p = random_problem(19, 30, 4);
    let a = lsq(&p, &cfg()).unwrap();
    let b = lasso(&p, &Regulariser::lasso(0.0), &cfg()).unwrap();
    assert!(max_abs(&(&a.weights - &b.weights)) <= 1e-6);
}

#[test]
fn lasso_above_threshold_is_zero() {
    let p = random_problem(21, 40, 6);
    let threshold = 2.0 * max_abs(&(p.x().transpose() * p.y()));
    let f = lasso(&p, &Regulariser::lasso(threshold * 1.01), &cfg()).unwrap();
    assert!(max_abs(&f.weights) <= 1e-6, "{}", f.weights);
}

#[test]
fn lasso_matches_coordinate_descent() {
    let p = random_problem(22, 40, 6);
    let f = lasso(&p, &Regulariser::lasso(0.1), &cfg()).unwrap();
    let w = lasso_coordinate_descent(p.x(), p.y(), 0.1, 1e-10);
    let oracle = (p.x() * &w - p.y()).norm_squared() + 0.1 * w.abs().sum();
    assert!(
        (f.objective - oracle).abs() <= 1e-4,
        "{} vs {oracle}",
        f.objective
    );
}

#[test]
fn lasso_sparsity_and_path_tradeoff() {
    let p = random_problem(23, 40, 8);
    let lambdas = [0.5, 2.0, 8.0, 20.0, 60.0];
    let fits: Vec<_> = lambdas
        .iter()
        .map(|&l| lasso(&p, &Regulariser::lasso(l), &cfg()).unwrap())
        .collect();
    let support: Vec<usize> = fits
        .iter()
        .map(|f| f.weights.iter().filter(|w| w.abs() > 1e-6).count())
        .collect();
    for k in 1..fits.len() {
        assert!(support[k] <= support[k - 1], "{support:?}");
        // penalty measured without λ
        let pen = |i: usize| fits[i].penalty_term / lambdas[i];
        assert!(pen(k) <= pen(k - 1) + 1e-6);
        assert!(fits[k].residual_term >= fits[k - 1].residual_term - 1e-6);
    }
}

#[test]
fn elastic_net_reduces_to_its_parts() {
    let p = random_problem(24, 30, 5);
    let base = lsq(&p, &cfg()).unwrap();
    let none = elastic_net(&p, &Regulariser::elastic_net(0.0, 0.0), &cfg()).unwrap();
    assert!(max_abs(&(&base.weights - &none.weights)) <= 1e-6);

    let l = lasso(&p, &Regulariser::lasso(0.7), &cfg()).unwrap();
    let e = elastic_net(&p, &Regulariser::elastic_net(0.7, 0.0), &cfg()).unwrap();
    assert!((l.objective - e.objective).abs() <= 1e-7);

    let r = ridge(&p, &Regulariser::ridge(0.7), &cfg()).unwrap();
    let e = elastic_net(&p, &Regulariser::elastic_net(0.0, 0.7), &cfg()).unwrap();
    assert!((r.objective - e.objective).abs() <= 1e-7);
    assert!(max_abs(&(&r.weights - &e.weights)) <= 1e-6);
}

#[test]
fn elastic_net_objective_beats_random_points() {
    let p = random_problem(25, 30, 4);
    let reg = Regulariser::elastic_net(0.5, 0.5);
    let f = elastic_net(&p, &reg, &cfg()).unwrap();
    let mut r = rng(26);
    for _ in 0..100 {
        let w = &f.weights + random_vector(&mut r, 4) * r.gen_range(0.001..0.5);
        let val = (p.x() * &w - p.y()).norm_squared() + reg.value(&w);
        assert!(val >= f.objective - 1e-7);
    }
}

#[test]
fn power_penalty_scalar_example_matches_grid() {
    let p = RegressionProblem::new(
        DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
        DVector::from_vec(vec![0.0, 2.0]),
    )
    .unwrap();
    let f = power_three_halves(&p, &Regulariser::power_three_halves(1.0), &cfg()).unwrap();
    let g = |w: f64| w * w + (2.0 - w) * (2.0 - w) + w.abs().powf(1.5);
    let (_, best) = scalar_grid_min(g, 0.0, 1.0, 1e-6);
    assert!(
        (f.objective - best).abs() <= 1e-4,
        "{} vs {best}",
        f.objective
    );
}

#[test]
fn power_penalty_cones_are_tight() {
    let p = random_problem(27, 30, 4);
    let mut r = rng(28);
    let w0 = random_vector(&mut r, 4);
    let f = power_three_halves(
        &p,
        &Regulariser::power_three_halves(2.0).with_anchor(w0.clone()),
        &cfg(),
    )
    .unwrap();
    let pc = f.power_cones.as_ref().unwrap();
    for i in 0..4 {
        let u = f.weights[i] - w0[i];
        if u.abs() > 1e-4 {
            assert!((pc.z[i] - pc.t[i].powf(1.5)).abs() <= 1e-5, "{i}");
            assert!(
                2.0 * pc.s[i] * pc.z[i] - pc.t[i] * pc.t[i] <= 1e-6 * (1.0 + pc.t[i] * pc.t[i])
            );
            assert!(pc.t[i] / 4.0 - pc.s[i] * pc.s[i] <= 1e-6);
        }
    }
}

#[test]
fn power_penalty_chain_algebra() {
    // given t = 4: s ≤ √t/2 = 1 and z ≥ t²/(2s) ≥ 8 = 4^{3/2}
    let t: f64 = 4.0;
    let s_max = t.sqrt() / 2.0;
    assert_eq!(s_max, 1.0);
    assert_eq!(t * t / (2.0 * s_max), t.powf(1.5));
}

#[test]
fn penalty_weights_trade_off_monotonically() {
    let p = random_problem(29, 30, 5);
    let mut prev: Option<(f64, f64)> = None;
    for l in [0.1, 0.5, 1.0, 3.0] {
        let f = power_three_halves(&p, &Regulariser::power_three_halves(l), &cfg()).unwrap();
        let pen = f.penalty_term / l;
        if let Some((pp, pr)) = prev {
            assert!(pen <= pp + 1e-6);
            assert!(f.residual_term >= pr - 1e-6);
        }
        prev = Some((pen, f.residual_term));
    }
}

#[test]
fn underdetermined_needs_a_penalty() {
    let p = random_problem(30, 3, 6);
    assert!(matches!(
        lsq(&p, &cfg()),
        Err(RegressionError::Underdetermined { rows: 3, cols: 6 })
    ));
    assert!(matches!(
        fit(&p, &Regulariser::lasso(0.0), &cfg()),
        Err(RegressionError::Underdetermined { .. })
    ));
    let f = ridge(&p, &Regulariser::ridge(0.5), &cfg()).unwrap();
    let oracle = ridge_oracle(&p, 0.5, &DMatrix::identity(6, 6), &DVector::zeros(6));
    assert!(max_abs(&(&f.weights - oracle)) <= 1e-6);
}
