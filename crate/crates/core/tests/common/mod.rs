//! Shared generators and oracles for the integration suites.
#![allow(dead_code)]

use conereg::solver::{
    cone_contains, ConeBlock, ConeKind, ConeProduct, CscMatrix, StandardFormProblem,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| normal(rng))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(rng))
}

/// A random point strictly inside the cone of `block`.
pub fn interior_point(rng: &mut ChaCha8Rng, block: &ConeBlock) -> Vec<f64> {
    let d = block.dim();
    match block.kind() {
        ConeKind::Free => (0..d).map(|_| normal(rng)).collect(),
        ConeKind::NonNegative => (0..d).map(|_| rng.gen_range(0.1..2.0)).collect(),
        ConeKind::Quadratic => {
            let mut v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
            let tail = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
            v[0] = tail + rng.gen_range(0.1..2.0);
            v
        }
        ConeKind::RotatedQuadratic => {
            let mut v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
            let tail: f64 = v[2..].iter().map(|x| x * x).sum();
            v[0] = rng.gen_range(0.2..2.0);
            v[1] = tail / (2.0 * v[0]) + rng.gen_range(0.1..2.0);
            v
        }
    }
}

/// Dual-cone interior point: zero on free blocks.
pub fn dual_interior_point(rng: &mut ChaCha8Rng, block: &ConeBlock) -> Vec<f64> {
    match block.kind() {
        ConeKind::Free => vec![0.0; block.dim()],
        _ => interior_point(rng, block),
    }
}

/// Random product of quadratic, rotated, nonnegative and free blocks with
/// total dimension at most `max_dim`.
pub fn random_cone(rng: &mut ChaCha8Rng, max_dim: usize, with_free: bool) -> ConeProduct {
    let mut blocks = Vec::new();
    let mut total = 0;
    loop {
        let pick = rng.gen_range(0..10);
        let (kind, dim) = match pick {
            0..=3 => (ConeKind::Quadratic, rng.gen_range(1..12)),
            4..=7 => (ConeKind::RotatedQuadratic, rng.gen_range(2..12)),
            8 => (ConeKind::NonNegative, rng.gen_range(1..6)),
            _ if with_free => (ConeKind::Free, rng.gen_range(1..4)),
            _ => (ConeKind::Quadratic, rng.gen_range(2..6)),
        };
        if total + dim > max_dim {
            break;
        }
        total += dim;
        blocks.push(ConeBlock::new(kind, dim).unwrap());
        if total > max_dim / 2 && rng.gen_bool(0.15) {
            break;
        }
    }
    if blocks.is_empty() {
        blocks.push(ConeBlock::quadratic(3).unwrap());
    }
    ConeProduct::new(blocks)
}

pub fn point_in(rng: &mut ChaCha8Rng, cone: &ConeProduct, dual: bool) -> Vec<f64> {
    cone.blocks()
        .iter()
        .flat_map(|b| {
            if dual {
                dual_interior_point(rng, b)
            } else {
                interior_point(rng, b)
            }
        })
        .collect()
}

pub fn to_csc(a: &DMatrix<f64>) -> CscMatrix {
    let mut trip = Vec::new();
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if a[(i, j)] != 0.0 {
                trip.push((i, j, a[(i, j)]));
            }
        }
    }
    CscMatrix::from_triplets(a.nrows(), a.ncols(), &trip).unwrap()
}

/// Random matrix with roughly `density` fraction of nonzeros and no empty rows.
pub fn random_sparse(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            if rng.gen_bool(density) {
                a[(i, j)] = normal(rng);
            }
        }
        let j = rng.gen_range(0..cols);
        a[(i, j)] = normal(rng);
    }
    a
}

pub struct Generated {
    pub problem: StandardFormProblem,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub s0: Vec<f64>,
}

/// Feasible SOCP built around known interior primal and dual points:
/// `b = A x⁰`, `c = Aᵀy⁰ + s⁰`.
pub fn feasible_socp(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize) -> Generated {
    let cone = random_cone(rng, max_n, true);
    let n = cone.total_dim();
    let m = rng.gen_range(1..=max_m.min(n));
    let a = random_sparse(rng, m, n, 0.3);
    let x0 = point_in(rng, &cone, false);
    let s0 = point_in(rng, &cone, true);
    let y0: Vec<f64> = (0..m).map(|_| normal(rng)).collect();
    let b = &a * DVector::from_column_slice(&x0);
    let c = a.transpose() * DVector::from_column_slice(&y0) + DVector::from_column_slice(&s0);
    let problem = StandardFormProblem::new(
        c.as_slice().to_vec(),
        to_csc(&a),
        b.as_slice().to_vec(),
        cone,
    )
    .unwrap();
    Generated {
        problem,
        x0,
        y0,
        s0,
    }
}

/// Primal infeasible: a ray `y*` with `Aᵀy* = −s* ∈ −int K*` and `bᵀy* = 1`.
pub fn primal_infeasible_socp(
    rng: &mut ChaCha8Rng,
    max_n: usize,
    max_m: usize,
) -> StandardFormProblem {
    let cone = random_cone(rng, max_n, false);
    let n = cone.total_dim();
    let m = rng.gen_range(2..=max_m.min(n).max(2));
    let mut a = random_sparse(rng, m, n, 0.3);
    let ystar = random_vector(rng, m);
    let sstar = DVector::from_vec(point_in(rng, &cone, true));
    let corr = (a.transpose() * &ystar + &sstar) / ystar.norm_squared();
    a -= &ystar * corr.transpose();
    let mut b = random_vector(rng, m);
    let shift = (1.0 - b.dot(&ystar)) / ystar.norm_squared();
    b += &ystar * shift;
    let c = random_vector(rng, n);
    StandardFormProblem::new(
        c.as_slice().to_vec(),
        to_csc(&a),
        b.as_slice().to_vec(),
        cone,
    )
    .unwrap()
}

/// Dual infeasible (unbounded below): a ray `x* ∈ int K` with `Ax* = 0`,
/// `cᵀx* = −1`, and a feasible point so the primal is nonempty.
pub fn dual_infeasible_socp(
    rng: &mut ChaCha8Rng,
    max_n: usize,
    max_m: usize,
) -> StandardFormProblem {
    let cone = random_cone(rng, max_n, false);
    let n = cone.total_dim();
    let m = rng.gen_range(1..=max_m.min(n.saturating_sub(1)).max(1));
    let mut a = random_sparse(rng, m, n, 0.4);
    let xstar = DVector::from_vec(point_in(rng, &cone, false));
    let ax = &a * &xstar;
    a -= &ax * xstar.transpose() / xstar.norm_squared();
    let x0 = DVector::from_vec(point_in(rng, &cone, false));
    let b = &a * &x0;
    let mut c = random_vector(rng, n);
    let shift = (c.dot(&xstar) + 1.0) / xstar.norm_squared();
    c -= &xstar * shift;
    StandardFormProblem::new(
        c.as_slice().to_vec(),
        to_csc(&a),
        b.as_slice().to_vec(),
        cone,
    )
    .unwrap()
}

pub fn in_cone(cone: &ConeProduct, v: &[f64], tol: f64) -> bool {
    cone.iter_offsets()
        .all(|(off, b)| cone_contains(&v[off..off + b.dim()], b, tol).unwrap())
}

pub fn dense_a(p: &StandardFormProblem) -> DMatrix<f64> {
    let a = p.a();
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplets() {
        d[(i, j)] = v;
    }
    d
}

/// Least squares through Householder QR, independent of the conic path.
pub fn qr_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r()
        .solve_upper_triangular(&qty)
        .expect("full column rank")
}

/// Coordinate-descent LASSO for `‖Xw − y‖² + λ Σ|wᵢ|`, iterated until the
/// largest coordinate change drops below `tol`.
pub fn lasso_coordinate_descent(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    tol: f64,
) -> DVector<f64> {
    let m = x.ncols();
    let mut w = DVector::zeros(m);
    let mut r = y - x * &w;
    let col_sq: Vec<f64> = (0..m).map(|j| x.column(j).norm_squared()).collect();
    for _ in 0..1_000_000 {
        let mut max_change: f64 = 0.0;
        for j in 0..m {
            let xj = x.column(j);
            let rho = xj.dot(&r) + col_sq[j] * w[j];
            // minimise a w² − 2 rho w + λ|w| with a = ‖x_j‖²
            let new = if rho > lambda / 2.0 {
                (rho - lambda / 2.0) / col_sq[j]
            } else if rho < -lambda / 2.0 {
                (rho + lambda / 2.0) / col_sq[j]
            } else {
                0.0
            };
            let delta = new - w[j];
            if delta != 0.0 {
                r -= xj * delta;
                w[j] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        if max_change < tol {
            break;
        }
    }
    w
}

/// Minimiser of `g` on `[lo, hi]` by a uniform grid at `step` followed by
/// golden-section refinement around the best grid point.
pub fn scalar_grid_min(g: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> (f64, f64) {
    let count = ((hi - lo) / step).ceil() as usize;
    let mut best = (lo, g(lo));
    for k in 0..=count {
        let w = (lo + k as f64 * step).min(hi);
        let v = g(w);
        if v < best.1 {
            best = (w, v);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if g(c) < g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let w = 0.5 * (a + b);
    let v = g(w);
    if v < best.1 {
        (w, v)
    } else {
        best
    }
}
