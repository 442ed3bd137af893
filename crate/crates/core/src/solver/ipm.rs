//! Homogeneous self-dual embedding iteration with Nesterov–Todd scaling and
//! a Mehrotra predictor-corrector step.
//!
//! The embedding variables are `(x, y, s, τ, κ)` with
//!
//! ```text
//! Ax − bτ = 0,   Aᵀy + s − cτ = 0,   cᵀx − bᵀy + κ = 0,
//! x ∈ K,  s ∈ K*,  τ, κ ≥ 0.
//! ```

use super::cones::{
    identity, jordan_division, jordan_product, max_step, ConeBlock, ConeKind, ConeProduct, Scaling,
};
use super::kkt::{KktSystem, REG_RETRIES};
use super::sparse::{dot, norm2, CscMatrix};
use super::{residuals_of, SolverConfig, SolverError, SolverOutcome, StandardFormProblem, Status};

const STEP_FRACTION: f64 = 0.99;
const MIN_STEP: f64 = 1e-10;
/// Once the termination tests pass, up to this many pure centring steps
/// are taken while second-order blocks are badly centred.
const MAX_CENTRING: usize = 6;
/// Largest accepted `‖λ∘λ − μe‖ / μ` over second-order blocks at exit.
const CENTRING_TOL: f64 = 1e-2;

pub(crate) fn solve_with_presolve(
    problem: &StandardFormProblem,
    config: &SolverConfig,
) -> Result<SolverOutcome, SolverError> {
    let m = problem.num_rows();
    let n = problem.num_vars();
    let a = problem.a();
    let counts = a.row_counts();

    // an empty row with nonzero right-hand side is inconsistent on its own
    for i in 0..m {
        if counts[i] == 0 && problem.b()[i].abs() > config.feas_tol {
            return Ok(row_certificate(problem, i, None));
        }
    }
    // a singleton row forcing a nonnegative variable below zero
    let mut nonneg = vec![false; n];
    for (off, block) in problem.cone().iter_offsets() {
        if block.kind() == ConeKind::NonNegative {
            nonneg[off..off + block.dim()]
                .iter_mut()
                .for_each(|v| *v = true);
        }
    }
    let mut single: Vec<Option<(usize, f64)>> = vec![None; m];
    for (i, j, v) in a.triplets() {
        if counts[i] == 1 {
            single[i] = Some((j, v));
        }
    }
    for i in 0..m {
        if let Some((j, v)) = single[i] {
            if nonneg[j] && problem.b()[i] / v < -config.feas_tol {
                return Ok(row_certificate(problem, i, Some((j, v))));
            }
        }
    }

    let keep: Vec<bool> = counts.iter().map(|&c| c > 0).collect();
    let outcome = if keep.iter().all(|&k| k) {
        run_lifted(problem.c(), a, problem.b(), problem.cone(), config)?
    } else {
        let a_red = a.select_rows(&keep);
        let b_red: Vec<f64> = problem
            .b()
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(b, _)| *b)
            .collect();
        let mut out = run_lifted(problem.c(), &a_red, &b_red, problem.cone(), config)?;
        let mut y = vec![0.0; m];
        let mut k = 0;
        for i in 0..m {
            if keep[i] {
                y[i] = out.y[k];
                k += 1;
            }
        }
        out.y = y;
        out
    };
    Ok(finish(problem, outcome))
}

/// Free blocks carry no barrier, so their KKT pivots would be the static
/// regularisation alone. Each free block `x_f` is embedded as `(t, x_f) ∈ Q`
/// with an unconstrained, zero-cost head `t`; the dual head is then forced to
/// zero and the dual tail recovers `s_f = 0`.
fn run_lifted(
    c: &[f64],
    a: &CscMatrix,
    b: &[f64],
    cone: &ConeProduct,
    config: &SolverConfig,
) -> Result<SolverOutcome, SolverError> {
    if cone.blocks().iter().all(|blk| blk.kind() != ConeKind::Free) {
        return run(c, a, b, cone, config);
    }
    // new_index[j] for every original column, plus the lifted blocks
    let mut new_index = Vec::with_capacity(c.len());
    let mut blocks = Vec::with_capacity(cone.blocks().len());
    let mut next = 0;
    for blk in cone.blocks() {
        if blk.kind() == ConeKind::Free {
            blocks.push(ConeBlock::quadratic(blk.dim() + 1)?);
            next += 1;
        } else {
            blocks.push(*blk);
        }
        for _ in 0..blk.dim() {
            new_index.push(next);
            next += 1;
        }
    }
    let mut c_l = vec![0.0; next];
    for (j, &v) in c.iter().enumerate() {
        c_l[new_index[j]] = v;
    }
    let trip: Vec<(usize, usize, f64)> =
        a.triplets().map(|(i, j, v)| (i, new_index[j], v)).collect();
    let a_l = CscMatrix::from_triplets(a.nrows(), next, &trip)?;
    let mut out = run(&c_l, &a_l, b, &ConeProduct::new(blocks), config)?;
    out.x = new_index.iter().map(|&k| out.x[k]).collect();
    out.s = new_index.iter().map(|&k| out.s[k]).collect();
    Ok(out)
}

fn finish(problem: &StandardFormProblem, mut out: SolverOutcome) -> SolverOutcome {
    let r = residuals_of(problem, &out.x, &out.y, &out.s);
    out.primal_residual = r.primal_residual;
    out.dual_residual = r.dual_residual;
    out.gap = r.gap;
    out
}

fn row_certificate(
    problem: &StandardFormProblem,
    row: usize,
    single: Option<(usize, f64)>,
) -> SolverOutcome {
    let n = problem.num_vars();
    let mut y = vec![0.0; problem.num_rows()];
    y[row] = 1.0 / problem.b()[row];
    let mut s = vec![0.0; n];
    if let Some((j, v)) = single {
        s[j] = -v * y[row];
    }
    finish(
        problem,
        SolverOutcome {
            status: Status::PrimalInfeasible,
            x: vec![0.0; n],
            y,
            s,
            gap: 0.0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            iterations: 0,
        },
    )
}

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

impl Iterate {
    fn advance(&mut self, d: &Direction, alpha: f64) {
        for (v, dv) in self.x.iter_mut().zip(&d.dx) {
            *v += alpha * dv;
        }
        for (v, dv) in self.s.iter_mut().zip(&d.ds) {
            *v += alpha * dv;
        }
        for (v, dv) in self.y.iter_mut().zip(&d.dy) {
            *v += alpha * dv;
        }
        self.tau += alpha * d.dtau;
        self.kappa += alpha * d.dkappa;
    }
}

/// `max ‖λ∘λ − μe‖ / μ` over the second-order blocks.
fn centrality(cone: &ConeProduct, lam_sq: &[f64], mu: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (off, block) in cone.iter_offsets().filter(|(_, b)| b.is_second_order()) {
        let mut e = vec![0.0; block.dim()];
        identity(block, &mut e);
        let dev = lam_sq[off..off + block.dim()]
            .iter()
            .zip(&e)
            .map(|(l, e)| (l - mu * e).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(dev / mu);
    }
    worst
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    ds: Vec<f64>,
    dtau: f64,
    dkappa: f64,
}

/// Per-iteration data shared by the predictor and corrector solves.
struct Linearisation<'a> {
    a: &'a CscMatrix,
    b: &'a [f64],
    c: &'a [f64],
    cone: &'a ConeProduct,
    scalings: &'a [Scaling],
    lambda: &'a [f64],
    tau: f64,
    kappa: f64,
    /// Solution of the system with right-hand side `(−c, b)`.
    x1: &'a [f64],
    z1: &'a [f64],
}

impl Linearisation<'_> {
    /// Solves the Newton system for residual targets `r1..r3`, a
    /// complementarity target `rc` (in λ-space) and `rk` for `τκ`.
    fn direction(
        &self,
        kkt: &mut KktSystem,
        r1: &[f64],
        r2: &[f64],
        r3: f64,
        rc: &[f64],
        rk: f64,
    ) -> Option<Direction> {
        let n = self.c.len();
        let m = self.b.len();
        // wd = W⁻¹ (λ \ rc)
        let mut wd = vec![0.0; n];
        for ((off, block), scaling) in self.cone.iter_offsets().zip(self.scalings) {
            let range = off..off + block.dim();
            let mut d = vec![0.0; block.dim()];
            jordan_division(
                block,
                &self.lambda[range.clone()],
                &rc[range.clone()],
                &mut d,
            );
            scaling.apply_inverse(&d, &mut wd[range]);
        }
        let rx: Vec<f64> = (0..n).map(|j| wd[j] - r2[j]).collect();
        let mut x2 = vec![0.0; n];
        let mut z2 = vec![0.0; m];
        if !kkt.solve(&rx, r1, &mut x2, &mut z2) {
            return None;
        }

        let num = r3 - dot(self.c, &x2) - dot(self.b, &z2) - rk / self.tau;
        let den = dot(self.c, self.x1) + dot(self.b, self.z1) - self.kappa / self.tau;
        let dtau = num / den;
        let dx: Vec<f64> = (0..n).map(|j| x2[j] + dtau * self.x1[j]).collect();
        let dy: Vec<f64> = (0..m).map(|i| -(z2[i] + dtau * self.z1[i])).collect();

        // ds from the dual equation rather than from W⁻² dx: near the
        // boundary W⁻² is huge and the product loses the dual residual
        let mut ds = vec![0.0; n];
        self.a.tmul_vec(&dy, &mut ds);
        for j in 0..n {
            ds[j] = r2[j] - ds[j] + self.c[j] * dtau;
        }
        for (off, block) in self.cone.iter_offsets() {
            if block.kind() == ConeKind::Free {
                ds[off..off + block.dim()].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let dkappa = (rk - self.kappa * dtau) / self.tau;
        Some(Direction {
            dx,
            dy,
            ds,
            dtau,
            dkappa,
        })
    }
}

fn step_length(cone: &ConeProduct, it: &Iterate, d: &Direction) -> f64 {
    let mut alpha = f64::INFINITY;
    for (off, block) in cone.iter_offsets() {
        let r = off..off + block.dim();
        alpha = alpha.min(max_step(block, &it.x[r.clone()], &d.dx[r.clone()]));
        if block.kind() != ConeKind::Free {
            alpha = alpha.min(max_step(block, &it.s[r.clone()], &d.ds[r]));
        }
    }
    if d.dtau < 0.0 {
        alpha = alpha.min(-it.tau / d.dtau);
    }
    if d.dkappa < 0.0 {
        alpha = alpha.min(-it.kappa / d.dkappa);
    }
    alpha
}

fn normalised(it: &Iterate, status: Status, iterations: usize) -> SolverOutcome {
    let scale = 1.0 / it.tau;
    SolverOutcome {
        status,
        x: it.x.iter().map(|v| v * scale).collect(),
        y: it.y.iter().map(|v| v * scale).collect(),
        s: it.s.iter().map(|v| v * scale).collect(),
        gap: 0.0,
        primal_residual: 0.0,
        dual_residual: 0.0,
        iterations,
    }
}

fn run(
    c: &[f64],
    a: &CscMatrix,
    b: &[f64],
    cone: &ConeProduct,
    config: &SolverConfig,
) -> Result<SolverOutcome, SolverError> {
    let n = c.len();
    let m = b.len();
    let degree = cone.degree() as f64;
    let norm_b = norm2(b);
    let norm_c = norm2(c);

    let mut it = Iterate {
        x: vec![0.0; n],
        y: vec![0.0; m],
        s: vec![0.0; n],
        tau: 1.0,
        kappa: 1.0,
    };
    for (off, block) in cone.iter_offsets() {
        let r = off..off + block.dim();
        identity(block, &mut it.x[r.clone()]);
        identity(block, &mut it.s[r]);
    }

    let mut kkt = KktSystem::new(a, cone, config.static_regularization)?;
    let mut best: Option<(f64, Iterate, usize)> = None;

    let mut p1 = vec![0.0; m];
    let mut p2 = vec![0.0; n];
    let mut x1 = vec![0.0; n];
    let mut z1 = vec![0.0; m];
    let neg_c: Vec<f64> = c.iter().map(|v| -v).collect();
    let has_soc = cone.blocks().iter().any(|b| b.is_second_order());
    let mut centring = 0;
    let mut converged_at: Option<(Iterate, usize)> = None;

    for iter in 0..=config.max_iters {
        // residuals of the embedding
        a.mul_vec(&it.x, &mut p1);
        for i in 0..m {
            p1[i] -= b[i] * it.tau;
        }
        a.tmul_vec(&it.y, &mut p2);
        for j in 0..n {
            p2[j] += it.s[j] - c[j] * it.tau;
        }
        let cx = dot(c, &it.x);
        let by = dot(b, &it.y);
        let p3 = cx - by + it.kappa;
        let mu = (dot(&it.x, &it.s) + it.tau * it.kappa) / (degree + 1.0);

        let pres = norm2(&p1) / it.tau / (1.0 + norm_b);
        let dres = norm2(&p2) / it.tau / (1.0 + norm_c);
        let gap = (cx - by).abs() / (it.tau + cx.abs() + by.abs());
        let converged = pres <= config.feas_tol && dres <= config.feas_tol && gap <= config.gap_tol;
        if converged {
            if !has_soc || centring >= MAX_CENTRING {
                return Ok(normalised(&it, Status::Optimal, iter));
            }
            converged_at = Some((it.clone(), iter));
        }

        if it.kappa > it.tau {
            if by > 0.0 {
                let mut r = vec![0.0; n];
                a.tmul_vec(&it.y, &mut r);
                for j in 0..n {
                    r[j] += it.s[j];
                }
                if norm2(&r) / by <= config.feas_tol {
                    let scale = 1.0 / by;
                    return Ok(SolverOutcome {
                        status: Status::PrimalInfeasible,
                        x: vec![0.0; n],
                        y: it.y.iter().map(|v| v * scale).collect(),
                        s: it.s.iter().map(|v| v * scale).collect(),
                        gap: 0.0,
                        primal_residual: 0.0,
                        dual_residual: 0.0,
                        iterations: iter,
                    });
                }
            }
            if cx < 0.0 {
                let mut r = vec![0.0; m];
                a.mul_vec(&it.x, &mut r);
                if norm2(&r) / (-cx) <= config.feas_tol {
                    let scale = -1.0 / cx;
                    return Ok(SolverOutcome {
                        status: Status::DualInfeasible,
                        x: it.x.iter().map(|v| v * scale).collect(),
                        y: vec![0.0; m],
                        s: vec![0.0; n],
                        gap: 0.0,
                        primal_residual: 0.0,
                        dual_residual: 0.0,
                        iterations: iter,
                    });
                }
            }
        }

        let metric = pres.max(dres).max(gap);
        if best.as_ref().map_or(true, |(bm, _, _)| metric < *bm) {
            best = Some((metric, it.clone(), iter));
        }
        let give_up = |status: Status, best: Option<(f64, Iterate, usize)>| {
            if let Some((c_it, c_iter)) = &converged_at {
                return normalised(c_it, Status::Optimal, *c_iter);
            }
            let (_, b_it, _) = best.expect("best iterate recorded before any exit");
            normalised(&b_it, status, iter)
        };
        if iter == config.max_iters {
            return Ok(give_up(Status::IterationLimit, best));
        }

        // scaling and factorisation
        let mut scalings = Vec::with_capacity(cone.blocks().len());
        let mut lambda = vec![0.0; n];
        for (off, block) in cone.iter_offsets() {
            let r = off..off + block.dim();
            match Scaling::compute(block, &it.x[r.clone()], &it.s[r.clone()]) {
                Some(w) => {
                    w.apply(&it.s[r.clone()], &mut lambda[r]);
                    scalings.push(w);
                }
                None => return Ok(give_up(Status::NumericalStall, best)),
            }
        }
        // the (−c, b) solve doubles as an accuracy probe of the factorisation
        let mut factored = false;
        for attempt in 0..=REG_RETRIES {
            if kkt.update(cone, &scalings, attempt).is_ok()
                && kkt.solve(&neg_c, b, &mut x1, &mut z1)
            {
                factored = true;
                break;
            }
        }
        if !factored {
            return Ok(give_up(Status::NumericalStall, best));
        }

        let lin = Linearisation {
            a,
            b,
            c,
            cone,
            scalings: &scalings,
            lambda: &lambda,
            tau: it.tau,
            kappa: it.kappa,
            x1: &x1,
            z1: &z1,
        };

        // predictor
        let mut lam_sq = vec![0.0; n];
        for (off, block) in cone.iter_offsets() {
            let r = off..off + block.dim();
            jordan_product(
                block,
                &lambda[r.clone()],
                &lambda[r.clone()],
                &mut lam_sq[r],
            );
        }
        let tk = it.tau * it.kappa;
        if converged {
            if centrality(cone, &lam_sq, mu) <= CENTRING_TOL {
                return Ok(normalised(&it, Status::Optimal, iter));
            }
            // Newton step towards the central point at the current μ; the
            // residuals are left alone
            centring += 1;
            let mut rc = vec![0.0; n];
            for (off, block) in cone.iter_offsets() {
                identity(block, &mut rc[off..off + block.dim()]);
            }
            rc.iter_mut()
                .zip(&lam_sq)
                .for_each(|(r, l)| *r = mu * *r - l);
            let zeros_m = vec![0.0; m];
            let zeros_n = vec![0.0; n];
            let Some(dir) = lin.direction(&mut kkt, &zeros_m, &zeros_n, 0.0, &rc, mu - tk) else {
                return Ok(give_up(Status::NumericalStall, best));
            };
            let alpha = (STEP_FRACTION * step_length(cone, &it, &dir)).min(1.0);
            if !(alpha > MIN_STEP) {
                return Ok(give_up(Status::NumericalStall, best));
            }
            it.advance(&dir, alpha);
            continue;
        }
        let r1: Vec<f64> = p1.iter().map(|v| -v).collect();
        let r2: Vec<f64> = p2.iter().map(|v| -v).collect();
        let rc: Vec<f64> = lam_sq.iter().map(|v| -v).collect();
        let Some(aff) = lin.direction(&mut kkt, &r1, &r2, -p3, &rc, -tk) else {
            return Ok(give_up(Status::NumericalStall, best));
        };
        let alpha_aff = step_length(cone, &it, &aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        // corrector
        let mut corr = vec![0.0; n];
        let mut e = vec![0.0; n];
        for ((off, block), scaling) in cone.iter_offsets().zip(&scalings) {
            let r = off..off + block.dim();
            let d = block.dim();
            let mut wdx = vec![0.0; d];
            let mut wds = vec![0.0; d];
            scaling.apply_inverse(&aff.dx[r.clone()], &mut wdx);
            scaling.apply(&aff.ds[r.clone()], &mut wds);
            jordan_product(block, &wdx, &wds, &mut corr[r.clone()]);
            identity(block, &mut e[r]);
        }
        let keep = 1.0 - sigma;
        let r1: Vec<f64> = p1.iter().map(|v| -keep * v).collect();
        let r2: Vec<f64> = p2.iter().map(|v| -keep * v).collect();
        let rc: Vec<f64> = (0..n)
            .map(|j| -lam_sq[j] - corr[j] + sigma * mu * e[j])
            .collect();
        let rk = -tk - aff.dtau * aff.dkappa + sigma * mu;
        let Some(dir) = lin.direction(&mut kkt, &r1, &r2, -keep * p3, &rc, rk) else {
            return Ok(give_up(Status::NumericalStall, best));
        };

        let alpha = (STEP_FRACTION * step_length(cone, &it, &dir)).min(1.0);
        if !(alpha > MIN_STEP) || dir.dx.iter().chain(&dir.dy).any(|v| !v.is_finite()) {
            return Ok(give_up(Status::NumericalStall, best));
        }
        it.advance(&dir, alpha);
    }
    unreachable!("loop returns at iter == max_iters")
}
