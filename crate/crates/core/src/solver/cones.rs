//! Cone blocks and the per-block algebra used by the interior-point method.
//!
//! Quadratic cones use the usual Jordan algebra with identity `(1, 0, …, 0)`.
//! Rotated cones are handled in their own coordinates through the involution
//! `T = [[1/√2, 1/√2], [1/√2, −1/√2]] ⊕ I`, which maps `Q_r` onto `Q`; every
//! rotated operation conjugates the quadratic one by `T`, so the rotated
//! barrier and Nesterov–Todd scaling are exact and no variables are added.

use std::f64::consts::FRAC_1_SQRT_2;

use super::sparse::{dot, norm2};
use super::SolverError;

/// The cone a block of variables lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConeKind {
    Free,
    NonNegative,
    Quadratic,
    RotatedQuadratic,
}

impl ConeKind {
    pub fn label(self) -> &'static str {
        match self {
            ConeKind::Free => "free",
            ConeKind::NonNegative => "nonneg",
            ConeKind::Quadratic => "quad",
            ConeKind::RotatedQuadratic => "rquad",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "free" => Some(ConeKind::Free),
            "nonneg" => Some(ConeKind::NonNegative),
            "quad" => Some(ConeKind::Quadratic),
            "rquad" => Some(ConeKind::RotatedQuadratic),
            _ => None,
        }
    }
}

/// A contiguous run of `dim` variables constrained to one cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConeBlock {
    kind: ConeKind,
    dim: usize,
}

impl ConeBlock {
    pub fn new(kind: ConeKind, dim: usize) -> Result<Self, SolverError> {
        let min = match kind {
            ConeKind::RotatedQuadratic => 2,
            _ => 1,
        };
        if dim < min {
            return Err(SolverError::InvalidCone(format!(
                "{} cone needs dimension >= {min}, got {dim}",
                kind.label()
            )));
        }
        Ok(Self { kind, dim })
    }

    pub fn free(dim: usize) -> Result<Self, SolverError> {
        Self::new(ConeKind::Free, dim)
    }

    pub fn nonnegative(dim: usize) -> Result<Self, SolverError> {
        Self::new(ConeKind::NonNegative, dim)
    }

    pub fn quadratic(dim: usize) -> Result<Self, SolverError> {
        Self::new(ConeKind::Quadratic, dim)
    }

    pub fn rotated(dim: usize) -> Result<Self, SolverError> {
        Self::new(ConeKind::RotatedQuadratic, dim)
    }

    pub fn kind(&self) -> ConeKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Barrier degree contributed to the complementarity measure.
    pub(crate) fn degree(&self) -> usize {
        match self.kind {
            ConeKind::Free => 0,
            ConeKind::NonNegative => self.dim,
            ConeKind::Quadratic | ConeKind::RotatedQuadratic => 1,
        }
    }

    pub(crate) fn is_second_order(&self) -> bool {
        matches!(self.kind, ConeKind::Quadratic | ConeKind::RotatedQuadratic)
    }
}

/// An ordered product of cone blocks partitioning a variable vector.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConeProduct {
    blocks: Vec<ConeBlock>,
}

impl ConeProduct {
    pub fn new(blocks: Vec<ConeBlock>) -> Self {
        Self { blocks }
    }

    pub fn push(&mut self, block: ConeBlock) {
        self.blocks.push(block);
    }

    pub fn blocks(&self) -> &[ConeBlock] {
        &self.blocks
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum()
    }

    /// `(offset, block)` pairs; offsets are contiguous from zero.
    pub fn iter_offsets(&self) -> impl Iterator<Item = (usize, &ConeBlock)> + '_ {
        self.blocks.iter().scan(0usize, |off, b| {
            let start = *off;
            *off += b.dim;
            Some((start, b))
        })
    }

    pub(crate) fn degree(&self) -> usize {
        self.blocks.iter().map(|b| b.degree()).sum()
    }

    /// Membership of the whole vector, block by block.
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        v.len() == self.total_dim()
            && self
                .iter_offsets()
                .all(|(off, b)| cone_contains(&v[off..off + b.dim], b, tol).unwrap_or(false))
    }

    /// Membership in the dual cone. All blocks are self-dual except `Free`,
    /// whose dual is `{0}`.
    pub fn dual_contains(&self, v: &[f64], tol: f64) -> bool {
        v.len() == self.total_dim()
            && self.iter_offsets().all(|(off, b)| {
                let seg = &v[off..off + b.dim];
                match b.kind {
                    ConeKind::Free => seg.iter().all(|x| x.abs() <= tol),
                    _ => cone_contains(seg, b, tol).unwrap_or(false),
                }
            })
    }
}

/// Whether `v` lies in the cone of `block`, allowing a slack of `-tol` in
/// each defining inequality.
pub fn cone_contains(v: &[f64], block: &ConeBlock, tol: f64) -> Result<bool, SolverError> {
    if v.len() != block.dim {
        return Err(SolverError::Dimension(format!(
            "vector of length {} tested against a {}-dimensional {} cone",
            v.len(),
            block.dim,
            block.kind.label()
        )));
    }
    Ok(match block.kind {
        ConeKind::Free => true,
        ConeKind::NonNegative => v.iter().all(|&x| x >= -tol),
        ConeKind::Quadratic => v[0] - norm2(&v[1..]) >= -tol,
        ConeKind::RotatedQuadratic => {
            let tail: f64 = v[2..].iter().map(|x| x * x).sum();
            v[0] >= -tol && v[1] >= -tol && 2.0 * v[0] * v[1] - tail >= -tol
        }
    })
}

/// Applies the rotation `T` (its own inverse) to the two heads in place.
pub fn rotate_heads(v: &mut [f64]) {
    let (a, b) = (v[0], v[1]);
    v[0] = FRAC_1_SQRT_2 * (a + b);
    v[1] = FRAC_1_SQRT_2 * (a - b);
}

fn rotated_copy(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    rotate_heads(&mut out);
    out
}

/// `(x0 - |x1|)(x0 + |x1|)`, the squared Lorentz norm, in a cancellation-safe form.
fn lorentz_sq(v: &[f64]) -> f64 {
    let n = norm2(&v[1..]);
    (v[0] - n) * (v[0] + n)
}

/// Identity element of the block's Jordan algebra (zero for free blocks).
pub(crate) fn identity(block: &ConeBlock, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    match block.kind {
        ConeKind::Free => {}
        ConeKind::NonNegative => out.iter_mut().for_each(|o| *o = 1.0),
        ConeKind::Quadratic => out[0] = 1.0,
        ConeKind::RotatedQuadratic => {
            out[0] = FRAC_1_SQRT_2;
            out[1] = FRAC_1_SQRT_2;
        }
    }
}

fn soc_product(u: &[f64], v: &[f64], out: &mut [f64]) {
    out[0] = dot(u, v);
    for i in 1..u.len() {
        out[i] = u[0] * v[i] + v[0] * u[i];
    }
}

/// Solves `lambda ∘ d = r` for `d` in the quadratic cone algebra.
fn soc_division(lambda: &[f64], r: &[f64], out: &mut [f64]) {
    let rho = lorentz_sq(lambda);
    let tail = dot(&lambda[1..], &r[1..]);
    let d0 = (lambda[0] * r[0] - tail) / rho;
    out[0] = d0;
    for i in 1..lambda.len() {
        out[i] = (r[i] - d0 * lambda[i]) / lambda[0];
    }
}

/// Jordan product `u ∘ v` for the block.
pub(crate) fn jordan_product(block: &ConeBlock, u: &[f64], v: &[f64], out: &mut [f64]) {
    match block.kind {
        ConeKind::Free => out.iter_mut().for_each(|o| *o = 0.0),
        ConeKind::NonNegative => {
            for i in 0..u.len() {
                out[i] = u[i] * v[i];
            }
        }
        ConeKind::Quadratic => soc_product(u, v, out),
        ConeKind::RotatedQuadratic => {
            soc_product(&rotated_copy(u), &rotated_copy(v), out);
            rotate_heads(out);
        }
    }
}

/// Solves `lambda ∘ d = r` for `d`.
pub(crate) fn jordan_division(block: &ConeBlock, lambda: &[f64], r: &[f64], out: &mut [f64]) {
    match block.kind {
        ConeKind::Free => out.iter_mut().for_each(|o| *o = 0.0),
        ConeKind::NonNegative => {
            for i in 0..r.len() {
                out[i] = r[i] / lambda[i];
            }
        }
        ConeKind::Quadratic => soc_division(lambda, r, out),
        ConeKind::RotatedQuadratic => {
            soc_division(&rotated_copy(lambda), &rotated_copy(r), out);
            rotate_heads(out);
        }
    }
}

fn soc_max_step(v: &[f64], d: &[f64]) -> f64 {
    // the head must stay nonnegative whatever the quadratic says
    let head = if d[0] < 0.0 {
        -v[0] / d[0]
    } else {
        f64::INFINITY
    };
    // smallest positive root of (v0 + a d0)^2 - |v1 + a d1|^2
    let a = d[0] * d[0] - dot(&d[1..], &d[1..]);
    let b = v[0] * d[0] - dot(&v[1..], &d[1..]);
    let c = lorentz_sq(v).max(0.0);
    let mut disc = b * b - a * c;
    let scale = a.abs().max(b.abs()).max(c.abs());
    if a.abs() <= 1e-14 * scale {
        let lin = if b < 0.0 {
            c / (-2.0 * b)
        } else {
            f64::INFINITY
        };
        return lin.min(head);
    }
    if disc < 0.0 {
        // a tangent line can round to a slightly negative discriminant
        if disc < -1e-12 * b * b {
            return head;
        }
        disc = 0.0;
    }
    let sq = disc.sqrt();
    let q = -(b + b.signum() * sq);
    let r1 = q / a;
    let r2 = if q != 0.0 { c / q } else { f64::INFINITY };
    [r1, r2]
        .into_iter()
        .filter(|r| *r > 0.0)
        .fold(head, f64::min)
}

/// Largest `alpha >= 0` keeping `v + alpha * d` in the block's cone,
/// assuming `v` is interior. Free blocks never limit the step.
pub(crate) fn max_step(block: &ConeBlock, v: &[f64], d: &[f64]) -> f64 {
    match block.kind {
        ConeKind::Free => f64::INFINITY,
        ConeKind::NonNegative => v
            .iter()
            .zip(d)
            .filter(|(_, di)| **di < 0.0)
            .map(|(vi, di)| -vi / di)
            .fold(f64::INFINITY, f64::min),
        ConeKind::Quadratic => soc_max_step(v, d),
        ConeKind::RotatedQuadratic => soc_max_step(&rotated_copy(v), &rotated_copy(d)),
    }
}

/// Nesterov–Todd scaling of one block at a primal-dual pair `(x, s)`:
/// `W s = W⁻¹ x = λ`.
#[derive(Debug, Clone)]
pub(crate) enum Scaling {
    Free,
    /// `W = diag(w)` with `w = sqrt(x / s)`.
    NonNegative {
        w: Vec<f64>,
    },
    /// `W = eta (2 w wᵀ - J)` in quadratic-cone coordinates with `wᵀ J w = 1`.
    SecondOrder {
        eta: f64,
        w: Vec<f64>,
        rotated: bool,
    },
}

impl Scaling {
    pub(crate) fn compute(block: &ConeBlock, x: &[f64], s: &[f64]) -> Option<Self> {
        match block.kind {
            ConeKind::Free => Some(Scaling::Free),
            ConeKind::NonNegative => {
                let mut w = Vec::with_capacity(x.len());
                for (xi, si) in x.iter().zip(s) {
                    if *xi <= 0.0 || *si <= 0.0 {
                        return None;
                    }
                    w.push((xi / si).sqrt());
                }
                Some(Scaling::NonNegative { w })
            }
            ConeKind::Quadratic | ConeKind::RotatedQuadratic => {
                let rotated = block.kind == ConeKind::RotatedQuadratic;
                let (xq, sq) = if rotated {
                    (rotated_copy(x), rotated_copy(s))
                } else {
                    (x.to_vec(), s.to_vec())
                };
                let xn2 = lorentz_sq(&xq);
                let sn2 = lorentz_sq(&sq);
                if xq[0] <= 0.0 || sq[0] <= 0.0 || xn2 <= 0.0 || sn2 <= 0.0 {
                    return None;
                }
                let (xn, sn) = (xn2.sqrt(), sn2.sqrt());
                let xbar: Vec<f64> = xq.iter().map(|v| v / xn).collect();
                let sbar: Vec<f64> = sq.iter().map(|v| v / sn).collect();
                let gamma = ((1.0 + dot(&xbar, &sbar)) / 2.0).sqrt();
                // scaled point wbar = (xbar + J sbar) / (2 gamma), then the
                // square-root point w = (wbar + e) / sqrt(2 (wbar0 + 1))
                let wbar0 = (xbar[0] + sbar[0]) / (2.0 * gamma);
                let denom = (2.0 * (wbar0 + 1.0)).sqrt();
                let mut w = vec![0.0; xq.len()];
                w[0] = (wbar0 + 1.0) / denom;
                for i in 1..w.len() {
                    w[i] = (xbar[i] - sbar[i]) / (2.0 * gamma) / denom;
                }
                // renormalise so that wᵀJw = 1 exactly
                let tail = norm2(&w[1..]);
                w[0] = (1.0 + tail * tail).sqrt();
                Some(Scaling::SecondOrder {
                    eta: (xn / sn).sqrt(),
                    w,
                    rotated,
                })
            }
        }
    }

    /// `out = W v`
    pub(crate) fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.apply_inner(v, out, false)
    }

    /// `out = W⁻¹ v`
    pub(crate) fn apply_inverse(&self, v: &[f64], out: &mut [f64]) {
        self.apply_inner(v, out, true)
    }

    fn apply_inner(&self, v: &[f64], out: &mut [f64], inverse: bool) {
        match self {
            Scaling::Free => out.iter_mut().for_each(|o| *o = 0.0),
            Scaling::NonNegative { w } => {
                for i in 0..v.len() {
                    out[i] = if inverse { v[i] / w[i] } else { v[i] * w[i] };
                }
            }
            Scaling::SecondOrder { eta, w, rotated } => {
                let vq = if *rotated {
                    rotated_copy(v)
                } else {
                    v.to_vec()
                };
                // W⁻¹ = (1/eta)(2 (Jw)(Jw)ᵀ - J)
                let sign = if inverse { -1.0 } else { 1.0 };
                let factor = if inverse { 1.0 / eta } else { *eta };
                let wv = w[0] * vq[0] + sign * dot(&w[1..], &vq[1..]);
                out[0] = factor * (2.0 * w[0] * wv - vq[0]);
                for i in 1..vq.len() {
                    out[i] = factor * (2.0 * sign * w[i] * wv + vq[i]);
                }
                if *rotated {
                    rotate_heads(out);
                }
            }
        }
    }

    /// Representation of `H = W⁻²` for the KKT system: a diagonal part and,
    /// for second-order blocks, `H = d I + u₊u₊ᵀ - u₋u₋ᵀ` with `|u₋|² d⁻¹ < 1`.
    pub(crate) fn hessian(&self) -> HessianBlock {
        match self {
            Scaling::Free => HessianBlock::Diagonal(Vec::new()),
            Scaling::NonNegative { w } => {
                HessianBlock::Diagonal(w.iter().map(|wi| 1.0 / (wi * wi)).collect())
            }
            Scaling::SecondOrder { eta, w, rotated } => {
                let n = w.len();
                let d = 1.0 / (eta * eta);
                let r = norm2(&w[1..]);
                let mut up = vec![0.0; n];
                let mut um = vec![0.0; n];
                if r > 0.0 {
                    // B(Jw)² has eigenvalue (w0 + r)^4 along (1, -w1/r)/√2 and
                    // (w0 - r)^4 = 1/(w0 + r)^4 along (1, w1/r)/√2.
                    let h = r.asinh();
                    let a = (4.0 * h).exp_m1();
                    let b = -(-4.0 * h).exp_m1();
                    let ca = (d * a).sqrt() * FRAC_1_SQRT_2;
                    let cb = (d * b).sqrt() * FRAC_1_SQRT_2;
                    up[0] = ca;
                    um[0] = cb;
                    for i in 1..n {
                        up[i] = -ca * w[i] / r;
                        um[i] = cb * w[i] / r;
                    }
                }
                if *rotated {
                    rotate_heads(&mut up);
                    rotate_heads(&mut um);
                }
                HessianBlock::LowRank { diag: d, up, um }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum HessianBlock {
    /// Per-coordinate diagonal (empty for free blocks, meaning zero).
    Diagonal(Vec<f64>),
    LowRank {
        diag: f64,
        up: Vec<f64>,
        um: Vec<f64>,
    },
}
