//! Assembly and solution of the reduced Newton (KKT) system
//!
//! ```text
//! [ H + δI   Aᵀ  ] [dx]   [rx]
//! [ A       -δI  ] [dz] = [rz]
//! ```
//!
//! where `H = W⁻²` is the Nesterov–Todd scaling. Each second-order block
//! contributes `H = d I + u₊u₊ᵀ - u₋u₋ᵀ`, which is kept sparse by two extra
//! unknowns per block (pivots `-1` and `+1`), preserving quasi-definiteness.

use super::cones::{ConeProduct, HessianBlock, Scaling};
use super::ldl::{fill_reducing_order, LdlFactor, UpperCsc};
use super::sparse::{dot, norm_inf, CscMatrix};
use super::SolverError;

const MAX_REFINE_STEPS: usize = 10;
/// Static regularisation is raised by this factor per retry after a breakdown.
const REG_GROWTH: f64 = 100.0;
pub(crate) const REG_RETRIES: usize = 3;
/// A refined solution is accepted when its residual is below this, relative
/// to the right-hand side.
const ACCEPT_TOL: f64 = 1e-4;

pub(crate) struct KktSystem {
    n: usize,
    m: usize,
    dim: usize,
    perm: Vec<usize>,
    pinv: Vec<usize>,
    matrix: UpperCsc,
    factor: LdlFactor,
    diag_pos: Vec<usize>,
    a_pos: Vec<usize>,
    a_vals: Vec<f64>,
    /// For each second-order block: offset, positions of u₊ and u₋ entries.
    soc: Vec<(usize, Vec<usize>, Vec<usize>)>,
    static_reg: f64,
    /// Regularisation of the x and y blocks in the current factorisation.
    reg_x: f64,
    reg_y: f64,
    work: Vec<f64>,
    work2: Vec<f64>,
}

impl KktSystem {
    pub fn new(a: &CscMatrix, cones: &ConeProduct, static_reg: f64) -> Result<Self, SolverError> {
        let n = a.ncols();
        let m = a.nrows();
        let soc_blocks: Vec<(usize, usize)> = cones
            .iter_offsets()
            .filter(|(_, b)| b.is_second_order())
            .map(|(off, b)| (off, b.dim()))
            .collect();
        let dim = n + m + 2 * soc_blocks.len();

        // off-diagonal entries in original numbering, tagged by source
        enum Src {
            A(usize),
            Up(usize, usize),
            Um(usize, usize),
        }
        let mut entries: Vec<(usize, usize, Src)> = Vec::new();
        let mut k = 0;
        for j in 0..n {
            for (i, _) in a.column(j) {
                entries.push((j, n + i, Src::A(k)));
                k += 1;
            }
        }
        for (b, &(off, bdim)) in soc_blocks.iter().enumerate() {
            let pp = n + m + 2 * b;
            for t in 0..bdim {
                entries.push((off + t, pp, Src::Up(b, t)));
                entries.push((off + t, pp + 1, Src::Um(b, t)));
            }
        }

        // upper pattern in original numbering for the ordering
        let mut cols: Vec<Vec<usize>> = (0..dim).map(|j| vec![j]).collect();
        for (i, j, _) in &entries {
            cols[*j].push(*i);
        }
        let mut cp = vec![0usize];
        let mut ri = Vec::new();
        for c in cols.iter_mut() {
            c.sort_unstable();
            ri.extend_from_slice(c);
            cp.push(ri.len());
        }
        let perm = fill_reducing_order(dim, &cp, &ri);
        let mut pinv = vec![0usize; dim];
        for (k, &p) in perm.iter().enumerate() {
            pinv[p] = k;
        }

        // permuted upper pattern; remember where every source lands
        #[derive(Clone, Copy)]
        enum Slot {
            Diag(usize),
            Entry(usize),
        }
        let mut pcols: Vec<Vec<(usize, Slot)>> = vec![Vec::new(); dim];
        for idx in 0..dim {
            let p = pinv[idx];
            pcols[p].push((p, Slot::Diag(idx)));
        }
        for (e, (i, j, _)) in entries.iter().enumerate() {
            let (pi, pj) = (pinv[*i], pinv[*j]);
            let (r, c) = if pi < pj { (pi, pj) } else { (pj, pi) };
            pcols[c].push((r, Slot::Entry(e)));
        }
        let mut col_ptr = vec![0usize];
        let mut row_idx = Vec::new();
        let mut diag_pos = vec![0usize; dim];
        let mut entry_pos = vec![0usize; entries.len()];
        for c in pcols.iter_mut() {
            c.sort_by_key(|(r, _)| *r);
            for &(r, slot) in c.iter() {
                match slot {
                    Slot::Diag(idx) => diag_pos[idx] = row_idx.len(),
                    Slot::Entry(e) => entry_pos[e] = row_idx.len(),
                }
                row_idx.push(r);
            }
            col_ptr.push(row_idx.len());
        }
        let nnz = row_idx.len();

        let mut a_pos = vec![0usize; a.nnz()];
        let mut soc: Vec<(usize, Vec<usize>, Vec<usize>)> = soc_blocks
            .iter()
            .map(|&(off, d)| (off, vec![0; d], vec![0; d]))
            .collect();
        for (e, (_, _, src)) in entries.iter().enumerate() {
            match *src {
                Src::A(k) => a_pos[k] = entry_pos[e],
                Src::Up(b, t) => soc[b].1[t] = entry_pos[e],
                Src::Um(b, t) => soc[b].2[t] = entry_pos[e],
            }
        }

        let mut signs_orig = vec![1.0; dim];
        for s in signs_orig.iter_mut().skip(n).take(m) {
            *s = -1.0;
        }
        for b in 0..soc_blocks.len() {
            signs_orig[n + m + 2 * b] = -1.0;
        }
        let signs: Vec<f64> = perm.iter().map(|&p| signs_orig[p]).collect();

        let matrix = UpperCsc {
            n: dim,
            col_ptr,
            row_idx,
            values: vec![0.0; nnz],
        };
        let factor = LdlFactor::analyse(&matrix, signs)?;
        Ok(Self {
            n,
            m,
            dim,
            perm,
            pinv,
            matrix,
            factor,
            diag_pos,
            a_pos,
            a_vals: a.values().to_vec(),
            soc,
            static_reg,
            reg_x: static_reg,
            reg_y: static_reg,
            work: vec![0.0; dim],
            work2: vec![0.0; dim],
        })
    }

    /// Loads the current scaling and refactors. `attempt` raises the static
    /// regularisation by `REG_GROWTH` per step, for use after a breakdown.
    ///
    /// The regularisation follows the spectrum of `H`: on the x block it is
    /// capped by the largest eigenvalue, on the y block by the inverse of the
    /// smallest, so it stays relative when iterates run off along a ray.
    pub fn update(
        &mut self,
        cones: &ConeProduct,
        scalings: &[Scaling],
        attempt: usize,
    ) -> Result<(), SolverError> {
        let hessians: Vec<HessianBlock> = scalings.iter().map(Scaling::hessian).collect();
        let (mut hmin, mut hmax) = (f64::INFINITY, 0.0f64);
        for h in &hessians {
            match h {
                HessianBlock::Diagonal(d) => {
                    for &v in d {
                        hmin = hmin.min(v);
                        hmax = hmax.max(v);
                    }
                }
                HessianBlock::LowRank { diag, up, um } => {
                    hmax = hmax.max(diag + dot(up, up));
                    hmin = hmin.min(diag - dot(um, um));
                }
            }
        }
        let base = self.static_reg * REG_GROWTH.powi(attempt as i32);
        self.reg_x = if hmax > 0.0 {
            base * hmax.min(1.0)
        } else {
            base
        };
        self.reg_y = if hmin.is_finite() && hmin > 0.0 {
            base * (1.0 / hmin).min(1.0)
        } else {
            base
        };
        self.load(cones, &hessians);
        self.factor.factor(&self.matrix)
    }

    fn load(&mut self, cones: &ConeProduct, hessians: &[HessianBlock]) {
        let (n, m) = (self.n, self.m);
        let (reg_x, reg_y) = (self.reg_x, self.reg_y);
        let vals = &mut self.matrix.values;
        vals.iter_mut().for_each(|v| *v = 0.0);
        for (k, &pos) in self.a_pos.iter().enumerate() {
            vals[pos] = self.a_vals[k];
        }
        for i in 0..m {
            vals[self.diag_pos[n + i]] = -reg_y;
        }
        let mut soc_k = 0;
        for ((off, block), hessian) in cones.iter_offsets().zip(hessians) {
            match hessian {
                HessianBlock::Diagonal(d) => {
                    for t in 0..block.dim() {
                        let h = d.get(t).copied().unwrap_or(0.0);
                        vals[self.diag_pos[off + t]] = h + reg_x;
                    }
                }
                HessianBlock::LowRank { diag, up, um } => {
                    let (_, ref upos, ref umpos) = self.soc[soc_k];
                    for t in 0..block.dim() {
                        vals[self.diag_pos[off + t]] = diag + reg_x;
                        vals[upos[t]] = up[t];
                        vals[umpos[t]] = um[t];
                    }
                    let pp = n + m + 2 * soc_k;
                    vals[self.diag_pos[pp]] = -1.0;
                    vals[self.diag_pos[pp + 1]] = 1.0;
                    soc_k += 1;
                }
            }
        }
    }

    /// Symmetric product with the stored (regularised) matrix in permuted numbering.
    fn mul_permuted(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let a = &self.matrix;
        for j in 0..a.n {
            for p in a.col_ptr[j]..a.col_ptr[j + 1] {
                let i = a.row_idx[p];
                let v = a.values[p];
                out[i] += v * x[j];
                if i != j {
                    out[j] += v * x[i];
                }
            }
        }
    }

    /// Residual `rhs − K sol` against the matrix without static regularisation.
    fn residual(&mut self, rhs: &[f64], sol: &[f64], res: &mut [f64]) -> f64 {
        let (n, m) = (self.n, self.m);
        let mut kx = std::mem::take(&mut self.work);
        self.mul_permuted(sol, &mut kx);
        for k in 0..self.dim {
            let orig = self.perm[k];
            let reg = if orig < n {
                self.reg_x
            } else if orig < n + m {
                -self.reg_y
            } else {
                0.0
            };
            res[k] = rhs[k] - (kx[k] - reg * sol[k]);
        }
        self.work = kx;
        let rn = norm_inf(res);
        if rn.is_nan() {
            f64::INFINITY
        } else {
            rn
        }
    }

    /// Solves the system for right-hand sides `rx` (length n) and `rz`
    /// (length m), refining against the unregularised matrix. Returns false
    /// when refinement could not reach an accurate, finite solution.
    pub fn solve(&mut self, rx: &[f64], rz: &[f64], dx: &mut [f64], dz: &mut [f64]) -> bool {
        let (n, m, dim) = (self.n, self.m, self.dim);
        let mut rhs = vec![0.0; dim];
        for i in 0..n {
            rhs[self.pinv[i]] = rx[i];
        }
        for i in 0..m {
            rhs[self.pinv[n + i]] = rz[i];
        }
        let mut sol = rhs.clone();
        self.factor.solve_in_place(&mut sol);

        let rhs_norm = norm_inf(&rhs);
        let target = 1e-14 * (1.0 + rhs_norm);
        let mut res = std::mem::take(&mut self.work2);
        let mut rn = self.residual(&rhs, &sol, &mut res);
        let mut cand = vec![0.0; dim];
        let mut cand_res = vec![0.0; dim];
        for _ in 0..MAX_REFINE_STEPS {
            if rn <= target {
                break;
            }
            self.factor.solve_in_place(&mut res);
            for k in 0..dim {
                cand[k] = sol[k] + res[k];
            }
            let cn = self.residual(&rhs, &cand, &mut cand_res);
            if !(cn < rn) {
                break;
            }
            let slow = cn > 0.5 * rn;
            std::mem::swap(&mut sol, &mut cand);
            std::mem::swap(&mut res, &mut cand_res);
            rn = cn;
            if slow {
                break;
            }
        }
        self.work2 = res;
        for i in 0..n {
            dx[i] = sol[self.pinv[i]];
        }
        for i in 0..m {
            dz[i] = sol[self.pinv[n + i]];
        }
        rn <= ACCEPT_TOL * (1.0 + rhs_norm) && sol.iter().all(|v| v.is_finite())
    }
}
