//! Reduced KKT system of the interior-point method,
//!
//! ```text
//! [ 0   Gᵀ   ] [x]   [bx]
//! [ G  −WᵀW  ] [z] = [bz]
//! ```
//!
//! with `W = 0` on the zero cone. It is solved in the scaled form
//!
//! ```text
//! [ 0     Gᵀ W⁻¹ ] [ x  ]   [ bx     ]
//! [ W⁻ᵀ G   −I   ] [ Wz ] = [ W⁻ᵀ bz ]
//! ```
//!
//! on the cone rows, factored in regularized quasi-definite form and polished
//! by iterative refinement against the unregularized unscaled system.

use alloc::vec;
use alloc::vec::Vec;

use super::cones::{ConeSpec, Scaling};
use super::ipm::Csr;
use crate::linalg::{pattern_adjacency, reverse_cuthill_mckee, EnvelopeLdl, Mat};

const STATIC_REG: f64 = 1e-9;
const PIVOT_EPS: f64 = 1e-13;
const PIVOT_DELTA: f64 = 1e-8;

/// Columns touched by a PSD block and its rows of `G` as a dense matrix.
struct PsdRows {
    cols: Vec<usize>,
    g: Mat,
}

pub(crate) struct Kkt {
    n: usize,
    spec: ConeSpec,
    ldl: EnvelopeLdl,
    values: Vec<f64>,
    g: Csr,
    /// Scaled `G`; PSD block rows are stored densely over the block's columns.
    ghat: Csr,
    psd_rows: Vec<PsdRows>,
    scaling: Option<Scaling>,
}

/// Eliminates every cone row before the variables it touches and every
/// equality row after them, so all pivots come from definite blocks. The
/// variables follow their RCM order on the whole system.
fn elimination_order(n: usize, g: &Csr, spec: &ConeSpec, pattern: &[(usize, usize)]) -> Vec<usize> {
    let m = g.rows;
    let p = spec.zero;
    let rcm = reverse_cuthill_mckee(&pattern_adjacency(n + m, pattern));
    let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut remaining = vec![0usize; p];
    for r in 0..m {
        for (c, _) in g.row(r) {
            col_rows[c].push(r);
            if r < p {
                remaining[r] += 1;
            }
        }
    }
    let mut order = Vec::with_capacity(n + m);
    let mut done = vec![false; m];
    for r in p..m {
        if g.ptr[r] == g.ptr[r + 1] {
            done[r] = true;
            order.push(n + r);
        }
    }
    order.extend((0..p).filter(|&r| remaining[r] == 0).map(|r| n + r));
    for &v in rcm.iter().filter(|&&v| v < n) {
        for &r in &col_rows[v] {
            if r >= p && !done[r] {
                done[r] = true;
                order.push(n + r);
            }
        }
        order.push(v);
        for &r in &col_rows[v] {
            if r < p {
                remaining[r] -= 1;
                if remaining[r] == 0 {
                    order.push(n + r);
                }
            }
        }
    }
    order
}

impl Kkt {
    pub fn new(g: &Csr, spec: &ConeSpec) -> Self {
        let n = g.cols;
        let m = g.rows;
        let lin_end = spec.zero + spec.nonneg;
        let mut rows: Vec<Vec<(usize, f64)>> = (0..lin_end).map(|r| g.row(r).collect()).collect();
        let mut psd_rows = Vec::new();
        let mut off = lin_end;
        for &size in &spec.psd {
            let dim = ConeSpec::psd_dim(size);
            let mut cols: Vec<usize> = (off..off + dim).flat_map(|r| g.row(r).map(|(c, _)| c)).collect();
            cols.sort_unstable();
            cols.dedup();
            let mut dense = Mat::zeros(dim, cols.len());
            for a in 0..dim {
                for (c, v) in g.row(off + a) {
                    let k = cols.binary_search(&c).unwrap_or_else(|_| unreachable!());
                    dense[(a, k)] = v;
                }
                // nonzero placeholders keep every block column in the pattern
                rows.push(cols.iter().map(|&c| (c, 1.0)).collect());
            }
            psd_rows.push(PsdRows { cols, g: dense });
            off += dim;
        }
        let ghat = Csr::from_rows(n, &rows);
        let mut pattern = Vec::new();
        for i in 0..n {
            pattern.push((i, i));
        }
        for r in 0..m {
            for (c, _) in ghat.row(r) {
                pattern.push((n + r, c));
            }
        }
        for r in 0..m {
            pattern.push((n + r, n + r));
        }
        let values = vec![0.0; pattern.len()];
        let mut signs = vec![1i8; n];
        signs.extend(core::iter::repeat(-1i8).take(m));
        let order = elimination_order(n, &ghat, spec, &pattern);
        let ldl = EnvelopeLdl::analyze_with_order(n + m, &pattern, &signs, order);
        Self { n, spec: spec.clone(), ldl, values, g: g.clone(), ghat, psd_rows, scaling: None }
    }

    /// Factors with the given scaling; `None` means `W = I` on the cones.
    /// Returns the number of regularized pivots.
    pub fn factor(&mut self, scaling: Option<&Scaling>) -> usize {
        let n = self.n;
        let p = self.spec.zero;
        let l = self.spec.nonneg;
        let m = self.g.rows;
        let dinv = scaling.map(Scaling::w_inv_nonneg);
        for r in 0..p + l {
            let f = if r < p { 1.0 } else { dinv.as_ref().map_or(1.0, |d| d[r - p]) };
            let (a, b) = (self.g.ptr[r], self.g.ptr[r + 1]);
            let ha = self.ghat.ptr[r];
            for k in 0..b - a {
                self.ghat.val[ha + k] = f * self.g.val[a + k];
            }
        }
        let mut off = p + l;
        for (b, blk) in self.psd_rows.iter().enumerate() {
            let dim = blk.g.rows();
            let scaled = match scaling {
                Some(s) => s.w_inv_t_psd_block(b).matmul(&blk.g),
                None => blk.g.clone(),
            };
            for a in 0..dim {
                let start = self.ghat.ptr[off + a];
                for k in 0..blk.cols.len() {
                    self.ghat.val[start + k] = scaled[(a, k)];
                }
            }
            off += dim;
        }
        for i in 0..n {
            self.values[i] = STATIC_REG;
        }
        let nnz = self.ghat.val.len();
        self.values[n..n + nnz].copy_from_slice(&self.ghat.val);
        for r in 0..m {
            self.values[n + nnz + r] = if r < p { -STATIC_REG } else { -1.0 - STATIC_REG };
        }
        self.scaling = scaling.cloned();
        self.ldl.factor(&self.values, PIVOT_EPS, PIVOT_DELTA)
    }

    /// Unregularized unscaled matrix times `(x, z)`.
    fn apply(&self, x: &[f64], z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let top = self.g.transpose_matvec(z);
        let mut bot = self.g.matvec(x);
        let p = self.spec.zero;
        let w = match &self.scaling {
            Some(s) => s.wtw(&z[p..]),
            None => z[p..].to_vec(),
        };
        for (b, v) in bot[p..].iter_mut().zip(w) {
            *b -= v;
        }
        (top, bot)
    }

    /// One solve with the factorization, in unscaled coordinates.
    fn solve_once(&self, bx: &[f64], bz: &[f64]) -> Vec<f64> {
        let n = self.n;
        let p = self.spec.zero;
        let mut sol: Vec<f64> = bx.iter().chain(bz).copied().collect();
        if let Some(s) = &self.scaling {
            let t = s.w_inv_t(&bz[p..]);
            sol[n + p..].copy_from_slice(&t);
        }
        self.ldl.solve(&mut sol);
        if let Some(s) = &self.scaling {
            let t = s.w_inv(&sol[n + p..]);
            sol[n + p..].copy_from_slice(&t);
        }
        sol
    }

    /// Solves the unscaled system with iterative refinement; returns `(x, z)`.
    pub fn solve(&self, bx: &[f64], bz: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let norm_b = bx.iter().chain(bz).fold(0.0f64, |a, v| a.max(v.abs()));
        let mut sol = self.solve_once(bx, bz);
        let mut best = f64::INFINITY;
        for _ in 0..20 {
            let (top, bot) = self.apply(&sol[..n], &sol[n..]);
            let rx: Vec<f64> = bx.iter().zip(&top).map(|(b, k)| b - k).collect();
            let rz: Vec<f64> = bz.iter().zip(&bot).map(|(b, k)| b - k).collect();
            let res = rx.iter().chain(&rz).fold(0.0f64, |a, v| a.max(v.abs()));
            if !(res < best * 0.9) || res <= 1e-15 * (1.0 + norm_b) {
                break;
            }
            best = res;
            let corr = self.solve_once(&rx, &rz);
            for (s, c) in sol.iter_mut().zip(corr) {
                *s += c;
            }
        }
        let z = sol.split_off(n);
        (sol, z)
    }
}
