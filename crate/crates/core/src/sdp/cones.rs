//! Cone bookkeeping for the interior-point solver: the product of a zero
//! cone, a nonnegative orthant and PSD blocks in `svec` coordinates
//! (lower triangle by columns, off-diagonals scaled by √2), plus
//! Nesterov–Todd scaling.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{cholesky, lower_inverse, svd, sym_eigen, Mat};

const SQRT2: f64 = core::f64::consts::SQRT_2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ConeSpec {
    pub zero: usize,
    pub nonneg: usize,
    pub psd: Vec<usize>,
}

impl ConeSpec {
    pub fn psd_dim(n: usize) -> usize {
        n * (n + 1) / 2
    }

    /// Length of the non-zero-cone part.
    #[cfg(test)]
    pub fn cone_len(&self) -> usize {
        self.nonneg + self.psd.iter().map(|&n| Self::psd_dim(n)).sum::<usize>()
    }

    /// Barrier degree: number of entries of `e`.
    pub fn degree(&self) -> usize {
        self.nonneg + self.psd.iter().sum::<usize>()
    }

    /// Offsets of PSD blocks inside the cone part.
    pub fn psd_offsets(&self) -> Vec<usize> {
        let mut off = self.nonneg;
        self.psd
            .iter()
            .map(|&n| {
                let o = off;
                off += Self::psd_dim(n);
                o
            })
            .collect()
    }

    /// Identity element of the cone part.
    pub fn identity(&self) -> Vec<f64> {
        let mut e = vec![1.0; self.nonneg];
        for &n in &self.psd {
            let mut blk = vec![0.0; Self::psd_dim(n)];
            for i in 0..n {
                blk[svec_index(n, i, i)] = 1.0;
            }
            e.extend(blk);
        }
        e
    }

    /// Smallest "eigenvalue" of a cone-part vector (entries for the orthant,
    /// matrix eigenvalues for PSD blocks).
    pub fn min_eigenvalue(&self, v: &[f64]) -> f64 {
        let mut m = v[..self.nonneg].iter().copied().fold(f64::INFINITY, f64::min);
        for (&n, o) in self.psd.iter().zip(self.psd_offsets()) {
            let blk = smat(&v[o..o + Self::psd_dim(n)], n);
            m = m.min(sym_eigen(&blk).0[0]);
        }
        m
    }

    /// Jordan product `a ∘ b` on the cone part.
    pub fn circ(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = a[..self.nonneg].iter().zip(&b[..self.nonneg]).map(|(x, y)| x * y).collect();
        for (&n, o) in self.psd.iter().zip(self.psd_offsets()) {
            let d = Self::psd_dim(n);
            let am = smat(&a[o..o + d], n);
            let bm = smat(&b[o..o + d], n);
            let mut p = am.matmul(&bm);
            let q = bm.matmul(&am);
            p.add_scaled(&q, 1.0);
            out.extend(svec(&p.scale(0.5)));
        }
        out
    }
}

/// Position of `(i, j)` (either order) in the `svec` of an `n × n` matrix.
pub(crate) fn svec_index(n: usize, i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    c * n - c * (c + 1) / 2 + r
}

pub(crate) fn svec(m: &Mat) -> Vec<f64> {
    let n = m.rows();
    let mut out = Vec::with_capacity(ConeSpec::psd_dim(n));
    for c in 0..n {
        out.push(m[(c, c)]);
        for r in c + 1..n {
            out.push(SQRT2 * 0.5 * (m[(r, c)] + m[(c, r)]));
        }
    }
    out
}

pub(crate) fn smat(v: &[f64], n: usize) -> Mat {
    let mut m = Mat::zeros(n, n);
    let mut k = 0;
    for c in 0..n {
        m[(c, c)] = v[k];
        k += 1;
        for r in c + 1..n {
            let x = v[k] / SQRT2;
            m[(r, c)] = x;
            m[(c, r)] = x;
            k += 1;
        }
    }
    m
}

#[derive(Debug, Clone)]
struct PsdScaling {
    n: usize,
    r: Mat,
    rinv: Mat,
    lambda: Vec<f64>,
}

/// The map `X ↦ M X Mᵀ` as a matrix acting on `svec` coordinates.
fn congruence_matrix(m: &Mat) -> Mat {
    let n = m.rows();
    let dim = ConeSpec::psd_dim(n);
    let mut idx = Vec::with_capacity(dim);
    for c in 0..n {
        for r in c..n {
            idx.push((r, c));
        }
    }
    let mut out = Mat::zeros(dim, dim);
    for (a, &(i, j)) in idx.iter().enumerate() {
        let ca = if i == j { 1.0 } else { SQRT2 };
        for (b, &(k, l)) in idx.iter().enumerate() {
            let cb = if k == l { 1.0 } else { SQRT2 };
            out[(a, b)] = ca * cb * 0.5 * (m[(i, k)] * m[(j, l)] + m[(i, l)] * m[(j, k)]);
        }
    }
    out
}

/// Nesterov–Todd scaling `W` with `W z = W⁻ᵀ s = λ`.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    spec: ConeSpec,
    /// Orthant part: `W = diag(d)`, `d = √(s/z)`.
    d: Vec<f64>,
    lambda_nonneg: Vec<f64>,
    psd: Vec<PsdScaling>,
}

impl Scaling {
    /// `s`, `z` are cone-part vectors strictly inside the cone.
    pub fn new(spec: &ConeSpec, s: &[f64], z: &[f64]) -> Option<Self> {
        let l = spec.nonneg;
        let mut d = Vec::with_capacity(l);
        let mut lambda_nonneg = Vec::with_capacity(l);
        for i in 0..l {
            if !(s[i] > 0.0 && z[i] > 0.0) {
                return None;
            }
            d.push(libm::sqrt(s[i] / z[i]));
            lambda_nonneg.push(libm::sqrt(s[i] * z[i]));
        }
        let mut psd = Vec::with_capacity(spec.psd.len());
        for (&n, o) in spec.psd.iter().zip(spec.psd_offsets()) {
            let dim = ConeSpec::psd_dim(n);
            let sm = smat(&s[o..o + dim], n);
            let zm = smat(&z[o..o + dim], n);
            let ls = cholesky(&sm)?;
            let lz = cholesky(&zm)?;
            let (_, sigma, v) = svd(&lz.transpose().matmul(&ls));
            if sigma.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return None;
            }
            let mut r = ls.matmul(&v);
            let mut rinv_t = lower_inverse(&ls).transpose().matmul(&v);
            for j in 0..n {
                let f = 1.0 / libm::sqrt(sigma[j]);
                let g = libm::sqrt(sigma[j]);
                for i in 0..n {
                    r[(i, j)] *= f;
                    rinv_t[(i, j)] *= g;
                }
            }
            psd.push(PsdScaling { n, r, rinv: rinv_t.transpose(), lambda: sigma });
        }
        Some(Self { spec: spec.clone(), d, lambda_nonneg, psd })
    }

    /// `λ` as a cone-part vector.
    pub fn lambda(&self) -> Vec<f64> {
        let mut out = self.lambda_nonneg.clone();
        for p in &self.psd {
            out.extend(svec(&Mat::diag(&p.lambda)));
        }
        out
    }

    fn map_psd(&self, v: &[f64], f: impl Fn(&PsdScaling, &Mat) -> Mat) -> Vec<f64> {
        let mut out = Vec::with_capacity(v.len());
        for (p, o) in self.psd.iter().zip(self.spec.psd_offsets()) {
            let dim = ConeSpec::psd_dim(p.n);
            out.extend(svec(&f(p, &smat(&v[o..o + dim], p.n))));
        }
        out
    }

    /// `W v` (`Rᵀ V R` on PSD blocks).
    pub fn w(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = v[..self.spec.nonneg].iter().zip(&self.d).map(|(a, b)| a * b).collect();
        out.extend(self.map_psd(v, |p, m| p.r.transpose().matmul(m).matmul(&p.r)));
        out
    }

    /// `Wᵀ v` (`R V Rᵀ`).
    pub fn wt(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = v[..self.spec.nonneg].iter().zip(&self.d).map(|(a, b)| a * b).collect();
        out.extend(self.map_psd(v, |p, m| p.r.matmul(m).matmul(&p.r.transpose())));
        out
    }

    /// `W⁻ᵀ v` (`R⁻¹ V R⁻ᵀ`).
    pub fn w_inv_t(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = v[..self.spec.nonneg].iter().zip(&self.d).map(|(a, b)| a / b).collect();
        out.extend(self.map_psd(v, |p, m| p.rinv.matmul(m).matmul(&p.rinv.transpose())));
        out
    }

    /// `WᵀW v`.
    pub fn wtw(&self, v: &[f64]) -> Vec<f64> {
        self.wt(&self.w(v))
    }

    /// Solves `λ ∘ x = v` for `x`.
    pub fn lambda_solve(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> =
            v[..self.spec.nonneg].iter().zip(&self.lambda_nonneg).map(|(a, b)| a / b).collect();
        self.psd_lambda_apply(v, &mut out, |li, lj| 2.0 / (li + lj));
        out
    }

    /// `λ ∘ v`.
    pub fn lambda_circ(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> =
            v[..self.spec.nonneg].iter().zip(&self.lambda_nonneg).map(|(a, b)| a * b).collect();
        self.psd_lambda_apply(v, &mut out, |li, lj| 0.5 * (li + lj));
        out
    }

    fn psd_lambda_apply(&self, v: &[f64], out: &mut Vec<f64>, f: impl Fn(f64, f64) -> f64) {
        for (p, o) in self.psd.iter().zip(self.spec.psd_offsets()) {
            let n = p.n;
            for c in 0..n {
                for r in c..n {
                    let k = o + svec_index(n, r, c);
                    out.push(v[k] * f(p.lambda[r], p.lambda[c]));
                }
            }
        }
    }

    /// `W⁻¹ v` (`R⁻ᵀ V R⁻¹`).
    pub fn w_inv(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = v[..self.spec.nonneg].iter().zip(&self.d).map(|(a, b)| a / b).collect();
        out.extend(self.map_psd(v, |p, m| p.rinv.transpose().matmul(m).matmul(&p.rinv)));
        out
    }

    /// Dense `W⁻ᵀ` of PSD block `k` in `svec` coordinates.
    pub fn w_inv_t_psd_block(&self, k: usize) -> Mat {
        congruence_matrix(&self.psd[k].rinv)
    }

    /// Dense `WᵀW` of PSD block `k` in `svec` coordinates.
    #[cfg(test)]
    pub fn wtw_psd_block(&self, k: usize) -> Mat {
        let p = &self.psd[k];
        congruence_matrix(&p.r.matmul(&p.r.transpose()))
    }

    /// Orthant diagonal of `W⁻ᵀ`.
    pub fn w_inv_nonneg(&self) -> Vec<f64> {
        self.d.iter().map(|d| 1.0 / d).collect()
    }

    /// Largest `α ≥ 0` with `λ + α ds ⪰ 0` and `λ + α dz ⪰ 0`, for directions
    /// given in scaled coordinates. Returns `f64::INFINITY` when unconstrained.
    pub fn max_step(&self, ds: &[f64], dz: &[f64]) -> f64 {
        let mut alpha = f64::INFINITY;
        for dir in [ds, dz] {
            for (i, &l) in self.lambda_nonneg.iter().enumerate() {
                if dir[i] < 0.0 {
                    alpha = alpha.min(-l / dir[i]);
                }
            }
            for (p, o) in self.psd.iter().zip(self.spec.psd_offsets()) {
                let n = p.n;
                let mut m = smat(&dir[o..o + ConeSpec::psd_dim(n)], n);
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] /= libm::sqrt(p.lambda[i] * p.lambda[j]);
                    }
                }
                let lmin = sym_eigen(&m).0[0];
                if lmin < 0.0 {
                    alpha = alpha.min(-1.0 / lmin);
                }
            }
        }
        alpha
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize, seed: u64) -> Mat {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut a = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = next();
            }
        }
        let mut m = a.matmul(&a.transpose());
        for i in 0..n {
            m[(i, i)] += 0.1;
        }
        m
    }

    #[test]
    fn svec_round_trip_and_inner_product() {
        let a = spd(4, 1);
        let b = spd(4, 2);
        let va = svec(&a);
        let vb = svec(&b);
        let ip: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
        assert!((ip - a.dot(&b)).abs() < 1e-12);
        assert!(smat(&va, 4).add(&a.scale(-1.0)).max_abs() < 1e-15);
        assert_eq!(svec_index(3, 2, 1), 4);
        assert_eq!(svec_index(3, 1, 2), 4);
    }

    #[test]
    fn nt_scaling_identities() {
        let spec = ConeSpec { zero: 0, nonneg: 2, psd: vec![3] };
        let mut s = vec![0.5, 2.0];
        s.extend(svec(&spd(3, 3)));
        let mut z = vec![1.5, 0.25];
        z.extend(svec(&spd(3, 4)));
        let w = Scaling::new(&spec, &s, &z).unwrap();
        let lam = w.lambda();
        let wz = w.w(&z);
        let ws = w.w_inv_t(&s);
        for i in 0..lam.len() {
            assert!((wz[i] - lam[i]).abs() < 1e-10, "{i}");
            assert!((ws[i] - lam[i]).abs() < 1e-10, "{i}");
        }
        // WᵀW via dense block agrees with operator form
        let v: Vec<f64> = (0..spec.cone_len()).map(|i| (i as f64).sin()).collect();
        let direct = w.wtw(&v);
        let blk = w.wtw_psd_block(0);
        let got = blk.matvec(&v[2..]);
        for i in 0..6 {
            assert!((got[i] - direct[2 + i]).abs() < 1e-10);
        }
        // λ-solve inverts λ∘
        let back = w.lambda_solve(&w.lambda_circ(&v));
        for i in 0..v.len() {
            assert!((back[i] - v[i]).abs() < 1e-10);
        }
        // sᵀz = λᵀλ
        let sz: f64 = s.iter().zip(&z).map(|(a, b)| a * b).sum();
        let ll: f64 = lam.iter().map(|a| a * a).sum();
        assert!((sz - ll).abs() < 1e-10);
    }

    #[test]
    fn jordan_product_and_identity() {
        let spec = ConeSpec { zero: 1, nonneg: 1, psd: vec![2] };
        let e = spec.identity();
        assert_eq!(e, vec![1.0, 1.0, 0.0, 1.0]);
        let v = vec![3.0, 1.0, 0.5, 2.0];
        assert_eq!(spec.circ(&e, &v), v);
        assert_eq!(spec.degree(), 3);
        assert!((spec.min_eigenvalue(&v) - (1.5 - libm::sqrt(0.25 + 0.125))).abs() < 1e-12);
    }

    #[test]
    fn step_to_boundary() {
        let spec = ConeSpec { zero: 0, nonneg: 1, psd: vec![2] };
        let s = vec![1.0, 1.0, 0.0, 1.0];
        let w = Scaling::new(&spec, &s, &s).unwrap();
        let dir = vec![-0.5, -1.0, 0.0, 0.0];
        assert!((w.max_step(&dir, &[0.0; 4]) - 1.0).abs() < 1e-12);
    }
}
