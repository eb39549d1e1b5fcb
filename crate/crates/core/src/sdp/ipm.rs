//! Homogeneous self-dual interior-point method for
//!
//! ```text
//! minimize cᵀx  subject to  G x + s = h,  s ∈ {0}ᵖ × ℝ₊ˡ × Π S₊
//! ```
//!
//! with Nesterov–Todd scaling and Mehrotra predictor–corrector steps.

use alloc::vec;
use alloc::vec::Vec;

use super::cones::{ConeSpec, Scaling};
use super::kkt::Kkt;
use super::SolveStatus;

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Csr {
    pub rows: usize,
    pub cols: usize,
    pub ptr: Vec<usize>,
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    /// From per-row `(col, value)` lists; repeated columns are summed, zeros dropped.
    pub fn from_rows(cols: usize, rows: &[Vec<(usize, f64)>]) -> Self {
        let mut ptr = vec![0];
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for row in rows {
            let mut r = row.clone();
            r.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < r.len() {
                let c = r[k].0;
                let mut v = 0.0;
                while k < r.len() && r[k].0 == c {
                    v += r[k].1;
                    k += 1;
                }
                if v != 0.0 {
                    idx.push(c);
                    val.push(v);
                }
            }
            ptr.push(idx.len());
        }
        Self { rows: rows.len(), cols, ptr, idx, val }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.ptr[r], self.ptr[r + 1]);
        self.idx[a..b].iter().copied().zip(self.val[a..b].iter().copied())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn transpose_matvec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                for (c, v) in self.row(r) {
                    out[c] += v * yr;
                }
            }
        }
        out
    }
}

pub(crate) struct ConeProgram {
    pub c: Vec<f64>,
    pub g: Csr,
    pub h: Vec<f64>,
    pub cones: ConeSpec,
}

#[derive(Debug, Clone)]
pub(crate) struct IpmResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

const STEP: f64 = 0.99;
const UNBOUNDED_OBJECTIVE: f64 = -1e12;
const NEAR_OPTIMAL: f64 = 10.0;

struct Iterate {
    x: Vec<f64>,
    s: Vec<f64>,
    z: Vec<f64>,
    tau: f64,
    kappa: f64,
}

struct Metrics {
    pres: f64,
    dres: f64,
    gap: f64,
    rel_gap: f64,
    pcost: f64,
}

pub(crate) fn solve(prog: &ConeProgram, tol: f64, max_iter: usize) -> IpmResult {
    let n = prog.c.len();
    let m = prog.h.len();
    let p = prog.cones.zero;
    let cones = &prog.cones;
    let g = &prog.g;
    let e = cones.identity();
    let degree = cones.degree() as f64;
    let resx0 = norm(&prog.c).max(1.0);
    let resz0 = norm(&prog.h).max(1.0);

    let mut kkt = Kkt::new(g, cones);
    kkt.factor(None);

    // Starting point: least-squares primal and dual guesses pushed into the cone.
    let (x, zp) = kkt.solve(&vec![0.0; n], &prog.h);
    let mut s = vec![0.0; m];
    for i in p..m {
        s[i] = -zp[i];
    }
    let neg_c: Vec<f64> = prog.c.iter().map(|v| -v).collect();
    let (_, mut z) = kkt.solve(&neg_c, &vec![0.0; m]);
    for v in [&mut s, &mut z] {
        let cone_part = &mut v[p..];
        let t = -cones.min_eigenvalue(cone_part);
        let nrm = norm(cone_part);
        if t >= -1e-8 * nrm.max(1.0) {
            for (a, b) in cone_part.iter_mut().zip(&e) {
                *a += (1.0 + t) * b;
            }
        }
    }
    let mut it = Iterate { x, s, z, tau: 1.0, kappa: 1.0 };
    let mut best: Option<(f64, IpmResult)> = None;

    let finish = |it: &Iterate, status: SolveStatus, k: usize, mt: &Metrics| -> IpmResult {
        let scale = match status {
            SolveStatus::Optimal | SolveStatus::NumericalFailure => 1.0 / it.tau,
            _ => 1.0,
        };
        IpmResult {
            status,
            x: it.x.iter().map(|v| v * scale).collect(),
            iterations: k,
            primal_residual: mt.pres,
            dual_residual: mt.dres,
            gap: mt.rel_gap,
        }
    };

    for k in 0..=max_iter {
        // Residuals of the homogeneous embedding.
        let gtz = g.transpose_matvec(&it.z);
        let rx: Vec<f64> = gtz.iter().zip(&prog.c).map(|(a, c)| a + c * it.tau).collect();
        let gx = g.matvec(&it.x);
        let rz: Vec<f64> = (0..m).map(|i| it.s[i] + gx[i] - prog.h[i] * it.tau).collect();
        let cx = dot(&prog.c, &it.x);
        let hz = dot(&prog.h, &it.z);
        let rt = it.kappa + cx + hz;
        let sz = dot(&it.s[p..], &it.z[p..]);
        let mu = (sz + it.tau * it.kappa) / (degree + 1.0);

        let pcost = cx / it.tau;
        let dcost = -hz / it.tau;
        let gap = sz / (it.tau * it.tau);
        let mt = Metrics {
            pres: norm(&rz) / it.tau / resz0,
            dres: norm(&rx) / it.tau / resx0,
            gap,
            rel_gap: gap.max((pcost - dcost).abs()) / pcost.abs().max(dcost.abs()).max(1.0),
            pcost,
        };
        if mt.pres <= tol && mt.dres <= tol && mt.rel_gap <= tol {
            return finish(&it, SolveStatus::Optimal, k, &mt);
        }
        if hz < 0.0 {
            let pinf = norm(&gtz) / (-hz) / resx0;
            if pinf <= tol {
                return finish(&it, SolveStatus::Infeasible, k, &mt);
            }
        }
        if cx < 0.0 {
            let gxs: Vec<f64> = gx.iter().zip(&it.s).map(|(a, b)| a + b).collect();
            let dinf = norm(&gxs) / (-cx) / resz0;
            if dinf <= tol {
                return finish(&it, SolveStatus::Unbounded, k, &mt);
            }
        }
        if mt.pcost < UNBOUNDED_OBJECTIVE && mt.pres <= 1e3 * tol {
            return finish(&it, SolveStatus::Unbounded, k, &mt);
        }
        let merit = mt.pres.max(mt.dres).max(mt.rel_gap);
        if best.as_ref().map_or(true, |(b, _)| merit < *b) {
            best = Some((merit, finish(&it, SolveStatus::NumericalFailure, k, &mt)));
        }
        if k == max_iter || !mt.gap.is_finite() {
            break;
        }

        let Some(w) = Scaling::new(cones, &it.s[p..], &it.z[p..]) else { break };
        kkt.factor(Some(&w));
        let lambda = w.lambda();

        let mut bz1 = prog.h.clone();
        let (x1, z1) = kkt.solve(&neg_c, &bz1);
        bz1.clear();
        let denom_base = dot(&prog.c, &x1) + dot(&prog.h, &z1) - it.kappa / it.tau;

        // Solves the Newton system for a complementarity target `rhs_s`
        // (cone part) and `rhs_k`, with linear residuals reduced by `eta`.
        let newton = |rhs_s: &[f64], rhs_k: f64, eta: f64| {
            let ds_target = w.lambda_solve(rhs_s);
            let wt_ds = w.wt(&ds_target);
            let bx: Vec<f64> = rx.iter().map(|v| -eta * v).collect();
            let mut bz: Vec<f64> = rz.iter().map(|v| -eta * v).collect();
            for (b, v) in bz[p..].iter_mut().zip(&wt_ds) {
                *b -= v;
            }
            let (x2, z2) = kkt.solve(&bx, &bz);
            let num = -eta * rt - rhs_k / it.tau - dot(&prog.c, &x2) - dot(&prog.h, &z2);
            let dtau = num / denom_base;
            let dx: Vec<f64> = x2.iter().zip(&x1).map(|(a, b)| a + dtau * b).collect();
            let dz: Vec<f64> = z2.iter().zip(&z1).map(|(a, b)| a + dtau * b).collect();
            let wdz = w.w(&dz[p..]);
            // ds from the primal equation keeps the linear residual exact when W is ill-conditioned
            let gdx = g.matvec(&dx);
            let ds: Vec<f64> = (p..m).map(|i| -eta * rz[i] - gdx[i] + prog.h[i] * dtau).collect();
            let ds_scaled = w.w_inv_t(&ds);
            let dkappa = (rhs_k - it.kappa * dtau) / it.tau;
            (dx, dz, ds_scaled, wdz, dtau, dkappa, ds)
        };
        let max_step = |ds: &[f64], wdz: &[f64], dtau: f64, dkappa: f64| {
            let mut a = w.max_step(ds, wdz);
            if dtau < 0.0 {
                a = a.min(-it.tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-it.kappa / dkappa);
            }
            a
        };

        // Predictor.
        let ll = w.lambda_circ(&lambda);
        let rhs_aff: Vec<f64> = ll.iter().map(|v| -v).collect();
        let (_, _, ds_a, wdz_a, dtau_a, dkappa_a, _) = newton(&rhs_aff, -it.tau * it.kappa, 1.0);
        let alpha_aff = max_step(&ds_a, &wdz_a, dtau_a, dkappa_a).min(1.0);
        let sigma = libm::pow(1.0 - alpha_aff, 3.0);

        // Corrector.
        let corr = cones.circ(&ds_a, &wdz_a);
        let rhs_s: Vec<f64> = (0..ll.len()).map(|i| -ll[i] + sigma * mu * e[i] - corr[i]).collect();
        let rhs_k = -it.tau * it.kappa + sigma * mu - dtau_a * dkappa_a;
        let (dx, dz, ds_sc, wdz, dtau, dkappa, ds_cone) = newton(&rhs_s, rhs_k, 1.0 - sigma);
        let alpha = (STEP * max_step(&ds_sc, &wdz, dtau, dkappa)).min(1.0);
        if !(alpha > 1e-12) {
            break;
        }
        for (a, b) in it.x.iter_mut().zip(&dx) {
            *a += alpha * b;
        }
        for (a, b) in it.z.iter_mut().zip(&dz) {
            *a += alpha * b;
        }
        for (a, b) in it.s[p..].iter_mut().zip(&ds_cone) {
            *a += alpha * b;
        }
        it.tau += alpha * dtau;
        it.kappa += alpha * dkappa;
    }
    // Stalled within a decade of the tolerance: accept at reduced accuracy.
    if let Some((merit, r)) = best.as_mut() {
        if *merit <= NEAR_OPTIMAL * tol {
            r.status = SolveStatus::Optimal;
        }
    }
    best.map(|(_, r)| r).unwrap_or_else(|| IpmResult {
        status: SolveStatus::NumericalFailure,
        x: vec![0.0; n],
        iterations: 0,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        gap: f64::INFINITY,
    })
}
