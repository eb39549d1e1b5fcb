//! Envelope (skyline) LDLᵀ for sparse symmetric quasi-definite systems.
//!
//! Rows are reordered by reverse Cuthill–McKee, which keeps the profile of
//! time-structured problems (a chain of per-step blocks) proportional to the
//! block width. Pivots never need to be exchanged: every pivot has a known sign
//! and too-small pivots are replaced by a signed regularization value.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

pub struct EnvelopeLdl {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    first: Vec<usize>,
    row_start: Vec<usize>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    signs: Vec<i8>,
    /// Destination of each input pattern entry: `Ok(row offset)` into `lower`
    /// or `Err(diag index)`.
    slots: Vec<Result<usize, usize>>,
}

impl EnvelopeLdl {
    /// Builds the ordering and envelope for a symmetric pattern. `pattern`
    /// lists `(row, col)` positions of either triangle (duplicates allowed);
    /// `signs[i]` is the expected pivot sign of variable `i`.
    pub fn analyze(n: usize, pattern: &[(usize, usize)], signs: &[i8]) -> Self {
        let perm = reverse_cuthill_mckee(&pattern_adjacency(n, pattern));
        Self::analyze_with_order(n, pattern, signs, perm)
    }

    /// As [`analyze`](Self::analyze) with a caller-supplied elimination order
    /// (`perm[new] = old`).
    pub fn analyze_with_order(n: usize, pattern: &[(usize, usize)], signs: &[i8], perm: Vec<usize>) -> Self {
        assert_eq!(signs.len(), n);
        assert_eq!(perm.len(), n);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for &(i, j) in pattern {
            let (a, b) = (iperm[i], iperm[j]);
            let (r, c) = if a >= b { (a, b) } else { (b, a) };
            first[r] = first[r].min(c);
        }
        let mut row_start = Vec::with_capacity(n + 1);
        let mut total = 0;
        for (i, &f) in first.iter().enumerate() {
            row_start.push(total);
            total += i - f;
        }
        row_start.push(total);
        let slots = pattern
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (iperm[i], iperm[j]);
                let (r, c) = if a >= b { (a, b) } else { (b, a) };
                if r == c {
                    Err(r)
                } else {
                    Ok(row_start[r] + (c - first[r]))
                }
            })
            .collect();
        let signs = perm.iter().map(|&old| signs[old]).collect();
        Self {
            n,
            perm,
            first,
            row_start,
            lower: vec![0.0; total],
            diag: vec![0.0; n],
            signs,
            slots,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored off-diagonal entries of the factor.
    pub fn envelope_size(&self) -> usize {
        self.lower.len()
    }

    /// Factors the matrix whose entries are `values`, aligned with the pattern
    /// passed to [`analyze`](Self::analyze); symmetric duplicates are summed,
    /// so each off-diagonal position should appear in one triangle only.
    /// Returns the number of pivots that had to be regularized.
    pub fn factor(&mut self, values: &[f64], eps: f64, delta: f64) -> usize {
        assert_eq!(values.len(), self.slots.len());
        self.lower.iter_mut().for_each(|v| *v = 0.0);
        self.diag.iter_mut().for_each(|v| *v = 0.0);
        for (slot, &v) in self.slots.iter().zip(values) {
            match *slot {
                Ok(k) => self.lower[k] += v,
                Err(i) => self.diag[i] += v,
            }
        }
        let mut bumped = 0;
        for i in 0..self.n {
            let fi = self.first[i];
            let si = self.row_start[i];
            // Row i currently holds A[i, fi..i]; overwrite with w = L[i,:]·D.
            for j in fi..i {
                let fj = self.first[j];
                let sj = self.row_start[j];
                let k0 = fi.max(fj);
                let mut acc = self.lower[si + (j - fi)];
                if k0 < j {
                    let wi = &self.lower[si + (k0 - fi)..si + (j - fi)];
                    let lj = &self.lower[sj + (k0 - fj)..sj + (j - fj)];
                    acc -= dot(wi, lj);
                }
                self.lower[si + (j - fi)] = acc;
            }
            let mut d = self.diag[i];
            for j in fi..i {
                let w = self.lower[si + (j - fi)];
                let l = w / self.diag[j];
                d -= w * l;
                self.lower[si + (j - fi)] = l;
            }
            let sign = self.signs[i];
            if (sign > 0 && !(d > eps)) || (sign < 0 && !(d < -eps)) {
                d = if sign > 0 { delta } else { -delta };
                bumped += 1;
            } else if sign == 0 && d.abs() <= eps {
                d = if d < 0.0 { -delta } else { delta };
                bumped += 1;
            }
            self.diag[i] = d;
        }
        bumped
    }

    /// Solves in place using the current factorization.
    pub fn solve(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let mut x: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..self.n {
            let fi = self.first[i];
            let si = self.row_start[i];
            let li = &self.lower[si..si + (i - fi)];
            x[i] -= dot(li, &x[fi..i]);
        }
        for (xi, d) in x.iter_mut().zip(&self.diag) {
            *xi /= d;
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let si = self.row_start[i];
            let xi = x[i];
            if xi != 0.0 {
                for (k, l) in (fi..i).zip(&self.lower[si..si + (i - fi)]) {
                    x[k] -= l * xi;
                }
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetric adjacency lists of a pattern, without self loops.
pub fn pattern_adjacency(n: usize, pattern: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j) in pattern {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    adj
}

/// Reverse Cuthill–McKee ordering; returns `perm[new] = old`.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (adj[i].len(), i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(adj, seed);
        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (adj[w].len(), w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(adj: &[Vec<usize>], seed: usize) -> usize {
    let mut node = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let (far, depth) = bfs_farthest(adj, node);
        if depth <= ecc {
            break;
        }
        ecc = depth;
        node = far;
    }
    node
}

fn bfs_farthest(adj: &[Vec<usize>], start: usize) -> (usize, usize) {
    let mut dist = alloc::collections::BTreeMap::new();
    dist.insert(start, 0usize);
    let mut queue = VecDeque::from([start]);
    let mut best = (start, 0);
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        if d > best.1 || (d == best.1 && adj[v].len() < adj[best.0].len()) {
            best = (v, d);
        }
        for &w in &adj[v] {
            if !dist.contains_key(&w) {
                dist.insert(w, d + 1);
                queue.push_back(w);
            }
        }
    }
    best
}
