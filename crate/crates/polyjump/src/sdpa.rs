//! Export to the sparse SDPA format (`.dat-s`).
//!
//! SDPA solves `min cᵀx` subject to `Σᵢ xᵢ Fᵢ − F₀ ⪰ 0`. Equalities become
//! pairs of opposite diagonal entries in a leading LP block together with the
//! nonnegativity rows; each PSD constraint becomes its own block. The comment
//! header records the segment layout, the objective sense and constant, and
//! the moment scale.

use std::fmt::Write as _;

use polyjump_core::{SdpProblem, Sense};

pub fn to_sdpa(problem: &SdpProblem) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "\"polyjump SDP export");
    let sense = match problem.sense {
        Sense::Minimize => "minimize",
        Sense::Maximize => "maximize (objective below is negated)",
    };
    let _ = writeln!(s, "* sense: {sense}");
    let _ = writeln!(s, "* objective constant: {}", problem.objective_constant);
    let _ = writeln!(s, "* moment scale: {}", problem.moment_scale);
    let _ = writeln!(
        s,
        "* block 1: {} equalities (rows 1..{}), {} nonnegative rows",
        problem.equalities.len(),
        2 * problem.equalities.len(),
        problem.nonnegative.len()
    );
    for (k, c) in problem.psd.iter().enumerate() {
        let _ = writeln!(s, "* block {}: {}", k + 2, c.label);
    }
    for seg in &problem.segments {
        let _ = writeln!(s, "* segment {}: variables {}..{}", seg.name, seg.offset + 1, seg.offset + seg.len);
    }
    let lp = 2 * problem.equalities.len() + problem.nonnegative.len();
    let _ = writeln!(s, "{}", problem.n_vars);
    let _ = writeln!(s, "{}", 1 + problem.psd.len());
    let mut sizes = vec![format!("-{}", lp.max(1))];
    sizes.extend(problem.psd.iter().map(|c| c.size.to_string()));
    let _ = writeln!(s, "{}", sizes.join(" "));
    let c: Vec<String> = problem.objective.iter().map(|v| v.to_string()).collect();
    let _ = writeln!(s, "{}", c.join(" "));

    let mut entry = |mat: usize, blk: usize, i: usize, j: usize, v: f64| {
        if v != 0.0 {
            let _ = writeln!(s, "{mat} {blk} {} {} {v}", i.min(j) + 1, i.max(j) + 1);
        }
    };
    let mut row = 0;
    for r in &problem.equalities {
        for sign in [1.0, -1.0] {
            entry(0, 1, row, row, -sign * r.constant);
            for &(var, a) in &r.terms {
                entry(var + 1, 1, row, row, sign * a);
            }
            row += 1;
        }
    }
    for r in &problem.nonnegative {
        entry(0, 1, row, row, -r.constant);
        for &(var, a) in &r.terms {
            entry(var + 1, 1, row, row, a);
        }
        row += 1;
    }
    for (k, c) in problem.psd.iter().enumerate() {
        for &(i, j, v) in &c.constant {
            entry(0, k + 2, i, j, -v);
        }
        for &(var, i, j, v) in &c.terms {
            entry(var + 1, k + 2, i, j, v);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use polyjump_core::sdp::{solve, AffineRow, PsdConstraint, Segment};
    use polyjump_core::SolverOptions;
    use std::collections::BTreeMap;

    /// Minimal reader: returns (c, block sizes, entries keyed by (mat, blk)).
    #[allow(clippy::type_complexity)]
    fn read(text: &str) -> (Vec<f64>, Vec<i64>, BTreeMap<(usize, usize), Vec<(usize, usize, f64)>>) {
        let mut lines = text.lines().filter(|l| !l.starts_with('"') && !l.starts_with('*'));
        let _m: usize = lines.next().unwrap().trim().parse().unwrap();
        let _nb: usize = lines.next().unwrap().trim().parse().unwrap();
        let sizes = lines.next().unwrap().split_whitespace().map(|t| t.parse().unwrap()).collect();
        let c = lines.next().unwrap().split_whitespace().map(|t| t.parse().unwrap()).collect();
        let mut entries: BTreeMap<_, Vec<_>> = BTreeMap::new();
        for l in lines {
            let t: Vec<&str> = l.split_whitespace().collect();
            let key = (t[0].parse().unwrap(), t[1].parse().unwrap());
            entries.entry(key).or_default().push((t[2].parse().unwrap(), t[3].parse().unwrap(), t[4].parse().unwrap()));
        }
        (c, sizes, entries)
    }

    fn toy() -> SdpProblem {
        // minimize x2 subject to x1 = 1, [[1, x1], [x1, x2]] ⪰ 0, x2 ≤ 5
        SdpProblem {
            n_vars: 2,
            segments: vec![Segment { name: "X".into(), offset: 0, len: 2 }],
            objective: vec![0.0, 1.0],
            objective_constant: 0.0,
            sense: Sense::Minimize,
            equalities: vec![AffineRow { terms: vec![(0, 1.0)], constant: -1.0 }],
            nonnegative: vec![AffineRow { terms: vec![(1, -1.0)], constant: 5.0 }],
            psd: vec![PsdConstraint {
                label: "moment".into(),
                size: 2,
                constant: vec![(0, 0, 1.0)],
                terms: vec![(0, 1, 0, 1.0), (1, 1, 1, 1.0)],
            }],
            moment_scale: 1.0,
        }
    }

    #[test]
    fn export_reproduces_constraints_at_the_optimum() {
        let p = toy();
        let sol = solve(&p, &SolverOptions::default());
        assert!(sol.is_optimal());
        let text = to_sdpa(&p);
        assert!(text.contains("* segment X: variables 1..2"));
        let (c, sizes, entries) = read(&text);
        assert_eq!(c, vec![0.0, 1.0]);
        assert_eq!(sizes, vec![-3, 2]);
        // evaluate Σ xᵢFᵢ − F₀ block by block
        let mut lp = [0.0; 3];
        let mut psd = [[0.0; 2]; 2];
        for (&(mat, blk), list) in &entries {
            let w = if mat == 0 { -1.0 } else { sol.x[mat - 1] };
            for &(i, j, v) in list {
                if blk == 1 {
                    lp[i - 1] += w * v;
                } else {
                    psd[i - 1][j - 1] += w * v;
                    if i != j {
                        psd[j - 1][i - 1] += w * v;
                    }
                }
            }
        }
        assert!(lp[0].abs() < 1e-7 && lp[1].abs() < 1e-7);
        assert!((lp[2] - (5.0 - sol.x[1])).abs() < 1e-12);
        let det = psd[0][0] * psd[1][1] - psd[0][1] * psd[1][0];
        assert!((psd[0][0] - 1.0).abs() < 1e-12 && det > -1e-7);
    }

    #[test]
    fn upper_triangle_entries_only() {
        let text = to_sdpa(&toy());
        let (_, _, entries) = read(&text);
        assert!(entries.values().flatten().all(|&(i, j, _)| i <= j));
    }
}
