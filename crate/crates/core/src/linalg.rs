#![allow(clippy::needless_range_loop)]

//! Exact linear algebra over the rationals: rank, reduced row echelon form
//! and small solvers. Matrices here are tiny (tens of rows), so plain
//! Gaussian elimination with exact pivots is the right tool.

use num_traits::{One, Zero};

use crate::rat::Rat;

/// Rank of the row space of `rows`, computed exactly.
pub fn rank(rows: &[Vec<Rat>]) -> usize {
    let mut m: Vec<Vec<Rat>> = rows.to_vec();
    rank_in_place(&mut m)
}

fn rank_in_place(m: &mut [Vec<Rat>]) -> usize {
    let nrows = m.len();
    if nrows == 0 {
        return 0;
    }
    let ncols = m.iter().map(|r| r.len()).max().unwrap_or(0);
    for row in m.iter_mut() {
        row.resize(ncols, Rat::zero());
    }
    let mut r = 0;
    for c in 0..ncols {
        let Some(p) = (r..nrows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        for i in 0..nrows {
            if i != r && !m[i][c].is_zero() {
                let f = &m[i][c] / &m[r][c];
                for j in c..ncols {
                    let d = &f * &m[r][j];
                    m[i][j] = &m[i][j] - &d;
                }
            }
        }
        r += 1;
        if r == nrows {
            break;
        }
    }
    r
}

/// Reduced row echelon form with zero rows dropped. Pivots are scaled to 1,
/// so the result is the canonical basis of the row space.
pub fn rref(rows: &[Vec<Rat>]) -> Vec<Vec<Rat>> {
    let mut m: Vec<Vec<Rat>> = rows.to_vec();
    let nrows = m.len();
    if nrows == 0 {
        return vec![];
    }
    let ncols = m.iter().map(|r| r.len()).max().unwrap_or(0);
    for row in m.iter_mut() {
        row.resize(ncols, Rat::zero());
    }
    let mut r = 0;
    for c in 0..ncols {
        let Some(p) = (r..nrows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let pivot = m[r][c].clone();
        for j in c..ncols {
            m[r][j] = &m[r][j] / &pivot;
        }
        for i in 0..nrows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in c..ncols {
                    let d = &f * &m[r][j];
                    m[i][j] = &m[i][j] - &d;
                }
            }
        }
        r += 1;
        if r == nrows {
            break;
        }
    }
    m.truncate(r);
    m
}

/// Basis of the solution space of `rows * x = 0` in `Q^dim`.
pub fn nullspace(rows: &[Vec<Rat>], dim: usize) -> Vec<Vec<Rat>> {
    let m: Vec<Vec<Rat>> = rows
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.resize(dim, Rat::zero());
            r
        })
        .collect();
    let reduced = rref(&m);
    // Pivot columns of the reduced form.
    let mut pivots = Vec::new();
    for row in &reduced {
        if let Some(c) = row.iter().position(|x| !x.is_zero()) {
            pivots.push(c);
        }
    }
    let pivot_set: std::collections::BTreeSet<usize> = pivots.iter().copied().collect();
    let mut basis = Vec::new();
    for free in 0..dim {
        if pivot_set.contains(&free) {
            continue;
        }
        let mut v = vec![Rat::zero(); dim];
        v[free] = Rat::one();
        for (row, &p) in reduced.iter().zip(&pivots) {
            // x_p = -sum_{free} row[free] * x_free (pivot scaled to 1)
            v[p] = -row[free].clone();
        }
        basis.push(v);
    }
    basis
}

/// Is `v` in the row space of `basis`?
pub fn in_span(basis: &[Vec<Rat>], v: &[Rat]) -> bool {
    if v.iter().all(Rat::is_zero) {
        return true;
    }
    let mut rows = basis.to_vec();
    let base_rank = rank(&rows);
    rows.push(v.to_vec());
    rank(&rows) == base_rank
}

/// Membership test against rows already in reduced echelon form (as
/// produced by [`rref`]): one reduction pass, no re-elimination.
pub fn in_span_rref(rref_rows: &[Vec<Rat>], v: &[Rat]) -> bool {
    let mut v = v.to_vec();
    for row in rref_rows {
        let Some(p) = row.iter().position(|x| !x.is_zero()) else {
            continue;
        };
        if p < v.len() && !v[p].is_zero() {
            let f = v[p].clone(); // pivot is scaled to 1
            for (j, c) in row.iter().enumerate() {
                if !c.is_zero() {
                    if j >= v.len() {
                        v.resize(j + 1, Rat::zero());
                    }
                    v[j] = &v[j] - &(&f * c);
                }
            }
        }
    }
    v.iter().all(Rat::is_zero)
}

/// Solves `sum_i x_i * basis[i] = v` when `v` lies in the span; returns the
/// coefficient vector, or `None` when `v` is outside the span.
pub fn express_in_basis(basis: &[Vec<Rat>], v: &[Rat]) -> Option<Vec<Rat>> {
    let k = basis.len();
    let ncols = basis
        .iter()
        .map(|r| r.len())
        .chain(std::iter::once(v.len()))
        .max()
        .unwrap_or(0);
    // Augmented system [basis^T | v], eliminated over the k unknowns.
    let mut m: Vec<Vec<Rat>> = (0..ncols)
        .map(|j| {
            let mut row: Vec<Rat> = (0..k)
                .map(|i| basis[i].get(j).cloned().unwrap_or_else(Rat::zero))
                .collect();
            row.push(v.get(j).cloned().unwrap_or_else(Rat::zero));
            row
        })
        .collect();
    let nrows = m.len();
    let mut pivot_col_of_row = vec![usize::MAX; nrows];
    let mut r = 0;
    for c in 0..k {
        let Some(p) = (r..nrows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let pivot = m[r][c].clone();
        for j in c..=k {
            m[r][j] = &m[r][j] / &pivot;
        }
        for i in 0..nrows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in c..=k {
                    let d = &f * &m[r][j];
                    m[i][j] = &m[i][j] - &d;
                }
            }
        }
        pivot_col_of_row[r] = c;
        r += 1;
        if r == nrows {
            break;
        }
    }
    // Inconsistent when a zero row has nonzero rhs.
    for i in r..nrows {
        if !m[i][k].is_zero() {
            return None;
        }
    }
    let mut x = vec![Rat::zero(); k];
    for i in 0..r {
        let c = pivot_col_of_row[i];
        if c != usize::MAX {
            x[c] = m[i][k].clone();
        }
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::rat_int;

    fn v(xs: &[i64]) -> Vec<Rat> {
        xs.iter().map(|&x| rat_int(x)).collect()
    }

    #[test]
    fn rank_basics() {
        assert_eq!(rank(&[]), 0);
        assert_eq!(rank(&[v(&[0, 0])]), 0);
        assert_eq!(rank(&[v(&[1, 0]), v(&[0, 1])]), 2);
        assert_eq!(rank(&[v(&[1, 2]), v(&[2, 4])]), 1);
        assert_eq!(rank(&[v(&[1, 2, 3]), v(&[4, 5, 6]), v(&[7, 8, 9])]), 2);
    }

    #[test]
    fn rref_is_canonical() {
        let a = rref(&[v(&[2, 4]), v(&[1, 3])]);
        let b = rref(&[v(&[1, 3]), v(&[4, 8])]);
        assert_eq!(a, b);
        assert_eq!(a, vec![v(&[1, 0]), v(&[0, 1])]);
    }

    #[test]
    fn span_membership_and_coordinates() {
        let basis = [v(&[1, 0, 1]), v(&[0, 1, 1])];
        assert!(in_span(&basis, &v(&[2, 3, 5])));
        assert!(!in_span(&basis, &v(&[0, 0, 1])));
        let coeffs = express_in_basis(&basis, &v(&[2, 3, 5])).unwrap();
        assert_eq!(coeffs, v(&[2, 3]));
        assert!(express_in_basis(&basis, &v(&[0, 0, 1])).is_none());
    }

    #[test]
    fn ragged_rows_are_padded() {
        assert_eq!(rank(&[v(&[1]), v(&[0, 1])]), 2);
    }

    #[test]
    fn nullspace_dimensions() {
        // x + y + z = 0 in Q^3: nullity 2, vectors orthogonal to (1,1,1).
        let ns = nullspace(&[v(&[1, 1, 1])], 3);
        assert_eq!(ns.len(), 2);
        for w in &ns {
            let dot: Rat = w.iter().cloned().reduce(|a, b| a + b).unwrap();
            assert!(dot.is_zero());
        }
        // Full-rank system: trivial nullspace.
        assert!(nullspace(&[v(&[1, 0]), v(&[0, 1])], 2).is_empty());
        // No constraints: the whole space.
        assert_eq!(nullspace(&[], 3).len(), 3);
    }
}
