//! Dense decompositions used as independent oracles for the power-iteration
//! spectral norm, plus the QR factorization behind orthogonal initialization.

use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::tensor::{ComplexMatrix, RealMatrix};

const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn symmetric_eigenvalues(a: &RealMatrix) -> Result<Vec<f64>> {
    let n = a.rows();
    if n != a.cols() {
        bail!(Dimension, "eigenvalues need a square matrix, got {:?}", a.shape());
    }
    let mut m = a.clone();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j).powi(2))
            .sum();
        let diag: f64 = (0..n).map(|i| m.get(i, i).powi(2)).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

/// Singular values by one-sided (Hestenes) Jacobi orthogonalization of the
/// columns, descending.
pub fn singular_values(a: &RealMatrix) -> Result<Vec<f64>> {
    if a.rows() == 0 || a.cols() == 0 {
        bail!(Dimension, "singular values of an empty matrix");
    }
    // work on the orientation with fewer columns
    let m = if a.cols() > a.rows() {
        a.transpose()
    } else {
        a.clone()
    };
    let (rows, cols) = m.shape();
    // column-major copy
    let mut u: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..rows).map(|i| m.get(i, j)).collect())
        .collect();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = u[p].iter().map(|x| x * x).sum();
                let beta: f64 = u[q].iter().map(|x| x * x).sum();
                let gamma: f64 = u[p].iter().zip(&u[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= 1e-15 * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                let (left, right) = u.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let xp = *x;
                    let yq = *y;
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = u
        .iter()
        .map(|col| libm::sqrt(col.iter().map(|x| x * x).sum()))
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Singular values of a complex matrix through its real embedding
/// `[[Re, -Im], [Im, Re]]`, which repeats every singular value twice.
pub fn singular_values_complex(a: &ComplexMatrix) -> Result<Vec<f64>> {
    let (r, c) = a.shape();
    let emb = RealMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = a.get(i % r, j % c);
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let sv = singular_values(&emb)?;
    Ok(sv.into_iter().step_by(2).collect())
}

/// Orthonormalize the columns of a tall (or square) matrix by modified
/// Gram-Schmidt. Returns `Q` with the same shape.
pub fn orthonormal_columns(a: &RealMatrix) -> Result<RealMatrix> {
    let (rows, cols) = a.shape();
    if cols > rows {
        bail!(Dimension, "cannot orthonormalize {cols} columns in dimension {rows}");
    }
    let mut q: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..rows).map(|i| a.get(i, j)).collect())
        .collect();
    for j in 0..cols {
        for k in 0..j {
            let r: f64 = q[k].iter().zip(&q[j]).map(|(x, y)| x * y).sum();
            let (head, tail) = q.split_at_mut(j);
            for (y, x) in tail[0].iter_mut().zip(&head[k]) {
                *y -= r * x;
            }
        }
        let n = libm::sqrt(q[j].iter().map(|x| x * x).sum());
        if n <= 1e-300 {
            bail!(Numeric, "rank-deficient input to orthonormalization at column {j}");
        }
        q[j].iter_mut().for_each(|x| *x /= n);
    }
    Ok(RealMatrix::from_fn(rows, cols, |i, j| q[j][i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn jacobi_eigen_on_diagonal() {
        let ev = symmetric_eigenvalues(&RealMatrix::diag(&[3.0, -1.0, 2.0])).unwrap();
        assert_eq!(ev, alloc::vec![3.0, 2.0, -1.0]);
    }

    #[test]
    fn jacobi_eigen_2x2() {
        let a = RealMatrix::new(2, 2, alloc::vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let ev = symmetric_eigenvalues(&a).unwrap();
        assert!((ev[0] - 3.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn one_sided_jacobi_matches_eigen_route() {
        let mut rng = SeededRng::new(11);
        let a = RealMatrix::gaussian(7, 4, &mut rng);
        let sv = singular_values(&a).unwrap();
        let ev = symmetric_eigenvalues(&a.transpose().matmul(&a).unwrap()).unwrap();
        for (s, e) in sv.iter().zip(&ev) {
            assert!((s * s - e).abs() <= 1e-12 * ev[0]);
        }
    }

    #[test]
    fn orthonormal_columns_are_orthonormal() {
        let mut rng = SeededRng::new(5);
        let q = orthonormal_columns(&RealMatrix::gaussian(6, 4, &mut rng)).unwrap();
        let g = q.transpose().matmul(&q).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g.get(i, j) - want).abs() < 1e-13);
            }
        }
    }
}
