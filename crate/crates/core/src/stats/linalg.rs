//! Column-pivoted Householder QR and least squares.
//!
//! Pivoting makes the factorization rank-revealing: columns whose remaining
//! norm falls below `rel_tol` times the largest initial pivot are flagged as
//! collinear and get zero coefficients (a basic solution).

use nalgebra::{DMatrix, DVector};

pub struct Lstsq {
    /// Coefficients in original column order; zero for dropped columns.
    pub coefficients: DVector<f64>,
    pub rank: usize,
    /// Original indices of columns judged collinear with earlier pivots.
    pub dropped: Vec<usize>,
    pub residual_sum_squares: f64,
}

/// Solves `min ||a x - y||` via Householder QR with column pivoting.
pub fn lstsq(a: &DMatrix<f64>, y: &DVector<f64>, rel_tol: f64) -> Lstsq {
    let (n, p) = a.shape();
    assert_eq!(y.len(), n, "response length must match row count");
    let mut r = a.clone();
    let mut qty = y.clone();
    let mut piv: Vec<usize> = (0..p).collect();
    let mut col_norms: Vec<f64> = (0..p).map(|j| r.column(j).norm_squared()).collect();

    let kmax = n.min(p);
    let mut rank = kmax;
    let mut threshold = 0.0;
    for k in 0..kmax {
        // pivot: remaining column with the largest trailing norm
        let (jmax, norm_sq) = (k..p)
            .map(|j| (j, r.view((k, j), (n - k, 1)).norm_squared()))
            .fold((k, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if k == 0 {
            threshold = rel_tol * norm_sq.sqrt().max(f64::MIN_POSITIVE);
        }
        if norm_sq.sqrt() <= threshold {
            rank = k;
            break;
        }
        if jmax != k {
            r.swap_columns(k, jmax);
            piv.swap(k, jmax);
            col_norms.swap(k, jmax);
        }
        // Householder reflection zeroing r[k+1.., k]
        let mut v = DVector::zeros(n - k);
        for i in k..n {
            v[i - k] = r[(i, k)];
        }
        let alpha = -v[0].signum() * v.norm();
        if alpha == 0.0 {
            rank = k;
            break;
        }
        v[0] -= alpha;
        let vnorm_sq = v.norm_squared();
        if vnorm_sq == 0.0 {
            rank = k;
            break;
        }
        for j in k..p {
            let mut dot = 0.0;
            for i in k..n {
                dot += v[i - k] * r[(i, j)];
            }
            let scale = 2.0 * dot / vnorm_sq;
            for i in k..n {
                r[(i, j)] -= scale * v[i - k];
            }
        }
        let mut dot = 0.0;
        for i in k..n {
            dot += v[i - k] * qty[i];
        }
        let scale = 2.0 * dot / vnorm_sq;
        for i in k..n {
            qty[i] -= scale * v[i - k];
        }
        r[(k, k)] = alpha;
    }

    // back-substitute on the rank x rank leading block
    let mut beta_piv = DVector::zeros(p);
    for i in (0..rank).rev() {
        let mut s = qty[i];
        for j in i + 1..rank {
            s -= r[(i, j)] * beta_piv[j];
        }
        beta_piv[i] = s / r[(i, i)];
    }
    let mut coefficients = DVector::zeros(p);
    for j in 0..rank {
        coefficients[piv[j]] = beta_piv[j];
    }
    let dropped: Vec<usize> = {
        let mut d: Vec<usize> = piv[rank..].to_vec();
        d.sort_unstable();
        d
    };
    let rss = (a * &coefficients - y).norm_squared();
    Lstsq { coefficients, rank, dropped, residual_sum_squares: rss }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_coefficients() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 1.0, 3.0, 1.0, 5.0, 1.0, 7.0]);
        let truth = DVector::from_column_slice(&[0.5, -2.0]);
        let y = &a * &truth;
        let fit = lstsq(&a, &y, 1e-10);
        assert_eq!(fit.rank, 2);
        assert!((fit.coefficients - truth).norm() < 1e-10);
        assert!(fit.residual_sum_squares < 1e-18);
    }

    #[test]
    fn flags_collinear_columns() {
        // third column = first + second
        let a = DMatrix::from_row_slice(
            5,
            3,
            &[
                1.0, 0.0, 1.0, //
                0.0, 1.0, 1.0, //
                1.0, 1.0, 2.0, //
                2.0, 0.5, 2.5, //
                1.0, 2.0, 3.0,
            ],
        );
        let y = DVector::from_column_slice(&[1.0, 2.0, 3.0, 2.5, 5.0]);
        let fit = lstsq(&a, &y, 1e-10);
        assert_eq!(fit.rank, 2);
        assert_eq!(fit.dropped.len(), 1);
    }

    #[test]
    fn underdetermined_gives_basic_solution() {
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 0.5, -1.0, 0.0, 1.0, 2.0, 0.3]);
        let y = DVector::from_column_slice(&[1.0, -1.0]);
        let fit = lstsq(&a, &y, 1e-10);
        assert_eq!(fit.rank, 2);
        assert!(fit.residual_sum_squares < 1e-16);
    }
}
