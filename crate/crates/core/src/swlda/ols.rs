//! Ordinary least squares with an intercept and two-sided t-test p-values.

use statrs::distribution::{ContinuousCDF, StudentsT};

use super::SwldaError;

/// Columns whose residual norm after orthogonalisation drops below this
/// fraction of their own norm are treated as linearly dependent.
pub(crate) const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub intercept: f64,
    /// One per input column, in input order.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub residual_ss: f64,
    pub df: usize,
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
pub fn two_sided_p(t: f64, df: usize) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df > 0");
    (2.0 * dist.cdf(-t.abs())).min(1.0)
}

/// Fit `y ~ 1 + columns` by modified Gram-Schmidt QR.
///
/// Fails with [`SwldaError::RankDeficient`] naming the first column (0-based,
/// intercept excluded) that lies in the span of the intercept and the columns
/// before it.
pub fn ols_fit<C: AsRef<[f64]>>(columns: &[C], y: &[f64]) -> Result<OlsFit, SwldaError> {
    let n = y.len();
    let k = columns.len();
    if n < k + 2 {
        return Err(SwldaError::TooFewRows { rows: n, needed: k + 2 });
    }
    if let Some(bad) = columns.iter().position(|c| c.as_ref().len() != n) {
        return Err(SwldaError::Shape { expected: n, found: columns[bad].as_ref().len() });
    }

    let p = k + 1;
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(p);
    // Row-major p x p upper triangle.
    let mut r = vec![0.0; p * p];
    let intercept_norm = (n as f64).sqrt();
    q.push(vec![1.0 / intercept_norm; n]);
    r[0] = intercept_norm;

    for (j, col) in columns.iter().enumerate() {
        let col = col.as_ref();
        let norm0 = dot(col, col).sqrt();
        let mut v = col.to_vec();
        let jj = j + 1;
        // Two rounds of orthogonalisation keep Q orthonormal to working precision.
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = dot(qi, &v);
                r[i * p + jj] += c;
                axpy(-c, qi, &mut v);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm0 == 0.0 || norm <= RANK_TOLERANCE * norm0 {
            return Err(SwldaError::RankDeficient { column: j });
        }
        v.iter_mut().for_each(|x| *x /= norm);
        r[jj * p + jj] = norm;
        q.push(v);
    }

    let qty: Vec<f64> = q.iter().map(|qi| dot(qi, y)).collect();
    let beta = back_substitute(&r, p, &qty);
    let mut resid = y.to_vec();
    for (qi, c) in q.iter().zip(&qty) {
        axpy(-c, qi, &mut resid);
    }
    let residual_ss = dot(&resid, &resid);
    let df = n - k - 1;
    let sigma2 = residual_ss / df as f64;

    // diag((R^T R)^-1) = squared row norms of R^-1.
    let rinv = invert_upper(&r, p);
    let mut std_errors = Vec::with_capacity(k);
    let mut t_values = Vec::with_capacity(k);
    let mut p_values = Vec::with_capacity(k);
    for i in 1..p {
        let row_ss: f64 = (i..p).map(|j| rinv[i * p + j].powi(2)).sum();
        let se = (sigma2 * row_ss).sqrt();
        let t = beta[i] / se;
        std_errors.push(se);
        t_values.push(t);
        p_values.push(two_sided_p(t, df));
    }

    Ok(OlsFit {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        std_errors,
        t_values,
        p_values,
        residual_ss,
        df,
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn back_substitute(r: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| r[i * p + j] * x[j]).sum();
        x[i] = (b[i] - s) / r[i * p + i];
    }
    x
}

fn invert_upper(r: &[f64], p: usize) -> Vec<f64> {
    let mut inv = vec![0.0; p * p];
    for col in 0..p {
        let mut e = vec![0.0; p];
        e[col] = 1.0;
        let x = back_substitute(r, p, &e);
        for row in 0..p {
            inv[row * p + col] = x[row];
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Normal equations solved by Gauss-Jordan elimination; independent of the QR path.
    fn normal_equations(columns: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = y.len();
        let mut design: Vec<Vec<f64>> = vec![vec![1.0; n]];
        design.extend(columns.iter().cloned());
        let p = design.len();
        let mut a = vec![vec![0.0; 2 * p]];
        a.clear();
        for i in 0..p {
            let mut row: Vec<f64> = (0..p).map(|j| dot(&design[i], &design[j])).collect();
            row.extend((0..p).map(|j| if i == j { 1.0 } else { 0.0 }));
            a.push(row);
        }
        for c in 0..p {
            let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            let d = a[c][c];
            a[c].iter_mut().for_each(|v| *v /= d);
            for i in 0..p {
                if i != c {
                    let f = a[i][c];
                    let pivot_row = a[c].clone();
                    a[i].iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
                }
            }
        }
        let xty: Vec<f64> = design.iter().map(|d| dot(d, y)).collect();
        let beta: Vec<f64> = (0..p).map(|i| (0..p).map(|j| a[i][p + j] * xty[j]).sum()).collect();
        let fitted: Vec<f64> = (0..n).map(|r| (0..p).map(|j| beta[j] * design[j][r]).sum()).collect();
        let sse: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
        let sigma2 = sse / (n - p) as f64;
        let pv = (1..p)
            .map(|i| two_sided_p(beta[i] / (sigma2 * a[i][p + i]).sqrt(), n - p))
            .collect();
        (beta, pv)
    }

    fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 80;
        let cols: Vec<Vec<f64>> = (0..4).map(|_| noise(&mut rng, n)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 0.7 + 1.5 * cols[0][i] - 0.4 * cols[2][i] + 0.8 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let fit = ols_fit(&cols, &y).unwrap();
        let (beta, pv) = normal_equations(&cols, &y);
        assert!((fit.intercept - beta[0]).abs() < 1e-10);
        for i in 0..4 {
            assert!((fit.coefficients[i] - beta[i + 1]).abs() < 1e-10);
            assert!((fit.p_values[i] - pv[i]).abs() < 1e-9, "{} vs {}", fit.p_values[i], pv[i]);
        }
        assert_eq!(fit.df, n - 5);
    }

    #[test]
    fn binary_response_equal_to_a_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200;
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.3))).collect();
        let mut cols = vec![y.clone()];
        cols.extend((0..3).map(|_| noise(&mut rng, n)));
        let fit = ols_fit(&cols, &y).unwrap();
        assert!(fit.p_values[0] < 1e-10);
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-9);
        let (_, pv) = normal_equations(&cols, &y);
        assert!(pv[0] < 1e-10);
    }

    #[test]
    fn independent_response_is_not_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 50;
        let x = noise(&mut rng, n);
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        let fit = ols_fit(&[x.clone()], &y).unwrap();
        assert!(fit.p_values[0] > 0.001);
        // Permutation check: the observed |t| is not extreme among shuffles of y.
        let observed = fit.t_values[0].abs();
        let mut y_perm = y.clone();
        let mut as_extreme = 0;
        for _ in 0..200 {
            for i in (1..n).rev() {
                y_perm.swap(i, rng.gen_range(0..=i));
            }
            if ols_fit(&[x.clone()], &y_perm).unwrap().t_values[0].abs() >= observed {
                as_extreme += 1;
            }
        }
        assert!(as_extreme as f64 / 200.0 > 0.001);
    }

    #[test]
    fn constant_column_is_rank_deficient() {
        let y: Vec<f64> = (0..20).map(|i| f64::from(i % 2 == 0)).collect();
        let err = ols_fit(&[vec![3.0; 20]], &y).unwrap_err();
        assert!(matches!(err, SwldaError::RankDeficient { column: 0 }));

        let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v + 1.0).collect();
        let err = ols_fit(&[a, vec![1.0; 20].iter().map(|v| v * 0.5).collect(), b], &y).unwrap_err();
        assert!(matches!(err, SwldaError::RankDeficient { column: 1 }));
    }

    #[test]
    fn too_few_rows() {
        let y = vec![0.0, 1.0, 0.0];
        assert!(matches!(
            ols_fit(&[vec![1.0, 2.0, 3.0], vec![0.0, 1.0, 1.0]], &y),
            Err(SwldaError::TooFewRows { .. })
        ));
    }
}
