//! Least squares, partial correlation, and the Fisher-Z conditional
//! independence test.
//!
//! Everything here is pure and safe to call concurrently on shared data.
//! Regression goes through a rank-revealing orthogonal decomposition
//! (column-pivoted QR) rather than the normal equations; the relative rank
//! tolerance is [`RANK_TOL`].

pub mod linalg;

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sem::Dataset;

/// Relative tolerance below which a pivot is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Default significance level for conditional independence tests.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Ordinary least squares fit with intercept.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    /// Coefficient per regressor column (the treatment's entry is the
    /// adjusted effect when the treatment is among the regressors).
    pub coefficients: BTreeMap<String, f64>,
    pub intercept: f64,
    /// Unbiased residual variance, RSS / (n - #params).
    pub residual_variance: f64,
    pub n: usize,
}

/// Outcome of a conditional independence test at a fixed significance level.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CiResult {
    pub statistic: f64,
    pub p_value: f64,
    /// `p_value > alpha`
    pub independent: bool,
    pub cond_size: usize,
    /// Set when `n - |cond| - 3 < 1`; the test then reports dependence
    /// rather than pruning on no power.
    pub underpowered: bool,
}

/// Least squares regression of `response` on `regressors` plus an intercept.
///
/// Rank deficiency is an error naming the collinear columns.
pub fn ols(d: &Dataset, response: &str, regressors: &[&str]) -> Result<RegressionFit> {
    let n = d.n();
    if n < regressors.len() + 2 {
        return Err(Error::InvalidQuery(format!(
            "need n > #regressors + 1, got n={n} with {} regressors",
            regressors.len()
        )));
    }
    let y = DVector::from_column_slice(d.col_by_name(response)?);
    let mut a = DMatrix::zeros(n, regressors.len() + 1);
    a.column_mut(0).fill(1.0);
    for (j, name) in regressors.iter().enumerate() {
        a.column_mut(j + 1).copy_from_slice(d.col_by_name(name)?);
    }
    if a.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression input".into()));
    }
    let fit = linalg::lstsq(&a, &y, RANK_TOL);
    if fit.rank < regressors.len() + 1 {
        let columns = fit
            .dropped
            .iter()
            .map(|&j| if j == 0 { "(intercept)".to_string() } else { regressors[j - 1].to_string() })
            .collect();
        return Err(Error::RankDeficient { columns });
    }
    let dof = n - (regressors.len() + 1);
    let mut coefficients = BTreeMap::new();
    for (j, name) in regressors.iter().enumerate() {
        coefficients.insert((*name).to_string(), fit.coefficients[j + 1]);
    }
    Ok(RegressionFit {
        coefficients,
        intercept: fit.coefficients[0],
        residual_variance: fit.residual_sum_squares / dof.max(1) as f64,
        n,
    })
}

/// The treatment coefficient from the regression of `y` on `{x} u z`.
pub fn adjusted_effect(d: &Dataset, x: &str, y: &str, z: &[&str]) -> Result<f64> {
    let mut regressors = Vec::with_capacity(z.len() + 1);
    regressors.push(x);
    regressors.extend_from_slice(z);
    let fit = ols(d, y, &regressors)?;
    Ok(fit.coefficients[x])
}

/// Correlation of the residuals of `a` and `b` after regressing each on
/// `cond` (with intercept). Reduces to Pearson correlation for empty `cond`.
pub fn partial_correlation(d: &Dataset, a: &str, b: &str, cond: &[&str]) -> Result<f64> {
    let n = d.n();
    if n <= cond.len() + 3 {
        return Err(Error::InvalidQuery(format!(
            "need n > |cond| + 3, got n={n} with |cond|={}",
            cond.len()
        )));
    }
    let res_a = residualize(d, a, cond)?;
    let res_b = residualize(d, b, cond)?;
    let na = res_a.norm();
    let nb = res_b.norm();
    let scale = (d.col_by_name(a)?.iter().map(|v| v * v).sum::<f64>()).sqrt().max(1.0);
    if na <= 1e-12 * scale {
        return Err(Error::DegenerateVariance(a.into()));
    }
    let scale_b = (d.col_by_name(b)?.iter().map(|v| v * v).sum::<f64>()).sqrt().max(1.0);
    if nb <= 1e-12 * scale_b {
        return Err(Error::DegenerateVariance(b.into()));
    }
    Ok((res_a.dot(&res_b) / (na * nb)).clamp(-1.0, 1.0))
}

fn residualize(d: &Dataset, target: &str, cond: &[&str]) -> Result<DVector<f64>> {
    let n = d.n();
    let y = DVector::from_column_slice(d.col_by_name(target)?);
    let mut a = DMatrix::zeros(n, cond.len() + 1);
    a.column_mut(0).fill(1.0);
    for (j, name) in cond.iter().enumerate() {
        a.column_mut(j + 1).copy_from_slice(d.col_by_name(name)?);
    }
    let fit = linalg::lstsq(&a, &y, RANK_TOL);
    Ok(&y - &a * &fit.coefficients)
}

/// Fisher-Z conditional independence test of `a` and `b` given `cond`.
pub fn fisher_z_test(d: &Dataset, a: &str, b: &str, cond: &[&str], alpha: f64) -> Result<CiResult> {
    let n = d.n();
    if n as i64 - cond.len() as i64 - 3 < 1 {
        return Ok(CiResult {
            statistic: f64::INFINITY,
            p_value: 0.0,
            independent: false,
            cond_size: cond.len(),
            underpowered: true,
        });
    }
    let r = partial_correlation(d, a, b, cond)?;
    Ok(fisher_z_from_corr(r, n, cond.len(), alpha))
}

/// Fisher-Z verdict from an already-computed (partial) correlation:
/// `z = atanh(r)`, `statistic = sqrt(n - |cond| - 3) * |z|`, two-sided
/// normal p-value, independent iff `p > alpha`.
pub fn fisher_z_from_corr(r: f64, n: usize, cond_size: usize, alpha: f64) -> CiResult {
    let df = n as f64 - cond_size as f64 - 3.0;
    if df < 1.0 {
        return CiResult {
            statistic: f64::INFINITY,
            p_value: 0.0,
            independent: false,
            cond_size,
            underpowered: true,
        };
    }
    let r = r.clamp(-1.0, 1.0);
    let (statistic, p_value) = if r.abs() >= 1.0 {
        (f64::INFINITY, 0.0)
    } else {
        let stat = df.sqrt() * r.atanh().abs();
        (stat, statrs::function::erf::erfc(stat / std::f64::consts::SQRT_2))
    };
    CiResult { statistic, p_value, independent: p_value > alpha, cond_size, underpowered: false }
}

/// Column means and covariance of a dataset, for fast Gaussian conditional
/// independence queries via Schur complements. Agrees with the
/// residualization route to numerical precision (see tests).
pub struct CovMatrix {
    names: Vec<String>,
    cov: DMatrix<f64>,
    n: usize,
}

impl CovMatrix {
    pub fn from_dataset(d: &Dataset) -> Self {
        let n = d.n();
        let m = d.column_count();
        let mut centered = d.values().clone();
        for j in 0..m {
            let mean = centered.column(j).sum() / n as f64;
            centered.column_mut(j).add_scalar_mut(-mean);
        }
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        CovMatrix { names: d.names().to_vec(), cov, n }
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownColumn(name.into()))
    }

    /// Partial correlation of columns `a` and `b` given `cond` (indices).
    pub fn partial_correlation_ix(&self, a: usize, b: usize, cond: &[usize]) -> Result<f64> {
        let (saa, sbb, sab) = if cond.is_empty() {
            (self.cov[(a, a)], self.cov[(b, b)], self.cov[(a, b)])
        } else {
            let q = cond.len();
            let mut sigma = DMatrix::zeros(q, q);
            for (i, &ci) in cond.iter().enumerate() {
                for (j, &cj) in cond.iter().enumerate() {
                    sigma[(i, j)] = self.cov[(ci, cj)];
                }
            }
            let sa = DVector::from_iterator(q, cond.iter().map(|&c| self.cov[(a, c)]));
            let sb = DVector::from_iterator(q, cond.iter().map(|&c| self.cov[(b, c)]));
            let chol = Cholesky::new(sigma)
                .ok_or_else(|| Error::DegenerateVariance("conditioning set".into()))?;
            let wa = chol.solve(&sa);
            let wb = chol.solve(&sb);
            (
                self.cov[(a, a)] - sa.dot(&wa),
                self.cov[(b, b)] - sb.dot(&wb),
                self.cov[(a, b)] - sa.dot(&wb),
            )
        };
        let denom_sq = saa * sbb;
        if !(denom_sq > 0.0) || saa <= 1e-14 * self.cov[(a, a)].max(1.0) {
            return Err(Error::DegenerateVariance(self.names[a].clone()));
        }
        Ok((sab / denom_sq.sqrt()).clamp(-1.0, 1.0))
    }

    /// Fisher-Z test of columns `a` and `b` given `cond` (indices).
    pub fn fisher_z_ix(&self, a: usize, b: usize, cond: &[usize], alpha: f64) -> Result<CiResult> {
        if self.n as i64 - cond.len() as i64 - 3 < 1 {
            return Ok(CiResult {
                statistic: f64::INFINITY,
                p_value: 0.0,
                independent: false,
                cond_size: cond.len(),
                underpowered: true,
            });
        }
        let r = self.partial_correlation_ix(a, b, cond)?;
        Ok(fisher_z_from_corr(r, self.n, cond.len(), alpha))
    }
}

/// Conditional independence backend for the selection algorithms. Only the
/// Gaussian Fisher-Z implementation ships; the trait is the extension point
/// for other tests.
pub trait CiBackend: Sync {
    /// Tests columns `a` and `b` given `cond`, all as dataset column indices.
    fn test(&self, a: usize, b: usize, cond: &[usize], alpha: f64) -> Result<CiResult>;
}

/// Fisher-Z backend over a precomputed covariance matrix.
pub struct FisherZBackend {
    cov: CovMatrix,
}

impl FisherZBackend {
    pub fn new(d: &Dataset) -> Self {
        FisherZBackend { cov: CovMatrix::from_dataset(d) }
    }
}

impl CiBackend for FisherZBackend {
    fn test(&self, a: usize, b: usize, cond: &[usize], alpha: f64) -> Result<CiResult> {
        self.cov.fisher_z_ix(a, b, cond, alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sem::{Dataset, Role};

    fn dataset_from_cols(names: &[&str], roles: &[Role], cols: &[Vec<f64>]) -> Dataset {
        let n = cols[0].len();
        let mut m = DMatrix::zeros(n, cols.len());
        for (j, c) in cols.iter().enumerate() {
            m.column_mut(j).copy_from_slice(c);
        }
        Dataset::new(
            names.iter().map(|s| s.to_string()).collect(),
            roles.to_vec(),
            m,
        )
        .unwrap()
    }

    fn toy(n: usize, seed: u64) -> Dataset {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let mut normal = || {
            let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        let a: Vec<f64> = (0..n).map(|_| normal()).collect();
        let b: Vec<f64> = (0..n).map(|_| normal()).collect();
        let x: Vec<f64> = (0..n).map(|i| a[i] + 0.5 * normal()).collect();
        let y: Vec<f64> = (0..n).map(|i| 2.0 * a[i] + 3.0 * b[i] + 0.3 * x[i] + normal()).collect();
        dataset_from_cols(
            &["X", "Y", "A", "B"],
            &[Role::Treatment, Role::Outcome, Role::Covariate, Role::Covariate],
            &[x, y, a, b],
        )
    }

    #[test]
    fn ols_interpolates_exact_linear_data() {
        let a: Vec<f64> = (0..20).map(|i| i as f64 * 0.3 - 2.0).collect();
        let b: Vec<f64> = (0..20).map(|i| ((i * 7) % 13) as f64).collect();
        let y: Vec<f64> = (0..20).map(|i| 2.0 * a[i] + 3.0 * b[i]).collect();
        let d = dataset_from_cols(
            &["A", "Y", "B"],
            &[Role::Treatment, Role::Outcome, Role::Covariate],
            &[a, y, b],
        );
        let fit = ols(&d, "Y", &["A", "B"]).unwrap();
        assert!((fit.coefficients["A"] - 2.0).abs() < 1e-10);
        assert!((fit.coefficients["B"] - 3.0).abs() < 1e-10);
        assert!(fit.intercept.abs() < 1e-10);
    }

    #[test]
    fn ols_reports_collinear_columns() {
        let a: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let twice: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let y: Vec<f64> = a.iter().map(|v| v + 1.0).collect();
        let d = dataset_from_cols(
            &["A", "Y", "A2"],
            &[Role::Treatment, Role::Outcome, Role::Covariate],
            &[a, y, twice],
        );
        match ols(&d, "Y", &["A", "A2"]) {
            Err(Error::RankDeficient { columns }) => assert!(!columns.is_empty()),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn ols_residuals_orthogonal_to_regressors() {
        let d = toy(500, 9);
        let fit = ols(&d, "Y", &["X", "A", "B"]).unwrap();
        let n = d.n();
        let y = d.col_by_name("Y").unwrap();
        let mut resid = vec![0.0; n];
        for i in 0..n {
            let mut pred = fit.intercept;
            for name in ["X", "A", "B"] {
                pred += fit.coefficients[name] * d.col_by_name(name).unwrap()[i];
            }
            resid[i] = y[i] - pred;
        }
        for name in ["X", "A", "B"] {
            let col = d.col_by_name(name).unwrap();
            let dot: f64 = (0..n).map(|i| resid[i] * col[i]).sum();
            let scale: f64 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(dot.abs() < 1e-8 * n as f64 * scale.max(1.0), "dot={dot} for {name}");
        }
    }

    #[test]
    fn partial_correlation_with_empty_cond_is_pearson() {
        let d = toy(400, 3);
        let r = partial_correlation(&d, "X", "A", &[]).unwrap();
        let x = d.col_by_name("X").unwrap();
        let a = d.col_by_name("A").unwrap();
        let n = d.n() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let ma = a.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(a).map(|(u, v)| (u - mx) * (v - ma)).sum();
        let sxx: f64 = x.iter().map(|u| (u - mx) * (u - mx)).sum();
        let saa: f64 = a.iter().map(|v| (v - ma) * (v - ma)).sum();
        assert!((r - sxy / (sxx * saa).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn partial_correlation_degenerate_errors() {
        let d = dataset_from_cols(
            &["X", "Y", "C"],
            &[Role::Treatment, Role::Outcome, Role::Covariate],
            &[
                vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
                vec![2.0, 1.0, 4.0, 3.0, 6.0, 5.0],
                vec![7.0, 7.0, 7.0, 7.0, 7.0, 7.0],
            ],
        );
        assert!(matches!(
            partial_correlation(&d, "C", "Y", &[]),
            Err(Error::DegenerateVariance(_))
        ));
    }

    #[test]
    fn fisher_z_zero_correlation_has_p_one() {
        let res = fisher_z_from_corr(0.0, 100, 0, 0.05);
        assert_eq!(res.statistic, 0.0);
        assert!((res.p_value - 1.0).abs() < 1e-12);
        assert!(res.independent);
    }

    #[test]
    fn fisher_z_perfect_correlation_is_dependent() {
        let res = fisher_z_from_corr(1.0, 50, 2, 0.05);
        assert_eq!(res.p_value, 0.0);
        assert!(!res.independent);
    }

    #[test]
    fn fisher_z_underpowered_guard() {
        let d = toy(5, 1);
        let res = fisher_z_test(&d, "X", "Y", &["A", "B"], 0.05).unwrap();
        assert!(res.underpowered);
        assert!(!res.independent);
    }

    #[test]
    fn fisher_z_symmetry() {
        let d = toy(300, 17);
        let ab = fisher_z_test(&d, "X", "Y", &["A"], 0.05).unwrap();
        let ba = fisher_z_test(&d, "Y", "X", &["A"], 0.05).unwrap();
        assert!((ab.statistic - ba.statistic).abs() < 1e-10);
        assert!((ab.p_value - ba.p_value).abs() < 1e-12);
    }

    #[test]
    fn covariance_route_matches_residualization() {
        let d = toy(250, 5);
        let cov = CovMatrix::from_dataset(&d);
        for (a, b, cond) in [
            ("X", "Y", vec![]),
            ("X", "Y", vec!["A"]),
            ("A", "Y", vec!["X", "B"]),
            ("B", "X", vec!["A", "Y"]),
        ] {
            let refs: Vec<&str> = cond.clone();
            let r1 = partial_correlation(&d, a, b, &refs).unwrap();
            let ai = cov.index_of(a).unwrap();
            let bi = cov.index_of(b).unwrap();
            let cix: Vec<usize> = cond.iter().map(|c| cov.index_of(c).unwrap()).collect();
            let r2 = cov.partial_correlation_ix(ai, bi, &cix).unwrap();
            assert!((r1 - r2).abs() < 1e-8, "{a},{b}|{cond:?}: {r1} vs {r2}");
        }
    }

    #[test]
    fn recursive_partial_correlation_formula_agrees() {
        // r_{ab.Sc} = (r_{ab.S} - r_{ac.S} r_{bc.S}) / sqrt((1-r_{ac.S}^2)(1-r_{bc.S}^2))
        let d = toy(600, 21);
        let r_ab_c = partial_correlation(&d, "X", "Y", &["A"]).unwrap();
        let r_ab = partial_correlation(&d, "X", "Y", &[]).unwrap();
        let r_ac = partial_correlation(&d, "X", "A", &[]).unwrap();
        let r_bc = partial_correlation(&d, "Y", "A", &[]).unwrap();
        let rec = (r_ab - r_ac * r_bc) / ((1.0 - r_ac * r_ac) * (1.0 - r_bc * r_bc)).sqrt();
        assert!((r_ab_c - rec).abs() < 1e-8);

        let r2 = partial_correlation(&d, "X", "Y", &["A", "B"]).unwrap();
        let s_ab = partial_correlation(&d, "X", "Y", &["A"]).unwrap();
        let s_ac = partial_correlation(&d, "X", "B", &["A"]).unwrap();
        let s_bc = partial_correlation(&d, "Y", "B", &["A"]).unwrap();
        let rec2 = (s_ab - s_ac * s_bc) / ((1.0 - s_ac * s_ac) * (1.0 - s_bc * s_bc)).sqrt();
        assert!((r2 - rec2).abs() < 1e-8);
    }
}
