//! k-sparse least squares via a discrete first-order method, plus an
//! exhaustive enumeration oracle.
//!
//! The problem is `min 0.5 ||y - alpha x - Z beta||^2` subject to at most `k`
//! nonzero covariate coefficients; the treatment coefficient `alpha` is
//! unpenalized and never thresholded. The iteration is projected gradient
//! with hard thresholding,
//!
//! ```text
//! theta_{m+1} = H_k(theta_m - (1/L) grad g(theta_m))
//! ```
//!
//! where `H_k` keeps the treatment coordinate and the `k` largest-magnitude
//! covariate coordinates (ties broken toward the lower column index), and
//! `L >= l = lambda_max(A^T A)` for the design `A`. Under that step bound the
//! objective sequence is non-increasing and satisfies
//! `g(theta_m) - g(theta_{m+1}) >= (L - l)/2 ||theta_m - theta_{m+1}||^2`,
//! which is asserted per iteration in debug builds. On support
//! stabilization the iterate is polished by exact least squares on the
//! support; the best result over restarts wins.
//!
//! Columns are standardized internally when the problem asks for it and
//! coefficients are mapped back to the original scale; the reported
//! objective is recomputed from the returned coefficients.

use std::collections::BTreeSet;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::sem::derive_seed;
use crate::stats::linalg;

/// Default cap on `p` for exhaustive enumeration.
pub const EXHAUSTIVE_CAP: usize = 15;

/// A k-sparse regression problem. Column 0 of `design` is the treatment and
/// is exempt from the sparsity budget; columns `1..=p` are covariates.
#[derive(Debug, Clone)]
pub struct SubsetProblem {
    pub design: DMatrix<f64>,
    pub response: DVector<f64>,
    /// Sparsity budget over covariate coefficients.
    pub k: usize,
    /// Optional box bound `C`: covariate coefficients are clipped to
    /// `[-C, C]` after each thresholding step (in standardized coordinates).
    pub box_bound: Option<f64>,
    /// Standardize columns internally (recommended; coefficients are
    /// reported on the original scale either way).
    pub standardize: bool,
}

impl SubsetProblem {
    pub fn new(design: DMatrix<f64>, response: DVector<f64>, k: usize) -> Self {
        SubsetProblem { design, response, k, box_bound: None, standardize: true }
    }
}

/// Solver knobs. `step_constant` must be at least the spectral bound `l`
/// computed at setup; leaving it unset uses `1.1 * l`.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub step_constant: Option<f64>,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            step_constant: None,
            max_iterations: 500,
            tolerance: 1e-10,
            restarts: 50,
            seed: 0,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Threshold,
    Polish,
}

/// One recorded solver step: the objective after the step and the squared
/// parameter movement, in the solver's internal (standardized) coordinates.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub objective: f64,
    pub step_norm_sq: f64,
    pub kind: StepKind,
}

/// Solution of a k-sparse solve. `support` holds covariate indices
/// (0-based positions among the covariate columns), matching `beta`.
#[derive(Debug, Clone)]
pub struct SubsetSolution {
    pub support: BTreeSet<usize>,
    pub beta: DVector<f64>,
    pub alpha: f64,
    pub intercept: f64,
    /// `0.5 ||y - intercept - alpha x - Z beta||^2`, recomputed from the
    /// returned coefficients.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Option<Vec<TraceStep>>,
}

/// The recorded objective sequence, if the solver ran with trace enabled.
pub fn objective_trace(sol: &SubsetSolution) -> Option<Vec<f64>> {
    sol.trace.as_ref().map(|t| t.iter().map(|s| s.objective).collect())
}

/// Solves one fixed-k problem end to end.
pub fn solve_k_sparse(problem: &SubsetProblem, cfg: &SolverConfig) -> Result<SubsetSolution> {
    Prepared::from_problem(problem)?.solve(problem.k, cfg)
}

/// Global minimizer by enumerating every support of size at most `k`.
/// Refuses problems with more than [`EXHAUSTIVE_CAP`] covariates.
pub fn solve_exhaustive(problem: &SubsetProblem) -> Result<SubsetSolution> {
    Prepared::from_problem(problem)?.solve_exhaustive(problem.k, EXHAUSTIVE_CAP)
}

/// Precomputed quantities shared across solves on the same design: the
/// standardized Gram matrix, its largest eigenvalue, and the centered data.
pub struct Prepared {
    n: usize,
    p: usize,
    design: DMatrix<f64>,
    response: DVector<f64>,
    std_design: DMatrix<f64>,
    y_centered: DVector<f64>,
    col_mean: Vec<f64>,
    col_scale: Vec<f64>,
    y_mean: f64,
    gram: DMatrix<f64>,
    aty: DVector<f64>,
    yty: f64,
    l_max: f64,
    box_bound: Option<f64>,
    standardize: bool,
}

impl Prepared {
    pub fn from_problem(problem: &SubsetProblem) -> Result<Self> {
        Self::new(&problem.design, &problem.response, problem.standardize, problem.box_bound)
    }

    pub fn new(
        design: &DMatrix<f64>,
        response: &DVector<f64>,
        standardize: bool,
        box_bound: Option<f64>,
    ) -> Result<Self> {
        let n = design.nrows();
        let m = design.ncols();
        if m == 0 || n == 0 || response.len() != n {
            return Err(Error::InvalidQuery("empty design or mismatched response".into()));
        }
        if design.iter().any(|v| !v.is_finite()) || response.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("subset problem data".into()));
        }
        let mut std_design = design.clone();
        let mut col_mean = vec![0.0; m];
        let mut col_scale = vec![1.0; m];
        let mut y_centered = response.clone();
        let mut y_mean = 0.0;
        if standardize {
            for j in 0..m {
                let mean = std_design.column(j).sum() / n as f64;
                std_design.column_mut(j).add_scalar_mut(-mean);
                let norm = std_design.column(j).norm() / (n as f64).sqrt();
                let scale = if norm > 1e-12 { norm } else { 1.0 };
                std_design.column_mut(j).scale_mut(1.0 / scale);
                col_mean[j] = mean;
                col_scale[j] = scale;
            }
            y_mean = y_centered.sum() / n as f64;
            y_centered.add_scalar_mut(-y_mean);
        }
        let gram = std_design.transpose() * &std_design;
        let aty = std_design.transpose() * &y_centered;
        let yty = y_centered.norm_squared();
        let l_max = gram.clone().symmetric_eigen().eigenvalues.iter().cloned().fold(0.0, f64::max);
        Ok(Prepared {
            n,
            p: m - 1,
            design: design.clone(),
            response: response.clone(),
            std_design,
            y_centered,
            col_mean,
            col_scale,
            y_mean,
            gram,
            aty,
            yty,
            l_max,
            box_bound,
            standardize,
        })
    }

    pub fn covariate_count(&self) -> usize {
        self.p
    }

    pub fn sample_count(&self) -> usize {
        self.n
    }

    /// Largest eigenvalue of the (standardized) design Gram matrix.
    pub fn spectral_bound(&self) -> f64 {
        self.l_max
    }

    /// Objective at a sparse coefficient vector, from the Gram cache:
    /// `0.5 (y'y - 2 theta'b + theta'G theta)`.
    fn objective_sparse(&self, active: &[usize], theta: &DVector<f64>) -> f64 {
        let mut lin = 0.0;
        let mut quad = 0.0;
        for &i in active {
            lin += theta[i] * self.aty[i];
            let gi = self.gram.column(i);
            let mut s = 0.0;
            for &j in active {
                s += gi[j] * theta[j];
            }
            quad += theta[i] * s;
        }
        0.5 * (self.yty - 2.0 * lin + quad)
    }

    fn gradient(&self, active: &[usize], theta: &DVector<f64>, out: &mut DVector<f64>) {
        out.copy_from(&self.aty);
        out.neg_mut();
        for &i in active {
            out.axpy(theta[i], &self.gram.column(i).clone_owned(), 1.0);
        }
    }

    /// Exact least squares restricted to `active` (design columns): solves
    /// the Gram subsystem; falls back to a QR solve when it is singular.
    fn least_squares_on(&self, active: &[usize]) -> DVector<f64> {
        let q = active.len();
        let mut theta = DVector::zeros(self.p + 1);
        if q == 0 {
            return theta;
        }
        let mut sub = DMatrix::zeros(q, q);
        for (i, &a) in active.iter().enumerate() {
            for (j, &b) in active.iter().enumerate() {
                sub[(i, j)] = self.gram[(a, b)];
            }
        }
        let rhs = DVector::from_iterator(q, active.iter().map(|&a| self.aty[a]));
        match Cholesky::new(sub) {
            Some(ch) => {
                let sol = ch.solve(&rhs);
                for (i, &a) in active.iter().enumerate() {
                    theta[a] = sol[i];
                }
            }
            None => {
                let mut cols = DMatrix::zeros(self.n, q);
                for (i, &a) in active.iter().enumerate() {
                    cols.column_mut(i).copy_from(&self.std_design.column(a));
                }
                let fit = linalg::lstsq(&cols, &self.y_centered, 1e-12);
                for (i, &a) in active.iter().enumerate() {
                    theta[a] = fit.coefficients[i];
                }
            }
        }
        theta
    }

    /// Runs the discrete first-order method for one sparsity budget.
    pub fn solve(&self, k: usize, cfg: &SolverConfig) -> Result<SubsetSolution> {
        self.solve_warm(k, cfg, None)
    }

    /// As [`Prepared::solve`] with an extra warm-start support (covariate
    /// indices), typically the previous budget's solution during a k-sweep.
    pub fn solve_warm(
        &self,
        k: usize,
        cfg: &SolverConfig,
        warm: Option<&[usize]>,
    ) -> Result<SubsetSolution> {
        if k > self.p {
            return Err(Error::SparsityBudget { k, p: self.p });
        }
        let l = self.l_max;
        let big_l = match cfg.step_constant {
            Some(given) => {
                if given < l * (1.0 - 1e-12) {
                    return Err(Error::StepConstant { l_given: given, l_min: l });
                }
                given
            }
            None => 1.1 * l.max(f64::MIN_POSITIVE),
        };

        // restart initial supports: warm start, thresholded full least
        // squares, greedy forward selection, then random draws
        let mut initials: Vec<Vec<usize>> = Vec::new();
        if let Some(w) = warm {
            let mut support: Vec<usize> = w.iter().map(|&j| j + 1).collect();
            support.sort_unstable();
            support.truncate(k);
            initials.push(support);
        }
        {
            let full = linalg::lstsq(&self.std_design, &self.y_centered, 1e-12);
            initials.push(self.top_k_covariates(&full.coefficients, k));
        }
        if cfg.restarts > 1 {
            initials.push(self.greedy_support(k));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, k as u64));
        while initials.len() < cfg.restarts.max(1) + warm.is_some() as usize {
            let draw = rand::seq::index::sample(&mut rng, self.p.max(1), k.min(self.p)).into_vec();
            let mut support: Vec<usize> = draw.into_iter().map(|j| j + 1).collect();
            support.sort_unstable();
            initials.push(support);
        }
        let mut seen = std::collections::BTreeSet::new();
        initials.retain(|s| seen.insert(s.clone()));

        let mut best: Option<RestartResult> = None;
        for support in initials {
            let run = self.run_restart(&support, k, big_l, l, cfg);
            best = Some(match best {
                None => run,
                Some(cur) => {
                    if run.objective < cur.objective
                        || (run.objective == cur.objective && run.support < cur.support)
                    {
                        run
                    } else {
                        cur
                    }
                }
            });
        }
        let mut best = best.expect("at least one restart");
        self.improve_by_swaps(&mut best, cfg);
        Ok(self.finish(best))
    }

    /// Best-improvement single-coordinate swap search on the winning
    /// restart. Correlated designs leave the thresholding iteration in
    /// initialization-dependent local optima; exchanging one support member
    /// for one outsider escapes most of them.
    fn improve_by_swaps(&self, run: &mut RestartResult, cfg: &SolverConfig) {
        let k = run.support.len();
        if k == 0 || k >= self.p {
            return;
        }
        for _sweep in 0..10 {
            let active: Vec<usize> = {
                let mut a: Vec<usize> = run.support.iter().map(|&j| j + 1).collect();
                a.push(0);
                a.sort_unstable();
                a
            };
            let mut best_obj = run.objective;
            let mut best_swap: Option<(usize, usize)> = None;
            for &out in run.support.clone().iter() {
                for j in 0..self.p {
                    if run.support.contains(&j) {
                        continue;
                    }
                    let mut cand = active.clone();
                    cand.retain(|&c| c != out + 1);
                    cand.push(j + 1);
                    cand.sort_unstable();
                    let theta = self.least_squares_on(&cand);
                    let obj = self.objective_sparse(&cand, &theta);
                    if obj < best_obj * (1.0 - 1e-12) {
                        best_obj = obj;
                        best_swap = Some((out, j));
                    }
                }
            }
            match best_swap {
                Some((out, j)) => {
                    run.support.remove(&out);
                    run.support.insert(j);
                    let mut active: Vec<usize> = run.support.iter().map(|&m| m + 1).collect();
                    active.push(0);
                    active.sort_unstable();
                    let theta = self.least_squares_on(&active);
                    let step_norm_sq = (&theta - &run.theta).norm_squared();
                    run.theta = theta;
                    run.objective = self.objective_sparse(&active, &run.theta);
                    if let Some(trace) = run.trace.as_mut() {
                        trace.push(TraceStep {
                            objective: run.objective,
                            step_norm_sq,
                            kind: StepKind::Polish,
                        });
                    }
                }
                None => break,
            }
        }
        // zero coefficients may have been introduced; keep support consistent
        run.support.retain(|&j| run.theta[j + 1] != 0.0);
    }

    fn run_restart(
        &self,
        initial_support: &[usize],
        k: usize,
        big_l: f64,
        l: f64,
        cfg: &SolverConfig,
    ) -> RestartResult {
        let mut active: Vec<usize> = Vec::with_capacity(k + 1);
        active.push(0);
        active.extend(initial_support.iter().copied().filter(|&j| j != 0));
        active.sort_unstable();
        active.dedup();
        let mut theta = self.least_squares_on(&active);
        self.clip(&mut theta, &active);
        let mut g_cur = self.objective_sparse(&active, &theta);
        let mut trace: Vec<TraceStep> = Vec::new();
        if cfg.trace {
            trace.push(TraceStep { objective: g_cur, step_norm_sq: 0.0, kind: StepKind::Threshold });
        }
        let mut grad = DVector::zeros(self.p + 1);
        let mut converged = k == 0;
        let mut iterations = 0usize;
        // alternate thresholding passes with exact polishes until the
        // polished point is a fixed point of the thresholding map
        for _pass in 0..4 {
            if k > 0 {
                converged = false;
                while iterations < cfg.max_iterations {
                    iterations += 1;
                    self.gradient(&active, &theta, &mut grad);
                    let mut v = theta.clone();
                    v.axpy(-1.0 / big_l, &grad, 1.0);
                    let kept = self.top_k_covariates(&v, k);
                    let mut next_active: Vec<usize> = Vec::with_capacity(k + 1);
                    next_active.push(0);
                    next_active.extend(kept.iter().copied());
                    next_active.sort_unstable();
                    let mut next = DVector::zeros(self.p + 1);
                    for &i in &next_active {
                        next[i] = v[i];
                    }
                    self.clip(&mut next, &next_active);
                    let g_next = self.objective_sparse(&next_active, &next);
                    let step_norm_sq = (&next - &theta).norm_squared();
                    if cfg.trace {
                        trace.push(TraceStep {
                            objective: g_next,
                            step_norm_sq,
                            kind: StepKind::Threshold,
                        });
                    }
                    if self.box_bound.is_none() && big_l > l * (1.0 + 1e-12) {
                        debug_assert!(
                            g_cur - g_next
                                >= 0.5 * (big_l - l) * step_norm_sq - 1e-7 * (1.0 + g_cur.abs()),
                            "sufficient decrease violated: gap={} bound={}",
                            g_cur - g_next,
                            0.5 * (big_l - l) * step_norm_sq
                        );
                    }
                    let same_support = next_active == active;
                    let gap = g_cur - g_next;
                    theta = next;
                    active = next_active;
                    g_cur = g_next;
                    if same_support && gap.abs() <= cfg.tolerance * (1.0 + g_cur.abs()) {
                        converged = true;
                        break;
                    }
                }
            }
            // polish: exact least squares on the current support
            let mut pol = self.least_squares_on(&active);
            self.clip(&mut pol, &active);
            let g_pol = self.objective_sparse(&active, &pol);
            if g_pol <= g_cur {
                let step_norm_sq = (&pol - &theta).norm_squared();
                theta = pol;
                if cfg.trace {
                    trace.push(TraceStep { objective: g_pol, step_norm_sq, kind: StepKind::Polish });
                }
                g_cur = g_pol;
            }
            if k == 0 {
                break;
            }
            // fixed point when one more thresholding step keeps the support
            self.gradient(&active, &theta, &mut grad);
            let mut v = theta.clone();
            v.axpy(-1.0 / big_l, &grad, 1.0);
            let kept = self.top_k_covariates(&v, k);
            let mut probe: Vec<usize> = Vec::with_capacity(k + 1);
            probe.push(0);
            probe.extend(kept.iter().copied());
            probe.sort_unstable();
            if probe == active || iterations >= cfg.max_iterations {
                break;
            }
        }
        let support: BTreeSet<usize> = active.iter().filter(|&&i| i != 0 && theta[i] != 0.0).map(|&i| i - 1).collect();
        RestartResult {
            support,
            theta,
            objective: g_cur,
            iterations,
            converged,
            trace: if cfg.trace { Some(trace) } else { None },
        }
    }

    fn clip(&self, theta: &mut DVector<f64>, active: &[usize]) {
        if let Some(c) = self.box_bound {
            for &i in active {
                if i != 0 {
                    theta[i] = theta[i].clamp(-c, c);
                }
            }
        }
    }

    /// Indices (design columns) of the k largest-magnitude covariate
    /// coordinates of `v`; ties go to the lower column index.
    fn top_k_covariates(&self, v: &DVector<f64>, k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (1..=self.p).collect();
        order.sort_unstable_by(|&a, &b| {
            v[b].abs().partial_cmp(&v[a].abs()).unwrap().then(a.cmp(&b))
        });
        let mut kept: Vec<usize> = order.into_iter().take(k).collect();
        kept.sort_unstable();
        kept
    }

    fn greedy_support(&self, k: usize) -> Vec<usize> {
        let mut active: Vec<usize> = vec![0];
        let mut support: Vec<usize> = Vec::with_capacity(k);
        let mut theta = self.least_squares_on(&active);
        for _ in 0..k {
            let mut grad = DVector::zeros(self.p + 1);
            self.gradient(&active, &theta, &mut grad);
            let mut best_j = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for j in 1..=self.p {
                if active.contains(&j) {
                    continue;
                }
                let gjj = self.gram[(j, j)];
                if gjj <= 1e-12 {
                    continue;
                }
                let score = grad[j] * grad[j] / gjj;
                if score > best_score {
                    best_score = score;
                    best_j = j;
                }
            }
            if best_j == 0 {
                break;
            }
            active.push(best_j);
            active.sort_unstable();
            support.push(best_j);
            theta = self.least_squares_on(&active);
        }
        support.sort_unstable();
        support
    }

    /// Enumerates all covariate supports of size at most `k`.
    pub fn solve_exhaustive(&self, k: usize, cap: usize) -> Result<SubsetSolution> {
        if self.p > cap {
            return Err(Error::ExhaustiveCap { p: self.p, cap });
        }
        if k > self.p {
            return Err(Error::SparsityBudget { k, p: self.p });
        }
        let mut best: Option<RestartResult> = None;
        let mut count = 0usize;
        let consider = |support: &[usize], this: &Prepared, best: &mut Option<RestartResult>| {
            let mut active: Vec<usize> = Vec::with_capacity(support.len() + 1);
            active.push(0);
            active.extend(support.iter().map(|&j| j + 1));
            let theta = this.least_squares_on(&active);
            let objective = this.objective_sparse(&active, &theta);
            let sol = RestartResult {
                support: support.iter().copied().collect(),
                theta,
                objective,
                iterations: 0,
                converged: true,
                trace: None,
            };
            let replace = match best {
                None => true,
                Some(cur) => {
                    objective < cur.objective
                        || (objective == cur.objective && sol.support < cur.support)
                }
            };
            if replace {
                *best = Some(sol);
            }
        };
        for size in 0..=k {
            let mut combo: Vec<usize> = (0..size).collect();
            loop {
                consider(&combo, self, &mut best);
                count += 1;
                if size == 0 {
                    break;
                }
                // next lexicographic combination of `size` out of p
                let mut i = size;
                loop {
                    if i == 0 {
                        break;
                    }
                    i -= 1;
                    if combo[i] != i + self.p - size {
                        combo[i] += 1;
                        for j in i + 1..size {
                            combo[j] = combo[j - 1] + 1;
                        }
                        break;
                    }
                    if i == 0 {
                        combo.clear();
                        break;
                    }
                }
                if combo.is_empty() {
                    break;
                }
            }
        }
        let mut best = best.expect("enumeration visits the empty support");
        best.iterations = count;
        Ok(self.finish(best))
    }

    /// Maps a standardized-coordinates result back to the original scale and
    /// recomputes the objective from the returned coefficients.
    fn finish(&self, run: RestartResult) -> SubsetSolution {
        let mut beta = DVector::zeros(self.p);
        for &j in &run.support {
            beta[j] = run.theta[j + 1] / self.col_scale[j + 1];
        }
        let alpha = run.theta[0] / self.col_scale[0];
        let mut intercept = 0.0;
        if self.standardize {
            intercept = self.y_mean - alpha * self.col_mean[0];
            for &j in &run.support {
                intercept -= beta[j] * self.col_mean[j + 1];
            }
        }
        let mut rss = 0.0;
        for i in 0..self.n {
            let mut pred = intercept + alpha * self.design[(i, 0)];
            for &j in &run.support {
                pred += beta[j] * self.design[(i, j + 1)];
            }
            let r = self.response[i] - pred;
            rss += r * r;
        }
        SubsetSolution {
            support: run.support,
            beta,
            alpha,
            intercept,
            objective: 0.5 * rss,
            iterations: run.iterations,
            converged: run.converged,
            trace: run.trace,
        }
    }
}

struct RestartResult {
    support: BTreeSet<usize>,
    theta: DVector<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    trace: Option<Vec<TraceStep>>,
}

/// Scans sparsity budgets `0..=kmax` and picks the fit minimizing
/// `n ln(RSS/n) + k ln(n)`. Returns the chosen budget and its solution.
pub fn solve_bic(prepared: &Prepared, kmax: usize, cfg: &SolverConfig) -> Result<(usize, SubsetSolution)> {
    let n = prepared.sample_count() as f64;
    let mut best: Option<(f64, usize, SubsetSolution)> = None;
    let mut warm: Vec<usize> = Vec::new();
    for k in 0..=kmax.min(prepared.covariate_count()) {
        let sol = prepared.solve_warm(k, cfg, Some(&warm))?;
        warm = sol.support.iter().copied().collect();
        let rss = (2.0 * sol.objective).max(1e-300);
        let bic = n * (rss / n).ln() + k as f64 * n.ln();
        let better = match &best {
            None => true,
            Some((cur, _, _)) => bic < *cur,
        };
        if better {
            best = Some((bic, k, sol));
        }
    }
    let (_, k, sol) = best.expect("kmax >= 0");
    Ok((k, sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_problem(n: usize, p: usize, k_true: usize, noise: f64, seed: u64) -> (SubsetProblem, Vec<usize>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut normal = |rng: &mut ChaCha12Rng| {
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        let mut design = DMatrix::zeros(n, p + 1);
        for j in 0..=p {
            for i in 0..n {
                design[(i, j)] = normal(&mut rng);
            }
        }
        let truth: Vec<usize> = rand::seq::index::sample(&mut rng, p, k_true).into_vec();
        let mut y = DVector::zeros(n);
        for i in 0..n {
            let mut v = 0.7 * design[(i, 0)];
            for (t, &j) in truth.iter().enumerate() {
                v += (1.0 + t as f64 * 0.5) * design[(i, j + 1)];
            }
            y[i] = v + noise * normal(&mut rng);
        }
        let mut sorted = truth.clone();
        sorted.sort_unstable();
        (SubsetProblem::new(design, y, k_true), sorted)
    }

    #[test]
    fn k_zero_is_simple_regression() {
        let (mut problem, _) = random_problem(200, 6, 2, 0.5, 1);
        problem.k = 0;
        let sol = solve_k_sparse(&problem, &SolverConfig::default()).unwrap();
        assert!(sol.support.is_empty());
        // simple regression coefficient of y on x with intercept
        let x: Vec<f64> = (0..200).map(|i| problem.design[(i, 0)]).collect();
        let y = &problem.response;
        let mx = x.iter().sum::<f64>() / 200.0;
        let my = y.iter().sum::<f64>() / 200.0;
        let sxy: f64 = (0..200).map(|i| (x[i] - mx) * (y[i] - my)).sum();
        let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
        assert!((sol.alpha - sxy / sxx).abs() < 1e-10);
        assert!(sol.converged);
    }

    #[test]
    fn k_equals_p_matches_full_least_squares() {
        let (mut problem, _) = random_problem(150, 8, 3, 1.0, 2);
        problem.k = 8;
        let sol = solve_k_sparse(&problem, &SolverConfig::default()).unwrap();
        // full OLS with intercept via the shared QR
        let n = problem.design.nrows();
        let mut a = DMatrix::zeros(n, 10);
        a.column_mut(0).fill(1.0);
        for j in 0..9 {
            a.column_mut(j + 1).copy_from(&problem.design.column(j));
        }
        let fit = linalg::lstsq(&a, &problem.response, 1e-12);
        assert!((2.0 * sol.objective - fit.residual_sum_squares).abs() < 1e-8 * (1.0 + fit.residual_sum_squares));
    }

    #[test]
    fn noiseless_support_recovery() {
        let (problem, truth) = random_problem(120, 10, 4, 0.0, 3);
        let sol = solve_k_sparse(&problem, &SolverConfig::default()).unwrap();
        let got: Vec<usize> = sol.support.iter().copied().collect();
        assert_eq!(got, truth);
        assert!(sol.objective < 1e-12);
    }

    #[test]
    fn objective_is_recomputed_residual() {
        let (problem, _) = random_problem(100, 7, 3, 0.8, 4);
        let sol = solve_k_sparse(&problem, &SolverConfig::default()).unwrap();
        let mut rss = 0.0;
        for i in 0..100 {
            let mut pred = sol.intercept + sol.alpha * problem.design[(i, 0)];
            for j in 0..7 {
                pred += sol.beta[j] * problem.design[(i, j + 1)];
            }
            let r = problem.response[i] - pred;
            rss += r * r;
        }
        assert!((sol.objective - 0.5 * rss).abs() < 1e-9 * (1.0 + rss));
        for j in 0..7 {
            assert_eq!(sol.beta[j] != 0.0, sol.support.contains(&j), "support/beta mismatch at {j}");
        }
    }

    #[test]
    fn trace_is_monotone_and_converges() {
        let (problem, _) = random_problem(200, 12, 5, 1.0, 5);
        let cfg = SolverConfig { trace: true, ..Default::default() };
        let sol = solve_k_sparse(&problem, &cfg).unwrap();
        assert!(sol.converged);
        let trace = objective_trace(&sol).unwrap();
        assert!(trace.len() >= 2);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()), "trace not monotone: {w:?}");
        }
        // final threshold gap under tolerance
        let steps = sol.trace.as_ref().unwrap();
        let thresh: Vec<&TraceStep> = steps.iter().filter(|s| s.kind == StepKind::Threshold).collect();
        let last_gap = thresh[thresh.len() - 2].objective - thresh[thresh.len() - 1].objective;
        assert!(last_gap.abs() <= cfg.tolerance * (1.0 + thresh[thresh.len() - 1].objective.abs()));
    }

    #[test]
    fn step_constants_converge_to_same_objective() {
        let (problem, _) = random_problem(150, 9, 4, 0.7, 6);
        let prepared = Prepared::from_problem(&problem).unwrap();
        let l = prepared.spectral_bound();
        let mut sols = Vec::new();
        for factor in [1.05, 2.0] {
            let cfg = SolverConfig { step_constant: Some(factor * l), ..Default::default() };
            sols.push(prepared.solve(problem.k, &cfg).unwrap());
        }
        let rel = (sols[0].objective - sols[1].objective).abs() / (1.0 + sols[0].objective);
        assert!(rel < 1e-6, "objectives {} vs {}", sols[0].objective, sols[1].objective);
    }

    #[test]
    fn step_constant_below_bound_errors() {
        let (problem, _) = random_problem(80, 5, 2, 0.5, 7);
        let prepared = Prepared::from_problem(&problem).unwrap();
        let l = prepared.spectral_bound();
        let cfg = SolverConfig { step_constant: Some(0.5 * l), ..Default::default() };
        assert!(matches!(prepared.solve(2, &cfg), Err(Error::StepConstant { .. })));
    }

    #[test]
    fn budget_and_data_errors() {
        let (problem, _) = random_problem(50, 4, 2, 0.5, 8);
        let mut too_big = problem.clone();
        too_big.k = 5;
        assert!(matches!(
            solve_k_sparse(&too_big, &SolverConfig::default()),
            Err(Error::SparsityBudget { .. })
        ));
        let mut bad = problem;
        bad.response[0] = f64::NAN;
        assert!(matches!(solve_k_sparse(&bad, &SolverConfig::default()), Err(Error::NonFinite(_))));
    }

    #[test]
    fn exhaustive_picks_higher_partial_r2() {
        // col A explains y, col B is noise: k=1 must pick A
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let n = 300;
        let mut design = DMatrix::zeros(n, 3);
        let mut y = DVector::zeros(n);
        for i in 0..n {
            let x: f64 = rng.gen::<f64>() - 0.5;
            let a: f64 = rng.gen::<f64>() - 0.5;
            let b: f64 = rng.gen::<f64>() - 0.5;
            design[(i, 0)] = x;
            design[(i, 1)] = a;
            design[(i, 2)] = b;
            y[i] = x + 2.0 * a + 0.01 * (rng.gen::<f64>() - 0.5);
        }
        let problem = SubsetProblem::new(design, y, 1);
        let sol = solve_exhaustive(&problem).unwrap();
        assert_eq!(sol.support.iter().copied().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn exhaustive_cap_enforced() {
        let (problem, _) = random_problem(40, 16 + 1, 2, 0.5, 10);
        assert!(matches!(solve_exhaustive(&problem), Err(Error::ExhaustiveCap { .. })));
    }

    #[test]
    fn solver_matches_exhaustive_on_small_problems() {
        for seed in 0..10u64 {
            let (mut problem, _) = random_problem(60, 8, 3, 1.5, 100 + seed);
            let prepared = Prepared::from_problem(&problem).unwrap();
            for k in 0..=8usize {
                problem.k = k;
                let fast = prepared.solve(k, &SolverConfig::default()).unwrap();
                let exact = prepared.solve_exhaustive(k, EXHAUSTIVE_CAP).unwrap();
                let rel = (fast.objective - exact.objective).abs() / (1.0 + exact.objective);
                assert!(rel < 1e-6, "seed {seed} k {k}: {} vs {}", fast.objective, exact.objective);
            }
        }
    }

    #[test]
    fn box_bound_clips_coefficients() {
        let (mut problem, _) = random_problem(100, 6, 3, 0.5, 11);
        problem.box_bound = Some(0.2);
        let sol = solve_k_sparse(&problem, &SolverConfig::default()).unwrap();
        // bound applies in standardized coordinates; map back per column
        let prepared = Prepared::from_problem(&problem).unwrap();
        for j in 0..6 {
            let std_coef = sol.beta[j] * prepared.col_scale[j + 1];
            assert!(std_coef.abs() <= 0.2 + 1e-12);
        }
    }

    #[test]
    fn bic_finds_true_sparsity() {
        let (problem, truth) = random_problem(400, 9, 3, 0.3, 12);
        let prepared = Prepared::from_problem(&problem).unwrap();
        let (k, sol) = solve_bic(&prepared, 9, &SolverConfig::default()).unwrap();
        assert_eq!(k, 3);
        assert_eq!(sol.support.iter().copied().collect::<Vec<_>>(), truth);
    }
}
