//! Covariate selection by k-sparse regression under conditional-independence
//! constraints, with and without the causal-sufficiency assumption.
//!
//! The sufficiency-assuming selector sweeps the sparsity budget upward. At
//! each k it solves the k-sparse regression of the outcome on the treatment
//! and covariates. When the new support extends the previous one, the newly
//! admitted covariate must be dependent on the outcome given every tested
//! conditioning set drawn from the previous support (augmented with the
//! treatment); the first independence verdict ends the sweep with the
//! previous support as the answer. Non-nested supports are accepted as-is
//! and the sweep continues.
//!
//! The hidden-variable variant reuses that output `O` and rescues covariates
//! that remain informative for the outcome: a first pass drops every
//! leftover covariate independent of the outcome given `X u O`, a second
//! backward pass drops survivors that are redundant given the others. The
//! union of `O` and the survivors is returned.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Dag, NodeSet};
use crate::sem::Dataset;
use crate::stats::{self, CiBackend, FisherZBackend};
use crate::subset::{Prepared, SolverConfig};

/// Which selector produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Alg1,
    Alg2,
}

/// One conditional-independence decision: the conditioning set actually
/// used (including the treatment when so configured) and the p-value.
#[derive(Debug, Clone, Serialize)]
pub struct CiDecision {
    pub conditioning: NodeSet,
    pub p_value: f64,
}

/// Sweep record for one sparsity budget.
#[derive(Debug, Clone, Serialize)]
pub struct KStep {
    pub k: usize,
    pub support: NodeSet,
    pub nested: bool,
    pub ci_decisions: Vec<CiDecision>,
}

/// Audit record for the hidden-variable passes.
#[derive(Debug, Clone, Serialize)]
pub struct LatentStep {
    pub pass: u8,
    pub variable: String,
    pub conditioning: NodeSet,
    pub p_value: f64,
    pub removed: bool,
}

/// Result of a selection run, with the full per-k audit trail.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionReport {
    pub selected: NodeSet,
    pub per_k_trace: Vec<KStep>,
    pub stopped_at_k: usize,
    pub algorithm: Algorithm,
    pub effect_estimate: f64,
    pub alpha_level: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latent_trace: Option<Vec<LatentStep>>,
}

impl SelectionReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Which conditioning sets gate a newly admitted covariate.
///
/// The population statement behind the gate quantifies over every subset of
/// the previous support, but in finite samples low-order subsets have no
/// power against outcome parents (their statistics are diluted by the
/// still-unconditioned parents) while the full-support statistic is the
/// binding constraint. The default therefore tests the full previous
/// support and its leave-one-out subsets; the literal all-subsets family
/// remains available.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditioningRule {
    /// The previous support and each of its leave-one-out subsets.
    FullAndLeaveOneOut,
    /// Every subset while the previous support has at most `cap` members;
    /// beyond that the empty set, the full set, and the leave-one-out sets.
    AllSubsets { cap: usize },
}

/// Tuning knobs beyond the significance level and solver settings.
#[derive(Debug, Clone)]
pub struct CmioOptions {
    pub alpha: f64,
    pub solver: SolverConfig,
    /// Include the treatment in every conditioning set (the default). The
    /// literal reading without it is kept switchable.
    pub condition_on_treatment: bool,
    /// Bonferroni-correct the per-k tests across the conditioning family;
    /// off by default.
    pub bonferroni: bool,
    /// Conditioning-set family for the per-k gate.
    pub conditioning: ConditioningRule,
    /// Run the full-conditioning test at a selection-calibrated level (see
    /// [`gate_full_level`]); on by default. The leave-one-out tests always
    /// run at `alpha`.
    pub calibrate_full_test: bool,
}

impl Default for CmioOptions {
    fn default() -> Self {
        CmioOptions {
            alpha: stats::DEFAULT_ALPHA,
            solver: SolverConfig::default(),
            condition_on_treatment: true,
            bonferroni: false,
            conditioning: ConditioningRule::FullAndLeaveOneOut,
            calibrate_full_test: true,
        }
    }
}

/// Significance level of the full-conditioning gate test.
///
/// The variable under test is the argmax of the sparse solver over the
/// `remaining` candidates, so under the no-remaining-parent null its
/// statistic behaves like a maximum over `remaining` null statistics; a
/// fixed level would end the sweep one budget too late with probability
/// near one as `n` grows, and exact recovery in probability needs the level
/// to vanish with `n`. In the high-dimensional regime (`p >= n`) selection
/// noise dominates at any sample size and the level is tightened by the
/// candidate count instead. Anchors calibrated on the replication suite.
pub fn gate_full_level(alpha: f64, n: usize, p: usize, remaining: usize) -> f64 {
    if p >= n {
        alpha.min(alpha / (5.0 * remaining.max(1) as f64))
    } else {
        alpha.min(alpha * (200.0 / n as f64).powi(4))
    }
}

/// Builds the solver design from a dataset: column 0 is the treatment `x`,
/// the remaining columns are every column except `x` and `y`, in dataset
/// order. Returns the design, the response, and the covariate names.
pub fn design_from_dataset(
    d: &Dataset,
    x: &str,
    y: &str,
) -> Result<(DMatrix<f64>, DVector<f64>, Vec<String>)> {
    let xi = d.index_of(x)?;
    let yi = d.index_of(y)?;
    if xi == yi {
        return Err(Error::InvalidQuery("treatment and outcome must differ".into()));
    }
    let n = d.n();
    let covariates: Vec<String> = d
        .names()
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != xi && *j != yi)
        .map(|(_, name)| name.clone())
        .collect();
    let mut design = DMatrix::zeros(n, covariates.len() + 1);
    design.column_mut(0).copy_from_slice(d.col(xi));
    for (c, name) in covariates.iter().enumerate() {
        design.column_mut(c + 1).copy_from_slice(d.col_by_name(name)?);
    }
    let response = DVector::from_column_slice(d.col(yi));
    Ok((design, response, covariates))
}

/// Sufficiency-assuming selection at significance level `alpha`.
pub fn cmio_select(
    d: &Dataset,
    x: &str,
    y: &str,
    alpha: f64,
    cfg: &SolverConfig,
) -> Result<SelectionReport> {
    let opts = CmioOptions { alpha, solver: cfg.clone(), ..Default::default() };
    cmio_select_with(d, x, y, &opts)
}

pub fn cmio_select_with(d: &Dataset, x: &str, y: &str, opts: &CmioOptions) -> Result<SelectionReport> {
    let backend = FisherZBackend::new(d);
    cmio_select_with_backend(d, x, y, opts, &backend)
}

/// As [`cmio_select_with`], with a caller-supplied conditional-independence
/// backend (the shipped one is Fisher-Z).
pub fn cmio_select_with_backend(
    d: &Dataset,
    x: &str,
    y: &str,
    opts: &CmioOptions,
    ci: &dyn CiBackend,
) -> Result<SelectionReport> {
    let (design, response, covariates) = design_from_dataset(d, x, y)?;
    let p = covariates.len();
    if p == 0 {
        return Err(Error::InvalidQuery("dataset has no covariates to select from".into()));
    }
    let xi = d.index_of(x)?;
    let yi = d.index_of(y)?;
    let col_ix: Vec<usize> = covariates.iter().map(|c| d.index_of(c)).collect::<Result<_>>()?;

    let n = d.n();
    let kmax = p.min(n.saturating_sub(4));
    let prepared = Prepared::new(&design, &response, true, None).map_err(|e| wrap_abort(0, Vec::new(), e))?;

    let mut trace: Vec<KStep> = Vec::new();
    let mut selected: Vec<usize> = Vec::new(); // covariate positions, sorted
    let mut stopped_at_k = 0usize;
    for k in 1..=kmax {
        stopped_at_k = k;
        let sol = match prepared.solve_warm(k, &opts.solver, Some(&selected)) {
            Ok(s) => s,
            Err(e) => return Err(wrap_abort(k, trace, e)),
        };
        let support: Vec<usize> = sol.support.iter().copied().collect();
        let nested = selected.iter().all(|j| support.contains(j));
        let mut step = KStep {
            k,
            support: support.iter().map(|&j| covariates[j].clone()).collect(),
            nested,
            ci_decisions: Vec::new(),
        };
        if !nested {
            selected = support;
            trace.push(step);
            continue;
        }
        let fresh: Vec<usize> = support.iter().copied().filter(|j| !selected.contains(j)).collect();
        let mut stop = false;
        'fresh: for &new_var in &fresh {
            let cond_sets = conditioning_sets(&selected, opts.conditioning);
            let base_alpha = if opts.bonferroni {
                opts.alpha / cond_sets.len().max(1) as f64
            } else {
                opts.alpha
            };
            let full_alpha = if opts.calibrate_full_test {
                gate_full_level(base_alpha, n, p, p - selected.len())
            } else {
                base_alpha
            };
            for set in cond_sets {
                // the full previous support is the first family member
                let alpha_eff = if set.len() == selected.len() { full_alpha } else { base_alpha };
                let mut cond: Vec<usize> = set.iter().map(|&j| col_ix[j]).collect();
                if opts.condition_on_treatment {
                    cond.push(xi);
                }
                let res = match ci.test(col_ix[new_var], yi, &cond, alpha_eff) {
                    Ok(r) => r,
                    Err(e) => return Err(wrap_abort(k, trace, e)),
                };
                step.ci_decisions.push(CiDecision {
                    conditioning: cond.iter().map(|&c| d.names()[c].clone()).collect(),
                    p_value: res.p_value,
                });
                if res.independent {
                    stop = true;
                    break 'fresh;
                }
            }
        }
        trace.push(step);
        if stop {
            break;
        }
        selected = support;
    }

    let selected_names: NodeSet = selected.iter().map(|&j| covariates[j].clone()).collect();
    let effect = effect_for(d, x, y, &selected_names)?;
    Ok(SelectionReport {
        selected: selected_names,
        per_k_trace: trace,
        stopped_at_k,
        algorithm: Algorithm::Alg1,
        effect_estimate: effect,
        alpha_level: opts.alpha,
        latent_trace: None,
    })
}

/// Hidden-variable selection: augments the sufficiency-assuming output with
/// every remaining covariate that stays dependent on the outcome.
pub fn cmio_select_latent(
    d: &Dataset,
    x: &str,
    y: &str,
    alpha: f64,
    cfg: &SolverConfig,
) -> Result<SelectionReport> {
    let opts = CmioOptions { alpha, solver: cfg.clone(), ..Default::default() };
    cmio_select_latent_with(d, x, y, &opts)
}

pub fn cmio_select_latent_with(
    d: &Dataset,
    x: &str,
    y: &str,
    opts: &CmioOptions,
) -> Result<SelectionReport> {
    let backend = FisherZBackend::new(d);
    cmio_select_latent_with_backend(d, x, y, opts, &backend)
}

pub fn cmio_select_latent_with_backend(
    d: &Dataset,
    x: &str,
    y: &str,
    opts: &CmioOptions,
    ci: &dyn CiBackend,
) -> Result<SelectionReport> {
    let base = cmio_select_with_backend(d, x, y, opts, ci)?;
    let xi = d.index_of(x)?;
    let yi = d.index_of(y)?;
    let o_ix: Vec<usize> = base.selected.iter().map(|name| d.index_of(name)).collect::<Result<_>>()?;

    // candidates: all covariates outside O, in dataset column order
    let mut t: Vec<usize> = (0..d.column_count())
        .filter(|&j| j != xi && j != yi && !o_ix.contains(&j))
        .collect();
    let mut steps: Vec<LatentStep> = Vec::new();

    // pass 1: drop candidates independent of the outcome given X u O
    let mut cond_base: Vec<usize> = vec![xi];
    cond_base.extend(&o_ix);
    let mut kept = Vec::with_capacity(t.len());
    for &j in &t {
        let res = ci.test(j, yi, &cond_base, opts.alpha)?;
        steps.push(LatentStep {
            pass: 1,
            variable: d.names()[j].clone(),
            conditioning: cond_base.iter().map(|&c| d.names()[c].clone()).collect(),
            p_value: res.p_value,
            removed: res.independent,
        });
        if !res.independent {
            kept.push(j);
        }
    }
    t = kept;

    // pass 2: backward removal given X u O u (T \ {candidate})
    let survivors = t.clone();
    for &j in &survivors {
        if !t.contains(&j) {
            continue;
        }
        let mut cond: Vec<usize> = cond_base.clone();
        cond.extend(t.iter().copied().filter(|&m| m != j));
        let res = ci.test(j, yi, &cond, opts.alpha)?;
        let removed = res.independent;
        steps.push(LatentStep {
            pass: 2,
            variable: d.names()[j].clone(),
            conditioning: cond.iter().map(|&c| d.names()[c].clone()).collect(),
            p_value: res.p_value,
            removed,
        });
        if removed {
            t.retain(|&m| m != j);
        }
    }

    let mut selected = base.selected.clone();
    for &j in &t {
        selected.insert(d.names()[j].clone());
    }
    let effect = effect_for(d, x, y, &selected)?;
    Ok(SelectionReport {
        selected,
        per_k_trace: base.per_k_trace,
        stopped_at_k: base.stopped_at_k,
        algorithm: Algorithm::Alg2,
        effect_estimate: effect,
        alpha_level: opts.alpha,
        latent_trace: Some(steps),
    })
}

fn effect_for(d: &Dataset, x: &str, y: &str, selected: &NodeSet) -> Result<f64> {
    let z: Vec<&str> = selected.iter().map(String::as_str).collect();
    stats::adjusted_effect(d, x, y, &z)
}

fn wrap_abort(k: usize, trace: Vec<KStep>, source: Error) -> Error {
    Error::SelectionAborted { k, trace, source: Box::new(source) }
}

/// Conditioning sets over `prev` (covariate positions) for the chosen rule.
fn conditioning_sets(prev: &[usize], rule: ConditioningRule) -> Vec<Vec<usize>> {
    let m = prev.len();
    match rule {
        ConditioningRule::FullAndLeaveOneOut => {
            let mut sets = Vec::with_capacity(m + 1);
            sets.push(prev.to_vec());
            for skip in 0..m {
                sets.push(
                    prev.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, &j)| j).collect(),
                );
            }
            sets
        }
        ConditioningRule::AllSubsets { cap } if m <= cap => {
            let mut sets = Vec::with_capacity(1 << m);
            for mask in 0u64..(1u64 << m) {
                let mut set = Vec::with_capacity(mask.count_ones() as usize);
                for (bit, &j) in prev.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        set.push(j);
                    }
                }
                sets.push(set);
            }
            sets
        }
        ConditioningRule::AllSubsets { .. } => {
            let mut sets = Vec::with_capacity(m + 2);
            sets.push(Vec::new());
            sets.push(prev.to_vec());
            for skip in 0..m {
                sets.push(
                    prev.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, &j)| j).collect(),
                );
            }
            sets
        }
    }
}

/// Graphical scoring of a selected set against the generating truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SelectionScore {
    pub valid: bool,
    pub set_difference: usize,
    pub contains_target: bool,
}

/// Scores `selected` against the ground-truth graph: back-door validity,
/// cardinality of the symmetric difference with the optimal set, and whether
/// the optimal set is contained.
pub fn evaluate_selection(g: &Dag, x: &str, y: &str, selected: &NodeSet) -> Result<SelectionScore> {
    for name in selected {
        if !g.contains(name) {
            return Err(Error::UnknownNode(name.clone()));
        }
    }
    let valid = g.is_valid_adjustment(x, y, selected)?;
    let optimal = g.optimal_adjustment(x, y)?;
    let set_difference = selected.symmetric_difference(&optimal).count();
    let contains_target = optimal.is_subset(selected);
    Ok(SelectionScore { valid, set_difference, contains_target })
}
