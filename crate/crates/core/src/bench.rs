//! Simulation-study harness: repeated data generation, method runs, and
//! aggregate metrics.
//!
//! Replicates run in parallel with per-replicate seeds derived from the
//! master seed; aggregation happens in replicate order, so a given
//! `BenchSpec` always reproduces the same report (timing excepted; wall
//! times never reach the serialized outputs).

use rayon::prelude::*;
use serde::Serialize;

use crate::cmio::{evaluate_selection, SelectionScore};
use crate::error::{Error, Result};
use crate::method::{MethodContext, MethodRegistry};
use crate::sem::{case_model, derive_seed, LinearSem};
use crate::subset::SolverConfig;

/// Comparison slots for external systems that are out of scope here; they
/// appear in reports as `not_run`.
pub const EXTERNAL_SLOTS: [&str; 2] = ["bcee", "ola"];

/// What to simulate: a built-in scenario or an explicit model.
#[derive(Debug, Clone)]
pub enum BenchCase {
    Case(usize),
    Model(LinearSem),
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub case: BenchCase,
    pub n: usize,
    pub replicates: usize,
    pub methods: Vec<String>,
    pub alpha: f64,
    pub seed: u64,
    pub solver: SolverConfig,
    /// Fixed sparsity budget for `t_xy_unconstrained`; BIC scan when unset.
    pub txy_k: Option<usize>,
}

impl BenchSpec {
    pub fn new(case: BenchCase, n: usize, replicates: usize, methods: Vec<String>, seed: u64) -> Self {
        BenchSpec {
            case,
            n,
            replicates,
            methods,
            alpha: crate::stats::DEFAULT_ALPHA,
            seed,
            solver: SolverConfig::default(),
            txy_k: None,
        }
    }
}

/// Per-method aggregate over all replicates.
#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: String,
    /// Effect estimates of the successful replicates, in replicate order.
    pub estimates: Vec<f64>,
    pub effect_mean: f64,
    pub effect_std: f64,
    pub set_difference_mean: f64,
    pub set_difference_std: f64,
    pub containment_pct: f64,
    pub validity_pct: f64,
    pub failures: usize,
    /// Wall time; informational only, never serialized to output files.
    #[serde(skip)]
    pub mean_runtime_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub n: usize,
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    pub true_effect: f64,
    pub methods: Vec<MethodSummary>,
}

/// Five-number summary of a method's effect estimates plus the true-effect
/// reference line.
#[derive(Debug, Clone, Serialize)]
pub struct BoxplotRow {
    pub method: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    pub reference: f64,
}

struct ReplicateOutcome {
    results: Vec<Result<(f64, SelectionScore, f64)>>,
}

pub fn run_bench(spec: &BenchSpec) -> Result<BenchReport> {
    if spec.replicates == 0 {
        return Err(Error::InvalidQuery("bench needs at least one replicate".into()));
    }
    if spec.methods.is_empty() {
        return Err(Error::InvalidQuery("bench needs a non-empty method list".into()));
    }
    let model = match &spec.case {
        BenchCase::Case(id) => case_model(*id)?,
        BenchCase::Model(m) => m.clone(),
    };
    let registry = MethodRegistry::builtin();
    let methods = registry.resolve(&spec.methods)?;
    let x = model.treatment_name().to_string();
    let y = model.outcome_name().to_string();
    let true_effect = model.true_total_effect(&x, &y)?;
    let truth_graph = model.graph();

    let outcomes: Vec<ReplicateOutcome> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(spec.seed, r as u64);
            let data = match model.sample(spec.n, seed) {
                Ok(d) => d,
                Err(e) => {
                    return ReplicateOutcome {
                        results: spec.methods.iter().map(|_| Err(clone_err(&e))).collect(),
                    }
                }
            };
            let ctx = MethodContext {
                data: &data,
                x: &x,
                y: &y,
                alpha: spec.alpha,
                solver: spec.solver.clone(),
                truth: Some(&model),
                txy_k: spec.txy_k,
            };
            let results = methods
                .iter()
                .map(|m| {
                    let start = std::time::Instant::now();
                    let out = m.select(&ctx)?;
                    let elapsed = start.elapsed().as_secs_f64() * 1e3;
                    let score = evaluate_selection(truth_graph, &x, &y, &out.selected)?;
                    Ok((out.effect, score, elapsed))
                })
                .collect();
            ReplicateOutcome { results }
        })
        .collect();

    let mut summaries = Vec::with_capacity(methods.len());
    for (mi, method) in methods.iter().enumerate() {
        let mut estimates = Vec::new();
        let mut set_diffs = Vec::new();
        let mut contained = 0usize;
        let mut valid = 0usize;
        let mut failures = 0usize;
        let mut runtime = 0.0;
        for rep in &outcomes {
            match &rep.results[mi] {
                Ok((effect, score, ms)) => {
                    estimates.push(*effect);
                    set_diffs.push(score.set_difference as f64);
                    contained += score.contains_target as usize;
                    valid += score.valid as usize;
                    runtime += ms;
                }
                Err(_) => failures += 1,
            }
        }
        let successes = estimates.len();
        let pct = |count: usize| {
            if successes == 0 {
                0.0
            } else {
                100.0 * count as f64 / successes as f64
            }
        };
        summaries.push(MethodSummary {
            method: method.name().to_string(),
            effect_mean: mean(&estimates),
            effect_std: sample_std(&estimates),
            set_difference_mean: mean(&set_diffs),
            set_difference_std: sample_std(&set_diffs),
            containment_pct: pct(contained),
            validity_pct: pct(valid),
            failures,
            mean_runtime_ms: if successes == 0 { 0.0 } else { runtime / successes as f64 },
            estimates,
        });
    }
    Ok(BenchReport {
        n: spec.n,
        replicates: spec.replicates,
        alpha: spec.alpha,
        seed: spec.seed,
        true_effect,
        methods: summaries,
    })
}

// Error cloning for fan-out to every method slot of a failed replicate.
fn clone_err(e: &Error) -> Error {
    Error::InvalidQuery(format!("replicate failed: {e}"))
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile on sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn boxplot_data(report: &BenchReport) -> Vec<BoxplotRow> {
    report
        .methods
        .iter()
        .filter(|m| !m.estimates.is_empty())
        .map(|m| {
            let mut sorted = m.estimates.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            BoxplotRow {
                method: m.method.clone(),
                min: sorted[0],
                q1: quantile(&sorted, 0.25),
                median: quantile(&sorted, 0.5),
                q3: quantile(&sorted, 0.75),
                max: sorted[sorted.len() - 1],
                mean: mean(&sorted),
                reference: report.true_effect,
            }
        })
        .collect()
}

impl BenchReport {
    /// One `method,metric,value` row per metric. Wall times are deliberately
    /// absent so identical seeds give identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,metric,value\n");
        out.push_str(&format!("truth,true_effect,{}\n", self.true_effect));
        for slot in EXTERNAL_SLOTS {
            out.push_str(&format!("{slot},status,not_run\n"));
        }
        let boxes = boxplot_data(self);
        for m in &self.methods {
            let mut push = |metric: &str, value: String| {
                out.push_str(&format!("{},{},{}\n", m.method, metric, value));
            };
            push("effect_mean", format!("{}", m.effect_mean));
            push("effect_std", format!("{}", m.effect_std));
            if let Some(b) = boxes.iter().find(|b| b.method == m.method) {
                push("effect_min", format!("{}", b.min));
                push("effect_q1", format!("{}", b.q1));
                push("effect_median", format!("{}", b.median));
                push("effect_q3", format!("{}", b.q3));
                push("effect_max", format!("{}", b.max));
            }
            push("set_difference_mean", format!("{}", m.set_difference_mean));
            push("set_difference_std", format!("{}", m.set_difference_std));
            push("containment_pct", format!("{}", m.containment_pct));
            push("validity_pct", format!("{}", m.validity_pct));
            push("failures", format!("{}", m.failures));
            push("replicates", format!("{}", self.replicates));
        }
        out
    }

    /// Human-readable summary table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "n={} replicates={} alpha={} seed={} true_effect={}\n",
            self.n, self.replicates, self.alpha, self.seed, self.true_effect
        ));
        out.push_str(&format!(
            "{:<20} {:>12} {:>10} {:>12} {:>12} {:>10} {:>9}\n",
            "method", "set diff", "contain %", "valid %", "effect", "std", "failures"
        ));
        for m in &self.methods {
            out.push_str(&format!(
                "{:<20} {:>5.2} ± {:<4.2} {:>10.1} {:>12.1} {:>12.4} {:>10.4} {:>9}\n",
                m.method,
                m.set_difference_mean,
                m.set_difference_std,
                m.containment_pct,
                m.validity_pct,
                m.effect_mean,
                m.effect_std,
                m.failures
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::node_set;

    #[test]
    fn oracle_is_exact_by_construction() {
        let spec = BenchSpec::new(
            BenchCase::Case(1),
            200,
            3,
            vec!["target_oracle".into()],
            7,
        );
        let report = run_bench(&spec).unwrap();
        let m = &report.methods[0];
        assert_eq!(m.failures, 0);
        assert_eq!(m.set_difference_mean, 0.0);
        assert_eq!(m.containment_pct, 100.0);
        assert_eq!(m.validity_pct, 100.0);
        assert!((report.true_effect - 0.5).abs() < 1e-12);
    }

    #[test]
    fn same_spec_reproduces_outputs() {
        let spec = BenchSpec::new(
            BenchCase::Model(crate::sem::make_latent_proxy().hide(&node_set(["Z2"])).unwrap()),
            400,
            4,
            vec!["cmio".into(), "full_z".into()],
            11,
        );
        let a = run_bench(&spec).unwrap();
        let b = run_bench(&spec).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_table(), b.to_table());
    }

    #[test]
    fn failures_recorded_not_fatal() {
        // full_z on n < p data cannot fit 100 covariates on 30 rows
        let spec = BenchSpec::new(BenchCase::Case(3), 30, 2, vec!["full_z".into()], 3);
        let report = run_bench(&spec).unwrap();
        assert_eq!(report.methods[0].failures, 2);
        assert_eq!(report.methods[0].estimates.len(), 0);
    }

    #[test]
    fn unknown_method_is_an_error() {
        let spec = BenchSpec::new(BenchCase::Case(1), 50, 1, vec!["nope".into()], 1);
        assert!(matches!(run_bench(&spec), Err(Error::UnknownMethod(_))));
    }

    #[test]
    fn quartiles_match_reference_on_fixed_input() {
        // reference values computed by hand for the linear-interpolation
        // convention: h = (n-1) p
        let sorted = [1.0, 2.0, 4.0, 8.0, 16.0];
        assert_eq!(quantile(&sorted, 0.25), 2.0);
        assert_eq!(quantile(&sorted, 0.5), 4.0);
        assert_eq!(quantile(&sorted, 0.75), 8.0);
        let even = [1.0, 2.0, 3.0, 10.0];
        assert_eq!(quantile(&even, 0.25), 1.75);
        assert_eq!(quantile(&even, 0.5), 2.5);
        assert_eq!(quantile(&even, 0.75), 4.75);
        assert_eq!(quantile(&even, 0.0), 1.0);
        assert_eq!(quantile(&even, 1.0), 10.0);
    }

    #[test]
    fn boxplot_single_method_single_row() {
        let spec = BenchSpec::new(BenchCase::Case(1), 100, 5, vec!["target_oracle".into()], 5);
        let report = run_bench(&spec).unwrap();
        let rows = boxplot_data(&report);
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert!(r.min <= r.q1 && r.q1 <= r.median && r.median <= r.q3 && r.q3 <= r.max);
        assert_eq!(r.reference, 0.5);
    }
}
