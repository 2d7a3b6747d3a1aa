//! Covariate-selection strategies behind a common trait, registered by name
//! and selected at runtime (`--methods` on the bench command).
//!
//! Built-ins:
//!
//! * `cmio` — the sufficiency-assuming selector.
//! * `cmio_latent` — the hidden-variable variant.
//! * `target_oracle` — reads the optimal set off the ground-truth graph;
//!   only available when the generating model is known.
//! * `full_z` — adjusts for every observed covariate.
//! * `t_xy_unconstrained` — plain best-subset with no causal constraints;
//!   the budget comes from `txy_k` or, when unset, a BIC scan.

use crate::cmio;
use crate::error::{Error, Result};
use crate::graph::NodeSet;
use crate::sem::{Dataset, LinearSem};
use crate::stats;
use crate::subset::{self, Prepared, SolverConfig};

/// Everything a strategy may consult. `truth` is the generating model when
/// the caller has it (simulation benches); data-only strategies ignore it.
pub struct MethodContext<'a> {
    pub data: &'a Dataset,
    pub x: &'a str,
    pub y: &'a str,
    pub alpha: f64,
    pub solver: SolverConfig,
    pub truth: Option<&'a LinearSem>,
    pub txy_k: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub selected: NodeSet,
    pub effect: f64,
}

/// A covariate-selection strategy.
pub trait SelectionMethod: Send + Sync {
    fn name(&self) -> &'static str;
    fn requires_truth(&self) -> bool {
        false
    }
    fn select(&self, ctx: &MethodContext<'_>) -> Result<MethodOutcome>;
}

struct Cmio;

impl SelectionMethod for Cmio {
    fn name(&self) -> &'static str {
        "cmio"
    }

    fn select(&self, ctx: &MethodContext<'_>) -> Result<MethodOutcome> {
        let report = cmio::cmio_select(ctx.data, ctx.x, ctx.y, ctx.alpha, &ctx.solver)?;
        Ok(MethodOutcome { selected: report.selected, effect: report.effect_estimate })
    }
}

struct CmioLatent;

impl SelectionMethod for CmioLatent {
    fn name(&self) -> &'static str {
        "cmio_latent"
    }

    fn select(&self, ctx: &MethodContext<'_>) -> Result<MethodOutcome> {
        let report = cmio::cmio_select_latent(ctx.data, ctx.x, ctx.y, ctx.alpha, &ctx.solver)?;
        Ok(MethodOutcome { selected: report.selected, effect: report.effect_estimate })
    }
}

struct TargetOracle;

impl SelectionMethod for TargetOracle {
    fn name(&self) -> &'static str {
        "target_oracle"
    }

    fn requires_truth(&self) -> bool {
        true
    }

    fn select(&self, ctx: &MethodContext<'_>) -> Result<MethodOutcome> {
        let truth = ctx.truth.ok_or_else(|| Error::TruthRequired(self.name().into()))?;
        let selected = truth.graph().optimal_adjustment(ctx.x, ctx.y)?;
        let z: Vec<&str> = selected.iter().map(String::as_str).collect();
        let effect = stats::adjusted_effect(ctx.data, ctx.x, ctx.y, &z)?;
        Ok(MethodOutcome { selected, effect })
    }
}

struct FullZ;

impl SelectionMethod for FullZ {
    fn name(&self) -> &'static str {
        "full_z"
    }

    fn select(&self, ctx: &MethodContext<'_>) -> Result<MethodOutcome> {
        let selected: NodeSet = ctx
            .data
            .names()
            .iter()
            .filter(|name| name.as_str() != ctx.x && name.as_str() != ctx.y)
            .cloned()
            .collect();
        let z: Vec<&str> = selected.iter().map(String::as_str).collect();
        let effect = stats::adjusted_effect(ctx.data, ctx.x, ctx.y, &z)?;
        Ok(MethodOutcome { selected, effect })
    }
}

struct TxyUnconstrained;

impl SelectionMethod for TxyUnconstrained {
    fn name(&self) -> &'static str {
        "t_xy_unconstrained"
    }

    fn select(&self, ctx: &MethodContext<'_>) -> Result<MethodOutcome> {
        let (design, response, covariates) = cmio::design_from_dataset(ctx.data, ctx.x, ctx.y)?;
        let prepared = Prepared::new(&design, &response, true, None)?;
        let kmax = covariates.len().min(ctx.data.n().saturating_sub(4));
        let sol = match ctx.txy_k {
            Some(k) => prepared.solve(k.min(kmax), &ctx.solver)?,
            None => subset::solve_bic(&prepared, kmax, &ctx.solver)?.1,
        };
        let selected: NodeSet = sol.support.iter().map(|&j| covariates[j].clone()).collect();
        let z: Vec<&str> = selected.iter().map(String::as_str).collect();
        let effect = stats::adjusted_effect(ctx.data, ctx.x, ctx.y, &z)?;
        Ok(MethodOutcome { selected, effect })
    }
}

/// Name-indexed registry of the built-in strategies.
pub struct MethodRegistry {
    methods: Vec<Box<dyn SelectionMethod>>,
}

impl MethodRegistry {
    pub fn builtin() -> Self {
        MethodRegistry {
            methods: vec![
                Box::new(Cmio),
                Box::new(CmioLatent),
                Box::new(TargetOracle),
                Box::new(FullZ),
                Box::new(TxyUnconstrained),
            ],
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.iter().map(|m| m.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn SelectionMethod> {
        self.methods
            .iter()
            .find(|m| m.name() == name)
            .map(AsRef::as_ref)
            .ok_or_else(|| Error::UnknownMethod(name.into()))
    }

    pub fn resolve(&self, names: &[String]) -> Result<Vec<&dyn SelectionMethod>> {
        names.iter().map(|n| self.get(n)).collect()
    }
}

impl Default for MethodRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::node_set;
    use crate::sem::make_case;

    #[test]
    fn registry_resolves_known_names() {
        let reg = MethodRegistry::builtin();
        assert_eq!(
            reg.names(),
            vec!["cmio", "cmio_latent", "target_oracle", "full_z", "t_xy_unconstrained"]
        );
        assert!(reg.get("cmio").is_ok());
        assert!(matches!(reg.get("lasso"), Err(Error::UnknownMethod(_))));
    }

    #[test]
    fn target_oracle_needs_truth() {
        let (model, data) = make_case(1, 200, 1).unwrap();
        let reg = MethodRegistry::builtin();
        let oracle = reg.get("target_oracle").unwrap();
        assert!(oracle.requires_truth());
        let ctx = MethodContext {
            data: &data,
            x: "X",
            y: "Y",
            alpha: 0.05,
            solver: SolverConfig::default(),
            truth: None,
            txy_k: None,
        };
        assert!(matches!(oracle.select(&ctx), Err(Error::TruthRequired(_))));
        let ctx_truth = MethodContext { truth: Some(&model), ..ctx };
        let out = oracle.select(&ctx_truth).unwrap();
        let expect: NodeSet = (1..=20).map(|i| format!("Z{i}")).collect();
        assert_eq!(out.selected, expect);
    }

    #[test]
    fn full_z_selects_everything() {
        let model = crate::sem::make_latent_proxy().hide(&node_set(["Z2"])).unwrap();
        let data = model.sample(300, 2).unwrap();
        let reg = MethodRegistry::builtin();
        let out = reg
            .get("full_z")
            .unwrap()
            .select(&MethodContext {
                data: &data,
                x: "X",
                y: "Y",
                alpha: 0.05,
                solver: SolverConfig::default(),
                truth: None,
                txy_k: None,
            })
            .unwrap();
        assert_eq!(out.selected, node_set(["Z1", "Z3"]));
    }

    #[test]
    fn txy_fixed_k_picks_proxy() {
        let model = crate::sem::make_latent_proxy().hide(&node_set(["Z2"])).unwrap();
        let data = model.sample(5000, 21).unwrap();
        let reg = MethodRegistry::builtin();
        let out = reg
            .get("t_xy_unconstrained")
            .unwrap()
            .select(&MethodContext {
                data: &data,
                x: "X",
                y: "Y",
                alpha: 0.05,
                solver: SolverConfig::default(),
                truth: None,
                txy_k: Some(1),
            })
            .unwrap();
        assert_eq!(out.selected, node_set(["Z3"]));
    }
}
