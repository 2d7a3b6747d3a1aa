//! Linear structural equation models: specification, sampling,
//! do-interventions, and ground-truth total effects.
//!
//! Sampling is pure given `(model, n, seed)`. The random stream is fixed and
//! portable: a ChaCha12 generator seeded with the given `u64`, consumed row
//! by row with nodes visited in topological order; each Gaussian draw uses
//! two uniforms through the Box-Muller cosine branch, each Bernoulli draw one
//! uniform, and intervened nodes consume no draws. Identical seeds therefore
//! reproduce datasets bit-identically on every platform.

mod dataset;
mod model_file;

pub use dataset::{Dataset, Role};

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::graph::{Dag, NodeSet};

/// Generating mechanism of a node given its parents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    /// Weighted sum of parents plus Gaussian noise.
    Linear,
    /// Bernoulli draw with success probability `expit(weighted sum)`.
    BernoulliLogistic,
}

/// A do-intervention: clamp `target` to `value`.
#[derive(Debug, Clone)]
pub struct Intervention {
    pub target: String,
    pub value: f64,
}

/// Linear SEM over a DAG: edge coefficients, per-node noise variances and
/// links, a latent mask, and designated treatment/outcome columns.
#[derive(Debug, Clone)]
pub struct LinearSem {
    graph: Dag,
    parent_coeffs: Vec<Vec<(usize, f64)>>,
    noise: Vec<Option<f64>>,
    link: Vec<Link>,
    latent: BTreeSet<usize>,
    treatment: usize,
    outcome: usize,
}

/// Incremental construction of a [`LinearSem`].
#[derive(Debug, Default)]
pub struct SemBuilder {
    nodes: Vec<(String, Link, Option<f64>)>,
    edges: Vec<(String, String, f64)>,
    latent: Vec<String>,
    treatment: Option<String>,
    outcome: Option<String>,
}

impl SemBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Linear node with the given noise variance.
    pub fn node(mut self, name: &str, noise_var: f64) -> Self {
        self.nodes.push((name.into(), Link::Linear, Some(noise_var)));
        self
    }

    /// Bernoulli-logistic node; its randomness is the Bernoulli draw.
    pub fn logistic_node(mut self, name: &str) -> Self {
        self.nodes.push((name.into(), Link::BernoulliLogistic, None));
        self
    }

    pub fn edge(mut self, parent: &str, child: &str, coeff: f64) -> Self {
        self.edges.push((parent.into(), child.into(), coeff));
        self
    }

    pub fn latent(mut self, name: &str) -> Self {
        self.latent.push(name.into());
        self
    }

    pub fn treatment(mut self, name: &str) -> Self {
        self.treatment = Some(name.into());
        self
    }

    pub fn outcome(mut self, name: &str) -> Self {
        self.outcome = Some(name.into());
        self
    }

    pub fn build(self) -> Result<LinearSem> {
        let names: Vec<&str> = self.nodes.iter().map(|(n, _, _)| n.as_str()).collect();
        let edge_refs: Vec<(&str, &str)> =
            self.edges.iter().map(|(p, c, _)| (p.as_str(), c.as_str())).collect();
        let graph = Dag::new(names.clone(), &edge_refs)?;
        let n = self.nodes.len();
        let mut link = vec![Link::Linear; n];
        let mut noise = vec![None; n];
        for (name, lk, nv) in &self.nodes {
            let ix = graph.index_of(name)?;
            link[ix] = *lk;
            noise[ix] = *nv;
            match lk {
                Link::Linear => {
                    let v = nv.ok_or_else(|| {
                        Error::ModelInvariant(format!("linear node `{name}` needs a noise variance"))
                    })?;
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(Error::ModelInvariant(format!(
                            "noise variance of `{name}` must be positive and finite, got {v}"
                        )));
                    }
                }
                Link::BernoulliLogistic => {
                    if nv.is_some() {
                        return Err(Error::ModelInvariant(format!(
                            "bernoulli-logistic node `{name}` must not carry a noise variance"
                        )));
                    }
                }
            }
        }
        let mut parent_coeffs = vec![Vec::new(); n];
        for (p, c, w) in &self.edges {
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("coefficient of `{p} -> {c}`")));
            }
            let pi = graph.index_of(p)?;
            let ci = graph.index_of(c)?;
            parent_coeffs[ci].push((pi, *w));
        }
        let mut latent = BTreeSet::new();
        for name in &self.latent {
            latent.insert(graph.index_of(name)?);
        }
        let treatment = graph.index_of(
            self.treatment
                .as_deref()
                .ok_or_else(|| Error::ModelInvariant("model must designate a treatment node".into()))?,
        )?;
        let outcome = graph.index_of(
            self.outcome
                .as_deref()
                .ok_or_else(|| Error::ModelInvariant("model must designate an outcome node".into()))?,
        )?;
        if treatment == outcome {
            return Err(Error::ModelInvariant("treatment and outcome must differ".into()));
        }
        if latent.contains(&treatment) || latent.contains(&outcome) {
            return Err(Error::ModelInvariant("treatment and outcome cannot be latent".into()));
        }
        Ok(LinearSem { graph, parent_coeffs, noise, link, latent, treatment, outcome })
    }
}

impl LinearSem {
    pub fn builder() -> SemBuilder {
        SemBuilder::new()
    }

    pub fn graph(&self) -> &Dag {
        &self.graph
    }

    pub fn treatment_name(&self) -> &str {
        self.graph.name_of(self.treatment)
    }

    pub fn outcome_name(&self) -> &str {
        self.graph.name_of(self.outcome)
    }

    pub fn latent_names(&self) -> NodeSet {
        self.latent.iter().map(|&i| self.graph.name_of(i).to_string()).collect()
    }

    pub fn link_of(&self, name: &str) -> Result<Link> {
        Ok(self.link[self.graph.index_of(name)?])
    }

    /// Observed (non-latent) node names in declaration order.
    pub fn observed_names(&self) -> Vec<&str> {
        (0..self.graph.node_count())
            .filter(|i| !self.latent.contains(i))
            .map(|i| self.graph.name_of(i))
            .collect()
    }

    /// Same model with `v` added to the latent set.
    pub fn hide(&self, v: &NodeSet) -> Result<LinearSem> {
        let mut out = self.clone();
        for name in v {
            let ix = self.graph.index_of(name)?;
            if ix == self.treatment || ix == self.outcome {
                return Err(Error::ModelInvariant(format!(
                    "cannot hide the treatment or outcome node `{name}`"
                )));
            }
            out.latent.insert(ix);
        }
        Ok(out)
    }

    /// Draws `n` i.i.d. rows; latent columns are generated but dropped from
    /// the output.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.sample_inner(n, seed, None)
    }

    /// Samples from the intervened model: the target column is clamped to
    /// the given value, every other equation is unchanged.
    pub fn sample_do(&self, iv: &Intervention, n: usize, seed: u64) -> Result<Dataset> {
        let target = self.graph.index_of(&iv.target)?;
        if self.latent.contains(&target) {
            return Err(Error::ModelInvariant(format!(
                "cannot intervene on latent node `{}`",
                iv.target
            )));
        }
        if !iv.value.is_finite() {
            return Err(Error::NonFinite("intervention value".into()));
        }
        self.sample_inner(n, seed, Some((target, iv.value)))
    }

    fn sample_inner(&self, n: usize, seed: u64, clamp: Option<(usize, f64)>) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::InvalidQuery("sample size must be at least 1".into()));
        }
        let m = self.graph.node_count();
        let topo = self.graph.topo_indices().to_vec();
        let observed: Vec<usize> = (0..m).filter(|i| !self.latent.contains(i)).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut values = DMatrix::zeros(n, observed.len());
        let mut row = vec![0.0f64; m];
        for i in 0..n {
            for &node in &topo {
                let val = if let Some((t, v)) = clamp {
                    if t == node {
                        row[node] = v;
                        continue;
                    } else {
                        self.draw_node(node, &row, &mut rng)
                    }
                } else {
                    self.draw_node(node, &row, &mut rng)
                };
                row[node] = val;
            }
            for (j, &node) in observed.iter().enumerate() {
                values[(i, j)] = row[node];
            }
        }
        let names: Vec<String> = observed.iter().map(|&i| self.graph.name_of(i).to_string()).collect();
        let roles: Vec<Role> = observed
            .iter()
            .map(|&i| {
                if i == self.treatment {
                    Role::Treatment
                } else if i == self.outcome {
                    Role::Outcome
                } else {
                    Role::Covariate
                }
            })
            .collect();
        Dataset::new(names, roles, values)
    }

    fn draw_node(&self, node: usize, row: &[f64], rng: &mut ChaCha12Rng) -> f64 {
        let mut s = 0.0;
        for &(p, w) in &self.parent_coeffs[node] {
            s += w * row[p];
        }
        match self.link[node] {
            Link::Linear => s + self.noise[node].unwrap().sqrt() * standard_normal(rng),
            Link::BernoulliLogistic => {
                let p = expit(s);
                let u: f64 = rng.gen();
                (u < p) as u8 as f64
            }
        }
    }

    /// Sum over directed paths from `x` to `y` of the product of edge
    /// coefficients. Returns 0 when `y` is not a descendant of `x`. Errors
    /// if any node on such a path (other than `x` itself) is not linear.
    pub fn true_total_effect(&self, x: &str, y: &str) -> Result<f64> {
        let xi = self.graph.index_of(x)?;
        let yi = self.graph.index_of(y)?;
        if xi == yi {
            return Err(Error::InvalidQuery("total effect endpoints must differ".into()));
        }
        let m = self.graph.node_count();
        let mut eff = vec![0.0f64; m];
        eff[xi] = 1.0;
        for &node in self.graph.topo_indices() {
            if node == xi {
                continue;
            }
            let mut s = 0.0;
            for &(p, w) in &self.parent_coeffs[node] {
                s += w * eff[p];
            }
            if s != 0.0 && self.link[node] != Link::Linear {
                // `node` lies on a directed path out of x; a nonlinear link
                // breaks the path-product rule unless it cannot reach y
                let name = self.graph.name_of(node).to_string();
                let reaches_y = node == yi || {
                    let desc = self.graph.descendants(&name)?;
                    desc.contains(y)
                };
                if reaches_y {
                    return Err(Error::ModelInvariant(format!(
                        "node `{name}` on a path from `{x}` to `{y}` is not linear"
                    )));
                }
                continue;
            }
            eff[node] = s;
        }
        Ok(eff[yi])
    }

    /// Implied covariance of all nodes (including latent ones) in graph
    /// declaration order. Only defined for all-linear models.
    pub fn implied_covariance(&self) -> Result<(Vec<String>, DMatrix<f64>)> {
        let m = self.graph.node_count();
        if self.link.iter().any(|l| *l != Link::Linear) {
            return Err(Error::ModelInvariant(
                "implied covariance requires every node to be linear".into(),
            ));
        }
        // express each node in the basis of noise terms: node = sum w_j eps_j
        let mut w = DMatrix::<f64>::zeros(m, m);
        for &node in self.graph.topo_indices() {
            w[(node, node)] = 1.0;
            for &(p, c) in &self.parent_coeffs[node] {
                for j in 0..m {
                    let add = c * w[(p, j)];
                    if add != 0.0 {
                        w[(node, j)] += add;
                    }
                }
            }
        }
        let mut cov = DMatrix::<f64>::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let mut s = 0.0;
                for j in 0..m {
                    s += w[(a, j)] * w[(b, j)] * self.noise[j].unwrap();
                }
                cov[(a, b)] = s;
                cov[(b, a)] = s;
            }
        }
        let names = self.graph.node_names().to_vec();
        Ok((names, cov))
    }
}

/// Derives the seed for replicate `index` from a master seed; a fixed
/// SplitMix64-style mix, documented so published runs are reproducible.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x2545_F491_4F6C_DD1D);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Inverse logit.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    // Box-Muller, cosine branch; 1 - u keeps the log argument in (0, 1]
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// The three simulation-study generating processes: 100 covariates, binary
/// treatment from a logistic score, linear outcome.
///
/// * Case 1: independent standard-normal covariates, `Y = 0.5 X + 0.6 (Z1 + ... + Z20) + N(0,1)`.
/// * Case 2: as case 1 with pairwise covariate correlation 0.5.
/// * Case 3: correlated covariates, four outcome parents, `Y = X + 2 (Z1 + ... + Z4) + N(0,1)`.
///
/// Correlation 0.5 is realized by a shared latent factor `F` with
/// `Z_i = sqrt(0.5) F + N(0, 0.5)`, which never appears as a column.
pub fn make_case(id: usize, n: usize, seed: u64) -> Result<(LinearSem, Dataset)> {
    let model = case_model(id)?;
    let data = model.sample(n, seed)?;
    Ok((model, data))
}

/// The generating model of [`make_case`] without sampling.
pub fn case_model(id: usize) -> Result<LinearSem> {
    if !(1..=3).contains(&id) {
        return Err(Error::InvalidCase(id));
    }
    let p = 100usize;
    let mut b = LinearSem::builder();
    let correlated = id >= 2;
    if correlated {
        b = b.node("F", 1.0).latent("F");
    }
    for i in 1..=p {
        let name = format!("Z{i}");
        b = if correlated { b.node(&name, 0.5) } else { b.node(&name, 1.0) };
    }
    b = b.logistic_node("X").node("Y", 1.0).treatment("X").outcome("Y");
    if correlated {
        let w = 0.5f64.sqrt();
        for i in 1..=p {
            b = b.edge("F", &format!("Z{i}"), w);
        }
    }
    match id {
        1 | 2 => {
            for i in (1..=10).chain(21..=30) {
                b = b.edge(&format!("Z{i}"), "X", 1.0);
            }
            b = b.edge("X", "Y", 0.5);
            for i in 1..=20 {
                b = b.edge(&format!("Z{i}"), "Y", 0.6);
            }
        }
        3 => {
            for (i, w) in [(1, 0.5), (2, -0.5), (5, 0.3), (6, -0.3), (7, 0.35), (8, 0.4)] {
                b = b.edge(&format!("Z{i}"), "X", w);
            }
            b = b.edge("X", "Y", 1.0);
            for i in 1..=4 {
                b = b.edge(&format!("Z{i}"), "Y", 2.0);
            }
        }
        _ => unreachable!(),
    }
    b.build()
}

/// Five-node demonstration model in which the middle confounder `Z2` is
/// typically hidden and its child `Z3` acts as a tempting proxy:
///
/// ```text
/// Z1 -> X, X -> Y, Z1 -> Z2, Z2 -> Z3, Z2 -> Y     (all coefficients 1)
/// ```
///
/// Noise variances (Z1: 1.0, Z2: 1.2, Z3: 0.4, X: 0.5, Y: 1.0) are chosen so
/// that, with `Z2` hidden, the population 1-sparse regression support is
/// `{Z3}` while only `{Z1}`-containing sets are valid adjustment sets. `Z2`
/// is observed here; call `.hide()` for the latent scenario.
pub fn make_latent_proxy() -> LinearSem {
    LinearSem::builder()
        .node("Z1", 1.0)
        .node("Z2", 1.2)
        .node("Z3", 0.4)
        .node("X", 0.5)
        .node("Y", 1.0)
        .edge("Z1", "X", 1.0)
        .edge("X", "Y", 1.0)
        .edge("Z1", "Z2", 1.0)
        .edge("Z2", "Z3", 1.0)
        .edge("Z2", "Y", 1.0)
        .treatment("X")
        .outcome("Y")
        .build()
        .expect("demo model is valid")
}
