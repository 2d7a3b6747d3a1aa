//! Directed acyclic graphs over named variables, with the d-separation and
//! adjustment-set queries the selection algorithms rest on.
//!
//! Node identifiers are opaque strings. Sets of nodes are returned as
//! [`NodeSet`] (a `BTreeSet`) so iteration order is lexicographic and
//! deterministic. A `Dag` is immutable after construction; every query is
//! read-only.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};

/// Set of node names, ordered lexicographically.
pub type NodeSet = std::collections::BTreeSet<String>;

/// Directed acyclic graph. Construction validates acyclicity and rejects
/// self-loops and duplicate edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    names: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
    topo: Vec<usize>,
}

impl Dag {
    /// Builds a DAG from an explicit node list and `(parent, child)` edges.
    pub fn new<S: Into<String>>(nodes: Vec<S>, edges: &[(&str, &str)]) -> Result<Self> {
        let names: Vec<String> = nodes.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::DuplicateNode(name.clone()));
            }
        }
        let mut parents = vec![Vec::new(); names.len()];
        let mut children = vec![Vec::new(); names.len()];
        let mut edge_ix = Vec::with_capacity(edges.len());
        for &(p, c) in edges {
            let pi = *index.get(p).ok_or_else(|| Error::UnknownNode(p.into()))?;
            let ci = *index.get(c).ok_or_else(|| Error::UnknownNode(c.into()))?;
            if pi == ci {
                return Err(Error::SelfLoop(p.into()));
            }
            if children[pi].contains(&ci) {
                return Err(Error::DuplicateEdge(p.into(), c.into()));
            }
            children[pi].push(ci);
            parents[ci].push(pi);
            edge_ix.push((pi, ci));
        }
        let topo = topological_order(&names, &parents, &children)?;
        Ok(Dag { names, index, parents, children, edges: edge_ix, topo })
    }

    /// Builds a DAG from edges alone; nodes are declared in first-appearance order.
    pub fn from_edges(edges: &[(&str, &str)]) -> Result<Self> {
        let mut nodes: Vec<&str> = Vec::new();
        for &(p, c) in edges {
            if !nodes.contains(&p) {
                nodes.push(p);
            }
            if !nodes.contains(&c) {
                nodes.push(c);
            }
        }
        Self::new(nodes, edges)
    }

    /// Parses the edge-list text format: one `parent -> child [weight]` per
    /// line, optional `node NAME` declarations for isolated nodes, `#`
    /// comments. Weights are accepted and ignored here (the SEM layer uses
    /// them).
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut nodes: Vec<String> = Vec::new();
        let mut edges: Vec<(String, String)> = Vec::new();
        let declare = |name: &str, nodes: &mut Vec<String>| {
            if !nodes.iter().any(|n| n == name) {
                nodes.push(name.to_string());
            }
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["node", name] => declare(name, &mut nodes),
                [p, "->", c] | [p, "->", c, _] => {
                    declare(p, &mut nodes);
                    declare(c, &mut nodes);
                    edges.push((p.to_string(), c.to_string()));
                }
                _ => {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        msg: format!("expected `parent -> child [weight]` or `node NAME`, got `{line}`"),
                    })
                }
            }
        }
        let edge_refs: Vec<(&str, &str)> = edges.iter().map(|(p, c)| (p.as_str(), c.as_str())).collect();
        Self::new(nodes, &edge_refs)
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn node_names(&self) -> &[String] {
        &self.names
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|&(p, c)| (self.names[p].as_str(), self.names[c].as_str()))
    }

    /// Node indices in a topological order (parents before children).
    pub(crate) fn topo_indices(&self) -> &[usize] {
        &self.topo
    }

    pub(crate) fn index_of(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownNode(name.into()))
    }

    pub(crate) fn name_of(&self, ix: usize) -> &str {
        &self.names[ix]
    }

    fn to_set(&self, ixs: impl IntoIterator<Item = usize>) -> NodeSet {
        ixs.into_iter().map(|i| self.names[i].clone()).collect()
    }

    fn resolve_set(&self, set: &NodeSet) -> Result<Vec<usize>> {
        set.iter().map(|n| self.index_of(n)).collect()
    }

    /// Sources of edges into `v`.
    pub fn parents(&self, v: &str) -> Result<NodeSet> {
        let ix = self.index_of(v)?;
        Ok(self.to_set(self.parents[ix].iter().copied()))
    }

    /// Targets of edges out of `v`.
    pub fn children(&self, v: &str) -> Result<NodeSet> {
        let ix = self.index_of(v)?;
        Ok(self.to_set(self.children[ix].iter().copied()))
    }

    /// Nodes reachable from `v` along edge direction, excluding `v` itself.
    pub fn descendants(&self, v: &str) -> Result<NodeSet> {
        let ix = self.index_of(v)?;
        Ok(self.to_set(self.reach(&[ix], Direction::Forward).into_iter().filter(|&w| w != ix)))
    }

    /// Nodes that reach `v` along edge direction, excluding `v` itself.
    pub fn ancestors(&self, v: &str) -> Result<NodeSet> {
        let ix = self.index_of(v)?;
        Ok(self.to_set(self.reach(&[ix], Direction::Backward).into_iter().filter(|&w| w != ix)))
    }

    fn reach(&self, start: &[usize], dir: Direction) -> Vec<usize> {
        let next = |ix: usize| -> &[usize] {
            match dir {
                Direction::Forward => &self.children[ix],
                Direction::Backward => &self.parents[ix],
            }
        };
        let mut seen = vec![false; self.names.len()];
        let mut queue: VecDeque<usize> = start.iter().copied().collect();
        for &s in start {
            seen[s] = true;
        }
        let mut out = Vec::new();
        while let Some(w) = queue.pop_front() {
            out.push(w);
            for &u in next(w) {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        out
    }

    /// True iff every path between `a` and `b` is blocked by `cond`
    /// (chain/fork nodes block when conditioned, colliders block unless they
    /// or a descendant are conditioned).
    ///
    /// Linear-time reachability over (node, entry-direction) states; the
    /// exponential path-enumeration formulation lives in the test oracles.
    pub fn d_separated(&self, a: &str, b: &str, cond: &NodeSet) -> Result<bool> {
        let ai = self.index_of(a)?;
        let bi = self.index_of(b)?;
        if ai == bi {
            return Err(Error::InvalidQuery(format!("d_separated endpoints must differ, got `{a}` twice")));
        }
        let cond_ix = self.resolve_set(cond)?;
        if cond.contains(a) || cond.contains(b) {
            return Err(Error::InvalidQuery(format!(
                "conditioning set must not contain the endpoints `{a}`, `{b}`"
            )));
        }
        Ok(!self.d_connected_ix(ai, bi, &cond_ix))
    }

    fn d_connected_ix(&self, a: usize, b: usize, cond: &[usize]) -> bool {
        let n = self.names.len();
        let mut in_cond = vec![false; n];
        for &c in cond {
            in_cond[c] = true;
        }
        // conditioned nodes and their ancestors: collider openers
        let mut opens = vec![false; n];
        for w in self.reach(cond, Direction::Backward) {
            opens[w] = true;
        }

        // state: (node, entered via edge pointing into node?)
        let mut seen = vec![[false; 2]; n];
        let mut stack: Vec<(usize, bool)> = Vec::new();
        for &c in &self.children[a] {
            stack.push((c, true));
        }
        for &p in &self.parents[a] {
            stack.push((p, false));
        }
        while let Some((w, via_head)) = stack.pop() {
            if w == b {
                return true;
            }
            if seen[w][via_head as usize] {
                continue;
            }
            seen[w][via_head as usize] = true;
            let pass_noncollider = !in_cond[w];
            if via_head {
                // arrived along an edge into w: continuing to a child is a
                // chain, continuing to a parent makes w a collider
                if pass_noncollider {
                    for &c in &self.children[w] {
                        stack.push((c, true));
                    }
                }
                if opens[w] {
                    for &p in &self.parents[w] {
                        stack.push((p, false));
                    }
                }
            } else if pass_noncollider {
                // arrived against an edge out of w: fork or chain either way
                for &c in &self.children[w] {
                    stack.push((c, true));
                }
                for &p in &self.parents[w] {
                    stack.push((p, false));
                }
            }
        }
        false
    }

    /// Covariates in `z` that remain dependent on `y` given the treatment and
    /// the other covariates: `{W in z : not d_separated(W, y, ({x} u z) \ W)}`.
    /// The treatment itself is not reported; see [`Dag::treatment_is_predictor`].
    pub fn predictors_of(&self, y: &str, x: &str, z: &NodeSet) -> Result<NodeSet> {
        if z.contains(y) || z.contains(x) {
            return Err(Error::InvalidQuery("z must not contain the treatment or outcome".into()));
        }
        self.index_of(y)?;
        self.index_of(x)?;
        let mut out = NodeSet::new();
        for w in z {
            let mut cond: NodeSet = z.clone();
            cond.remove(w);
            cond.insert(x.to_string());
            if !self.d_separated(w, y, &cond)? {
                out.insert(w.clone());
            }
        }
        Ok(out)
    }

    /// Whether the treatment is itself a predictor of `y` in the sense of
    /// [`Dag::predictors_of`].
    pub fn treatment_is_predictor(&self, y: &str, x: &str, z: &NodeSet) -> Result<bool> {
        if z.contains(y) || z.contains(x) {
            return Err(Error::InvalidQuery("z must not contain the treatment or outcome".into()));
        }
        Ok(!self.d_separated(x, y, z)?)
    }

    /// True iff some path between `u` and `v` is not blocked by `z \ {u, v}`.
    pub fn d_adjacent(&self, u: &str, v: &str, z: &NodeSet) -> Result<bool> {
        if u == v {
            return Err(Error::InvalidQuery("d_adjacent endpoints must differ".into()));
        }
        let mut cond = z.clone();
        cond.remove(u);
        cond.remove(v);
        Ok(!self.d_separated(u, v, &cond)?)
    }

    /// Back-door test: `z` contains no descendant of `x` and d-separates `x`
    /// from `y` once the edges out of `x` are removed.
    pub fn is_valid_adjustment(&self, x: &str, y: &str, z: &NodeSet) -> Result<bool> {
        let xi = self.index_of(x)?;
        self.index_of(y)?;
        if z.contains(x) || z.contains(y) {
            return Err(Error::InvalidQuery("adjustment set must not contain x or y".into()));
        }
        let z_ix = self.resolve_set(z)?;
        let desc: Vec<usize> = self.reach(&[xi], Direction::Forward);
        let mut is_desc = vec![false; self.names.len()];
        for d in desc {
            is_desc[d] = true;
        }
        if z_ix.iter().any(|&c| c != xi && is_desc[c]) {
            return Ok(false);
        }
        let pruned = self.without_outgoing(xi);
        pruned.d_separated(x, y, z)
    }

    fn without_outgoing(&self, v: usize) -> Dag {
        let mut g = self.clone();
        for &c in &self.children[v] {
            g.parents[c].retain(|&p| p != v);
        }
        g.children[v].clear();
        g.edges.retain(|&(p, _)| p != v);
        g
    }

    /// The minimum-variance valid adjustment set under the pretreatment
    /// assumptions: `parents(y) \ {x}`. Errors if any other node descends
    /// from `x` or `y`, which breaks those assumptions.
    pub fn optimal_adjustment(&self, x: &str, y: &str) -> Result<NodeSet> {
        let xi = self.index_of(x)?;
        let yi = self.index_of(y)?;
        for &w in self
            .reach(&[xi], Direction::Forward)
            .iter()
            .chain(self.reach(&[yi], Direction::Forward).iter())
        {
            if w != xi && w != yi {
                return Err(Error::AssumptionViolated(self.names[w].clone()));
            }
        }
        let mut out = self.parents(y)?;
        out.remove(x);
        Ok(out)
    }
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Backward,
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

// Kahn's algorithm with a min-heap on node index, so the order depends only
// on the node declaration order and not on edge insertion order (the SEM
// sampling stream relies on this).
fn topological_order(
    names: &[String],
    parents: &[Vec<usize>],
    children: &[Vec<usize>],
) -> Result<Vec<usize>> {
    let n = names.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> =
        (0..n).filter(|&i| indegree[i] == 0).map(std::cmp::Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(std::cmp::Reverse(w)) = ready.pop() {
        order.push(w);
        for &c in &children[w] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(std::cmp::Reverse(c));
            }
        }
    }
    if order.len() != n {
        return Err(Error::Cycle);
    }
    Ok(order)
}

/// Convenience constructor for node sets in tests and call sites.
pub fn node_set<I: IntoIterator<Item = S>, S: Into<String>>(names: I) -> NodeSet {
    names.into_iter().map(Into::into).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Five-node demo graph: Z1 -> X, X -> Y, Z1 -> Z2, Z2 -> Z3, Z2 -> Y.
    fn demo() -> Dag {
        Dag::from_edges(&[("Z1", "X"), ("X", "Y"), ("Z1", "Z2"), ("Z2", "Z3"), ("Z2", "Y")]).unwrap()
    }

    #[test]
    fn parents_basic() {
        let g = demo();
        assert_eq!(g.parents("Y").unwrap(), node_set(["X", "Z2"]));
        let single = Dag::new(vec!["A"], &[]).unwrap();
        assert_eq!(single.parents("A").unwrap(), NodeSet::new());
        let chain = Dag::from_edges(&[("A", "B"), ("B", "C")]).unwrap();
        assert_eq!(chain.parents("C").unwrap(), node_set(["B"]));
        assert!(matches!(g.parents("nope"), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn ancestors_descendants_exclude_self() {
        let g = demo();
        assert_eq!(g.descendants("Z1").unwrap(), node_set(["X", "Z2", "Z3", "Y"]));
        assert_eq!(g.ancestors("Y").unwrap(), node_set(["X", "Z1", "Z2"]));
        let iso = Dag::new(vec!["A", "B"], &[]).unwrap();
        assert_eq!(iso.descendants("A").unwrap(), NodeSet::new());
    }

    #[test]
    fn construction_rejects_bad_graphs() {
        assert!(matches!(Dag::from_edges(&[("A", "A")]), Err(Error::SelfLoop(_))));
        assert!(matches!(
            Dag::from_edges(&[("A", "B"), ("A", "B")]),
            Err(Error::DuplicateEdge(_, _))
        ));
        assert!(matches!(
            Dag::from_edges(&[("A", "B"), ("B", "C"), ("C", "A")]),
            Err(Error::Cycle)
        ));
        assert!(matches!(Dag::new(vec!["A", "A"], &[]), Err(Error::DuplicateNode(_))));
    }

    #[test]
    fn d_separation_on_demo_graph() {
        let g = demo();
        // Z1 is screened off from Y by the full covariate set
        assert!(g.d_separated("Z1", "Y", &node_set(["X", "Z2", "Z3"])).unwrap());
        // Z3 is a predictor when Z2 is dropped
        assert!(!g.d_separated("Z3", "Y", &node_set(["X", "Z1"])).unwrap());
        let disc = Dag::new(vec!["A", "B"], &[]).unwrap();
        assert!(disc.d_separated("A", "B", &NodeSet::new()).unwrap());
    }

    #[test]
    fn d_separation_collider_descendant_opens() {
        // u -> c <- v, c -> d: conditioning on d opens the collider
        let g = Dag::from_edges(&[("u", "c"), ("v", "c"), ("c", "d")]).unwrap();
        assert!(g.d_separated("u", "v", &NodeSet::new()).unwrap());
        assert!(!g.d_separated("u", "v", &node_set(["d"])).unwrap());
        assert!(!g.d_separated("u", "v", &node_set(["c"])).unwrap());
    }

    #[test]
    fn d_separation_rejects_bad_queries() {
        let g = demo();
        assert!(g.d_separated("Z1", "Z1", &NodeSet::new()).is_err());
        assert!(g.d_separated("Z1", "Y", &node_set(["Y"])).is_err());
        assert!(g.d_separated("Z1", "missing", &NodeSet::new()).is_err());
    }

    #[test]
    fn predictors_match_worked_examples() {
        let g = demo();
        assert_eq!(g.predictors_of("Y", "X", &node_set(["Z1", "Z2", "Z3"])).unwrap(), node_set(["Z2"]));
        assert_eq!(g.predictors_of("Y", "X", &node_set(["Z1", "Z3"])).unwrap(), node_set(["Z1", "Z3"]));
        assert_eq!(g.predictors_of("Y", "X", &node_set(["Z2", "Z3"])).unwrap(), node_set(["Z2"]));
        assert_eq!(g.predictors_of("Y", "X", &NodeSet::new()).unwrap(), NodeSet::new());
    }

    #[test]
    fn d_adjacency_examples() {
        let g = demo();
        let z = node_set(["X", "Z1", "Z3", "Y"]);
        assert!(g.d_adjacent("Z1", "Y", &z).unwrap());
        assert!(g.d_adjacent("Z3", "Y", &z).unwrap());
        // adjacent nodes are d-adjacent under any conditioning set
        assert!(g.d_adjacent("X", "Y", &node_set(["Z1", "Z2", "Z3"])).unwrap());
    }

    #[test]
    fn adjustment_validity_examples() {
        let g = demo();
        assert!(g.is_valid_adjustment("X", "Y", &node_set(["Z1"])).unwrap());
        assert!(g.is_valid_adjustment("X", "Y", &node_set(["Z2"])).unwrap());
        assert!(!g.is_valid_adjustment("X", "Y", &node_set(["Z3"])).unwrap());
        // no back-door path at all: empty set is valid
        let simple = Dag::from_edges(&[("X", "Y")]).unwrap();
        assert!(simple.is_valid_adjustment("X", "Y", &NodeSet::new()).unwrap());
        // descendants of the treatment are rejected
        let med = Dag::from_edges(&[("X", "M"), ("M", "Y"), ("X", "Y")]).unwrap();
        assert!(!med.is_valid_adjustment("X", "Y", &node_set(["M"])).unwrap());
    }

    #[test]
    fn optimal_adjustment_examples() {
        let g = demo();
        assert_eq!(g.optimal_adjustment("X", "Y").unwrap(), node_set(["Z2"]));
        let sole = Dag::from_edges(&[("X", "Y")]).unwrap();
        assert_eq!(sole.optimal_adjustment("X", "Y").unwrap(), NodeSet::new());
        let med = Dag::from_edges(&[("X", "M"), ("M", "Y")]).unwrap();
        assert!(matches!(med.optimal_adjustment("X", "Y"), Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn optimal_adjustment_valid_on_demo() {
        let g = demo();
        let opt = g.optimal_adjustment("X", "Y").unwrap();
        assert!(g.is_valid_adjustment("X", "Y", &opt).unwrap());
    }

    #[test]
    fn edge_list_round_trip() {
        let text = "\
# demo graph
Z1 -> X
X -> Y 0.5
Z1 -> Z2 1.0
Z2 -> Z3
Z2 -> Y
node Z9
";
        let g = Dag::from_edge_list(text).unwrap();
        assert!(g.contains("Z9"));
        assert_eq!(g.parents("Y").unwrap(), node_set(["X", "Z2"]));
        assert!(Dag::from_edge_list("A -> ").is_err());
        assert!(Dag::from_edge_list("A <- B").is_err());
    }
}
