//! Text format for SEM models: the graph edge-list format with weights plus
//! header lines for noise variances, link types, the latent set, and the
//! treatment/outcome designation.
//!
//! ```text
//! # five-node proxy demo
//! node Z1 noise=1.0
//! node Z2 noise=1.2
//! node X  noise=0.5
//! latent Z2
//! treatment X
//! outcome Y
//! Z1 -> X 1.0
//! X -> Y 1.0
//! ```
//!
//! Nodes first seen in an edge default to `noise=1.0 link=linear`; edge
//! weights default to 1.0. `link=bernoulli-logistic` marks a Bernoulli node,
//! which must not carry a noise variance.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sem::{LinearSem, Link, SemBuilder};

struct NodeSpec {
    link: Link,
    noise: Option<f64>,
}

impl LinearSem {
    pub fn from_model_str(text: &str) -> Result<LinearSem> {
        let mut order: Vec<String> = Vec::new();
        let mut specs: BTreeMap<String, NodeSpec> = BTreeMap::new();
        let mut edges: Vec<(String, String, f64)> = Vec::new();
        let mut latent: Vec<String> = Vec::new();
        let mut treatment: Option<String> = None;
        let mut outcome: Option<String> = None;

        let declare = |name: &str, order: &mut Vec<String>, specs: &mut BTreeMap<String, NodeSpec>| {
            if !specs.contains_key(name) {
                order.push(name.to_string());
                specs.insert(name.to_string(), NodeSpec { link: Link::Linear, noise: None });
            }
        };

        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let lineno = lineno + 1;
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["node", name, attrs @ ..] => {
                    if specs.contains_key(*name) {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: format!("node `{name}` declared twice"),
                        });
                    }
                    let mut spec = NodeSpec { link: Link::Linear, noise: None };
                    for attr in attrs {
                        match attr.split_once('=') {
                            Some(("noise", v)) => {
                                spec.noise = Some(v.parse().map_err(|_| Error::Parse {
                                    line: lineno,
                                    msg: format!("bad noise value `{v}`"),
                                })?)
                            }
                            Some(("link", "linear")) => spec.link = Link::Linear,
                            Some(("link", "bernoulli-logistic")) => spec.link = Link::BernoulliLogistic,
                            _ => {
                                return Err(Error::Parse {
                                    line: lineno,
                                    msg: format!("unknown node attribute `{attr}`"),
                                })
                            }
                        }
                    }
                    order.push((*name).to_string());
                    specs.insert((*name).to_string(), spec);
                }
                ["latent", names @ ..] if !names.is_empty() => {
                    for name in names {
                        declare(name, &mut order, &mut specs);
                        latent.push((*name).to_string());
                    }
                }
                ["treatment", name] => treatment = Some((*name).to_string()),
                ["outcome", name] => outcome = Some((*name).to_string()),
                [p, "->", c] => {
                    declare(p, &mut order, &mut specs);
                    declare(c, &mut order, &mut specs);
                    edges.push(((*p).to_string(), (*c).to_string(), 1.0));
                }
                [p, "->", c, w] => {
                    declare(p, &mut order, &mut specs);
                    declare(c, &mut order, &mut specs);
                    let w: f64 = w.parse().map_err(|_| Error::Parse {
                        line: lineno,
                        msg: format!("bad edge weight `{w}`"),
                    })?;
                    edges.push(((*p).to_string(), (*c).to_string(), w));
                }
                _ => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("unrecognized model line `{line}`"),
                    })
                }
            }
        }

        let mut b: SemBuilder = LinearSem::builder();
        for name in &order {
            let spec = &specs[name];
            b = match spec.link {
                Link::Linear => b.node(name, spec.noise.unwrap_or(1.0)),
                Link::BernoulliLogistic => {
                    if spec.noise.is_some() {
                        return Err(Error::ModelInvariant(format!(
                            "bernoulli-logistic node `{name}` must not carry a noise variance"
                        )));
                    }
                    b.logistic_node(name)
                }
            };
        }
        for (p, c, w) in &edges {
            b = b.edge(p, c, *w);
        }
        for name in &latent {
            b = b.latent(name);
        }
        if let Some(t) = &treatment {
            b = b.treatment(t);
        }
        if let Some(o) = &outcome {
            b = b.outcome(o);
        }
        b.build()
    }

    pub fn read_model(path: &std::path::Path) -> Result<LinearSem> {
        let text = std::fs::read_to_string(path)?;
        Self::from_model_str(&text)
    }

    /// Renders the model in the same text format `from_model_str` accepts.
    pub fn to_model_string(&self) -> String {
        let mut out = String::new();
        for name in self.graph.node_names() {
            let ix = self.graph.index_of(name).unwrap();
            match self.link[ix] {
                Link::Linear => {
                    out.push_str(&format!("node {name} noise={}\n", self.noise[ix].unwrap()))
                }
                Link::BernoulliLogistic => {
                    out.push_str(&format!("node {name} link=bernoulli-logistic\n"))
                }
            }
        }
        for &ix in &self.latent {
            out.push_str(&format!("latent {}\n", self.graph.name_of(ix)));
        }
        out.push_str(&format!("treatment {}\n", self.treatment_name()));
        out.push_str(&format!("outcome {}\n", self.outcome_name()));
        for (ci, coeffs) in self.parent_coeffs.iter().enumerate() {
            for &(pi, w) in coeffs {
                out.push_str(&format!("{} -> {} {}\n", self.graph.name_of(pi), self.graph.name_of(ci), w));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sem::make_latent_proxy;

    #[test]
    fn parse_round_trip() {
        let model = make_latent_proxy();
        let text = model.to_model_string();
        let back = LinearSem::from_model_str(&text).unwrap();
        assert_eq!(back.to_model_string(), text);
        assert_eq!(back.treatment_name(), "X");
        // identical sampling stream
        assert_eq!(model.sample(25, 3).unwrap(), back.sample(25, 3).unwrap());
    }

    #[test]
    fn plain_edge_list_gets_defaults() {
        let model = LinearSem::from_model_str("treatment X\noutcome Y\nX -> Y\nZ -> X\nZ -> Y\n").unwrap();
        assert_eq!(model.link_of("X").unwrap(), Link::Linear);
        let d = model.sample(10, 1).unwrap();
        assert_eq!(d.column_count(), 3);
    }

    #[test]
    fn missing_roles_is_an_error() {
        assert!(LinearSem::from_model_str("X -> Y\n").is_err());
    }

    #[test]
    fn logistic_with_noise_rejected() {
        let text = "node X link=bernoulli-logistic noise=1.0\ntreatment X\noutcome Y\nX -> Y\n";
        assert!(LinearSem::from_model_str(text).is_err());
    }

    #[test]
    fn bad_lines_report_position() {
        let err = LinearSem::from_model_str("node A\nwhat is this\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
