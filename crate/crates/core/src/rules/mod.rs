//! Diagram judgments and the proof rules that combine them.
//!
//! A judgment pairs a diagram with an approximation budget: "the true
//! distribution satisfies this diagram to within ε bits". Four rules derive
//! new judgments from old ones, each with its own budget arithmetic:
//!
//! * **Frankenstein**: diagrams sharing a topological order can be spliced
//!   node-by-node; the budget is the sum of all input budgets.
//! * **Factorization transfer**: if some `Q` satisfies a diagram exactly and
//!   `D_KL(P || Q) <= ε`, then `P` satisfies it to within ε.
//! * **Bookkeeping**: a diagram whose independences are all implied by
//!   another's inherits its budget.
//! * **Dangly bit**: given `Y ← X → Y` within ε, a copy of `Y` may be hung
//!   off `X` in any diagram containing `X`, at extra cost ε.
//!
//! Every step checks its preconditions when it is applied; [`validate_rule`]
//! checks the budget arithmetic numerically on random distributions.

mod script;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::dist::JointDistribution;
use crate::epsilon::EpsExpr;
use crate::error::{Error, Result};
use crate::graph::{
    common_topological_order, factorization_kl, implication_witness, order_conflict, Dag,
};

pub use script::{
    parse_script, replay_redund_bound, run_script, RedundBoundReplay, ScriptRun,
    REDUND_BOUND_SCRIPT,
};
pub use validate::{validate_rule, RuleInstance, SamplerConfig, ValidationReport, Violation};

#[derive(Debug, Clone, PartialEq)]
pub enum Diagram {
    /// A Bayes net. Copy nodes (keys of `copies`) stand for exact duplicates
    /// of the named original variable.
    Graph {
        dag: Dag,
        copies: BTreeMap<String, String>,
    },
    /// `target ← source → target`: `target` is a function of `source`.
    Determinism { source: String, target: String },
}

impl Diagram {
    pub fn graph(dag: Dag) -> Self {
        Diagram::Graph {
            dag,
            copies: BTreeMap::new(),
        }
    }

    pub fn determinism(source: impl Into<String>, target: impl Into<String>) -> Self {
        Diagram::Determinism {
            source: source.into(),
            target: target.into(),
        }
    }

    /// Underlying variables the diagram talks about (copies resolved).
    pub fn base_variables(&self) -> Vec<String> {
        match self {
            Diagram::Graph { dag, copies } => dag
                .nodes()
                .iter()
                .filter(|n| !copies.contains_key(*n))
                .cloned()
                .collect(),
            Diagram::Determinism { source, target } => vec![source.clone(), target.clone()],
        }
    }

    pub fn as_graph(&self) -> Option<(&Dag, &BTreeMap<String, String>)> {
        match self {
            Diagram::Graph { dag, copies } => Some((dag, copies)),
            Diagram::Determinism { .. } => None,
        }
    }

    /// The diagram's approximation error on `p`, in bits.
    pub fn error_on(&self, p: &JointDistribution) -> Result<f64> {
        match self {
            Diagram::Graph { dag, copies } => {
                let base = self.base_variables();
                let mut ext = p.reorder(&base)?;
                for (copy, orig) in copies {
                    ext = ext.with_copy(orig, copy)?;
                }
                factorization_kl(&ext, dag)
            }
            Diagram::Determinism { source, target } => {
                p.conditional_entropy(&[target.as_str()], &[source.as_str()])
            }
        }
    }

    /// Determinism diagrams spelled out as a three-node Bayes net with an
    /// explicit copy of the target; graphs are returned unchanged.
    pub fn expanded(&self) -> Result<Diagram> {
        match self {
            Diagram::Graph { .. } => Ok(self.clone()),
            Diagram::Determinism { source, target } => {
                let copy = fresh_copy_name(target, |n| n == source || n == target);
                let dag = Dag::new(
                    &[source.as_str(), target.as_str(), copy.as_str()],
                    &[
                        (source.as_str(), target.as_str()),
                        (source.as_str(), copy.as_str()),
                    ],
                )?;
                Ok(Diagram::Graph {
                    dag,
                    copies: BTreeMap::from([(copy, target.clone())]),
                })
            }
        }
    }

    /// True if the diagram asserts `target ← source → target`: either it is
    /// that determinism, or two nodes standing for `target` both have
    /// exactly `{source}` as parents.
    pub fn asserts_determinism(&self, source: &str, target: &str) -> bool {
        match self {
            Diagram::Determinism {
                source: s,
                target: t,
            } => s == source && t == target,
            Diagram::Graph { dag, copies } => {
                let stands_for = |n: &str| copies.get(n).map_or(n, String::as_str) == target;
                let hits = dag
                    .nodes()
                    .iter()
                    .filter(|n| stands_for(n))
                    .filter(|n| dag.parents(n).is_ok_and(|ps| ps == [source]))
                    .count();
                hits >= 2
            }
        }
    }
}

impl fmt::Display for Diagram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagram::Graph { dag, copies } => {
                write!(f, "{dag}")?;
                if !copies.is_empty() {
                    let c: Vec<String> = copies.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    write!(f, " copies[{}]", c.join(" "))?;
                }
                Ok(())
            }
            Diagram::Determinism { source, target } => {
                write!(f, "{target} <- {source} -> {target}")
            }
        }
    }
}

fn fresh_copy_name(base: &str, taken: impl Fn(&str) -> bool) -> String {
    (1..)
        .map(|k| format!("{base}~{k}"))
        .find(|n| !taken(n))
        .expect("unbounded search")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagramJudgment {
    pub diagram: Diagram,
    pub epsilon: EpsExpr,
}

impl fmt::Display for DiagramJudgment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}  [eps = {}]", self.diagram, self.epsilon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Frankenstein,
    FactorizationTransfer,
    Bookkeeping,
    DanglyBit,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Frankenstein => "frankenstein",
            Rule::FactorizationTransfer => "transfer",
            Rule::Bookkeeping => "bookkeeping",
            Rule::DanglyBit => "dangly_bit",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Step {
    pub rule: Rule,
    pub inputs: Vec<String>,
    pub output: String,
    pub judgment: DiagramJudgment,
    pub instance: RuleInstance,
}

/// Premises plus an append-only list of rule applications. Each step's
/// preconditions are checked when it is added.
#[derive(Debug, Clone, Default)]
pub struct Derivation {
    premises: Vec<String>,
    judgments: BTreeMap<String, DiagramJudgment>,
    /// Budget name → graph that the budget's reference distribution satisfies exactly.
    budgets: BTreeMap<String, Dag>,
    steps: Vec<Step>,
}

impl Derivation {
    pub fn new() -> Self {
        Self::default()
    }

    fn claim_name(&self, name: &str) -> Result<()> {
        crate::dist::validate_name(name)?;
        if self.judgments.contains_key(name) {
            return Err(Error::NameTaken(name.to_string()));
        }
        Ok(())
    }

    fn bound_epsilons(&self) -> BTreeSet<String> {
        self.premises
            .iter()
            .flat_map(|p| {
                self.judgments[p]
                    .epsilon
                    .names()
                    .map(str::to_string)
                    .collect::<Vec<_>>()
            })
            .chain(self.budgets.keys().cloned())
            .collect()
    }

    pub fn add_premise(
        &mut self,
        name: &str,
        diagram: Diagram,
        epsilon: &str,
    ) -> Result<&DiagramJudgment> {
        self.claim_name(name)?;
        crate::dist::validate_name(epsilon)?;
        if self.budgets.contains_key(epsilon) {
            return Err(Error::NameTaken(epsilon.to_string()));
        }
        self.premises.push(name.to_string());
        self.judgments.insert(
            name.to_string(),
            DiagramJudgment {
                diagram,
                epsilon: EpsExpr::var(epsilon),
            },
        );
        Ok(&self.judgments[name])
    }

    /// Declares `epsilon` as an upper bound on `D_KL(P || Q)` for some `Q`
    /// that exactly satisfies `graph`.
    pub fn declare_budget(&mut self, epsilon: &str, graph: Dag) -> Result<()> {
        crate::dist::validate_name(epsilon)?;
        if self.bound_epsilons().contains(epsilon) {
            return Err(Error::NameTaken(epsilon.to_string()));
        }
        self.budgets.insert(epsilon.to_string(), graph);
        Ok(())
    }

    pub fn judgment(&self, name: &str) -> Result<&DiagramJudgment> {
        self.judgments
            .get(name)
            .ok_or_else(|| Error::UnboundName(name.to_string()))
    }

    pub fn premises(&self) -> impl Iterator<Item = (&str, &DiagramJudgment)> {
        self.premises
            .iter()
            .map(|n| (n.as_str(), &self.judgments[n]))
    }

    pub fn budgets(&self) -> &BTreeMap<String, Dag> {
        &self.budgets
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// The most recent step's judgment, or `None` before any step.
    pub fn conclusion(&self) -> Option<&DiagramJudgment> {
        self.steps.last().map(|s| &s.judgment)
    }

    fn push(
        &mut self,
        rule: Rule,
        inputs: Vec<String>,
        output: &str,
        judgment: DiagramJudgment,
        instance: RuleInstance,
    ) -> &DiagramJudgment {
        self.judgments.insert(output.to_string(), judgment.clone());
        self.steps.push(Step {
            rule,
            inputs,
            output: output.to_string(),
            judgment,
            instance,
        });
        &self.judgments[output]
    }

    fn graph_input(
        &self,
        name: &str,
    ) -> Result<(&Dag, &BTreeMap<String, String>, &DiagramJudgment)> {
        let j = self.judgment(name)?;
        match &j.diagram {
            Diagram::Graph { dag, copies } => Ok((dag, copies, j)),
            Diagram::Determinism { .. } => Err(Error::RuleInapplicable(format!(
                "`{name}` is a determinism judgment; this rule needs a graph"
            ))),
        }
    }

    /// Splices the inputs: node `v` takes its parents from input
    /// `selector[v]` (default 0). Budget: the sum of all input budgets.
    pub fn frankenstein(
        &mut self,
        inputs: &[&str],
        selector: &BTreeMap<String, usize>,
        output: &str,
    ) -> Result<&DiagramJudgment> {
        self.claim_name(output)?;
        if inputs.is_empty() {
            return Err(Error::RuleInapplicable(
                "frankenstein needs at least one input".into(),
            ));
        }
        let mut dags = Vec::new();
        let mut copies = None;
        let mut epsilon = EpsExpr::zero();
        for name in inputs {
            let (dag, c, j) = self.graph_input(name)?;
            if let Some(first) = copies {
                if first != c {
                    return Err(Error::RuleInapplicable(format!(
                        "`{name}` declares different copy nodes"
                    )));
                }
            }
            copies = Some(c);
            dags.push(dag);
            epsilon = epsilon + j.epsilon.clone();
        }
        let copies = copies.expect("non-empty").clone();
        let order = common_topological_order(&dags)?;
        if order.is_none() {
            let (u, v) = order_conflict(&dags)?.expect("cyclic union has a conflicting edge");
            return Err(Error::RuleInapplicable(format!(
                "no common topological order: `{u}` and `{v}` conflict"
            )));
        }
        for (node, &k) in selector {
            dags[0].index_of(node)?;
            if k >= dags.len() {
                return Err(Error::RuleInapplicable(format!(
                    "selector for `{node}` picks input {k}, only {} given",
                    dags.len()
                )));
            }
        }
        let nodes = dags[0].nodes().to_vec();
        let mut edges = Vec::new();
        for v in &nodes {
            let k = selector.get(v).copied().unwrap_or(0);
            for p in dags[k].parents(v)? {
                edges.push((p.to_string(), v.clone()));
            }
        }
        let dag = Dag::new(&nodes, &edges)?;
        let inputs_d: Vec<Diagram> = inputs
            .iter()
            .map(|n| self.judgments[*n].diagram.clone())
            .collect();
        let diagram = Diagram::Graph { dag, copies };
        let instance = RuleInstance::Frankenstein {
            inputs: inputs_d,
            output: diagram.clone(),
        };
        Ok(self.push(
            Rule::Frankenstein,
            inputs.iter().map(|s| s.to_string()).collect(),
            output,
            DiagramJudgment { diagram, epsilon },
            instance,
        ))
    }

    /// `P` satisfies `target` to within the declared budget when the budget's
    /// reference distribution satisfies `target` exactly.
    pub fn factorization_transfer(
        &mut self,
        target: &Dag,
        budget: &str,
        output: &str,
    ) -> Result<&DiagramJudgment> {
        self.claim_name(output)?;
        let declared = self
            .budgets
            .get(budget)
            .ok_or_else(|| Error::UnboundName(budget.to_string()))?
            .clone();
        if let Some(w) = implication_witness(&declared, target)? {
            return Err(Error::RuleInapplicable(format!(
                "budget `{budget}` is for a distribution over {declared}, which need not satisfy {w}"
            )));
        }
        let diagram = Diagram::graph(target.clone());
        let instance = RuleInstance::Transfer {
            reference: declared,
            output: diagram.clone(),
        };
        Ok(self.push(
            Rule::FactorizationTransfer,
            vec![budget.to_string()],
            output,
            DiagramJudgment {
                diagram,
                epsilon: EpsExpr::var(budget),
            },
            instance,
        ))
    }

    /// Re-expresses `input` over `target` when every independence of
    /// `target` already holds in `input`'s graph.
    pub fn bookkeeping(
        &mut self,
        input: &str,
        target: &Dag,
        output: &str,
    ) -> Result<&DiagramJudgment> {
        self.claim_name(output)?;
        let (dag, copies, j) = self.graph_input(input)?;
        if let Some(w) = implication_witness(dag, target)? {
            return Err(Error::RuleInapplicable(format!(
                "`{input}` does not imply the target graph: {w} fails"
            )));
        }
        let diagram = Diagram::Graph {
            dag: target.clone(),
            copies: copies.clone(),
        };
        let judgment = DiagramJudgment {
            diagram: diagram.clone(),
            epsilon: j.epsilon.clone(),
        };
        let instance = RuleInstance::Bookkeeping {
            input: j.diagram.clone(),
            output: diagram,
        };
        Ok(self.push(
            Rule::Bookkeeping,
            vec![input.to_string()],
            output,
            judgment,
            instance,
        ))
    }

    /// Hangs a copy of the determinism's target off `attach_at`. If the
    /// target is not yet in the graph it is added under its own name;
    /// otherwise as `copy_name`, or a fresh `<target>~k`.
    pub fn dangly_bit(
        &mut self,
        input: &str,
        determinism: &str,
        attach_at: &str,
        copy_name: Option<&str>,
        output: &str,
    ) -> Result<&DiagramJudgment> {
        self.claim_name(output)?;
        let det = self.judgment(determinism)?.clone();
        let (source, target) = match &det.diagram {
            Diagram::Determinism { source, target } => (source.clone(), target.clone()),
            Diagram::Graph { .. } => {
                return Err(Error::RuleInapplicable(format!(
                    "`{determinism}` is not a determinism judgment"
                )))
            }
        };
        if source != attach_at {
            return Err(Error::RuleInapplicable(format!(
                "`{determinism}` is determined by `{source}`, not `{attach_at}`"
            )));
        }
        let (dag, copies, j) = self.graph_input(input)?;
        if !dag.contains(attach_at) {
            return Err(Error::UnknownNode(attach_at.to_string()));
        }
        if copies.contains_key(attach_at) {
            return Err(Error::RuleInapplicable(format!(
                "`{attach_at}` is a copy node; attach to the original"
            )));
        }
        let present = dag.contains(&target) || copies.values().any(|o| *o == target);
        let mut copies = copies.clone();
        let name = if present {
            let name = match copy_name {
                Some(n) => {
                    crate::dist::validate_name(n)?;
                    if dag.contains(n) {
                        return Err(Error::NameTaken(n.to_string()));
                    }
                    n.to_string()
                }
                None => fresh_copy_name(&target, |n| dag.contains(n)),
            };
            copies.insert(name.clone(), target.clone());
            name
        } else {
            target.clone()
        };
        let new_dag = dag.with_node(&name, &[attach_at])?;
        let diagram = Diagram::Graph {
            dag: new_dag,
            copies,
        };
        let judgment = DiagramJudgment {
            diagram: diagram.clone(),
            epsilon: j.epsilon.clone() + det.epsilon.clone(),
        };
        let instance = RuleInstance::DanglyBit {
            input: j.diagram.clone(),
            determinism: det.diagram.clone(),
            output: diagram,
        };
        Ok(self.push(
            Rule::DanglyBit,
            vec![input.to_string(), determinism.to_string()],
            output,
            judgment,
            instance,
        ))
    }

    /// Numeric check of every step's own budget arithmetic.
    pub fn validate_steps(&self, cfg: &SamplerConfig) -> Result<Vec<(String, ValidationReport)>> {
        self.steps
            .iter()
            .map(|s| Ok((s.output.clone(), validate_rule(&s.instance, cfg)?)))
            .collect()
    }

    /// Numeric check of every derived judgment against its symbolic budget,
    /// evaluated at the premises' actual errors on random distributions.
    pub fn validate_end_to_end(&self, cfg: &SamplerConfig) -> Result<ValidationReport> {
        validate::validate_derivation(self, cfg)
    }
}
