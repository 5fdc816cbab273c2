//! Monte-Carlo checks of rule budget arithmetic.
//!
//! Each sample draws a distribution that satisfies the premises exactly,
//! perturbs it by mixing in a flat-Dirichlet joint, measures the premises'
//! actual errors, and checks the conclusion's error against the budget those
//! errors imply.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use super::{Derivation, Diagram};
use crate::dist::{JointDistribution, VarSpec};
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::random::{
    instance_rng, near_one, random_factored, random_function, random_joint, InstanceRng,
};

/// One application of a rule, with everything needed to re-check it.
#[derive(Debug, Clone)]
pub enum RuleInstance {
    Frankenstein {
        inputs: Vec<Diagram>,
        output: Diagram,
    },
    /// `reference` is the graph the budget's reference distribution satisfies.
    Transfer {
        reference: Dag,
        output: Diagram,
    },
    Bookkeeping {
        input: Diagram,
        output: Diagram,
    },
    DanglyBit {
        input: Diagram,
        determinism: Diagram,
        output: Diagram,
    },
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub seed: u64,
    pub samples: usize,
    /// Variables get cardinalities drawn from `2..=max_cardinality`.
    pub max_cardinality: usize,
    pub tolerance: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 200,
            max_cardinality: 3,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub sample: u64,
    pub judgment: String,
    pub conclusion_bits: f64,
    pub budget_bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub samples: usize,
    pub checks: usize,
    pub violations: Vec<Violation>,
    /// Smallest and largest `budget - conclusion` over finite budgets.
    pub min_slack: f64,
    pub max_slack: f64,
    pub max_conclusion_bits: f64,
}

impl ValidationReport {
    fn new(samples: usize) -> Self {
        Self {
            samples,
            checks: 0,
            violations: Vec::new(),
            min_slack: f64::INFINITY,
            max_slack: f64::NEG_INFINITY,
            max_conclusion_bits: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn record(&mut self, sample: u64, judgment: &str, conclusion: f64, budget: f64, tol: f64) {
        self.checks += 1;
        self.max_conclusion_bits = self.max_conclusion_bits.max(conclusion);
        if budget.is_finite() {
            let slack = budget - conclusion;
            self.min_slack = self.min_slack.min(slack);
            self.max_slack = self.max_slack.max(slack);
        }
        if conclusion > budget + tol {
            self.violations.push(Violation {
                sample,
                judgment: judgment.to_string(),
                conclusion_bits: conclusion,
                budget_bits: budget,
            });
        }
    }
}

fn diagrams(inst: &RuleInstance) -> Vec<&Diagram> {
    match inst {
        RuleInstance::Frankenstein { inputs, output } => inputs.iter().chain([output]).collect(),
        RuleInstance::Transfer { output, .. } => vec![output],
        RuleInstance::Bookkeeping { input, output } => vec![input, output],
        RuleInstance::DanglyBit {
            input,
            determinism,
            output,
        } => vec![input, determinism, output],
    }
}

/// A graph diagram's structure over its original (non-copy) nodes.
fn originals_graph(d: &Diagram) -> Result<Option<Dag>> {
    match d {
        Diagram::Graph { dag, .. } => {
            let base = d.base_variables();
            let keep: Vec<&str> = base.iter().map(String::as_str).collect();
            Ok(Some(dag.induced(&keep)?))
        }
        Diagram::Determinism { .. } => Ok(None),
    }
}

fn determinism_parts(d: &Diagram) -> Option<(String, String)> {
    match d {
        Diagram::Determinism { source, target } => Some((source.clone(), target.clone())),
        Diagram::Graph { .. } => None,
    }
}

struct Sampler {
    rng: InstanceRng,
    vars: Vec<VarSpec>,
}

impl Sampler {
    fn new(names: &BTreeSet<String>, cfg: &SamplerConfig, sample: u64) -> Self {
        let mut rng = instance_rng(cfg.seed, sample);
        let vars = names
            .iter()
            .map(|n| VarSpec::new(n.clone(), rng.random_range(2..=cfg.max_cardinality)))
            .collect();
        Self { rng, vars }
    }

    fn card(&self, name: &str) -> usize {
        self.vars
            .iter()
            .find(|v| v.name == name)
            .map(|v| v.cardinality)
            .expect("sampled variable")
    }

    /// A distribution that factors over `g` (extended by isolated nodes to
    /// cover every variable) and then has each determinism target replaced by
    /// a function of its source.
    fn exact(&mut self, g: Option<&Dag>, dets: &[(String, String)]) -> Result<JointDistribution> {
        let mut h = match g {
            Some(g) => g.clone(),
            None => Dag::edgeless::<&str>(&[])?,
        };
        for v in &self.vars {
            if !h.contains(&v.name) {
                h = h.with_node(&v.name, &[])?;
            }
        }
        let cards: Vec<usize> = h.nodes().iter().map(|n| self.card(n)).collect();
        let mut e = random_factored(&mut self.rng, &h, &cards)?;
        for (src, tgt) in dets {
            let keep: Vec<String> = e
                .names()
                .filter(|n| *n != tgt)
                .map(str::to_string)
                .collect();
            let marg = e.marginalize(&keep)?;
            let si = marg.index_of(src)?;
            let (cs, ct) = (self.card(src), self.card(tgt));
            let f = random_function(&mut self.rng, cs, ct);
            e = marg.with_derived(tgt, ct, |a| f[a[si]])?;
        }
        let order: Vec<&str> = self.vars.iter().map(|v| v.name.as_str()).collect();
        e.reorder(&order)
    }

    fn weight(&mut self) -> f64 {
        let u: f64 = self.rng.random();
        if u < 0.25 {
            1.0
        } else if u < 0.75 {
            near_one(&mut self.rng)
        } else {
            self.rng.random()
        }
    }

    /// Mixes `exact` with a random joint.
    fn perturb(&mut self, exact: &JointDistribution) -> Result<JointDistribution> {
        let w = self.weight();
        let noise = random_joint(&mut self.rng, self.vars.clone())?;
        exact.mix(&noise, w)
    }
}

/// Checks that the instance's conclusion error never exceeds the budget the
/// rule assigns, over `cfg.samples` random distributions.
pub fn validate_rule(inst: &RuleInstance, cfg: &SamplerConfig) -> Result<ValidationReport> {
    if cfg.max_cardinality < 2 {
        return Err(Error::InvalidConfig("max cardinality must be >= 2".into()));
    }
    let mut names: BTreeSet<String> = diagrams(inst)
        .into_iter()
        .flat_map(Diagram::base_variables)
        .collect();
    if let RuleInstance::Transfer { reference, .. } = inst {
        names.extend(reference.nodes().iter().cloned());
    }
    let mut report = ValidationReport::new(cfg.samples);
    for s in 0..cfg.samples as u64 {
        let mut smp = Sampler::new(&names, cfg, s);
        let (p, budget, output) = match inst {
            RuleInstance::Frankenstein { inputs, output } => {
                let graphs: Vec<Dag> = inputs
                    .iter()
                    .map(|d| originals_graph(d).map(|g| g.expect("graph input")))
                    .collect::<Result<_>>()?;
                let refs: Vec<&Dag> = graphs.iter().collect();
                let h = Dag::intersection(&refs)?;
                let e = smp.exact(Some(&h), &[])?;
                let p = smp.perturb(&e)?;
                let mut budget = 0.0;
                for d in inputs {
                    budget += d.error_on(&p)?;
                }
                (p, budget, output)
            }
            RuleInstance::Bookkeeping { input, output } => {
                let h = originals_graph(input)?;
                let e = smp.exact(h.as_ref(), &[])?;
                let p = smp.perturb(&e)?;
                let budget = input.error_on(&p)?;
                (p, budget, output)
            }
            RuleInstance::DanglyBit {
                input,
                determinism,
                output,
            } => {
                let h = originals_graph(input)?;
                let det: Vec<_> = determinism_parts(determinism).into_iter().collect();
                let e = smp.exact(h.as_ref(), &det)?;
                let p = smp.perturb(&e)?;
                let budget = input.error_on(&p)? + determinism.error_on(&p)?;
                (p, budget, output)
            }
            RuleInstance::Transfer { reference, output } => {
                let e = smp.exact(Some(reference), &[])?;
                let p = smp.perturb(&e)?;
                let budget = p.kl_divergence(&e)?;
                (p, budget, output)
            }
        };
        let conclusion = output.error_on(&p)?;
        report.record(s, "output", conclusion, budget, cfg.tolerance);
    }
    Ok(report)
}

pub(super) fn validate_derivation(d: &Derivation, cfg: &SamplerConfig) -> Result<ValidationReport> {
    if !d.budgets().is_empty() {
        return Err(Error::InvalidConfig(
            "derivations with transfer budgets have no premise-only sampler; validate their steps"
                .into(),
        ));
    }
    if cfg.max_cardinality < 2 {
        return Err(Error::InvalidConfig("max cardinality must be >= 2".into()));
    }
    let premises: Vec<(&str, &super::DiagramJudgment)> = d.premises().collect();
    let names: BTreeSet<String> = premises
        .iter()
        .flat_map(|(_, j)| j.diagram.base_variables())
        .collect();

    // Keep an edge when every graph premise mentioning both ends has it.
    let graphs: Vec<Dag> = premises
        .iter()
        .filter_map(|(_, j)| originals_graph(&j.diagram).transpose())
        .collect::<Result<_>>()?;
    let mut edges = BTreeSet::new();
    for g in &graphs {
        for (p, c) in g.edges() {
            let agreed = graphs
                .iter()
                .filter(|h| h.contains(p) && h.contains(c))
                .all(|h| h.has_edge(p, c));
            if agreed {
                edges.insert((p.to_string(), c.to_string()));
            }
        }
    }
    let nodes: Vec<&String> = names.iter().collect();
    let edges: Vec<(String, String)> = edges.into_iter().collect();
    let h = Dag::new(&nodes, &edges).or_else(|_| Dag::edgeless(&nodes))?;
    let dets: Vec<(String, String)> = premises
        .iter()
        .filter_map(|(_, j)| determinism_parts(&j.diagram))
        .collect();

    let mut report = ValidationReport::new(cfg.samples);
    for s in 0..cfg.samples as u64 {
        let mut smp = Sampler::new(&names, cfg, s);
        let e = smp.exact(Some(&h), &dets)?;
        let p = smp.perturb(&e)?;
        let mut values: BTreeMap<String, f64> = BTreeMap::new();
        for (_, j) in &premises {
            let err = j.diagram.error_on(&p)?;
            for name in j.epsilon.names() {
                let v = values.entry(name.to_string()).or_insert(0.0);
                *v = v.max(err);
            }
        }
        for step in d.steps() {
            let conclusion = step.judgment.diagram.error_on(&p)?;
            let budget = step.judgment.epsilon.evaluate(&values)?;
            report.record(s, &step.output, conclusion, budget, cfg.tolerance);
        }
    }
    Ok(report)
}
