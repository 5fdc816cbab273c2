//! Mediation and redundancy conditions, their errors in bits, and the
//! theorem-level checks built on them.
//!
//! A latent Λ *mediates* between observables `X_1..X_n` when they are
//! independent given Λ; the mediation error is the KL divergence of the joint
//! from `P[Λ] Π_j P[X_j | Λ]`. Λ is a *redund* when each `X_i` alone
//! determines it; the redundancy error for index `i` is `H(Λ | X_i)`. A latent
//! satisfying both is *natural*.
//!
//! When a mediator Λ and a redund Λ' live in the same joint over two
//! observables, `H(Λ' | Λ) <= ε_med + 2 max_i ε_red,i`.

use std::collections::{BTreeMap, BTreeSet};

use crate::dist::JointDistribution;
use crate::epsilon::EpsExpr;
use crate::error::{Error, Result};
use crate::graph::{factorization_kl, Dag};
use crate::random::{self, TheoremInstance};

/// Errors at or below this many bits count as exact.
pub const EXACT_TOLERANCE: f64 = 1e-9;

/// Slack allowed when comparing a theorem conclusion against its bound.
pub const THEOREM_TOLERANCE: f64 = 1e-9;

/// Default maximum absolute cell difference for two agents to agree on observables.
pub const AGREEMENT_TOLERANCE: f64 = 1e-6;

/// A joint distribution whose variables are split into observables and latents.
/// Multiple latents are always treated jointly as one composite latent.
#[derive(Debug, Clone)]
pub struct AgentModel {
    joint: JointDistribution,
    observables: Vec<String>,
    latents: Vec<String>,
}

impl AgentModel {
    pub fn new<S: Into<String>, T: Into<String>>(
        joint: JointDistribution,
        observables: impl IntoIterator<Item = S>,
        latents: impl IntoIterator<Item = T>,
    ) -> Result<Self> {
        let observables: Vec<String> = observables.into_iter().map(Into::into).collect();
        let latents: Vec<String> = latents.into_iter().map(Into::into).collect();
        if observables.len() < 2 {
            return Err(Error::InvalidModel(format!(
                "need at least 2 observables, got {}",
                observables.len()
            )));
        }
        if latents.is_empty() {
            return Err(Error::InvalidModel("need at least one latent".into()));
        }
        let mut seen = BTreeSet::new();
        for n in observables.iter().chain(&latents) {
            joint.index_of(n)?;
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidModel(format!(
                    "`{n}` is listed more than once across observables and latents"
                )));
            }
        }
        if let Some(extra) = joint.names().find(|n| !seen.contains(n)) {
            return Err(Error::InvalidModel(format!(
                "variable `{extra}` is neither observable nor latent"
            )));
        }
        Ok(Self {
            joint,
            observables,
            latents,
        })
    }

    pub fn joint(&self) -> &JointDistribution {
        &self.joint
    }

    pub fn observables(&self) -> &[String] {
        &self.observables
    }

    pub fn latents(&self) -> &[String] {
        &self.latents
    }

    /// The diagram Λ → X_j for every observable.
    pub fn mediation_graph(&self) -> Result<Dag> {
        Dag::star(&self.latents, &self.observables)
    }

    pub fn into_joint(self) -> JointDistribution {
        self.joint
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaturalityReport {
    pub eps_mediation_bits: f64,
    /// `H(Λ | X_i)` for each observable, in observable order.
    pub eps_redundancy_bits: Vec<f64>,
    pub eps_redundancy_max_bits: f64,
    pub is_exact: bool,
}

impl NaturalityReport {
    fn new(eps_mediation_bits: f64, eps_redundancy_bits: Vec<f64>) -> Self {
        let eps_redundancy_max_bits = eps_redundancy_bits.iter().copied().fold(0.0, f64::max);
        let is_exact =
            eps_mediation_bits <= EXACT_TOLERANCE && eps_redundancy_max_bits <= EXACT_TOLERANCE;
        Self {
            eps_mediation_bits,
            eps_redundancy_bits,
            eps_redundancy_max_bits,
            is_exact,
        }
    }

    /// Every error is at most `threshold` bits.
    pub fn within(&self, threshold: f64) -> bool {
        self.eps_mediation_bits <= threshold && self.eps_redundancy_max_bits <= threshold
    }
}

pub fn mediation_error(m: &AgentModel) -> Result<f64> {
    factorization_kl(&m.joint, &m.mediation_graph()?)
}

pub fn redundancy_errors(m: &AgentModel) -> Result<Vec<f64>> {
    m.observables
        .iter()
        .map(|x| m.joint.conditional_entropy(&m.latents, &[x.as_str()]))
        .collect()
}

pub fn naturality_report(m: &AgentModel) -> Result<NaturalityReport> {
    Ok(NaturalityReport::new(
        mediation_error(m)?,
        redundancy_errors(m)?,
    ))
}

/// The two-observable bound `ε_med + 2 ε_red` as a symbolic expression.
pub fn theorem_bound_expr(mediation: &str, redundancy: &str) -> EpsExpr {
    EpsExpr::var(mediation)
        + EpsExpr::var(redundancy)
            .scaled(2.0)
            .expect("positive coefficient")
}

/// Numeric value of [`theorem_bound_expr`].
pub fn theorem_bound(eps_mediation: f64, eps_redundancy_max: f64) -> f64 {
    let values = BTreeMap::from([
        ("med".to_string(), eps_mediation),
        ("red".to_string(), eps_redundancy_max),
    ]);
    theorem_bound_expr("med", "red")
        .evaluate(&values)
        .expect("both names bound")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremCheck {
    pub eps_mediation: f64,
    pub eps_redundancy: Vec<f64>,
    pub eps_redundancy_max: f64,
    /// `H(Λ' | Λ)` in bits.
    pub conclusion_bits: f64,
    pub bound_bits: f64,
    pub holds: bool,
}

impl TheoremCheck {
    pub fn from_parts(eps_mediation: f64, eps_redundancy: Vec<f64>, conclusion_bits: f64) -> Self {
        let eps_redundancy_max = eps_redundancy.iter().copied().fold(0.0, f64::max);
        let bound_bits = theorem_bound(eps_mediation, eps_redundancy_max);
        Self {
            eps_mediation,
            eps_redundancy,
            eps_redundancy_max,
            conclusion_bits,
            bound_bits,
            holds: conclusion_bits <= bound_bits + THEOREM_TOLERANCE,
        }
    }

    pub fn slack(&self) -> f64 {
        self.bound_bits - self.conclusion_bits
    }
}

fn require_disjoint(groups: &[&[&str]]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for g in groups {
        for n in *g {
            if !seen.insert(*n) {
                return Err(Error::OverlappingSets(n.to_string()));
            }
        }
    }
    Ok(())
}

/// Measures the mediation error of `mediator`, the redundancy errors of
/// `redund`, and the conclusion `H(redund | mediator)`, for exactly two
/// observables. Other variables in `p` are marginalized out.
pub fn mediator_determines_redund(
    p: &JointDistribution,
    observables: &[&str],
    mediator: &[&str],
    redund: &[&str],
) -> Result<TheoremCheck> {
    if observables.len() != 2 {
        return Err(Error::ObservableCount {
            expected: 2,
            found: observables.len(),
        });
    }
    if mediator.is_empty() || redund.is_empty() {
        return Err(Error::InvalidModel(
            "mediator and redund must be non-empty".into(),
        ));
    }
    require_disjoint(&[observables, mediator, redund])?;
    let med_vars: Vec<&str> = mediator.iter().chain(observables).copied().collect();
    let med_joint = p.marginalize(&med_vars)?;
    let eps_med = factorization_kl(&med_joint, &Dag::star(mediator, observables)?)?;
    let eps_red = observables
        .iter()
        .map(|x| p.conditional_entropy(redund, &[*x]))
        .collect::<Result<Vec<_>>>()?;
    let conclusion = p.conditional_entropy(redund, mediator)?;
    Ok(TheoremCheck::from_parts(eps_med, eps_red, conclusion))
}

/// Whether Alice's latent can be guaranteed to be a function of any other
/// mediating latent: it must mediate, and must be determined by each
/// observable alone (Bob may pick either observable as his latent).
#[derive(Debug, Clone, PartialEq)]
pub struct TranslatabilityAudit {
    pub eps_mediation: f64,
    pub h_given_x1: f64,
    pub h_given_x2: f64,
    pub threshold: f64,
    pub mediation_ok: bool,
    pub redundancy_ok: bool,
    pub translatable: bool,
}

pub fn translatability_audit(alice: &AgentModel, threshold: f64) -> Result<TranslatabilityAudit> {
    if alice.observables.len() != 2 {
        return Err(Error::ObservableCount {
            expected: 2,
            found: alice.observables.len(),
        });
    }
    if !(threshold >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "threshold {threshold} must be >= 0"
        )));
    }
    let eps_mediation = mediation_error(alice)?;
    let red = redundancy_errors(alice)?;
    let mediation_ok = eps_mediation <= threshold;
    let redundancy_ok = red.iter().all(|&h| h <= threshold);
    Ok(TranslatabilityAudit {
        eps_mediation,
        h_given_x1: red[0],
        h_given_x2: red[1],
        threshold,
        mediation_ok,
        redundancy_ok,
        translatable: mediation_ok && redundancy_ok,
    })
}

/// Maximum cell discrepancy between the two models' observable marginals.
pub fn observable_discrepancy(alice: &AgentModel, bob: &AgentModel) -> Result<f64> {
    let a: BTreeSet<&String> = alice.observables.iter().collect();
    let b: BTreeSet<&String> = bob.observables.iter().collect();
    if a != b {
        return Err(Error::InvalidModel(
            "models do not share the same observables".into(),
        ));
    }
    let pa = alice.joint.reorder(&alice.observables)?;
    let pb = bob.joint.reorder(&alice.observables)?;
    pa.max_abs_diff(&pb)
}

/// `(H(Λ^A | Λ^B), H(Λ^B | Λ^A))` under a coupling of the two models.
///
/// The models must agree on the observables to within `tolerance`, and the
/// coupling must marginalize to each model to within the same tolerance.
pub fn cross_agent_translation(
    alice: &AgentModel,
    bob: &AgentModel,
    coupling: &JointDistribution,
    tolerance: f64,
) -> Result<(f64, f64)> {
    let max_diff = observable_discrepancy(alice, bob)?;
    if max_diff > tolerance {
        return Err(Error::ModelsDisagree { max_diff });
    }
    if let Some(n) = alice.latents.iter().find(|n| bob.latents.contains(n)) {
        return Err(Error::InvalidModel(format!(
            "latent `{n}` appears in both models; rename one side in the coupling"
        )));
    }
    let expected = alice.joint.num_vars() + bob.latents.len();
    if coupling.num_vars() != expected {
        return Err(Error::InvalidModel(format!(
            "coupling has {} variables, expected observables plus both latent sets ({expected})",
            coupling.num_vars()
        )));
    }
    for model in [alice, bob] {
        let names: Vec<&str> = model.joint.names().collect();
        let m = coupling.reorder(&names)?;
        let d = m.max_abs_diff(&model.joint)?;
        if d > tolerance {
            return Err(Error::InvalidModel(format!(
                "coupling does not marginalize to the model over {{{}}} (max diff {d:e})",
                names.join(" ")
            )));
        }
    }
    Ok((
        coupling.conditional_entropy(&alice.latents, &bob.latents)?,
        coupling.conditional_entropy(&bob.latents, &alice.latents)?,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub samples: usize,
    pub violations: Vec<(u64, TheoremCheck)>,
    pub min_slack: f64,
    pub max_slack: f64,
    pub max_conclusion: f64,
}

fn check_instance(inst: &TheoremInstance) -> Result<TheoremCheck> {
    let obs: Vec<&str> = inst.observables.iter().map(String::as_str).collect();
    mediator_determines_redund(&inst.joint, &obs, &[&inst.mediator], &[&inst.redund])
}

/// Checks the two-observable bound on `samples` seeded random instances.
/// Instance `i` depends only on `(seed, i)`.
pub fn theorem_sweep(seed: u64, samples: usize, max_cardinality: usize) -> Result<SweepReport> {
    let mut report = SweepReport {
        samples,
        violations: Vec::new(),
        min_slack: f64::INFINITY,
        max_slack: f64::NEG_INFINITY,
        max_conclusion: 0.0,
    };
    for i in 0..samples as u64 {
        let mut rng = random::instance_rng(seed, i);
        let inst = random::theorem_instance(&mut rng, max_cardinality)?;
        let check = check_instance(&inst)?;
        report.min_slack = report.min_slack.min(check.slack());
        report.max_slack = report.max_slack.max(check.slack());
        report.max_conclusion = report.max_conclusion.max(check.conclusion_bits);
        if !check.holds {
            report.violations.push((i, check));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::vars;
    use crate::graph::factorization_kl;

    /// Λ picks a bias in {1/4, 3/4}; X1, X2 are i.i.d. flips given Λ.
    fn biased_pair() -> AgentModel {
        let bias = [0.25, 0.75];
        let j = JointDistribution::from_fn(vars(&[("L", 2), ("X1", 2), ("X2", 2)]), |a| {
            let b = bias[a[0]];
            let f = |x: usize| if x == 1 { b } else { 1.0 - b };
            0.5 * f(a[1]) * f(a[2])
        })
        .unwrap();
        AgentModel::new(j, ["X1", "X2"], ["L"]).unwrap()
    }

    #[test]
    fn model_validation() {
        let j = JointDistribution::uniform(vars(&[("L", 2), ("X1", 2), ("X2", 2)])).unwrap();
        assert!(AgentModel::new(j.clone(), ["X1"], ["L"]).is_err());
        assert!(AgentModel::new(j.clone(), ["X1", "X2"], Vec::<String>::new()).is_err());
        assert!(AgentModel::new(j.clone(), ["X1", "X2"], ["X1"]).is_err());
        assert!(AgentModel::new(j.clone(), ["X1", "L"], ["X2", "Q"]).is_err());
        let partial = j.marginalize(&["L", "X1"]).unwrap();
        let extra = partial.with_copy("X1", "Z").unwrap();
        assert!(AgentModel::new(extra, ["X1", "Z"], Vec::<&str>::new()).is_err());
    }

    #[test]
    fn mediation_examples() {
        assert!(mediation_error(&biased_pair()).unwrap() < 1e-15);
        let j = JointDistribution::new(
            vars(&[("L", 1), ("X1", 2), ("X2", 2)]),
            vec![0.5, 0.0, 0.0, 0.5],
        )
        .unwrap();
        let m = AgentModel::new(j, ["X1", "X2"], ["L"]).unwrap();
        assert_eq!(mediation_error(&m).unwrap(), 1.0);
    }

    #[test]
    fn mediation_equals_star_factorization_error() {
        let m = biased_pair();
        let star = Dag::star(&["L"], &["X1", "X2"]).unwrap();
        assert_eq!(
            mediation_error(&m).unwrap(),
            factorization_kl(m.joint(), &star).unwrap()
        );
    }

    #[test]
    fn redundancy_examples() {
        let copies = JointDistribution::new(
            vars(&[("L", 2), ("X1", 2), ("X2", 2)]),
            vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5],
        )
        .unwrap();
        let m = AgentModel::new(copies, ["X1", "X2"], ["L"]).unwrap();
        assert_eq!(redundancy_errors(&m).unwrap(), vec![0.0, 0.0]);
        let r = naturality_report(&m).unwrap();
        assert!(r.is_exact);

        let noise = JointDistribution::uniform(vars(&[("L", 2), ("X1", 2), ("X2", 2)])).unwrap();
        let m = AgentModel::new(noise, ["X1", "X2"], ["L"]).unwrap();
        let red = redundancy_errors(&m).unwrap();
        assert!((red[0] - 1.0).abs() < 1e-15 && (red[1] - 1.0).abs() < 1e-15);
        let r = naturality_report(&m).unwrap();
        assert!(!r.is_exact);
        assert_eq!(r.eps_redundancy_max_bits, red[0].max(red[1]));
    }

    #[test]
    fn theorem_bound_formula() {
        assert_eq!(theorem_bound(0.0, 0.058), 0.116);
        assert_eq!(theorem_bound(0.5, 0.0), 0.5);
    }

    #[test]
    fn theorem_check_rejects_bad_inputs() {
        let p = biased_pair().into_joint().with_copy("X1", "R").unwrap();
        assert!(matches!(
            mediator_determines_redund(&p, &["X1", "X2", "R"], &["L"], &["R"]),
            Err(Error::ObservableCount {
                expected: 2,
                found: 3
            })
        ));
        assert!(matches!(
            mediator_determines_redund(&p, &["X1", "X2"], &["L"], &["X1"]),
            Err(Error::OverlappingSets(_))
        ));
        let c = mediator_determines_redund(&p, &["X1", "X2"], &["L"], &["R"]).unwrap();
        assert_eq!(c.eps_redundancy[0], 0.0);
        assert!(c.holds);
    }

    #[test]
    fn audit_rejects_wrong_arity() {
        let j =
            JointDistribution::uniform(vars(&[("L", 2), ("A", 2), ("B", 2), ("C", 2)])).unwrap();
        let m = AgentModel::new(j, ["A", "B", "C"], ["L"]).unwrap();
        assert!(matches!(
            translatability_audit(&m, 0.1),
            Err(Error::ObservableCount { .. })
        ));
    }

    #[test]
    fn disagreeing_models_are_rejected() {
        let a = biased_pair();
        let j = JointDistribution::uniform(vars(&[("M", 2), ("X1", 2), ("X2", 2)])).unwrap();
        let b = AgentModel::new(j, ["X1", "X2"], ["M"]).unwrap();
        let coupling =
            JointDistribution::uniform(vars(&[("L", 2), ("X1", 2), ("X2", 2), ("M", 2)])).unwrap();
        match cross_agent_translation(&a, &b, &coupling, AGREEMENT_TOLERANCE) {
            Err(Error::ModelsDisagree { max_diff }) => assert!((max_diff - 0.0625).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }
}
