//! A line-oriented language for writing derivations down.
//!
//! ```text
//! dag <name> <node,node,...> [<parent>-><child> ...]
//! det <name> <source> <target>
//! premise <name> <dag-or-det> eps <epsilon>
//! budget <epsilon> <dag>
//! step frankenstein <judgment,judgment,...> [<node>=<input index> ...] -> <name>
//! step transfer <dag> <epsilon> -> <name>
//! step bookkeeping <judgment> <dag> -> <name>
//! step dangly_bit <judgment> <determinism> <attach-at> [as <copy>] -> <name>
//! conclude <judgment> <source> <target>
//! ```
//!
//! `#` starts a comment. `conclude` fails unless the judgment asserts that
//! `target` is determined by `source`.

use std::collections::BTreeMap;

use super::{Derivation, Diagram, DiagramJudgment};
use crate::epsilon::EpsExpr;
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::naturality::theorem_bound_expr;

/// Derivation of the two-observable stability bound from the four rules.
pub const REDUND_BOUND_SCRIPT: &str = include_str!("../../derivations/redund_bound.deriv");

#[derive(Debug, Clone)]
pub struct ScriptRun {
    pub derivation: Derivation,
    pub dags: BTreeMap<String, Dag>,
    /// `(judgment, source, target)` for each `conclude` line.
    pub conclusions: Vec<(String, String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
enum Directive {
    Dag(String, Vec<String>, Vec<(String, String)>),
    Det(String, String, String),
    Premise(String, String, String),
    Budget(String, String),
    Frankenstein(Vec<String>, BTreeMap<String, usize>, String),
    Transfer(String, String, String),
    Bookkeeping(String, String, String),
    Dangly(String, String, String, Option<String>, String),
    Conclude(String, String, String),
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::to_string).collect()
}

fn parse_line(line: usize, toks: &[&str]) -> Result<Directive> {
    let bad = |msg: &str| Error::parse(line, msg);
    let arity = |n: usize, usage: &str| -> Result<()> {
        if toks.len() == n {
            Ok(())
        } else {
            Err(Error::parse(line, format!("usage: {usage}")))
        }
    };
    // `... -> <name>` tail shared by every step.
    let output = |usage: &str| -> Result<String> {
        match toks {
            [.., "->", out] => Ok(out.to_string()),
            _ => Err(Error::parse(line, format!("usage: {usage}"))),
        }
    };
    match toks[0] {
        "dag" => {
            if toks.len() < 3 {
                return Err(bad("usage: dag <name> <node,...> [<parent>-><child> ...]"));
            }
            let edges = toks[3..]
                .iter()
                .map(|t| {
                    t.split_once("->")
                        .map(|(p, c)| (p.to_string(), c.to_string()))
                        .ok_or_else(|| bad(&format!("expected <parent>-><child>, found `{t}`")))
                })
                .collect::<Result<_>>()?;
            Ok(Directive::Dag(toks[1].into(), split_list(toks[2]), edges))
        }
        "det" => {
            arity(4, "det <name> <source> <target>")?;
            Ok(Directive::Det(
                toks[1].into(),
                toks[2].into(),
                toks[3].into(),
            ))
        }
        "premise" => {
            arity(5, "premise <name> <dag-or-det> eps <epsilon>")?;
            if toks[3] != "eps" {
                return Err(bad("usage: premise <name> <dag-or-det> eps <epsilon>"));
            }
            Ok(Directive::Premise(
                toks[1].into(),
                toks[2].into(),
                toks[4].into(),
            ))
        }
        "budget" => {
            arity(3, "budget <epsilon> <dag>")?;
            Ok(Directive::Budget(toks[1].into(), toks[2].into()))
        }
        "conclude" => {
            arity(4, "conclude <judgment> <source> <target>")?;
            Ok(Directive::Conclude(
                toks[1].into(),
                toks[2].into(),
                toks[3].into(),
            ))
        }
        "step" => {
            let rule = toks.get(1).copied().unwrap_or("");
            match rule {
                "frankenstein" => {
                    let usage = "step frankenstein <judgment,...> [<node>=<index> ...] -> <name>";
                    let out = output(usage)?;
                    if toks.len() < 5 {
                        return Err(bad(&format!("usage: {usage}")));
                    }
                    let mut sel = BTreeMap::new();
                    for t in &toks[3..toks.len() - 2] {
                        let (node, k) = t
                            .split_once('=')
                            .ok_or_else(|| bad(&format!("expected <node>=<index>, found `{t}`")))?;
                        let k: usize = k
                            .parse()
                            .map_err(|_| bad(&format!("bad input index `{k}`")))?;
                        if sel.insert(node.to_string(), k).is_some() {
                            return Err(bad(&format!("node `{node}` selected twice")));
                        }
                    }
                    Ok(Directive::Frankenstein(split_list(toks[2]), sel, out))
                }
                "transfer" => {
                    let usage = "step transfer <dag> <epsilon> -> <name>";
                    arity(6, usage)?;
                    let out = output(usage)?;
                    Ok(Directive::Transfer(toks[2].into(), toks[3].into(), out))
                }
                "bookkeeping" => {
                    let usage = "step bookkeeping <judgment> <dag> -> <name>";
                    arity(6, usage)?;
                    let out = output(usage)?;
                    Ok(Directive::Bookkeeping(toks[2].into(), toks[3].into(), out))
                }
                "dangly_bit" => {
                    let usage = "step dangly_bit <judgment> <determinism> <attach-at> [as <copy>] -> <name>";
                    let out = output(usage)?;
                    let copy = match toks.len() {
                        7 => None,
                        9 if toks[5] == "as" => Some(toks[6].to_string()),
                        _ => return Err(bad(&format!("usage: {usage}"))),
                    };
                    Ok(Directive::Dangly(
                        toks[2].into(),
                        toks[3].into(),
                        toks[4].into(),
                        copy,
                        out,
                    ))
                }
                other => Err(bad(&format!("unknown rule `{other}`"))),
            }
        }
        other => Err(bad(&format!("unknown directive `{other}`"))),
    }
}

/// Parses a script into `(line number, directive)` pairs without running it.
fn parse_directives(text: &str) -> Result<Vec<(usize, Directive)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = body.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        out.push((line, parse_line(line, &toks)?));
    }
    Ok(out)
}

/// Checks a script's syntax.
pub fn parse_script(text: &str) -> Result<()> {
    parse_directives(text).map(|_| ())
}

#[derive(Default)]
struct Replay {
    d: Derivation,
    dags: BTreeMap<String, Dag>,
    dets: BTreeMap<String, Diagram>,
    conclusions: Vec<(String, String, String)>,
}

impl Replay {
    fn dag(&self, name: &str) -> Result<Dag> {
        self.dags
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnboundName(name.to_string()))
    }

    fn claim(&self, name: &str) -> Result<()> {
        crate::dist::validate_name(name)?;
        if self.dags.contains_key(name) || self.dets.contains_key(name) {
            return Err(Error::NameTaken(name.to_string()));
        }
        Ok(())
    }

    fn apply(&mut self, dir: Directive) -> Result<()> {
        match dir {
            Directive::Dag(name, nodes, edges) => {
                self.claim(&name)?;
                let g = Dag::new(&nodes, &edges)?;
                self.dags.insert(name, g);
            }
            Directive::Det(name, src, tgt) => {
                self.claim(&name)?;
                crate::dist::validate_name(&src)?;
                crate::dist::validate_name(&tgt)?;
                if src == tgt {
                    return Err(Error::InvalidConfig(format!(
                        "determinism of `{src}` by itself"
                    )));
                }
                self.dets.insert(name, Diagram::determinism(src, tgt));
            }
            Directive::Premise(name, diagram, eps) => {
                let diagram = match self.dets.get(&diagram) {
                    Some(det) => det.clone(),
                    None => Diagram::graph(self.dag(&diagram)?),
                };
                self.d.add_premise(&name, diagram, &eps)?;
            }
            Directive::Budget(eps, g) => {
                let g = self.dag(&g)?;
                self.d.declare_budget(&eps, g)?;
            }
            Directive::Frankenstein(inputs, sel, out) => {
                let refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
                self.d.frankenstein(&refs, &sel, &out)?;
            }
            Directive::Transfer(g, eps, out) => {
                let g = self.dag(&g)?;
                self.d.factorization_transfer(&g, &eps, &out)?;
            }
            Directive::Bookkeeping(j, g, out) => {
                let g = self.dag(&g)?;
                self.d.bookkeeping(&j, &g, &out)?;
            }
            Directive::Dangly(j, det, at, copy, out) => {
                self.d.dangly_bit(&j, &det, &at, copy.as_deref(), &out)?;
            }
            Directive::Conclude(j, src, tgt) => {
                if !self.d.judgment(&j)?.diagram.asserts_determinism(&src, &tgt) {
                    return Err(Error::NotEstablished(format!(
                        "`{j}` does not assert {tgt} <- {src} -> {tgt}"
                    )));
                }
                self.conclusions.push((j, src, tgt));
            }
        }
        Ok(())
    }
}

/// Parses and replays a script; any failed precondition aborts with the
/// offending line number.
pub fn run_script(text: &str) -> Result<ScriptRun> {
    let mut r = Replay::default();
    for (line, dir) in parse_directives(text)? {
        r.apply(dir).map_err(|e| e.at_line(line))?;
    }
    Ok(ScriptRun {
        derivation: r.d,
        dags: r.dags,
        conclusions: r.conclusions,
    })
}

/// Result of replaying a derivation of the two-observable stability bound.
#[derive(Debug, Clone)]
pub struct RedundBoundReplay {
    pub run: ScriptRun,
    pub observables: [String; 2],
    pub mediator: String,
    pub redund: String,
    pub mediation_eps: String,
    /// Redundancy epsilons, in the order of `observables`.
    pub redundancy_eps: [String; 2],
    pub conclusion: DiagramJudgment,
    /// The conclusion's budget with both redundancy epsilons renamed `red`
    /// and the mediation epsilon renamed `med`.
    pub bound: EpsExpr,
}

/// Replays `text` and checks that it proves: from a star-shaped mediation
/// premise and two redundancy premises, the redund is determined by the
/// mediator with budget `med + 2 red`.
pub fn replay_redund_bound(text: &str) -> Result<RedundBoundReplay> {
    let run = run_script(text)?;
    let d = &run.derivation;
    let mut star = None;
    let mut reds = Vec::new();
    for (_, j) in d.premises() {
        let eps = j
            .epsilon
            .names()
            .next()
            .expect("premise budgets are single names")
            .to_string();
        match &j.diagram {
            Diagram::Graph { dag, copies } if copies.is_empty() => {
                if star.replace((dag.clone(), eps)).is_some() {
                    return Err(Error::NotEstablished("more than one graph premise".into()));
                }
            }
            Diagram::Determinism { source, target } => {
                reds.push((source.clone(), target.clone(), eps))
            }
            Diagram::Graph { .. } => {
                return Err(Error::NotEstablished(
                    "premise graph declares copies".into(),
                ))
            }
        }
    }
    if !d.budgets().is_empty() {
        return Err(Error::NotEstablished(
            "extra transfer budgets declared".into(),
        ));
    }
    let (star, med_eps) =
        star.ok_or_else(|| Error::NotEstablished("no mediation premise".into()))?;
    let roots: Vec<&String> = star
        .nodes()
        .iter()
        .filter(|n| star.parents(n).is_ok_and(|p| p.is_empty()))
        .collect();
    if star.len() != 3 || roots.len() != 1 || star.num_edges() != 2 {
        return Err(Error::NotEstablished(format!(
            "mediation premise {star} is not a two-leaf star"
        )));
    }
    let mediator = roots[0].clone();
    let leaves: Vec<String> = star
        .nodes()
        .iter()
        .filter(|n| **n != mediator)
        .cloned()
        .collect();
    let [(s1, r1, e1), (s2, r2, e2)] = <[_; 2]>::try_from(reds)
        .map_err(|_| Error::NotEstablished("expected exactly two redundancy premises".into()))?;
    if r1 != r2 || s1 == s2 || !leaves.contains(&s1) || !leaves.contains(&s2) {
        return Err(Error::NotEstablished(
            "redundancy premises must determine one variable from each observable".into(),
        ));
    }
    let redund = r1;
    let conclusion = d
        .conclusion()
        .ok_or_else(|| Error::NotEstablished("no steps".into()))?
        .clone();
    if !conclusion.diagram.asserts_determinism(&mediator, &redund) {
        return Err(Error::NotEstablished(format!(
            "final judgment does not assert {redund} <- {mediator} -> {redund}"
        )));
    }
    let bound = conclusion
        .epsilon
        .rename(&[(&med_eps, "med"), (&e1, "red"), (&e2, "red")]);
    let expected = theorem_bound_expr("med", "red");
    if bound != expected {
        return Err(Error::NotEstablished(format!(
            "final budget {bound} differs from {expected}"
        )));
    }
    let ((o1, ea), (o2, eb)) = if s1 == leaves[0] {
        ((s1, e1), (s2, e2))
    } else {
        ((s2, e2), (s1, e1))
    };
    Ok(RedundBoundReplay {
        observables: [o1, o2],
        mediator,
        redund,
        mediation_eps: med_eps,
        redundancy_eps: [ea, eb],
        conclusion,
        bound,
        run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn redund_bound_script_replays() {
        let r = replay_redund_bound(REDUND_BOUND_SCRIPT).unwrap();
        assert_eq!(r.mediator, "L");
        assert_eq!(r.redund, "Lp");
        assert_eq!(r.bound, theorem_bound_expr("med", "red"));
        assert_eq!(r.run.derivation.steps().len(), 4);
        assert_eq!(r.run.conclusions.len(), 1);
    }

    #[test]
    fn broken_step_reports_its_line() {
        let bad =
            REDUND_BOUND_SCRIPT.replace("step dangly_bit med r2 X2", "step dangly_bit med r2 X1");
        let err = run_script(&bad).unwrap_err();
        let line = bad
            .lines()
            .position(|l| l.starts_with("step dangly_bit med r2 X1"))
            .unwrap()
            + 1;
        match &err {
            Error::AtLine { line: l, source } => {
                assert_eq!(*l, line);
                assert!(matches!(**source, Error::RuleInapplicable(_)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(
            parse_script("dag g A,B\nfrobnicate\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_script("step bookkeeping a g\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_script("dag g A,B A=>B\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(parse_script("# only a comment\n\n").is_ok());
    }

    #[test]
    fn dropping_a_step_fails_the_claim() {
        let text: String = REDUND_BOUND_SCRIPT
            .lines()
            .filter(|l| !l.starts_with("step bookkeeping s3") && !l.starts_with("conclude"))
            .collect::<Vec<_>>()
            .join("\n");
        assert!(matches!(
            replay_redund_bound(&text),
            Err(Error::NotEstablished(_))
        ));
    }
}
