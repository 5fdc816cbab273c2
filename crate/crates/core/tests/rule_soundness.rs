use std::collections::BTreeMap;

use natlat::dist::vars;
use natlat::random::{instance_rng, random_dag, random_factored, random_joint};
use natlat::rules::{validate_rule, RuleInstance, SamplerConfig, ValidationReport};
use natlat::{factorization_kl, graph_implies, kl_divergence, Dag, Derivation, Diagram, EpsExpr};
use proptest::prelude::*;
use rand::Rng;

fn cfg(seed: u64, samples: usize) -> SamplerConfig {
    SamplerConfig {
        seed,
        samples,
        ..SamplerConfig::default()
    }
}

fn check(inst: &RuleInstance, samples: usize) -> ValidationReport {
    let r = validate_rule(inst, &cfg(17, samples)).unwrap();
    assert_eq!(r.samples, samples);
    assert!(r.passed(), "{:?}", r.violations.first());
    r
}

fn last_instance(d: &Derivation) -> RuleInstance {
    d.steps().last().unwrap().instance.clone()
}

fn dag(nodes: &[&str], edges: &[(&str, &str)]) -> Dag {
    Dag::new(nodes, edges).unwrap()
}

#[test]
fn frankenstein_is_sound() {
    let abc = ["A", "B", "C"];
    let chain = dag(&abc, &[("A", "B"), ("B", "C")]);
    let star = dag(&abc, &[("A", "B"), ("A", "C")]);
    let mut d = Derivation::new();
    d.add_premise("g1", Diagram::graph(chain), "e1").unwrap();
    d.add_premise("g2", Diagram::graph(star), "e2").unwrap();
    let sel = BTreeMap::from([("C".to_string(), 1)]);
    let j = d.frankenstein(&["g1", "g2"], &sel, "f").unwrap();
    assert_eq!(j.epsilon, EpsExpr::var("e1") + EpsExpr::var("e2"));
    check(&last_instance(&d), 500);

    // Λ → X1, Λ → X2 spliced with X1 → X2: X2 keeps its star parents.
    let nodes = ["L", "X1", "X2"];
    let mut d = Derivation::new();
    d.add_premise(
        "m",
        Diagram::graph(dag(&nodes, &[("L", "X1"), ("L", "X2")])),
        "e1",
    )
    .unwrap();
    d.add_premise(
        "c",
        Diagram::graph(dag(&nodes, &[("X1", "X2"), ("L", "X1")])),
        "e2",
    )
    .unwrap();
    let sel = BTreeMap::from([("X2".to_string(), 0), ("X1".to_string(), 1)]);
    d.frankenstein(&["m", "c"], &sel, "f").unwrap();
    check(&last_instance(&d), 300);

    // Idempotent structure: the same graph twice.
    let mut d = Derivation::new();
    d.add_premise("g", Diagram::graph(dag(&abc, &[("A", "C")])), "e")
        .unwrap();
    d.frankenstein(&["g", "g"], &BTreeMap::new(), "f").unwrap();
    check(&last_instance(&d), 200);
}

#[test]
fn frankenstein_rejects_conflicting_orders() {
    let mut d = Derivation::new();
    d.add_premise("a", Diagram::graph(dag(&["X", "Y"], &[("X", "Y")])), "e1")
        .unwrap();
    d.add_premise("b", Diagram::graph(dag(&["X", "Y"], &[("Y", "X")])), "e2")
        .unwrap();
    let err = d
        .frankenstein(&["a", "b"], &BTreeMap::new(), "f")
        .unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains('X') && msg.contains('Y'), "{msg}");
}

#[test]
fn transfer_is_sound() {
    let nodes = ["A", "B", "C"];
    let chain = dag(&nodes, &[("A", "B"), ("B", "C")]);
    let mut d = Derivation::new();
    d.declare_budget("q", chain.clone()).unwrap();
    let j = d.factorization_transfer(&chain, "q", "t").unwrap();
    assert_eq!(j.epsilon, EpsExpr::var("q"));
    check(&last_instance(&d), 200);

    // A budget for an edgeless reference transfers to any graph.
    let mut d = Derivation::new();
    d.declare_budget("q", Dag::edgeless(&nodes).unwrap())
        .unwrap();
    d.factorization_transfer(&dag(&nodes, &[("C", "A")]), "q", "t")
        .unwrap();
    check(&last_instance(&d), 200);

    let mut d = Derivation::new();
    d.declare_budget("q", Dag::complete(&nodes).unwrap())
        .unwrap();
    assert!(d.factorization_transfer(&chain, "q", "t").is_err());
    assert!(d.factorization_transfer(&chain, "nope", "t").is_err());
}

#[test]
fn transfer_numeric_sweep() {
    let chain = dag(&["A", "B", "C"], &[("A", "B"), ("B", "C")]);
    for i in 0..200 {
        let mut rng = instance_rng(41, i);
        let q = random_factored(&mut rng, &chain, &[2, 3, 2]).unwrap();
        let noise = random_joint(&mut rng, q.variables().to_vec()).unwrap();
        let p = q.mix(&noise, rng.random_range(0.5..1.0)).unwrap();
        let delta = kl_divergence(&p, &q).unwrap();
        assert!(factorization_kl(&p, &chain).unwrap() <= delta + 1e-9, "{i}");
    }
}

#[test]
fn bookkeeping_is_sound() {
    let nodes = ["X", "Y", "Z"];
    let chain = dag(&nodes, &[("X", "Y"), ("Y", "Z")]);
    let mut d = Derivation::new();
    d.add_premise("c", Diagram::graph(chain.clone()), "e")
        .unwrap();
    let more = dag(&nodes, &[("X", "Y"), ("Y", "Z"), ("X", "Z")]);
    d.bookkeeping("c", &more, "b1").unwrap();
    let r = check(&last_instance(&d), 500);
    assert!(r.min_slack >= -1e-9);

    // Reversing a chain keeps the same independences.
    let reversed = dag(&nodes, &[("Z", "Y"), ("Y", "X")]);
    d.bookkeeping("c", &reversed, "b2").unwrap();
    check(&last_instance(&d), 200);

    let err = d.bookkeeping("b1", &chain, "b3").unwrap_err();
    assert!(err.to_string().contains("_||_"), "{err}");
}

#[test]
fn bookkeeping_numeric_sweep() {
    let names = ["A", "B", "C", "D"];
    for i in 0..500 {
        let mut rng = instance_rng(43, i);
        let g1 = random_dag(&mut rng, &names, 0.3).unwrap();
        let order = g1.topological_order();
        // Add every forward edge with probability 1/2.
        let mut edges: Vec<(String, String)> = g1
            .edges()
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        for (x, u) in order.iter().enumerate() {
            for v in &order[x + 1..] {
                if !g1.has_edge(u, v) && rng.random_bool(0.5) {
                    edges.push((u.to_string(), v.to_string()));
                }
            }
        }
        let g2 = Dag::new(&names, &edges).unwrap();
        let p = random_joint(&mut rng, vars(&[("A", 2), ("B", 3), ("C", 2), ("D", 2)])).unwrap();
        assert!(factorization_kl(&p, &g2).unwrap() <= factorization_kl(&p, &g1).unwrap() + 1e-12);
    }
}

#[test]
fn dangly_bit_is_sound() {
    let star = Dag::star(&["L"], &["X1", "X2"]).unwrap();
    let mut d = Derivation::new();
    d.add_premise("med", Diagram::graph(star), "e_med").unwrap();
    d.add_premise("det", Diagram::determinism("X2", "Lp"), "e_red")
        .unwrap();
    d.add_premise("det1", Diagram::determinism("X1", "Lp"), "e_red1")
        .unwrap();
    let j = d.dangly_bit("med", "det", "X2", None, "s1").unwrap();
    assert_eq!(j.epsilon, EpsExpr::var("e_med") + EpsExpr::var("e_red"));
    check(&last_instance(&d), 300);

    // Second copy of an existing node.
    d.dangly_bit("s1", "det1", "X1", None, "s2").unwrap();
    check(&last_instance(&d), 200);

    assert!(d.dangly_bit("med", "det", "X1", None, "bad").is_err());
}

#[test]
fn validator_catches_unsound_steps() {
    // Dropping the mediator's edges is not a valid bookkeeping step.
    let star = Dag::star(&["L"], &["X1", "X2"]).unwrap();
    let bogus = RuleInstance::Bookkeeping {
        input: Diagram::graph(star.clone()),
        output: Diagram::graph(Dag::edgeless(&["L", "X1", "X2"]).unwrap()),
    };
    let r = validate_rule(&bogus, &cfg(5, 200)).unwrap();
    assert!(!r.passed());

    // Hanging the determined variable off the wrong parent.
    let bogus = RuleInstance::DanglyBit {
        input: Diagram::graph(star.clone()),
        determinism: Diagram::determinism("X2", "Lp"),
        output: Diagram::graph(star.with_node("Lp", &["X1"]).unwrap()),
    };
    let r = validate_rule(&bogus, &cfg(5, 200)).unwrap();
    assert!(!r.passed());
}

#[test]
fn determinism_reduces_to_conditional_entropy() {
    let det = Diagram::determinism("X", "Y");
    let expanded = det.expanded().unwrap();
    assert!(expanded.asserts_determinism("X", "Y"));
    for i in 0..100 {
        let mut rng = instance_rng(23, i);
        let (cx, cy) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let mut p = random_joint(&mut rng, vars(&[("X", cx), ("Y", cy)])).unwrap();
        if i % 2 == 0 {
            // Nearly deterministic instances too.
            let f: Vec<usize> = (0..cx).map(|_| rng.random_range(0..cy)).collect();
            let exact = p
                .marginalize(&["X"])
                .unwrap()
                .with_derived("Y", cy, |a| f[a[0]])
                .unwrap();
            p = exact.mix(&p, rng.random_range(0.9..1.0)).unwrap();
        }
        let kl = expanded.error_on(&p).unwrap();
        let h = p.conditional_entropy(&["Y"], &["X"]).unwrap();
        assert!((kl - h).abs() < 1e-12, "{i}: {kl} vs {h}");
        assert_eq!(det.error_on(&p).unwrap(), h);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bookkeeping_chains_compose(seed in any::<u64>()) {
        let mut rng = instance_rng(seed, 0);
        let names = ["A", "B", "C", "D"];
        let gs: Vec<Dag> = (0..3)
            .map(|_| random_dag(&mut rng, &names, 0.5).unwrap())
            .collect();
        let (g1, g2, g3) = (&gs[0], &gs[1], &gs[2]);
        if graph_implies(g1, g2).unwrap() && graph_implies(g2, g3).unwrap() {
            prop_assert!(graph_implies(g1, g3).unwrap());
            let mut d = Derivation::new();
            d.add_premise("p", Diagram::graph(g1.clone()), "e").unwrap();
            d.bookkeeping("p", g2, "q").unwrap();
            d.bookkeeping("q", g3, "r").unwrap();
            prop_assert_eq!(&d.conclusion().unwrap().epsilon, &EpsExpr::var("e"));
        }
    }

    #[test]
    fn frankenstein_of_copies_scales_epsilon(seed in any::<u64>(), m in 1usize..5) {
        let mut rng = instance_rng(seed, 1);
        let g = random_dag(&mut rng, &["A", "B", "C"], 0.5).unwrap();
        let mut d = Derivation::new();
        d.add_premise("g", Diagram::graph(g.clone()), "e").unwrap();
        let inputs = vec!["g"; m];
        let j = d.frankenstein(&inputs, &BTreeMap::new(), "f").unwrap();
        prop_assert_eq!(&j.diagram, &Diagram::graph(g));
        prop_assert_eq!(&j.epsilon, &EpsExpr::var("e").scaled(m as f64).unwrap());
    }
}
