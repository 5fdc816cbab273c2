use natlat::dist::vars;
use natlat::graph::{d_separated_moral, implication_witness, order_conflict};
use natlat::random::{instance_rng, random_dag, random_factored, random_joint};
use natlat::{
    common_topological_order, d_separated, factorization_error, factorization_kl,
    factorization_projection, graph_implies, Dag, JointDistribution,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

const SIX: [&str; 6] = ["A", "B", "C", "D", "E", "F"];

#[test]
fn bayes_ball_agrees_with_moralization() {
    let mut rng = instance_rng(2024, 0);
    let mut separated = 0;
    for _ in 0..1000 {
        let density = rng.random_range(0.1..0.6);
        let g = random_dag(&mut rng, &SIX, density).unwrap();
        let mut nodes = SIX.to_vec();
        nodes.shuffle(&mut rng);
        let na = rng.random_range(1..=2);
        let nb = rng.random_range(1..=2);
        let nc = rng.random_range(0..=2);
        let (a, rest) = nodes.split_at(na);
        let (b, rest) = rest.split_at(nb);
        let c = &rest[..nc];
        let x = d_separated(&g, a, b, c).unwrap();
        let y = d_separated_moral(&g, a, b, c).unwrap();
        assert_eq!(x, y, "{g}: {a:?} vs {b:?} given {c:?}");
        separated += usize::from(x);
    }
    // Both verdicts actually occur.
    assert!(separated > 50 && separated < 950, "{separated}");
}

#[test]
fn d_separation_examples() {
    let chain = Dag::new(&["X", "Y", "Z"], &[("X", "Y"), ("Y", "Z")]).unwrap();
    assert!(d_separated(&chain, &["X"], &["Z"], &["Y"]).unwrap());
    assert!(!d_separated(&chain, &["X"], &["Z"], &[]).unwrap());
    let collider = Dag::new(&["X", "Y", "Z"], &[("X", "Y"), ("Z", "Y")]).unwrap();
    assert!(d_separated(&collider, &["X"], &["Z"], &[]).unwrap());
    assert!(!d_separated(&collider, &["X"], &["Z"], &["Y"]).unwrap());
    let star = Dag::star(&["L"], &["X1", "X2"]).unwrap();
    assert!(d_separated(&star, &["X1"], &["X2"], &["L"]).unwrap());
    assert!(d_separated(&star, &["X1"], &["Q"], &[]).is_err());
}

/// `Π_i P[x_i | x_pa(i)]` computed cell by cell from marginals.
fn product_oracle(p: &JointDistribution, g: &Dag, a: &[usize]) -> f64 {
    let names: Vec<&str> = p.names().collect();
    let mut q = 1.0;
    for v in &names {
        let pa = g.parents(v).unwrap();
        let mut fam: Vec<&str> = pa.clone();
        fam.push(v);
        let pick = |set: &[&str]| -> Vec<usize> {
            set.iter()
                .map(|n| a[names.iter().position(|m| m == n).unwrap()])
                .collect()
        };
        let pf = p.marginalize(&fam).unwrap();
        let num = pf.reorder(&fam).unwrap().prob(&pick(&fam));
        let den = if pa.is_empty() {
            1.0
        } else {
            p.marginalize(&pa)
                .unwrap()
                .reorder(&pa)
                .unwrap()
                .prob(&pick(&pa))
        };
        q *= if den > 0.0 {
            num / den
        } else {
            1.0 / p.cardinality(v).unwrap() as f64
        };
    }
    q
}

#[test]
fn projection_matches_direct_product() {
    let mut rng = instance_rng(7, 0);
    let chain = Dag::new(&["X1", "X2", "X3"], &[("X1", "X2"), ("X2", "X3")]).unwrap();
    for _ in 0..20 {
        let p = random_joint(&mut rng, vars(&[("X1", 2), ("X2", 2), ("X3", 2)])).unwrap();
        let q = factorization_projection(&p, &chain).unwrap();
        for (a, _) in q.cells() {
            assert!((q.prob(&a) - product_oracle(&p, &chain, &a)).abs() < 1e-12);
        }
        let complete = Dag::complete(&["X1", "X2", "X3"]).unwrap();
        assert!(
            factorization_projection(&p, &complete)
                .unwrap()
                .max_abs_diff(&p)
                .unwrap()
                < 1e-12
        );
        let err = factorization_error(&p, &chain).unwrap();
        let direct = natlat::kl_divergence(&p, &q).unwrap();
        assert!((err.epsilon_bits - direct).abs() < 1e-12);
        // Projection is a fixed point.
        assert!(factorization_kl(&q, &chain).unwrap() < 1e-12);
    }
}

#[test]
fn factorization_examples() {
    let copy =
        JointDistribution::new(vars(&[("X1", 2), ("X2", 2)]), vec![0.5, 0.0, 0.0, 0.5]).unwrap();
    let edgeless = Dag::edgeless(&["X1", "X2"]).unwrap();
    assert!((factorization_kl(&copy, &edgeless).unwrap() - 1.0).abs() < 1e-15);
    let ind = JointDistribution::from_fn(vars(&[("A", 2), ("B", 3), ("C", 2)]), |a| {
        [0.3, 0.7][a[0]] * [0.2, 0.3, 0.5][a[1]] * [0.9, 0.1][a[2]]
    })
    .unwrap();
    let mut rng = instance_rng(3, 0);
    for _ in 0..10 {
        let g = random_dag(&mut rng, &["A", "B", "C"], 0.5).unwrap();
        assert!(factorization_kl(&ind, &g).unwrap() < 1e-12);
    }
    let wrong = Dag::edgeless(&["A", "B"]).unwrap();
    assert!(factorization_kl(&ind, &wrong).is_err());
}

#[test]
fn implication_examples() {
    let nodes = ["X", "Y", "Z"];
    let chain = Dag::new(&nodes, &[("X", "Y"), ("Y", "Z")]).unwrap();
    let plus = Dag::new(&nodes, &[("X", "Y"), ("Y", "Z"), ("X", "Z")]).unwrap();
    assert!(graph_implies(&chain, &plus).unwrap());
    let w = implication_witness(&plus, &chain).unwrap().unwrap();
    assert_eq!(w.node, "Z");
    assert_eq!(w.given, vec!["Y"]);
    let edgeless = Dag::edgeless(&nodes).unwrap();
    let complete = Dag::complete(&nodes).unwrap();
    assert!(graph_implies(&edgeless, &chain).unwrap());
    assert!(graph_implies(&edgeless, &complete).unwrap());
    assert!(!graph_implies(&complete, &edgeless).unwrap());
    assert!(graph_implies(&chain, &Dag::edgeless(&["X", "Y"]).unwrap()).is_err());
}

#[test]
fn common_orders() {
    let xy = Dag::new(&["X", "Y", "Z"], &[("X", "Y")]).unwrap();
    let yx = Dag::new(&["X", "Y", "Z"], &[("Y", "X")]).unwrap();
    let xz = Dag::new(&["X", "Y", "Z"], &[("X", "Z")]).unwrap();
    assert_eq!(common_topological_order(&[&xy, &yx]).unwrap(), None);
    let (u, v) = order_conflict(&[&xy, &yx]).unwrap().unwrap();
    assert!([u.as_str(), v.as_str()].contains(&"X") && [u.as_str(), v.as_str()].contains(&"Y"));
    assert_eq!(
        common_topological_order(&[&xy, &xz]).unwrap(),
        Some(vec!["X".to_string(), "Y".into(), "Z".into()])
    );

    let mut rng = instance_rng(11, 0);
    let names = ["A", "B", "C", "D", "E"];
    for _ in 0..200 {
        let gs: Vec<Dag> = (0..3)
            .map(|_| random_dag(&mut rng, &names, 0.3).unwrap())
            .collect();
        let refs: Vec<&Dag> = gs.iter().collect();
        match common_topological_order(&refs).unwrap() {
            Some(order) => {
                let pos = |n: &str| order.iter().position(|m| m == n).unwrap();
                for g in &gs {
                    for (p, c) in g.edges() {
                        assert!(pos(p) < pos(c));
                    }
                }
                assert!(order_conflict(&refs).unwrap().is_none());
            }
            None => {
                let (u, v) = order_conflict(&refs).unwrap().unwrap();
                assert!(gs.iter().any(|g| g.has_edge(&u, &v)));
            }
        }
    }
}

fn permute_values(p: &JointDistribution, var: usize, perm: &[usize]) -> JointDistribution {
    JointDistribution::from_cells(
        p.variables().to_vec(),
        p.cells().map(|(mut a, q)| {
            a[var] = perm[a[var]];
            (a, q)
        }),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn complete_graph_is_always_satisfied(seed in any::<u64>()) {
        let mut rng = instance_rng(seed, 0);
        let p = random_joint(&mut rng, vars(&[("A", 3), ("B", 2), ("C", 2), ("D", 2)])).unwrap();
        let mut order = ["A", "B", "C", "D"];
        order.shuffle(&mut rng);
        let g = Dag::complete(&order).unwrap();
        let g = Dag::new(&["A", "B", "C", "D"], &g.edges()).unwrap();
        prop_assert!(factorization_kl(&p, &g).unwrap().abs() < 1e-9);
    }

    #[test]
    fn error_is_invariant_under_value_relabeling(seed in any::<u64>()) {
        let mut rng = instance_rng(seed, 1);
        let p = random_joint(&mut rng, vars(&[("A", 3), ("B", 3), ("C", 2)])).unwrap();
        let g = random_dag(&mut rng, &["A", "B", "C"], 0.4).unwrap();
        let mut perm: Vec<usize> = (0..3).collect();
        perm.shuffle(&mut rng);
        let var = rng.random_range(0..2);
        let q = permute_values(&p, var, &perm);
        let (e1, e2) = (factorization_kl(&p, &g).unwrap(), factorization_kl(&q, &g).unwrap());
        prop_assert!((e1 - e2).abs() < 1e-12);
    }

    #[test]
    fn exact_factorization_carries_over_implications(seed in any::<u64>()) {
        let mut rng = instance_rng(seed, 2);
        let names = ["A", "B", "C", "D"];
        let g1 = random_dag(&mut rng, &names, 0.4).unwrap();
        let g2 = random_dag(&mut rng, &names, 0.6).unwrap();
        let cards: Vec<usize> = (0..4).map(|_| rng.random_range(2..=3)).collect();
        let p = random_factored(&mut rng, &g1, &cards).unwrap();
        prop_assert!(factorization_kl(&p, &g1).unwrap() < 1e-12);
        if graph_implies(&g1, &g2).unwrap() {
            prop_assert!(factorization_kl(&p, &g2).unwrap() < 1e-9);
        }
    }
}
