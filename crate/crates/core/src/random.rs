//! Seeded generators for random distributions, graphs, and theorem instances.
//!
//! Every generator takes an explicit RNG. [`instance_rng`] derives the RNG
//! for instance `i` of a sweep from `(seed, i)` alone, so a sweep produces
//! the same instances whether it runs serially or split across workers.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::dist::{JointDistribution, VarSpec};
use crate::error::{Error, Result};
use crate::graph::Dag;

pub type InstanceRng = ChaCha8Rng;

/// RNG for instance `index` of the sweep seeded by `seed`.
pub fn instance_rng(seed: u64, index: u64) -> InstanceRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A draw from the flat Dirichlet over `k` categories.
pub fn flat_dirichlet<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Uniformly random joint over `vars`: flat Dirichlet on the full alphabet.
pub fn random_joint<R: Rng + ?Sized>(rng: &mut R, vars: Vec<VarSpec>) -> Result<JointDistribution> {
    let cells: usize = vars.iter().map(|v| v.cardinality).product();
    JointDistribution::from_weights(vars, flat_dirichlet(rng, cells))
}

/// One conditional row `P[child | parent config]` per parent configuration.
pub fn random_conditional<R: Rng + ?Sized>(
    rng: &mut R,
    parent_configs: usize,
    card: usize,
) -> Vec<Vec<f64>> {
    (0..parent_configs)
        .map(|_| flat_dirichlet(rng, card))
        .collect()
}

pub fn random_function<R: Rng + ?Sized>(rng: &mut R, domain: usize, range: usize) -> Vec<usize> {
    (0..domain).map(|_| rng.random_range(0..range)).collect()
}

/// A mixing weight concentrated near 1.
pub fn near_one<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    1.0 - 0.2 * u * u * u
}

/// Random DAG: nodes shuffled into a hidden order, each forward pair joined
/// with probability `edge_prob`.
pub fn random_dag<R: Rng + ?Sized, S: AsRef<str>>(
    rng: &mut R,
    names: &[S],
    edge_prob: f64,
) -> Result<Dag> {
    let mut order: Vec<&str> = names.iter().map(AsRef::as_ref).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for j in 0..order.len() {
        for i in 0..j {
            if rng.random_bool(edge_prob) {
                edges.push((order[i], order[j]));
            }
        }
    }
    let nodes: Vec<&str> = names.iter().map(AsRef::as_ref).collect();
    Dag::new(&nodes, &edges)
}

/// A random distribution that exactly factors over `g`, built from random
/// conditionals along the graph.
pub fn random_factored<R: Rng + ?Sized>(
    rng: &mut R,
    g: &Dag,
    cards: &[usize],
) -> Result<JointDistribution> {
    if cards.len() != g.len() {
        return Err(Error::LengthMismatch {
            expected: g.len(),
            found: cards.len(),
        });
    }
    let tables: Vec<Vec<Vec<f64>>> = (0..g.len())
        .map(|i| {
            let configs: usize = g.parent_indices(i).iter().map(|&p| cards[p]).product();
            random_conditional(rng, configs, cards[i])
        })
        .collect();
    let vars: Vec<VarSpec> = g
        .nodes()
        .iter()
        .zip(cards)
        .map(|(n, &c)| VarSpec::new(n.clone(), c))
        .collect();
    JointDistribution::from_fn(vars, |a| {
        (0..a.len())
            .map(|i| {
                let pc = g
                    .parent_indices(i)
                    .iter()
                    .fold(0, |acc, &p| acc * cards[p] + a[p]);
                tables[i][pc][a[i]]
            })
            .product()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MediatorMode {
    /// Observables drawn independently given the latent.
    Exact,
    /// Exact construction mixed with a raw joint, weight near 1.
    Near,
    /// Flat Dirichlet over the whole alphabet.
    Raw,
    /// Observables nearly copies of each other, latent a noisy function of them.
    Coupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RedundMode {
    /// A function of the first observable.
    FunctionOfFirst,
    /// A function of the second observable.
    FunctionOfSecond,
    /// A function of the first observable, corrupted with small probability.
    NearFunction,
    /// A function of the mediator.
    FunctionOfMediator,
    /// An arbitrary conditional given everything else.
    Raw,
}

/// A random joint over observables `X1, X2`, a candidate mediator `L` and a
/// candidate redund `Lp`.
#[derive(Debug, Clone)]
pub struct TheoremInstance {
    pub joint: JointDistribution,
    pub observables: [String; 2],
    pub mediator: String,
    pub redund: String,
    pub mediator_mode: MediatorMode,
    pub redund_mode: RedundMode,
}

pub fn theorem_instance<R: Rng + ?Sized>(
    rng: &mut R,
    max_cardinality: usize,
) -> Result<TheoremInstance> {
    if max_cardinality < 2 {
        return Err(Error::InvalidConfig("max cardinality must be >= 2".into()));
    }
    let c1 = rng.random_range(2..=max_cardinality);
    let c2 = rng.random_range(2..=max_cardinality);
    let cl = rng.random_range(1..=max_cardinality);
    let cr = rng.random_range(1..=max_cardinality);
    let mediator_mode = match rng.random_range(0..4) {
        0 => MediatorMode::Exact,
        1 => MediatorMode::Near,
        2 => MediatorMode::Raw,
        _ => MediatorMode::Coupled,
    };
    let redund_mode = match rng.random_range(0..5) {
        0 => RedundMode::FunctionOfFirst,
        1 => RedundMode::FunctionOfSecond,
        2 => RedundMode::NearFunction,
        3 => RedundMode::FunctionOfMediator,
        _ => RedundMode::Raw,
    };

    let base_vars = vec![
        VarSpec::new("X1", c1),
        VarSpec::new("X2", c2),
        VarSpec::new("L", cl),
    ];
    let exact = |rng: &mut R| -> Result<JointDistribution> {
        let pl = flat_dirichlet(rng, cl);
        let px1 = random_conditional(rng, cl, c1);
        let px2 = random_conditional(rng, cl, c2);
        JointDistribution::from_fn(base_vars.clone(), |a| {
            pl[a[2]] * px1[a[2]][a[0]] * px2[a[2]][a[1]]
        })
    };
    let base = match mediator_mode {
        MediatorMode::Exact => exact(rng)?,
        MediatorMode::Raw => random_joint(rng, base_vars.clone())?,
        MediatorMode::Near => {
            let e = exact(rng)?;
            let r = random_joint(rng, base_vars.clone())?;
            e.mix(&r, near_one(rng))?
        }
        MediatorMode::Coupled => {
            let px1 = flat_dirichlet(rng, c1);
            let copy = random_function(rng, c1, c2);
            let lab = random_function(rng, c1, cl);
            let keep = near_one(rng);
            let keep_l = near_one(rng);
            JointDistribution::from_fn(base_vars.clone(), |a| {
                let x2 = if a[1] == copy[a[0]] { keep } else { 0.0 } + (1.0 - keep) / c2 as f64;
                let l = if a[2] == lab[a[0]] { keep_l } else { 0.0 } + (1.0 - keep_l) / cl as f64;
                px1[a[0]] * x2 * l
            })?
        }
    };

    let cond: Vec<Vec<f64>> = match redund_mode {
        RedundMode::FunctionOfFirst
        | RedundMode::FunctionOfSecond
        | RedundMode::FunctionOfMediator => {
            let (src, dom) = match redund_mode {
                RedundMode::FunctionOfFirst => (0, c1),
                RedundMode::FunctionOfSecond => (1, c2),
                _ => (2, cl),
            };
            let f = random_function(rng, dom, cr);
            one_hot_rows(base.num_cells(), cr, |lin| f[digit(&base, lin, src)])
        }
        RedundMode::NearFunction => {
            let f = random_function(rng, c1, cr);
            let keep = near_one(rng);
            let noise = random_conditional(rng, base.num_cells(), cr);
            (0..base.num_cells())
                .map(|lin| {
                    let y = f[digit(&base, lin, 0)];
                    (0..cr)
                        .map(|v| keep * f64::from(u8::from(v == y)) + (1.0 - keep) * noise[lin][v])
                        .collect()
                })
                .collect()
        }
        RedundMode::Raw => random_conditional(rng, base.num_cells(), cr),
    };
    let mut vars = base.variables().to_vec();
    vars.push(VarSpec::new("Lp", cr));
    let joint = JointDistribution::from_fn(vars, |a| {
        let lin = base.encode(&a[..3]);
        base.prob_linear(lin) * cond[lin][a[3]]
    })?;
    Ok(TheoremInstance {
        joint,
        observables: ["X1".into(), "X2".into()],
        mediator: "L".into(),
        redund: "Lp".into(),
        mediator_mode,
        redund_mode,
    })
}

fn digit(d: &JointDistribution, lin: usize, var: usize) -> usize {
    let mut a = vec![0; d.num_vars()];
    d.decode(lin, &mut a);
    a[var]
}

fn one_hot_rows(rows: usize, card: usize, pick: impl Fn(usize) -> usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|r| {
            let mut row = vec![0.0; card];
            row[pick(r)] = 1.0;
            row
        })
        .collect()
}
