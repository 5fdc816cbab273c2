//! Exact natural latents between two observables, candidate evaluation, and
//! chunking many observables into two.
//!
//! Two observables have an exact natural latent iff they are independent
//! given the value of their deterministic constraint: the finest labeling
//! `f_1(X_1) = f_2(X_2)` that holds on the support. That labeling is the set
//! of connected components of the bipartite support graph.

use crate::dist::JointDistribution;
use crate::error::{Error, Result};
use crate::naturality::{naturality_report, AgentModel, NaturalityReport};

/// Cells at or below this probability are treated as outside the support.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

/// A latent defined by one labeling per observable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicLatent {
    observables: Vec<String>,
    labels: Vec<Vec<usize>>,
    num_labels: usize,
}

impl DeterministicLatent {
    /// `labels[i][v]` is the label of value `v` of observable `i`.
    pub fn new(observables: Vec<String>, labels: Vec<Vec<usize>>) -> Result<Self> {
        if observables.len() != labels.len() || observables.is_empty() {
            return Err(Error::InvalidLabelMap(format!(
                "{} observables but {} label maps",
                observables.len(),
                labels.len()
            )));
        }
        let num_labels = labels.iter().flatten().max().map_or(1, |m| m + 1);
        Ok(Self {
            observables,
            labels,
            num_labels,
        })
    }

    pub fn observables(&self) -> &[String] {
        &self.observables
    }

    pub fn labels(&self, observable: usize) -> &[usize] {
        &self.labels[observable]
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// Checks that every observable of `p` has a map covering its alphabet.
    fn check_total(&self, p: &JointDistribution) -> Result<()> {
        if self.observables.len() != p.num_vars() {
            return Err(Error::InvalidLabelMap(format!(
                "maps cover {} observables, distribution has {}",
                self.observables.len(),
                p.num_vars()
            )));
        }
        for (name, map) in self.observables.iter().zip(&self.labels) {
            let card = p.cardinality(name)?;
            if map.len() != card {
                return Err(Error::InvalidLabelMap(format!(
                    "map for `{name}` covers {} of {card} values",
                    map.len()
                )));
            }
        }
        Ok(())
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Labels the connected components of the support graph of a two-variable
/// joint. Labels are numbered in order of each component's smallest `x_1`;
/// values outside the support get label 0.
pub fn support_components(p: &JointDistribution) -> Result<DeterministicLatent> {
    if p.num_vars() != 2 {
        return Err(Error::NeedsChunking(p.num_vars()));
    }
    let c1 = p.variables()[0].cardinality;
    let c2 = p.variables()[1].cardinality;
    let mut uf = UnionFind::new(c1 + c2);
    let mut seen = vec![false; c1 + c2];
    for (lin, q) in p.support() {
        if q > SUPPORT_THRESHOLD {
            let (x1, x2) = (lin / c2, lin % c2);
            uf.union(x1, c1 + x2);
            seen[x1] = true;
            seen[c1 + x2] = true;
        }
    }
    let mut label_of_root = vec![usize::MAX; c1 + c2];
    let mut next = 0;
    let mut label = |uf: &mut UnionFind, v: usize| -> usize {
        if !seen[v] {
            return 0;
        }
        let r = uf.find(v);
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = next;
            next += 1;
        }
        label_of_root[r]
    };
    let f1: Vec<usize> = (0..c1).map(|x| label(&mut uf, x)).collect();
    let f2: Vec<usize> = (0..c2).map(|x| label(&mut uf, c1 + x)).collect();
    DeterministicLatent::new(p.names().map(str::to_string).collect(), vec![f1, f2])
}

/// The deterministic-constraint latent of a two-observable joint and its
/// naturality report. An exact natural latent exists iff the report's
/// mediation error is zero; redundancy errors are zero by construction.
///
/// The report is computed with cells at or below [`SUPPORT_THRESHOLD`]
/// dropped, consistent with the support graph.
pub fn exact_natural_latent(
    p: &JointDistribution,
) -> Result<(DeterministicLatent, NaturalityReport)> {
    let latent = support_components(p)?;
    let report = if p.support().any(|(_, q)| q <= SUPPORT_THRESHOLD) {
        let cleaned = JointDistribution::from_cells(
            p.variables().to_vec(),
            p.cells().filter(|(_, q)| *q > SUPPORT_THRESHOLD),
        )?;
        evaluate_candidate(&cleaned, &latent)?
    } else {
        evaluate_candidate(p, &latent)?
    };
    Ok((latent, report))
}

fn fresh_latent_name(p: &JointDistribution) -> String {
    std::iter::once("Lambda".to_string())
        .chain((1..).map(|k| format!("Lambda{k}")))
        .find(|n| !p.contains(n))
        .expect("unbounded search")
}

/// Agent model with `Λ = f_1(X_1)` appended to `p` (all of whose variables
/// are observables).
pub fn candidate_model(p: &JointDistribution, f: &DeterministicLatent) -> Result<AgentModel> {
    f.check_total(p)?;
    let name = fresh_latent_name(p);
    let i = p.index_of(&f.observables[0])?;
    let map = &f.labels[0];
    let joint = p.with_derived(&name, f.num_labels, |a| map[a[i]])?;
    let observables: Vec<String> = p.names().map(str::to_string).collect();
    AgentModel::new(joint, observables, [name])
}

/// Naturality report of the candidate latent `Λ = f_1(X_1)`. The redundancy
/// error on `X_1` is zero by construction; on other observables it reflects
/// how often the maps disagree.
pub fn evaluate_candidate(
    p: &JointDistribution,
    f: &DeterministicLatent,
) -> Result<NaturalityReport> {
    let m = candidate_model(p, f)?;
    let mut report = naturality_report(&m)?;
    // Report in the map's observable order.
    let order: Vec<usize> = f
        .observables
        .iter()
        .map(|o| {
            m.observables()
                .iter()
                .position(|x| x == o)
                .expect("checked")
        })
        .collect();
    report.eps_redundancy_bits = order
        .iter()
        .map(|&i| report.eps_redundancy_bits[i])
        .collect();
    Ok(report)
}

/// Probability that the maps do not all agree.
pub fn disagreement_mass(p: &JointDistribution, f: &DeterministicLatent) -> Result<f64> {
    f.check_total(p)?;
    let idx: Vec<usize> = f
        .observables
        .iter()
        .map(|o| p.index_of(o))
        .collect::<Result<_>>()?;
    let mut a = vec![0; p.num_vars()];
    let mut mass = 0.0;
    for (lin, q) in p.support() {
        p.decode(lin, &mut a);
        let first = f.labels[0][a[idx[0]]];
        if idx.iter().zip(&f.labels).any(|(&i, m)| m[a[i]] != first) {
            mass += q;
        }
    }
    Ok(mass)
}

/// True if the two labelings agree up to renaming labels, on every value
/// where `mask` is true.
pub fn labels_isomorphic(a: &[usize], b: &[usize], mask: &[bool]) -> bool {
    use std::collections::HashMap;
    if a.len() != b.len() || a.len() != mask.len() {
        return false;
    }
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    for ((&x, &y), &m) in a.iter().zip(b).zip(mask) {
        if !m {
            continue;
        }
        if *fwd.entry(x).or_insert(y) != y || *back.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

/// A split of the observables into two non-empty blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub blocks: [Vec<String>; 2],
}

impl Partition {
    pub fn new(first: Vec<String>, second: Vec<String>) -> Result<Self> {
        if first.is_empty() || second.is_empty() {
            return Err(Error::InvalidPartition(
                "both blocks must be non-empty".into(),
            ));
        }
        let mut all: Vec<&String> = first.iter().chain(&second).collect();
        all.sort();
        if let Some(w) = all.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidPartition(format!("`{}` appears twice", w[0])));
        }
        Ok(Self {
            blocks: [first, second],
        })
    }

    /// Parses `A,B|C,D`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (a, b) = spec.split_once('|').ok_or_else(|| {
            Error::InvalidPartition(format!("expected `A,B|C,D`, found `{spec}`"))
        })?;
        let list = |s: &str| -> Vec<String> {
            s.split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect()
        };
        if b.contains('|') {
            return Err(Error::InvalidPartition("more than two blocks".into()));
        }
        Self::new(list(a), list(b))
    }

    /// Name of the merged variable for block `i`.
    pub fn block_name(&self, i: usize) -> String {
        self.blocks[i].join("+")
    }

    fn groups(&self) -> Vec<(String, Vec<String>)> {
        (0..2)
            .map(|i| (self.block_name(i), self.blocks[i].clone()))
            .collect()
    }

    fn covers(&self, names: &[String]) -> Result<()> {
        let mut want: Vec<&String> = names.iter().collect();
        let mut have: Vec<&String> = self.blocks.iter().flatten().collect();
        want.sort();
        have.sort();
        if want != have {
            return Err(Error::InvalidPartition(format!(
                "blocks {{{}}} must cover exactly {{{}}}",
                have.iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(" "),
                want.iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(" ")
            )));
        }
        Ok(())
    }
}

/// Merges each block into one product-alphabet observable (first member
/// most significant). The result has two variables, in block order.
pub fn chunk_observables(
    p: &JointDistribution,
    partition: &Partition,
) -> Result<JointDistribution> {
    let names: Vec<String> = p.names().map(str::to_string).collect();
    partition.covers(&names)?;
    let merged = p.merge_variables(&partition.groups())?;
    merged.reorder(&[partition.block_name(0), partition.block_name(1)])
}

/// Chunks a model's observables; latents are kept as they are.
pub fn chunk_model(m: &AgentModel, partition: &Partition) -> Result<AgentModel> {
    partition.covers(m.observables())?;
    let joint = m.joint().merge_variables(&partition.groups())?;
    AgentModel::new(
        joint,
        [partition.block_name(0), partition.block_name(1)],
        m.latents().to_vec(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::vars;

    fn block_diag() -> JointDistribution {
        // Blocks {0,1}x{0,1} and {2}x{2,3}, independent within each.
        JointDistribution::from_cells(
            vars(&[("A", 3), ("B", 4)]),
            [
                (vec![0, 0], 0.1),
                (vec![0, 1], 0.1),
                (vec![1, 0], 0.1),
                (vec![1, 1], 0.1),
                (vec![2, 2], 0.3),
                (vec![2, 3], 0.3),
            ],
        )
        .unwrap()
    }

    #[test]
    fn block_diagonal_has_exact_latent() {
        let (lat, rep) = exact_natural_latent(&block_diag()).unwrap();
        assert_eq!(lat.labels(0), &[0, 0, 1]);
        assert_eq!(lat.labels(1), &[0, 0, 1, 1]);
        assert_eq!(lat.num_labels(), 2);
        assert!(rep.eps_mediation_bits < 1e-12);
        assert_eq!(rep.eps_redundancy_bits, vec![0.0, 0.0]);
    }

    #[test]
    fn connected_support_gives_constant() {
        let p =
            JointDistribution::new(vars(&[("A", 2), ("B", 2)]), vec![0.4, 0.1, 0.1, 0.4]).unwrap();
        let (lat, rep) = exact_natural_latent(&p).unwrap();
        assert_eq!(lat.num_labels(), 1);
        let mi = p
            .mutual_information(&["A"], &["B"], &[] as &[&str])
            .unwrap();
        assert!((rep.eps_mediation_bits - mi).abs() < 1e-12);
        assert!(rep.eps_mediation_bits > 0.0);
    }

    #[test]
    fn too_many_observables() {
        let p = JointDistribution::uniform(vars(&[("A", 2), ("B", 2), ("C", 2)])).unwrap();
        assert_eq!(
            exact_natural_latent(&p).unwrap_err(),
            Error::NeedsChunking(3)
        );
    }

    #[test]
    fn refinement_breaks_redundancy() {
        let p = block_diag();
        let split = DeterministicLatent::new(
            vec!["A".into(), "B".into()],
            vec![vec![0, 1, 2], vec![0, 1, 2, 2]],
        )
        .unwrap();
        let rep = evaluate_candidate(&p, &split).unwrap();
        assert_eq!(rep.eps_redundancy_bits[0], 0.0);
        assert!(rep.eps_redundancy_bits[1] > 0.1);
        assert!((disagreement_mass(&p, &split).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn non_total_map_is_rejected() {
        let short =
            DeterministicLatent::new(vec!["A".into(), "B".into()], vec![vec![0, 0], vec![0; 4]])
                .unwrap();
        assert!(matches!(
            evaluate_candidate(&block_diag(), &short),
            Err(Error::InvalidLabelMap(_))
        ));
    }

    #[test]
    fn chunking_preserves_mass_and_marginals() {
        let p = JointDistribution::from_fn(vars(&[("A", 2), ("B", 3), ("C", 2), ("D", 2)]), |a| {
            1.0 + (a[0] * 3 + a[1] * 5 + a[2] * 7 + a[3] * 11) as f64
        })
        .unwrap();
        let part = Partition::parse("A,C|B,D").unwrap();
        let c = chunk_observables(&p, &part).unwrap();
        assert_eq!(c.names().collect::<Vec<_>>(), vec!["A+C", "B+D"]);
        assert_eq!(c.cardinality("A+C").unwrap(), 4);
        assert!((c.total_mass() - 1.0).abs() < 1e-12);
        let h1 = p.entropy(&["A", "C"]).unwrap();
        assert!((c.entropy(&["A+C"]).unwrap() - h1).abs() < 1e-12);
        let i1 = p
            .mutual_information(&["A", "C"], &["B", "D"], &[] as &[&str])
            .unwrap();
        let i2 = c
            .mutual_information(&["A+C"], &["B+D"], &[] as &[&str])
            .unwrap();
        assert!((i1 - i2).abs() < 1e-12);
    }

    #[test]
    fn partition_errors() {
        assert!(Partition::parse("A,B").is_err());
        assert!(Partition::parse("A|").is_err());
        assert!(Partition::parse("A|A").is_err());
        assert!(Partition::parse("A|B|C").is_err());
        let p = JointDistribution::uniform(vars(&[("A", 2), ("B", 2), ("C", 2)])).unwrap();
        assert!(matches!(
            chunk_observables(&p, &Partition::parse("A|B").unwrap()),
            Err(Error::InvalidPartition(_))
        ));
    }

    #[test]
    fn isomorphism_ignores_masked_values() {
        assert!(labels_isomorphic(&[0, 0, 1], &[1, 1, 0], &[true; 3]));
        assert!(!labels_isomorphic(&[0, 0, 1], &[1, 0, 0], &[true; 3]));
        assert!(!labels_isomorphic(
            &[0, 0, 1],
            &[1, 0, 0],
            &[false, true, true]
        ));
        assert!(labels_isomorphic(
            &[0, 5, 1],
            &[1, 0, 0],
            &[true, false, false]
        ));
    }
}
