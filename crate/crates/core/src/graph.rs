//! Bayes-net diagrams over named variables: factorization projection and
//! error, d-separation, implication between diagrams, and shared
//! topological orders.
//!
//! A distribution "satisfies" a diagram to within ε bits when the KL
//! divergence from the distribution to the product of its own conditionals
//! along the diagram is at most ε.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::fmt;

use crate::dist::{validate_name, JointDistribution, VarSpec};
use crate::error::{Error, Result};

/// Tolerance on the total mass of a factorization projection.
pub const PROJECTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
}

impl Dag {
    pub fn new<S: AsRef<str>, T: AsRef<str>>(nodes: &[S], edges: &[(T, T)]) -> Result<Self> {
        let mut index = HashMap::new();
        let mut names = Vec::with_capacity(nodes.len());
        for n in nodes {
            let n = n.as_ref();
            validate_name(n)?;
            if index.insert(n.to_string(), names.len()).is_some() {
                return Err(Error::DuplicateVariable(n.to_string()));
            }
            names.push(n.to_string());
        }
        let mut parents = vec![Vec::new(); names.len()];
        for (p, c) in edges {
            let (p, c) = (p.as_ref(), c.as_ref());
            let pi = *index
                .get(p)
                .ok_or_else(|| Error::UnknownNode(p.to_string()))?;
            let ci = *index
                .get(c)
                .ok_or_else(|| Error::UnknownNode(c.to_string()))?;
            if pi == ci {
                return Err(Error::SelfLoop(p.to_string()));
            }
            if parents[ci].contains(&pi) {
                return Err(Error::DuplicateEdge(p.to_string(), c.to_string()));
            }
            parents[ci].push(pi);
        }
        parents.iter_mut().for_each(|ps| ps.sort_unstable());
        let dag = Self {
            nodes: names,
            index,
            parents,
        };
        if let Some(i) = dag.cycle_node() {
            return Err(Error::Cycle(dag.nodes[i].clone()));
        }
        Ok(dag)
    }

    pub fn edgeless<S: AsRef<str>>(nodes: &[S]) -> Result<Self> {
        Self::new::<S, &str>(nodes, &[])
    }

    /// Every node is a parent of every later node.
    pub fn complete<S: AsRef<str>>(order: &[S]) -> Result<Self> {
        let mut edges = Vec::new();
        for (j, c) in order.iter().enumerate() {
            for p in &order[..j] {
                edges.push((p.as_ref(), c.as_ref()));
            }
        }
        Self::new(order, &edges)
    }

    /// Centers form a complete DAG among themselves and every leaf has all
    /// centers as parents: the factorization `P[Λ] Π_j P[X_j | Λ]` with a
    /// composite Λ.
    pub fn star<S: AsRef<str>, T: AsRef<str>>(centers: &[S], leaves: &[T]) -> Result<Self> {
        let mut nodes: Vec<&str> = centers.iter().map(AsRef::as_ref).collect();
        nodes.extend(leaves.iter().map(AsRef::as_ref));
        let mut edges = Vec::new();
        for (j, c) in centers.iter().enumerate() {
            for p in &centers[..j] {
                edges.push((p.as_ref(), c.as_ref()));
            }
        }
        for l in leaves {
            for c in centers {
                edges.push((c.as_ref(), l.as_ref()));
            }
        }
        Self::new(&nodes, &edges)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn parent_indices(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn parents(&self, name: &str) -> Result<Vec<&str>> {
        let i = self.index_of(name)?;
        Ok(self.parents[i]
            .iter()
            .map(|&p| self.nodes[p].as_str())
            .collect())
    }

    pub fn edges(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                out.push((self.nodes[p].as_str(), self.nodes[c].as_str()));
            }
        }
        out
    }

    pub fn num_edges(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, parent: &str, child: &str) -> bool {
        match (self.index.get(parent), self.index.get(child)) {
            (Some(&p), Some(&c)) => self.parents[c].contains(&p),
            _ => false,
        }
    }

    fn children_lists(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.nodes.len()];
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                ch[p].push(c);
            }
        }
        ch
    }

    fn cycle_node(&self) -> Option<usize> {
        let order = kahn(&self.nodes, &edge_pairs(self));
        if order.len() == self.nodes.len() {
            None
        } else {
            (0..self.nodes.len()).find(|i| !order.contains(i))
        }
    }

    /// Lexicographically smallest topological order (by node name).
    pub fn topological_order(&self) -> Vec<&str> {
        kahn(&self.nodes, &edge_pairs(self))
            .into_iter()
            .map(|i| self.nodes[i].as_str())
            .collect()
    }

    fn topological_indices(&self) -> Vec<usize> {
        kahn(&self.nodes, &edge_pairs(self))
    }

    /// Strict descendants of node `i`.
    pub(crate) fn descendants(&self, i: usize) -> BTreeSet<usize> {
        let ch = self.children_lists();
        let mut seen = BTreeSet::new();
        let mut stack = ch[i].clone();
        while let Some(v) = stack.pop() {
            if seen.insert(v) {
                stack.extend(&ch[v]);
            }
        }
        seen
    }

    /// `set` together with all of its ancestors.
    pub(crate) fn ancestral_closure(&self, set: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut seen = set.clone();
        let mut stack: Vec<usize> = set.iter().copied().collect();
        while let Some(v) = stack.pop() {
            for &p in &self.parents[v] {
                if seen.insert(p) {
                    stack.push(p);
                }
            }
        }
        seen
    }

    /// True when both graphs have the same node names (in any order).
    pub fn same_nodes(&self, other: &Dag) -> bool {
        self.nodes.len() == other.nodes.len() && self.nodes.iter().all(|n| other.contains(n))
    }

    fn require_same_nodes(&self, other: &Dag) -> Result<()> {
        if self.same_nodes(other) {
            Ok(())
        } else {
            Err(Error::NodeMismatch(format!(
                "{{{}}} vs {{{}}}",
                self.nodes.join(" "),
                other.nodes.join(" ")
            )))
        }
    }

    /// New graph with an extra node whose parents are `parents`.
    pub fn with_node(&self, name: &str, parents: &[&str]) -> Result<Self> {
        let mut nodes: Vec<&str> = self.nodes.iter().map(String::as_str).collect();
        nodes.push(name);
        let mut edges = self.edges();
        edges.extend(parents.iter().map(|p| (*p, name)));
        Self::new(&nodes, &edges)
    }

    /// Induced subgraph on `keep` (in this graph's node order).
    pub fn induced(&self, keep: &[&str]) -> Result<Self> {
        for k in keep {
            self.index_of(k)?;
        }
        let nodes: Vec<&str> = self
            .nodes
            .iter()
            .map(String::as_str)
            .filter(|n| keep.contains(n))
            .collect();
        let edges: Vec<(&str, &str)> = self
            .edges()
            .into_iter()
            .filter(|(p, c)| keep.contains(p) && keep.contains(c))
            .collect();
        Self::new(&nodes, &edges)
    }

    /// Same nodes, edges present in every graph.
    pub fn intersection(graphs: &[&Dag]) -> Result<Self> {
        let first = graphs
            .first()
            .ok_or_else(|| Error::NodeMismatch("no graphs given".into()))?;
        for g in &graphs[1..] {
            first.require_same_nodes(g)?;
        }
        let edges: Vec<(&str, &str)> = first
            .edges()
            .into_iter()
            .filter(|(p, c)| graphs.iter().all(|g| g.has_edge(p, c)))
            .collect();
        Self::new(first.nodes(), &edges)
    }
}

impl fmt::Display for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let edges = self.edges();
        write!(f, "{{{}}}", self.nodes.join(", "))?;
        if edges.is_empty() {
            write!(f, " (no edges)")
        } else {
            let e: Vec<String> = edges.iter().map(|(p, c)| format!("{p}->{c}")).collect();
            write!(f, " {}", e.join(" "))
        }
    }
}

fn edge_pairs(g: &Dag) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (c, ps) in g.parents.iter().enumerate() {
        for &p in ps {
            out.push((p, c));
        }
    }
    out
}

/// Kahn's algorithm, always emitting the lexicographically smallest ready
/// name. Returns fewer than `names.len()` indices if the edges have a cycle.
fn kahn(names: &[String], edges: &[(usize, usize)]) -> Vec<usize> {
    let n = names.len();
    let mut indeg = vec![0usize; n];
    let mut out_edges = vec![Vec::new(); n];
    for &(p, c) in edges {
        indeg[c] += 1;
        out_edges[p].push(c);
    }
    let mut ready: BinaryHeap<Reverse<(&str, usize)>> = (0..n)
        .filter(|&i| indeg[i] == 0)
        .map(|i| Reverse((names[i].as_str(), i)))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse((_, v))) = ready.pop() {
        order.push(v);
        for &c in &out_edges[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.push(Reverse((names[c].as_str(), c)));
            }
        }
    }
    order
}

fn require_nodes_match(p: &JointDistribution, g: &Dag) -> Result<Vec<usize>> {
    if p.num_vars() != g.len() || !g.nodes().iter().all(|n| p.contains(n)) {
        let pv: Vec<&str> = p.names().collect();
        return Err(Error::NodeMismatch(format!(
            "distribution {{{}}} vs graph {{{}}}",
            pv.join(" "),
            g.nodes().join(" ")
        )));
    }
    g.nodes().iter().map(|n| p.index_of(n)).collect()
}

/// Conditional tables `P[x_i | x_pa(i)]` for every node, as marginals over
/// (parents..., node) and over the parents.
struct Factors {
    /// Distribution variable index for each graph node.
    var_of: Vec<usize>,
    family: Vec<JointDistribution>,
    parents: Vec<JointDistribution>,
}

impl Factors {
    fn new(p: &JointDistribution, g: &Dag) -> Result<Self> {
        let var_of = require_nodes_match(p, g)?;
        let mut family = Vec::with_capacity(g.len());
        let mut parents = Vec::with_capacity(g.len());
        for i in 0..g.len() {
            let pa: Vec<usize> = g.parent_indices(i).iter().map(|&j| var_of[j]).collect();
            let mut fam = pa.clone();
            fam.push(var_of[i]);
            family.push(p.project(&fam));
            parents.push(p.project(&pa));
        }
        Ok(Self {
            var_of,
            family,
            parents,
        })
    }

    /// Linear index of the parent configuration of node `i` under full assignment `a`.
    #[inline]
    fn parent_config(&self, g: &Dag, i: usize, a: &[usize]) -> usize {
        let vs = self.parents[i].variables();
        let mut lin = 0;
        for (k, &j) in g.parent_indices(i).iter().enumerate() {
            lin = lin * vs[k].cardinality + a[self.var_of[j]];
        }
        lin
    }
}

/// `Q[x] = Π_i P[x_i | x_pa(i)]`. Conditionals at parent configurations with
/// zero probability are taken as uniform.
pub fn factorization_projection(p: &JointDistribution, g: &Dag) -> Result<JointDistribution> {
    let factors = Factors::new(p, g)?;
    let order = g.topological_indices();
    let vars: Vec<VarSpec> = p.variables().to_vec();
    let mut cells: Vec<(usize, f64)> = Vec::new();
    let mut a = vec![0usize; vars.len()];

    // Depth-first over the topological order, pruning zero-weight branches.
    fn walk(
        depth: usize,
        weight: f64,
        order: &[usize],
        g: &Dag,
        f: &Factors,
        p: &JointDistribution,
        a: &mut Vec<usize>,
        out: &mut Vec<(usize, f64)>,
    ) {
        if depth == order.len() {
            out.push((p.encode(a), weight));
            return;
        }
        let i = order[depth];
        let card = p.variables()[f.var_of[i]].cardinality;
        let pc = f.parent_config(g, i, a);
        let mass = f.parents[i].prob_linear(pc);
        for x in 0..card {
            let cond = if mass > 0.0 {
                f.family[i].prob_linear(pc * card + x) / mass
            } else {
                1.0 / card as f64
            };
            if cond > 0.0 {
                a[f.var_of[i]] = x;
                walk(depth + 1, weight * cond, order, g, f, p, a, out);
            }
        }
        a[f.var_of[i]] = 0;
    }

    walk(0, 1.0, &order, g, &factors, p, &mut a, &mut cells);
    JointDistribution::from_linear_cells(vars, cells, PROJECTION_TOLERANCE)
}

/// How well a distribution satisfies a diagram.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationError {
    /// `D_KL(P || Π_i P[X_i | X_pa(i)])` in bits; may be `+inf`.
    pub epsilon_bits: f64,
    pub graph: Dag,
    /// Variables of the evaluated distribution, in its order.
    pub variables: Vec<VarSpec>,
}

/// KL divergence from `p` to its projection onto `g`, evaluated directly on
/// the support of `p`.
pub fn factorization_kl(p: &JointDistribution, g: &Dag) -> Result<f64> {
    let factors = Factors::new(p, g)?;
    let mut a = vec![0usize; p.num_vars()];
    let mut acc = 0.0;
    for (lin, pv) in p.support() {
        p.decode(lin, &mut a);
        let mut log_q = 0.0;
        for i in 0..g.len() {
            let card = p.variables()[factors.var_of[i]].cardinality;
            let pc = factors.parent_config(g, i, &a);
            let fam = factors.family[i].prob_linear(pc * card + a[factors.var_of[i]]);
            let mass = factors.parents[i].prob_linear(pc);
            if fam <= 0.0 {
                return Ok(f64::INFINITY);
            }
            log_q += (fam / mass).log2();
        }
        acc += pv * (pv.log2() - log_q);
    }
    Ok(acc.max(0.0))
}

pub fn factorization_error(p: &JointDistribution, g: &Dag) -> Result<FactorizationError> {
    Ok(FactorizationError {
        epsilon_bits: factorization_kl(p, g)?,
        graph: g.clone(),
        variables: p.variables().to_vec(),
    })
}

fn node_set(g: &Dag, names: &[&str]) -> Result<BTreeSet<usize>> {
    names.iter().map(|n| g.index_of(n)).collect()
}

fn check_disjoint(g: &Dag, sets: [&BTreeSet<usize>; 3]) -> Result<()> {
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i + 1..] {
            if let Some(&v) = a.intersection(b).next() {
                return Err(Error::OverlappingSets(g.nodes[v].clone()));
            }
        }
    }
    Ok(())
}

/// Whether `a` and `b` are d-separated given `c`, by reachability
/// ("Bayes ball") from `a`.
pub fn d_separated(g: &Dag, a: &[&str], b: &[&str], c: &[&str]) -> Result<bool> {
    let (a, b, c) = (node_set(g, a)?, node_set(g, b)?, node_set(g, c)?);
    check_disjoint(g, [&a, &b, &c])?;
    Ok(d_separated_idx(g, &a, &b, &c))
}

fn d_separated_idx(g: &Dag, a: &BTreeSet<usize>, b: &BTreeSet<usize>, c: &BTreeSet<usize>) -> bool {
    if a.is_empty() || b.is_empty() {
        return true;
    }
    let anc_c = g.ancestral_closure(c);
    let children = g.children_lists();
    // (node, arrived from a child) / (node, arrived from a parent)
    let mut visited = BTreeSet::new();
    let mut queue: VecDeque<(usize, bool)> = a.iter().map(|&v| (v, true)).collect();
    while let Some((v, up)) = queue.pop_front() {
        if !visited.insert((v, up)) {
            continue;
        }
        if !c.contains(&v) && b.contains(&v) {
            return false;
        }
        if up {
            if !c.contains(&v) {
                queue.extend(g.parents[v].iter().map(|&p| (p, true)));
                queue.extend(children[v].iter().map(|&ch| (ch, false)));
            }
        } else {
            if !c.contains(&v) {
                queue.extend(children[v].iter().map(|&ch| (ch, false)));
            }
            if anc_c.contains(&v) {
                queue.extend(g.parents[v].iter().map(|&p| (p, true)));
            }
        }
    }
    true
}

/// d-separation by moralizing the ancestral graph of `a ∪ b ∪ c`, deleting
/// `c`, and testing undirected connectivity. Agrees with [`d_separated`].
pub fn d_separated_moral(g: &Dag, a: &[&str], b: &[&str], c: &[&str]) -> Result<bool> {
    let (a, b, c) = (node_set(g, a)?, node_set(g, b)?, node_set(g, c)?);
    check_disjoint(g, [&a, &b, &c])?;
    if a.is_empty() || b.is_empty() {
        return Ok(true);
    }
    let all: BTreeSet<usize> = a.iter().chain(&b).chain(&c).copied().collect();
    let keep = g.ancestral_closure(&all);
    let n = g.len();
    let mut adj = vec![BTreeSet::new(); n];
    for &v in &keep {
        let ps = &g.parents[v];
        for &p in ps {
            adj[v].insert(p);
            adj[p].insert(v);
        }
        for (i, &p) in ps.iter().enumerate() {
            for &q in &ps[i + 1..] {
                adj[p].insert(q);
                adj[q].insert(p);
            }
        }
    }
    let mut seen: BTreeSet<usize> = a.clone();
    let mut stack: Vec<usize> = a.iter().copied().collect();
    while let Some(v) = stack.pop() {
        if b.contains(&v) {
            return Ok(false);
        }
        for &w in &adj[v] {
            if keep.contains(&w) && !c.contains(&w) && seen.insert(w) {
                stack.push(w);
            }
        }
    }
    Ok(true)
}

/// A local Markov statement `node ⊥ rest | parents` of some graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Independence {
    pub node: String,
    pub rest: Vec<String>,
    pub given: Vec<String>,
}

impl fmt::Display for Independence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} _||_ {{{}}} | {{{}}}",
            self.node,
            self.rest.join(", "),
            self.given.join(", ")
        )
    }
}

/// First local Markov statement of `g2` that is not a d-separation in `g1`,
/// or `None` if every distribution factoring over `g1` also factors over `g2`.
pub fn implication_witness(g1: &Dag, g2: &Dag) -> Result<Option<Independence>> {
    g1.require_same_nodes(g2)?;
    for v in 0..g2.len() {
        let desc = g2.descendants(v);
        let pa: BTreeSet<usize> = g2.parents[v].iter().copied().collect();
        let rest: Vec<usize> = (0..g2.len())
            .filter(|u| *u != v && !desc.contains(u) && !pa.contains(u))
            .collect();
        if rest.is_empty() {
            continue;
        }
        let to1 = |set: &mut dyn Iterator<Item = &usize>| -> BTreeSet<usize> {
            set.map(|&u| g1.index[&g2.nodes[u]]).collect()
        };
        let a1: BTreeSet<usize> = [g1.index[&g2.nodes[v]]].into();
        let b1 = to1(&mut rest.iter());
        let c1 = to1(&mut pa.iter());
        if !d_separated_idx(g1, &a1, &b1, &c1) {
            let names = |s: &mut dyn Iterator<Item = &usize>| -> Vec<String> {
                s.map(|&u| g2.nodes[u].clone()).collect()
            };
            return Ok(Some(Independence {
                node: g2.nodes[v].clone(),
                rest: names(&mut rest.iter()),
                given: names(&mut pa.iter()),
            }));
        }
    }
    Ok(None)
}

/// True iff every distribution that exactly factors over `g1` also exactly
/// factors over `g2`.
pub fn graph_implies(g1: &Dag, g2: &Dag) -> Result<bool> {
    Ok(implication_witness(g1, g2)?.is_none())
}

fn union_edges(graphs: &[&Dag]) -> Result<(Vec<String>, Vec<(usize, usize)>)> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::NodeMismatch("no graphs given".into()))?;
    for g in &graphs[1..] {
        first.require_same_nodes(g)?;
    }
    let names = first.nodes.clone();
    let mut edges = BTreeSet::new();
    for g in graphs {
        for (p, c) in g.edges() {
            edges.insert((first.index[p], first.index[c]));
        }
    }
    Ok((names, edges.into_iter().collect()))
}

/// An order of the nodes consistent with every graph, or `None` if the union
/// of their edges is cyclic. Deterministic: lexicographically smallest.
pub fn common_topological_order(graphs: &[&Dag]) -> Result<Option<Vec<String>>> {
    let (names, edges) = union_edges(graphs)?;
    let order = kahn(&names, &edges);
    if order.len() < names.len() {
        return Ok(None);
    }
    Ok(Some(order.into_iter().map(|i| names[i].clone()).collect()))
}

/// An edge `(u, v)` lying on a cycle of the union of the graphs' edges, if any.
pub fn order_conflict(graphs: &[&Dag]) -> Result<Option<(String, String)>> {
    let (names, edges) = union_edges(graphs)?;
    let order = kahn(&names, &edges);
    if order.len() == names.len() {
        return Ok(None);
    }
    // Nodes left over by Kahn all lie on or downstream of a cycle; walk
    // backwards through unresolved parents until a node repeats.
    let resolved: BTreeSet<usize> = order.into_iter().collect();
    let mut parents = vec![Vec::new(); names.len()];
    for &(p, c) in &edges {
        if !resolved.contains(&p) && !resolved.contains(&c) {
            parents[c].push(p);
        }
    }
    let start = (0..names.len())
        .find(|i| !resolved.contains(i))
        .expect("cycle exists");
    let mut seen = vec![false; names.len()];
    let mut v = start;
    loop {
        seen[v] = true;
        let p = parents[v][0];
        if seen[p] {
            return Ok(Some((names[p].clone(), names[v].clone())));
        }
        v = p;
    }
}
