//! Discrete joint distributions and the information quantities defined on them.
//!
//! All quantities are reported in bits. Tables are stored row-major (the last
//! variable varies fastest); tables with more than [`DENSE_CELL_LIMIT`] cells
//! switch to a sparse map keyed by the same linear index, so iteration order
//! and floating-point summation order are identical for both layouts.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::numeric::neg_xlog2x;

/// Tables up to this many cells are stored densely.
pub const DENSE_CELL_LIMIT: usize = 10_000_000;

/// Inputs whose total mass is within this distance of 1 are renormalized on load.
pub const LOAD_TOLERANCE: f64 = 1e-6;

/// Totals this close to 1 are left alone on load, so that written tables
/// read back bit-for-bit.
const ROUNDING_SLACK: f64 = 1e-12;

/// One value index per variable, in the owning distribution's variable order.
pub type Assignment = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VarSpec {
    pub name: String,
    pub cardinality: usize,
}

impl VarSpec {
    pub fn new(name: impl Into<String>, cardinality: usize) -> Self {
        Self {
            name: name.into(),
            cardinality,
        }
    }
}

/// Shorthand for building variable lists in tests and generators.
pub fn vars(specs: &[(&str, usize)]) -> Vec<VarSpec> {
    specs.iter().map(|&(n, c)| VarSpec::new(n, c)).collect()
}

/// Names may not be empty or contain whitespace or the separators used by the
/// text formats.
pub fn validate_name(name: &str) -> Result<()> {
    let bad = name.is_empty()
        || name
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, ':' | ',' | '#' | '=' | '|'))
        || name.contains("->");
    if bad {
        Err(Error::InvalidName(name.to_string()))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Cells {
    Dense(Vec<f64>),
    Sparse(BTreeMap<usize, f64>),
}

impl Cells {
    fn with_capacity(total: usize) -> Self {
        if total <= DENSE_CELL_LIMIT {
            Cells::Dense(vec![0.0; total])
        } else {
            Cells::Sparse(BTreeMap::new())
        }
    }

    #[inline]
    fn add(&mut self, lin: usize, p: f64) {
        match self {
            Cells::Dense(v) => v[lin] += p,
            Cells::Sparse(m) => *m.entry(lin).or_insert(0.0) += p,
        }
    }

    #[inline]
    fn get(&self, lin: usize) -> f64 {
        match self {
            Cells::Dense(v) => v[lin],
            Cells::Sparse(m) => m.get(&lin).copied().unwrap_or(0.0),
        }
    }

    fn scale(&mut self, s: f64) {
        match self {
            Cells::Dense(v) => v.iter_mut().for_each(|p| *p *= s),
            Cells::Sparse(m) => m.values_mut().for_each(|p| *p *= s),
        }
    }

    fn total(&self) -> f64 {
        match self {
            Cells::Dense(v) => v.iter().sum(),
            Cells::Sparse(m) => m.values().sum(),
        }
    }

    fn prune(&mut self) {
        if let Cells::Sparse(m) = self {
            m.retain(|_, p| *p > 0.0);
        }
    }
}

/// Iterator over the support of a distribution as `(linear index, probability)`.
pub struct Support<'a> {
    inner: SupportInner<'a>,
}

enum SupportInner<'a> {
    Dense(std::iter::Enumerate<std::slice::Iter<'a, f64>>),
    Sparse(std::collections::btree_map::Iter<'a, usize, f64>),
}

impl Iterator for Support<'_> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<Self::Item> {
        match &mut self.inner {
            SupportInner::Dense(it) => it.find(|(_, p)| **p > 0.0).map(|(i, p)| (i, *p)),
            SupportInner::Sparse(it) => it.find(|(_, p)| **p > 0.0).map(|(i, p)| (*i, *p)),
        }
    }
}

/// A normalized probability table over an ordered list of finite variables.
#[derive(Debug, Clone)]
pub struct JointDistribution {
    vars: Vec<VarSpec>,
    strides: Vec<usize>,
    num_cells: usize,
    cells: Cells,
}

/// Validates names and cardinalities; returns the cell count.
pub(crate) fn check_layout(vars: &[VarSpec]) -> Result<usize> {
    layout(vars).map(|(_, n)| n)
}

fn layout(vars: &[VarSpec]) -> Result<(Vec<usize>, usize)> {
    let mut seen = BTreeSet::new();
    for v in vars {
        validate_name(&v.name)?;
        if v.cardinality == 0 {
            return Err(Error::InvalidCardinality(v.name.clone()));
        }
        if !seen.insert(v.name.as_str()) {
            return Err(Error::DuplicateVariable(v.name.clone()));
        }
    }
    let mut strides = vec![0; vars.len()];
    let mut total: usize = 1;
    for (i, v) in vars.iter().enumerate().rev() {
        strides[i] = total;
        total = total
            .checked_mul(v.cardinality)
            .ok_or_else(|| Error::TableTooLarge {
                required: vars.iter().map(|v| v.cardinality as u128).product(),
            })?;
    }
    Ok((strides, total))
}

fn check_probability(p: f64) -> Result<()> {
    if p.is_finite() && p >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}

impl JointDistribution {
    fn from_parts(vars: Vec<VarSpec>, cells: Cells) -> Result<Self> {
        let (strides, num_cells) = layout(&vars)?;
        Ok(Self {
            vars,
            strides,
            num_cells,
            cells,
        })
    }

    /// Applies the load policy: mass within [`LOAD_TOLERANCE`] of 1 is
    /// renormalized, anything else is rejected.
    fn normalized_on_load(mut self) -> Result<Self> {
        let total = self.cells.total();
        if (total - 1.0).abs() > LOAD_TOLERANCE {
            return Err(Error::NotNormalized(total));
        }
        if (total - 1.0).abs() > ROUNDING_SLACK {
            self.cells.scale(1.0 / total);
        }
        self.cells.prune();
        Ok(self)
    }

    fn normalized_weights(mut self) -> Result<Self> {
        let total = self.cells.total();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::ZeroMass);
        }
        self.cells.scale(1.0 / total);
        self.cells.prune();
        Ok(self)
    }

    /// Raw cells by linear index; renormalized only if the total is within
    /// `tolerance` of 1, rejected otherwise.
    pub(crate) fn from_linear_cells(
        vars: Vec<VarSpec>,
        cells: impl IntoIterator<Item = (usize, f64)>,
        tolerance: f64,
    ) -> Result<Self> {
        let mut d = Self::from_parts(vars, Cells::Dense(Vec::new()))?;
        d.cells = Cells::with_capacity(d.num_cells);
        for (lin, p) in cells {
            d.cells.add(lin, p);
        }
        let total = d.cells.total();
        if (total - 1.0).abs() > tolerance {
            return Err(Error::NotNormalized(total));
        }
        if (total - 1.0).abs() > ROUNDING_SLACK {
            d.cells.scale(1.0 / total);
        }
        d.cells.prune();
        Ok(d)
    }

    /// Dense table in row-major order; total mass must already be (close to) 1.
    pub fn new(vars: Vec<VarSpec>, probs: Vec<f64>) -> Result<Self> {
        let (_, total) = layout(&vars)?;
        if probs.len() != total {
            return Err(Error::LengthMismatch {
                expected: total,
                found: probs.len(),
            });
        }
        probs.iter().try_for_each(|&p| check_probability(p))?;
        let cells = if total <= DENSE_CELL_LIMIT {
            Cells::Dense(probs)
        } else {
            Cells::Sparse(
                probs
                    .into_iter()
                    .enumerate()
                    .filter(|(_, p)| *p > 0.0)
                    .collect(),
            )
        };
        Self::from_parts(vars, cells)?.normalized_on_load()
    }

    /// Builds from explicit cells; unlisted cells are zero and repeated cells add.
    pub fn from_cells<I>(vars: Vec<VarSpec>, cells: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Assignment, f64)>,
    {
        let mut d = Self::from_parts(vars, Cells::Dense(Vec::new()))?;
        d.cells = Cells::with_capacity(d.num_cells);
        for (a, p) in cells {
            check_probability(p)?;
            let lin = d.checked_encode(&a)?;
            d.cells.add(lin, p);
        }
        d.normalized_on_load()
    }

    /// Builds from unnormalized non-negative weights, evaluated on every cell.
    pub fn from_fn(vars: Vec<VarSpec>, mut weight: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut d = Self::from_parts(vars, Cells::Dense(Vec::new()))?;
        d.cells = Cells::with_capacity(d.num_cells);
        let mut a = vec![0; d.vars.len()];
        for lin in 0..d.num_cells {
            d.decode(lin, &mut a);
            let w = weight(&a);
            check_probability(w)?;
            if w > 0.0 {
                d.cells.add(lin, w);
            }
        }
        d.normalized_weights()
    }

    /// Builds from an unnormalized dense weight vector.
    pub fn from_weights(vars: Vec<VarSpec>, weights: Vec<f64>) -> Result<Self> {
        let (_, total) = layout(&vars)?;
        if weights.len() != total {
            return Err(Error::LengthMismatch {
                expected: total,
                found: weights.len(),
            });
        }
        weights.iter().try_for_each(|&p| check_probability(p))?;
        Self::from_parts(vars, Cells::Dense(weights))?.normalized_weights()
    }

    pub fn uniform(vars: Vec<VarSpec>) -> Result<Self> {
        Self::from_fn(vars, |_| 1.0)
    }

    pub fn point_mass(vars: Vec<VarSpec>, at: &[usize]) -> Result<Self> {
        Self::from_cells(vars, [(at.to_vec(), 1.0)])
    }

    pub fn variables(&self) -> &[VarSpec] {
        &self.vars
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.iter().map(|v| v.name.as_str())
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.cells, Cells::Dense(_))
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.vars
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn cardinality(&self, name: &str) -> Result<usize> {
        Ok(self.vars[self.index_of(name)?].cardinality)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.vars.iter().any(|v| v.name == name)
    }

    fn indices<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.index_of(n.as_ref())).collect()
    }

    /// Row-major linear index of an assignment. Panics on malformed input.
    #[inline]
    pub fn encode(&self, a: &[usize]) -> usize {
        debug_assert_eq!(a.len(), self.vars.len());
        a.iter().zip(&self.strides).map(|(x, s)| x * s).sum()
    }

    fn checked_encode(&self, a: &[usize]) -> Result<usize> {
        if a.len() != self.vars.len() {
            return Err(Error::LengthMismatch {
                expected: self.vars.len(),
                found: a.len(),
            });
        }
        for (x, v) in a.iter().zip(&self.vars) {
            if *x >= v.cardinality {
                return Err(Error::ValueOutOfRange {
                    variable: v.name.clone(),
                    value: *x,
                    cardinality: v.cardinality,
                });
            }
        }
        Ok(self.encode(a))
    }

    #[inline]
    pub fn decode(&self, lin: usize, out: &mut [usize]) {
        for ((o, s), v) in out.iter_mut().zip(&self.strides).zip(&self.vars) {
            *o = (lin / s) % v.cardinality;
        }
    }

    /// Probability of a full assignment. Panics if the assignment is malformed.
    pub fn prob(&self, a: &[usize]) -> f64 {
        self.cells
            .get(self.checked_encode(a).expect("malformed assignment"))
    }

    #[inline]
    pub fn prob_linear(&self, lin: usize) -> f64 {
        self.cells.get(lin)
    }

    /// Cells with positive probability, in increasing linear-index order.
    pub fn support(&self) -> Support<'_> {
        let inner = match &self.cells {
            Cells::Dense(v) => SupportInner::Dense(v.iter().enumerate()),
            Cells::Sparse(m) => SupportInner::Sparse(m.iter()),
        };
        Support { inner }
    }

    /// Support cells with decoded assignments.
    pub fn cells(&self) -> impl Iterator<Item = (Assignment, f64)> + '_ {
        self.support().map(move |(lin, p)| {
            let mut a = vec![0; self.vars.len()];
            self.decode(lin, &mut a);
            (a, p)
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.cells.total()
    }

    /// Sum over all variables not in `idx`, keeping the listed order.
    /// No renormalization.
    pub(crate) fn project(&self, idx: &[usize]) -> JointDistribution {
        let vars: Vec<VarSpec> = idx.iter().map(|&i| self.vars[i].clone()).collect();
        let (strides, num_cells) = layout(&vars).expect("projection of a valid layout");
        let mut cells = Cells::with_capacity(num_cells);
        for (lin, p) in self.support() {
            let mut t = 0;
            for (&i, s) in idx.iter().zip(&strides) {
                t += ((lin / self.strides[i]) % self.vars[i].cardinality) * s;
            }
            cells.add(t, p);
        }
        JointDistribution {
            vars,
            strides,
            num_cells,
            cells,
        }
    }

    /// Marginal over `keep`, in this distribution's variable order.
    pub fn marginalize<S: AsRef<str>>(&self, keep: &[S]) -> Result<Self> {
        let mut idx = self.indices(keep)?;
        idx.sort_unstable();
        idx.dedup();
        Ok(self.project(&idx))
    }

    /// Marginal over `names` in exactly the given order.
    pub fn reorder<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let idx = self.indices(names)?;
        let mut seen = BTreeSet::new();
        for &i in &idx {
            if !seen.insert(i) {
                return Err(Error::DuplicateVariable(self.vars[i].name.clone()));
            }
        }
        Ok(self.project(&idx))
    }

    /// Conditional distribution over the remaining variables given `evidence`.
    pub fn condition(&self, evidence: &[(&str, usize)]) -> Result<Self> {
        let mut fixed: Vec<Option<usize>> = vec![None; self.vars.len()];
        for &(name, value) in evidence {
            let i = self.index_of(name)?;
            if value >= self.vars[i].cardinality {
                return Err(Error::ValueOutOfRange {
                    variable: name.to_string(),
                    value,
                    cardinality: self.vars[i].cardinality,
                });
            }
            if fixed[i].replace(value).is_some_and(|old| old != value) {
                return Err(Error::UnsupportedEvidence(format!(
                    "conflicting values for `{name}`"
                )));
            }
        }
        let rest: Vec<usize> = (0..self.vars.len())
            .filter(|&i| fixed[i].is_none())
            .collect();
        let vars: Vec<VarSpec> = rest.iter().map(|&i| self.vars[i].clone()).collect();
        let (strides, num_cells) = layout(&vars)?;
        let mut cells = Cells::with_capacity(num_cells);
        let mut a = vec![0; self.vars.len()];
        for (lin, p) in self.support() {
            self.decode(lin, &mut a);
            if fixed.iter().zip(&a).all(|(f, x)| f.is_none_or(|v| v == *x)) {
                let t: usize = rest.iter().zip(&strides).map(|(&i, s)| a[i] * s).sum();
                cells.add(t, p);
            }
        }
        let mass = cells.total();
        if !(mass > 0.0) {
            let desc: Vec<String> = evidence.iter().map(|(n, v)| format!("{n}={v}")).collect();
            return Err(Error::UnsupportedEvidence(desc.join(", ")));
        }
        cells.scale(1.0 / mass);
        cells.prune();
        Ok(JointDistribution {
            vars,
            strides,
            num_cells,
            cells,
        })
    }

    /// Shannon entropy (bits) of the marginal over `over`.
    pub fn entropy<S: AsRef<str>>(&self, over: &[S]) -> Result<f64> {
        let m = self.marginalize(over)?;
        Ok(m.support()
            .map(|(_, p)| neg_xlog2x(p))
            .sum::<f64>()
            .max(0.0))
    }

    /// `H(target | given)` in bits. `given` may be empty.
    pub fn conditional_entropy<S: AsRef<str>, T: AsRef<str>>(
        &self,
        target: &[S],
        given: &[T],
    ) -> Result<f64> {
        let t = self.indices(target)?;
        let g = self.indices(given)?;
        if let Some(&i) = t.iter().find(|i| g.contains(i)) {
            return Err(Error::OverlappingSets(self.vars[i].name.clone()));
        }
        let mut t = t;
        t.sort_unstable();
        t.dedup();
        let mut g = g;
        g.sort_unstable();
        g.dedup();
        let joint_idx: Vec<usize> = g.iter().chain(&t).copied().collect();
        let joint = self.project(&joint_idx);
        let given_m = self.project(&g);
        let target_cells: usize = t.iter().map(|&i| self.vars[i].cardinality).product();
        let h: f64 = joint
            .support()
            .map(|(lin, p)| {
                let pg = given_m.prob_linear(lin / target_cells);
                p * (pg / p).log2()
            })
            .sum();
        Ok(h.max(0.0))
    }

    /// `I(a; b | given)` in bits.
    pub fn mutual_information<S: AsRef<str>>(&self, a: &[S], b: &[S], given: &[S]) -> Result<f64> {
        let h_a_g = self.conditional_entropy(a, given)?;
        let bg: Vec<&str> = b.iter().chain(given).map(AsRef::as_ref).collect();
        Ok((h_a_g - self.conditional_entropy(a, &bg)?).max(0.0))
    }

    /// `D_KL(self || q)` in bits; `+inf` when `self` has mass where `q` has none.
    pub fn kl_divergence(&self, q: &JointDistribution) -> Result<f64> {
        kl_divergence(self, q)
    }

    /// Largest absolute cell difference against a distribution with the same variables.
    pub fn max_abs_diff(&self, other: &JointDistribution) -> Result<f64> {
        same_variables(self, other)?;
        let mut diff = 0.0f64;
        for (lin, p) in self.support() {
            diff = diff.max((p - other.prob_linear(lin)).abs());
        }
        for (lin, q) in other.support() {
            diff = diff.max((q - self.prob_linear(lin)).abs());
        }
        Ok(diff)
    }

    /// Appends a variable that is a deterministic function of the existing ones.
    pub fn with_derived(
        &self,
        name: &str,
        cardinality: usize,
        f: impl Fn(&[usize]) -> usize,
    ) -> Result<Self> {
        let mut vars = self.vars.clone();
        vars.push(VarSpec::new(name, cardinality));
        let (strides, num_cells) = layout(&vars)?;
        let mut cells = Cells::with_capacity(num_cells);
        let mut a = vec![0; self.vars.len()];
        for (lin, p) in self.support() {
            self.decode(lin, &mut a);
            let y = f(&a);
            if y >= cardinality {
                return Err(Error::ValueOutOfRange {
                    variable: name.to_string(),
                    value: y,
                    cardinality,
                });
            }
            cells.add(lin * cardinality + y, p);
        }
        Ok(JointDistribution {
            vars,
            strides,
            num_cells,
            cells,
        })
    }

    /// Appends an exact copy of `source` named `copy`.
    pub fn with_copy(&self, source: &str, copy: &str) -> Result<Self> {
        let i = self.index_of(source)?;
        let card = self.vars[i].cardinality;
        self.with_derived(copy, card, |a| a[i])
    }

    /// Replaces each group of variables by one product-alphabet variable.
    ///
    /// The merged value is the row-major index of the group's values (first
    /// listed variable most significant). Merged variables take the position
    /// of their group's first member; ungrouped variables keep their order.
    pub fn merge_variables(&self, groups: &[(String, Vec<String>)]) -> Result<Self> {
        let mut owner: Vec<Option<usize>> = vec![None; self.vars.len()];
        let mut group_idx = Vec::with_capacity(groups.len());
        for (g, (_, members)) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidPartition(format!("group {g} is empty")));
            }
            let idx = self.indices(members)?;
            for &i in &idx {
                if owner[i].replace(g).is_some() {
                    return Err(Error::InvalidPartition(format!(
                        "`{}` appears in more than one group",
                        self.vars[i].name
                    )));
                }
            }
            group_idx.push(idx);
        }
        // Output slots: each slot is either an original variable or a group.
        let mut slots: Vec<Vec<usize>> = Vec::new();
        let mut out_vars = Vec::new();
        let mut emitted = vec![false; groups.len()];
        for i in 0..self.vars.len() {
            match owner[i] {
                None => {
                    slots.push(vec![i]);
                    out_vars.push(self.vars[i].clone());
                }
                Some(g) if !emitted[g] => {
                    emitted[g] = true;
                    let card = group_idx[g]
                        .iter()
                        .try_fold(1usize, |acc, &j| acc.checked_mul(self.vars[j].cardinality))
                        .ok_or(Error::TableTooLarge {
                            required: u128::MAX,
                        })?;
                    slots.push(group_idx[g].clone());
                    out_vars.push(VarSpec::new(groups[g].0.clone(), card));
                }
                Some(_) => {}
            }
        }
        let (strides, num_cells) = layout(&out_vars)?;
        let mut cells = Cells::with_capacity(num_cells);
        let mut a = vec![0; self.vars.len()];
        for (lin, p) in self.support() {
            self.decode(lin, &mut a);
            let mut t = 0;
            for (slot, s) in slots.iter().zip(&strides) {
                let mut v = 0;
                for &j in slot {
                    v = v * self.vars[j].cardinality + a[j];
                }
                t += v * s;
            }
            cells.add(t, p);
        }
        Ok(JointDistribution {
            vars: out_vars,
            strides,
            num_cells,
            cells,
        })
    }

    /// Mixture `w * self + (1 - w) * other` over identical variables.
    pub fn mix(&self, other: &JointDistribution, w: f64) -> Result<Self> {
        same_variables(self, other)?;
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::InvalidConfig(format!(
                "mixture weight {w} outside [0, 1]"
            )));
        }
        let mut cells = Cells::with_capacity(self.num_cells);
        for (lin, p) in self.support() {
            cells.add(lin, w * p);
        }
        for (lin, q) in other.support() {
            cells.add(lin, (1.0 - w) * q);
        }
        let mut out = JointDistribution {
            vars: self.vars.clone(),
            strides: self.strides.clone(),
            num_cells: self.num_cells,
            cells,
        };
        out.cells.prune();
        Ok(out)
    }
}

pub(crate) fn same_variables(p: &JointDistribution, q: &JointDistribution) -> Result<()> {
    if p.vars != q.vars {
        let show = |d: &JointDistribution| {
            d.vars
                .iter()
                .map(|v| format!("{}:{}", v.name, v.cardinality))
                .collect::<Vec<_>>()
                .join(" ")
        };
        return Err(Error::VariableMismatch(format!(
            "[{}] vs [{}]",
            show(p),
            show(q)
        )));
    }
    Ok(())
}

/// `D_KL(p || q)` in bits. Cells where `p` is zero contribute nothing; a cell
/// with `p > 0` and `q = 0` makes the result `f64::INFINITY`.
pub fn kl_divergence(p: &JointDistribution, q: &JointDistribution) -> Result<f64> {
    same_variables(p, q)?;
    let mut acc = 0.0;
    for (lin, pv) in p.support() {
        let qv = q.prob_linear(lin);
        if qv <= 0.0 {
            return Ok(f64::INFINITY);
        }
        acc += pv * (pv / qv).log2();
    }
    Ok(acc.max(0.0))
}
