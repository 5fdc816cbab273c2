//! Approximation budgets as non-negative linear combinations of named
//! epsilons plus a constant, in bits.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Add;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpsExpr {
    terms: BTreeMap<String, f64>,
    constant: f64,
}

impl EpsExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn var(name: impl Into<String>) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(name.into(), 1.0);
        Self {
            terms,
            constant: 0.0,
        }
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !(value >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon constant {value} must be non-negative"
            )));
        }
        Ok(Self {
            terms: BTreeMap::new(),
            constant: value,
        })
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon coefficient {factor} must be non-negative"
            )));
        }
        let mut out = self.clone();
        out.terms.values_mut().for_each(|c| *c *= factor);
        out.constant *= factor;
        out.terms.retain(|_, c| *c != 0.0);
        Ok(out)
    }

    pub fn coefficient(&self, name: &str) -> f64 {
        self.terms.get(name).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.terms.keys().map(String::as_str)
    }

    /// Replaces each named epsilon found in `subst` by its expression.
    pub fn substitute(&self, subst: &BTreeMap<String, EpsExpr>) -> Self {
        let mut out = EpsExpr {
            terms: BTreeMap::new(),
            constant: self.constant,
        };
        for (name, &c) in &self.terms {
            match subst.get(name) {
                Some(e) => out = out + e.scaled(c).expect("coefficients are non-negative"),
                None => *out.terms.entry(name.clone()).or_insert(0.0) += c,
            }
        }
        out
    }

    /// Renames epsilons, merging terms that land on the same name.
    pub fn rename(&self, map: &[(&str, &str)]) -> Self {
        let subst = map
            .iter()
            .map(|(from, to)| (from.to_string(), EpsExpr::var(*to)))
            .collect();
        self.substitute(&subst)
    }

    pub fn evaluate(&self, values: &BTreeMap<String, f64>) -> Result<f64> {
        let mut acc = self.constant;
        for (name, c) in &self.terms {
            let v = values
                .get(name)
                .ok_or_else(|| Error::UnboundName(name.clone()))?;
            acc += c * v;
        }
        Ok(acc)
    }
}

impl Add for EpsExpr {
    type Output = EpsExpr;

    fn add(mut self, rhs: EpsExpr) -> EpsExpr {
        for (name, c) in rhs.terms {
            *self.terms.entry(name).or_insert(0.0) += c;
        }
        self.constant += rhs.constant;
        self
    }
}

impl fmt::Display for EpsExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self
            .terms
            .iter()
            .map(|(n, &c)| {
                if c == 1.0 {
                    n.clone()
                } else {
                    format!("{c}*{n}")
                }
            })
            .collect();
        if self.constant != 0.0 || parts.is_empty() {
            parts.push(format!("{}", self.constant));
        }
        write!(f, "{}", parts.join(" + "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_merge_terms() {
        let e = EpsExpr::var("a") + EpsExpr::var("b") + EpsExpr::var("a");
        assert_eq!(e.coefficient("a"), 2.0);
        assert_eq!(e.to_string(), "2*a + b");
        assert_eq!(EpsExpr::zero().to_string(), "0");
    }

    #[test]
    fn substitution_and_evaluation() {
        let e = EpsExpr::var("med") + EpsExpr::var("r1") + EpsExpr::var("r2");
        let same = e.rename(&[("r1", "red"), ("r2", "red")]);
        assert_eq!(
            same,
            EpsExpr::var("med") + EpsExpr::var("red").scaled(2.0).unwrap()
        );
        let vals = BTreeMap::from([("med".to_string(), 0.0), ("red".to_string(), 0.058)]);
        assert!((same.evaluate(&vals).unwrap() - 0.116).abs() < 1e-15);
        assert_eq!(
            e.evaluate(&vals).unwrap_err(),
            Error::UnboundName("r1".into())
        );
        assert!(EpsExpr::var("a").scaled(-1.0).is_err());
    }
}
