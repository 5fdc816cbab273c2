//! Small numeric primitives shared across modules.

/// `-p * log2(p)` with the `0 log 0 = 0` convention.
#[inline]
pub fn neg_xlog2x(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    neg_xlog2x(p) + neg_xlog2x(1.0 - p)
}

/// `log(sum(exp(xs)))`, stable for large magnitudes. Empty input gives `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Table of `ln k!` for `k = 0..=max`, i.e. `ln Γ(k + 1)` at integers.
#[derive(Debug, Clone)]
pub struct LogFactorial {
    table: Vec<f64>,
}

impl LogFactorial {
    pub fn new(max: usize) -> Self {
        let mut table = Vec::with_capacity(max + 1);
        table.push(0.0);
        let mut acc = 0.0f64;
        for k in 1..=max {
            acc += (k as f64).ln();
            table.push(acc);
        }
        Self { table }
    }

    /// `ln k!`; panics if `k` exceeds the table.
    #[inline]
    pub fn ln_fact(&self, k: usize) -> f64 {
        self.table[k]
    }

    /// `ln Γ(x)` for positive integer `x`.
    #[inline]
    pub fn ln_gamma_int(&self, x: usize) -> f64 {
        assert!(x >= 1, "ln_gamma_int requires x >= 1");
        self.table[x - 1]
    }

    pub fn ln_choose(&self, n: usize, k: usize) -> f64 {
        assert!(k <= n);
        self.table[n] - self.table[k] - self.table[n - k]
    }

    pub fn max(&self) -> usize {
        self.table.len() - 1
    }
}
