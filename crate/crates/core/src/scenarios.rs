//! Worked scenarios: the coin-batch median example, a discretized
//! Dirichlet-categorical die fixture, and a block-structured generator for
//! exact natural latents.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dist::{JointDistribution, VarSpec, DENSE_CELL_LIMIT};
use crate::error::{Error, Result};
use crate::naturality::{theorem_bound, AgentModel, TheoremCheck};
use crate::numeric::{binary_entropy, log_sum_exp, neg_xlog2x, LogFactorial};
use crate::random::flat_dirichlet;
use crate::search::{chunk_model, Partition};

/// Two batches of `n` flips of one coin with a uniformly distributed bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoinExampleConfig {
    pub n: usize,
}

impl CoinExampleConfig {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "flips per batch must be even and >= 2, got {n}"
            )));
        }
        Ok(Self { n })
    }

    /// Batches with at least this many heads get median label 1.
    pub fn median_threshold(&self) -> usize {
        self.n / 2
    }
}

impl Default for CoinExampleConfig {
    fn default() -> Self {
        Self { n: 1000 }
    }
}

/// `ln P[N_1 = a | N_2 = b]` as `table[b][a]`, from the beta-binomial
/// posterior predictive.
pub fn coin_log_conditional(cfg: &CoinExampleConfig) -> Vec<Vec<f64>> {
    let n = cfg.n;
    let lf = LogFactorial::new(2 * n + 1);
    (0..=n)
        .map(|b| {
            let row_const = lf.ln_fact(n + 1) - lf.ln_fact(b) - lf.ln_fact(n - b) + lf.ln_fact(n)
                - lf.ln_fact(2 * n + 1);
            (0..=n)
                .map(|a| {
                    row_const - lf.ln_fact(a) - lf.ln_fact(n - a)
                        + lf.ln_fact(a + b)
                        + lf.ln_fact(2 * n - a - b)
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoinMedian {
    /// `H(Λ' | N_2)` where `Λ'` is the median label of batch 1.
    pub entropy_bits: f64,
    /// `[P(Λ'=0 | N_2), P(Λ'=1 | N_2)]` for each `N_2`.
    pub label_probs: Vec<[f64; 2]>,
    /// `max |P(Λ'=0|N_2) + P(Λ'=1|N_2) - 1|` over `N_2`.
    pub max_normalization_error: f64,
}

pub fn coin_median(cfg: &CoinExampleConfig) -> CoinMedian {
    let lp = coin_log_conditional(cfg);
    let t = cfg.median_threshold();
    let weight = 1.0 / (cfg.n + 1) as f64;
    let mut entropy_bits = 0.0;
    let mut label_probs = Vec::with_capacity(cfg.n + 1);
    let mut max_normalization_error: f64 = 0.0;
    for row in &lp {
        let lo = log_sum_exp(&row[..t]);
        let hi = log_sum_exp(&row[t..]);
        let (p0, p1) = (lo.exp(), hi.exp());
        entropy_bits -= weight * (p0 * lo + p1 * hi) / std::f64::consts::LN_2;
        max_normalization_error = max_normalization_error.max((p0 + p1 - 1.0).abs());
        label_probs.push([p0, p1]);
    }
    CoinMedian {
        entropy_bits,
        label_probs,
        max_normalization_error,
    }
}

/// `E[H(Λ'(N_1) | N_2)]` in bits.
pub fn coin_median_entropy(cfg: &CoinExampleConfig) -> f64 {
    coin_median(cfg).entropy_bits
}

/// `ε_med + 2 ε_red` with the bias as mediator (`ε_med = 0`) and the median
/// entropy as redundancy error.
pub fn coin_theorem_bound(cfg: &CoinExampleConfig) -> f64 {
    theorem_bound(0.0, coin_median_entropy(cfg))
}

/// Agent model over `N1`, `N2` (head counts) and latent `M`, the median
/// label of batch 1. Its redundancy row is `[0, H(M | N2)]`.
pub fn coin_model(cfg: &CoinExampleConfig) -> Result<AgentModel> {
    let n = cfg.n;
    let lp = coin_log_conditional(cfg);
    let weight = 1.0 / (n + 1) as f64;
    let mut probs = vec![0.0; (n + 1) * (n + 1)];
    for (b, row) in lp.iter().enumerate() {
        for (a, l) in row.iter().enumerate() {
            probs[a * (n + 1) + b] = weight * l.exp();
        }
    }
    let pair = JointDistribution::new(
        vec![VarSpec::new("N1", n + 1), VarSpec::new("N2", n + 1)],
        probs,
    )?;
    let t = cfg.median_threshold();
    let joint = pair.with_derived("M", 2, |a| usize::from(a[0] >= t))?;
    AgentModel::new(joint, ["N1", "N2"], ["M"])
}

fn require_cells(cells: u128) -> Result<()> {
    if cells > DENSE_CELL_LIMIT as u128 {
        return Err(Error::TableTooLarge { required: cells });
    }
    Ok(())
}

/// Midpoints of `grid` equal cells of `[0, 1]`.
fn bias_midpoints(grid: usize) -> Vec<f64> {
    (0..grid).map(|g| (g as f64 + 0.5) / grid as f64).collect()
}

/// `ln` of the binomial pmf at each `k` in `0..=n`.
fn log_binomial_row(lf: &LogFactorial, n: usize, bias: f64) -> Vec<f64> {
    (0..=n)
        .map(|k| lf.ln_choose(n, k) + k as f64 * bias.ln() + (n - k) as f64 * (1.0 - bias).ln())
        .collect()
}

/// The coin example with the bias discretized to `grid` equally likely
/// midpoints, as a check of the stability bound: mediator `Λ` = bias,
/// redund `M` = median label of batch 1. Mediation is exact by construction.
pub fn coin_bias_check(cfg: &CoinExampleConfig, grid: usize) -> Result<TheoremCheck> {
    if grid == 0 {
        return Err(Error::InvalidConfig(
            "bias grid must have at least one point".into(),
        ));
    }
    let n = cfg.n;
    let t = cfg.median_threshold();
    let lf = LogFactorial::new(n);
    let w = 1.0 / grid as f64;
    let mut p_n2 = vec![0.0; n + 1];
    let mut p_m1_n2 = vec![0.0; n + 1];
    let mut conclusion = 0.0;
    for bias in bias_midpoints(grid) {
        let lb = log_binomial_row(&lf, n, bias);
        let tail = log_sum_exp(&lb[t..]).exp().min(1.0);
        conclusion += w * binary_entropy(tail);
        for (k, l) in lb.iter().enumerate() {
            let b = w * l.exp();
            p_n2[k] += b;
            p_m1_n2[k] += tail * b;
        }
    }
    let mut h_m_n2 = 0.0;
    for k in 0..=n {
        let (pk, p1) = (p_n2[k], p_m1_n2[k]);
        let p0 = (pk - p1).max(0.0);
        if pk > 0.0 {
            h_m_n2 += pk * (neg_xlog2x(p0 / pk) + neg_xlog2x(p1 / pk));
        }
    }
    Ok(TheoremCheck::from_parts(0.0, vec![0.0, h_m_n2], conclusion))
}

/// Full joint over `Lambda` (bias index), `N1`, `N2`, `M` for the
/// discretized coin example. Only practical for small `n`.
pub fn coin_bias_joint(cfg: &CoinExampleConfig, grid: usize) -> Result<JointDistribution> {
    if grid == 0 {
        return Err(Error::InvalidConfig(
            "bias grid must have at least one point".into(),
        ));
    }
    let n = cfg.n;
    require_cells(grid as u128 * (n as u128 + 1).pow(2) * 2)?;
    let lf = LogFactorial::new(n);
    let rows: Vec<Vec<f64>> = bias_midpoints(grid)
        .into_iter()
        .map(|b| {
            log_binomial_row(&lf, n, b)
                .into_iter()
                .map(f64::exp)
                .collect()
        })
        .collect();
    let vars = vec![
        VarSpec::new("Lambda", grid),
        VarSpec::new("N1", n + 1),
        VarSpec::new("N2", n + 1),
    ];
    let base = JointDistribution::from_fn(vars, |a| rows[a[0]][a[1]] * rows[a[0]][a[2]])?;
    let t = cfg.median_threshold();
    base.with_derived("M", 2, |a| usize::from(a[1] >= t))
}

/// Rolls of one die, split into two chunks, with the face probabilities on a
/// finite grid under a Dirichlet prior.
#[derive(Debug, Clone, PartialEq)]
pub struct DieFixtureConfig {
    pub rolls_per_chunk: usize,
    pub faces: usize,
    /// Symmetric Dirichlet concentration of the prior.
    pub concentration: f64,
    /// Grid points are `(k + 1/2) / (r + faces/2)` over compositions `k` of
    /// `r` into `faces` parts; `r = 8` gives 9 points for a coin, `r = 0`
    /// a single point at the fair die.
    pub grid_resolution: usize,
}

impl Default for DieFixtureConfig {
    fn default() -> Self {
        Self {
            rolls_per_chunk: 2,
            faces: 2,
            concentration: 1.0,
            grid_resolution: 8,
        }
    }
}

fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    (0..=total)
        .flat_map(|first| {
            compositions(total - first, parts - 1)
                .into_iter()
                .map(move |mut rest| {
                    rest.insert(0, first);
                    rest
                })
        })
        .collect()
}

/// The grid of face-probability vectors described on [`DieFixtureConfig`].
pub fn die_grid(faces: usize, resolution: usize) -> Vec<Vec<f64>> {
    let denom = resolution as f64 + faces as f64 / 2.0;
    compositions(resolution, faces)
        .into_iter()
        .map(|k| k.into_iter().map(|x| (x as f64 + 0.5) / denom).collect())
        .collect()
}

fn validate_die(cfg: &DieFixtureConfig) -> Result<()> {
    if cfg.faces < 2 || cfg.rolls_per_chunk == 0 {
        return Err(Error::InvalidConfig(
            "die fixture needs at least 2 faces and 1 roll per chunk".into(),
        ));
    }
    if !(cfg.concentration > 0.0) || !cfg.concentration.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "concentration must be positive, got {}",
            cfg.concentration
        )));
    }
    Ok(())
}

/// Per-roll view: latent `Theta` (grid index) and one observable per roll,
/// `R1..R{2r}`.
pub fn die_fixture_per_roll(cfg: &DieFixtureConfig) -> Result<AgentModel> {
    validate_die(cfg)?;
    let rolls = 2 * cfg.rolls_per_chunk;
    let grid = die_grid(cfg.faces, cfg.grid_resolution);
    let cells = (cfg.faces as u128)
        .checked_pow(rolls as u32)
        .and_then(|c| c.checked_mul(grid.len() as u128))
        .unwrap_or(u128::MAX);
    require_cells(cells)?;
    let prior: Vec<f64> = grid
        .iter()
        .map(|th| th.iter().map(|p| p.powf(cfg.concentration - 1.0)).product())
        .collect();
    let mut vars = vec![VarSpec::new("Theta", grid.len())];
    let names: Vec<String> = (1..=rolls).map(|i| format!("R{i}")).collect();
    vars.extend(names.iter().map(|n| VarSpec::new(n.clone(), cfg.faces)));
    let joint = JointDistribution::from_fn(vars, |a| {
        let th = &grid[a[0]];
        prior[a[0]] * a[1..].iter().map(|&x| th[x]).product::<f64>()
    })?;
    AgentModel::new(joint, names, ["Theta"])
}

/// Chunked view: observables are the first and second half of the rolls.
pub fn die_fixture(cfg: &DieFixtureConfig) -> Result<AgentModel> {
    let per_roll = die_fixture_per_roll(cfg)?;
    let obs = per_roll.observables();
    let r = cfg.rolls_per_chunk;
    let part = Partition::new(obs[..r].to_vec(), obs[r..].to_vec())?;
    chunk_model(&per_roll, &part)
}

/// Two observables whose supports split into disjoint blocks, with the
/// generating block label.
#[derive(Debug, Clone)]
pub struct BlockInstance {
    pub joint: JointDistribution,
    /// Block of each value of `X1` and of `X2`.
    pub labels: [Vec<usize>; 2],
    pub num_blocks: usize,
}

/// Draws a block-structured joint over `X1`, `X2`: a block `λ`, then values
/// from that block's slice of each alphabet. Within a block the observables
/// are independent unless `within_block_dependence` is set.
pub fn block_structured<R: Rng + ?Sized>(
    rng: &mut R,
    max_blocks: usize,
    max_block_size: usize,
    within_block_dependence: bool,
) -> Result<BlockInstance> {
    if max_blocks == 0 || max_block_size == 0 {
        return Err(Error::InvalidConfig(
            "blocks and block sizes must be >= 1".into(),
        ));
    }
    let k = rng.random_range(1..=max_blocks);
    let sizes: Vec<[usize; 2]> = (0..k)
        .map(|_| {
            [
                rng.random_range(1..=max_block_size),
                rng.random_range(1..=max_block_size),
            ]
        })
        .collect();
    let mut labels: [Vec<usize>; 2] = Default::default();
    for (side, lab) in labels.iter_mut().enumerate() {
        *lab = sizes
            .iter()
            .enumerate()
            .flat_map(|(b, s)| std::iter::repeat_n(b, s[side]))
            .collect();
        lab.shuffle(rng);
    }
    // Position of each value within its block.
    let rank = |lab: &[usize]| -> Vec<usize> {
        let mut seen = vec![0; k];
        lab.iter()
            .map(|&b| {
                seen[b] += 1;
                seen[b] - 1
            })
            .collect()
    };
    let (r1, r2) = (rank(&labels[0]), rank(&labels[1]));
    let pl = flat_dirichlet(rng, k);
    let within: Vec<Vec<f64>> = sizes
        .iter()
        .map(|[s1, s2]| {
            if within_block_dependence {
                flat_dirichlet(rng, s1 * s2)
            } else {
                let (a, b) = (flat_dirichlet(rng, *s1), flat_dirichlet(rng, *s2));
                a.iter()
                    .flat_map(|x| b.iter().map(move |y| x * y))
                    .collect()
            }
        })
        .collect();
    let vars = vec![
        VarSpec::new("X1", labels[0].len()),
        VarSpec::new("X2", labels[1].len()),
    ];
    let joint = JointDistribution::from_fn(vars, |a| {
        let (b1, b2) = (labels[0][a[0]], labels[1][a[1]]);
        if b1 != b2 {
            return 0.0;
        }
        pl[b1] * within[b1][r1[a[0]] * sizes[b1][1] + r2[a[1]]]
    })?;
    Ok(BlockInstance {
        joint,
        labels,
        num_blocks: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::naturality::{mediation_error, naturality_report, redundancy_errors};

    #[test]
    fn config_validation() {
        assert!(CoinExampleConfig::new(3).is_err());
        assert!(CoinExampleConfig::new(0).is_err());
        assert_eq!(CoinExampleConfig::new(10).unwrap().median_threshold(), 5);
    }

    #[test]
    fn conditional_rows_normalize() {
        let cfg = CoinExampleConfig::new(40).unwrap();
        for row in coin_log_conditional(&cfg) {
            let s: f64 = row.iter().map(|l| l.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_is_flip_symmetric() {
        let cfg = CoinExampleConfig::new(100).unwrap();
        let lp = coin_log_conditional(&cfg);
        let n = cfg.n;
        for b in 0..=n {
            for a in 0..=n {
                assert!((lp[b][a] - lp[n - b][n - a]).abs() < 1e-9);
            }
        }
        // The tie N1 = n/2 goes to label 1, so flipping N2 swaps the labels
        // up to exactly the tie mass.
        let m = coin_median(&cfg);
        for b in 0..=n {
            let tie = lp[n - b][n / 2].exp();
            let d = m.label_probs[b][1] - m.label_probs[n - b][0];
            assert!((d - tie).abs() < 1e-12, "{b}");
        }
    }

    #[test]
    fn coin_model_matches_closed_form() {
        let cfg = CoinExampleConfig::new(20).unwrap();
        let m = coin_model(&cfg).unwrap();
        let red = redundancy_errors(&m).unwrap();
        assert_eq!(red[0], 0.0);
        assert!((red[1] - coin_median_entropy(&cfg)).abs() < 1e-12);
    }

    #[test]
    fn bias_check_matches_full_joint() {
        let cfg = CoinExampleConfig::new(6).unwrap();
        let j = coin_bias_joint(&cfg, 5).unwrap();
        let direct =
            crate::naturality::mediator_determines_redund(&j, &["N1", "N2"], &["Lambda"], &["M"])
                .unwrap();
        let closed = coin_bias_check(&cfg, 5).unwrap();
        assert!(direct.eps_mediation < 1e-12);
        assert!((direct.conclusion_bits - closed.conclusion_bits).abs() < 1e-12);
        for i in 0..2 {
            assert!((direct.eps_redundancy[i] - closed.eps_redundancy[i]).abs() < 1e-12);
        }
        assert!(closed.holds);
    }

    #[test]
    fn die_grid_shapes() {
        assert_eq!(die_grid(2, 1), vec![vec![0.25, 0.75], vec![0.75, 0.25]]);
        assert_eq!(die_grid(2, 8).len(), 9);
        assert_eq!(die_grid(3, 0), vec![vec![1.0 / 3.0; 3]]);
        for th in die_grid(4, 3) {
            assert!((th.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn smallest_die_fixture_mediates_exactly() {
        let cfg = DieFixtureConfig {
            rolls_per_chunk: 1,
            grid_resolution: 1,
            ..DieFixtureConfig::default()
        };
        let m = die_fixture(&cfg).unwrap();
        assert_eq!(m.joint().num_cells(), 8);
        assert!(mediation_error(&m).unwrap() < 1e-12);
    }

    #[test]
    fn chunking_sharpens_redundancy() {
        let cfg = DieFixtureConfig {
            rolls_per_chunk: 3,
            ..DieFixtureConfig::default()
        };
        let chunked = naturality_report(&die_fixture(&cfg).unwrap()).unwrap();
        let per_roll = naturality_report(&die_fixture_per_roll(&cfg).unwrap()).unwrap();
        assert!(chunked.eps_mediation_bits < 1e-12);
        assert!(per_roll.eps_mediation_bits < 1e-12);
        for (c, r) in chunked
            .eps_redundancy_bits
            .iter()
            .zip(&per_roll.eps_redundancy_bits)
        {
            assert!(c < r);
        }
    }

    #[test]
    fn point_mass_grid_gives_independent_rolls() {
        let cfg = DieFixtureConfig {
            grid_resolution: 0,
            faces: 3,
            ..DieFixtureConfig::default()
        };
        let rep = naturality_report(&die_fixture(&cfg).unwrap()).unwrap();
        assert!(rep.is_exact);
    }

    #[test]
    fn oversized_die_is_rejected() {
        let cfg = DieFixtureConfig {
            rolls_per_chunk: 6,
            faces: 6,
            ..DieFixtureConfig::default()
        };
        assert!(matches!(
            die_fixture(&cfg),
            Err(Error::TableTooLarge { .. })
        ));
    }

    #[test]
    fn block_instances_are_block_diagonal() {
        let mut rng = crate::random::instance_rng(5, 0);
        for _ in 0..20 {
            let b = block_structured(&mut rng, 4, 3, false).unwrap();
            for (a, p) in b.joint.cells() {
                assert!(p == 0.0 || b.labels[0][a[0]] == b.labels[1][a[1]]);
            }
        }
    }
}
