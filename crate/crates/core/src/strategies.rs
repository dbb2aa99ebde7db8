//! Query strategies.
//!
//! | token | strategy             | selects                                         |
//! |-------|----------------------|-------------------------------------------------|
//! | `pe`  | prediction entropy   | highest entropy of the predicted distribution   |
//! | `bt`  | breaking ties        | smallest gap between the top two probabilities  |
//! | `lc`  | least confidence     | lowest probability of the most likely class     |
//! | `ca`  | contrastive          | highest mean KL divergence from kNN predictions |
//! | `rs`  | random sampling      | uniform draws                                   |
//!
//! All top-k selection breaks ties by ascending instance index.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::ClassDistribution;
use crate::error::{Error, Result};
use crate::features::{NeighborIndex, SparseVector};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Pe,
    Bt,
    Lc,
    Ca,
    Rs,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::Pe, Strategy::Bt, Strategy::Lc, Strategy::Ca, Strategy::Rs];

    pub fn token(self) -> &'static str {
        match self {
            Strategy::Pe => "pe",
            Strategy::Bt => "bt",
            Strategy::Lc => "lc",
            Strategy::Ca => "ca",
            Strategy::Rs => "rs",
        }
    }

    /// Whether this strategy needs model predictions at query time.
    pub fn uses_model(self) -> bool {
        self != Strategy::Rs
    }

    pub fn direction(self) -> Direction {
        match self {
            Strategy::Bt => Direction::Minimize,
            _ => Direction::Maximize,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.token().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}; expected one of pe, bt, lc, ca, rs")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaConfig {
    pub num_neighbors: usize,
    pub epsilon: f64,
}

impl Default for CaConfig {
    fn default() -> Self {
        Self {
            num_neighbors: 10,
            epsilon: 1e-10,
        }
    }
}

impl CaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_neighbors == 0 {
            return Err(Error::Config("ca.num_neighbors must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1e-3) {
            return Err(Error::Config("ca.epsilon must be in (0, 1e-3)".into()));
        }
        Ok(())
    }
}

/// Natural-log entropy, `0 ln 0 = 0`.
pub fn entropy_score(d: &ClassDistribution) -> f64 {
    // Summing in sorted order makes the result exactly permutation invariant.
    let mut probs = d.probs().to_vec();
    probs.sort_by(|a, b| b.total_cmp(a));
    -probs.into_iter().filter(|&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

fn top_two(d: &ClassDistribution) -> (f64, f64) {
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &p in d.probs() {
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    (first, second)
}

/// Gap between the two largest probabilities.
pub fn margin_score(d: &ClassDistribution) -> Result<f64> {
    if d.num_classes() < 2 {
        return Err(Error::Config("margin needs at least two classes".into()));
    }
    let (first, second) = top_two(d);
    Ok(first - second)
}

pub fn least_confidence_score(d: &ClassDistribution) -> f64 {
    1.0 - top_two(d).0
}

/// `KL(p || q)` with both sides floored at `epsilon` inside the log ratio.
/// Terms with `p_j = 0` contribute nothing. Rounding below zero is clipped.
pub fn kl_divergence(p: &ClassDistribution, q: &ClassDistribution, epsilon: f64) -> Result<f64> {
    if p.num_classes() != q.num_classes() {
        return Err(Error::Config(format!(
            "KL between distributions of length {} and {}",
            p.num_classes(),
            q.num_classes()
        )));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::Config("KL epsilon must be positive".into()));
    }
    Ok(kl_unchecked(p.probs(), q.probs(), epsilon))
}

fn kl_unchecked(p: &[f64], q: &[f64], epsilon: f64) -> f64 {
    let sum: f64 = p
        .iter()
        .zip(q)
        .filter(|(&pj, _)| pj > 0.0)
        .map(|(&pj, &qj)| pj * (pj.max(epsilon) / qj.max(epsilon)).ln())
        .sum();
    sum.max(0.0)
}

/// Everything a strategy may look at: predictions and embeddings of the
/// unlabeled pool.
#[derive(Debug, Clone)]
pub struct QueryContext {
    /// Ascending pool indices of the unlabeled instances.
    pub unlabeled: Vec<usize>,
    /// Aligned with `unlabeled`.
    pub distributions: Vec<ClassDistribution>,
    /// Aligned with `unlabeled`; only CA reads these.
    pub embeddings: Vec<SparseVector>,
    pub rng_seed: u64,
}

impl QueryContext {
    pub fn validate(&self) -> Result<()> {
        if !self.unlabeled.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("unlabeled indices must be strictly ascending".into()));
        }
        if self.distributions.len() != self.unlabeled.len() {
            return Err(Error::Config(format!(
                "{} distributions for {} unlabeled instances",
                self.distributions.len(),
                self.unlabeled.len()
            )));
        }
        Ok(())
    }
}

/// Mean KL divergence from each instance's `m` nearest unlabeled neighbours:
/// `score(i) = 1/m * sum_j KL(P(neighbour_j) || P(i))`.
pub fn contrastive_scores(ctx: &QueryContext, cfg: &CaConfig) -> Result<BTreeMap<usize, f64>> {
    cfg.validate()?;
    ctx.validate()?;
    let n = ctx.unlabeled.len();
    if ctx.embeddings.len() != n {
        return Err(Error::Config(format!(
            "{} embeddings for {n} unlabeled instances",
            ctx.embeddings.len()
        )));
    }
    let m = cfg.num_neighbors;
    if n < m + 1 {
        return Err(Error::InsufficientPool {
            requested: m + 1,
            available: n,
        });
    }
    // Local positions are ordered like the pool indices, so the index
    // tie-break carries over unchanged.
    let local: Vec<usize> = (0..n).collect();
    let index = NeighborIndex::new(&ctx.embeddings, &local);
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let neighbors = index.query(i, m)?;
            let own = ctx.distributions[i].probs();
            let total: f64 = neighbors
                .iter()
                .map(|&j| kl_unchecked(ctx.distributions[j].probs(), own, cfg.epsilon))
                .sum();
            Ok(total / m as f64)
        })
        .collect::<Result<_>>()?;
    Ok(ctx.unlabeled.iter().copied().zip(scores).collect())
}

/// Per-instance scores for the distribution-only strategies.
pub fn uncertainty_scores(strategy: Strategy, ctx: &QueryContext) -> Result<BTreeMap<usize, f64>> {
    ctx.validate()?;
    let score = |d: &ClassDistribution| -> Result<f64> {
        match strategy {
            Strategy::Pe => Ok(entropy_score(d)),
            Strategy::Bt => margin_score(d),
            Strategy::Lc => Ok(least_confidence_score(d)),
            other => Err(Error::Config(format!("{other} is not an uncertainty strategy"))),
        }
    };
    ctx.unlabeled
        .iter()
        .zip(&ctx.distributions)
        .map(|(&i, d)| Ok((i, score(d)?)))
        .collect()
}

fn rank(direction: Direction) -> impl Fn(&(usize, f64), &(usize, f64)) -> Ordering {
    move |a, b| {
        let by_score = match direction {
            Direction::Maximize => b.1.total_cmp(&a.1),
            Direction::Minimize => a.1.total_cmp(&b.1),
        };
        by_score.then(a.0.cmp(&b.0))
    }
}

/// The `k` best indices, best first.
pub fn select_batch(scores: &BTreeMap<usize, f64>, k: usize, direction: Direction) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::InsufficientPool {
            requested: k,
            available: scores.len(),
        });
    }
    if let Some((i, s)) = scores.iter().find(|(_, s)| s.is_nan()) {
        return Err(Error::Config(format!("score for instance {i} is NaN ({s})")));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut entries: Vec<(usize, f64)> = scores.iter().map(|(&i, &s)| (i, s)).collect();
    let cmp = rank(direction);
    if entries.len() > k {
        entries.select_nth_unstable_by(k - 1, &cmp);
        entries.truncate(k);
    }
    entries.sort_by(&cmp);
    Ok(entries.into_iter().map(|(i, _)| i).collect())
}

/// `k` distinct indices drawn uniformly without replacement.
pub fn random_batch(unlabeled: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > unlabeled.len() {
        return Err(Error::InsufficientPool {
            requested: k,
            available: unlabeled.len(),
        });
    }
    let mut rng = seed::rng(seed);
    Ok(index::sample(&mut rng, unlabeled.len(), k)
        .into_iter()
        .map(|i| unlabeled[i])
        .collect())
}

/// Runs `strategy` on a prepared context and returns `k` indices.
pub fn query(strategy: Strategy, ctx: &QueryContext, k: usize, ca: &CaConfig) -> Result<Vec<usize>> {
    match strategy {
        Strategy::Rs => random_batch(&ctx.unlabeled, k, ctx.rng_seed),
        Strategy::Ca => select_batch(&contrastive_scores(ctx, ca)?, k, Direction::Maximize),
        s => select_batch(&uncertainty_scores(s, ctx)?, k, s.direction()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, prop_oneof, proptest, Just};
    use proptest::strategy::Strategy as _;

    fn dist(p: &[f64]) -> ClassDistribution {
        ClassDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy_score(&dist(&[1.0, 0.0, 0.0])), 0.0);
        assert!((entropy_score(&dist(&[0.25; 4])) - 4f64.ln()).abs() < 1e-9);
        let direct = -(0.7f64 * 0.7f64.ln() + 0.2 * 0.2f64.ln() + 0.1 * 0.1f64.ln());
        let e = entropy_score(&dist(&[0.7, 0.2, 0.1]));
        assert!((e - direct).abs() < 1e-9);
        assert!((e - 0.8018).abs() < 1e-4);
    }

    #[test]
    fn margin_examples() {
        assert_eq!(margin_score(&dist(&[0.5, 0.5])).unwrap(), 0.0);
        assert_eq!(margin_score(&dist(&[0.0, 1.0, 0.0])).unwrap(), 1.0);
        assert!((margin_score(&dist(&[0.7, 0.2, 0.1])).unwrap() - 0.5).abs() < 1e-9);
        assert!(margin_score(&dist(&[1.0])).is_err());
    }

    #[test]
    fn least_confidence_examples() {
        assert_eq!(least_confidence_score(&dist(&[0.0, 1.0])), 0.0);
        assert!((least_confidence_score(&dist(&[0.25; 4])) - 0.75).abs() < 1e-9);
        assert!((least_confidence_score(&dist(&[0.7, 0.2, 0.1])) - 0.3).abs() < 1e-9);
    }

    #[test]
    fn kl_examples() {
        let p = dist(&[0.3, 0.7]);
        assert_eq!(kl_divergence(&p, &p, 1e-10).unwrap(), 0.0);
        let one_hot = dist(&[1.0, 0.0]);
        let half = dist(&[0.5, 0.5]);
        assert!((kl_divergence(&one_hot, &half, 1e-10).unwrap() - 2f64.ln()).abs() < 1e-8);
        let expected = 0.5 * (0.5f64).ln() + 0.5 * (0.5f64 / 1e-10).ln();
        let got = kl_divergence(&half, &one_hot, 1e-10).unwrap();
        assert!((got - expected).abs() < 1e-8);
        assert!((got - 10.82).abs() < 0.01);
        assert!(kl_divergence(&half, &dist(&[0.2, 0.3, 0.5]), 1e-10).is_err());
    }

    #[test]
    fn select_batch_tie_break() {
        let scores: BTreeMap<usize, f64> = [(0, 0.1), (1, 0.9), (2, 0.9)].into_iter().collect();
        assert_eq!(select_batch(&scores, 2, Direction::Maximize).unwrap(), vec![1, 2]);
        assert_eq!(select_batch(&scores, 3, Direction::Maximize).unwrap(), vec![1, 2, 0]);
        assert_eq!(select_batch(&scores, 1, Direction::Minimize).unwrap(), vec![0]);
        assert!(select_batch(&scores, 4, Direction::Maximize).is_err());
    }

    #[test]
    fn random_batch_exhaustive_and_deterministic() {
        let pool: Vec<usize> = (10..30).collect();
        let mut all = random_batch(&pool, 20, 5).unwrap();
        assert_eq!(all, random_batch(&pool, 20, 5).unwrap());
        all.sort_unstable();
        assert_eq!(all, pool);
        assert!(random_batch(&pool, 21, 5).is_err());
    }

    #[test]
    fn contrastive_identical_distributions_score_zero() {
        let n = 8;
        let ctx = QueryContext {
            unlabeled: (0..n).collect(),
            distributions: vec![dist(&[0.6, 0.4]); n],
            embeddings: (0..n)
                .map(|i| SparseVector::from_pairs([(i as u32 % 3, 1.0), (7, 0.5)]).unwrap())
                .collect(),
            rng_seed: 0,
        };
        let scores = contrastive_scores(
            &ctx,
            &CaConfig {
                num_neighbors: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(scores.values().all(|&s| s == 0.0));
    }

    #[test]
    fn contrastive_pool_of_m_plus_one() {
        // With m + 1 instances every instance's neighbours are all the others.
        let ds = [dist(&[0.9, 0.1]), dist(&[0.5, 0.5]), dist(&[0.5, 0.5])];
        let ctx = QueryContext {
            unlabeled: vec![3, 5, 9],
            distributions: ds.to_vec(),
            embeddings: vec![SparseVector::from_pairs([(0, 1.0)]).unwrap(); 3],
            rng_seed: 0,
        };
        let cfg = CaConfig {
            num_neighbors: 2,
            ..Default::default()
        };
        let scores = contrastive_scores(&ctx, &cfg).unwrap();
        let kl = |p: &[f64], q: &[f64]| -> f64 { p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum() };
        let odd = [0.9, 0.1];
        let even = [0.5, 0.5];
        assert!((scores[&3] - kl(&even, &odd)).abs() < 1e-12);
        assert!((scores[&5] - kl(&odd, &even) / 2.0).abs() < 1e-12);
        assert!((scores[&9] - kl(&odd, &even) / 2.0).abs() < 1e-12);
        assert!(scores.values().all(|&s| s > 0.0));

        let too_small = QueryContext {
            unlabeled: vec![3, 5],
            distributions: ds[..2].to_vec(),
            embeddings: ctx.embeddings[..2].to_vec(),
            rng_seed: 0,
        };
        assert!(contrastive_scores(&too_small, &cfg).is_err());
    }

    #[test]
    fn strategy_tokens_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.token().parse::<Strategy>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.token()));
        }
        assert!("xx".parse::<Strategy>().is_err());
    }

    fn arb_distribution(c: usize) -> impl proptest::strategy::Strategy<Value = ClassDistribution> {
        prop::collection::vec(0.0f64..1.0, c).prop_filter_map("non-zero mass", |w| {
            let total: f64 = w.iter().sum();
            (total > 1e-6)
                .then(|| ClassDistribution::from_logits(&w.iter().map(|x| x / total * 8.0).collect::<Vec<_>>()))
        })
    }

    proptest! {
        #[test]
        fn scorer_bounds(d in (2usize..7).prop_flat_map(arb_distribution)) {
            let c = d.num_classes() as f64;
            let e = entropy_score(&d);
            prop_assert!(e >= 0.0 && e <= c.ln() + 1e-12);
            let m = margin_score(&d).unwrap();
            prop_assert!((0.0..=1.0).contains(&m));
            let lc = least_confidence_score(&d);
            prop_assert!(lc >= 0.0 && lc <= 1.0 - 1.0 / c + 1e-12);
        }

        #[test]
        fn scorers_are_permutation_invariant(d in (2usize..7).prop_flat_map(arb_distribution), rot in 0usize..7) {
            let mut p = d.probs().to_vec();
            let len = p.len();
            p.rotate_left(rot % len);
            p.reverse();
            let shuffled = ClassDistribution::new(p).unwrap();
            prop_assert_eq!(entropy_score(&d), entropy_score(&shuffled));
            prop_assert_eq!(margin_score(&d).unwrap(), margin_score(&shuffled).unwrap());
            prop_assert_eq!(least_confidence_score(&d), least_confidence_score(&shuffled));
        }

        #[test]
        fn kl_is_non_negative(p in arb_distribution(4), q in arb_distribution(4)) {
            prop_assert!(kl_divergence(&p, &q, 1e-10).unwrap() >= -1e-12);
        }

        #[test]
        fn select_batch_matches_full_sort(
            scores in prop::collection::btree_map(0usize..400, prop_oneof![Just(0.5), -1.0f64..1.0], 1..120),
            k in 0usize..120,
            maximize in any::<bool>(),
        ) {
            let k = k.min(scores.len());
            let direction = if maximize { Direction::Maximize } else { Direction::Minimize };
            let mut oracle: Vec<(usize, f64)> = scores.iter().map(|(&i, &s)| (i, s)).collect();
            oracle.sort_by(|a, b| {
                let o = a.1.partial_cmp(&b.1).unwrap();
                (if maximize { o.reverse() } else { o }).then(a.0.cmp(&b.0))
            });
            let expected: Vec<usize> = oracle.into_iter().take(k).map(|(i, _)| i).collect();
            prop_assert_eq!(select_batch(&scores, k, direction).unwrap(), expected);
        }
    }
}
