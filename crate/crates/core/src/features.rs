//! TF-IDF featurization and cosine nearest-neighbour search.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VectorizerConfig {
    pub lowercase: bool,
    /// Texts are truncated to this many tokens before counting.
    pub max_tokens: usize,
    pub min_df: usize,
}

impl Default for VectorizerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            max_tokens: 60,
            min_df: 1,
        }
    }
}

/// Splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str, config: &VectorizerConfig) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .take(config.max_tokens)
        .map(|t| {
            if config.lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect()
}

/// Sparse vector with strictly increasing dimensions and no explicit zeros.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a vector from unordered pairs. Duplicate dimensions are summed,
    /// zeros dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (dim, w) in pairs {
            if !w.is_finite() {
                return Err(Error::Config(format!("non-finite weight at dimension {dim}")));
            }
            *acc.entry(dim).or_insert(0.0) += w;
        }
        Ok(Self {
            entries: acc.into_iter().filter(|&(_, w)| w != 0.0).collect(),
        })
    }

    pub fn from_dense(values: &[f64]) -> Result<Self> {
        Self::from_pairs(values.iter().enumerate().map(|(i, &w)| (i as u32, w)))
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0;
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

/// Cosine similarity; 0 when either side is empty.
pub fn cosine_similarity(a: &SparseVector, b: &SparseVector) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (a.dot(b) / denom).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vectorizer {
    vocabulary: HashMap<String, u32>,
    idf: Vec<f64>,
    config: VectorizerConfig,
}

impl Vectorizer {
    /// Fits vocabulary and smoothed idf weights,
    /// `idf(d) = ln((1 + N) / (1 + df(d))) + 1`.
    pub fn fit<S: AsRef<str>>(texts: &[S], config: VectorizerConfig) -> Result<Self> {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            let unique: HashSet<String> = tokenize(text.as_ref(), &config).into_iter().collect();
            for token in unique {
                *df.entry(token).or_insert(0) += 1;
            }
        }
        let n = texts.len() as f64;
        let mut vocabulary = HashMap::new();
        let mut idf = Vec::new();
        // BTreeMap iteration gives a stable, alphabetical dimension order.
        for (token, count) in df {
            if count < config.min_df.max(1) {
                continue;
            }
            vocabulary.insert(token, idf.len() as u32);
            idf.push(((1.0 + n) / (1.0 + count as f64)).ln() + 1.0);
        }
        if idf.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        Ok(Self {
            vocabulary,
            idf,
            config,
        })
    }

    pub fn dimension(&self) -> usize {
        self.idf.len()
    }

    pub fn config(&self) -> &VectorizerConfig {
        &self.config
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.vocabulary.get(token).copied()
    }

    pub fn idf(&self, dim: u32) -> Option<f64> {
        self.idf.get(dim as usize).copied()
    }

    /// L2-normalized tf-idf vector. Out-of-vocabulary tokens are ignored.
    pub fn vectorize(&self, text: &str) -> SparseVector {
        let mut tf: BTreeMap<u32, f64> = BTreeMap::new();
        for token in tokenize(text, &self.config) {
            if let Some(&dim) = self.vocabulary.get(&token) {
                *tf.entry(dim).or_insert(0.0) += 1.0;
            }
        }
        let mut entries: Vec<(u32, f64)> = tf
            .into_iter()
            .map(|(dim, count)| (dim, count * self.idf[dim as usize]))
            .collect();
        let norm = entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for entry in &mut entries {
                entry.1 /= norm;
            }
        }
        SparseVector { entries }
    }
}

fn by_similarity(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

fn top_m(mut scored: Vec<(f64, usize)>, m: usize) -> Vec<usize> {
    if scored.len() > m {
        scored.select_nth_unstable_by(m - 1, by_similarity);
        scored.truncate(m);
    }
    scored.sort_by(by_similarity);
    scored.into_iter().map(|(_, i)| i).collect()
}

fn check_neighbor_count(available: usize, m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::Config("number of neighbours must be at least 1".into()));
    }
    if available < m {
        return Err(Error::InsufficientPool {
            requested: m,
            available,
        });
    }
    Ok(())
}

/// The `m` candidates most cosine-similar to `vectors[query]`, excluding the
/// query itself. Ties go to the smaller index; output is best first.
pub fn knn(query: usize, vectors: &[SparseVector], candidates: &[usize], m: usize) -> Result<Vec<usize>> {
    let q = vectors.get(query).ok_or(Error::InsufficientPool {
        requested: query + 1,
        available: vectors.len(),
    })?;
    let mut seen = HashSet::with_capacity(candidates.len());
    let scored: Vec<(f64, usize)> = candidates
        .iter()
        .copied()
        .filter(|&c| c != query && seen.insert(c))
        .map(|c| (cosine_similarity(q, &vectors[c]), c))
        .collect();
    check_neighbor_count(scored.len(), m)?;
    Ok(top_m(scored, m))
}

/// Inverted index over a fixed candidate set, for running many kNN queries
/// against the same pool.
///
/// Dot products accumulate in ascending dimension order, so similarities are
/// bit-identical to [`cosine_similarity`].
pub struct NeighborIndex<'a> {
    vectors: &'a [SparseVector],
    candidates: Vec<usize>,
    norms: Vec<f64>,
    postings: HashMap<u32, Vec<(usize, f64)>>,
}

impl<'a> NeighborIndex<'a> {
    pub fn new(vectors: &'a [SparseVector], candidates: &[usize]) -> Self {
        let mut unique = candidates.to_vec();
        unique.sort_unstable();
        unique.dedup();
        let mut postings: HashMap<u32, Vec<(usize, f64)>> = HashMap::new();
        let mut norms = Vec::with_capacity(unique.len());
        for (slot, &c) in unique.iter().enumerate() {
            let v = &vectors[c];
            norms.push(v.norm());
            for &(dim, w) in v.entries() {
                postings.entry(dim).or_default().push((slot, w));
            }
        }
        Self {
            vectors,
            candidates: unique,
            norms,
            postings,
        }
    }

    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    pub fn query(&self, query: usize, m: usize) -> Result<Vec<usize>> {
        let excluded = usize::from(self.candidates.binary_search(&query).is_ok());
        check_neighbor_count(self.candidates.len() - excluded, m)?;
        let q = &self.vectors[query];
        let q_norm = q.norm();
        let mut dots = vec![0.0f64; self.candidates.len()];
        for &(dim, wq) in q.entries() {
            if let Some(list) = self.postings.get(&dim) {
                for &(slot, w) in list {
                    dots[slot] += wq * w;
                }
            }
        }
        let scored: Vec<(f64, usize)> = self
            .candidates
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c != query)
            .map(|(slot, &c)| {
                let denom = q_norm * self.norms[slot];
                let sim = if denom == 0.0 {
                    0.0
                } else {
                    (dots[slot] / denom).clamp(-1.0, 1.0)
                };
                (sim, c)
            })
            .collect();
        Ok(top_m(scored, m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vec_of(pairs: &[(u32, f64)]) -> SparseVector {
        SparseVector::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn fit_counts_document_frequency() {
        let v = Vectorizer::fit(&["a b", "a"], VectorizerConfig::default()).unwrap();
        assert_eq!(v.dimension(), 2);
        let a = v.index_of("a").unwrap();
        let b = v.index_of("b").unwrap();
        // df(a) = 2 = N, so idf = 1; df(b) = 1, idf = ln(3/2) + 1.
        assert!((v.idf(a).unwrap() - 1.0).abs() < 1e-15);
        assert!((v.idf(b).unwrap() - ((3.0f64 / 2.0).ln() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn fit_rejects_all_empty() {
        assert!(matches!(
            Vectorizer::fit(&["", "  ", "!!"], VectorizerConfig::default()),
            Err(Error::EmptyVocabulary)
        ));
    }

    #[test]
    fn min_df_prunes_rare_tokens() {
        let cfg = VectorizerConfig {
            min_df: 2,
            ..Default::default()
        };
        let v = Vectorizer::fit(&["a b", "a c"], cfg).unwrap();
        assert_eq!(v.dimension(), 1);
        assert!(v.index_of("b").is_none());
    }

    #[test]
    fn tokenizer_lowercases_and_truncates() {
        let cfg = VectorizerConfig {
            max_tokens: 3,
            ..Default::default()
        };
        assert_eq!(tokenize("Hello, WORLD!! foo-bar", &cfg), vec!["hello", "world", "foo"]);
    }

    #[test]
    fn vectorize_weights_and_normalizes() {
        // Both tokens appear in every document, so idf = (1, 1).
        let v = Vectorizer::fit(&["a b", "b a"], VectorizerConfig::default()).unwrap();
        let x = v.vectorize("a a b");
        let a = v.index_of("a").unwrap();
        let weight = |d| x.entries().iter().find(|e| e.0 == d).unwrap().1;
        assert!((weight(a) - 2.0 / 5f64.sqrt()).abs() < 1e-12);
        assert!((weight(v.index_of("b").unwrap()) - 1.0 / 5f64.sqrt()).abs() < 1e-12);
        assert!((weight(a) - 0.8944).abs() < 1e-4);
        assert!((x.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn oov_text_is_empty() {
        let v = Vectorizer::fit(&["a b"], VectorizerConfig::default()).unwrap();
        assert!(v.vectorize("zzz qqq").is_empty());
        assert!(v.vectorize("").is_empty());
    }

    #[test]
    fn cosine_examples() {
        let a = vec_of(&[(0, 1.0)]);
        let b = vec_of(&[(0, 0.6), (1, 0.8)]);
        assert!((cosine_similarity(&a, &b) - 0.6).abs() < 1e-15);
        assert_eq!(cosine_similarity(&a, &vec_of(&[(3, 2.0)])), 0.0);
        assert_eq!(cosine_similarity(&a, &SparseVector::empty()), 0.0);
        assert!((cosine_similarity(&b, &b) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn from_pairs_sorts_merges_and_drops_zeros() {
        let v = vec_of(&[(5, 1.0), (2, 0.5), (5, 1.0), (7, 0.0)]);
        assert_eq!(v.entries(), &[(2, 0.5), (5, 2.0)]);
    }

    #[test]
    fn knn_breaks_ties_by_index() {
        let same = vec_of(&[(0, 1.0)]);
        let vectors = vec![same.clone(), same.clone(), same.clone(), same];
        assert_eq!(knn(3, &vectors, &[0, 1, 2, 3], 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn knn_finds_single_overlapping_candidate() {
        let vectors = vec![
            vec_of(&[(0, 1.0)]),
            vec_of(&[(1, 1.0)]),
            vec_of(&[(0, 0.3), (2, 0.9)]),
            vec_of(&[(3, 1.0)]),
        ];
        assert_eq!(knn(0, &vectors, &[1, 2, 3], 1).unwrap(), vec![2]);
    }

    #[test]
    fn knn_needs_enough_candidates() {
        let vectors = vec![vec_of(&[(0, 1.0)]); 3];
        assert!(knn(0, &vectors, &[0, 1, 2], 3).is_err());
        assert!(knn(0, &vectors, &[0, 1, 2], 0).is_err());
    }

    fn brute_force(query: usize, vectors: &[SparseVector], candidates: &[usize], m: usize) -> Vec<usize> {
        // Dense cosine computed independently of the sparse merge.
        let dim = vectors
            .iter()
            .flat_map(|v| v.entries().iter().map(|e| e.0 as usize + 1))
            .max()
            .unwrap_or(0);
        let dense = |v: &SparseVector| {
            let mut out = vec![0.0; dim];
            for &(d, w) in v.entries() {
                out[d as usize] = w;
            }
            out
        };
        let q = dense(&vectors[query]);
        let qn = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut all: Vec<(f64, usize)> = candidates
            .iter()
            .filter(|&&c| c != query)
            .map(|&c| {
                let x = dense(&vectors[c]);
                let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let dot: f64 = q.iter().zip(&x).map(|(a, b)| a * b).sum();
                let sim = if qn * xn == 0.0 { 0.0 } else { dot / (qn * xn) };
                (sim.clamp(-1.0, 1.0), c)
            })
            .collect();
        all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        all.into_iter().take(m).map(|(_, c)| c).collect()
    }

    fn arb_vectors(max_n: usize) -> impl Strategy<Value = Vec<SparseVector>> {
        prop::collection::vec(
            prop::collection::vec((0u32..12, prop_oneof![Just(1.0), 0.01f64..3.0]), 0..6),
            2..max_n,
        )
        .prop_map(|vs| vs.into_iter().map(|p| SparseVector::from_pairs(p).unwrap()).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn knn_matches_full_sort(vectors in arb_vectors(500), m in 1usize..8, q in 0usize..500) {
            let n = vectors.len();
            let query = q % n;
            let candidates: Vec<usize> = (0..n).collect();
            let m = m.min(n - 1);
            let got = knn(query, &vectors, &candidates, m).unwrap();
            prop_assert_eq!(&got, &brute_force(query, &vectors, &candidates, m));
            prop_assert!(!got.contains(&query));
            let index = NeighborIndex::new(&vectors, &candidates);
            prop_assert_eq!(index.query(query, m).unwrap(), got);
        }

        #[test]
        fn vectorize_is_unit_norm(texts in prop::collection::vec("[a-e ]{0,12}", 1..10), probe in "[a-g ]{0,12}") {
            if let Ok(v) = Vectorizer::fit(&texts, VectorizerConfig::default()) {
                let x = v.vectorize(&probe);
                prop_assert!(x.is_empty() || (x.norm() - 1.0).abs() < 1e-9);
                prop_assert_eq!(x, v.vectorize(&probe));
            }
        }
    }
}
