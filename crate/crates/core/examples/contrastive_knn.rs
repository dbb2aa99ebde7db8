//! TF-IDF vectors, cosine neighbours, and contrastive scores on a tiny pool.
//!
//! Two near-duplicate reviews get different predictions, so each is the
//! other's "contrastive" neighbour and both score high.

use al_core::classifier::ClassDistribution;
use al_core::features::{cosine_similarity, knn, Vectorizer, VectorizerConfig};
use al_core::strategies::{contrastive_scores, select_batch, CaConfig, QueryContext, Strategy};

fn main() -> al_core::Result<()> {
    let texts = [
        "the battery lasts all day, great phone",
        "the battery lasts all day, terrible phone",
        "screen cracked after a week",
        "screen cracked in a week, awful",
        "fast shipping and a great price",
        "great price, shipping was fast",
    ];
    let vectorizer = Vectorizer::fit(&texts, VectorizerConfig::default())?;
    let vectors: Vec<_> = texts.iter().map(|t| vectorizer.vectorize(t)).collect();
    println!("vocabulary size: {}", vectorizer.dimension());
    println!("cos(0, 1) = {:.3}", cosine_similarity(&vectors[0], &vectors[1]));

    let pool: Vec<usize> = (0..texts.len()).collect();
    for i in 0..texts.len() {
        println!("nearest to {i}: {:?}", knn(i, &vectors, &pool, 2)?);
    }

    // P(positive), P(negative) from some model.
    let predictions = [
        [0.9, 0.1],
        [0.2, 0.8],
        [0.1, 0.9],
        [0.15, 0.85],
        [0.8, 0.2],
        [0.85, 0.15],
    ];
    let ctx = QueryContext {
        unlabeled: pool,
        distributions: predictions
            .iter()
            .map(|p| ClassDistribution::new(p.to_vec()))
            .collect::<al_core::Result<_>>()?,
        embeddings: vectors,
        rng_seed: 0,
    };
    let cfg = CaConfig {
        num_neighbors: 1,
        ..CaConfig::default()
    };
    let scores = contrastive_scores(&ctx, &cfg)?;
    for (id, s) in &scores {
        println!("CA score {id}: {s:.4}");
    }
    println!("query: {:?}", select_batch(&scores, 2, Strategy::Ca.direction())?);
    Ok(())
}
