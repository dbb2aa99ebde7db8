//! Scores a handful of predicted distributions with each uncertainty measure
//! and picks a batch of two.

use std::collections::BTreeMap;

use al_core::classifier::ClassDistribution;
use al_core::strategies::{entropy_score, kl_divergence, least_confidence_score, margin_score, select_batch, Strategy};

fn main() -> al_core::Result<()> {
    let predictions = [
        vec![0.98, 0.01, 0.01],
        vec![0.40, 0.35, 0.25],
        vec![0.50, 0.49, 0.01],
        vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        vec![0.70, 0.20, 0.10],
    ];
    let dists = predictions
        .iter()
        .map(|p| ClassDistribution::new(p.clone()))
        .collect::<al_core::Result<Vec<_>>>()?;

    println!("{:>2}  {:>8}  {:>8}  {:>8}", "id", "entropy", "margin", "1-pmax");
    for (id, d) in dists.iter().enumerate() {
        println!(
            "{id:>2}  {:>8.4}  {:>8.4}  {:>8.4}",
            entropy_score(d),
            margin_score(d)?,
            least_confidence_score(d)
        );
    }

    for strategy in [Strategy::Pe, Strategy::Bt, Strategy::Lc] {
        let scores: BTreeMap<usize, f64> = dists
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let s = match strategy {
                    Strategy::Pe => entropy_score(d),
                    Strategy::Bt => margin_score(d).expect("three classes"),
                    _ => least_confidence_score(d),
                };
                (i, s)
            })
            .collect();
        let batch = select_batch(&scores, 2, strategy.direction())?;
        println!("{strategy}: query {batch:?}");
    }

    let confident = ClassDistribution::new(vec![1.0, 0.0])?;
    let unsure = ClassDistribution::new(vec![0.5, 0.5])?;
    println!(
        "KL(confident ‖ unsure) = {:.4}",
        kl_divergence(&confident, &unsure, 1e-10)?
    );
    println!(
        "KL(unsure ‖ confident) = {:.4}",
        kl_divergence(&unsure, &confident, 1e-10)?
    );
    Ok(())
}
