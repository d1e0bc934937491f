//! Skip-gram vectors over background queries; nearest neighbours by cosine.
//!
//!     cargo run --release --example word_embeddings

use nqac::features::{train_word_embeddings, Word2VecConfig};

mod common;

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let norm = |v: &[f32]| v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    dot / (norm(a) * norm(b)).max(1e-12)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let queries: Vec<String> = common::toy_split().background.into_iter().map(|r| r.query).collect();
    let table = train_word_embeddings(&queries, &Word2VecConfig { dim: 16, epochs: 30, ..Default::default() })?;
    println!("{} words, dim {}", table.len(), table.dim());
    for word in ["cheap", "recipe", "jobs", "weather"] {
        let Some(v) = table.get(word) else { continue };
        let mut near: Vec<(f64, &str)> = table.iter().filter(|(w, _)| *w != word).map(|(w, u)| (cosine(v, u), w)).collect();
        near.sort_by(|a, b| b.0.total_cmp(&a.0));
        let shown: Vec<String> = near.iter().take(4).map(|(c, w)| format!("{w} {c:.2}")).collect();
        println!("{word:>8}: {}", shown.join(", "));
    }
    Ok(())
}
