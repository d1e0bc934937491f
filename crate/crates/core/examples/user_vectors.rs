//! User vectors from query histories, and who each word points to.
//!
//!     cargo run --release --example user_vectors

use nqac::corpus;
use nqac::features::{train_user_vectors, UserTrainConfig};

mod common;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let split = common::toy_split();
    let histories = corpus::user_histories(&split.background, None);
    let trained = train_user_vectors(&histories, &UserTrainConfig { dim: 8, epochs: 100, ..Default::default() })?;
    let obj = &trained.objective;
    println!("{} users; objective {:.4} -> {:.4}", trained.table.len(), obj[0], obj[obj.len() - 1]);
    for word in ["recipe", "flights", "jobs", "games", "weather"] {
        let mut post = trained.posterior(word);
        post.sort_by(|a, b| b.1.total_cmp(&a.1));
        let top: Vec<String> = post.iter().take(3).map(|(u, p)| format!("{u} {p:.2}")).collect();
        println!("{word:>8}: {}", top.join(", "));
    }
    Ok(())
}
