//! Most-popular completion from a counted trie, with a save/load round trip.
//!
//!     cargo run --example mpc_trie

use nqac::mpc::CountedTrie;

mod common;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let split = common::toy_split();
    let trie = CountedTrie::build(&split.background_counts);
    println!("{} queries, {} nodes, total count {}", split.background_counts.len(), trie.node_count(), trie.total());

    for prefix in ["c", "cheap ", "hotel d", "free o", "zebra"] {
        println!("{prefix:?} seen={}", trie.is_seen(prefix));
        for (q, c) in trie.complete(prefix, 3) {
            println!("    {c:>4}  {q}");
        }
    }

    let path = std::env::temp_dir().join("nqac_example_trie.bin");
    trie.save(&path)?;
    let loaded = CountedTrie::load(&path)?;
    println!("reloaded from {}: identical = {}", path.display(), loaded == trie);
    Ok(())
}
