//! Parse the toy log, then split it both ways.
//!
//!     cargo run --example ingest_and_split

use nqac::corpus::{self, BackgroundFilter, LogFormat, SplitPolicy};

mod common;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let file = std::fs::File::open(common::TOY_LOG)?;
    let (records, report) = corpus::parse_log(std::io::BufReader::new(file), &LogFormat::default())?;
    println!("{report:?}");
    println!("first record: {:?}", records[0]);

    let filter = BackgroundFilter { min_count: 2, max_len: 100 };
    let fractions = [0.7, 0.1, 0.1, 0.1];
    for policy in [SplitPolicy::Random { fractions, seed: 1 }, SplitPolicy::Chronological { fractions }] {
        let split = corpus::split_dataset(&records, &policy, filter)?;
        println!(
            "{policy:?}: records {:?}, prefixes train/val/test {}/{}/{}, background queries {}",
            split.sizes,
            split.train.len(),
            split.validation.len(),
            split.test.len(),
            split.background_counts.len()
        );
    }

    let rec = &records[0];
    for s in corpus::extract_prefixes(rec) {
        println!("{:?} -> {:?}", s.prefix, s.target);
    }
    Ok(())
}
