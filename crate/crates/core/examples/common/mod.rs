#![allow(dead_code)]

use nqac::corpus::{self, BackgroundFilter, DatasetSplit, LogFormat, QueryRecord, SplitPolicy};

pub const TOY_LOG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy_log.tsv");

pub fn toy_records() -> Vec<QueryRecord> {
    let file = std::fs::File::open(TOY_LOG).expect("toy log");
    corpus::parse_log(std::io::BufReader::new(file), &LogFormat::default()).expect("parse").0
}

pub fn toy_split() -> DatasetSplit {
    let policy = SplitPolicy::Random { fractions: [0.7, 0.1, 0.1, 0.1], seed: 1 };
    corpus::split_dataset(&toy_records(), &policy, BackgroundFilter { min_count: 2, max_len: 100 }).expect("split")
}
