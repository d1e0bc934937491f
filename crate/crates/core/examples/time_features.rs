//! The cyclic time encoding at a few instants.
//!
//!     cargo run --example time_features

use chrono::NaiveDateTime;
use nqac::features::encode_time;

fn main() {
    for s in ["2006-03-06 00:00:00", "2006-03-06 06:00:00", "2006-03-06 12:00:00", "2006-03-12 23:59:59", "2006-03-13 00:00:00"] {
        let t = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").unwrap();
        let [a, b, c, d] = encode_time(&t).to_array();
        println!("{s} ({})  day ({a:+.4}, {b:+.4})  week ({c:+.4}, {d:+.4})", t.format("%a"));
    }
}
