//! Voting over non-numeric replica outputs with a user-supplied metric.
//!
//! The voters never interpret input bytes themselves; any distance function
//! over the output space works. Here three replicas emit fixed-width status
//! records and the metric counts differing bytes, so ε = 1 makes blocks out
//! of byte-identical records while the median voter tolerates near misses.
//!
//! ```bash
//! cargo run --example custom_metric
//! ```

use voting_farm::algorithms::{self, VoteInputs};
use voting_farm::metric;

fn main() {
    // fixed-width status records from five replicas; two are slightly off
    let records: Vec<Vec<u8>> = [
        b"PUMP:OK TEMP:041".to_vec(),
        b"PUMP:OK TEMP:041".to_vec(),
        b"PUMP:OK TEMP:042".to_vec(),
        b"PUMP:?? TEMP:999".to_vec(),
        b"PUMP:OK TEMP:041".to_vec(),
    ]
    .to_vec();

    // hamming distance over equal-length byte strings
    let hamming = metric::from_fn(|a, b| {
        a.iter().zip(b).filter(|(x, y)| x != y).count() as f64
    });

    let inputs = VoteInputs::new(&records, &hamming).epsilon(1.0);
    let majority = algorithms::majority(&inputs).expect("equal-length records");
    println!(
        "majority (ε=1, i.e. byte-identical): {}",
        String::from_utf8_lossy(&majority.vote)
    );

    // with ε = 4 a one-digit drift still counts as agreement
    let inputs = VoteInputs::new(&records, &hamming).epsilon(4.0);
    let majority = algorithms::majority(&inputs).expect("equal-length records");
    println!(
        "majority (ε=4, one digit may drift):  {}",
        String::from_utf8_lossy(&majority.vote)
    );

    // the generalized median discards the two most distant records first
    let median = algorithms::median(&inputs).expect("equal-length records");
    println!(
        "median survivor:                      {}",
        String::from_utf8_lossy(&median.vote)
    );
}
