//! Tour of the seven voting algorithms over one set of replica outputs,
//! without spinning up a farm.
//!
//! ```bash
//! cargo run --example vote_algorithms
//! ```

use voting_farm::algorithms::{self, VoteInputs};
use voting_farm::metric;
use voting_farm::protocol::AlgorithmId;

fn main() {
    // one healthy replica, two drifted by 1e-4, two wild
    let outputs: [f64; 5] = [1.0, 1.0001, 1.0001, 4.0, 9.0];
    let items: Vec<Vec<u8>> = outputs.iter().map(|v| v.to_le_bytes().to_vec()).collect();
    let metric = metric::absolute_difference();

    println!("replica outputs: {outputs:?}");
    println!("agreement threshold ε = 1e-3\n");
    println!("{:<18} {:<8} vote", "algorithm", "outcome");
    for alg in AlgorithmId::ALL {
        let inputs = VoteInputs::new(&items, &metric).epsilon(1e-3);
        let result = algorithms::dispatch(alg, &inputs).expect("scalar inputs");
        let vote = if result.is_success() {
            f64::from_le_bytes(result.vote.as_slice().try_into().unwrap()).to_string()
        } else {
            "-".to_string()
        };
        let outcome = if result.is_success() { "SUCCESS" } else { "FAILURE" };
        println!("{:<18} {:<8} {}", alg.name(), outcome, vote);
    }

    // at the tight default threshold the drifted replicas no longer join the
    // healthy one, and no block reaches a strict majority
    let inputs = VoteInputs::new(&items, &metric);
    let result = algorithms::majority(&inputs).expect("scalar inputs");
    println!(
        "\nmajority @ default ε=5e-5 → {}",
        if result.is_success() { "SUCCESS" } else { "FAILURE" }
    );
}
