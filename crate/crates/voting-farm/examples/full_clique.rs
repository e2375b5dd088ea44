//! The widest farm supported: 16 voters in a full cliqué of 120 links, with
//! the structured event log enabled.
//!
//! ```bash
//! cargo run --example full_clique
//! ```

use std::collections::HashSet;

use voting_farm::sim::{run_scenario, InputValue, ScenarioConfig};
use voting_farm::FarmEvent;

fn main() {
    let config = ScenarioConfig {
        n: 16,
        inputs: (0..16).map(|_| InputValue::Real(5.5)).collect(),
        ..ScenarioConfig::default()
    };
    let report = run_scenario(&config).expect("valid scenario");

    let mut links = HashSet::new();
    for event in &report.events {
        if let FarmEvent::Connected { voter, peer, .. } = event {
            links.insert((*voter.min(peer), *voter.max(peer)));
        }
    }
    println!("cliqué links established: {} (16 choose 2 = 120)", links.len());
    println!("broadcast order: {:?}", report.broadcast_order());
    println!(
        "agreement: {}",
        if report.agreed { "every voter reached the same DONE" } else { "disagreement!" }
    );
}
