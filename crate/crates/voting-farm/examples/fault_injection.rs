//! Fault-injection scenarios through the simulation harness: a corrupted
//! replica is masked, a silent one stalls the farm.
//!
//! ```bash
//! cargo run --example fault_injection
//! ```

use std::time::Duration;

use voting_farm::protocol::AlgorithmId;
use voting_farm::sim::{run_scenario, Fault, FaultMode, InputValue, ScenarioConfig};

fn main() {
    let healthy = vec![
        InputValue::Real(7.0),
        InputValue::Real(7.0),
        InputValue::Real(7.0),
    ];

    println!("=== corrupt fault: module 2 reports 9.9 instead of 7.0 ===");
    let config = ScenarioConfig {
        n: 3,
        algorithm: AlgorithmId::Majority,
        inputs: healthy.clone(),
        faults: vec![Fault { module: 2, mode: FaultMode::Corrupt(InputValue::Real(9.9)) }],
        ..ScenarioConfig::default()
    };
    let report = run_scenario(&config).expect("valid scenario");
    print!("{}", report.render_table());
    println!("exit code: {}\n", report.exit_code());

    println!("=== silent fault: module 1 never sends its input ===");
    let config = ScenarioConfig {
        n: 3,
        algorithm: AlgorithmId::Majority,
        inputs: healthy,
        faults: vec![Fault { module: 1, mode: FaultMode::Silent }],
        timeout: Duration::from_millis(500),
        ..ScenarioConfig::default()
    };
    let report = run_scenario(&config).expect("valid scenario");
    print!("{}", report.render_table());
    println!("exit code: {}", report.exit_code());
    println!(
        "broadcasts seen before the stall: {:?} (the ordered broadcast blocks \
         at the silent module)",
        report.broadcast_order()
    );
}
