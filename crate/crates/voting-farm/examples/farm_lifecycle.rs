//! The full lifecycle of a voting farm, on the smallest farm there is:
//! define, describe, activate, control, read, destroy.
//!
//! ```bash
//! cargo run --example farm_lifecycle
//! ```

use voting_farm::farm::Machine;
use voting_farm::metric;
use voting_farm::protocol::{AlgorithmId, ControlMessage, MessageCode};

fn main() {
    let machine = Machine::new();
    let node = machine.node(0);

    // define: farm id 5, with the metric every module must agree on
    let mut farm = node.open_farm(5, metric::absolute_difference()).expect("open");

    // describe: one voter, living on node 0 with thread ident 42.
    // every module assembling farm 5 would execute the same description.
    farm.add_voter(0, 42).expect("describe");
    println!("described farm {} with {} voter(s)", farm.id(), farm.voter_count());

    // activate: spawns the local voter, which connects back to us
    farm.run().expect("activate");
    println!("farm is active: {}", farm.is_active());

    // control: pick an algorithm, then submit this module's output value
    farm.control_list(&[
        ControlMessage::algorithm(AlgorithmId::Majority),
        ControlMessage::input(2.75f64.to_le_bytes().to_vec()).unwrap(),
    ])
    .expect("control");

    // read: the voter reports DONE with the outcome flag in `length`
    let done = farm.get();
    assert_eq!(done.code, MessageCode::Done);
    let vote = f64::from_le_bytes(done.payload.as_slice().try_into().unwrap());
    println!("vote outcome flag = {}, voted value = {vote}", done.length);

    // destroy: the voter acknowledges with QUIT and terminates
    farm.close().expect("close");
    assert_eq!(farm.get().code, MessageCode::Quit);
    farm.join_voter().expect("was running").expect("clean exit");
    println!("voter terminated cleanly");
}
