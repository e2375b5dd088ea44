//! Delivering the voted value to a downstream output module over a link
//! installed with an output-link control message.
//!
//! The user module creates a link pair, keeps the consuming end, registers
//! the other end with the machine, and hands the resulting token to its
//! voter. As soon as a vote succeeds, the voter pushes the vote bytes down
//! that link; a failed vote is signalled by a single zero byte.
//!
//! ```bash
//! cargo run --example output_module
//! ```

use voting_farm::farm::Machine;
use voting_farm::metric;
use voting_farm::protocol::{ControlMessage, MessageCode};
use voting_farm::transport;

fn main() {
    let machine = Machine::new();
    let mut farm = machine.node(0).open_farm(3, metric::absolute_difference()).expect("open");
    farm.add_voter(0, 1).expect("describe");
    farm.run().expect("activate");

    let (output_module, voter_end) = transport::link_pair();
    let token = machine.register_output_link(voter_end);

    farm.control_list(&[
        ControlMessage::output_link(token),
        ControlMessage::input(1.25f64.to_le_bytes().to_vec()).unwrap(),
    ])
    .expect("control");

    // the user module sees DONE as usual
    let done = farm.get();
    assert_eq!(done.code, MessageCode::Done);

    // ...and the output module independently receives the voted bytes
    let delivered = output_module.recv().expect("delivery");
    let value = f64::from_le_bytes(delivered.as_slice().try_into().unwrap());
    println!("output module received {} byte(s): {value}", delivered.len());

    farm.close().expect("close");
    assert_eq!(farm.get().code, MessageCode::Quit);
    farm.join_voter().unwrap().expect("clean exit");
}
