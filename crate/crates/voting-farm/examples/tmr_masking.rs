//! Triple modular redundancy driven by hand: three user modules, each with
//! its own voter, mask one corrupted replica output.
//!
//! Each module thread performs the same description of farm 7 and only ever
//! talks to its local voter; the voters build the cliqué and exchange inputs
//! among themselves.
//!
//! ```bash
//! cargo run --example tmr_masking
//! ```

use std::thread;

use voting_farm::farm::Machine;
use voting_farm::metric;
use voting_farm::protocol::{ControlMessage, MessageCode};

fn main() {
    let machine = Machine::new();
    // module 1 is faulty: its replica computed 9.9 instead of 7.0
    let replica_outputs: [f64; 3] = [7.0, 9.9, 7.0];

    let mut modules = Vec::new();
    for (module, output) in replica_outputs.into_iter().enumerate() {
        let machine = machine.clone();
        modules.push(thread::spawn(move || {
            let node = machine.node(module as i32);
            let mut farm = node.open_farm(7, metric::absolute_difference()).expect("open");
            for peer in 0..3 {
                farm.add_voter(peer, 100 + peer).expect("describe");
            }
            farm.run().expect("activate");

            // default algorithm is the formalized majority voter
            farm.control(&ControlMessage::input(output.to_le_bytes().to_vec()).unwrap())
                .expect("submit input");

            let done = farm.get();
            assert_eq!(done.code, MessageCode::Done);
            let vote = f64::from_le_bytes(done.payload.as_slice().try_into().unwrap());
            println!("module {module} submitted {output:<4} and received vote {vote}");

            farm.close().expect("close");
            assert_eq!(farm.get().code, MessageCode::Quit);
            farm.join_voter().unwrap().expect("clean voter exit");
            vote
        }));
    }

    let votes: Vec<f64> = modules.into_iter().map(|m| m.join().unwrap()).collect();
    assert!(votes.iter().all(|v| *v == 7.0));
    println!("fault masked: every module sees 7.0");
}
