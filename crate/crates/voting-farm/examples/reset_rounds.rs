//! Reusing one farm for several voting sessions with RESET.
//!
//! RESET clears the voter's inputs, counters, flags, result, and output
//! link, but keeps the selected algorithm, ε, and scaling factor.
//!
//! ```bash
//! cargo run --example reset_rounds
//! ```

use voting_farm::farm::Machine;
use voting_farm::metric;
use voting_farm::protocol::{AlgorithmId, ControlMessage, MessageCode};

fn main() {
    let machine = Machine::new();
    let mut farm = machine.node(0).open_farm(1, metric::absolute_difference()).expect("open");
    farm.add_voter(0, 1).expect("describe");
    farm.run().expect("activate");
    farm.control(&ControlMessage::algorithm(AlgorithmId::SimpleAverage)).expect("select");

    for (round, value) in [3.5f64, -1.25, 80.0].into_iter().enumerate() {
        farm.control(&ControlMessage::input(value.to_le_bytes().to_vec()).unwrap())
            .expect("input");
        let done = farm.get();
        assert_eq!(done.code, MessageCode::Done);
        let vote = f64::from_le_bytes(done.payload.as_slice().try_into().unwrap());
        println!("round {round}: voted {vote}");

        // make the voter ready for a fresh session
        farm.control(&ControlMessage::reset()).expect("reset");
    }

    farm.close().expect("close");
    assert_eq!(farm.get().code, MessageCode::Quit);
    farm.join_voter().unwrap().expect("clean exit");
}
