//! Acceptance suite: one test per system-level criterion, each printing a
//! single pass/fail line (visible with `cargo test --test acceptance --
//! --nocapture`).

mod common;

use std::collections::HashSet;
use std::sync::Barrier;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::harness::{described_farm, fast_options};
use common::{gen, oracle};
use voting_farm::algorithms::{self, VoteInputs};
use voting_farm::farm::{request_id, Machine};
use voting_farm::metric;
use voting_farm::protocol::{
    describe_error, AlgorithmId, ControlMessage, MessageCode, Outcome, VfError,
    DEFAULT_EPSILON, DEFAULT_SCALING_FACTOR, ERROR_TABLE_LEN, MAX_VOTERS,
};
use voting_farm::sim::{self, Fault, FaultMode, InputValue, ScenarioConfig, VoterStatus};

fn criterion(name: &str, check: impl FnOnce() -> Result<(), String>) {
    match check() {
        Ok(()) => println!("[PASS] {name}"),
        Err(why) => {
            println!("[FAIL] {name}: {why}");
            panic!("{name}: {why}");
        }
    }
}

fn ensure(cond: bool, why: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(why.into())
    }
}

fn real_input(x: f64) -> ControlMessage {
    ControlMessage::input(x.to_le_bytes().to_vec()).unwrap()
}

fn decode(bytes: &[u8]) -> f64 {
    f64::from_le_bytes(bytes.try_into().expect("8-byte vote"))
}

fn reals(xs: &[f64]) -> Vec<InputValue> {
    xs.iter().map(|x| InputValue::Real(*x)).collect()
}

#[test]
fn criterion_01_algorithm_oracle_equivalence() {
    criterion(
        "1. all seven algorithms match the brute-force oracle on 1000 random instances each",
        || {
            let started = Instant::now();
            let mut rng = ChaCha8Rng::seed_from_u64(0x0ACCE55);
            let metric = metric::absolute_difference();
            for alg in AlgorithmId::ALL {
                for case in 0..1000u32 {
                    let xs = gen::clustered_instance(&mut rng);
                    let items = gen::encode(&xs);
                    let inputs = VoteInputs::new(&items, &metric);
                    let got = algorithms::dispatch(alg, &inputs)
                        .map_err(|e| format!("{alg} case {case} errored: {e}"))?;
                    let want =
                        oracle::dispatch(alg.code(), &xs, DEFAULT_EPSILON, DEFAULT_SCALING_FACTOR);
                    ensure(
                        got.is_success() == want.success,
                        format!("{alg} case {case}: outcome mismatch on {xs:?}"),
                    )?;
                    if !want.success {
                        continue;
                    }
                    let want_value = want.value.unwrap();
                    match alg {
                        AlgorithmId::WeightedAverage | AlgorithmId::SimpleAverage => {
                            let got_value = decode(&got.vote);
                            let close = got_value == want_value
                                || (got_value - want_value).abs() <= 1e-9 * want_value.abs();
                            ensure(
                                close,
                                format!(
                                    "{alg} case {case}: {got_value} vs oracle {want_value} on {xs:?}"
                                ),
                            )?;
                        }
                        _ => ensure(
                            got.vote == want_value.to_le_bytes(),
                            format!("{alg} case {case}: vote bytes differ on {xs:?}"),
                        )?,
                    }
                }
            }
            ensure(
                started.elapsed() < Duration::from_secs(10),
                format!("took {:?}, bound is 10s", started.elapsed()),
            )
        },
    );
}

#[test]
fn criterion_02_worked_examples() {
    criterion(
        "2. worked examples: median removal loop, weighted average, simple majority",
        || {
            let m = metric::absolute_difference();

            let items = gen::encode(&[1.0, 5.0, 2.0, 100.0]);
            let vote = algorithms::median(&VoteInputs::new(&items, &m)).unwrap();
            ensure(vote.is_success() && decode(&vote.vote) == 5.0, "median([1,5,2,100]) != 5.0")?;

            let items = gen::encode(&[1.0, 2.0, 3.0, 4.0, 5.0]);
            let vote = algorithms::median(&VoteInputs::new(&items, &m)).unwrap();
            ensure(vote.is_success() && decode(&vote.vote) == 3.0, "median([1,2,3,4,5]) != 3.0")?;

            let items = gen::encode(&[0.0, 1.0]);
            let vote = algorithms::weighted_average(
                &VoteInputs::new(&items, &m).scaling_factor(1.0),
            )
            .unwrap();
            ensure(
                vote.is_success() && decode(&vote.vote) == 0.5,
                "weighted_average({0,1}, a=1) != 0.5",
            )?;

            let items = gen::encode(&[1.0, 1.0, 7.0]);
            let vote = algorithms::simple_majority(&VoteInputs::new(&items, &m)).unwrap();
            ensure(
                vote.is_success() && decode(&vote.vote) == 1.0,
                "simple_majority(n=3, {1,1,7}) != 1.0 at threshold 1",
            )
        },
    );
}

#[test]
fn criterion_03_tmr_masks_a_corrupted_module() {
    criterion("3. end-to-end TMR masking of one corrupted module in under 5s", || {
        let started = Instant::now();
        let config = ScenarioConfig {
            n: 3,
            algorithm: AlgorithmId::Majority,
            inputs: reals(&[7.0, 7.0, 7.0]),
            faults: vec![Fault { module: 1, mode: FaultMode::Corrupt(InputValue::Real(9.9)) }],
            timeout: Duration::from_secs(2),
            ..ScenarioConfig::default()
        };
        let report = sim::run_scenario(&config).map_err(|e| e.to_string())?;
        for voter in &report.voters {
            ensure(
                voter.status == VoterStatus::Done(Outcome::Success),
                format!("voter {} reported {}", voter.module, voter.status),
            )?;
        }
        ensure(
            report.agreed_value == Some(7.0f64.to_le_bytes().to_vec()),
            "masked value is not 7.0",
        )?;
        ensure(
            started.elapsed() < Duration::from_secs(5),
            format!("took {:?}, bound is 5s", started.elapsed()),
        )
    });
}

#[test]
fn criterion_04_full_width_clique() {
    criterion("4. 16-voter cliqué: 120 distinct rendezvous ids, all voters DONE and identical", || {
        // request-id injectivity by enumeration
        let mut seen = HashSet::new();
        for farm_id in 0..64 {
            for v in 0..MAX_VOTERS {
                for w in v + 1..MAX_VOTERS {
                    ensure(
                        seen.insert(request_id(farm_id, v, w)),
                        format!("request id collision at ({farm_id}, {v}, {w})"),
                    )?;
                }
            }
        }

        let config = ScenarioConfig {
            n: 16,
            algorithm: AlgorithmId::Majority,
            inputs: reals(&[3.5; 16]),
            timeout: Duration::from_secs(5),
            ..ScenarioConfig::default()
        };
        let report = sim::run_scenario(&config).map_err(|e| e.to_string())?;
        for voter in &report.voters {
            ensure(
                voter.status == VoterStatus::Done(Outcome::Success),
                format!("voter {} reported {}", voter.module, voter.status),
            )?;
        }
        ensure(report.agreed, "voters disagree")?;

        // the cliqué of one 16-voter farm spans C(16,2) = 120 distinct pairs
        let mut pairs = HashSet::new();
        for event in &report.events {
            if let voting_farm::FarmEvent::Connected { voter, peer, .. } = event {
                pairs.insert((*voter.min(peer), *voter.max(peer)));
            }
        }
        ensure(pairs.len() == 120, format!("saw {} distinct link pairs, want 120", pairs.len()))
    });
}

#[test]
fn criterion_05_ordered_broadcast_without_deadlock() {
    criterion(
        "5. 100 randomized-schedule runs (n in {3,5,8}): broadcasts strictly ascending, no deadlock",
        || {
            for seed in 0..100u64 {
                let n = [3, 5, 8][(seed % 3) as usize];
                let started = Instant::now();
                let config = ScenarioConfig {
                    n,
                    algorithm: AlgorithmId::Majority,
                    inputs: reals(&vec![1.25; n]),
                    timeout: Duration::from_secs(4),
                    seed,
                    ..ScenarioConfig::default()
                };
                let report = sim::run_scenario(&config).map_err(|e| e.to_string())?;
                ensure(
                    started.elapsed() < Duration::from_secs(5),
                    format!("seed {seed}: run exceeded the 5s bound"),
                )?;
                for voter in &report.voters {
                    ensure(
                        voter.status == VoterStatus::Done(Outcome::Success),
                        format!("seed {seed}: voter {} reported {}", voter.module, voter.status),
                    )?;
                }
                let order = report.broadcast_order();
                ensure(
                    order == (0..n).collect::<Vec<_>>(),
                    format!("seed {seed}: broadcast order {order:?}"),
                )?;
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_06_protocol_conformance() {
    criterion("6. message-code and error-code tables match the golden values", || {
        let user_codes = [
            ("INP_MSG", MessageCode::InputMsg, 100),
            ("OUT_LCB", MessageCode::OutputLink, 101),
            ("SELECT_ALG", MessageCode::SelectAlg, 102),
            ("DESTROY", MessageCode::Destroy, 103),
            ("NOP", MessageCode::Nop, 104),
            ("RESET", MessageCode::Reset, 105),
            ("REFUSED", MessageCode::Refused, 106),
            ("QUIT", MessageCode::Quit, 107),
            ("DONE", MessageCode::Done, 108),
            ("EPSILON", MessageCode::Epsilon, 109),
            ("ERROR", MessageCode::Error, 110),
            ("SCALING_FACTOR", MessageCode::ScalingFactor, 111),
        ];
        ensure(user_codes.len() == 12, "user code table size")?;
        for (name, code, value) in user_codes {
            ensure(code.code() == value, format!("{name} != {value}"))?;
        }
        let voter_codes = [
            ("V_INP_MSG", MessageCode::VoterInputMsg, 200),
            ("V_DESTROY", MessageCode::VoterDestroy, 203),
            ("V_NOP", MessageCode::VoterNop, 204),
            ("V_RESET", MessageCode::VoterReset, 205),
            ("V_ERROR", MessageCode::VoterError, 210),
        ];
        ensure(voter_codes.len() == 5, "voter code table size")?;
        for (name, code, value) in voter_codes {
            ensure(code.code() == value, format!("{name} != {value}"))?;
        }

        let golden_errors = [
            (0, "no error"),
            (-1, "An internal stack has reached its upper limit"),
            (-2, "The system was not able to execute allocation"),
            (-3, "This operation requires a defined voting farm"),
            (-4, "A wrong node has been specified"),
            (-5, "The system was not able to get the global id"),
            (-6, "The system was not able to execute CreateThread"),
            (-7, "The system was not able to execute ConnectLink"),
            (-8, "The system was not able to execute RecvLink"),
            (-9, "The system was not able to perform broadcasting"),
            (-10, "Invalid output (LinkCB_t*) - can't deliver"),
            (-11, "Duplicated input message"),
            (-12, "Invalid voting farm id"),
            (-13, "Invalid metric function pointer"),
            (-14, "Inconsistent voting farm object"),
            (-15, "No local voters---one voter has to be specified"),
            (-16, "More than one local voter has been specified"),
            (-17, "A wrong number of messages has been specified"),
            (-18, "The system was not able to execute SendLink"),
            (-19, "Inconsistency in the size of the input message"),
            (-20, "This operation requires a described voting farm"),
            (-21, "This operation requires an active voting farm"),
            (-22, "Inconsistency - sender unknown"),
            (-23, "Time-out reached during a Select()"),
            (-24, "A Select() returned an index out of range"),
            (-25, "Algorithm Id out of range"),
            (-26, "NULL in a call-by-reference pointer"),
            (-27, "Maximun number of opened voting farms exceeded"),
        ];
        ensure(golden_errors.len() == ERROR_TABLE_LEN, "error table size != 28")?;
        for (code, text) in golden_errors {
            ensure(
                describe_error(code) == text,
                format!("describe_error({code}) = {:?}, want {text:?}", describe_error(code)),
            )?;
        }
        Ok(())
    });
}

#[test]
fn criterion_07_lifecycle_error_paths() {
    criterion("7. every documented lifecycle error path yields its code and description", || {
        let m = metric::absolute_difference;

        // E_VF_WRONG_VFID
        let machine = Machine::new();
        let err = machine.node(0).open_farm(0, m()).unwrap_err();
        ensure(err == VfError::WrongFarmId, "open(0) code")?;
        ensure(describe_error(err.code()) == "Invalid voting farm id", "open(0) text")?;

        // E_VF_TOO_MANY_LVOTERS
        let mut farm = machine.node(5).open_farm(1, m()).unwrap();
        farm.add_voter(5, 1).unwrap();
        let err = farm.add_voter(5, 2).unwrap_err();
        ensure(err == VfError::TooManyLocalVoters, "second local voter code")?;
        ensure(
            describe_error(err.code()) == "More than one local voter has been specified",
            "second local voter text",
        )?;

        // E_VF_OVERFLOW at the 17th add
        let mut farm = machine.node(0).open_farm(2, m()).unwrap();
        for node in 0..16 {
            farm.add_voter(node, node).unwrap();
        }
        let err = farm.add_voter(99, 99).unwrap_err();
        ensure(err == VfError::Overflow, "17th add code")?;
        ensure(
            describe_error(err.code()) == "An internal stack has reached its upper limit",
            "17th add text",
        )?;

        // E_VF_UNDESCRIBED
        let mut farm = machine.node(0).open_farm(3, m()).unwrap();
        let err = farm.run().unwrap_err();
        ensure(err == VfError::Undescribed, "run-before-add code")?;
        ensure(
            describe_error(err.code()) == "This operation requires a described voting farm",
            "run-before-add text",
        )?;

        // E_VF_NO_LVOTER
        let mut farm = machine.node(0).open_farm(4, m()).unwrap();
        farm.add_voter(7, 1).unwrap();
        farm.add_voter(8, 2).unwrap();
        let err = farm.run().unwrap_err();
        ensure(err == VfError::NoLocalVoter, "remote-only code")?;
        ensure(
            describe_error(err.code()) == "No local voters---one voter has to be specified",
            "remote-only text",
        )?;

        // E_VF_INACTIVE
        let mut farm = machine.node(0).open_farm(5, m()).unwrap();
        farm.add_voter(0, 1).unwrap();
        let err = farm.control(&ControlMessage::nop()).unwrap_err();
        ensure(err == VfError::Inactive, "control-before-run code")?;
        ensure(
            describe_error(err.code()) == "This operation requires an active voting farm",
            "control-before-run text",
        )?;

        // E_VF_WRONG_MSG_NB at 0 and at 11
        farm.run().unwrap();
        let err = farm.control_list(&[]).unwrap_err();
        ensure(err == VfError::WrongMessageCount, "empty batch code")?;
        let err = farm.control_list(&vec![ControlMessage::nop(); 11]).unwrap_err();
        ensure(err == VfError::WrongMessageCount, "11-message batch code")?;
        ensure(
            describe_error(err.code()) == "A wrong number of messages has been specified",
            "batch bound text",
        )?;

        // E_VF_EVENT_TIMEOUT
        let mut options = fast_options();
        options.event_timeout = Duration::from_millis(100);
        let mut silent = described_farm(&machine, 6, 1, 0, options);
        silent.run().unwrap();
        let reply = silent.get();
        ensure(
            reply.code == MessageCode::Error && reply.length == VfError::EventTimeout.code(),
            "timeout reply shape",
        )?;
        ensure(silent.last_error() == Some(VfError::EventTimeout), "timeout last error")?;
        ensure(
            describe_error(VfError::EventTimeout.code()) == "Time-out reached during a Select()",
            "timeout text",
        )?;
        silent.close().unwrap();
        ensure(silent.get().code == MessageCode::Quit, "timeout farm still closes")?;
        silent.join_voter().unwrap().map_err(|e| format!("quit status {e}"))?;

        // E_VF_WRONG_ALGID: accepted at build time, fatal at vote time
        let mut farm = described_farm(&machine, 7, 1, 0, fast_options());
        farm.run().unwrap();
        farm.control_list(&[ControlMessage::algorithm(9), real_input(1.0)]).unwrap();
        match farm.join_voter() {
            Some(Err(VfError::WrongAlgorithmId)) => {}
            other => return Err(format!("voter exit was {other:?}, want WrongAlgorithmId")),
        }
        ensure(farm.last_error() == Some(VfError::WrongAlgorithmId), "algid last error")?;
        ensure(
            describe_error(VfError::WrongAlgorithmId.code()) == "Algorithm Id out of range",
            "algid text",
        )?;

        // E_VF_INPUT_SIZE: two modules feed different input lengths; whichever
        // message reaches voter 1 second trips the consistency check
        let machine = Machine::new();
        let short_side = {
            let machine = machine.clone();
            thread::spawn(move || {
                let mut options = fast_options();
                options.event_timeout = Duration::from_millis(500);
                let mut farm = described_farm(&machine, 8, 2, 0, options);
                farm.run().unwrap();
                farm.control(&ControlMessage::input(vec![0x41]).unwrap()).unwrap();
                let _ = farm.get(); // stalls and times out; the farm is then abandoned
            })
        };
        let mut farm = described_farm(&machine, 8, 2, 1, fast_options());
        farm.run().unwrap();
        farm.control(&real_input(2.0)).unwrap();
        match farm.join_voter() {
            Some(Err(VfError::InputSize)) => {}
            other => return Err(format!("voter exit was {other:?}, want InputSize")),
        }
        ensure(
            describe_error(VfError::InputSize.code())
                == "Inconsistency in the size of the input message",
            "input size text",
        )?;
        short_side.join().unwrap();
        Ok(())
    });
}

#[test]
fn criterion_08_reset_round_trip() {
    criterion("8. a farm completes two voting sessions separated by RESET", || {
        let machine = Machine::new();
        let round1 = [2.0, 2.0, 9.0];
        let round2 = [5.0, 5.0, 1.0];
        let after_round1 = Arc::new(Barrier::new(3));
        let after_reset = Arc::new(Barrier::new(3));

        let mut handles = Vec::new();
        for module in 0..3 {
            let machine = machine.clone();
            let after_round1 = Arc::clone(&after_round1);
            let after_reset = Arc::clone(&after_reset);
            handles.push(thread::spawn(move || -> Result<(f64, f64), String> {
                let mut farm = described_farm(&machine, 11, 3, module, fast_options());
                farm.run().map_err(|e| e.to_string())?;
                farm.control(&real_input(round1[module])).map_err(|e| e.to_string())?;
                let done = farm.get();
                ensure(done.code == MessageCode::Done, format!("round 1 reply {:?}", done.code))?;
                let first = decode(&done.payload);

                // everyone voted round 1; now reset, and use a refused destroy
                // as the acknowledgment that the reset has been processed
                after_round1.wait();
                farm.control(&ControlMessage::reset()).map_err(|e| e.to_string())?;
                farm.close().map_err(|e| e.to_string())?;
                let reply = farm.get();
                ensure(
                    reply.code == MessageCode::Refused,
                    format!("reset probe reply {:?}", reply.code),
                )?;
                after_reset.wait();

                farm.control(&real_input(round2[module])).map_err(|e| e.to_string())?;
                let done = farm.get();
                ensure(done.code == MessageCode::Done, format!("round 2 reply {:?}", done.code))?;
                let second = decode(&done.payload);

                farm.close().map_err(|e| e.to_string())?;
                ensure(farm.get().code == MessageCode::Quit, "final quit")?;
                farm.join_voter().unwrap().map_err(|e| format!("voter exit {e}"))?;
                Ok((first, second))
            }));
        }
        for handle in handles {
            let (first, second) = handle.join().unwrap()?;
            ensure(first == 2.0, format!("round 1 voted {first}, want 2.0"))?;
            ensure(second == 5.0, format!("round 2 voted {second}, want 5.0"))?;
        }
        Ok(())
    });
}

#[test]
fn criterion_09_destroy_semantics() {
    criterion("9. destroy is refused before broadcast and quits cleanly after DONE", || {
        let machine = Machine::new();
        let mut handles = Vec::new();
        for module in 0..3 {
            let machine = machine.clone();
            handles.push(thread::spawn(move || -> Result<(), String> {
                let mut farm = described_farm(&machine, 12, 3, module, fast_options());
                farm.run().map_err(|e| e.to_string())?;

                // destroy before any broadcast: refused, and the voter lives on
                farm.close().map_err(|e| e.to_string())?;
                let reply = farm.get();
                ensure(
                    reply.code == MessageCode::Refused,
                    format!("pre-broadcast close got {:?}", reply.code),
                )?;

                // the farm is still usable: a full round completes
                farm.control(&real_input(7.0)).map_err(|e| e.to_string())?;
                let done = farm.get();
                ensure(done.code == MessageCode::Done, format!("round reply {:?}", done.code))?;
                ensure(decode(&done.payload) == 7.0, "voted value")?;

                // destroy after DONE: quit and clean termination
                farm.close().map_err(|e| e.to_string())?;
                ensure(farm.get().code == MessageCode::Quit, "post-DONE close")?;
                match farm.join_voter() {
                    Some(Ok(())) => Ok(()),
                    other => Err(format!("voter exit was {other:?}")),
                }
            }));
        }
        for handle in handles {
            handle.join().unwrap()?;
        }
        Ok(())
    });
}

#[test]
fn criterion_10_output_link_delivery() {
    criterion("10. delivery: vote bytes on SUCCESS, one zero byte on forced FAILURE", || {
        // SUCCESS with a non-real payload: exactly input_length bytes
        let machine = Machine::new();
        let mut farm = described_farm(&machine, 13, 1, 0, fast_options());
        farm.run().map_err(|e| e.to_string())?;
        let (consumer, producer) = voting_farm::transport::link_pair();
        let token = machine.register_output_link(producer);
        farm.control_list(&[
            ControlMessage::output_link(token),
            ControlMessage::input(b"abc".to_vec()).unwrap(),
        ])
        .map_err(|e| e.to_string())?;
        let done = farm.get();
        ensure(done.code == MessageCode::Done && done.length == 1, "singleton DONE")?;
        let delivered = consumer.recv().map_err(|e| e.to_string())?;
        ensure(delivered == b"abc", format!("delivered {delivered:?}, want exactly b\"abc\""))?;
        farm.close().map_err(|e| e.to_string())?;
        ensure(farm.get().code == MessageCode::Quit, "success farm quit")?;
        farm.join_voter().unwrap().map_err(|e| format!("voter exit {e}"))?;

        // forced FAILURE: exact consensus over unequal inputs delivers [0]
        let machine = Machine::new();
        let values: [f64; 2] = [1.0, 2.0];
        let mut handles = Vec::new();
        for (module, value) in values.into_iter().enumerate() {
            let machine = machine.clone();
            handles.push(thread::spawn(move || -> Result<(), String> {
                let mut farm = described_farm(&machine, 14, 2, module, fast_options());
                farm.run().map_err(|e| e.to_string())?;
                let (consumer, producer) = voting_farm::transport::link_pair();
                let token = machine.register_output_link(producer);
                farm.control_list(&[
                    ControlMessage::algorithm(AlgorithmId::ExactConsensus),
                    ControlMessage::output_link(token),
                    real_input(value),
                ])
                .map_err(|e| e.to_string())?;
                let done = farm.get();
                ensure(
                    done.code == MessageCode::Done && done.length == Outcome::Failure.code(),
                    format!("expected DONE(FAILURE), got {:?}({})", done.code, done.length),
                )?;
                ensure(done.payload.is_empty(), "failed DONE must carry no vote bytes")?;
                let delivered = consumer.recv().map_err(|e| e.to_string())?;
                ensure(
                    delivered == vec![0u8],
                    format!("delivered {delivered:?}, want exactly [0]"),
                )?;
                farm.close().map_err(|e| e.to_string())?;
                ensure(farm.get().code == MessageCode::Quit, "failure farm quit")?;
                farm.join_voter().unwrap().map_err(|e| format!("voter exit {e}"))?;
                Ok(())
            }));
        }
        for handle in handles {
            handle.join().unwrap()?;
        }
        Ok(())
    });
}
