//! The voter thread: validates the farm description, builds the cliqué,
//! loops over the user and fellow-voter links, enforces the ordered
//! broadcast, votes once all N inputs have arrived, and delivers outcomes.
//!
//! Broadcasting is ordered to prevent deadlocks: a voter transmits its input
//! only when it has not broadcast before, it holds its user's input, and its
//! voter index equals the number of inputs gathered so far minus one. Voter 0
//! therefore broadcasts first and broadcasts ripple through the farm in
//! strictly ascending voter-index order.
//!
//! Wire format between voters, bit-exact: a 4-byte little-endian signed
//! message code followed by the opaque payload (at most
//! [`crate::protocol::MAX_INPUT_BYTES`] bytes).

use std::sync::atomic::Ordering;
use std::sync::Arc;

use crate::algorithms::{self, VoteInputs};
use crate::farm::{request_id, FarmEvent, FarmShared};
use crate::protocol::{
    AlgorithmId, ControlMessage, MessageCode, VfError, VoteResult, ALGORITHM_COUNT,
    DEFAULT_EPSILON, DEFAULT_SCALING_FACTOR,
};
use crate::transport::{self, Link, SelectOption};

/// Voter ↔ voter framing: an integer code directly attached to an opaque
/// payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct WireMessage {
    pub(crate) code: i32,
    pub(crate) payload: Vec<u8>,
}

impl WireMessage {
    pub(crate) fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(4 + self.payload.len());
        buf.extend_from_slice(&self.code.to_le_bytes());
        buf.extend_from_slice(&self.payload);
        buf
    }

    pub(crate) fn decode(bytes: &[u8]) -> Option<WireMessage> {
        if bytes.len() < 4 {
            return None;
        }
        Some(WireMessage {
            code: i32::from_le_bytes(bytes[..4].try_into().unwrap()),
            payload: bytes[4..].to_vec(),
        })
    }
}

/// Entry point of the voter thread spawned by farm activation.
pub(crate) fn run(shared: Arc<FarmShared>, user_link: Link) -> Result<(), VfError> {
    shared.flags.broadcast_done.store(false, Ordering::Relaxed);
    shared.flags.inp_msg_got.store(false, Ordering::Relaxed);
    shared.flags.destroy_requested.store(false, Ordering::Relaxed);

    let result = (|| {
        validate(&shared)?;
        let mut voter = Voter::new(Arc::clone(&shared), user_link);
        voter.establish_clique()?;
        voter.event_loop()
    })();
    if let Err(err) = result {
        log::error!(
            "voter {} of farm {} stopped: {err}",
            shared.this_voter,
            shared.farm_id
        );
        shared.fail(err);
    }
    result
}

/// The broadcast fan-out: fellows this_voter+1..n−1 first, then the wrap
/// 0..this_voter.
fn fan_out_order(this_voter: usize, n: usize) -> impl Iterator<Item = usize> {
    (this_voter + 1..n).chain(0..this_voter)
}

/// Consistency checks on the descriptor before any distributed action.
fn validate(shared: &FarmShared) -> Result<(), VfError> {
    let consistent = shared.farm_id > 0
        && shared.nodes.len() == shared.idents.len()
        && shared.this_voter < shared.nodes.len();
    if !consistent || shared.nodes[shared.this_voter] != shared.local_node {
        log::error!("corrupted or invalid voting farm object");
        return Err(VfError::InvalidFarm);
    }
    Ok(())
}

enum Flow {
    Continue,
    Quit,
}

struct Voter {
    shared: Arc<FarmShared>,
    user_link: Link,
    /// Cliqué links indexed by voter; `None` at the local index and for peers
    /// that have terminated.
    fellows: Vec<Option<Link>>,
    inputs: Vec<Option<Vec<u8>>>,
    input_nr: usize,
    input_length: usize,
    algorithm: i32,
    epsilon: f64,
    scaling_factor: f64,
    output_link: Option<Link>,
    result: Option<VoteResult>,
}

impl Voter {
    fn new(shared: Arc<FarmShared>, user_link: Link) -> Voter {
        let n = shared.nodes.len();
        Voter {
            shared,
            user_link,
            fellows: (0..n).map(|_| None).collect(),
            inputs: vec![None; n],
            input_nr: 0,
            input_length: 0,
            algorithm: AlgorithmId::Majority.code(),
            epsilon: DEFAULT_EPSILON,
            scaling_factor: DEFAULT_SCALING_FACTOR,
            output_link: None,
            result: None,
        }
    }

    fn n(&self) -> usize {
        self.shared.nodes.len()
    }

    fn this_voter(&self) -> usize {
        self.shared.this_voter
    }

    /// Connects to the N−1 fellows; a simple loop suffices because the
    /// rendezvous pairs the two sides regardless of calling order.
    fn establish_clique(&mut self) -> Result<(), VfError> {
        for i in 0..self.n() {
            if i == self.this_voter() {
                continue;
            }
            let rid = request_id(self.shared.farm_id, i, self.this_voter());
            match self.shared.registry().connect(
                self.shared.local_node,
                self.shared.nodes[i],
                rid,
                self.shared.connect_timeout,
            ) {
                Ok(link) => {
                    self.fellows[i] = Some(link);
                    self.shared.emit(FarmEvent::Connected {
                        farm_id: self.shared.farm_id,
                        voter: self.this_voter(),
                        peer: i,
                    });
                }
                Err(err) => {
                    log::error!("cannot connect to voter {i}: {err}");
                    return Err(VfError::ConnectFailed);
                }
            }
        }
        Ok(())
    }

    /// Waits for messages from the user module and the cliqué until a destroy
    /// request completes.
    fn event_loop(&mut self) -> Result<(), VfError> {
        loop {
            let (chosen, map) = {
                let mut map = Vec::with_capacity(self.n());
                let mut options = Vec::with_capacity(self.n());
                for i in 0..self.n() {
                    if i == self.this_voter() {
                        map.push(i);
                        options.push(SelectOption::Receive(&self.user_link));
                    } else if let Some(link) = &self.fellows[i] {
                        map.push(i);
                        options.push(SelectOption::Receive(link));
                    }
                }
                (transport::select(&options), map)
            };
            match map.get(chosen) {
                Some(&idx) if idx == self.this_voter() => {
                    if let Flow::Quit = self.handle_user_turn()? {
                        return Ok(());
                    }
                }
                Some(&idx) => self.handle_clique_turn(idx)?,
                None => {
                    log::error!("unknown sender");
                    return Err(VfError::UnknownSender);
                }
            }
        }
    }

    /// Receives one batch from the user pipe and manages every message in it.
    fn handle_user_turn(&mut self) -> Result<Flow, VfError> {
        let bytes = self.user_link.recv().map_err(|err| {
            log::error!("can't receive a message batch from the user module: {err}");
            VfError::RecvFailed
        })?;
        let batch = ControlMessage::decode_batch(&bytes).inspect_err(|_| {
            log::error!("malformed message batch from the user module");
        })?;
        for msg in batch {
            if let Flow::Quit = self.handle_user_message(msg)? {
                // remaining batch messages are dropped with the voter
                return Ok(Flow::Quit);
            }
        }
        Ok(Flow::Continue)
    }

    fn handle_user_message(&mut self, msg: ControlMessage) -> Result<Flow, VfError> {
        match msg.code {
            MessageCode::InputMsg => {
                if self.ingest_input(self.this_voter(), msg.payload)? {
                    self.shared.flags.inp_msg_got.store(true, Ordering::Relaxed);
                    self.check_vote()?;
                    self.maybe_broadcast()?;
                }
            }
            MessageCode::Destroy => {
                let broadcast_done = self.shared.flags.broadcast_done.load(Ordering::Relaxed);
                if !broadcast_done && self.n() != 1 {
                    self.send_user_code(MessageCode::Refused)?;
                    self.shared.emit(FarmEvent::Refused {
                        farm_id: self.shared.farm_id,
                        voter: self.this_voter(),
                    });
                } else {
                    self.send_user_code(MessageCode::Quit)?;
                    self.shared.emit(FarmEvent::Quit {
                        farm_id: self.shared.farm_id,
                        voter: self.this_voter(),
                    });
                    return Ok(Flow::Quit);
                }
            }
            MessageCode::OutputLink => {
                let link = msg
                    .payload_token()
                    .and_then(|token| self.shared.registry().claim_link(token));
                match link {
                    Some(link) => {
                        self.output_link = Some(link);
                        if matches!(&self.result, Some(r) if r.is_success()) {
                            self.deliver_outcome()?;
                        }
                    }
                    None => {
                        log::error!("invalid output link control block - can't deliver");
                    }
                }
            }
            MessageCode::SelectAlg => self.algorithm = msg.length,
            MessageCode::ScalingFactor => match msg.payload_f64() {
                Some(value) => self.scaling_factor = value,
                None => log::error!("scaling factor message without a real payload"),
            },
            MessageCode::Epsilon => match msg.payload_f64() {
                Some(value) => self.epsilon = value,
                None => log::error!("epsilon message without a real payload"),
            },
            MessageCode::Reset => {
                self.inputs = vec![None; self.n()];
                self.input_nr = 0;
                self.input_length = 0;
                self.output_link = None;
                self.result = None;
                self.shared.flags.broadcast_done.store(false, Ordering::Relaxed);
                self.shared.flags.inp_msg_got.store(false, Ordering::Relaxed);
                self.shared.flags.destroy_requested.store(false, Ordering::Relaxed);
            }
            MessageCode::Nop => {}
            other => {
                log::debug!(
                    "voter {}: no action for user message code {}",
                    self.this_voter(),
                    other.code()
                );
            }
        }
        Ok(Flow::Continue)
    }

    /// Receives one wire message from fellow `sender` and manages it. A peer
    /// that closed its endpoint is marked inert rather than treated as a
    /// failure: voters terminate asynchronously on destroy.
    fn handle_clique_turn(&mut self, sender: usize) -> Result<(), VfError> {
        let link = self.fellows[sender].as_ref().expect("mapped links are open");
        let bytes = match link.recv() {
            Ok(bytes) => bytes,
            Err(_) => {
                log::debug!(
                    "voter {}: fellow {sender} closed its link",
                    self.this_voter()
                );
                self.fellows[sender] = None;
                return Ok(());
            }
        };
        let Some(wire) = WireMessage::decode(&bytes) else {
            log::error!("can't receive a whole message from voter {sender}");
            return Err(VfError::RecvFailed);
        };
        match MessageCode::from_code(wire.code) {
            Some(MessageCode::VoterInputMsg) => {
                if self.ingest_input(sender, wire.payload)? {
                    self.check_vote()?;
                    self.maybe_broadcast()?;
                }
            }
            Some(MessageCode::VoterDestroy)
            | Some(MessageCode::VoterError)
            | Some(MessageCode::VoterReset)
            | Some(MessageCode::VoterNop) => {
                // for the time being, no action
            }
            _ => {
                log::debug!(
                    "voter {}: no action for cliqué message code {}",
                    self.this_voter(),
                    wire.code
                );
            }
        }
        Ok(())
    }

    /// Records one input in the given slot. The first input fixes the common
    /// input length; a mismatch is fatal. A duplicate for an occupied slot is
    /// logged as a busy slot and dropped so it cannot inflate the input
    /// count.
    fn ingest_input(&mut self, slot: usize, payload: Vec<u8>) -> Result<bool, VfError> {
        if self.inputs[slot].is_some() {
            log::warn!(
                "voter {}: duplicated input message for slot {slot}",
                self.this_voter()
            );
            self.shared.fail(VfError::BusySlot);
            return Ok(false);
        }
        if self.input_length == 0 {
            self.input_length = payload.len();
        } else if self.input_length != payload.len() {
            log::error!("wrong input size");
            return Err(VfError::InputSize);
        }
        self.inputs[slot] = Some(payload);
        self.input_nr += 1;
        Ok(true)
    }

    /// Transmits this voter's input to every fellow when it is this voter's
    /// turn: its index equals the number of inputs gathered minus one, its
    /// user input is in hand, and it has not broadcast before.
    fn maybe_broadcast(&mut self) -> Result<(), VfError> {
        let turn = self.this_voter() + 1 == self.input_nr;
        let inp_msg_got = self.shared.flags.inp_msg_got.load(Ordering::Relaxed);
        let broadcast_done = self.shared.flags.broadcast_done.load(Ordering::Relaxed);
        if turn && inp_msg_got && !broadcast_done {
            self.broadcast_input()?;
            self.shared.flags.broadcast_done.store(true, Ordering::Relaxed);
        }
        Ok(())
    }

    /// Sends the own input to every fellow, in fan-out order.
    fn broadcast_input(&mut self) -> Result<(), VfError> {
        let own = self.inputs[self.this_voter()]
            .clone()
            .expect("broadcast requires the user input");
        let frame = WireMessage {
            code: MessageCode::VoterInputMsg.code(),
            payload: own,
        }
        .encode();
        self.shared.emit(FarmEvent::Broadcast {
            farm_id: self.shared.farm_id,
            voter: self.this_voter(),
        });
        for j in fan_out_order(self.this_voter(), self.n()) {
            let Some(link) = self.fellows[j].as_ref() else {
                log::error!("cannot send to voter {j}: link closed");
                return Err(VfError::SendFailed);
            };
            match link.send(&frame) {
                Ok(sent) if sent == frame.len() => {}
                _ => {
                    log::error!("cannot send to voter {j}");
                    return Err(VfError::SendFailed);
                }
            }
        }
        Ok(())
    }

    /// Runs the selected algorithm once all N inputs are present, reports
    /// DONE to the user module, and delivers through the output link when one
    /// is installed.
    fn check_vote(&mut self) -> Result<(), VfError> {
        if self.input_nr != self.n() {
            return Ok(());
        }
        let Some(alg) = AlgorithmId::from_code(self.algorithm) else {
            log::error!(
                "wrong algorithm number: {}, not in [0,{})",
                self.algorithm,
                ALGORITHM_COUNT
            );
            return Err(VfError::WrongAlgorithmId);
        };
        let result = {
            let inputs = VoteInputs::from_slots(&self.inputs, &self.shared.metric)
                .epsilon(self.epsilon)
                .scaling_factor(self.scaling_factor);
            algorithms::dispatch(alg, &inputs)?
        };
        self.shared.emit(FarmEvent::Voted {
            farm_id: self.shared.farm_id,
            voter: self.this_voter(),
            outcome: result.outcome,
        });
        let done = ControlMessage {
            code: MessageCode::Done,
            length: result.outcome.code(),
            payload: if result.is_success() { result.vote.clone() } else { Vec::new() },
        };
        self.send_user_message(&done)?;
        self.result = Some(result);
        if self.output_link.is_some() {
            self.deliver_outcome()?;
        }
        Ok(())
    }

    /// Sends the vote to the output module: the vote bytes on SUCCESS, a
    /// single zero byte on FAILURE.
    fn deliver_outcome(&mut self) -> Result<(), VfError> {
        let result = self.result.as_ref().expect("delivery requires a result");
        let link = self.output_link.as_ref().expect("delivery requires a link");
        let bytes: &[u8] = if result.is_success() { &result.vote } else { &[0u8] };
        match link.send(bytes) {
            Ok(sent) if sent == bytes.len() => {
                self.shared.emit(FarmEvent::Delivered {
                    farm_id: self.shared.farm_id,
                    voter: self.this_voter(),
                    bytes: bytes.len(),
                });
                Ok(())
            }
            _ => {
                log::error!(
                    "cannot deliver the {}",
                    if result.is_success() { "output" } else { "negative result" }
                );
                Err(VfError::DeliverFailed)
            }
        }
    }

    fn send_user_code(&self, code: MessageCode) -> Result<(), VfError> {
        self.send_user_message(&ControlMessage { code, length: 0, payload: Vec::new() })
    }

    fn send_user_message(&self, msg: &ControlMessage) -> Result<(), VfError> {
        let bytes = ControlMessage::encode_batch(std::slice::from_ref(msg));
        match self.user_link.send(&bytes) {
            Ok(sent) if sent == bytes.len() => Ok(()),
            _ => {
                log::error!("cannot send the message to the user module");
                Err(VfError::SendFailed)
            }
        }
    }

}
