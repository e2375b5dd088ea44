//! Shared protocol vocabulary: message codes, the error table, algorithm
//! identifiers, size limits, and the control-message and vote-result value
//! types exchanged between a user module and its local voter.
//!
//! Everything in here is an immutable value, safe to share and send between
//! threads.

use std::fmt;
use std::time::Duration;

/// Maximum number of voters in one farm (also the stack size of the
/// descriptor's node/ident stacks).
pub const MAX_VOTERS: usize = 16;

/// Maximum number of simultaneously open voting farms per machine.
pub const MAX_FARMS: usize = 64;

/// Maximum size in bytes of one input message.
pub const MAX_INPUT_BYTES: usize = 512;

/// Maximum number of control messages in one batch.
pub const MAX_MSGS_PER_BATCH: usize = 10;

/// Upper bound on the arguments accepted by [`crate::farm::VotingFarm::send`];
/// longer lists are truncated to this many messages.
pub const MAX_SEND_ARGS: usize = 31;

/// Default bound on waiting for a voter-to-user message.
pub const DEFAULT_EVENT_TIMEOUT: Duration = Duration::from_secs(10);

/// Default agreement threshold for the partition-based voting algorithms.
pub const DEFAULT_EPSILON: f64 = 5e-5;

/// Default denominator parameter of the weighted-averaging weights.
pub const DEFAULT_SCALING_FACTOR: f64 = 1.0;

/// Size of the error-description table: 27 failure codes plus "no error".
pub const ERROR_TABLE_LEN: usize = 28;

/// Number of voting algorithms (valid algorithm ids are `0..ALGORITHM_COUNT`).
pub const ALGORITHM_COUNT: usize = 7;

/// Phase codes a voter would report to a monitoring server. Defined for
/// completeness; nothing in this crate drives them.
pub mod phase {
    pub const INITIALISING: i32 = 0;
    pub const CONNECTING: i32 = 1;
    pub const BROADCASTING: i32 = 2;
    pub const VOTING: i32 = 3;
    pub const WAITING: i32 = 4;
    pub const FAILED: i32 = 5;
    pub const QUITTING: i32 = 6;
}

/// Codes carried by control messages.
///
/// The 1xx range travels between a user module and its local voter; the 2xx
/// range travels between voters of a cliqué. The two ranges are disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(i32)]
pub enum MessageCode {
    /// User → voter: an input value to vote on.
    InputMsg = 100,
    /// User → voter: a link token for delivering the vote to an output module.
    OutputLink = 101,
    /// User → voter: select the voting algorithm (the id rides in `length`).
    SelectAlg = 102,
    /// User → voter: terminate the voter.
    Destroy = 103,
    /// No operation.
    Nop = 104,
    /// User → voter: clear all state so a new voting session can start.
    Reset = 105,
    /// Voter → user: the requested operation was refused.
    Refused = 106,
    /// Voter → user: the voter is about to terminate.
    Quit = 107,
    /// Voter → user: voting finished; `length` holds the outcome flag.
    Done = 108,
    /// User → voter: set the ε agreement threshold (one double in the payload).
    Epsilon = 109,
    /// Voter → user: a generic error occurred; `length` holds the error code.
    Error = 110,
    /// User → voter: set the weighted-averaging scaling factor.
    ScalingFactor = 111,

    /// Voter → voter: a fellow voter's input value.
    VoterInputMsg = 200,
    /// Voter → voter: destroy notification. Currently ignored on receipt.
    VoterDestroy = 203,
    /// Voter → voter: no operation.
    VoterNop = 204,
    /// Voter → voter: reset notification. Currently ignored on receipt.
    VoterReset = 205,
    /// Voter → voter: error notification. Currently ignored on receipt.
    VoterError = 210,
}

impl MessageCode {
    /// All user ↔ voter codes, in numeric order.
    pub const USER_CODES: [MessageCode; 12] = [
        MessageCode::InputMsg,
        MessageCode::OutputLink,
        MessageCode::SelectAlg,
        MessageCode::Destroy,
        MessageCode::Nop,
        MessageCode::Reset,
        MessageCode::Refused,
        MessageCode::Quit,
        MessageCode::Done,
        MessageCode::Epsilon,
        MessageCode::Error,
        MessageCode::ScalingFactor,
    ];

    /// All voter ↔ voter codes, in numeric order.
    pub const VOTER_CODES: [MessageCode; 5] = [
        MessageCode::VoterInputMsg,
        MessageCode::VoterDestroy,
        MessageCode::VoterNop,
        MessageCode::VoterReset,
        MessageCode::VoterError,
    ];

    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn from_code(code: i32) -> Option<MessageCode> {
        MessageCode::USER_CODES
            .iter()
            .chain(MessageCode::VOTER_CODES.iter())
            .copied()
            .find(|c| c.code() == code)
    }

    /// True for codes exchanged inside the cliqué (the 2xx range).
    pub fn is_voter_to_voter(self) -> bool {
        self.code() >= 200
    }
}

/// Every failure condition the farm can report, with the numeric codes and
/// description strings of the error table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(i32)]
pub enum VfError {
    Overflow = -1,
    AllocFailed = -2,
    UndefinedFarm = -3,
    WrongNode = -4,
    GlobalIdFailed = -5,
    SpawnFailed = -6,
    ConnectFailed = -7,
    RecvFailed = -8,
    BroadcastFailed = -9,
    DeliverFailed = -10,
    BusySlot = -11,
    WrongFarmId = -12,
    InvalidMetric = -13,
    InvalidFarm = -14,
    NoLocalVoter = -15,
    TooManyLocalVoters = -16,
    WrongMessageCount = -17,
    SendFailed = -18,
    InputSize = -19,
    Undescribed = -20,
    Inactive = -21,
    UnknownSender = -22,
    EventTimeout = -23,
    SelectFailed = -24,
    WrongAlgorithmId = -25,
    NullPointer = -26,
    TooManyFarms = -27,
}

impl VfError {
    /// All failure codes, ordered -1 through -27.
    pub const ALL: [VfError; 27] = [
        VfError::Overflow,
        VfError::AllocFailed,
        VfError::UndefinedFarm,
        VfError::WrongNode,
        VfError::GlobalIdFailed,
        VfError::SpawnFailed,
        VfError::ConnectFailed,
        VfError::RecvFailed,
        VfError::BroadcastFailed,
        VfError::DeliverFailed,
        VfError::BusySlot,
        VfError::WrongFarmId,
        VfError::InvalidMetric,
        VfError::InvalidFarm,
        VfError::NoLocalVoter,
        VfError::TooManyLocalVoters,
        VfError::WrongMessageCount,
        VfError::SendFailed,
        VfError::InputSize,
        VfError::Undescribed,
        VfError::Inactive,
        VfError::UnknownSender,
        VfError::EventTimeout,
        VfError::SelectFailed,
        VfError::WrongAlgorithmId,
        VfError::NullPointer,
        VfError::TooManyFarms,
    ];

    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn from_code(code: i32) -> Option<VfError> {
        VfError::ALL.iter().copied().find(|e| e.code() == code)
    }

    /// The human-readable description from the error table.
    pub fn description(self) -> &'static str {
        match self {
            VfError::Overflow => "An internal stack has reached its upper limit",
            VfError::AllocFailed => "The system was not able to execute allocation",
            VfError::UndefinedFarm => "This operation requires a defined voting farm",
            VfError::WrongNode => "A wrong node has been specified",
            VfError::GlobalIdFailed => "The system was not able to get the global id",
            VfError::SpawnFailed => "The system was not able to execute CreateThread",
            VfError::ConnectFailed => "The system was not able to execute ConnectLink",
            VfError::RecvFailed => "The system was not able to execute RecvLink",
            VfError::BroadcastFailed => "The system was not able to perform broadcasting",
            VfError::DeliverFailed => "Invalid output (LinkCB_t*) - can't deliver",
            VfError::BusySlot => "Duplicated input message",
            VfError::WrongFarmId => "Invalid voting farm id",
            VfError::InvalidMetric => "Invalid metric function pointer",
            VfError::InvalidFarm => "Inconsistent voting farm object",
            VfError::NoLocalVoter => "No local voters---one voter has to be specified",
            VfError::TooManyLocalVoters => "More than one local voter has been specified",
            VfError::WrongMessageCount => "A wrong number of messages has been specified",
            VfError::SendFailed => "The system was not able to execute SendLink",
            VfError::InputSize => "Inconsistency in the size of the input message",
            VfError::Undescribed => "This operation requires a described voting farm",
            VfError::Inactive => "This operation requires an active voting farm",
            VfError::UnknownSender => "Inconsistency - sender unknown",
            VfError::EventTimeout => "Time-out reached during a Select()",
            VfError::SelectFailed => "A Select() returned an index out of range",
            VfError::WrongAlgorithmId => "Algorithm Id out of range",
            VfError::NullPointer => "NULL in a call-by-reference pointer",
            VfError::TooManyFarms => "Maximun number of opened voting farms exceeded",
        }
    }
}

impl fmt::Display for VfError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.description())
    }
}

impl std::error::Error for VfError {}

/// Looks up the description for a numeric error code. Code 0 is "no error";
/// codes outside the table map to a distinguishable "unknown error".
pub fn describe_error(code: i32) -> &'static str {
    if code == 0 {
        return "no error";
    }
    match VfError::from_code(code) {
        Some(e) => e.description(),
        None => "unknown error",
    }
}

/// The seven voting algorithms, in dispatch-table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(i32)]
pub enum AlgorithmId {
    /// Bitwise equality of all inputs.
    ExactConsensus = 0,
    /// Formalized majority: an ε-block holding more than half the inputs.
    Majority = 1,
    /// Generalized median: repeatedly discard the two most distant inputs.
    Median = 2,
    /// Formalized plurality: the largest ε-block, provided it is not a singleton.
    Plurality = 3,
    /// Weighted averaging with distance-product weights.
    WeightedAverage = 4,
    /// Per-input agreement count against a ⌊n/2⌋ threshold.
    SimpleMajority = 5,
    /// Arithmetic mean of the inputs.
    SimpleAverage = 6,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; ALGORITHM_COUNT] = [
        AlgorithmId::ExactConsensus,
        AlgorithmId::Majority,
        AlgorithmId::Median,
        AlgorithmId::Plurality,
        AlgorithmId::WeightedAverage,
        AlgorithmId::SimpleMajority,
        AlgorithmId::SimpleAverage,
    ];

    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn from_code(code: i32) -> Option<AlgorithmId> {
        AlgorithmId::ALL.iter().copied().find(|a| a.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmId::ExactConsensus => "exact-consensus",
            AlgorithmId::Majority => "majority",
            AlgorithmId::Median => "median",
            AlgorithmId::Plurality => "plurality",
            AlgorithmId::WeightedAverage => "weighted-average",
            AlgorithmId::SimpleMajority => "simple-majority",
            AlgorithmId::SimpleAverage => "simple-average",
        }
    }
}

impl From<AlgorithmId> for i32 {
    fn from(alg: AlgorithmId) -> i32 {
        alg.code()
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AlgorithmId {
    type Err = String;

    /// Parses either an algorithm name (hyphen or underscore separated) or a
    /// numeric id.
    fn from_str(s: &str) -> Result<AlgorithmId, String> {
        let normalized = s.trim().to_ascii_lowercase().replace('_', "-");
        let by_name = match normalized.as_str() {
            "exact" | "exact-consensus" | "exact-concensus" => Some(AlgorithmId::ExactConsensus),
            "majority" => Some(AlgorithmId::Majority),
            "median" => Some(AlgorithmId::Median),
            "plurality" => Some(AlgorithmId::Plurality),
            "weighted" | "weighted-avg" | "weighted-average" => Some(AlgorithmId::WeightedAverage),
            "simple-majority" => Some(AlgorithmId::SimpleMajority),
            "simple-average" | "average" => Some(AlgorithmId::SimpleAverage),
            _ => None,
        };
        if let Some(alg) = by_name {
            return Ok(alg);
        }
        if let Ok(code) = normalized.parse::<i32>() {
            if let Some(alg) = AlgorithmId::from_code(code) {
                return Ok(alg);
            }
        }
        Err(format!("unknown voting algorithm: {s:?}"))
    }
}

/// Flag reported with every vote: SUCCESS = 1, FAILURE = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(i32)]
pub enum Outcome {
    Failure = 0,
    Success = 1,
}

impl Outcome {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn from_code(code: i32) -> Option<Outcome> {
        match code {
            0 => Some(Outcome::Failure),
            1 => Some(Outcome::Success),
            _ => None,
        }
    }
}

/// A voting outcome: the flag plus the voted byte string.
///
/// On FAILURE the vote bytes are empty and must not be delivered as a vote;
/// consult `outcome` before reading `vote`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteResult {
    pub outcome: Outcome,
    pub vote: Vec<u8>,
}

impl VoteResult {
    pub fn success(vote: Vec<u8>) -> VoteResult {
        VoteResult { outcome: Outcome::Success, vote }
    }

    pub fn failure() -> VoteResult {
        VoteResult { outcome: Outcome::Failure, vote: Vec::new() }
    }

    pub fn is_success(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

/// A (code, payload, length) triple exchanged between a user module and its
/// local voter.
///
/// `length` is code-specific: for [`MessageCode::InputMsg`] it is the payload
/// size; for [`MessageCode::SelectAlg`] it carries the algorithm id; for
/// [`MessageCode::Done`] it carries the vote outcome flag; for
/// [`MessageCode::Error`] it carries an error code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlMessage {
    pub code: MessageCode,
    pub length: i32,
    pub payload: Vec<u8>,
}

impl ControlMessage {
    /// Builds an input message. The payload must hold between 1 and
    /// [`MAX_INPUT_BYTES`] bytes.
    pub fn input(payload: impl Into<Vec<u8>>) -> Result<ControlMessage, VfError> {
        let payload = payload.into();
        if payload.is_empty() || payload.len() > MAX_INPUT_BYTES {
            return Err(VfError::InputSize);
        }
        Ok(ControlMessage {
            code: MessageCode::InputMsg,
            length: payload.len() as i32,
            payload,
        })
    }

    /// Builds an algorithm-selection message. The id rides in the length
    /// field; an out-of-range id is accepted here and rejected at vote time.
    pub fn algorithm(alg: impl Into<i32>) -> ControlMessage {
        ControlMessage {
            code: MessageCode::SelectAlg,
            length: alg.into(),
            payload: Vec::new(),
        }
    }

    /// Builds a scaling-factor message. A zero factor is accepted here and
    /// reset to 1 at vote time.
    pub fn scaling_factor(sf: f64) -> ControlMessage {
        ControlMessage {
            code: MessageCode::ScalingFactor,
            length: std::mem::size_of::<f64>() as i32,
            payload: sf.to_le_bytes().to_vec(),
        }
    }

    /// Builds an ε-threshold message.
    pub fn epsilon(eps: f64) -> ControlMessage {
        ControlMessage {
            code: MessageCode::Epsilon,
            length: std::mem::size_of::<f64>() as i32,
            payload: eps.to_le_bytes().to_vec(),
        }
    }

    /// Builds an output-link message from a transport link token.
    pub fn output_link(token: u64) -> ControlMessage {
        ControlMessage {
            code: MessageCode::OutputLink,
            length: std::mem::size_of::<u64>() as i32,
            payload: token.to_le_bytes().to_vec(),
        }
    }

    pub fn destroy() -> ControlMessage {
        ControlMessage { code: MessageCode::Destroy, length: 0, payload: Vec::new() }
    }

    pub fn reset() -> ControlMessage {
        ControlMessage { code: MessageCode::Reset, length: 0, payload: Vec::new() }
    }

    pub fn nop() -> ControlMessage {
        ControlMessage { code: MessageCode::Nop, length: 0, payload: Vec::new() }
    }

    /// Decodes the payload as one little-endian double.
    pub fn payload_f64(&self) -> Option<f64> {
        let bytes: [u8; 8] = self.payload.as_slice().try_into().ok()?;
        Some(f64::from_le_bytes(bytes))
    }

    /// Decodes the payload as one little-endian link token.
    pub fn payload_token(&self) -> Option<u64> {
        let bytes: [u8; 8] = self.payload.as_slice().try_into().ok()?;
        Some(u64::from_le_bytes(bytes))
    }

    /// Serializes a batch of messages into one transport unit.
    ///
    /// Layout per message: code (i32 LE), length (i32 LE), payload size
    /// (u32 LE), payload bytes.
    pub fn encode_batch(msgs: &[ControlMessage]) -> Vec<u8> {
        let total: usize = msgs.iter().map(|m| 12 + m.payload.len()).sum();
        let mut out = Vec::with_capacity(total);
        for m in msgs {
            out.extend_from_slice(&m.code.code().to_le_bytes());
            out.extend_from_slice(&m.length.to_le_bytes());
            out.extend_from_slice(&(m.payload.len() as u32).to_le_bytes());
            out.extend_from_slice(&m.payload);
        }
        out
    }

    /// Decodes a batch previously produced by [`ControlMessage::encode_batch`].
    ///
    /// Messages with an unrecognized code are logged and skipped. A buffer
    /// that is not a whole sequence of messages yields [`VfError::RecvFailed`].
    pub fn decode_batch(bytes: &[u8]) -> Result<Vec<ControlMessage>, VfError> {
        let mut msgs = Vec::new();
        let mut pos = 0usize;
        while pos < bytes.len() {
            if bytes.len() - pos < 12 {
                return Err(VfError::RecvFailed);
            }
            let code = i32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
            let length = i32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap());
            let size = u32::from_le_bytes(bytes[pos + 8..pos + 12].try_into().unwrap()) as usize;
            pos += 12;
            if bytes.len() - pos < size {
                return Err(VfError::RecvFailed);
            }
            let payload = bytes[pos..pos + size].to_vec();
            pos += size;
            match MessageCode::from_code(code) {
                Some(code) => msgs.push(ControlMessage { code, length, payload }),
                None => log::debug!("ignoring message with unknown code {code}"),
            }
        }
        Ok(msgs)
    }
}
