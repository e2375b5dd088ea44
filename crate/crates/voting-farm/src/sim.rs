//! Scenario harness for desk-scale fault-masking experiments: drives n
//! user-module threads against one farm, injects input faults, and collects
//! per-voter outcomes plus the structured event log.
//!
//! A scenario is one voting round over n modules holding one input value
//! each. Faults act on values, not on the transport: a *corrupt* fault
//! replaces a module's input before it is sent, a *silent* fault suppresses
//! the input message entirely (the rest of the farm then stalls on the
//! ordered broadcast until the event timeout — a consequence of the
//! protocol, not a recovery strategy).
//!
//! Schedules are randomized from the scenario seed: every module sleeps a
//! seeded pseudo-random few milliseconds before activation and before each
//! send, so repeated runs exercise different interleavings reproducibly.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::farm::{EventSink, FarmEvent, FarmOptions, Machine};
use crate::metric;
use crate::protocol::{
    AlgorithmId, ControlMessage, MessageCode, Outcome, VfError, DEFAULT_EPSILON,
    DEFAULT_SCALING_FACTOR, MAX_VOTERS,
};

const SCENARIO_FARM_ID: i32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// One module's input: a scalar real (encoded as an 8-byte little-endian
/// double) or a raw hex byte string.
#[derive(Debug, Clone, PartialEq)]
pub enum InputValue {
    Real(f64),
    Bytes(Vec<u8>),
}

impl InputValue {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            InputValue::Real(x) => x.to_le_bytes().to_vec(),
            InputValue::Bytes(b) => b.clone(),
        }
    }

    /// Parses a decimal real, or `0x…` hex bytes.
    pub fn parse(text: &str) -> Result<InputValue, ConfigError> {
        let text = text.trim();
        if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
            if hex.is_empty() || hex.len() % 2 != 0 {
                return Err(invalid(format!("hex value needs an even digit count: {text:?}")));
            }
            let mut bytes = Vec::with_capacity(hex.len() / 2);
            for pair in hex.as_bytes().chunks(2) {
                let s = std::str::from_utf8(pair).expect("hex input is ascii");
                let byte = u8::from_str_radix(s, 16)
                    .map_err(|_| invalid(format!("bad hex digit in {text:?}")))?;
                bytes.push(byte);
            }
            return Ok(InputValue::Bytes(bytes));
        }
        text.parse::<f64>()
            .map(InputValue::Real)
            .map_err(|_| invalid(format!("not a real value: {text:?}")))
    }
}

impl fmt::Display for InputValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputValue::Real(x) => write!(f, "{x}"),
            InputValue::Bytes(b) => {
                write!(f, "0x")?;
                for byte in b {
                    write!(f, "{byte:02x}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FaultMode {
    /// Replace the module's input with this value.
    Corrupt(InputValue),
    /// Never send the input message.
    Silent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fault {
    pub module: usize,
    pub mode: FaultMode,
}

/// Parameters of one simulation round.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub n: usize,
    pub algorithm: AlgorithmId,
    pub epsilon: f64,
    pub scaling_factor: f64,
    pub inputs: Vec<InputValue>,
    pub faults: Vec<Fault>,
    pub timeout: Duration,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 0,
            algorithm: AlgorithmId::Majority,
            epsilon: DEFAULT_EPSILON,
            scaling_factor: DEFAULT_SCALING_FACTOR,
            inputs: Vec::new(),
            faults: Vec::new(),
            timeout: Duration::from_secs(2),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Loads a flat key = value config file.
    ///
    /// Recognized keys: `n`, `algorithm`, `epsilon`, `scaling_factor`,
    /// `inputs` (comma-separated values), `timeout` (seconds),
    /// `fault.<i>.mode` (`corrupt` | `silent`), `fault.<i>.value`, `seed`.
    /// Blank lines and `#` comments are ignored.
    pub fn from_file(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
        ScenarioConfig::parse(&fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
        let mut config = ScenarioConfig::default();
        let mut fault_modes: BTreeMap<usize, String> = BTreeMap::new();
        let mut fault_values: BTreeMap<usize, InputValue> = BTreeMap::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(invalid(format!("line {}: expected key = value", lineno + 1)));
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "n" => {
                    config.n = value
                        .parse()
                        .map_err(|_| invalid(format!("n must be an integer, got {value:?}")))?;
                }
                "algorithm" => {
                    config.algorithm = value.parse().map_err(ConfigError::Invalid)?;
                }
                "epsilon" => {
                    config.epsilon = value
                        .parse()
                        .map_err(|_| invalid(format!("epsilon must be a real, got {value:?}")))?;
                }
                "scaling_factor" => {
                    config.scaling_factor = value.parse().map_err(|_| {
                        invalid(format!("scaling_factor must be a real, got {value:?}"))
                    })?;
                }
                "inputs" => {
                    config.inputs = value
                        .split(',')
                        .map(InputValue::parse)
                        .collect::<Result<_, _>>()?;
                }
                "timeout" => {
                    let secs: f64 = value
                        .parse()
                        .map_err(|_| invalid(format!("timeout must be seconds, got {value:?}")))?;
                    if secs.is_nan() || secs <= 0.0 {
                        return Err(invalid("timeout must be positive"));
                    }
                    config.timeout = Duration::from_secs_f64(secs);
                }
                "seed" => {
                    config.seed = value
                        .parse()
                        .map_err(|_| invalid(format!("seed must be an integer, got {value:?}")))?;
                }
                _ => {
                    if let Some(rest) = key.strip_prefix("fault.") {
                        let Some((index, field)) = rest.split_once('.') else {
                            return Err(invalid(format!("bad fault key {key:?}")));
                        };
                        let index: usize = index
                            .parse()
                            .map_err(|_| invalid(format!("bad fault index in {key:?}")))?;
                        match field {
                            "mode" => {
                                fault_modes.insert(index, value.to_ascii_lowercase());
                            }
                            "value" => {
                                fault_values.insert(index, InputValue::parse(value)?);
                            }
                            _ => return Err(invalid(format!("unknown fault field {key:?}"))),
                        }
                    } else {
                        return Err(invalid(format!("unknown key {key:?}")));
                    }
                }
            }
        }

        for (index, mode) in fault_modes {
            let mode = match mode.as_str() {
                "silent" => FaultMode::Silent,
                "corrupt" => {
                    let value = fault_values.remove(&index).ok_or_else(|| {
                        invalid(format!("fault.{index}.mode = corrupt needs fault.{index}.value"))
                    })?;
                    FaultMode::Corrupt(value)
                }
                other => return Err(invalid(format!("unknown fault mode {other:?}"))),
            };
            config.faults.push(Fault { module: index, mode });
        }
        if let Some((index, _)) = fault_values.into_iter().next() {
            return Err(invalid(format!("fault.{index}.value without fault.{index}.mode")));
        }

        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 || self.n > MAX_VOTERS {
            return Err(invalid(format!("n must be in 1..={MAX_VOTERS}, got {}", self.n)));
        }
        if self.inputs.len() != self.n {
            return Err(invalid(format!(
                "expected {} inputs, got {}",
                self.n,
                self.inputs.len()
            )));
        }
        for fault in &self.faults {
            if fault.module >= self.n {
                return Err(invalid(format!(
                    "fault module index {} out of range (n = {})",
                    fault.module, self.n
                )));
            }
        }
        let mut modules: Vec<usize> = self.faults.iter().map(|f| f.module).collect();
        modules.sort_unstable();
        modules.dedup();
        if modules.len() != self.faults.len() {
            return Err(invalid("at most one fault per module"));
        }
        if self.timeout.is_zero() {
            return Err(invalid("timeout must be positive"));
        }
        Ok(())
    }

    fn fault_for(&self, module: usize) -> Option<&FaultMode> {
        self.faults
            .iter()
            .find(|f| f.module == module)
            .map(|f| &f.mode)
    }
}

/// What one user module observed for its voter.
#[derive(Debug, Clone, PartialEq)]
pub enum VoterStatus {
    /// The voter reported DONE with this outcome flag.
    Done(Outcome),
    /// No voter message arrived before the event timeout.
    TimedOut,
    /// An in-band error message with this code.
    Error(i32),
    /// Something other than DONE or an error arrived first.
    Unexpected(i32),
}

impl fmt::Display for VoterStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VoterStatus::Done(Outcome::Success) => write!(f, "DONE(SUCCESS)"),
            VoterStatus::Done(Outcome::Failure) => write!(f, "DONE(FAILURE)"),
            VoterStatus::TimedOut => write!(f, "TIMEOUT"),
            VoterStatus::Error(code) => write!(f, "ERROR({code})"),
            VoterStatus::Unexpected(code) => write!(f, "UNEXPECTED({code})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VoterReport {
    pub module: usize,
    pub fault: Option<FaultMode>,
    pub status: VoterStatus,
    /// Vote bytes for a successful DONE.
    pub value: Option<Vec<u8>>,
    pub last_error: Option<VfError>,
}

#[derive(Debug)]
pub struct SimReport {
    pub voters: Vec<VoterReport>,
    pub events: Vec<FarmEvent>,
    /// True iff every non-silent module reported DONE(SUCCESS) with identical
    /// vote bytes.
    pub agreed: bool,
    pub agreed_value: Option<Vec<u8>>,
}

impl SimReport {
    /// The scriptable surface: 0 when all non-silent voters agreed on a
    /// successful vote, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.agreed {
            0
        } else {
            1
        }
    }

    /// Voter indices in the order their broadcast events were recorded.
    pub fn broadcast_order(&self) -> Vec<usize> {
        self.events
            .iter()
            .filter_map(|e| match e {
                FarmEvent::Broadcast { voter, .. } => Some(*voter),
                _ => None,
            })
            .collect()
    }

    /// The human-readable per-voter table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<6} {:<16} {:<15} {}\n",
            "voter", "fault", "status", "outcome"
        ));
        for v in &self.voters {
            let fault = match &v.fault {
                None => "-".to_string(),
                Some(FaultMode::Silent) => "silent".to_string(),
                Some(FaultMode::Corrupt(val)) => format!("corrupt({val})"),
            };
            let value = match &v.value {
                Some(bytes) => format_value(bytes),
                None => "-".to_string(),
            };
            out.push_str(&format!(
                "{:<6} {:<16} {:<15} {}\n",
                v.module,
                fault,
                v.status.to_string(),
                value
            ));
        }
        out
    }
}

/// Formats vote bytes: 8-byte strings as the real they decode to, anything
/// else as hex.
pub fn format_value(bytes: &[u8]) -> String {
    match <[u8; 8]>::try_from(bytes) {
        Ok(arr) => f64::from_le_bytes(arr).to_string(),
        Err(_) => {
            let mut s = String::from("0x");
            for b in bytes {
                s.push_str(&format!("{b:02x}"));
            }
            s
        }
    }
}

/// Runs one scenario to completion: builds n coherently-described farms (one
/// per simulated user module), applies faults, collects every module's
/// outcome, and returns the report with the event log.
pub fn run_scenario(config: &ScenarioConfig) -> Result<SimReport, ConfigError> {
    config.validate()?;
    let machine = Machine::new();
    let events: Arc<Mutex<Vec<FarmEvent>>> = Arc::new(Mutex::new(Vec::new()));
    let sink: EventSink = {
        let events = Arc::clone(&events);
        Arc::new(move |event| events.lock().unwrap().push(event))
    };

    let mut handles = Vec::with_capacity(config.n);
    for module in 0..config.n {
        let machine = machine.clone();
        let config = config.clone();
        let sink = Arc::clone(&sink);
        handles.push(
            std::thread::Builder::new()
                .name(format!("module-{module}"))
                .spawn(move || run_module(&machine, &config, module, sink))
                .expect("spawn user module"),
        );
    }
    let mut voters: Vec<VoterReport> = handles
        .into_iter()
        .map(|h| h.join().expect("user module panicked"))
        .collect();
    voters.sort_by_key(|v| v.module);

    let mut agreed = true;
    let mut agreed_value: Option<Vec<u8>> = None;
    for report in &voters {
        if matches!(report.fault, Some(FaultMode::Silent)) {
            continue;
        }
        match (&report.status, &report.value) {
            (VoterStatus::Done(Outcome::Success), Some(value)) => match &agreed_value {
                None => agreed_value = Some(value.clone()),
                Some(first) if first == value => {}
                Some(_) => agreed = false,
            },
            _ => agreed = false,
        }
    }
    if !agreed {
        agreed_value = None;
    }

    let events = Arc::try_unwrap(events)
        .map(|m| m.into_inner().unwrap())
        .unwrap_or_else(|arc| arc.lock().unwrap().clone());
    Ok(SimReport { voters, events, agreed, agreed_value })
}

fn run_module(
    machine: &Machine,
    config: &ScenarioConfig,
    module: usize,
    sink: EventSink,
) -> VoterReport {
    let mut rng =
        ChaCha8Rng::seed_from_u64(config.seed ^ (module as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let jitter = |rng: &mut ChaCha8Rng| {
        std::thread::sleep(Duration::from_micros(rng.gen_range(0..8_000)));
    };
    let fault = config.fault_for(module).cloned();
    let options = FarmOptions {
        event_timeout: config.timeout,
        connect_timeout: config.timeout.max(Duration::from_secs(5)),
        events: Some(sink),
    };

    let node = machine.node(module as i32);
    let fail = |err: VfError| VoterReport {
        module,
        fault: fault.clone(),
        status: VoterStatus::Error(err.code()),
        value: None,
        last_error: Some(err),
    };

    let mut farm =
        match node.open_farm_with(SCENARIO_FARM_ID, metric::absolute_difference(), options) {
            Ok(farm) => farm,
            Err(err) => return fail(err),
        };
    for peer in 0..config.n {
        if let Err(err) = farm.add_voter(peer as i32, 100 + peer as i32) {
            return fail(err);
        }
    }
    jitter(&mut rng);
    if let Err(err) = farm.run() {
        return fail(err);
    }

    let setup = [
        ControlMessage::algorithm(config.algorithm),
        ControlMessage::epsilon(config.epsilon),
        ControlMessage::scaling_factor(config.scaling_factor),
    ];
    jitter(&mut rng);
    if let Err(err) = farm.control_list(&setup) {
        return fail(err);
    }

    let sent_input = match &fault {
        Some(FaultMode::Silent) => None,
        Some(FaultMode::Corrupt(value)) => Some(value.encode()),
        None => Some(config.inputs[module].encode()),
    };
    if let Some(bytes) = sent_input {
        jitter(&mut rng);
        let input = match ControlMessage::input(bytes) {
            Ok(msg) => msg,
            Err(err) => return fail(err),
        };
        if let Err(err) = farm.control(&input) {
            return fail(err);
        }
    }

    let reply = farm.get();
    let (status, value) = match reply.code {
        MessageCode::Done => {
            let outcome = Outcome::from_code(reply.length).unwrap_or(Outcome::Failure);
            let value = (outcome == Outcome::Success).then(|| reply.payload.clone());
            (VoterStatus::Done(outcome), value)
        }
        MessageCode::Error if reply.length == VfError::EventTimeout.code() => {
            (VoterStatus::TimedOut, None)
        }
        MessageCode::Error => (VoterStatus::Error(reply.length), None),
        other => (VoterStatus::Unexpected(other.code()), None),
    };

    // orderly teardown only when the round completed; a stalled farm is
    // abandoned (dropping it closes the pipe and the voter winds down)
    if matches!(status, VoterStatus::Done(_)) && farm.close().is_ok() {
        let reply = farm.get();
        if reply.code == MessageCode::Quit {
            if let Some(Err(err)) = farm.join_voter() {
                log::warn!("voter of module {module} exited with {err}");
            }
        }
    }

    VoterReport {
        module,
        fault,
        status,
        value,
        last_error: farm.last_error(),
    }
}
