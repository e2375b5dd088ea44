//! The user-module–facing lifecycle API: declare, describe, activate,
//! control, read, and destroy a voting farm.
//!
//! A [`Machine`] stands for one simulated machine run and owns the transport
//! registry; a [`NodeHandle`] fixes the local node id a farm is opened from.
//! Every user module that assembles the same farm must open it with the same
//! farm id and describe it with the same `add_voter` sequence; exactly one
//! entry must name the local node.
//!
//! One farm descriptor is driven by one user thread. After [`VotingFarm::run`]
//! the voter thread owns its half of the user pipe; [`VotingFarm::get`] and
//! the control operations may not be called concurrently on the same farm
//! from two threads. Distinct farms are fully independent.
//!
//! Errors are reported both as `Result` values and through a queryable
//! last-error cell: per farm for farm operations ([`VotingFarm::last_error`]),
//! per thread for errors that precede the farm ([`last_error`]).

use std::cell::Cell;
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicI32, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::metric::Metric;
use crate::protocol::{
    ControlMessage, MessageCode, Outcome, VfError, DEFAULT_EVENT_TIMEOUT, MAX_FARMS,
    MAX_MSGS_PER_BATCH, MAX_SEND_ARGS, MAX_VOTERS,
};
use crate::transport::{self, Link, NodeId, Registry, SelectOption};
use crate::voter;

thread_local! {
    static THREAD_ERROR: Cell<i32> = const { Cell::new(0) };
}

/// The last error raised on this thread by an operation that has no farm to
/// charge it to (a failed open).
pub fn last_error() -> Option<VfError> {
    VfError::from_code(THREAD_ERROR.with(|c| c.get()))
}

fn thread_fail(err: VfError) -> VfError {
    THREAD_ERROR.with(|c| c.set(err.code()));
    err
}

/// Derives the rendezvous request id for the cliqué link between voters `v`
/// and `w` of the given farm. Symmetric in `v` and `w`, injective over
/// distinct (farm, voter-pair) combinations.
pub fn request_id(farm_id: i32, v: usize, w: usize) -> i32 {
    debug_assert!(v != w && v < MAX_VOTERS && w < MAX_VOTERS);
    let (a, b) = if v < w { (v, w) } else { (w, v) };
    (MAX_VOTERS * MAX_VOTERS) as i32 * (farm_id + 1) + (MAX_VOTERS * a + b) as i32
}

/// A structured trace record emitted by voters when an event sink is
/// installed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FarmEvent {
    /// A cliqué link to `peer` was established.
    Connected { farm_id: i32, voter: usize, peer: usize },
    /// This voter broadcast its input to the farm.
    Broadcast { farm_id: i32, voter: usize },
    /// This voter ran the voting algorithm.
    Voted { farm_id: i32, voter: usize, outcome: Outcome },
    /// The outcome was delivered on the output link.
    Delivered { farm_id: i32, voter: usize, bytes: usize },
    /// A destroy request was refused (broadcast still pending).
    Refused { farm_id: i32, voter: usize },
    /// The voter announced termination.
    Quit { farm_id: i32, voter: usize },
}

/// Receives [`FarmEvent`]s from voter threads, in a globally consistent order
/// when the sink serializes internally.
pub type EventSink = Arc<dyn Fn(FarmEvent) + Send + Sync>;

/// Tunables for one farm.
#[derive(Clone)]
pub struct FarmOptions {
    /// Bound on [`VotingFarm::get`] waiting for a voter message.
    pub event_timeout: Duration,
    /// Bound on each cliqué rendezvous during activation.
    pub connect_timeout: Duration,
    /// Optional sink for structured voter events.
    pub events: Option<EventSink>,
}

impl Default for FarmOptions {
    fn default() -> Self {
        FarmOptions {
            event_timeout: DEFAULT_EVENT_TIMEOUT,
            connect_timeout: DEFAULT_EVENT_TIMEOUT,
            events: None,
        }
    }
}

impl fmt::Debug for FarmOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FarmOptions")
            .field("event_timeout", &self.event_timeout)
            .field("connect_timeout", &self.connect_timeout)
            .field("events", &self.events.is_some())
            .finish()
    }
}

struct FarmRegistration {
    nodes: Vec<NodeId>,
    idents: Vec<i32>,
    active: usize,
}

pub(crate) struct MachineInner {
    pub(crate) registry: Registry,
    open_farms: Mutex<usize>,
    // descriptions of activated farms, keyed by farm id: every module of one
    // machine must describe the same farm identically
    descriptions: Mutex<std::collections::HashMap<i32, FarmRegistration>>,
}

impl MachineInner {
    /// Registers the description of an activating farm; fails when a farm
    /// with the same id is already active under a different description.
    fn register_description(
        &self,
        farm_id: i32,
        nodes: &[NodeId],
        idents: &[i32],
    ) -> Result<(), VfError> {
        let mut table = self.descriptions.lock().unwrap();
        match table.entry(farm_id) {
            std::collections::hash_map::Entry::Occupied(mut entry) => {
                let reg = entry.get_mut();
                if reg.nodes != nodes || reg.idents != idents {
                    return Err(VfError::InvalidFarm);
                }
                reg.active += 1;
            }
            std::collections::hash_map::Entry::Vacant(entry) => {
                entry.insert(FarmRegistration {
                    nodes: nodes.to_vec(),
                    idents: idents.to_vec(),
                    active: 1,
                });
            }
        }
        Ok(())
    }

    fn release_description(&self, farm_id: i32) {
        let mut table = self.descriptions.lock().unwrap();
        if let Some(reg) = table.get_mut(&farm_id) {
            reg.active -= 1;
            if reg.active == 0 {
                table.remove(&farm_id);
            }
        }
    }
}

/// One simulated machine run: the scope of node ids, rendezvous ids, and the
/// bound on simultaneously open farms.
#[derive(Clone)]
pub struct Machine {
    inner: Arc<MachineInner>,
}

impl Default for Machine {
    fn default() -> Self {
        Machine::new()
    }
}

impl Machine {
    pub fn new() -> Machine {
        Machine {
            inner: Arc::new(MachineInner {
                registry: Registry::new(),
                open_farms: Mutex::new(0),
                descriptions: Mutex::new(std::collections::HashMap::new()),
            }),
        }
    }

    /// A handle for operations performed from the given node.
    pub fn node(&self, node: NodeId) -> NodeHandle {
        NodeHandle { machine: self.clone(), node }
    }

    /// The machine's transport registry, for interoperating with farms at
    /// the link level (rendezvous with a voter, registering link tokens).
    pub fn registry(&self) -> &Registry {
        &self.inner.registry
    }

    /// Parks a link endpoint so it can travel to a voter inside an
    /// output-link control message; returns the token to wrap with
    /// [`ControlMessage::output_link`].
    pub fn register_output_link(&self, link: Link) -> u64 {
        self.inner.registry.register_link(link)
    }

    #[cfg(test)]
    pub(crate) fn test_inner(&self) -> Arc<MachineInner> {
        Arc::clone(&self.inner)
    }
}

/// A machine plus the local node id farms are opened from.
#[derive(Clone)]
pub struct NodeHandle {
    machine: Machine,
    node: NodeId,
}

impl NodeHandle {
    pub fn id(&self) -> NodeId {
        self.node
    }

    pub fn machine(&self) -> &Machine {
        &self.machine
    }

    /// Defines a voting farm with default options. The farm id must be
    /// positive and shared by every module assembling the same farm.
    pub fn open_farm(&self, farm_id: i32, metric: Metric) -> Result<VotingFarm, VfError> {
        self.open_farm_with(farm_id, metric, FarmOptions::default())
    }

    /// Defines a voting farm with explicit options.
    pub fn open_farm_with(
        &self,
        farm_id: i32,
        metric: Metric,
        options: FarmOptions,
    ) -> Result<VotingFarm, VfError> {
        if farm_id <= 0 {
            log::error!("illegal voting farm identifier ({farm_id}) --- should be greater than 0");
            return Err(thread_fail(VfError::WrongFarmId));
        }
        {
            let mut count = self.machine.inner.open_farms.lock().unwrap();
            if *count >= MAX_FARMS {
                log::error!("too many farms");
                return Err(thread_fail(VfError::TooManyFarms));
            }
            *count += 1;
        }
        let (user_link, voter_link) = transport::link_pair();
        Ok(VotingFarm {
            machine: Arc::clone(&self.machine.inner),
            local_node: self.node,
            farm_id,
            nodes: Vec::new(),
            idents: Vec::new(),
            this_voter: None,
            metric,
            options,
            user_link,
            voter_link: Some(voter_link),
            flags: Arc::new(FarmFlags::default()),
            last_error: Arc::new(AtomicI32::new(0)),
            activation: Activation::Unset,
            description: None,
            _slot: FarmSlot { machine: Arc::clone(&self.machine.inner) },
        })
    }
}

#[derive(Default)]
pub(crate) struct FarmFlags {
    pub(crate) broadcast_done: AtomicBool,
    pub(crate) inp_msg_got: AtomicBool,
    pub(crate) destroy_requested: AtomicBool,
}

/// The farm description snapshot handed to the voter thread at activation.
pub(crate) struct FarmShared {
    pub(crate) farm_id: i32,
    pub(crate) nodes: Vec<NodeId>,
    #[allow(dead_code)] // recorded per description; voters address peers by index
    pub(crate) idents: Vec<i32>,
    pub(crate) this_voter: usize,
    pub(crate) local_node: NodeId,
    pub(crate) metric: Metric,
    pub(crate) machine: Arc<MachineInner>,
    pub(crate) connect_timeout: Duration,
    pub(crate) events: Option<EventSink>,
    pub(crate) flags: Arc<FarmFlags>,
    pub(crate) last_error: Arc<AtomicI32>,
}

impl FarmShared {
    pub(crate) fn registry(&self) -> &Registry {
        &self.machine.registry
    }

    pub(crate) fn fail(&self, err: VfError) -> VfError {
        self.last_error.store(err.code(), Ordering::Relaxed);
        err
    }

    pub(crate) fn emit(&self, event: FarmEvent) {
        if let Some(sink) = &self.events {
            sink(event);
        }
    }
}

enum Activation {
    Unset,
    Running(JoinHandle<Result<(), VfError>>),
    Terminated,
}

struct FarmSlot {
    machine: Arc<MachineInner>,
}

impl Drop for FarmSlot {
    fn drop(&mut self) {
        *self.machine.open_farms.lock().unwrap() -= 1;
    }
}

struct DescriptionGuard {
    machine: Arc<MachineInner>,
    farm_id: i32,
}

impl Drop for DescriptionGuard {
    fn drop(&mut self) {
        self.machine.release_description(self.farm_id);
    }
}

/// A declared voting farm, as seen by its user module.
pub struct VotingFarm {
    machine: Arc<MachineInner>,
    local_node: NodeId,
    farm_id: i32,
    nodes: Vec<NodeId>,
    idents: Vec<i32>,
    this_voter: Option<usize>,
    metric: Metric,
    options: FarmOptions,
    user_link: Link,
    voter_link: Option<Link>,
    flags: Arc<FarmFlags>,
    last_error: Arc<AtomicI32>,
    activation: Activation,
    description: Option<DescriptionGuard>,
    _slot: FarmSlot,
}

impl VotingFarm {
    pub fn id(&self) -> i32 {
        self.farm_id
    }

    /// Number of voters described so far.
    pub fn voter_count(&self) -> usize {
        self.nodes.len()
    }

    /// Index of the voter described as local, once one has been added.
    pub fn local_voter(&self) -> Option<usize> {
        self.this_voter
    }

    pub fn is_active(&self) -> bool {
        matches!(self.activation, Activation::Running(_))
    }

    /// The last error charged to this farm, by either side of the pipe.
    pub fn last_error(&self) -> Option<VfError> {
        VfError::from_code(self.last_error.load(Ordering::Relaxed))
    }

    fn fail(&self, err: VfError) -> VfError {
        self.last_error.store(err.code(), Ordering::Relaxed);
        err
    }

    fn clear_error(&self) {
        self.last_error.store(0, Ordering::Relaxed);
    }

    /// Describes one voter as a (node, thread ident) couple, in farm-wide
    /// order. Records the single entry naming the local node as the local
    /// voter.
    pub fn add_voter(&mut self, node: NodeId, ident: i32) -> Result<(), VfError> {
        if self.nodes.len() >= MAX_VOTERS {
            log::error!("stack overflow (increase the farm bound; current value is {MAX_VOTERS})");
            return Err(self.fail(VfError::Overflow));
        }
        if node == self.local_node {
            if self.this_voter.is_some() {
                log::error!("there must be only one local voter");
                return Err(self.fail(VfError::TooManyLocalVoters));
            }
            self.this_voter = Some(self.nodes.len());
        }
        self.nodes.push(node);
        self.idents.push(ident);
        self.clear_error();
        Ok(())
    }

    /// Turns the passive description into a living farm by spawning the local
    /// voter thread.
    pub fn run(&mut self) -> Result<(), VfError> {
        if self.nodes.is_empty() {
            log::error!(
                "voting farm {} needs to be described (a voter description is probably missing)",
                self.farm_id
            );
            return Err(self.fail(VfError::Undescribed));
        }
        let Some(this_voter) = self.this_voter else {
            log::error!("no voter has been defined to be local");
            return Err(self.fail(VfError::NoLocalVoter));
        };
        if self.voter_link.is_none() {
            // the pipe's voter side is gone: the farm was already activated
            log::error!("corrupted or invalid voting farm object");
            return Err(self.fail(VfError::InvalidFarm));
        }
        // modules of one machine must agree on what a farm id describes
        if let Err(err) = self.machine.register_description(self.farm_id, &self.nodes, &self.idents)
        {
            log::error!(
                "voting farm {} is described inconsistently across this machine's modules",
                self.farm_id
            );
            return Err(self.fail(err));
        }
        self.description =
            Some(DescriptionGuard { machine: Arc::clone(&self.machine), farm_id: self.farm_id });
        let voter_link = self.voter_link.take().expect("checked above");
        let shared = Arc::new(FarmShared {
            farm_id: self.farm_id,
            nodes: self.nodes.clone(),
            idents: self.idents.clone(),
            this_voter,
            local_node: self.local_node,
            metric: Arc::clone(&self.metric),
            machine: Arc::clone(&self.machine),
            connect_timeout: self.options.connect_timeout,
            events: self.options.events.clone(),
            flags: Arc::clone(&self.flags),
            last_error: Arc::clone(&self.last_error),
        });
        let spawned = std::thread::Builder::new()
            .name(format!("voter-{}-{}", self.farm_id, this_voter))
            .spawn(move || voter::run(shared, voter_link));
        match spawned {
            Ok(handle) => {
                self.activation = Activation::Running(handle);
                self.clear_error();
                Ok(())
            }
            Err(err) => {
                log::error!("cannot start a voter thread: {err}");
                Err(self.fail(VfError::SpawnFailed))
            }
        }
    }

    /// Sends a batch of 1 to [`MAX_MSGS_PER_BATCH`] messages to the local
    /// voter as one transport unit.
    pub fn control_list(&self, msgs: &[ControlMessage]) -> Result<(), VfError> {
        if self.nodes.is_empty() {
            log::error!(
                "voting farm {} needs to be described (a voter description is probably missing)",
                self.farm_id
            );
            return Err(self.fail(VfError::Undescribed));
        }
        if matches!(self.activation, Activation::Unset) {
            log::error!(
                "voting farm {} needs to be activated (a run is probably missing)",
                self.farm_id
            );
            return Err(self.fail(VfError::Inactive));
        }
        if msgs.is_empty() || msgs.len() > MAX_MSGS_PER_BATCH {
            log::error!(
                "wrong message number ({}) --- should be between 1 and {}",
                msgs.len(),
                MAX_MSGS_PER_BATCH
            );
            return Err(self.fail(VfError::WrongMessageCount));
        }
        let batch = ControlMessage::encode_batch(msgs);
        match self.user_link.send(&batch) {
            Ok(sent) if sent == batch.len() => {
                self.clear_error();
                Ok(())
            }
            _ => {
                log::error!("cannot send the message to the local voter");
                Err(self.fail(VfError::SendFailed))
            }
        }
    }

    /// Sends one message to the local voter.
    pub fn control(&self, msg: &ControlMessage) -> Result<(), VfError> {
        self.control_list(std::slice::from_ref(msg))
    }

    /// Copies up to [`MAX_SEND_ARGS`] messages into one batch and delegates to
    /// [`VotingFarm::control_list`] (which enforces its own batch bound).
    pub fn send(&self, msgs: &[ControlMessage]) -> Result<(), VfError> {
        let clamped = &msgs[..msgs.len().min(MAX_SEND_ARGS)];
        self.control_list(clamped)
    }

    /// Waits up to the event timeout for the next voter-to-user message
    /// (DONE, QUIT, REFUSED, ERROR).
    ///
    /// Failures are reported in-band as `{code: Error, length: error code}`
    /// messages, mirroring the queryable last-error cell.
    pub fn get(&self) -> ControlMessage {
        let deadline = Instant::now() + self.options.event_timeout;
        let options = [
            SelectOption::Receive(&self.user_link),
            SelectOption::Deadline(deadline),
        ];
        match transport::select(&options) {
            0 => match self.user_link.recv() {
                Ok(bytes) => match ControlMessage::decode_batch(&bytes) {
                    Ok(mut msgs) if !msgs.is_empty() => msgs.remove(0),
                    _ => {
                        log::error!("can't receive a message from the local voter");
                        self.error_message(VfError::RecvFailed)
                    }
                },
                Err(err) => {
                    log::error!("can't receive a message from the local voter: {err}");
                    self.error_message(VfError::RecvFailed)
                }
            },
            1 => {
                log::error!(
                    "timeout condition reached (maybe the event timeout of {:?} should be enlarged?)",
                    self.options.event_timeout
                );
                self.error_message(VfError::EventTimeout)
            }
            n => {
                log::error!("can't select --- returned index is {n}");
                self.error_message(VfError::SelectFailed)
            }
        }
    }

    /// Requests voter termination by sending a destroy message. The voter
    /// answers QUIT (and terminates) or REFUSED; read the reply with
    /// [`VotingFarm::get`].
    pub fn close(&self) -> Result<(), VfError> {
        self.control(&ControlMessage::destroy())
    }

    /// Waits for the voter thread to finish and returns its exit status.
    /// `None` when the farm was never activated or was already joined.
    pub fn join_voter(&mut self) -> Option<Result<(), VfError>> {
        match std::mem::replace(&mut self.activation, Activation::Terminated) {
            Activation::Running(handle) => {
                Some(handle.join().unwrap_or_else(|panic| std::panic::resume_unwind(panic)))
            }
            Activation::Unset => {
                self.activation = Activation::Unset;
                None
            }
            Activation::Terminated => None,
        }
    }

    fn error_message(&self, err: VfError) -> ControlMessage {
        self.fail(err);
        ControlMessage {
            code: MessageCode::Error,
            length: err.code(),
            payload: Vec::new(),
        }
    }
}

impl fmt::Debug for VotingFarm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VotingFarm")
            .field("farm_id", &self.farm_id)
            .field("local_node", &self.local_node)
            .field("voters", &self.nodes)
            .field("this_voter", &self.this_voter)
            .field("active", &self.is_active())
            .finish()
    }
}
