//! Self-contained in-process message-passing substrate: paired link
//! endpoints, request-id–matched rendezvous connection, blocking whole-message
//! sends and receives, and a select-with-deadline primitive.
//!
//! Links are bidirectional and reliable; between a fixed pair of endpoints
//! messages arrive in send order and each is received exactly once, as one
//! unit. Sends never block (capacity is unbounded); `recv` and `select` block
//! only the caller. An endpoint may be moved between threads but has one
//! logical owner at a time.
//!
//! Node ids are plain integers; a [`Registry`] is the scope of one simulated
//! machine run and holds the rendezvous table that pairs the two sides of a
//! `connect` call.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, Sender, TryRecvError};
use thiserror::Error;

/// Logical machine label; one transport registry serves many nodes.
pub type NodeId = i32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TransportError {
    /// The peer endpoint has been dropped.
    #[error("peer endpoint closed")]
    Closed,
    /// No counterpart called `connect` within the bound.
    #[error("rendezvous timed out")]
    Timeout,
    /// A rendezvous for this (node pair, request id) is already pending from
    /// the same side.
    #[error("request id already in use")]
    Busy,
}

/// One endpoint of a bidirectional in-process link.
#[derive(Debug)]
pub struct Link {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    // Messages pulled off the channel while probing readiness in `select`;
    // served before the channel to preserve FIFO order.
    stash: Mutex<VecDeque<Vec<u8>>>,
}

/// Creates a connected pair of endpoints: a message sent on one side is
/// receivable on the other.
pub fn link_pair() -> (Link, Link) {
    let (tx_ab, rx_ab) = unbounded();
    let (tx_ba, rx_ba) = unbounded();
    let a = Link { tx: tx_ab, rx: rx_ba, stash: Mutex::new(VecDeque::new()) };
    let b = Link { tx: tx_ba, rx: rx_ab, stash: Mutex::new(VecDeque::new()) };
    (a, b)
}

impl Link {
    /// Transmits one message. Returns the byte count on success, which always
    /// equals the payload length.
    pub fn send(&self, payload: &[u8]) -> Result<usize, TransportError> {
        self.tx
            .send(payload.to_vec())
            .map_err(|_| TransportError::Closed)?;
        Ok(payload.len())
    }

    /// Blocks until one message is available and returns it whole. Fails once
    /// the peer is closed and the queue is drained.
    pub fn recv(&self) -> Result<Vec<u8>, TransportError> {
        if let Some(m) = self.stash.lock().unwrap().pop_front() {
            return Ok(m);
        }
        self.rx.recv().map_err(|_| TransportError::Closed)
    }

    /// True when a `recv` would not block: a message is queued or the peer is
    /// closed (in which case `recv` fails immediately).
    fn ready(&self) -> bool {
        let mut stash = self.stash.lock().unwrap();
        if !stash.is_empty() {
            return true;
        }
        match self.rx.try_recv() {
            Ok(m) => {
                stash.push_back(m);
                true
            }
            Err(TryRecvError::Empty) => false,
            Err(TryRecvError::Disconnected) => true,
        }
    }
}

/// One branch of a `select`: readiness to receive on a link, or an absolute
/// deadline.
pub enum SelectOption<'a> {
    Receive(&'a Link),
    Deadline(Instant),
}

/// Blocks until one option is ready and returns its index.
///
/// Receive options take priority: a deadline index is returned only once the
/// deadline has passed with no receive ready. Among simultaneously ready
/// receive options the lowest index wins, deterministically.
///
/// # Panics
///
/// Panics if `options` is empty.
pub fn select(options: &[SelectOption<'_>]) -> usize {
    assert!(!options.is_empty(), "select needs at least one option");
    loop {
        for (i, opt) in options.iter().enumerate() {
            if let SelectOption::Receive(link) = opt {
                if link.ready() {
                    return i;
                }
            }
        }
        let now = Instant::now();
        let mut earliest: Option<Instant> = None;
        for (i, opt) in options.iter().enumerate() {
            if let SelectOption::Deadline(t) = opt {
                if now >= *t {
                    return i;
                }
                earliest = Some(earliest.map_or(*t, |e| e.min(*t)));
            }
        }

        // Nothing ready: wait for channel activity or the earliest deadline,
        // then rescan (rescanning keeps the lowest-index tie-break).
        let mut sel = crossbeam_channel::Select::new();
        let mut any_receive = false;
        for opt in options {
            if let SelectOption::Receive(link) = opt {
                sel.recv(&link.rx);
                any_receive = true;
            }
        }
        match (any_receive, earliest) {
            (true, Some(deadline)) => {
                let _ = sel.ready_deadline(deadline);
            }
            (true, None) => {
                let _ = sel.ready();
            }
            (false, Some(deadline)) => {
                std::thread::sleep(deadline.saturating_duration_since(Instant::now()));
            }
            (false, None) => unreachable!("no receive option and no deadline"),
        }
    }
}

type RendezvousKey = (NodeId, NodeId, i32);

struct Pending {
    id: u64,
    initiator: NodeId,
    link: Option<Link>,
}

/// Per-machine transport state: the rendezvous table behind [`Registry::connect`]
/// and a token table for handing link endpoints through opaque messages.
pub struct Registry {
    rendezvous: Mutex<HashMap<RendezvousKey, Pending>>,
    arrived: Condvar,
    tokens: Mutex<HashMap<u64, Link>>,
    next_id: AtomicU64,
}

impl Default for Registry {
    fn default() -> Self {
        Registry::new()
    }
}

impl Registry {
    pub fn new() -> Registry {
        Registry {
            rendezvous: Mutex::new(HashMap::new()),
            arrived: Condvar::new(),
            tokens: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    /// Establishes a link between two parties that call `connect` with
    /// mirrored node arguments and the same request id, in either order.
    /// Neither side is distinguished as client or server.
    ///
    /// Blocks until the counterpart arrives, up to `bound`.
    pub fn connect(
        &self,
        local: NodeId,
        remote: NodeId,
        request_id: i32,
        bound: Duration,
    ) -> Result<Link, TransportError> {
        debug_assert!(request_id > 0, "request ids are positive");
        let key = (local.min(remote), local.max(remote), request_id);
        let deadline = Instant::now() + bound;

        let mut table = self.rendezvous.lock().unwrap();
        if let Some(pending) = table.get_mut(&key) {
            if pending.initiator == local {
                return Err(TransportError::Busy);
            }
            let link = pending.link.take().expect("pending rendezvous holds a link");
            table.remove(&key);
            self.arrived.notify_all();
            return Ok(link);
        }

        let my_id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let (mine, theirs) = link_pair();
        table.insert(key, Pending { id: my_id, initiator: local, link: Some(theirs) });
        loop {
            let still_mine = matches!(table.get(&key), Some(p) if p.id == my_id);
            if !still_mine {
                return Ok(mine);
            }
            let now = Instant::now();
            if now >= deadline {
                table.remove(&key);
                return Err(TransportError::Timeout);
            }
            let (guard, _) = self
                .arrived
                .wait_timeout(table, deadline - now)
                .unwrap();
            table = guard;
        }
    }

    /// Parks a link endpoint and returns an opaque token that can travel
    /// inside a message payload.
    pub fn register_link(&self, link: Link) -> u64 {
        let token = self.next_id.fetch_add(1, Ordering::Relaxed);
        self.tokens.lock().unwrap().insert(token, link);
        token
    }

    /// Redeems a token produced by [`Registry::register_link`]. Each token is
    /// claimable once.
    pub fn claim_link(&self, token: u64) -> Option<Link> {
        self.tokens.lock().unwrap().remove(&token)
    }
}
