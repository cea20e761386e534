//! Asynchronous message passing between fuzzing nodes.
//!
//! [`Transport`] exposes the four primitives the dissemination layer needs:
//! a non-blocking send that hands back a completion token, an any-source
//! probe, a receive for a probed source and an all-to-all exchange used by
//! ammuina rounds. [`InMemoryTransport`] is a deterministic implementation
//! driven by simulated ticks; an MPI binding would implement the same trait
//! on top of `MPI_Isend`/`MPI_Test`/`MPI_Iprobe`/`MPI_Recv`.
//!
//! Senders keep every outstanding message in a [`SendQueue`] until the
//! transport reports completion, then release it.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Rational;
use crate::types::{Message, MessageKind, NodeId, TestCase, Tick};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("destination {dest} is not a rank of a {n_nodes}-node campaign")]
    UnknownDestination { dest: NodeId, n_nodes: usize },
    #[error("node {node} attempted to send to itself")]
    SelfSend { node: NodeId },
    #[error("nothing deliverable from {from} to {me}")]
    NothingToReceive { me: NodeId, from: NodeId },
}

/// `delivery = send + base + ceil(per_byte * len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatencyModel {
    pub base_latency: Tick,
    pub per_byte_latency: Rational,
}

impl LatencyModel {
    pub fn new(base_latency: Tick, per_byte_latency: Rational) -> Self {
        LatencyModel {
            base_latency,
            per_byte_latency,
        }
    }

    pub fn delivery_tick(&self, send_tick: Tick, len: usize) -> Tick {
        send_tick + self.base_latency + self.per_byte_latency.mul_ceil(len as u64)
    }
}

/// Opaque completion token, the analog of an `MPI_Request`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SendHandle {
    seq: u64,
    delivery_tick: Tick,
}

impl SendHandle {
    pub fn seq(&self) -> u64 {
        self.seq
    }
}

/// An outbound message the sender must keep alive until completion.
#[derive(Debug, Clone)]
pub struct PendingSend {
    pub handle: SendHandle,
    pub dest: NodeId,
    pub message: Message,
    pub enqueued_at: Tick,
}

/// Per-node registry of in-flight sends.
#[derive(Debug, Clone, Default)]
pub struct SendQueue {
    entries: Vec<PendingSend>,
}

impl SendQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, pending: PendingSend) {
        self.entries.push(pending);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PendingSend] {
        &self.entries
    }

    /// Releases every completed entry, keeping the rest in order.
    pub fn poll_completions<T: Transport + ?Sized>(&mut self, transport: &T, now: Tick) -> usize {
        let before = self.entries.len();
        self.entries
            .retain(|pending| !transport.test(&pending.handle, now));
        before - self.entries.len()
    }
}

/// Result of an all-to-all exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exchange {
    /// `received[i]` holds every other node's contribution, in contributor rank order.
    pub received: Vec<Vec<TestCase>>,
    pub completes_at: Tick,
}

/// One logged send.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub tick: Tick,
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: MessageKind,
}

/// Running traffic totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficCounters {
    pub sent: u64,
    pub received: u64,
    pub interesting_inputs: u64,
    pub low_utility_notices: u64,
    pub ammuina_requests: u64,
    pub exchanges: u64,
    pub exchanged_cases: u64,
}

impl TrafficCounters {
    pub fn in_flight(&self) -> u64 {
        self.sent - self.received
    }
}

pub trait Transport {
    fn n_nodes(&self) -> usize;

    /// Schedules `msg` for delivery and returns immediately.
    fn send_async(
        &mut self,
        from: NodeId,
        dest: NodeId,
        msg: Message,
        now: Tick,
    ) -> Result<PendingSend, TransportError>;

    /// True once the send behind `handle` has completed.
    fn test(&self, handle: &SendHandle, now: Tick) -> bool;

    /// Source of the earliest deliverable message for `me`, without consuming it.
    fn probe(&self, me: NodeId, now: Tick) -> Option<NodeId>;

    fn receive(&mut self, me: NodeId, source: NodeId, now: Tick) -> Result<Message, TransportError>;

    /// All-to-all exchange; node `i` gets everything except its own contribution.
    fn exchange_all(&mut self, contributions: &[Vec<TestCase>], now: Tick) -> Exchange;

    fn counters(&self) -> TrafficCounters;
}

#[derive(Debug, Clone)]
struct Envelope {
    seq: u64,
    delivery_tick: Tick,
    msg: Message,
}

/// Deterministic single-process transport.
///
/// Channels are FIFO per `(source, dest)`. A message never overtakes an
/// earlier one on its channel: its delivery tick is the latency-model tick,
/// raised to the previous message's delivery tick when that is later.
/// Among channels, the earliest delivery tick wins and ties go to the lower
/// source rank.
#[derive(Debug, Clone)]
pub struct InMemoryTransport {
    n_nodes: usize,
    latency: LatencyModel,
    /// `channels[dest][source]`
    channels: Vec<Vec<VecDeque<Envelope>>>,
    /// Delivery tick of the most recent send per `[dest][source]`.
    channel_tail: Vec<Vec<Tick>>,
    next_seq: u64,
    counters: TrafficCounters,
    log: Option<Vec<LogEntry>>,
}

impl InMemoryTransport {
    pub fn new(n_nodes: usize, latency: LatencyModel) -> Self {
        InMemoryTransport {
            n_nodes,
            latency,
            channels: (0..n_nodes)
                .map(|_| (0..n_nodes).map(|_| VecDeque::new()).collect())
                .collect(),
            channel_tail: vec![vec![0; n_nodes]; n_nodes],
            next_seq: 0,
            counters: TrafficCounters::default(),
            log: None,
        }
    }

    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn latency(&self) -> LatencyModel {
        self.latency
    }

    pub fn log(&self) -> Option<&[LogEntry]> {
        self.log.as_deref()
    }

    pub fn take_log(&mut self) -> Option<Vec<LogEntry>> {
        self.log.take()
    }

    pub fn in_flight(&self) -> u64 {
        self.counters.in_flight()
    }

    fn record(&mut self, tick: Tick, src: NodeId, dst: NodeId, kind: MessageKind) {
        if let Some(log) = &mut self.log {
            log.push(LogEntry {
                tick,
                src,
                dst,
                kind,
            });
        }
    }

    fn check_rank(&self, node: NodeId) -> Result<(), TransportError> {
        if node.index() < self.n_nodes {
            Ok(())
        } else {
            Err(TransportError::UnknownDestination {
                dest: node,
                n_nodes: self.n_nodes,
            })
        }
    }
}

impl Transport for InMemoryTransport {
    fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    fn send_async(
        &mut self,
        from: NodeId,
        dest: NodeId,
        msg: Message,
        now: Tick,
    ) -> Result<PendingSend, TransportError> {
        self.check_rank(dest)?;
        self.check_rank(from)?;
        if from == dest {
            return Err(TransportError::SelfSend { node: from });
        }
        let (d, s) = (dest.index(), from.index());
        let delivery_tick = self
            .latency
            .delivery_tick(now, msg.wire_len())
            .max(self.channel_tail[d][s]);
        self.channel_tail[d][s] = delivery_tick;

        let seq = self.next_seq;
        self.next_seq += 1;
        let kind = msg.kind();
        match kind {
            MessageKind::InterestingInput => self.counters.interesting_inputs += 1,
            MessageKind::LowUtilityNotice => self.counters.low_utility_notices += 1,
            MessageKind::AmmuinaRequest => self.counters.ammuina_requests += 1,
            MessageKind::AmmuinaBatch => {}
        }
        self.counters.sent += 1;
        self.record(now, from, dest, kind);
        self.channels[d][s].push_back(Envelope {
            seq,
            delivery_tick,
            msg: msg.clone(),
        });
        Ok(PendingSend {
            handle: SendHandle { seq, delivery_tick },
            dest,
            message: msg,
            enqueued_at: now,
        })
    }

    fn test(&self, handle: &SendHandle, now: Tick) -> bool {
        handle.delivery_tick <= now
    }

    fn probe(&self, me: NodeId, now: Tick) -> Option<NodeId> {
        let inbox = self.channels.get(me.index())?;
        inbox
            .iter()
            .enumerate()
            .filter_map(|(src, chan)| {
                chan.front()
                    .filter(|env| env.delivery_tick <= now)
                    .map(|env| (env.delivery_tick, src))
            })
            .min()
            .map(|(_, src)| NodeId::from(src))
    }

    fn receive(&mut self, me: NodeId, source: NodeId, now: Tick) -> Result<Message, TransportError> {
        let nothing = TransportError::NothingToReceive { me, from: source };
        let chan = self
            .channels
            .get_mut(me.index())
            .and_then(|inbox| inbox.get_mut(source.index()))
            .ok_or(nothing.clone())?;
        match chan.front() {
            Some(env) if env.delivery_tick <= now => {
                let env = chan.pop_front().expect("front exists");
                debug_assert!(env.seq < self.next_seq);
                self.counters.received += 1;
                Ok(env.msg)
            }
            _ => Err(nothing),
        }
    }

    fn exchange_all(&mut self, contributions: &[Vec<TestCase>], now: Tick) -> Exchange {
        let n = contributions.len();
        let largest = contributions
            .iter()
            .map(|c| c.iter().map(TestCase::len).sum::<usize>())
            .max()
            .unwrap_or(0);
        let completes_at = self.latency.delivery_tick(now, largest);
        let mut received = Vec::with_capacity(n);
        for i in 0..n {
            let mut mine = Vec::new();
            for (j, contribution) in contributions.iter().enumerate() {
                if i == j {
                    continue;
                }
                if !contribution.is_empty() {
                    self.record(
                        now,
                        NodeId::from(j),
                        NodeId::from(i),
                        MessageKind::AmmuinaBatch,
                    );
                }
                mine.extend(contribution.iter().cloned());
            }
            self.counters.exchanged_cases += mine.len() as u64;
            received.push(mine);
        }
        self.counters.exchanges += 1;
        Exchange {
            received,
            completes_at,
        }
    }

    fn counters(&self) -> TrafficCounters {
        self.counters
    }
}
