//! Shared identifiers and value types.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Simulated time. One tick is one fuzz-execution slot per node.
pub type Tick = u64;

/// Rank of a node within the campaign, `0 <= rank < N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(rank: usize) -> Self {
        NodeId(u32::try_from(rank).expect("rank exceeds u32"))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Instrumentation flavour of a fuzzing instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FuzzerClass {
    Asan,
    Cmplog,
    Laf,
    Other,
}

impl FuzzerClass {
    pub const ALL: [FuzzerClass; 4] = [
        FuzzerClass::Asan,
        FuzzerClass::Cmplog,
        FuzzerClass::Laf,
        FuzzerClass::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FuzzerClass::Asan => "asan",
            FuzzerClass::Cmplog => "cmplog",
            FuzzerClass::Laf => "laf",
            FuzzerClass::Other => "other",
        }
    }
}

impl fmt::Display for FuzzerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// XXH64 digest of `payload` with seed 0.
pub fn hash_payload(payload: &[u8]) -> u64 {
    xxhash_rust::xxh64::xxh64(payload, 0)
}

/// A candidate input. `id` is always the content hash of `payload`.
#[derive(Clone, PartialEq, Eq)]
pub struct TestCase {
    payload: Arc<[u8]>,
    origin: NodeId,
    discovered_at: Tick,
    id: u64,
}

impl TestCase {
    pub fn new(payload: impl Into<Arc<[u8]>>, origin: NodeId, discovered_at: Tick) -> Self {
        let payload = payload.into();
        let id = hash_payload(&payload);
        TestCase {
            payload,
            origin,
            discovered_at,
            id,
        }
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn origin(&self) -> NodeId {
        self.origin
    }

    pub fn discovered_at(&self) -> Tick {
        self.discovered_at
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.payload.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payload.is_empty()
    }
}

impl fmt::Debug for TestCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestCase")
            .field("id", &format_args!("{:016x}", self.id))
            .field("origin", &self.origin)
            .field("discovered_at", &self.discovered_at)
            .field("len", &self.payload.len())
            .finish()
    }
}

/// Branch identifier. Branch 0 is the implicit always-covered root.
pub type BranchId = u32;

/// Insertion-only set of covered branches.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageMap {
    branches: BTreeSet<BranchId>,
}

impl CoverageMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> usize {
        self.branches.len()
    }

    pub fn contains(&self, branch: BranchId) -> bool {
        self.branches.contains(&branch)
    }

    pub fn insert(&mut self, branch: BranchId) -> bool {
        self.branches.insert(branch)
    }

    /// Absorbs `other`; returns how many branches were new.
    pub fn merge(&mut self, other: &CoverageMap) -> usize {
        self.extend(other.branches.iter().copied())
    }

    pub fn extend(&mut self, branches: impl IntoIterator<Item = BranchId>) -> usize {
        let before = self.branches.len();
        self.branches.extend(branches);
        self.branches.len() - before
    }

    /// True when some branch of `branches` is not yet covered.
    pub fn would_grow<'a>(&self, branches: impl IntoIterator<Item = &'a BranchId>) -> bool {
        branches.into_iter().any(|b| !self.branches.contains(b))
    }

    pub fn iter(&self) -> impl Iterator<Item = BranchId> + '_ {
        self.branches.iter().copied()
    }
}

impl FromIterator<BranchId> for CoverageMap {
    fn from_iter<I: IntoIterator<Item = BranchId>>(iter: I) -> Self {
        CoverageMap {
            branches: iter.into_iter().collect(),
        }
    }
}

/// Inter-node traffic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    InterestingInput { case: TestCase },
    /// "Stop sending to me."
    LowUtilityNotice { from: NodeId },
    AmmuinaRequest { initiator: NodeId, at_tick: Tick },
    AmmuinaBatch { cases: Vec<TestCase> },
}

/// Discriminant of [`Message`], used in message logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    InterestingInput,
    LowUtilityNotice,
    AmmuinaRequest,
    AmmuinaBatch,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::InterestingInput => "interesting_input",
            MessageKind::LowUtilityNotice => "low_utility_notice",
            MessageKind::AmmuinaRequest => "ammuina_request",
            MessageKind::AmmuinaBatch => "ammuina_batch",
        }
    }
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::InterestingInput { .. } => MessageKind::InterestingInput,
            Message::LowUtilityNotice { .. } => MessageKind::LowUtilityNotice,
            Message::AmmuinaRequest { .. } => MessageKind::AmmuinaRequest,
            Message::AmmuinaBatch { .. } => MessageKind::AmmuinaBatch,
        }
    }

    /// Wire size used by the latency model. Control messages count as 8 bytes.
    pub fn wire_len(&self) -> usize {
        match self {
            Message::InterestingInput { case } => case.len(),
            Message::LowUtilityNotice { .. } | Message::AmmuinaRequest { .. } => 8,
            Message::AmmuinaBatch { cases } => cases.iter().map(TestCase::len).sum(),
        }
    }
}
