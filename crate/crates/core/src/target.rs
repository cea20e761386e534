//! Synthetic fuzz targets: a forest of magic-byte gates.
//!
//! A gate is covered when its parent is covered and the payload holds the
//! gate's expected bytes at the gate's offset. Branch 0 is the implicit root
//! and is always covered. Gates flagged `crash` make the execution crash.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::DEFAULT_MAX_INPUT_LEN;
use crate::rng::NodeRng;
use crate::types::{hash_payload, BranchId, FuzzerClass};

pub const ROOT_BRANCH: BranchId = 0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TargetError {
    #[error("gate id {0} is reserved or duplicated")]
    BadGateId(BranchId),
    #[error("gate {gate} references unknown parent {parent}")]
    UnknownParent { gate: BranchId, parent: BranchId },
    #[error("gate {0} is part of a parent cycle")]
    Cycle(BranchId),
    #[error("gate {gate} ends at byte {end}, beyond max_input_len {max}")]
    OutOfBounds { gate: BranchId, end: usize, max: usize },
    #[error("gate {0} has an empty match")]
    EmptyMatch(BranchId),
    #[error("seed of {len} bytes exceeds max_input_len {max}")]
    SeedTooLong { len: usize, max: usize },
    #[error("input of {len} bytes exceeds max_input_len {max}")]
    InputTooLong { len: usize, max: usize },
    #[error("invalid hex: {0}")]
    Hex(String),
    #[error("invalid target shape: {0}")]
    Shape(String),
    #[error("malformed target file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate {
    pub id: BranchId,
    /// `None` attaches the gate to the root.
    pub parent: Option<BranchId>,
    pub offset: usize,
    pub expected: Vec<u8>,
    pub crash: bool,
    /// Only this class's comparison feedback can solve the gate directly.
    pub class_hint: Option<FuzzerClass>,
}

impl Gate {
    pub fn new(id: BranchId, parent: Option<BranchId>, offset: usize, expected: &[u8]) -> Self {
        Gate {
            id,
            parent,
            offset,
            expected: expected.to_vec(),
            crash: false,
            class_hint: None,
        }
    }

    pub fn crashing(mut self) -> Self {
        self.crash = true;
        self
    }

    pub fn hinted(mut self, class: FuzzerClass) -> Self {
        self.class_hint = Some(class);
        self
    }

    pub fn end(&self) -> usize {
        self.offset + self.expected.len()
    }

    fn matches(&self, payload: &[u8]) -> bool {
        payload.get(self.offset..self.end()) == Some(self.expected.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionResult {
    /// Covered branches, root first, parents before children.
    pub branches: Vec<BranchId>,
    pub crashed: bool,
}

/// Validated target description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSpec {
    gates: Vec<Gate>,
    max_input_len: usize,
    seeds: Vec<Vec<u8>>,
    /// Gate indices, parents before children.
    order: Vec<usize>,
    /// Parent gate index per gate, `None` for root-attached gates.
    parent_idx: Vec<Option<usize>>,
    index_of: BTreeMap<BranchId, usize>,
}

impl TargetSpec {
    pub fn new(
        gates: Vec<Gate>,
        max_input_len: usize,
        seeds: Vec<Vec<u8>>,
    ) -> Result<Self, TargetError> {
        let mut index_of = BTreeMap::new();
        for (i, g) in gates.iter().enumerate() {
            if g.id == ROOT_BRANCH || index_of.insert(g.id, i).is_some() {
                return Err(TargetError::BadGateId(g.id));
            }
            if g.expected.is_empty() {
                return Err(TargetError::EmptyMatch(g.id));
            }
            if g.end() > max_input_len {
                return Err(TargetError::OutOfBounds {
                    gate: g.id,
                    end: g.end(),
                    max: max_input_len,
                });
            }
        }
        if let Some(s) = seeds.iter().find(|s| s.len() > max_input_len) {
            return Err(TargetError::SeedTooLong {
                len: s.len(),
                max: max_input_len,
            });
        }

        let mut parent_idx = Vec::with_capacity(gates.len());
        for g in &gates {
            let p = match g.parent {
                None | Some(ROOT_BRANCH) => None,
                Some(p) => Some(*index_of.get(&p).ok_or(TargetError::UnknownParent {
                    gate: g.id,
                    parent: p,
                })?),
            };
            parent_idx.push(p);
        }

        // Depth-by-depth ordering; anything left unplaced sits on a cycle.
        let mut depth: Vec<Option<usize>> = vec![None; gates.len()];
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..gates.len() {
                if depth[i].is_some() {
                    continue;
                }
                let d = match parent_idx[i] {
                    None => Some(0),
                    Some(p) => depth[p].map(|d| d + 1),
                };
                if d.is_some() {
                    depth[i] = d;
                    changed = true;
                }
            }
        }
        if let Some(i) = depth.iter().position(Option::is_none) {
            return Err(TargetError::Cycle(gates[i].id));
        }
        let mut order: Vec<usize> = (0..gates.len()).collect();
        order.sort_by_key(|&i| (depth[i], i));

        Ok(TargetSpec {
            gates,
            max_input_len,
            seeds,
            order,
            parent_idx,
            index_of,
        })
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn gate(&self, id: BranchId) -> Option<&Gate> {
        self.index_of.get(&id).map(|&i| &self.gates[i])
    }

    /// Parent branch of `id` (root for root-attached gates).
    pub fn parent_of(&self, id: BranchId) -> Option<BranchId> {
        let &i = self.index_of.get(&id)?;
        Some(self.parent_idx[i].map_or(ROOT_BRANCH, |p| self.gates[p].id))
    }

    pub fn max_input_len(&self) -> usize {
        self.max_input_len
    }

    pub fn seeds(&self) -> &[Vec<u8>] {
        &self.seeds
    }

    /// Number of coverable branches, root included.
    pub fn branch_count(&self) -> usize {
        self.gates.len() + 1
    }

    /// Executes the model on `payload`. Pure in `(self, payload)`.
    pub fn run(&self, payload: &[u8]) -> Result<ExecutionResult, TargetError> {
        if payload.len() > self.max_input_len {
            return Err(TargetError::InputTooLong {
                len: payload.len(),
                max: self.max_input_len,
            });
        }
        let mut covered = vec![false; self.gates.len()];
        let mut branches = vec![ROOT_BRANCH];
        let mut crashed = false;
        for &i in &self.order {
            let parent_ok = self.parent_idx[i].is_none_or(|p| covered[p]);
            let g = &self.gates[i];
            if parent_ok && g.matches(payload) {
                covered[i] = true;
                branches.push(g.id);
                crashed |= g.crash;
            }
        }
        Ok(ExecutionResult { branches, crashed })
    }

    /// True when every covered non-root branch has its parent covered too.
    pub fn gating_sound(&self, result: &ExecutionResult) -> bool {
        result.branches.first() == Some(&ROOT_BRANCH)
            && result.branches.iter().skip(1).all(|&b| {
                self.parent_of(b)
                    .is_some_and(|p| result.branches.contains(&p))
            })
    }

    /// Stable identity of the target, the XXH64 of its canonical JSON.
    pub fn target_id(&self) -> u64 {
        hash_payload(self.to_json_compact().as_bytes())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TargetFile::from(self)).expect("target serializes") + "\n"
    }

    fn to_json_compact(&self) -> String {
        serde_json::to_string(&TargetFile::from(self)).expect("target serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TargetError> {
        let file: TargetFile =
            serde_json::from_str(text).map_err(|e| TargetError::Parse(e.to_string()))?;
        file.try_into()
    }
}

pub fn run_target(spec: &TargetSpec, payload: &[u8]) -> Result<ExecutionResult, TargetError> {
    spec.run(payload)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GateRecord {
    id: BranchId,
    parent: Option<BranchId>,
    offset: usize,
    expected_hex: String,
    #[serde(default)]
    crash: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_hint: Option<FuzzerClass>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetFile {
    gates: Vec<GateRecord>,
    #[serde(default = "default_max_len")]
    max_input_len: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    seeds: Vec<String>,
}

fn default_max_len() -> usize {
    DEFAULT_MAX_INPUT_LEN
}

fn decode_hex(s: &str) -> Result<Vec<u8>, TargetError> {
    if !s.len().is_multiple_of(2) {
        return Err(TargetError::Hex(s.to_string()));
    }
    (0..s.len())
        .step_by(2)
        .map(|i| {
            s.get(i..i + 2)
                .and_then(|b| u8::from_str_radix(b, 16).ok())
                .ok_or_else(|| TargetError::Hex(s.to_string()))
        })
        .collect()
}

fn encode_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl From<&TargetSpec> for TargetFile {
    fn from(spec: &TargetSpec) -> Self {
        TargetFile {
            gates: spec
                .gates
                .iter()
                .map(|g| GateRecord {
                    id: g.id,
                    parent: g.parent,
                    offset: g.offset,
                    expected_hex: encode_hex(&g.expected),
                    crash: g.crash,
                    class_hint: g.class_hint,
                })
                .collect(),
            max_input_len: spec.max_input_len,
            seeds: spec.seeds.iter().map(|s| encode_hex(s)).collect(),
        }
    }
}

impl TryFrom<TargetFile> for TargetSpec {
    type Error = TargetError;

    fn try_from(file: TargetFile) -> Result<Self, Self::Error> {
        let gates = file
            .gates
            .into_iter()
            .map(|r| {
                Ok(Gate {
                    id: r.id,
                    parent: r.parent,
                    offset: r.offset,
                    expected: decode_hex(&r.expected_hex)?,
                    crash: r.crash,
                    class_hint: r.class_hint,
                })
            })
            .collect::<Result<Vec<_>, TargetError>>()?;
        let seeds = file
            .seeds
            .iter()
            .map(|s| decode_hex(s))
            .collect::<Result<Vec<_>, _>>()?;
        TargetSpec::new(gates, file.max_input_len, seeds)
    }
}

/// Shape of a generated gate forest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetShape {
    pub depth: usize,
    pub fanout: usize,
    pub magic_len: usize,
    pub crash_count: usize,
    pub seed: u64,
}

const MAX_GENERATED_GATES: usize = 1 << 20;

impl TargetShape {
    /// `fanout * (fanout^depth - 1) / (fanout - 1)`, or `depth` when `fanout == 1`.
    pub fn gate_count(&self) -> Option<usize> {
        let mut total = 0usize;
        let mut level = 1usize;
        for _ in 0..self.depth {
            level = level.checked_mul(self.fanout)?;
            total = total.checked_add(level)?;
        }
        Some(total)
    }

    fn leaf_count(&self) -> Option<usize> {
        self.fanout.checked_pow(u32::try_from(self.depth).ok()?)
    }
}

/// Builds a complete gate tree: `fanout` root gates, each with `fanout`
/// children, down to `depth` levels. Level `d` gates sit at offset
/// `d * magic_len`; siblings differ in their first magic byte so that at
/// most one of them matches any input. `crash_count` leaves crash.
pub fn generate_target(shape: &TargetShape) -> Result<TargetSpec, TargetError> {
    let bad = |msg: &str| Err(TargetError::Shape(msg.to_string()));
    if shape.depth == 0 {
        return bad("depth must be at least 1");
    }
    if shape.fanout == 0 {
        return bad("fanout must be at least 1");
    }
    if shape.fanout > 256 {
        return bad("fanout above 256 cannot keep siblings distinct");
    }
    if shape.magic_len == 0 {
        return bad("magic_len must be at least 1");
    }
    let count = match shape.gate_count() {
        Some(c) if c <= MAX_GENERATED_GATES => c,
        _ => return bad("too many gates"),
    };
    let leaves = shape.leaf_count().unwrap_or(usize::MAX);
    if shape.crash_count > leaves {
        return bad("crash_count exceeds the number of leaves");
    }
    let end = shape
        .depth
        .checked_mul(shape.magic_len)
        .filter(|&e| e <= MAX_GENERATED_GATES)
        .ok_or_else(|| TargetError::Shape("inputs too long".into()))?;
    let max_input_len = end.max(DEFAULT_MAX_INPUT_LEN);

    let mut rng = NodeRng::from_state(shape.seed);
    let mut gates: Vec<Gate> = Vec::with_capacity(count);
    let mut frontier: Vec<Option<BranchId>> = vec![None];
    let mut next_id: BranchId = 1;
    for level in 0..shape.depth {
        let mut next = Vec::with_capacity(frontier.len() * shape.fanout);
        for &parent in &frontier {
            let mut firsts = Vec::with_capacity(shape.fanout);
            for _ in 0..shape.fanout {
                let mut magic: Vec<u8> = (0..shape.magic_len).map(|_| rng.byte()).collect();
                while firsts.contains(&magic[0]) {
                    magic[0] = rng.byte();
                }
                firsts.push(magic[0]);
                gates.push(Gate::new(next_id, parent, level * shape.magic_len, &magic));
                next.push(Some(next_id));
                next_id += 1;
            }
        }
        frontier = next;
    }

    // Partial Fisher-Yates over the leaf indices.
    let first_leaf = count - leaves;
    let mut leaf_idx: Vec<usize> = (first_leaf..count).collect();
    for k in 0..shape.crash_count {
        let j = k + rng.below(leaf_idx.len() - k);
        leaf_idx.swap(k, j);
        gates[leaf_idx[k]].crash = true;
    }
    TargetSpec::new(gates, max_input_len, Vec::new())
}
