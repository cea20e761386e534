//! Desk-scale fuzzing instance.
//!
//! A [`FuzzerNode`] owns a corpus, a mutator stream and its policy state. It
//! talks to peers only through a [`Transport`]: interesting cases leave via
//! [`FuzzerNode::save_if_interesting`] and incoming traffic is drained in
//! [`FuzzerNode::sync_fuzzers`]. Sync cost accrues only on those two paths
//! (plus the periodic flushes and ammuina traffic they stand for).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::CampaignConfig;
use crate::policy::{select_contribution, AmmuinaState, NodePolicy, PolicyContext};
use crate::rng::NodeRng;
use crate::target::{ExecutionResult, Gate, TargetError, TargetSpec, ROOT_BRANCH};
use crate::transport::{SendQueue, Transport, TransportError};
use crate::types::{BranchId, CoverageMap, FuzzerClass, Message, NodeId, TestCase, Tick};

#[derive(Debug, Error)]
pub enum FuzzError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Target(#[from] TargetError),
}

/// Per-class probability that a mutation is a gate solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveProbabilities {
    pub asan: f64,
    pub cmplog: f64,
    pub laf: f64,
    pub other: f64,
}

impl Default for SolveProbabilities {
    fn default() -> Self {
        SolveProbabilities {
            asan: 0.0,
            cmplog: 0.05,
            laf: 0.03,
            other: 0.01,
        }
    }
}

impl SolveProbabilities {
    pub fn get(&self, class: FuzzerClass) -> f64 {
        match class {
            FuzzerClass::Asan => self.asan,
            FuzzerClass::Cmplog => self.cmplog,
            FuzzerClass::Laf => self.laf,
            FuzzerClass::Other => self.other,
        }
    }
}

/// Simulator knobs that are not part of the campaign file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FuzzerParams {
    pub p_solve: SolveProbabilities,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    cases: Vec<TestCase>,
    branches: Vec<Vec<BranchId>>,
    coverage: CoverageMap,
    crash_ids: BTreeSet<u64>,
    new_since_ammuina: Vec<TestCase>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn cases(&self) -> &[TestCase] {
        &self.cases
    }

    pub fn branches_of(&self, idx: usize) -> &[BranchId] {
        &self.branches[idx]
    }

    pub fn coverage(&self) -> &CoverageMap {
        &self.coverage
    }

    pub fn crashes_found(&self) -> usize {
        self.crash_ids.len()
    }

    pub fn crash_ids(&self) -> &BTreeSet<u64> {
        &self.crash_ids
    }

    pub fn new_since_ammuina(&self) -> &[TestCase] {
        &self.new_since_ammuina
    }

    /// Adds `case` when it covers a new branch. Returns whether it did.
    pub fn admit(&mut self, case: TestCase, result: &ExecutionResult) -> bool {
        if !self.coverage.would_grow(&result.branches) {
            return false;
        }
        self.coverage.extend(result.branches.iter().copied());
        self.cases.push(case.clone());
        self.branches.push(result.branches.clone());
        self.new_since_ammuina.push(case);
        true
    }

    /// Counts a crashing payload once per content hash.
    pub fn record_crash(&mut self, id: u64) -> bool {
        self.crash_ids.insert(id)
    }

    pub fn take_contribution(&mut self, cap: usize) -> Vec<TestCase> {
        let picked = select_contribution(&self.new_since_ammuina, cap);
        self.new_since_ammuina.clear();
        picked
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationOp {
    BitFlip,
    ByteOverwrite,
    Resize,
    Splice,
    GateSolve,
}

/// Writes `gate.expected` at `gate.offset`, zero-padding short payloads.
pub fn gate_solve(payload: &[u8], gate: &Gate, max_len: usize) -> Vec<u8> {
    let mut out = payload.to_vec();
    if out.len() < gate.end() {
        out.resize(gate.end(), 0);
    }
    out[gate.offset..gate.end()].copy_from_slice(&gate.expected);
    out.truncate(max_len.max(gate.end()));
    out
}

/// Gates the parent can reach next: uncovered by the node, their own parent
/// exercised by this input, and not reserved to another class.
fn solvable_gates<'a>(
    spec: &'a TargetSpec,
    parent_branches: &'a [BranchId],
    coverage: &'a CoverageMap,
    class: FuzzerClass,
) -> impl Iterator<Item = &'a Gate> + 'a {
    spec.gates().iter().filter(move |g| {
        !coverage.contains(g.id)
            && g.class_hint.is_none_or(|c| c == class)
            && parent_branches.contains(&g.parent.unwrap_or(ROOT_BRANCH))
    })
}

/// One mutation of corpus entry `parent`.
///
/// With probability `p_solve(class)` the mutator tries a gate solve; when no
/// gate is solvable, or otherwise, it picks one of bit flip, byte overwrite,
/// resize by up to four bytes, or an offset-aligned splice with another
/// corpus entry, uniformly.
pub fn mutate(
    parent: usize,
    corpus: &Corpus,
    rng: &mut NodeRng,
    class: FuzzerClass,
    spec: &TargetSpec,
    params: &FuzzerParams,
) -> (MutationOp, Vec<u8>) {
    let max_len = spec.max_input_len();
    let base = corpus.cases()[parent].payload();
    if rng.chance(params.p_solve.get(class)) {
        let candidates: Vec<&Gate> =
            solvable_gates(spec, corpus.branches_of(parent), corpus.coverage(), class).collect();
        if !candidates.is_empty() {
            let gate = candidates[rng.below(candidates.len())];
            return (MutationOp::GateSolve, gate_solve(base, gate, max_len));
        }
    }
    let mut out = base.to_vec();
    let op = match rng.below(4) {
        0 => MutationOp::BitFlip,
        1 => MutationOp::ByteOverwrite,
        2 => MutationOp::Resize,
        _ => MutationOp::Splice,
    };
    match op {
        MutationOp::BitFlip | MutationOp::ByteOverwrite if out.is_empty() => {
            out.push(rng.byte());
        }
        MutationOp::BitFlip => {
            let pos = rng.below(out.len());
            out[pos] ^= 1 << rng.below(8);
        }
        MutationOp::ByteOverwrite => {
            let pos = rng.below(out.len());
            out[pos] = rng.byte();
        }
        MutationOp::Resize => {
            let k = 1 + rng.below(4);
            if rng.below(2) == 0 && !out.is_empty() {
                out.truncate(out.len().saturating_sub(k));
            } else {
                for _ in 0..k {
                    out.push(rng.byte());
                }
            }
        }
        MutationOp::Splice => {
            let other = corpus.cases()[rng.below(corpus.len())].payload();
            let cut = rng.below(out.len().max(other.len()) + 1);
            out.truncate(cut);
            if other.len() > cut {
                out.extend_from_slice(&other[cut..]);
            }
        }
        MutationOp::GateSolve => unreachable!(),
    }
    out.truncate(max_len);
    (op, out)
}

/// What a node needs from its surroundings for one call.
#[derive(Debug, Clone, Copy)]
pub struct NodeEnv<'a> {
    pub target: &'a TargetSpec,
    pub cfg: &'a CampaignConfig,
    pub params: &'a FuzzerParams,
}

#[derive(Debug, Clone)]
pub struct FuzzerNode {
    id: NodeId,
    class: FuzzerClass,
    pub corpus: Corpus,
    pub policy: NodePolicy,
    pub ammuina: AmmuinaState,
    pub queue: SendQueue,
    rng: NodeRng,
    sync_cost: u64,
    execs: u64,
    first_crash_tick: Option<Tick>,
    coverage_at_last_update: usize,
    incoming_exchanges: Vec<(Tick, Vec<TestCase>)>,
    violations: u64,
}

impl FuzzerNode {
    pub fn new(id: NodeId, class: FuzzerClass, policy: NodePolicy, seed: u64) -> Self {
        FuzzerNode {
            id,
            class,
            corpus: Corpus::new(),
            policy,
            ammuina: AmmuinaState::default(),
            queue: SendQueue::new(),
            rng: NodeRng::for_node(seed, id.0),
            sync_cost: 0,
            execs: 0,
            first_crash_tick: None,
            coverage_at_last_update: 0,
            incoming_exchanges: Vec::new(),
            violations: 0,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn class(&self) -> FuzzerClass {
        self.class
    }

    pub fn sync_cost(&self) -> u64 {
        self.sync_cost
    }

    pub fn execs(&self) -> u64 {
        self.execs
    }

    pub fn first_crash_tick(&self) -> Option<Tick> {
        self.first_crash_tick
    }

    /// Gating or monotonicity violations observed so far; always zero unless
    /// the model is broken.
    pub fn violations(&self) -> u64 {
        self.violations
    }

    pub fn has_pending_exchange(&self) -> bool {
        !self.incoming_exchanges.is_empty()
    }

    fn ctx<'a>(&self, env: &NodeEnv<'a>, now: Tick) -> PolicyContext<'a> {
        PolicyContext::new(self.id, &env.cfg.classes, now)
    }

    fn dispatch<T: Transport + ?Sized>(
        &mut self,
        transport: &mut T,
        dest: NodeId,
        msg: Message,
        now: Tick,
        cost: u64,
    ) -> Result<(), FuzzError> {
        let pending = transport.send_async(self.id, dest, msg, now)?;
        self.queue.push(pending);
        self.sync_cost += cost;
        Ok(())
    }

    fn case_cost(&self, env: &NodeEnv<'_>) -> u64 {
        if self.policy.is_file_based() {
            env.cfg.costs.c_file
        } else {
            env.cfg.costs.c_send
        }
    }

    /// Loads the target's seeds, or four zero bytes, without disseminating them.
    pub fn load_seeds(&mut self, env: &NodeEnv<'_>) -> Result<(), FuzzError> {
        let default_seed = [vec![0u8; 4.min(env.target.max_input_len())]];
        let seeds = if env.target.seeds().is_empty() {
            &default_seed[..]
        } else {
            env.target.seeds()
        };
        for payload in seeds {
            let case = TestCase::new(payload.clone(), self.id, 0);
            let result = env.target.run(case.payload())?;
            self.observe(env, &result, 0, case.id());
            self.corpus.admit(case, &result);
        }
        self.coverage_at_last_update = self.corpus.coverage().count();
        Ok(())
    }

    fn observe(&mut self, env: &NodeEnv<'_>, result: &ExecutionResult, now: Tick, id: u64) {
        if !env.target.gating_sound(result) {
            self.violations += 1;
        }
        if result.crashed && self.corpus.record_crash(id) {
            self.first_crash_tick.get_or_insert(now);
        }
    }

    /// Keeps `case` when it adds coverage and hands it to the policy.
    pub fn save_if_interesting<T: Transport + ?Sized>(
        &mut self,
        case: TestCase,
        result: &ExecutionResult,
        transport: &mut T,
        env: &NodeEnv<'_>,
        now: Tick,
    ) -> Result<bool, FuzzError> {
        self.observe(env, result, now, case.id());
        let before = self.corpus.coverage().count();
        if !self.corpus.admit(case.clone(), result) {
            return Ok(false);
        }
        if self.corpus.coverage().count() <= before {
            self.violations += 1;
        }
        let ctx = self.ctx(env, now);
        let dests = self.policy.route(&case, &ctx);
        let cost = self.case_cost(env);
        for dest in dests {
            let msg = Message::InterestingInput { case: case.clone() };
            self.dispatch(transport, dest, msg, now, cost)?;
        }
        Ok(true)
    }

    fn evaluate<T: Transport + ?Sized>(
        &mut self,
        case: TestCase,
        transport: &mut T,
        env: &NodeEnv<'_>,
        now: Tick,
    ) -> Result<bool, FuzzError> {
        let result = env.target.run(case.payload())?;
        self.save_if_interesting(case, &result, transport, env, now)
    }

    /// Drains every message deliverable at `now` and any due ammuina batch.
    pub fn sync_fuzzers<T: Transport + ?Sized>(
        &mut self,
        transport: &mut T,
        env: &NodeEnv<'_>,
        now: Tick,
    ) -> Result<usize, FuzzError> {
        let mut processed = 0;
        let c_recv = env.cfg.costs.c_recv;

        let (due, later): (Vec<_>, Vec<_>) = std::mem::take(&mut self.incoming_exchanges)
            .into_iter()
            .partition(|(at, _)| *at <= now);
        self.incoming_exchanges = later;
        for (_, cases) in due {
            processed += 1;
            for case in cases {
                self.sync_cost += c_recv;
                self.evaluate(case, transport, env, now)?;
            }
        }

        while let Some(src) = transport.probe(self.id, now) {
            let msg = transport.receive(self.id, src, now)?;
            processed += 1;
            self.sync_cost += c_recv;
            match msg {
                Message::InterestingInput { case } => {
                    let useful = self.evaluate(case, transport, env, now)?;
                    let me = self.id;
                    let notice = self
                        .policy
                        .feedback_directory(me, src)
                        .and_then(|dir| dir.record_evaluation(src, useful));
                    if let Some(notice) = notice {
                        self.dispatch(transport, src, notice, now, env.cfg.costs.c_send)?;
                    }
                }
                Message::LowUtilityNotice { from } => {
                    if let Some(dir) = self.policy.directory_mut() {
                        dir.handle_low_utility(from);
                    }
                }
                Message::AmmuinaRequest { at_tick, .. } => {
                    if self.ammuina.last_round_tick.is_none_or(|r| at_tick > r) {
                        self.ammuina.pending_request = true;
                    }
                }
                Message::AmmuinaBatch { cases } => {
                    for case in cases {
                        self.evaluate(case, transport, env, now)?;
                    }
                }
            }
        }
        Ok(processed)
    }

    /// One mutate, execute, save iteration.
    pub fn fuzz_one<T: Transport + ?Sized>(
        &mut self,
        transport: &mut T,
        env: &NodeEnv<'_>,
        now: Tick,
    ) -> Result<bool, FuzzError> {
        let parent = self.rng.below(self.corpus.len());
        let (_, bytes) = mutate(parent, &self.corpus, &mut self.rng, self.class, env.target, env.params);
        let case = TestCase::new(bytes, self.id, now);
        let result = env.target.run(case.payload())?;
        self.execs += 1;
        self.save_if_interesting(case, &result, transport, env, now)
    }

    /// Sends whatever the policy batches for this tick.
    pub fn flush_periodic<T: Transport + ?Sized>(
        &mut self,
        transport: &mut T,
        env: &NodeEnv<'_>,
        now: Tick,
    ) -> Result<usize, FuzzError> {
        let ctx = self.ctx(env, now);
        let sends = self.policy.periodic_sends(&ctx);
        let cost = self.case_cost(env);
        let n = sends.len();
        for (dest, case) in sends {
            self.dispatch(transport, dest, Message::InterestingInput { case }, now, cost)?;
        }
        Ok(n)
    }

    /// Coverage gained since the previous stats update; resets the window.
    pub fn take_coverage_increment(&mut self) -> u64 {
        let now = self.corpus.coverage().count();
        let inc = now.saturating_sub(self.coverage_at_last_update);
        self.coverage_at_last_update = now;
        inc as u64
    }

    pub fn broadcast_ammuina_request<T: Transport + ?Sized>(
        &mut self,
        transport: &mut T,
        env: &NodeEnv<'_>,
        now: Tick,
    ) -> Result<(), FuzzError> {
        self.ammuina.pending_request = true;
        let me = self.id;
        for peer in (0..env.cfg.nodes).map(NodeId::from).filter(|&p| p != me) {
            let msg = Message::AmmuinaRequest {
                initiator: me,
                at_tick: now,
            };
            self.dispatch(transport, peer, msg, now, env.cfg.costs.c_send)?;
        }
        Ok(())
    }

    /// Batch this node puts into an ammuina exchange.
    pub fn ammuina_contribution(&mut self, env: &NodeEnv<'_>) -> Vec<TestCase> {
        let picked = self.corpus.take_contribution(env.cfg.ammuina.batch_cap);
        self.sync_cost += picked.len() as u64 * env.cfg.costs.c_send;
        picked
    }

    /// Closes a round locally; `cases` are evaluated once `completes_at` is reached.
    pub fn finish_ammuina_round(&mut self, now: Tick, completes_at: Tick, cases: Vec<TestCase>) {
        self.ammuina.last_round_tick = Some(now);
        self.ammuina.pending_request = false;
        if !cases.is_empty() {
            self.incoming_exchanges.push((completes_at, cases));
        }
    }
}
