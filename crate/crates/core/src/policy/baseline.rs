//! Periodic batched broadcast, a stand-in for directory-copy synchronization.

use crate::policy::PolicyContext;
use crate::types::{NodeId, TestCase, Tick};

#[derive(Debug, Clone)]
pub struct BaselineState {
    pub period: Tick,
    pub buffer: Vec<TestCase>,
}

impl BaselineState {
    pub fn new(period: Tick) -> Self {
        BaselineState {
            period,
            buffer: Vec::new(),
        }
    }
}

/// Buffers the case; nothing is sent immediately.
pub fn route_baseline(case: &TestCase, ctx: &PolicyContext<'_>, state: &mut BaselineState) -> Vec<NodeId> {
    if case.origin() == ctx.me {
        state.buffer.push(case.clone());
    }
    Vec::new()
}

/// At each period boundary every buffered case goes to every other node.
pub fn baseline_flush(ctx: &PolicyContext<'_>, state: &mut BaselineState) -> Vec<(NodeId, TestCase)> {
    if !ctx.now.is_multiple_of(state.period) {
        return Vec::new();
    }
    let buffer = std::mem::take(&mut state.buffer);
    let me = ctx.me;
    buffer
        .iter()
        .flat_map(|case| {
            (0..ctx.n_nodes)
                .map(NodeId::from)
                .filter(move |&d| d != me)
                .map(move |d| (d, case.clone()))
        })
        .collect()
}
