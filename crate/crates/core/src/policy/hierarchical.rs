//! Cluster trees: secondaries report to their class master, masters
//! exchange deltas with each other on a fixed period.

use std::collections::BTreeMap;

use crate::policy::{PolicyContext, UtilityDirectory};
use crate::types::{FuzzerClass, NodeId, TestCase, Tick};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterPlan {
    clusters: BTreeMap<FuzzerClass, Vec<NodeId>>,
    masters: BTreeMap<FuzzerClass, NodeId>,
    class_of: Vec<FuzzerClass>,
}

impl ClusterPlan {
    pub fn cluster(&self, class: FuzzerClass) -> &[NodeId] {
        self.clusters.get(&class).map_or(&[], Vec::as_slice)
    }

    pub fn clusters(&self) -> &BTreeMap<FuzzerClass, Vec<NodeId>> {
        &self.clusters
    }

    pub fn master(&self, class: FuzzerClass) -> Option<NodeId> {
        self.masters.get(&class).copied()
    }

    pub fn class_of(&self, node: NodeId) -> FuzzerClass {
        self.class_of[node.index()]
    }

    pub fn master_of(&self, node: NodeId) -> NodeId {
        self.masters[&self.class_of(node)]
    }

    pub fn is_master(&self, node: NodeId) -> bool {
        self.master_of(node) == node
    }

    pub fn same_cluster(&self, a: NodeId, b: NodeId) -> bool {
        self.class_of(a) == self.class_of(b)
    }

    /// Masters of the other clusters, ascending.
    pub fn peer_masters(&self, node: NodeId) -> Vec<NodeId> {
        let mine = self.class_of(node);
        self.masters
            .iter()
            .filter(|(&c, _)| c != mine)
            .map(|(_, &m)| m)
            .collect()
    }

    pub fn masters(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.masters.values().copied()
    }
}

/// Groups nodes by class; the lowest rank of each group is its master.
pub fn build_cluster_plan(class_assignment: &[FuzzerClass]) -> ClusterPlan {
    let mut clusters: BTreeMap<FuzzerClass, Vec<NodeId>> = BTreeMap::new();
    for (rank, &class) in class_assignment.iter().enumerate() {
        clusters.entry(class).or_default().push(NodeId::from(rank));
    }
    let masters = clusters.iter().map(|(&c, nodes)| (c, nodes[0])).collect();
    ClusterPlan {
        clusters,
        masters,
        class_of: class_assignment.to_vec(),
    }
}

/// Per-node state of the hierarchical policy.
#[derive(Debug, Clone)]
pub struct HierarchicalState {
    pub inter_master_period: Tick,
    /// Cluster cases gathered since the last inter-master boundary (masters only).
    pub buffer: Vec<TestCase>,
    /// Present when masters filter their peers by utility.
    pub directory: Option<UtilityDirectory>,
}

impl HierarchicalState {
    pub fn new(
        me: NodeId,
        plan: &ClusterPlan,
        inter_master_period: Tick,
        utility_filter: Option<i64>,
    ) -> Self {
        let directory = utility_filter
            .filter(|_| plan.is_master(me))
            .map(|u_min| UtilityDirectory::with_peers(me, plan.peer_masters(me), u_min));
        HierarchicalState {
            inter_master_period,
            buffer: Vec::new(),
            directory,
        }
    }
}

/// Secondaries send to their master; masters buffer for the next boundary.
///
/// Masters only buffer cases that originate in their own cluster, so cases
/// learned from a peer master are not echoed to the other masters.
pub fn route_hierarchical(
    case: &TestCase,
    plan: &ClusterPlan,
    ctx: &PolicyContext<'_>,
    state: &mut HierarchicalState,
) -> Vec<NodeId> {
    let master = plan.master_of(ctx.me);
    if master != ctx.me {
        if case.origin() == ctx.me {
            vec![master]
        } else {
            Vec::new()
        }
    } else {
        if plan.same_cluster(case.origin(), ctx.me) {
            state.buffer.push(case.clone());
        }
        Vec::new()
    }
}

/// At period boundaries a master ships its buffered delta to every peer
/// master (minus peers that opted out under utility filtering).
pub fn inter_master_sync(
    plan: &ClusterPlan,
    ctx: &PolicyContext<'_>,
    state: &mut HierarchicalState,
) -> Vec<(NodeId, TestCase)> {
    if !plan.is_master(ctx.me) || !ctx.now.is_multiple_of(state.inter_master_period) {
        return Vec::new();
    }
    let buffer = std::mem::take(&mut state.buffer);
    let peers: Vec<NodeId> = plan
        .peer_masters(ctx.me)
        .into_iter()
        .filter(|&p| state.directory.as_ref().is_none_or(|d| d.is_interested(p)))
        .collect();
    buffer
        .iter()
        .flat_map(|case| peers.iter().map(move |&p| (p, case.clone())))
        .collect()
}
