//! Dissemination policies.
//!
//! Every policy answers two questions for a node: where does a freshly
//! saved interesting case go right now ([`NodePolicy::route`]), and what has
//! to be flushed at this tick ([`NodePolicy::periodic_sends`]). Feedback
//! (utility scores and stop notices) is kept in a [`UtilityDirectory`] when
//! the policy uses one. No policy ever addresses the node itself.

mod ammuina;
mod baseline;
mod dynamic;
mod hierarchical;
mod selective;

use std::sync::Arc;

pub use ammuina::{check_stagnation, select_contribution, AmmuinaState, Stagnation};
pub use baseline::{baseline_flush, route_baseline, BaselineState};
pub use dynamic::{handle_low_utility, record_evaluation, route_dynamic, UtilityDirectory};
pub use hierarchical::{
    build_cluster_plan, inter_master_sync, route_hierarchical, ClusterPlan, HierarchicalState,
};
pub use selective::{owner_rank, route_selective};

use crate::config::{CampaignConfig, PolicyKind};
use crate::types::{FuzzerClass, NodeId, TestCase, Tick};

/// Read-only view a node decides with.
#[derive(Debug, Clone, Copy)]
pub struct PolicyContext<'a> {
    pub me: NodeId,
    pub n_nodes: usize,
    pub my_class: FuzzerClass,
    pub class_assignment: &'a [FuzzerClass],
    pub now: Tick,
}

impl<'a> PolicyContext<'a> {
    pub fn new(me: NodeId, class_assignment: &'a [FuzzerClass], now: Tick) -> Self {
        PolicyContext {
            me,
            n_nodes: class_assignment.len(),
            my_class: class_assignment[me.index()],
            class_assignment,
            now,
        }
    }
}

#[derive(Debug, Clone)]
pub enum NodePolicy {
    None,
    Selective,
    Dynamic(UtilityDirectory),
    Hierarchical {
        plan: Arc<ClusterPlan>,
        state: HierarchicalState,
    },
    Baseline(BaselineState),
}

impl NodePolicy {
    /// `plan` is required for the hierarchical policy and ignored otherwise.
    pub fn for_node(cfg: &CampaignConfig, me: NodeId, plan: Option<&Arc<ClusterPlan>>) -> Self {
        match cfg.policy {
            PolicyKind::None => NodePolicy::None,
            PolicyKind::Selective => NodePolicy::Selective,
            PolicyKind::Dynamic => {
                NodePolicy::Dynamic(UtilityDirectory::new(me, cfg.nodes, cfg.dynamic.u_min))
            }
            PolicyKind::Hierarchical => {
                let plan = plan
                    .cloned()
                    .unwrap_or_else(|| Arc::new(build_cluster_plan(&cfg.classes)));
                let filter = cfg
                    .hierarchical
                    .utility_filter
                    .then_some(cfg.dynamic.u_min);
                let state =
                    HierarchicalState::new(me, &plan, cfg.hierarchical.inter_master_period, filter);
                NodePolicy::Hierarchical { plan, state }
            }
            PolicyKind::BaselinePeriodic => NodePolicy::Baseline(BaselineState::new(cfg.baseline.period)),
        }
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            NodePolicy::None => PolicyKind::None,
            NodePolicy::Selective => PolicyKind::Selective,
            NodePolicy::Dynamic(_) => PolicyKind::Dynamic,
            NodePolicy::Hierarchical { .. } => PolicyKind::Hierarchical,
            NodePolicy::Baseline(_) => PolicyKind::BaselinePeriodic,
        }
    }

    /// Immediate destinations for a case that was just saved as interesting.
    ///
    /// Selective and dynamic route every interesting case, received ones
    /// included; a case is only interesting once per node, so forwarding
    /// always terminates. Hierarchical and baseline buffer by origin.
    pub fn route(&mut self, case: &TestCase, ctx: &PolicyContext<'_>) -> Vec<NodeId> {
        match self {
            NodePolicy::None => Vec::new(),
            NodePolicy::Selective => route_selective(case, ctx),
            NodePolicy::Dynamic(dir) => route_dynamic(case, dir, ctx),
            NodePolicy::Hierarchical { plan, state } => route_hierarchical(case, plan, ctx, state),
            NodePolicy::Baseline(state) => route_baseline(case, ctx, state),
        }
    }

    /// Batched sends due at `ctx.now`.
    pub fn periodic_sends(&mut self, ctx: &PolicyContext<'_>) -> Vec<(NodeId, TestCase)> {
        match self {
            NodePolicy::Hierarchical { plan, state } => inter_master_sync(plan, ctx, state),
            NodePolicy::Baseline(state) => baseline_flush(ctx, state),
            _ => Vec::new(),
        }
    }

    /// Directory that scores inputs received from `sender`, if any.
    pub fn feedback_directory(&mut self, me: NodeId, sender: NodeId) -> Option<&mut UtilityDirectory> {
        match self {
            NodePolicy::Dynamic(dir) => Some(dir),
            NodePolicy::Hierarchical { plan, state } => {
                let peer_master = plan.is_master(sender) && !plan.same_cluster(sender, me);
                state.directory.as_mut().filter(|_| peer_master)
            }
            _ => None,
        }
    }

    pub fn directory(&self) -> Option<&UtilityDirectory> {
        match self {
            NodePolicy::Dynamic(dir) => Some(dir),
            NodePolicy::Hierarchical { state, .. } => state.directory.as_ref(),
            _ => None,
        }
    }

    pub fn directory_mut(&mut self) -> Option<&mut UtilityDirectory> {
        match self {
            NodePolicy::Dynamic(dir) => Some(dir),
            NodePolicy::Hierarchical { state, .. } => state.directory.as_mut(),
            _ => None,
        }
    }

    /// True for the periodic broadcast policy, whose sends are charged per file.
    pub fn is_file_based(&self) -> bool {
        matches!(self, NodePolicy::Baseline(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn received_cases_are_routed_to_their_owner() {
        let cfg = CampaignConfig::new(4, PolicyKind::Selective);
        let mut p = NodePolicy::for_node(&cfg, NodeId(0), None);
        let ctx = PolicyContext::new(NodeId(0), &cfg.classes, 0);
        // Empty payload hashes to rank 1 whoever found it.
        let foreign = TestCase::new(Vec::new(), NodeId(3), 0);
        assert_eq!(p.route(&foreign, &ctx), vec![NodeId(1)]);
        let at_owner = PolicyContext::new(NodeId(1), &cfg.classes, 0);
        assert!(p.route(&foreign, &at_owner).is_empty());
    }

    #[test]
    fn baseline_buffers_only_own_cases() {
        let cfg = CampaignConfig::new(3, PolicyKind::BaselinePeriodic);
        let mut p = NodePolicy::for_node(&cfg, NodeId(0), None);
        let ctx = PolicyContext::new(NodeId(0), &cfg.classes, 0);
        p.route(&TestCase::new(b"x".to_vec(), NodeId(2), 0), &ctx);
        assert!(p.periodic_sends(&ctx).is_empty());
        p.route(&TestCase::new(b"y".to_vec(), NodeId(0), 0), &ctx);
        assert_eq!(p.periodic_sends(&ctx).len(), 2);
    }

    #[test]
    fn none_policy_never_routes() {
        let cfg = CampaignConfig::new(4, PolicyKind::None);
        let mut p = NodePolicy::for_node(&cfg, NodeId(0), None);
        let ctx = PolicyContext::new(NodeId(0), &cfg.classes, 0);
        assert!(p.route(&TestCase::new(b"a".to_vec(), NodeId(0), 0), &ctx).is_empty());
        assert!(p.periodic_sends(&ctx).is_empty());
        assert!(p.directory().is_none());
    }

    #[test]
    fn hierarchical_feedback_only_between_masters() {
        let mut cfg = CampaignConfig::new(8, PolicyKind::Hierarchical);
        cfg.hierarchical.utility_filter = true;
        // Round-robin classes: masters are 0..4, secondaries 4..8.
        let mut master = NodePolicy::for_node(&cfg, NodeId(0), None);
        assert!(master.feedback_directory(NodeId(0), NodeId(1)).is_some());
        assert!(master.feedback_directory(NodeId(0), NodeId(4)).is_none());
        let mut secondary = NodePolicy::for_node(&cfg, NodeId(5), None);
        assert!(secondary.feedback_directory(NodeId(5), NodeId(0)).is_none());
    }
}
