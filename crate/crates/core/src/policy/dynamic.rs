//! Utility-driven dissemination.
//!
//! Each node scores its senders by how often their inputs turned out to be
//! interesting locally. New inputs go to the best-scoring rank that still
//! accepts traffic. A receiver whose score for a sender falls below `u_min`
//! tells that sender to stop, and the sender drops it from its interested set
//! for the rest of the campaign.

use std::collections::{BTreeMap, BTreeSet};

use crate::policy::{route_selective, PolicyContext};
use crate::types::{Message, NodeId, TestCase};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtilityDirectory {
    me: NodeId,
    scores: BTreeMap<NodeId, i64>,
    interested: BTreeSet<NodeId>,
    u_min: i64,
}

impl UtilityDirectory {
    /// Every other rank starts interested with score 0.
    pub fn new(me: NodeId, n_nodes: usize, u_min: i64) -> Self {
        Self::with_peers(me, (0..n_nodes).map(NodeId::from), u_min)
    }

    pub fn with_peers(me: NodeId, peers: impl IntoIterator<Item = NodeId>, u_min: i64) -> Self {
        UtilityDirectory {
            me,
            scores: BTreeMap::new(),
            interested: peers.into_iter().filter(|&p| p != me).collect(),
            u_min,
        }
    }

    pub fn me(&self) -> NodeId {
        self.me
    }

    pub fn score(&self, rank: NodeId) -> i64 {
        self.scores.get(&rank).copied().unwrap_or(0)
    }

    pub fn set_score(&mut self, rank: NodeId, score: i64) {
        self.scores.insert(rank, score);
    }

    pub fn interested(&self) -> &BTreeSet<NodeId> {
        &self.interested
    }

    pub fn is_interested(&self, rank: NodeId) -> bool {
        self.interested.contains(&rank)
    }

    pub fn u_min(&self) -> i64 {
        self.u_min
    }

    /// Interested rank with the highest score, lowest rank on ties.
    pub fn best_interested(&self) -> Option<NodeId> {
        self.interested
            .iter()
            .copied()
            .filter(|&r| r != self.me)
            .max_by_key(|&r| (self.score(r), std::cmp::Reverse(r)))
    }

    /// Scores one received input. Returns the stop notice for `sender` when
    /// this evaluation pushes its score from `>= u_min` to `< u_min`.
    pub fn record_evaluation(&mut self, sender: NodeId, useful: bool) -> Option<Message> {
        debug_assert_ne!(sender, self.me);
        let score = self.scores.entry(sender).or_insert(0);
        let before = *score;
        *score += if useful { 1 } else { -1 };
        (before >= self.u_min && *score < self.u_min)
            .then_some(Message::LowUtilityNotice { from: self.me })
    }

    /// Drops `notice_from` from the interested set. Idempotent.
    pub fn handle_low_utility(&mut self, notice_from: NodeId) {
        self.interested.remove(&notice_from);
    }
}

/// Best interested peer, falling back to hash routing once nobody is left.
pub fn route_dynamic(
    case: &TestCase,
    dir: &UtilityDirectory,
    ctx: &PolicyContext<'_>,
) -> Vec<NodeId> {
    match dir.best_interested() {
        Some(r) => vec![r],
        None => route_selective(case, ctx),
    }
}

pub fn record_evaluation(dir: &mut UtilityDirectory, sender: NodeId, useful: bool) -> Option<Message> {
    dir.record_evaluation(sender, useful)
}

pub fn handle_low_utility(dir: &mut UtilityDirectory, notice_from: NodeId) {
    dir.handle_low_utility(notice_from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::FuzzerClass;

    const CLASSES: [FuzzerClass; 4] = [FuzzerClass::Other; 4];

    fn ctx() -> PolicyContext<'static> {
        PolicyContext::new(NodeId(0), &CLASSES, 0)
    }

    fn case() -> TestCase {
        TestCase::new(Vec::new(), NodeId(0), 0)
    }

    #[test]
    fn argmax_with_lowest_rank_tie_break() {
        let mut dir = UtilityDirectory::new(NodeId(0), 4, -5);
        dir.set_score(NodeId(1), 3);
        dir.set_score(NodeId(2), 5);
        dir.set_score(NodeId(3), 5);
        assert_eq!(route_dynamic(&case(), &dir, &ctx()), vec![NodeId(2)]);
    }

    #[test]
    fn negative_scores() {
        let mut dir = UtilityDirectory::new(NodeId(0), 4, -5);
        dir.handle_low_utility(NodeId(2));
        dir.set_score(NodeId(1), -2);
        dir.set_score(NodeId(3), 0);
        assert_eq!(route_dynamic(&case(), &dir, &ctx()), vec![NodeId(3)]);
    }

    #[test]
    fn empty_interested_falls_back_to_hashing() {
        let mut dir = UtilityDirectory::new(NodeId(0), 4, -5);
        for r in 1..4 {
            dir.handle_low_utility(NodeId(r));
        }
        assert!(dir.interested().is_empty());
        assert_eq!(
            route_dynamic(&case(), &dir, &ctx()),
            route_selective(&case(), &ctx())
        );
    }

    #[test]
    fn fresh_directory_prefers_lowest_peer() {
        let dir = UtilityDirectory::new(NodeId(0), 4, -5);
        assert_eq!(dir.best_interested(), Some(NodeId(1)));
        let dir = UtilityDirectory::new(NodeId(2), 4, -5);
        assert_eq!(dir.best_interested(), Some(NodeId(0)));
    }

    #[test]
    fn increment_and_decrement() {
        let mut dir = UtilityDirectory::new(NodeId(0), 3, -5);
        assert_eq!(dir.record_evaluation(NodeId(1), true), None);
        assert_eq!(dir.score(NodeId(1)), 1);
        assert_eq!(dir.record_evaluation(NodeId(1), false), None);
        assert_eq!(dir.score(NodeId(1)), 0);
    }

    #[test]
    fn notice_on_crossing_only() {
        let mut dir = UtilityDirectory::new(NodeId(0), 3, -5);
        dir.set_score(NodeId(1), -5);
        assert_eq!(
            dir.record_evaluation(NodeId(1), false),
            Some(Message::LowUtilityNotice { from: NodeId(0) })
        );
        assert_eq!(dir.score(NodeId(1)), -6);
        assert_eq!(dir.record_evaluation(NodeId(1), false), None);
        assert_eq!(dir.score(NodeId(1)), -7);
    }

    #[test]
    fn scripted_crossing_sequence() {
        // Six useless inputs from a fresh sender: only the sixth crosses -5.
        let mut dir = UtilityDirectory::new(NodeId(2), 3, -5);
        let notices: Vec<bool> = (0..10)
            .map(|_| dir.record_evaluation(NodeId(1), false).is_some())
            .collect();
        assert_eq!(
            notices,
            [false, false, false, false, false, true, false, false, false, false]
        );
        // Recovering above the threshold and falling again is a new crossing.
        for _ in 0..6 {
            dir.record_evaluation(NodeId(1), true);
        }
        assert_eq!(dir.score(NodeId(1)), -4);
        assert!(dir.record_evaluation(NodeId(1), false).is_none());
        assert!(dir.record_evaluation(NodeId(1), false).is_some());
    }

    #[test]
    fn low_utility_is_idempotent() {
        let mut dir = UtilityDirectory::new(NodeId(0), 4, -5);
        dir.handle_low_utility(NodeId(2));
        let once = dir.clone();
        dir.handle_low_utility(NodeId(2));
        assert_eq!(dir, once);
        let left: Vec<_> = dir.interested().iter().copied().collect();
        assert_eq!(left, vec![NodeId(1), NodeId(3)]);
    }
}
