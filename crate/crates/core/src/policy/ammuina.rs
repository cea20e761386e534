//! Stagnation detection and the all-node exchange that follows it.

use crate::config::AmmuinaConfig;
use crate::types::{TestCase, Tick};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AmmuinaState {
    /// Last stats update whose coverage increment reached `t_inc`.
    pub last_progress_tick: Tick,
    /// Tick of the most recent round, `None` before the first one.
    pub last_round_tick: Option<Tick>,
    pub pending_request: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stagnation {
    Trigger,
    NoTrigger,
}

/// Evaluated at every stats update.
///
/// Progress (`coverage_increment >= t_inc`) resets the stagnation clock.
/// Otherwise a round is requested once `t_time` ticks have passed since the
/// last progress and the cooldown since the previous round has expired.
pub fn check_stagnation(
    st: &mut AmmuinaState,
    coverage_increment: u64,
    now: Tick,
    cfg: &AmmuinaConfig,
) -> Stagnation {
    if coverage_increment >= cfg.t_inc {
        st.last_progress_tick = now;
        return Stagnation::NoTrigger;
    }
    let stalled = now.saturating_sub(st.last_progress_tick) >= cfg.t_time;
    let cooled = st
        .last_round_tick
        .is_none_or(|r| now.saturating_sub(r) >= cfg.cooldown);
    if stalled && cooled {
        Stagnation::Trigger
    } else {
        Stagnation::NoTrigger
    }
}

/// Up to `cap` of the cases found since the last round, newest first.
pub fn select_contribution(new_cases: &[TestCase], cap: usize) -> Vec<TestCase> {
    new_cases.iter().rev().take(cap).cloned().collect()
}
