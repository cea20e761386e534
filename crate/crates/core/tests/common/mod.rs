//! Crafted targets and config builders shared by the integration suites.
#![allow(dead_code)]

use fuzzsync::{CampaignConfig, FuzzerClass, Gate, PolicyKind, TargetSpec};

/// Four-link chain whose 4-byte magics are solvable only by cmplog, laf,
/// other and cmplog in turn. Each link has four one-byte side gates anyone
/// can solve once the link is held. A row of single-bit root gates, which no
/// class solves directly, keeps bit-flip discoveries trickling in everywhere.
pub fn relay_chain_target() -> TargetSpec {
    const SIDE: u32 = 4;
    const SHALLOW: u32 = 16;
    let links: [(FuzzerClass, &[u8; 4]); 4] = [
        (FuzzerClass::Cmplog, b"MPI\x01"),
        (FuzzerClass::Laf, b"RANK"),
        (FuzzerClass::Other, b"SYNC"),
        (FuzzerClass::Cmplog, b"DONE"),
    ];
    let bit = |k: u32| [1u8 << (k % 8)];
    let mut gates = Vec::new();
    let mut parent = None;
    for (i, (hint, magic)) in links.into_iter().enumerate() {
        let id = (i + 1) as u32;
        gates.push(Gate::new(id, parent, 4 * i, magic).hinted(hint));
        for k in 0..SIDE {
            let offset = 16 + (SIDE * i as u32 + k) as usize;
            gates.push(Gate::new(100 + SIDE * id + k, Some(id), offset, &bit(k)));
        }
        parent = Some(id);
    }
    let base = 16 + 4 * SIDE as usize;
    for k in 0..SHALLOW {
        // Asan never gate-solves, so these only fall to bit flips.
        let gate = Gate::new(500 + k, None, base + k as usize, &bit(k));
        gates.push(gate.hinted(FuzzerClass::Asan));
    }
    let len = base + SHALLOW as usize;
    TargetSpec::new(gates, 64, vec![vec![0; len]]).unwrap()
}

/// Deep crashing gate behind a two-link chain that only cmplog can solve.
pub fn stagnation_target() -> TargetSpec {
    let mut gates = vec![
        Gate::new(1, None, 0, b"LCMS").hinted(FuzzerClass::Cmplog),
        Gate::new(2, Some(1), 4, b"ICC\x02").hinted(FuzzerClass::Cmplog),
        Gate::new(DEEP_GATE, Some(2), 8, b"DEEP")
            .hinted(FuzzerClass::Cmplog)
            .crashing(),
    ];
    for k in 0..4u32 {
        gates.push(Gate::new(10 + k, None, 16 + k as usize, &[0x30 + k as u8]));
    }
    TargetSpec::new(gates, 64, vec![vec![0; 20]]).unwrap()
}

pub const DEEP_GATE: u32 = 3;

pub fn eight_node(policy: PolicyKind, seed: u64) -> CampaignConfig {
    let mut cfg = CampaignConfig::new(8, policy);
    cfg.seed = seed;
    cfg.total_ticks = 1200;
    cfg.sample_interval = 60;
    cfg.execs_per_tick = 4;
    cfg
}
