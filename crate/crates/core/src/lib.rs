//! Corpus dissemination for distributed coverage-guided fuzzing.
//!
//! Fuzzing nodes share interesting inputs over an asynchronous transport
//! under one of several policies:
//!
//! - **selective**: each input goes to the rank `xxh64(input) mod N`;
//! - **dynamic**: inputs go to the peer whose own inputs proved most useful,
//!   and receivers can ask a sender to stop;
//! - **hierarchical**: nodes of one instrumentation class report to a
//!   master, and masters exchange deltas periodically;
//! - **baseline-periodic**: every node broadcasts its new inputs in batches;
//! - **ammuina** rounds (combinable with any of the above): once a node's
//!   coverage stalls, all nodes swap their recent finds.
//!
//! The [`campaign`] module simulates whole campaigns tick by tick on
//! synthetic gate targets ([`target`]), deterministically for a given seed,
//! and [`metrics`] turns the resulting reports into time-to-coverage tables,
//! crash statistics and sync-cost series. [`sweep`] runs independent
//! campaigns in parallel.
//!
//! ```
//! use fuzzsync::{run_campaign, CampaignConfig, Gate, PolicyKind, TargetSpec};
//!
//! let target = TargetSpec::new(vec![Gate::new(1, None, 0, b"F")], 64, vec![]).unwrap();
//! let mut cfg = CampaignConfig::new(4, PolicyKind::Selective);
//! cfg.total_ticks = 120;
//! let report = run_campaign(&cfg, &target).unwrap();
//! assert_eq!(report.aggregate_series.len(), 3);
//! ```

pub mod campaign;
pub mod config;
pub mod fuzzer;
pub mod metrics;
pub mod policy;
pub mod rng;
pub mod sweep;
pub mod target;
pub mod transport;
pub mod types;

pub use campaign::{run_campaign, run_campaign_with, Campaign, CampaignError, CampaignReport};
pub use config::{validate_config, CampaignConfig, PolicyKind, Rational};
pub use fuzzer::{FuzzerNode, FuzzerParams, SolveProbabilities};
pub use metrics::{best_coverage, crash_stats, render_tables, time_to_target, MetricSample};
pub use sweep::{run_sweep, Execution, Job};
pub use target::{generate_target, run_target, ExecutionResult, Gate, TargetShape, TargetSpec};
pub use transport::{InMemoryTransport, LatencyModel, SendQueue, Transport};
pub use types::{hash_payload, CoverageMap, FuzzerClass, Message, NodeId, TestCase, Tick};
