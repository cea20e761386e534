//! Tick-driven campaign orchestration.
//!
//! Within a tick, nodes act in rank order. Each node polls its send queue,
//! drains its inbox, runs `execs_per_tick` fuzz iterations and flushes any
//! periodic batch. Then the clock advances; on sample boundaries every node
//! is sampled and checked for stagnation, and a pending ammuina round runs
//! once every node has seen a request. After `total_ticks` the campaign is
//! drained: in-flight traffic is delivered and evaluated, with no further
//! fuzzing, until every queue is empty.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{CampaignConfig, PolicyKind};
use crate::fuzzer::{FuzzError, FuzzerNode, FuzzerParams, NodeEnv};
use crate::metrics::{crash_stats, CrashStats, MetricSample, SeriesPoint};
use crate::policy::{build_cluster_plan, check_stagnation, NodePolicy, Stagnation};
use crate::target::TargetSpec;
use crate::transport::{InMemoryTransport, LatencyModel, LogEntry, Transport, TrafficCounters};
use crate::types::{CoverageMap, FuzzerClass, NodeId, Tick};

/// Upper bound on drain length.
const DRAIN_LIMIT: Tick = 10_000_000;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("target allows {target} byte inputs but max_input_len is {config}")]
    InputLimit { target: usize, config: usize },
    #[error("campaign already finished")]
    CampaignFinished,
    #[error("drain did not settle within {0} ticks")]
    DrainStalled(Tick),
    #[error(transparent)]
    Fuzz(#[from] FuzzError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmmuinaRound {
    pub tick: Tick,
    pub completes_at: Tick,
    pub contributed: usize,
    pub initiators: Vec<NodeId>,
}

/// Everything a finished campaign produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub label: String,
    pub policy: PolicyKind,
    pub target_id: String,
    pub nodes: usize,
    pub classes: Vec<FuzzerClass>,
    pub seed: u64,
    pub total_ticks: Tick,
    pub sample_interval: Tick,
    pub aggregate_series: Vec<SeriesPoint>,
    pub class_series: BTreeMap<FuzzerClass, Vec<SeriesPoint>>,
    /// Union coverage after drain.
    pub final_coverage: usize,
    pub final_node_coverage: Vec<usize>,
    pub final_class_coverage: BTreeMap<FuzzerClass, usize>,
    pub crash_stats: CrashStats,
    pub crash_ids: Vec<u64>,
    pub node_first_crash: Vec<Option<Tick>>,
    pub ammuina_rounds: Vec<AmmuinaRound>,
    pub messages: TrafficCounters,
    pub sync_cost_total: u64,
    pub node_sync_cost: Vec<u64>,
    pub execs: u64,
    pub drain_ticks: Tick,
    pub invariant_violations: u64,
    #[serde(skip)]
    pub samples: Vec<MetricSample>,
    #[serde(skip)]
    pub message_log: Option<Vec<LogEntry>>,
}

impl CampaignReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug)]
pub struct Campaign<'t> {
    cfg: CampaignConfig,
    target: &'t TargetSpec,
    params: FuzzerParams,
    nodes: Vec<FuzzerNode>,
    transport: InMemoryTransport,
    now: Tick,
    samples: Vec<MetricSample>,
    aggregate: Vec<SeriesPoint>,
    class_series: BTreeMap<FuzzerClass, Vec<SeriesPoint>>,
    rounds: Vec<AmmuinaRound>,
    initiators: Vec<NodeId>,
    last_coverage: Vec<usize>,
    violations: u64,
    drain_ticks: Tick,
}

impl<'t> Campaign<'t> {
    pub fn new(
        cfg: CampaignConfig,
        target: &'t TargetSpec,
        params: FuzzerParams,
    ) -> Result<Self, CampaignError> {
        cfg.validate().map_err(CampaignError::InvalidConfig)?;
        if target.max_input_len() > cfg.max_input_len {
            return Err(CampaignError::InputLimit {
                target: target.max_input_len(),
                config: cfg.max_input_len,
            });
        }
        let plan = (cfg.policy == PolicyKind::Hierarchical)
            .then(|| Arc::new(build_cluster_plan(&cfg.classes)));
        let nodes: Vec<FuzzerNode> = (0..cfg.nodes)
            .map(|rank| {
                let id = NodeId::from(rank);
                let policy = NodePolicy::for_node(&cfg, id, plan.as_ref());
                FuzzerNode::new(id, cfg.classes[rank], policy, cfg.seed)
            })
            .collect();
        let latency = LatencyModel::new(cfg.transport.base_latency, cfg.transport.per_byte_latency);
        let mut transport = InMemoryTransport::new(cfg.nodes, latency);
        if cfg.log_messages {
            transport = transport.with_log();
        }
        let mut campaign = Campaign {
            last_coverage: vec![0; cfg.nodes],
            cfg,
            target,
            params,
            nodes,
            transport,
            now: 0,
            samples: Vec::new(),
            aggregate: Vec::new(),
            class_series: BTreeMap::new(),
            rounds: Vec::new(),
            initiators: Vec::new(),
            violations: 0,
            drain_ticks: 0,
        };
        let env = NodeEnv {
            target: campaign.target,
            cfg: &campaign.cfg,
            params: &campaign.params,
        };
        for node in &mut campaign.nodes {
            node.load_seeds(&env)?;
        }
        campaign.check_monotonic();
        campaign.record_sample();
        Ok(campaign)
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.cfg
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn is_finished(&self) -> bool {
        self.now >= self.cfg.total_ticks
    }

    pub fn nodes(&self) -> &[FuzzerNode] {
        &self.nodes
    }

    pub fn transport(&self) -> &InMemoryTransport {
        &self.transport
    }

    pub fn samples(&self) -> &[MetricSample] {
        &self.samples
    }

    pub fn ammuina_rounds(&self) -> &[AmmuinaRound] {
        &self.rounds
    }

    /// Advances the campaign by one tick.
    pub fn step(&mut self) -> Result<(), CampaignError> {
        if self.is_finished() {
            return Err(CampaignError::CampaignFinished);
        }
        let now = self.now;
        let env = NodeEnv {
            target: self.target,
            cfg: &self.cfg,
            params: &self.params,
        };
        for node in &mut self.nodes {
            node.queue.poll_completions(&self.transport, now);
            node.sync_fuzzers(&mut self.transport, &env, now)?;
            for _ in 0..self.cfg.execs_per_tick {
                node.fuzz_one(&mut self.transport, &env, now)?;
            }
            node.flush_periodic(&mut self.transport, &env, now)?;
        }
        self.now += 1;
        self.check_monotonic();

        if self.now.is_multiple_of(self.cfg.sample_interval) {
            self.record_sample();
            self.stats_update()?;
        }
        if self.cfg.ammuina.enabled && self.nodes.iter().all(|n| n.ammuina.pending_request) {
            self.run_ammuina_round();
        }
        Ok(())
    }

    fn stats_update(&mut self) -> Result<(), CampaignError> {
        let now = self.now;
        let env = NodeEnv {
            target: self.target,
            cfg: &self.cfg,
            params: &self.params,
        };
        for node in &mut self.nodes {
            let inc = node.take_coverage_increment();
            if !self.cfg.ammuina.enabled {
                continue;
            }
            let verdict = check_stagnation(&mut node.ammuina, inc, now, &self.cfg.ammuina);
            if verdict == Stagnation::Trigger && !node.ammuina.pending_request {
                node.broadcast_ammuina_request(&mut self.transport, &env, now)?;
                self.initiators.push(node.id());
            }
        }
        Ok(())
    }

    fn run_ammuina_round(&mut self) {
        let now = self.now;
        let env = NodeEnv {
            target: self.target,
            cfg: &self.cfg,
            params: &self.params,
        };
        let contributions: Vec<_> = self
            .nodes
            .iter_mut()
            .map(|n| n.ammuina_contribution(&env))
            .collect();
        let contributed = contributions.iter().map(Vec::len).sum();
        let exchange = self.transport.exchange_all(&contributions, now);
        for (node, cases) in self.nodes.iter_mut().zip(exchange.received) {
            node.finish_ammuina_round(now, exchange.completes_at, cases);
        }
        self.rounds.push(AmmuinaRound {
            tick: now,
            completes_at: exchange.completes_at,
            contributed,
            initiators: std::mem::take(&mut self.initiators),
        });
    }

    fn check_monotonic(&mut self) {
        for (node, last) in self.nodes.iter().zip(self.last_coverage.iter_mut()) {
            let count = node.corpus.coverage().count();
            if count < *last {
                self.violations += 1;
            }
            *last = count;
        }
    }

    fn record_sample(&mut self) {
        let tick = self.now;
        let mut union = CoverageMap::new();
        let mut per_class: BTreeMap<FuzzerClass, CoverageMap> = BTreeMap::new();
        for node in &self.nodes {
            let cov = node.corpus.coverage();
            self.samples.push(MetricSample {
                tick,
                node: node.id(),
                coverage_count: cov.count(),
                corpus_size: node.corpus.len(),
                sync_cost: node.sync_cost(),
                crashes: node.corpus.crashes_found(),
            });
            union.merge(cov);
            per_class.entry(node.class()).or_default().merge(cov);
        }
        self.aggregate.push(SeriesPoint {
            tick,
            coverage: union.count(),
        });
        for (class, cov) in per_class {
            self.class_series.entry(class).or_default().push(SeriesPoint {
                tick,
                coverage: cov.count(),
            });
        }
    }

    pub fn run_to_end(&mut self) -> Result<(), CampaignError> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(())
    }

    fn quiescent(&self) -> bool {
        self.transport.in_flight() == 0
            && self
                .nodes
                .iter()
                .all(|n| n.queue.is_empty() && !n.has_pending_exchange())
    }

    /// Delivers and evaluates everything still in flight. Returns the ticks spent.
    pub fn drain(&mut self) -> Result<Tick, CampaignError> {
        let start = self.now;
        let env = NodeEnv {
            target: self.target,
            cfg: &self.cfg,
            params: &self.params,
        };
        loop {
            let now = self.now;
            for node in &mut self.nodes {
                node.queue.poll_completions(&self.transport, now);
                node.sync_fuzzers(&mut self.transport, &env, now)?;
            }
            if self.quiescent() {
                break;
            }
            self.now += 1;
            if self.now - start > DRAIN_LIMIT {
                return Err(CampaignError::DrainStalled(DRAIN_LIMIT));
            }
        }
        self.check_monotonic();
        self.drain_ticks = self.now - start;
        Ok(self.drain_ticks)
    }

    pub fn into_report(mut self, label: impl Into<String>) -> CampaignReport {
        let mut union = CoverageMap::new();
        let mut per_class: BTreeMap<FuzzerClass, CoverageMap> = BTreeMap::new();
        let mut crash_ids = std::collections::BTreeSet::new();
        for node in &self.nodes {
            union.merge(node.corpus.coverage());
            per_class
                .entry(node.class())
                .or_default()
                .merge(node.corpus.coverage());
            crash_ids.extend(node.corpus.crash_ids().iter().copied());
        }
        let node_violations: u64 = self.nodes.iter().map(FuzzerNode::violations).sum();
        let mut report = CampaignReport {
            label: label.into(),
            policy: self.cfg.policy,
            target_id: format!("{:016x}", self.target.target_id()),
            nodes: self.cfg.nodes,
            classes: self.cfg.classes.clone(),
            seed: self.cfg.seed,
            total_ticks: self.cfg.total_ticks,
            sample_interval: self.cfg.sample_interval,
            aggregate_series: std::mem::take(&mut self.aggregate),
            class_series: std::mem::take(&mut self.class_series),
            final_coverage: union.count(),
            final_node_coverage: self.nodes.iter().map(|n| n.corpus.coverage().count()).collect(),
            final_class_coverage: per_class.into_iter().map(|(c, m)| (c, m.count())).collect(),
            crash_stats: CrashStats {
                max_crashes: 0,
                first_crash_tick: None,
            },
            crash_ids: crash_ids.into_iter().collect(),
            node_first_crash: self.nodes.iter().map(FuzzerNode::first_crash_tick).collect(),
            ammuina_rounds: std::mem::take(&mut self.rounds),
            messages: self.transport.counters(),
            sync_cost_total: self.nodes.iter().map(FuzzerNode::sync_cost).sum(),
            node_sync_cost: self.nodes.iter().map(FuzzerNode::sync_cost).collect(),
            execs: self.nodes.iter().map(FuzzerNode::execs).sum(),
            drain_ticks: self.drain_ticks,
            invariant_violations: self.violations + node_violations,
            samples: std::mem::take(&mut self.samples),
            message_log: self.transport.take_log(),
        };
        report.crash_stats = crash_stats(&report);
        report
    }
}

/// Runs a full campaign with default simulator knobs, labelled by policy.
pub fn run_campaign(cfg: &CampaignConfig, target: &TargetSpec) -> Result<CampaignReport, CampaignError> {
    run_campaign_with(cfg, target, &FuzzerParams::default(), cfg.policy.as_str())
}

pub fn run_campaign_with(
    cfg: &CampaignConfig,
    target: &TargetSpec,
    params: &FuzzerParams,
    label: &str,
) -> Result<CampaignReport, CampaignError> {
    let mut campaign = Campaign::new(cfg.clone(), target, params.clone())?;
    campaign.run_to_end()?;
    campaign.drain()?;
    Ok(campaign.into_report(label))
}
