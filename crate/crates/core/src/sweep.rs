//! Batch execution of independent campaigns and routing histograms.
//!
//! Campaigns never share state, so a sweep over seeds or policies is
//! embarrassingly parallel. With the `parallel` feature (on by default) the
//! batch runs on the rayon pool; without it, or with
//! [`Execution::Sequential`], jobs run one after another. Results come back
//! in job order either way, and each report is identical to what a
//! standalone run would produce.

use crate::campaign::{run_campaign_with, CampaignError, CampaignReport};
use crate::config::CampaignConfig;
use crate::fuzzer::FuzzerParams;
use crate::policy::owner_rank;
use crate::target::TargetSpec;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// True when jobs will actually run concurrently.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

#[derive(Debug, Clone)]
pub struct Job {
    pub label: String,
    pub cfg: CampaignConfig,
}

impl Job {
    pub fn new(label: impl Into<String>, cfg: CampaignConfig) -> Self {
        Job {
            label: label.into(),
            cfg,
        }
    }
}

fn run_job(job: &Job, target: &TargetSpec, params: &FuzzerParams) -> Result<CampaignReport, CampaignError> {
    run_campaign_with(&job.cfg, target, params, &job.label)
}

pub fn run_sweep(
    jobs: &[Job],
    target: &TargetSpec,
    params: &FuzzerParams,
    mode: Execution,
) -> Vec<Result<CampaignReport, CampaignError>> {
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return jobs.par_iter().map(|j| run_job(j, target, params)).collect();
    }
    let _ = mode;
    jobs.iter().map(|j| run_job(j, target, params)).collect()
}

/// How many of `payloads` hash to each of `n_nodes` ranks.
pub fn routing_histogram(payloads: &[Vec<u8>], n_nodes: usize, mode: Execution) -> Vec<u64> {
    let tally = |mut acc: Vec<u64>, p: &Vec<u8>| {
        acc[owner_rank(p, n_nodes).index()] += 1;
        acc
    };
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return payloads
            .par_iter()
            .fold(|| vec![0u64; n_nodes], tally)
            .reduce(
                || vec![0u64; n_nodes],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
    }
    let _ = mode;
    payloads.iter().fold(vec![0u64; n_nodes], tally)
}
