//! Campaign configuration and its validation.
//!
//! The JSON layout mirrors the struct layout one to one:
//!
//! ```json
//! {
//!   "nodes": 4, "policy": "selective", "classes": ["asan", "cmplog", "laf", "other"],
//!   "seed": 7, "total_ticks": 1200, "sample_interval": 60, "execs_per_tick": 4,
//!   "ammuina": {"enabled": true, "t_inc": 3, "t_time": 600, "cooldown": 300, "batch_cap": 16},
//!   "dynamic": {"u_min": -5},
//!   "hierarchical": {"inter_master_period": 120},
//!   "baseline": {"period": 120},
//!   "transport": {"base_latency": 1, "per_byte_latency": "1/64"},
//!   "costs": {"c_send": 1, "c_recv": 1, "c_file": 10},
//!   "max_input_len": 1024, "log_messages": false
//! }
//! ```
//!
//! Every section and most keys may be omitted; missing values take the
//! defaults of [`CampaignConfig::default`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::types::{FuzzerClass, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    None,
    Selective,
    Dynamic,
    Hierarchical,
    BaselinePeriodic,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::None,
        PolicyKind::Selective,
        PolicyKind::Dynamic,
        PolicyKind::Hierarchical,
        PolicyKind::BaselinePeriodic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::None => "none",
            PolicyKind::Selective => "selective",
            PolicyKind::Dynamic => "dynamic",
            PolicyKind::Hierarchical => "hierarchical",
            PolicyKind::BaselinePeriodic => "baseline-periodic",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown policy `{s}`"))
    }
}

/// Non-negative rational, used for the per-byte latency.
///
/// Serialized as an integer when the denominator is 1 and as `"num/den"`
/// otherwise. Decimal JSON numbers such as `0.125` are read exactly from
/// their shortest decimal representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    num: u64,
    den: u64,
}

impl Rational {
    pub const ZERO: Rational = Rational { num: 0, den: 1 };

    pub fn new(num: u64, den: u64) -> Self {
        Rational { num, den }
    }

    pub fn integer(n: u64) -> Self {
        Rational { num: n, den: 1 }
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    /// `ceil(self * n)`. Panics on a zero denominator; validation rejects those.
    pub fn mul_ceil(&self, n: u64) -> u64 {
        let prod = self.num as u128 * n as u128;
        let den = self.den as u128;
        prod.div_ceil(den) as u64
    }

    fn parse_decimal(s: &str) -> Option<Rational> {
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 18 || int.is_empty() && frac.is_empty() {
            return None;
        }
        let den = 10u64.checked_pow(frac.len() as u32)?;
        let int: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
        let frac_v: u64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
        let num = int.checked_mul(den)?.checked_add(frac_v)?;
        Some(Rational { num, den }.reduced())
    }

    fn reduced(self) -> Rational {
        fn gcd(a: u64, b: u64) -> u64 {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        let g = gcd(self.num, self.den);
        if g <= 1 {
            self
        } else {
            Rational {
                num: self.num / g,
                den: self.den / g,
            }
        }
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Rational {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let parsed = match s.split_once('/') {
            Some((n, d)) => n
                .trim()
                .parse()
                .ok()
                .zip(d.trim().parse().ok())
                .map(|(num, den)| Rational { num, den }),
            None => Rational::parse_decimal(s),
        };
        parsed.ok_or_else(|| format!("invalid rational `{s}`"))
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.den == 1 {
            serializer.serialize_u64(self.num)
        } else {
            serializer.collect_str(self)
        }
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(u64),
            Float(f64),
            Text(String),
        }
        let text = match Repr::deserialize(deserializer)? {
            Repr::Int(n) => return Ok(Rational::integer(n)),
            Repr::Float(x) => format!("{x}"),
            Repr::Text(s) => s,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmmuinaConfig {
    pub enabled: bool,
    /// Branch-count increment per stats update below which a node counts as stagnating.
    pub t_inc: u64,
    /// Ticks without sufficient progress before a round is requested.
    pub t_time: Tick,
    pub cooldown: Tick,
    pub batch_cap: usize,
}

impl Default for AmmuinaConfig {
    fn default() -> Self {
        AmmuinaConfig {
            enabled: false,
            t_inc: 3,
            t_time: 10 * DEFAULT_SAMPLE_INTERVAL,
            cooldown: 5 * DEFAULT_SAMPLE_INTERVAL,
            batch_cap: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicConfig {
    pub u_min: i64,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        DynamicConfig { u_min: -5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierarchicalConfig {
    pub inter_master_period: Tick,
    /// Masters keep a utility directory over their peer masters and stop
    /// forwarding to peers that report low utility.
    pub utility_filter: bool,
}

impl Default for HierarchicalConfig {
    fn default() -> Self {
        HierarchicalConfig {
            inter_master_period: 2 * DEFAULT_SAMPLE_INTERVAL,
            utility_filter: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub period: Tick,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            period: 2 * DEFAULT_SAMPLE_INTERVAL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    pub base_latency: Tick,
    pub per_byte_latency: Rational,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            base_latency: 1,
            per_byte_latency: Rational::ZERO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub c_send: u64,
    pub c_recv: u64,
    pub c_file: u64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            c_send: 1,
            c_recv: 1,
            c_file: 10,
        }
    }
}

/// 60 ticks stand for five simulated minutes.
pub const DEFAULT_SAMPLE_INTERVAL: Tick = 60;
pub const DEFAULT_MAX_INPUT_LEN: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub nodes: usize,
    pub policy: PolicyKind,
    pub classes: Vec<FuzzerClass>,
    pub seed: u64,
    pub total_ticks: Tick,
    pub sample_interval: Tick,
    pub execs_per_tick: u32,
    pub ammuina: AmmuinaConfig,
    pub dynamic: DynamicConfig,
    pub hierarchical: HierarchicalConfig,
    pub baseline: BaselineConfig,
    pub transport: TransportConfig,
    pub costs: CostConfig,
    pub max_input_len: usize,
    pub log_messages: bool,
}

fn round_robin_classes(nodes: usize) -> Vec<FuzzerClass> {
    (0..nodes).map(|i| FuzzerClass::ALL[i % FuzzerClass::ALL.len()]).collect()
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            nodes: 1,
            policy: PolicyKind::None,
            classes: vec![FuzzerClass::Other],
            seed: 0,
            total_ticks: 12 * DEFAULT_SAMPLE_INTERVAL,
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
            execs_per_tick: 4,
            ammuina: AmmuinaConfig::default(),
            dynamic: DynamicConfig::default(),
            hierarchical: HierarchicalConfig::default(),
            baseline: BaselineConfig::default(),
            transport: TransportConfig::default(),
            costs: CostConfig::default(),
            max_input_len: DEFAULT_MAX_INPUT_LEN,
            log_messages: false,
        }
    }
}

impl CampaignConfig {
    /// Default config for `nodes` nodes, classes assigned round-robin.
    pub fn new(nodes: usize, policy: PolicyKind) -> Self {
        CampaignConfig {
            nodes,
            policy,
            classes: round_robin_classes(nodes),
            ..CampaignConfig::default()
        }
    }

    /// Parses a config file. Without a `classes` key, classes are assigned
    /// round-robin over `nodes`.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let has_classes = value.get("classes").is_some();
        let mut cfg: CampaignConfig = serde_json::from_value(value)?;
        if !has_classes {
            cfg.classes = round_robin_classes(cfg.nodes);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), Vec<String>> {
        let violations = validate_config(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }
}

/// Collects every violated invariant of `cfg`. An empty list means valid.
pub fn validate_config(cfg: &CampaignConfig) -> Vec<String> {
    let mut out = Vec::new();
    if cfg.nodes == 0 {
        out.push("nodes must be at least 1".to_string());
    }
    if u32::try_from(cfg.nodes).is_err() {
        out.push("nodes exceeds the rank range".to_string());
    }
    if cfg.classes.len() != cfg.nodes {
        out.push(format!(
            "classes has {} entries but nodes is {}",
            cfg.classes.len(),
            cfg.nodes
        ));
    }
    if cfg.sample_interval == 0 {
        out.push("sample_interval must be positive".to_string());
    }
    if cfg.total_ticks == 0 {
        out.push("total_ticks must be positive".to_string());
    } else if cfg.sample_interval > 0 && !cfg.total_ticks.is_multiple_of(cfg.sample_interval) {
        out.push("total_ticks not multiple of sample_interval".to_string());
    }
    if cfg.ammuina.t_time == 0 {
        out.push("t_time must be positive".to_string());
    }
    if cfg.hierarchical.inter_master_period == 0 {
        out.push("inter_master_period must be positive".to_string());
    }
    if cfg.baseline.period == 0 {
        out.push("baseline period must be positive".to_string());
    }
    if cfg.transport.per_byte_latency.den() == 0 {
        out.push("per_byte_latency has a zero denominator".to_string());
    }
    if cfg.max_input_len == 0 {
        out.push("max_input_len must be positive".to_string());
    }
    out
}
