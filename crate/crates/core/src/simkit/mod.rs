//! Discrete-event simulation of the car-sharing network, including two-car
//! trains, and of an isolated relocation queue.

mod compare;
mod engine;
mod output;
mod queue;
mod stats;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{derive_mu_split, validate, NetworkSpec, Violation};

pub use compare::{compare_policies, AggregateGain, PolicyComparison};
pub use engine::{replication_rng, simulate, EngineOptions, RunTally, SimEvent, SimEventKind};
pub use output::{report_csv, reports_json, variation_csv};
pub use queue::{run_single_relocation_queue, QueueSimOptions, QueueSimReport};
pub use stats::mean_and_se;

/// When a customer takes a second car along.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RelocationPolicy {
    None,
    /// Every customer relocates with the same probability.
    Uniform {
        alpha: f64,
    },
    /// Relocate only if the destination has fewer parked cars than the origin.
    Backpressure,
    /// Use the per-destination `alpha_per_dest` of each station in the network.
    PerPair,
}

impl RelocationPolicy {
    pub fn label(&self) -> String {
        match self {
            RelocationPolicy::None => "none".into(),
            RelocationPolicy::Uniform { alpha } => format!("uniform:{alpha}"),
            RelocationPolicy::Backpressure => "backpressure".into(),
            RelocationPolicy::PerPair => "perpair".into(),
        }
    }

    pub fn check(&self) -> Result<(), SimError> {
        match self {
            RelocationPolicy::Uniform { alpha } if !(0.0..=1.0).contains(alpha) => {
                Err(SimError::Config(format!("uniform alpha {alpha} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for RelocationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad policy '{input}': {reason}")]
pub struct PolicyParseError {
    pub input: String,
    pub reason: String,
}

impl FromStr for RelocationPolicy {
    type Err = PolicyParseError;

    /// Accepts `none`, `uniform:<alpha>`, `backpressure` and `perpair`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let fail = |reason: &str| PolicyParseError {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let s = s.trim();
        match s.split_once(':') {
            None => match s.to_ascii_lowercase().as_str() {
                "none" => Ok(RelocationPolicy::None),
                "backpressure" => Ok(RelocationPolicy::Backpressure),
                "perpair" => Ok(RelocationPolicy::PerPair),
                "uniform" => Err(fail("uniform needs a probability, e.g. uniform:0.3")),
                _ => Err(fail("expected none, uniform:<alpha>, backpressure or perpair")),
            },
            Some((name, value)) if name.eq_ignore_ascii_case("uniform") => {
                let alpha: f64 = value.trim().parse().map_err(|_| fail("alpha is not a number"))?;
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(fail("alpha must lie in [0, 1]"));
                }
                Ok(RelocationPolicy::Uniform { alpha })
            }
            Some(_) => Err(fail("only uniform takes a parameter")),
        }
    }
}

/// Parses a comma-separated policy list.
pub fn parse_policies(s: &str) -> Result<Vec<RelocationPolicy>, PolicyParseError> {
    s.split(',').map(str::parse).collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid network: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// One simulation study of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub spec: NetworkSpec,
    /// Simulated hours per replication, warmup included.
    pub horizon: f64,
    /// Discarded initial hours; 20% of the horizon when unset.
    pub warmup: Option<f64>,
    pub seed: u64,
    pub policy: RelocationPolicy,
    pub replications: usize,
    /// Give each car of a train its own travel time instead of a shared one.
    pub independent_train_travel: bool,
}

impl SimConfig {
    pub const DEFAULT_REPLICATIONS: usize = 10;
    pub const DEFAULT_WARMUP_FRACTION: f64 = 0.2;

    pub fn new(spec: NetworkSpec, horizon: f64, seed: u64) -> SimConfig {
        SimConfig {
            spec,
            horizon,
            warmup: None,
            seed,
            policy: RelocationPolicy::None,
            replications: Self::DEFAULT_REPLICATIONS,
            independent_train_travel: false,
        }
    }

    pub fn with_policy(&self, policy: RelocationPolicy) -> SimConfig {
        SimConfig { policy, ..self.clone() }
    }

    pub fn effective_warmup(&self) -> f64 {
        self.warmup.unwrap_or(Self::DEFAULT_WARMUP_FRACTION * self.horizon)
    }

    /// Checks the configuration and returns the network with per-destination
    /// rates.
    pub fn prepare(&self) -> Result<NetworkSpec, SimError> {
        let violations = validate(&self.spec);
        if !violations.is_empty() {
            return Err(SimError::Invalid(violations));
        }
        let warmup = self.effective_warmup();
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(SimError::Config(format!("horizon {} must be > 0", self.horizon)));
        }
        if !(warmup >= 0.0 && warmup < self.horizon) {
            return Err(SimError::Config(format!(
                "warmup {warmup} must lie in [0, horizon = {})",
                self.horizon
            )));
        }
        if self.replications == 0 {
            return Err(SimError::Config("at least one replication is needed".into()));
        }
        self.policy.check()?;
        derive_mu_split(&self.spec).map_err(|e| SimError::Config(e.to_string()))
    }
}

/// Replication averages and their standard errors. Standard errors are NaN
/// with a single replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub policy: RelocationPolicy,
    pub replications: usize,
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
    /// Fraction of time with at least one parked car, per station.
    pub availability: Vec<f64>,
    pub availability_se: Vec<f64>,
    /// Customers served per hour, per station.
    pub pickups_per_hour: Vec<f64>,
    pub pickups_per_hour_se: Vec<f64>,
    /// Cars leaving per hour, per station (trains count twice).
    pub car_departures_per_hour: Vec<f64>,
    pub avg_parked: Vec<f64>,
    pub avg_parked_se: Vec<f64>,
    /// Mean customers lost per replication, per station.
    pub lost_customers: Vec<f64>,
    /// Mean trains formed per replication, per station.
    pub trains: Vec<f64>,
    pub avg_in_transit: Vec<f64>,
    pub avg_in_transit_se: Vec<f64>,
    /// Share of the origin's departing cars that used each link.
    pub link_routing_fraction: Vec<f64>,
    pub link_routing_fraction_se: Vec<f64>,
    /// Per-replication station availabilities, used for paired comparisons.
    #[serde(skip)]
    pub replication_availability: Vec<Vec<f64>>,
}

impl SimReport {
    /// Mean over stations of the availability, per replication.
    pub fn replication_mean_availability(&self) -> Vec<f64> {
        self.replication_availability
            .iter()
            .map(|a| a.iter().sum::<f64>() / a.len().max(1) as f64)
            .collect()
    }

    /// Time-averaged number of cars, parked plus travelling.
    pub fn total_population(&self) -> f64 {
        self.avg_parked.iter().sum::<f64>() + self.avg_in_transit.iter().sum::<f64>()
    }
}

/// Runs all replications of `config` and averages them. Replications run in
/// parallel but each has its own random streams, so the report only depends
/// on the configuration.
pub fn run_network(config: &SimConfig) -> Result<SimReport, SimError> {
    let spec = config.prepare()?;
    let options = EngineOptions {
        horizon: config.horizon,
        warmup: config.effective_warmup(),
        policy: config.policy.clone(),
        independent_train_travel: config.independent_train_travel,
    };
    let tallies: Vec<RunTally> = (0..config.replications)
        .into_par_iter()
        .map(|rep| simulate(&spec, &options, config.seed, rep as u64, None))
        .collect();
    Ok(summarize(config, &spec, &options, &tallies))
}

fn summarize(config: &SimConfig, spec: &NetworkSpec, options: &EngineOptions, tallies: &[RunTally]) -> SimReport {
    let duration = options.horizon - options.warmup;
    let per_station = |f: &dyn Fn(&RunTally, usize) -> f64| -> (Vec<f64>, Vec<f64>) {
        (0..spec.num_stations())
            .map(|i| mean_and_se(&tallies.iter().map(|t| f(t, i)).collect::<Vec<_>>()))
            .unzip()
    };
    let per_link = |f: &dyn Fn(&RunTally, usize) -> f64| -> (Vec<f64>, Vec<f64>) {
        (0..spec.links.len())
            .map(|l| mean_and_se(&tallies.iter().map(|t| f(t, l)).collect::<Vec<_>>()))
            .unzip()
    };

    let (availability, availability_se) = per_station(&|t, i| t.busy_time[i] / duration);
    let (pickups_per_hour, pickups_per_hour_se) = per_station(&|t, i| t.served[i] as f64 / duration);
    let (car_departures_per_hour, _) = per_station(&|t, i| t.car_departures[i] as f64 / duration);
    let (avg_parked, avg_parked_se) = per_station(&|t, i| t.parked_area[i] / duration);
    let (lost_customers, _) = per_station(&|t, i| t.lost[i] as f64);
    let (trains, _) = per_station(&|t, i| t.trains[i] as f64);
    let (avg_in_transit, avg_in_transit_se) = per_link(&|t, l| t.transit_area[l] / duration);
    let (link_routing_fraction, link_routing_fraction_se) = per_link(&|t, l| {
        let origin = spec.links[l].origin.0;
        let total = t.car_departures[origin];
        if total == 0 {
            0.0
        } else {
            t.link_departures[l] as f64 / total as f64
        }
    });

    SimReport {
        policy: config.policy.clone(),
        replications: tallies.len(),
        horizon: options.horizon,
        warmup: options.warmup,
        seed: config.seed,
        availability,
        availability_se,
        pickups_per_hour,
        pickups_per_hour_se,
        car_departures_per_hour,
        avg_parked,
        avg_parked_se,
        lost_customers,
        trains,
        avg_in_transit,
        avg_in_transit_se,
        link_routing_fraction,
        link_routing_fraction_se,
        replication_availability: tallies
            .iter()
            .map(|t| t.busy_time.iter().map(|b| b / duration).collect())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::network_from_rates;

    #[test]
    fn parses_policies() {
        assert_eq!("none".parse(), Ok(RelocationPolicy::None));
        assert_eq!(" Backpressure ".parse(), Ok(RelocationPolicy::Backpressure));
        assert_eq!("uniform:0.25".parse(), Ok(RelocationPolicy::Uniform { alpha: 0.25 }));
        assert_eq!("perpair".parse(), Ok(RelocationPolicy::PerPair));
        assert!("uniform".parse::<RelocationPolicy>().is_err());
        assert!("uniform:1.5".parse::<RelocationPolicy>().is_err());
        assert!("uniform:nan".parse::<RelocationPolicy>().is_err());
        assert!("parked".parse::<RelocationPolicy>().is_err());
        assert!("none:1".parse::<RelocationPolicy>().is_err());
        assert_eq!(parse_policies("none,backpressure").unwrap().len(), 2);
    }

    #[test]
    fn label_round_trips() {
        for p in [
            RelocationPolicy::None,
            RelocationPolicy::Uniform { alpha: 0.3 },
            RelocationPolicy::Backpressure,
            RelocationPolicy::PerPair,
        ] {
            assert_eq!(p.label().parse::<RelocationPolicy>().unwrap(), p);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let spec = network_from_rates(&[1.0, 1.0], &[(0, 1, 1.0, 0.5), (1, 0, 1.0, 0.5)], 2).unwrap();
        let mut c = SimConfig::new(spec, 100.0, 1);
        c.warmup = Some(100.0);
        assert!(matches!(run_network(&c), Err(SimError::Config(_))));
        c.warmup = None;
        c.replications = 0;
        assert!(run_network(&c).is_err());
        c.replications = 1;
        c.horizon = 0.0;
        assert!(run_network(&c).is_err());
        c.horizon = 10.0;
        c.spec.fleet_size = 0;
        assert!(matches!(run_network(&c), Err(SimError::Invalid(_))));
    }

    #[test]
    fn population_accounting_is_exact() {
        let spec = network_from_rates(
            &[0.8, 1.5, 0.4],
            &[(0, 1, 0.5, 0.3), (0, 2, 0.5, 0.6), (1, 0, 1.0, 0.2), (2, 1, 1.0, 0.4)],
            7,
        )
        .unwrap();
        for policy in [RelocationPolicy::None, RelocationPolicy::Backpressure] {
            let mut c = SimConfig::new(spec.clone(), 500.0, 3).with_policy(policy);
            c.replications = 3;
            let r = run_network(&c).unwrap();
            assert!((r.total_population() - 7.0).abs() < 1e-9);
            assert!(r.availability.iter().all(|a| (0.0..=1.0).contains(a)));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = network_from_rates(&[1.0, 2.0], &[(0, 1, 1.0, 0.5), (1, 0, 1.0, 0.5)], 4).unwrap();
        let mut c = SimConfig::new(spec, 300.0, 11).with_policy(RelocationPolicy::Uniform { alpha: 0.5 });
        c.replications = 4;
        let a = run_network(&c).unwrap();
        let b = run_network(&c).unwrap();
        assert_eq!(a, b);
        c.seed = 12;
        assert_ne!(run_network(&c).unwrap().availability, a.availability);
    }

    #[test]
    fn single_car_alternates() {
        // Alternating renewal: station i holds the car for 1/μ_i on average.
        let spec = network_from_rates(&[1.0, 0.5], &[(0, 1, 1.0, 0.25), (1, 0, 1.0, 0.75)], 1).unwrap();
        let mut c = SimConfig::new(spec, 20_000.0, 5);
        c.replications = 8;
        let r = run_network(&c).unwrap();
        let cycle = 1.0 + 2.0 + 0.25 + 0.75;
        for (i, want) in [1.0 / cycle, 2.0 / cycle].into_iter().enumerate() {
            assert!((r.availability[i] - want).abs() < 4.0 * r.availability_se[i] + 1e-3);
        }
    }

    #[test]
    fn uniform_zero_equals_none() {
        let spec = network_from_rates(
            &[0.8, 1.5, 0.4],
            &[(0, 1, 0.5, 0.3), (0, 2, 0.5, 0.6), (1, 0, 1.0, 0.2), (2, 1, 1.0, 0.4)],
            9,
        )
        .unwrap();
        let mut c = SimConfig::new(spec, 400.0, 21);
        c.replications = 3;
        let none = run_network(&c).unwrap();
        let uni = run_network(&c.with_policy(RelocationPolicy::Uniform { alpha: 0.0 })).unwrap();
        assert_eq!(none.availability, uni.availability);
        assert_eq!(none.avg_parked, uni.avg_parked);
        assert!(uni.trains.iter().all(|&t| t == 0.0));
    }
}
