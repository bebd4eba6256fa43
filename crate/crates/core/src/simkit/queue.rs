use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use super::{mean_and_se, replication_rng, SimError};
use crate::netmodel::StationId;
use crate::relocq::RelocQueueParams;

#[derive(Debug, Clone, PartialEq)]
pub struct QueueSimOptions {
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueueSimReport {
    pub utilization: f64,
    pub utilization_se: f64,
    pub avg_cars: f64,
    pub avg_cars_se: f64,
    /// Share of departing cars headed for each destination.
    pub routing_fraction: BTreeMap<StationId, f64>,
    pub routing_fraction_se: BTreeMap<StationId, f64>,
}

/// Simulates the exact open relocation queue: cars arrive as a Poisson
/// stream, customers for each destination as independent Poisson streams, and
/// a customer takes two cars with probability `α_ij` when at least two are
/// parked. Customers who find no car leave.
pub fn run_single_relocation_queue(
    params: &RelocQueueParams,
    opts: &QueueSimOptions,
) -> Result<QueueSimReport, SimError> {
    params.check().map_err(|e| SimError::Config(e.to_string()))?;
    if !(opts.horizon > opts.warmup && opts.warmup >= 0.0) {
        return Err(SimError::Config(format!(
            "need 0 <= warmup < horizon, got {} and {}",
            opts.warmup, opts.horizon
        )));
    }
    if opts.replications == 0 {
        return Err(SimError::Config("at least one replication is needed".into()));
    }

    let runs: Vec<QueueRun> = (0..opts.replications)
        .into_par_iter()
        .map(|rep| simulate_queue(params, opts, rep as u64))
        .collect();

    let (utilization, utilization_se) = mean_and_se(&runs.iter().map(|r| r.utilization).collect::<Vec<_>>());
    let (avg_cars, avg_cars_se) = mean_and_se(&runs.iter().map(|r| r.avg_cars).collect::<Vec<_>>());
    let mut routing_fraction = BTreeMap::new();
    let mut routing_fraction_se = BTreeMap::new();
    for (k, &dest) in params.mu_per_dest.keys().enumerate() {
        let (m, se) = mean_and_se(&runs.iter().map(|r| r.fraction[k]).collect::<Vec<_>>());
        routing_fraction.insert(dest, m);
        routing_fraction_se.insert(dest, se);
    }
    Ok(QueueSimReport {
        utilization,
        utilization_se,
        avg_cars,
        avg_cars_se,
        routing_fraction,
        routing_fraction_se,
    })
}

struct QueueRun {
    utilization: f64,
    avg_cars: f64,
    fraction: Vec<f64>,
}

fn simulate_queue(params: &RelocQueueParams, opts: &QueueSimOptions, rep: u64) -> QueueRun {
    let mut rng = replication_rng(opts.seed, rep, 0);
    let mu: Vec<f64> = params.mu_per_dest.values().copied().collect();
    let alpha: Vec<f64> = params.mu_per_dest.keys().map(|&j| params.alpha(j)).collect();
    let mu_total: f64 = mu.iter().sum();
    let total_rate = params.lambda + mu_total;

    let mut now = 0.0;
    let mut cars: u64 = 0;
    let mut busy = 0.0;
    let mut area = 0.0;
    let mut departures = vec![0u64; mu.len()];
    loop {
        let gap: f64 = rng.sample::<f64, _>(Exp1) / total_rate;
        let next = (now + gap).min(opts.horizon);
        let from = now.max(opts.warmup);
        if next > from {
            area += cars as f64 * (next - from);
            if cars > 0 {
                busy += next - from;
            }
        }
        now += gap;
        if now >= opts.horizon {
            break;
        }
        let u = rng.random::<f64>() * total_rate;
        if u < params.lambda {
            cars += 1;
            continue;
        }
        let mut x = u - params.lambda;
        let mut j = mu.len() - 1;
        for (k, &m) in mu.iter().enumerate() {
            if x < m {
                j = k;
                break;
            }
            x -= m;
        }
        if cars == 0 {
            continue;
        }
        let take = if cars >= 2 && rng.random::<f64>() < alpha[j] {
            2
        } else {
            1
        };
        cars -= take;
        if now >= opts.warmup {
            departures[j] += take;
        }
    }

    let duration = opts.horizon - opts.warmup;
    let total: u64 = departures.iter().sum();
    QueueRun {
        utilization: busy / duration,
        avg_cars: area / duration,
        fraction: departures
            .iter()
            .map(|&d| if total == 0 { 0.0 } else { d as f64 / total as f64 })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(seed: u64) -> QueueSimOptions {
        QueueSimOptions {
            horizon: 50_000.0,
            warmup: 1_000.0,
            seed,
            replications: 8,
        }
    }

    #[test]
    fn no_relocation_is_mm1() {
        let p = RelocQueueParams::from_slices(0.5, &[0.4, 0.6], &[0.0, 0.0]).unwrap();
        let r = run_single_relocation_queue(&p, &opts(1)).unwrap();
        assert!((r.utilization - 0.5).abs() < 4.0 * r.utilization_se);
        assert!((r.avg_cars - 1.0).abs() < 4.0 * r.avg_cars_se);
        assert!((r.routing_fraction[&StationId(0)] - 0.4).abs() < 4.0 * r.routing_fraction_se[&StationId(0)]);
    }

    #[test]
    fn deterministic() {
        let p = RelocQueueParams::from_slices(0.7, &[0.2, 0.8], &[1.0, 0.0]).unwrap();
        let mut o = opts(9);
        o.horizon = 2_000.0;
        assert_eq!(
            run_single_relocation_queue(&p, &o).unwrap(),
            run_single_relocation_queue(&p, &o).unwrap()
        );
    }

    #[test]
    fn rejects_bad_window() {
        let p = RelocQueueParams::from_slices(0.7, &[1.0], &[0.0]).unwrap();
        let mut o = opts(1);
        o.warmup = o.horizon;
        assert!(run_single_relocation_queue(&p, &o).is_err());
    }
}
