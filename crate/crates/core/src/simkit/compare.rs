use serde::Serialize;

use super::{mean_and_se, run_network, RelocationPolicy, SimConfig, SimError, SimReport};

/// Paired difference in mean station availability against the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateGain {
    pub mean: f64,
    pub se: f64,
}

impl AggregateGain {
    /// Whether the gain is more than `z` standard errors away from zero.
    pub fn significant(&self, z: f64) -> bool {
        self.mean.abs() > z * self.se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyComparison {
    /// Run without relocation under the same seeds.
    pub baseline: SimReport,
    pub reports: Vec<SimReport>,
    /// Availability change per station in percent of the baseline, one row
    /// per entry of `reports`. NaN where the baseline availability is 0.
    pub variation_percent: Vec<Vec<f64>>,
    pub aggregate_gain: Vec<AggregateGain>,
}

/// Simulates every policy with the same seeds as `base`, so that customer
/// arrivals coincide across policies, and relates each one to the run
/// without relocation.
pub fn compare_policies(base: &SimConfig, policies: &[RelocationPolicy]) -> Result<PolicyComparison, SimError> {
    let baseline = run_network(&base.with_policy(RelocationPolicy::None))?;
    let reports = policies
        .iter()
        .map(|p| {
            if *p == RelocationPolicy::None {
                Ok(baseline.clone())
            } else {
                run_network(&base.with_policy(p.clone()))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;

    let variation_percent = reports
        .iter()
        .map(|r| {
            r.availability
                .iter()
                .zip(&baseline.availability)
                .map(|(&a, &b)| if b > 0.0 { 100.0 * (a - b) / b } else { f64::NAN })
                .collect()
        })
        .collect();

    let base_means = baseline.replication_mean_availability();
    let aggregate_gain = reports
        .iter()
        .map(|r| {
            let diffs: Vec<f64> = r
                .replication_mean_availability()
                .iter()
                .zip(&base_means)
                .map(|(a, b)| a - b)
                .collect();
            let (mean, se) = mean_and_se(&diffs);
            AggregateGain { mean, se }
        })
        .collect();

    Ok(PolicyComparison {
        baseline,
        reports,
        variation_percent,
        aggregate_gain,
    })
}
