use super::{solve_traffic, SolveError};
use crate::netmodel::NetworkSpec;

/// Upper limit on enumerated population vectors.
pub const MAX_STATES: f64 = 1e7;

/// The full stationary distribution over population vectors, obtained by
/// normalizing the product-form weights directly.
///
/// Queue index `q` runs over stations first, then links, as in
/// [`NetworkSpec::queues`].
#[derive(Debug, Clone)]
pub struct BruteForceDistribution {
    pub states: Vec<Vec<u32>>,
    pub probs: Vec<f64>,
}

impl BruteForceDistribution {
    pub fn prob_nonempty(&self, q: usize) -> f64 {
        self.states
            .iter()
            .zip(&self.probs)
            .filter(|(s, _)| s[q] > 0)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn mean_population(&self, q: usize) -> f64 {
        self.states.iter().zip(&self.probs).map(|(s, p)| s[q] as f64 * p).sum()
    }

    /// Departure rate of queue `q`: μ_i · P(n_i ≥ 1) for stations,
    /// E[n_l] / T_l for links.
    pub fn throughput(&self, spec: &NetworkSpec, q: usize) -> f64 {
        let s = spec.num_stations();
        if q < s {
            spec.stations[q].total_rate() * self.prob_nonempty(q)
        } else {
            self.mean_population(q) / spec.links[q - s].mean_travel_time
        }
    }
}

fn count_states(n: usize, k: usize) -> f64 {
    // C(n + k - 1, k - 1)
    (1..k).fold(1.0, |acc, j| acc * (n + j) as f64 / j as f64)
}

pub fn brute_force_distribution(spec: &NetworkSpec) -> Result<BruteForceDistribution, SolveError> {
    let e = solve_traffic(spec)?;
    let n = spec.fleet_size;
    let k = spec.num_queues();
    let states = count_states(n, k);
    if states > MAX_STATES {
        return Err(SolveError::Capacity { states });
    }

    let s = spec.num_stations();
    let log_load: Vec<f64> = (0..k)
        .map(|q| {
            if q < s {
                (e.station[q] / spec.stations[q].total_rate()).ln()
            } else {
                (e.link[q - s] * spec.links[q - s].mean_travel_time).ln()
            }
        })
        .collect();
    let ln_fact: Vec<f64> = (0..=n)
        .scan(0.0, |acc, j| {
            if j > 0 {
                *acc += (j as f64).ln();
            }
            Some(*acc)
        })
        .collect();

    let mut all = Vec::with_capacity(states as usize);
    let mut current = vec![0u32; k];
    compositions(n, 0, &mut current, &mut all);

    let log_w: Vec<f64> = all
        .iter()
        .map(|st| {
            st.iter()
                .enumerate()
                .map(|(q, &c)| {
                    let mut w = c as f64 * log_load[q];
                    if q >= s {
                        w -= ln_fact[c as usize];
                    }
                    if c == 0 {
                        0.0
                    } else {
                        w
                    }
                })
                .sum()
        })
        .collect();
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|lw| (lw - top).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(BruteForceDistribution {
        states: all,
        probs: w.into_iter().map(|v| v / total).collect(),
    })
}

fn compositions(remaining: usize, q: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if q + 1 == current.len() {
        current[q] = remaining as u32;
        out.push(current.clone());
        return;
    }
    for c in 0..=remaining {
        current[q] = c as u32;
        compositions(remaining - c, q + 1, current, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::network_from_rates;

    #[test]
    fn one_car_two_equal_queues() {
        // Station and link with equal weights: e/μ = 0.5/0.5, e·T = 0.5·2.
        let spec = network_from_rates(&[0.5, 0.5], &[(0, 1, 1.0, 2.0), (1, 0, 1.0, 2.0)], 1).unwrap();
        let bf = brute_force_distribution(&spec).unwrap();
        assert_eq!(bf.states.len(), 4);
        for p in &bf.probs {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn counts_match_binomial() {
        let spec = network_from_rates(&[1.0, 1.0], &[(0, 1, 1.0, 1.0), (1, 0, 1.0, 1.0)], 6).unwrap();
        let bf = brute_force_distribution(&spec).unwrap();
        assert_eq!(bf.states.len(), 84);
        assert!((bf.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(bf.states.iter().all(|s| s.iter().sum::<u32>() == 6));
    }

    #[test]
    fn too_many_states() {
        let spec = network_from_rates(&[1.0, 1.0], &[(0, 1, 1.0, 1.0), (1, 0, 1.0, 1.0)], 1000).unwrap();
        assert!(matches!(
            brute_force_distribution(&spec),
            Err(SolveError::Capacity { .. })
        ));
    }
}
