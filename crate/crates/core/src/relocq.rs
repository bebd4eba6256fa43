//! The relocation queue: a station whose customers may drive away a train of
//! two cars.
//!
//! A customer headed for `j` takes a second car with probability `α_ij` when
//! at least two cars are parked. Replacing the mixture service
//! `(1-α)·Exp(μ) + α·Exp(2μ)` by an exponential with the same mean gives the
//! effective rate `γ_ij = 2μ_ij / (2 - α_ij)`, and the station becomes a
//! load-dependent birth-death chain: up-rate λ everywhere, down-rate μ_i from
//! state 1 and γ_i = Σ_j γ_ij from every state ≥ 2.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::StationId;

/// Largest possible increase of a routing probability through user-based
/// relocation, `3 - 2√2`.
pub const MAX_ROUTING_GAIN: f64 = 0.171_572_875_253_809_9;

/// Queues with ζ at or above `1 - STABILITY_MARGIN` are rejected.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Tail mass left out of the stored stationary vector.
pub const TAIL_TOLERANCE: f64 = 1e-12;

const MAX_STORED_STATES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelocError {
    #[error("unstable queue: zeta = {zeta} (must be < 1)")]
    Unstable { zeta: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("outside the domain: {0}")]
    Domain(String),
}

/// Effective exponential rate of a customer stream with relocation
/// probability `alpha`.
pub fn gamma(mu: f64, alpha: f64) -> f64 {
    2.0 * mu / (2.0 - alpha)
}

/// Service time of customers headed for one destination while at least two
/// cars are parked: `Exp(μ)` with probability `1-α`, `Exp(2μ)` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureService {
    pub mu: f64,
    pub alpha: f64,
}

impl MixtureService {
    pub fn mean(&self) -> f64 {
        (1.0 - self.alpha) / self.mu + self.alpha / (2.0 * self.mu)
    }

    /// Rate of the exponential with the same mean.
    pub fn approx_rate(&self) -> f64 {
        1.0 / self.mean()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelocQueueParams {
    /// Arrival rate of cars.
    pub lambda: f64,
    pub mu_per_dest: BTreeMap<StationId, f64>,
    #[serde(default)]
    pub alpha_per_dest: BTreeMap<StationId, f64>,
}

impl RelocQueueParams {
    pub fn new(
        lambda: f64,
        mu_per_dest: BTreeMap<StationId, f64>,
        alpha_per_dest: BTreeMap<StationId, f64>,
    ) -> Result<Self, RelocError> {
        let p = RelocQueueParams {
            lambda,
            mu_per_dest,
            alpha_per_dest,
        };
        p.check()?;
        Ok(p)
    }

    /// Builds parameters from parallel slices indexed by destination.
    pub fn from_slices(lambda: f64, mu: &[f64], alpha: &[f64]) -> Result<Self, RelocError> {
        let mu_per_dest = mu.iter().enumerate().map(|(j, &m)| (StationId(j), m)).collect();
        let alpha_per_dest = alpha.iter().enumerate().map(|(j, &a)| (StationId(j), a)).collect();
        Self::new(lambda, mu_per_dest, alpha_per_dest)
    }

    pub fn check(&self) -> Result<(), RelocError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(RelocError::InvalidParams(format!("lambda = {}", self.lambda)));
        }
        if self.mu_per_dest.is_empty() {
            return Err(RelocError::InvalidParams("no destinations".into()));
        }
        for (j, &m) in &self.mu_per_dest {
            if !(m > 0.0 && m.is_finite()) {
                return Err(RelocError::InvalidParams(format!("mu towards {} = {m}", j.0)));
            }
        }
        for (j, &a) in &self.alpha_per_dest {
            if !(0.0..=1.0).contains(&a) {
                return Err(RelocError::InvalidParams(format!("alpha towards {} = {a}", j.0)));
            }
            if !self.mu_per_dest.contains_key(j) {
                return Err(RelocError::InvalidParams(format!(
                    "alpha given for destination {} without a rate",
                    j.0
                )));
            }
        }
        Ok(())
    }

    pub fn alpha(&self, dest: StationId) -> f64 {
        self.alpha_per_dest.get(&dest).copied().unwrap_or(0.0)
    }

    pub fn mu_total(&self) -> f64 {
        self.mu_per_dest.values().sum()
    }

    pub fn gamma_of(&self, dest: StationId) -> f64 {
        gamma(self.mu_per_dest[&dest], self.alpha(dest))
    }

    pub fn gamma_total(&self) -> f64 {
        self.mu_per_dest.iter().map(|(&j, &m)| gamma(m, self.alpha(j))).sum()
    }

    /// λ / μ_i.
    pub fn rho(&self) -> f64 {
        self.lambda / self.mu_total()
    }

    /// λ / γ_i; the queue is stable iff ζ < 1.
    pub fn zeta(&self) -> f64 {
        self.lambda / self.gamma_total()
    }

    fn ensure_stable(&self) -> Result<(), RelocError> {
        self.check()?;
        let zeta = self.zeta();
        if zeta >= 1.0 - STABILITY_MARGIN {
            return Err(RelocError::Unstable { zeta });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelocQueueSolution {
    /// π_0, π_1, … up to the truncation index.
    pub pi: Vec<f64>,
    /// Probability mass beyond the last stored state.
    pub tail_bound: f64,
    pub utilization: f64,
    pub expected_cars: f64,
    pub zeta: f64,
    pub rho: f64,
}

impl RelocQueueSolution {
    /// π_n for any n, from the closed form.
    pub fn prob(&self, n: usize) -> f64 {
        let pi0 = self.pi[0];
        if n == 0 {
            pi0
        } else {
            pi0 * self.rho * self.zeta.powi(n as i32 - 1)
        }
    }
}

/// Closed-form stationary distribution of the approximate relocation queue:
/// `π_0 = (1-ζ)/(1-ζ+ρ)`, `π_n = π_0 ρ ζ^{n-1}` for n ≥ 1.
pub fn stationary(params: &RelocQueueParams) -> Result<RelocQueueSolution, RelocError> {
    params.ensure_stable()?;
    let rho = params.rho();
    let zeta = params.zeta();
    let pi0 = (1.0 - zeta) / (1.0 - zeta + rho);
    let truncation = truncation_for(params).min(MAX_STORED_STATES);

    let mut pi = Vec::with_capacity(truncation + 1);
    pi.push(pi0);
    let mut term = pi0 * rho;
    for _ in 1..=truncation {
        pi.push(term);
        term *= zeta;
    }
    // Σ_{n > M} π_0 ρ ζ^{n-1} = π_0 ρ ζ^M / (1 - ζ)
    let tail_bound = if rho == 0.0 {
        0.0
    } else {
        pi0 * rho * zeta.powf(truncation as f64) / (1.0 - zeta)
    };
    Ok(RelocQueueSolution {
        pi,
        tail_bound,
        utilization: 1.0 - pi0,
        expected_cars: pi0 * rho / (1.0 - zeta).powi(2),
        zeta,
        rho,
    })
}

/// Smallest truncation level whose geometric tail mass is below
/// [`TAIL_TOLERANCE`].
pub fn truncation_for(params: &RelocQueueParams) -> usize {
    let rho = params.rho();
    let zeta = params.zeta();
    if rho == 0.0 || zeta == 0.0 {
        return 1;
    }
    let pi0 = (1.0 - zeta) / (1.0 - zeta + rho);
    let target = TAIL_TOLERANCE * (1.0 - zeta) / (pi0 * rho);
    let m = (target.ln() / zeta.ln()).ceil();
    if m.is_finite() && m > 1.0 {
        m as usize
    } else {
        1
    }
}

/// Stationary vector of a finite birth-death chain with `up[n]` the rate
/// n → n+1 and `down[n]` the rate n+1 → n, from the level-crossing balance
/// `π_n up[n] = π_{n+1} down[n]`.
pub fn solve_birth_death(up: &[f64], down: &[f64]) -> Vec<f64> {
    assert_eq!(up.len(), down.len());
    let mut pi = Vec::with_capacity(up.len() + 1);
    pi.push(1.0);
    for (u, d) in up.iter().zip(down) {
        let last = *pi.last().expect("non-empty");
        pi.push(last * u / d);
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    pi
}

/// Numerical stationary vector of the approximate queue truncated at
/// `truncation` cars, built from the chain's transition rates.
pub fn chain_solve(params: &RelocQueueParams, truncation: usize) -> Vec<f64> {
    let mu = params.mu_total();
    let gamma = params.gamma_total();
    let up = vec![params.lambda; truncation];
    let down: Vec<f64> = (1..=truncation).map(|n| if n == 1 { mu } else { gamma }).collect();
    solve_birth_death(&up, &down)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutingProbabilities {
    /// `μ_ij/μ_i + λ (γ_ij/γ_i² - μ_ij/(γ_i μ_i))`.
    pub by_dest: BTreeMap<StationId, f64>,
    /// `(1-ξ_1) γ_ij/γ_i + ξ_1 μ_ij/μ_i`.
    pub mixture_form: BTreeMap<StationId, f64>,
    /// Routing without relocation, `μ_ij/μ_i`.
    pub baseline: BTreeMap<StationId, f64>,
    /// Probability of exactly one parked car given at least one.
    pub xi1: f64,
}

impl RoutingProbabilities {
    /// Largest |difference| between the two algebraic forms.
    pub fn form_discrepancy(&self) -> f64 {
        self.by_dest
            .iter()
            .map(|(j, p)| (p - self.mixture_form[j]).abs())
            .fold(0.0, f64::max)
    }

    pub fn increment(&self, dest: StationId) -> f64 {
        self.by_dest[&dest] - self.baseline[&dest]
    }
}

/// Probability that a car leaving the relocation queue heads for each
/// destination.
pub fn routing_prob(params: &RelocQueueParams) -> Result<RoutingProbabilities, RelocError> {
    params.ensure_stable()?;
    let lambda = params.lambda;
    let mu = params.mu_total();
    let gamma_i = params.gamma_total();
    // π_1 / (1 - π_0) = π_0 ρ (1 - ζ + ρ) / ρ = 1 - ζ, also as λ → 0.
    let xi1 = 1.0 - params.zeta();

    let mut by_dest = BTreeMap::new();
    let mut mixture_form = BTreeMap::new();
    let mut baseline = BTreeMap::new();
    for (&j, &mu_j) in &params.mu_per_dest {
        let g = params.gamma_of(j);
        let base = mu_j / mu;
        baseline.insert(j, base);
        by_dest.insert(j, base + lambda * (g / (gamma_i * gamma_i) - mu_j / (gamma_i * mu)));
        mixture_form.insert(j, (1.0 - xi1) * g / gamma_i + xi1 * base);
    }
    Ok(RoutingProbabilities {
        by_dest,
        mixture_form,
        baseline,
        xi1,
    })
}

/// Supremum, over stable arrival rates, of the routing-probability increase
/// towards `z` when every customer headed for `z` relocates and nobody else
/// does: `2x/(1+x) - x` with `x = μ_iz / μ_i`.
pub fn max_flow_gain(mu_i: f64, mu_iz: f64) -> Result<f64, RelocError> {
    if !(mu_iz > 0.0 && mu_i > 0.0 && mu_iz <= mu_i) {
        return Err(RelocError::Domain(format!(
            "need 0 < mu_iz <= mu_i, got mu_i = {mu_i}, mu_iz = {mu_iz}"
        )));
    }
    let x = mu_iz / mu_i;
    Ok(2.0 * x / (1.0 + x) - x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub draws: usize,
    /// Largest additive routing-probability increase seen.
    pub max_increment: f64,
    /// Largest relative increase of a destination's flow, `Δp / (μ_ij/μ_i)`.
    pub max_relative_gain: f64,
    pub worst_params: Option<RelocQueueParams>,
}

/// Draws `draws` random stable parameter sets and records the largest
/// routing-probability increment any destination receives.
pub fn bound_check(draws: usize, seed: u64) -> BoundReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = BoundReport {
        draws,
        max_increment: f64::NEG_INFINITY,
        max_relative_gain: f64::NEG_INFINITY,
        worst_params: None,
    };
    for _ in 0..draws {
        let params = random_stable_params(&mut rng);
        let routing = routing_prob(&params).expect("drawn params are stable");
        for (&j, &base) in &routing.baseline {
            let inc = routing.increment(j);
            if inc > report.max_increment {
                report.max_increment = inc;
                report.worst_params = Some(params.clone());
            }
            report.max_relative_gain = report.max_relative_gain.max(inc / base);
        }
    }
    report
}

/// Random parameters mixing uniform, one-hot and 0/1 relocation patterns, with
/// λ spread over the whole stable range and pushed close to its edge.
pub fn random_stable_params<R: Rng>(rng: &mut R) -> RelocQueueParams {
    let k = rng.random_range(1..=6usize);
    let mu: Vec<f64> = (0..k).map(|_| 10f64.powf(rng.random_range(-2.0..2.0))).collect();
    let alpha: Vec<f64> = match rng.random_range(0..3u8) {
        0 => (0..k).map(|_| rng.random::<f64>()).collect(),
        1 => {
            let z = rng.random_range(0..k);
            (0..k).map(|j| if j == z { 1.0 } else { 0.0 }).collect()
        }
        _ => (0..k).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect(),
    };
    let gamma_total: f64 = mu.iter().zip(&alpha).map(|(&m, &a)| gamma(m, a)).sum();
    let load = if rng.random::<bool>() {
        rng.random::<f64>()
    } else {
        1.0 - 10f64.powf(rng.random_range(-8.0..0.0))
    };
    let lambda = load * gamma_total * (1.0 - 2.0 * STABILITY_MARGIN);
    RelocQueueParams::from_slices(lambda, &mu, &alpha).expect("drawn params are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(lambda: f64, mu: &[f64], alpha: &[f64]) -> RelocQueueParams {
        RelocQueueParams::from_slices(lambda, mu, alpha).unwrap()
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma(0.5, 0.0), 0.5);
        assert_eq!(gamma(0.5, 1.0), 1.0);
        assert!((gamma(0.2, 0.5) - 0.4 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn mixture_mean_inverts_to_gamma() {
        for &(mu, alpha) in &[(0.3, 0.0), (0.3, 0.25), (2.0, 0.9), (1.0, 1.0)] {
            let s = MixtureService { mu, alpha };
            assert!((s.mean() - (2.0 - alpha) / (2.0 * mu)).abs() < 1e-15);
            assert!((s.approx_rate() - gamma(mu, alpha)).abs() < 1e-12);
        }
    }

    #[test]
    fn pi_constant_matches_root() {
        assert!((MAX_ROUTING_GAIN - (3.0 - 2.0 * 2f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn no_arrivals() {
        let sol = stationary(&params(0.0, &[1.0, 2.0], &[0.5, 0.5])).unwrap();
        assert_eq!(sol.pi[0], 1.0);
        assert_eq!(sol.expected_cars, 0.0);
        assert_eq!(sol.utilization, 0.0);
    }

    #[test]
    fn no_relocation_is_mm1() {
        let p = params(0.6, &[0.3, 0.7], &[0.0, 0.0]);
        let sol = stationary(&p).unwrap();
        assert_eq!(sol.zeta, sol.rho);
        for n in 0..20 {
            let want = 0.4 * 0.6f64.powi(n as i32);
            assert!((sol.prob(n) - want).abs() < 1e-15);
        }
        assert!((sol.expected_cars - 0.6 / 0.4).abs() < 1e-12);
    }

    #[test]
    fn always_relocating_example() {
        // γ = {0.4, 1.6}, γ_i = 2, ζ = 0.25, ρ = 0.5.
        let p = params(0.5, &[0.2, 0.8], &[1.0, 1.0]);
        let sol = stationary(&p).unwrap();
        assert!((sol.zeta - 0.25).abs() < 1e-15);
        assert!((sol.rho - 0.5).abs() < 1e-15);
        assert!((sol.pi[0] - 0.6).abs() < 1e-15);
        assert!((sol.utilization - 0.4).abs() < 1e-15);
        let chain = chain_solve(&p, 60);
        assert!((chain[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn closed_form_matches_chain() {
        let p = params(0.9, &[0.2, 0.8], &[1.0, 0.0]);
        let sol = stationary(&p).unwrap();
        let m = truncation_for(&p);
        let chain = chain_solve(&p, m);
        for (n, c) in chain.iter().enumerate() {
            assert!((c - sol.prob(n)).abs() < 1e-12, "n = {n}");
        }
        let mean: f64 = chain.iter().enumerate().map(|(n, c)| n as f64 * c).sum();
        assert!((mean - sol.expected_cars).abs() < 1e-10);
        assert!(sol.pi.iter().sum::<f64>() + sol.tail_bound >= 1.0 - 1e-12);
    }

    #[test]
    fn near_instability_still_matches() {
        // ζ = 0.99 with α = 0: M/M/1 at load 0.99.
        let p = params(0.99, &[1.0], &[0.0]);
        let sol = stationary(&p).unwrap();
        let chain = chain_solve(&p, 10_000);
        for n in [0usize, 1, 2, 100, 1000, 5000] {
            assert!((chain[n] - sol.prob(n)).abs() < 1e-10);
        }
        assert!(sol.tail_bound < 1e-12);
    }

    #[test]
    fn unstable_is_rejected() {
        let p = params(1.2, &[0.2, 0.8], &[1.0, 0.0]);
        assert!(matches!(stationary(&p), Err(RelocError::Unstable { zeta }) if (zeta - 1.0).abs() < 1e-12));
        assert!(routing_prob(&p).is_err());
    }

    #[test]
    fn slow_destination_example() {
        // γ = {0.4, 0.8}, γ_i = 1.2: p_1 = 0.2 + 0.9 (0.4/1.44 - 0.2/1.2) = 0.3.
        let r = routing_prob(&params(0.9, &[0.2, 0.8], &[1.0, 0.0])).unwrap();
        assert!((r.by_dest[&StationId(0)] - 0.3).abs() < 1e-12);
        assert!((r.by_dest[&StationId(1)] - 0.7).abs() < 1e-12);
        assert!(r.form_discrepancy() < 1e-12);
    }

    #[test]
    fn uniform_alpha_keeps_baseline() {
        for c in [0.0, 0.3, 1.0] {
            let r = routing_prob(&params(0.7, &[0.1, 0.5, 0.4], &[c, c, c])).unwrap();
            for (j, p) in &r.by_dest {
                assert!((p - r.baseline[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vanishing_traffic_keeps_baseline() {
        let r = routing_prob(&params(1e-12, &[0.2, 0.8], &[1.0, 0.0])).unwrap();
        assert!((r.by_dest[&StationId(0)] - 0.2).abs() < 1e-11);
        let r0 = routing_prob(&params(0.0, &[0.2, 0.8], &[1.0, 0.0])).unwrap();
        assert_eq!(r0.by_dest[&StationId(0)], 0.2);
        assert!(r0.form_discrepancy() < 1e-15);
    }

    #[test]
    fn flow_gain_examples() {
        let x = 2f64.sqrt() - 1.0;
        assert!((max_flow_gain(1.0, x).unwrap() - MAX_ROUTING_GAIN).abs() < 1e-15);
        assert_eq!(max_flow_gain(2.0, 2.0).unwrap(), 0.0);
        assert!(max_flow_gain(1.0, 1e-12).unwrap() < 1e-11);
        assert!(max_flow_gain(1.0, 1.5).is_err());
        assert!(max_flow_gain(1.0, 0.0).is_err());
    }

    #[test]
    fn increment_approaches_gain_near_instability() {
        let mu = [0.2, 0.8];
        let gamma_total = gamma(0.2, 1.0) + 0.8;
        let p = params(0.999 * gamma_total, &mu, &[1.0, 0.0]);
        let r = routing_prob(&p).unwrap();
        let f = max_flow_gain(1.0, 0.2).unwrap();
        assert!((r.increment(StationId(0)) - 0.999 * f).abs() < 1e-12);
    }

    #[test]
    fn small_bound_sweep() {
        let rep = bound_check(2000, 7);
        assert!(rep.max_increment <= MAX_ROUTING_GAIN + 1e-12);
        assert!(rep.max_increment > 0.1);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(RelocQueueParams::from_slices(-1.0, &[1.0], &[0.0]).is_err());
        assert!(RelocQueueParams::from_slices(1.0, &[0.0], &[0.0]).is_err());
        assert!(RelocQueueParams::from_slices(1.0, &[1.0], &[1.5]).is_err());
        assert!(RelocQueueParams::from_slices(1.0, &[], &[]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn stable() -> impl Strategy<Value = RelocQueueParams> {
            any::<u64>().prop_map(|s| random_stable_params(&mut ChaCha8Rng::seed_from_u64(s)))
        }

        proptest! {
            #[test]
            fn routing_is_a_distribution(p in stable()) {
                let r = routing_prob(&p).unwrap();
                let total: f64 = r.by_dest.values().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                for v in r.by_dest.values() {
                    prop_assert!((-1e-12..=1.0 + 1e-12).contains(v));
                }
                prop_assert!(r.form_discrepancy() < 1e-12);
            }

            #[test]
            fn routing_monotone_in_own_alpha(
                mu in prop::collection::vec(0.01f64..10.0, 2..5),
                a_lo in 0.0f64..1.0,
                bump in 0.0f64..1.0,
                load in 0.0f64..0.99,
            ) {
                let k = mu.len();
                let a_hi = a_lo + bump * (1.0 - a_lo);
                let mut lo = vec![0.3; k];
                let mut hi = vec![0.3; k];
                lo[0] = a_lo;
                hi[0] = a_hi;
                // Same λ for both, stable for the smaller γ_i.
                let g_lo: f64 = mu.iter().zip(&lo).map(|(&m, &a)| gamma(m, a)).sum();
                let lambda = load * g_lo;
                let p_lo = routing_prob(&RelocQueueParams::from_slices(lambda, &mu, &lo).unwrap()).unwrap();
                let p_hi = routing_prob(&RelocQueueParams::from_slices(lambda, &mu, &hi).unwrap()).unwrap();
                prop_assert!(p_hi.by_dest[&StationId(0)] >= p_lo.by_dest[&StationId(0)] - 1e-12);
            }
        }
    }
}
