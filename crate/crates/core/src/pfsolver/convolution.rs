//! Convolution algorithm for the normalization constant.
//!
//! G(n) grows or shrinks geometrically in n, so values are carried as
//! mantissas `m_n` with a shared per-car log tilt `s`: `G(n) = m_n · e^{n s}`.
//! Tilting every queue factor by `e^{-s}` per car commutes with convolution,
//! which lets the tilt be adjusted whenever the mantissas drift out of
//! `[1e-100, 1e100]` (only the upper bound is enforced mid-run, see
//! [`Accumulator`]).

use serde::Serialize;

use super::{SolveError, VisitRatios};
use crate::netmodel::NetworkSpec;

const SOFT_MAX: f64 = 1e100;
const HARD_MAX: f64 = 1e300;
const HARD_MIN: f64 = 1e-300;

/// Per-queue product-form factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QueueFactor {
    /// `g(n) = load^n` with `load = e_i / μ_i`.
    SingleServer { load: f64 },
    /// `g(n) = load^n / n!` with `load = e_l · T_l`.
    Delay { load: f64 },
}

impl QueueFactor {
    pub fn load(&self) -> f64 {
        match *self {
            QueueFactor::SingleServer { load } | QueueFactor::Delay { load } => load,
        }
    }
}

/// G(0), …, G(N) in tilted form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizationTable {
    mantissa: Vec<f64>,
    log_tilt: f64,
}

impl NormalizationTable {
    pub fn max_population(&self) -> usize {
        self.mantissa.len() - 1
    }

    pub fn mantissa(&self) -> &[f64] {
        &self.mantissa
    }

    pub fn log_tilt(&self) -> f64 {
        self.log_tilt
    }

    pub fn ln_g(&self, n: usize) -> f64 {
        self.mantissa[n].ln() + n as f64 * self.log_tilt
    }

    /// G(n) itself; may be ±inf for large populations.
    pub fn g(&self, n: usize) -> f64 {
        self.ln_g(n).exp()
    }

    /// The throughput scaling factor G(n-1)/G(n), for n ≥ 1.
    pub fn ratio(&self, n: usize) -> f64 {
        self.mantissa[n - 1] / self.mantissa[n] * (-self.log_tilt).exp()
    }
}

/// Factors for every station (in station order) followed by every link.
pub fn queue_factors(spec: &NetworkSpec, e: &VisitRatios) -> Vec<QueueFactor> {
    let stations = spec
        .stations
        .iter()
        .zip(&e.station)
        .map(|(st, &ei)| QueueFactor::SingleServer {
            load: ei / st.total_rate(),
        });
    let links = spec.links.iter().zip(&e.link).map(|(l, &el)| QueueFactor::Delay {
        load: el * l.mean_travel_time,
    });
    stations.chain(links).collect()
}

/// Convolves `factors` in the given order up to population `max_pop`.
pub fn convolve(
    factors: &[QueueFactor],
    order: impl IntoIterator<Item = usize>,
    max_pop: usize,
) -> Result<NormalizationTable, SolveError> {
    let mut acc = Accumulator::new(max_pop, initial_tilt(factors));
    for q in order {
        acc.apply(factors[q])?;
    }
    acc.finish()
}

/// Normalization table for the network's fleet size.
pub fn convolution(spec: &NetworkSpec, e: &VisitRatios) -> Result<NormalizationTable, SolveError> {
    convolution_up_to(spec, e, spec.fleet_size)
}

/// Normalization table for every population up to `max_pop`.
///
/// All delay links are folded into one infinite-server factor whose load is
/// the sum of the link loads, which is exact for product-form IS queues and
/// turns `L` quadratic convolutions into one.
pub fn convolution_up_to(
    spec: &NetworkSpec,
    e: &VisitRatios,
    max_pop: usize,
) -> Result<NormalizationTable, SolveError> {
    let factors = queue_factors(spec, e);
    let (stations, links) = factors.split_at(spec.num_stations());
    let mut acc = Accumulator::new(max_pop, initial_tilt(stations));
    for &f in stations {
        acc.apply(f)?;
    }
    if !links.is_empty() {
        let load = links.iter().map(QueueFactor::load).sum();
        acc.apply(QueueFactor::Delay { load })?;
    }
    acc.finish()
}

/// Tilting by the largest single-server load makes that queue's factor
/// identically 1, so every full product satisfies G(n) ≥ 1 in tilted units.
pub(super) fn initial_tilt(factors: &[QueueFactor]) -> f64 {
    factors
        .iter()
        .filter_map(|f| match f {
            QueueFactor::SingleServer { load } if *load > 0.0 => Some(load.ln()),
            _ => None,
        })
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        .unwrap_or(0.0)
}

/// Running product of queue factors.
///
/// Partial products that contain only delay queues decay faster than any
/// geometric sequence, so intermediate mantissas may underflow to zero; those
/// entries are negligible next to the bottleneck term once it is applied.
/// Only the upper side of the range is renormalized.
pub(super) struct Accumulator {
    m: Vec<f64>,
    log_tilt: f64,
}

impl Accumulator {
    pub(super) fn new(max_pop: usize, log_tilt: f64) -> Self {
        let mut m = vec![0.0; max_pop + 1];
        m[0] = 1.0;
        Accumulator { m, log_tilt }
    }

    /// Starts from an existing table at a fixed tilt.
    pub(super) fn from_parts(m: Vec<f64>, log_tilt: f64) -> Self {
        Accumulator { m, log_tilt }
    }

    pub(super) fn mantissa(&self) -> &[f64] {
        &self.m
    }

    fn max_pop(&self) -> usize {
        self.m.len() - 1
    }

    fn tilted(&self, load: f64) -> f64 {
        load * (-self.log_tilt).exp()
    }

    fn retilt(&mut self, delta: f64) {
        for (n, v) in self.m.iter_mut().enumerate() {
            if *v > 0.0 {
                *v = (v.ln() - n as f64 * delta).exp();
            }
        }
        self.log_tilt += delta;
    }

    pub(super) fn apply(&mut self, factor: QueueFactor) -> Result<(), SolveError> {
        let load = factor.load();
        if self.max_pop() == 0 || load == 0.0 {
            return Ok(());
        }
        // Keep the incoming factor sequence itself representable.
        let threshold = match factor {
            QueueFactor::SingleServer { .. } => 1.0,
            QueueFactor::Delay { .. } => 100.0,
        };
        let t = self.tilted(load);
        if t > threshold {
            self.retilt((t / threshold).ln());
        }
        self.apply_fixed(factor);
        self.renormalize()
    }

    /// Convolution step at the current tilt, without range management.
    pub(super) fn apply_fixed(&mut self, factor: QueueFactor) {
        let n_max = self.max_pop();
        match factor {
            QueueFactor::SingleServer { load } => {
                // Convolving with a geometric sequence is a first-order recurrence.
                let x = self.tilted(load);
                for n in 1..=n_max {
                    self.m[n] += x * self.m[n - 1];
                }
            }
            QueueFactor::Delay { load } => {
                let x = self.tilted(load);
                let mut g = vec![0.0; n_max + 1];
                g[0] = 1.0;
                for k in 1..=n_max {
                    g[k] = g[k - 1] * x / k as f64;
                }
                let old = std::mem::take(&mut self.m);
                self.m = (0..=n_max).map(|n| (0..=n).map(|k| old[n - k] * g[k]).sum()).collect();
            }
        }
    }

    fn renormalize(&mut self) -> Result<(), SolveError> {
        let max = self.m.iter().copied().fold(0.0, f64::max);
        if max > SOFT_MAX {
            let n = self.max_pop();
            let (idx, val) = if self.m[n] > 0.0 {
                (n, self.m[n])
            } else {
                let idx = self.m.iter().rposition(|&v| v == max).unwrap_or(n);
                (idx, max)
            };
            if idx > 0 {
                self.retilt(val.ln() / idx as f64);
            }
        }
        if let Some(bad) = self.m.iter().position(|&v| !(v.is_finite() && v <= HARD_MAX)) {
            return Err(SolveError::NumericalRange { population: bad });
        }
        Ok(())
    }

    pub(super) fn finish(self) -> Result<NormalizationTable, SolveError> {
        if let Some(bad) = self.m.iter().position(|&v| !(HARD_MIN..=HARD_MAX).contains(&v)) {
            return Err(SolveError::NumericalRange { population: bad });
        }
        Ok(NormalizationTable {
            mantissa: self.m,
            log_tilt: self.log_tilt,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::network_from_rates;
    use crate::pfsolver::solve_traffic;

    fn close_rel(a: f64, b: f64, tol: f64) -> bool {
        ((a - b) / b).abs() <= tol
    }

    #[test]
    fn station_plus_link_hand_convolution() {
        // {1, 1, 1} convolved with {1, 1, 1/2}.
        let factors = [
            QueueFactor::SingleServer { load: 1.0 },
            QueueFactor::Delay { load: 1.0 },
        ];
        let g = convolve(&factors, [0, 1], 2).unwrap();
        assert!(close_rel(g.g(0), 1.0, 1e-15));
        assert!(close_rel(g.g(1), 2.0, 1e-15));
        assert!(close_rel(g.g(2), 2.5, 1e-15));
    }

    #[test]
    fn empty_population() {
        let factors = [QueueFactor::SingleServer { load: 3.0 }];
        let g = convolve(&factors, [0], 0).unwrap();
        assert_eq!(g.max_population(), 0);
        assert_eq!(g.g(0), 1.0);
    }

    #[test]
    fn unit_geometric_counts_compositions() {
        // Three queues with factor 1^n: G(n) = C(n + 2, 2).
        let factors = [QueueFactor::SingleServer { load: 1.0 }; 3];
        let g = convolve(&factors, [0, 1, 2], 10).unwrap();
        for n in 0..=10usize {
            let want = ((n + 1) * (n + 2) / 2) as f64;
            assert!(close_rel(g.g(n), want, 1e-13), "n={n}");
        }
    }

    #[test]
    fn merged_delay_matches_per_link() {
        let spec = network_from_rates(
            &[1.0, 2.0, 0.5],
            &[
                (0, 1, 0.3, 0.4),
                (0, 2, 0.7, 1.2),
                (1, 0, 1.0, 0.5),
                (2, 0, 0.5, 0.3),
                (2, 1, 0.5, 2.0),
            ],
            25,
        )
        .unwrap();
        let e = solve_traffic(&spec).unwrap();
        let merged = convolution(&spec, &e).unwrap();
        let factors = queue_factors(&spec, &e);
        let per_queue = convolve(&factors, 0..factors.len(), 25).unwrap();
        for n in 0..=25 {
            assert!((merged.ln_g(n) - per_queue.ln_g(n)).abs() < 1e-12);
        }
    }

    #[test]
    fn large_population_stays_in_range() {
        let loads = [0.9, 1.3, 0.02, 7.0, 0.5];
        let mut factors: Vec<QueueFactor> = loads.iter().map(|&l| QueueFactor::SingleServer { load: l }).collect();
        factors.push(QueueFactor::Delay { load: 40.0 });
        let g = convolve(&factors, 0..factors.len(), 20_000).unwrap();
        // The bottleneck load 7 dominates: G(n-1)/G(n) -> 1/7.
        assert!((g.ratio(20_000) - 1.0 / 7.0).abs() < 1e-6);
        for w in g.mantissa().windows(2) {
            assert!(w[0] > 0.0 && w[1] > 0.0);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn factor() -> impl Strategy<Value = QueueFactor> {
            prop_oneof![
                (1e-3f64..50.0).prop_map(|load| QueueFactor::SingleServer { load }),
                (1e-3f64..50.0).prop_map(|load| QueueFactor::Delay { load }),
            ]
        }

        // Every network has at least one station.
        fn network_factors() -> impl Strategy<Value = Vec<QueueFactor>> {
            ((1e-3f64..50.0), prop::collection::vec(factor(), 0..7)).prop_map(|(load, mut rest)| {
                rest.push(QueueFactor::SingleServer { load });
                rest
            })
        }

        proptest! {
            #[test]
            fn order_does_not_matter(
                factors in network_factors(),
                n in 1usize..300,
                perm_seed in any::<u64>(),
            ) {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let mut order: Vec<usize> = (0..factors.len()).collect();
                let a = convolve(&factors, order.clone(), n).unwrap();
                order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
                let b = convolve(&factors, order, n).unwrap();
                for k in 0..=n {
                    let rel = (a.ln_g(k) - b.ln_g(k)).exp_m1().abs();
                    prop_assert!(rel < 1e-12, "k={} rel={}", k, rel);
                }
            }
        }
    }
}
