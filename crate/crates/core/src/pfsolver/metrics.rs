use rayon::prelude::*;
use serde::Serialize;

use super::convolution::{queue_factors, Accumulator};
use super::{check_spec, convolution_up_to, solve_traffic, NormalizationTable, QueueFactor, SolveError, VisitRatios};
use crate::netmodel::NetworkSpec;

/// Performance measures of the closed network at one fleet size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkMetrics {
    pub population: usize,
    /// Car departures per hour at each station (equal to drop-offs).
    pub station_throughput: Vec<f64>,
    /// Probability that at least one car is parked, per station.
    pub utilization: Vec<f64>,
    /// Mean number of parked cars, per station.
    pub avg_cars: Vec<f64>,
    pub link_throughput: Vec<f64>,
    /// Mean number of cars travelling on each link.
    pub avg_in_transit: Vec<f64>,
}

impl NetworkMetrics {
    pub fn total_population(&self) -> f64 {
        self.avg_cars.iter().sum::<f64>() + self.avg_in_transit.iter().sum::<f64>()
    }

    /// Largest relative difference between a station's inflow (sum of its
    /// incoming link throughputs) and its outflow.
    pub fn flow_imbalance(&self, spec: &NetworkSpec) -> f64 {
        let mut inflow = vec![0.0; spec.num_stations()];
        for (l, &rate) in spec.links.iter().zip(&self.link_throughput) {
            inflow[l.dest.0] += rate;
        }
        inflow
            .iter()
            .zip(&self.station_throughput)
            .map(|(&i, &o)| if o > 0.0 { ((i - o) / o).abs() } else { i.abs() })
            .fold(0.0, f64::max)
    }
}

/// Normalization constants of the network with one station removed, for
/// every station, in the same tilted units as the full table.
#[derive(Debug, Clone)]
pub struct Complements {
    log_tilt: f64,
    per_station: Vec<Vec<f64>>,
}

impl Complements {
    /// Rebuilds G_i by convolving every queue except station `i`. Delay links
    /// are merged into one factor, applied first and shared by all stations.
    pub fn compute(spec: &NetworkSpec, e: &VisitRatios, g: &NormalizationTable) -> Complements {
        let max_pop = g.max_population();
        let log_tilt = g.log_tilt();
        let factors = queue_factors(spec, e);
        let (stations, links) = factors.split_at(spec.num_stations());

        let mut base = Accumulator::new(max_pop, log_tilt);
        if !links.is_empty() {
            let load = links.iter().map(QueueFactor::load).sum();
            base.apply_fixed(QueueFactor::Delay { load });
        }
        let base = base.mantissa().to_vec();

        let per_station = (0..stations.len())
            .into_par_iter()
            .map(|i| {
                let mut acc = Accumulator::from_parts(base.clone(), log_tilt);
                for (j, &f) in stations.iter().enumerate() {
                    if j != i {
                        acc.apply_fixed(f);
                    }
                }
                acc.mantissa().to_vec()
            })
            .collect();
        Complements { log_tilt, per_station }
    }

    pub fn station(&self, i: usize) -> &[f64] {
        &self.per_station[i]
    }

    pub fn log_tilt(&self) -> f64 {
        self.log_tilt
    }
}

/// Metrics at the network's own fleet size.
pub fn metrics(spec: &NetworkSpec, e: &VisitRatios, g: &NormalizationTable) -> Result<NetworkMetrics, SolveError> {
    let complements = Complements::compute(spec, e, g);
    metrics_for_population(spec, e, g, &complements, spec.fleet_size)
}

/// Metrics for `population` cars, reusing a table (and complements) computed
/// for any population at least that large.
pub fn metrics_for_population(
    spec: &NetworkSpec,
    e: &VisitRatios,
    g: &NormalizationTable,
    complements: &Complements,
    population: usize,
) -> Result<NetworkMetrics, SolveError> {
    if population > g.max_population() {
        return Err(SolveError::PopulationOutOfRange {
            requested: population,
            available: g.max_population(),
        });
    }
    let n_stations = spec.num_stations();
    if population == 0 {
        return Ok(NetworkMetrics {
            population,
            station_throughput: vec![0.0; n_stations],
            utilization: vec![0.0; n_stations],
            avg_cars: vec![0.0; n_stations],
            link_throughput: vec![0.0; spec.links.len()],
            avg_in_transit: vec![0.0; spec.links.len()],
        });
    }

    let ratio = g.ratio(population);
    let m = g.mantissa();
    let untilt = (-g.log_tilt()).exp();

    let mut station_throughput = Vec::with_capacity(n_stations);
    let mut utilization = Vec::with_capacity(n_stations);
    let mut avg_cars = Vec::with_capacity(n_stations);
    for (i, st) in spec.stations.iter().enumerate() {
        let load = e.station[i] / st.total_rate();
        station_throughput.push(e.station[i] * ratio);
        utilization.push((load * ratio).min(1.0));

        // Σ_n n · P(n_i = n) with P(n_i = n) = x^n G_i(N - n) / G(N).
        let x = load * untilt;
        let gi = complements.station(i);
        let mut pow = 1.0;
        let mut mean = 0.0;
        for n in 1..=population {
            pow *= x;
            if pow == 0.0 {
                break;
            }
            mean += n as f64 * pow * gi[population - n];
        }
        avg_cars.push(mean / m[population]);
    }

    let link_throughput: Vec<f64> = e.link.iter().map(|&el| el * ratio).collect();
    let avg_in_transit = spec
        .links
        .iter()
        .zip(&link_throughput)
        .map(|(l, &rate)| rate * l.mean_travel_time)
        .collect();

    Ok(NetworkMetrics {
        population,
        station_throughput,
        utilization,
        avg_cars,
        link_throughput,
        avg_in_transit,
    })
}

/// Solves the network once and evaluates the metrics for each fleet size.
pub fn fleet_sweep(spec: &NetworkSpec, fleet_sizes: &[usize]) -> Result<Vec<NetworkMetrics>, SolveError> {
    check_spec(spec)?;
    let e = solve_traffic(spec)?;
    let max_pop = fleet_sizes.iter().copied().max().unwrap_or(0);
    let g = convolution_up_to(spec, &e, max_pop)?;
    let complements = Complements::compute(spec, &e, &g);
    fleet_sizes
        .iter()
        .map(|&n| metrics_for_population(spec, &e, &g, &complements, n))
        .collect()
}
