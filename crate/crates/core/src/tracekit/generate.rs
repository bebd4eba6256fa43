use rand::Rng;

use super::{EventType, LocalProjection, TraceEvent};
use crate::netmodel::{derive_mu_split, validate, NetworkSpec};
use crate::simkit::{replication_rng, simulate, EngineOptions, RelocationPolicy, SimError, SimEventKind};

/// Layout and clock of a synthetic trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceGenOptions {
    /// Simulated hours.
    pub horizon: f64,
    pub seed: u64,
    /// Stations sit one per square of this side, near its center.
    pub cell_side_m: f64,
    pub ref_lat: f64,
    pub ref_lon: f64,
    /// Wall-clock time of simulation time 0, in seconds since the epoch.
    pub start: f64,
}

impl TraceGenOptions {
    pub fn new(horizon: f64, seed: u64) -> TraceGenOptions {
        TraceGenOptions {
            horizon,
            seed,
            cell_side_m: 250.0,
            ref_lat: 52.37,
            ref_lon: 4.89,
            start: 1_704_067_200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTrace {
    /// In time order.
    pub events: Vec<TraceEvent>,
    /// (lat, lon) of each station.
    pub station_coords: Vec<(f64, f64)>,
    /// Trips the simulator completed within the horizon.
    pub simulated_trips: u64,
}

/// Places station `k` of `n` in its own square of a grid with
/// `ceil(sqrt(n))` columns, jittered by up to a quarter side.
pub fn station_layout(n: usize, opts: &TraceGenOptions) -> Vec<(f64, f64)> {
    let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
    let side = opts.cell_side_m;
    let mut rng = replication_rng(opts.seed, u64::MAX, 0);
    let proj = LocalProjection {
        ref_lat: opts.ref_lat,
        ref_lon: opts.ref_lon,
    };
    (0..n)
        .map(|k| {
            let (row, col) = (k / cols, k % cols);
            let jx = rng.random_range(-0.25..0.25) * side;
            let jy = rng.random_range(-0.25..0.25) * side;
            proj.to_latlon((col as f64 + 0.5) * side + jx, (row as f64 + 0.5) * side + jy)
        })
        .collect()
}

/// Simulates the network without relocation and writes every pickup and
/// dropoff as a trace event. The same spec and options give the same trace.
pub fn generate_trace(spec: &NetworkSpec, opts: &TraceGenOptions) -> Result<GeneratedTrace, SimError> {
    let violations = validate(spec);
    if !violations.is_empty() {
        return Err(SimError::Invalid(violations));
    }
    if !(opts.horizon.is_finite() && opts.horizon >= 0.0) {
        return Err(SimError::Config(format!("horizon {} must be >= 0", opts.horizon)));
    }
    if !(opts.cell_side_m.is_finite() && opts.cell_side_m > 0.0) {
        return Err(SimError::Config(format!("cell side {} must be > 0", opts.cell_side_m)));
    }
    let spec = derive_mu_split(spec).map_err(|e| SimError::Config(e.to_string()))?;
    let coords = station_layout(spec.num_stations(), opts);
    let engine = EngineOptions {
        horizon: opts.horizon,
        warmup: 0.0,
        policy: RelocationPolicy::None,
        independent_train_travel: false,
    };
    let mut raw = Vec::new();
    let tally = simulate(&spec, &engine, opts.seed, 0, Some(&mut raw));
    let width = spec.fleet_size.saturating_sub(1).to_string().len();
    let events = raw
        .iter()
        .map(|e| {
            let (lat, lon) = coords[e.station];
            TraceEvent {
                event_type: match e.kind {
                    SimEventKind::Pickup => EventType::Pickup,
                    SimEventKind::Dropoff => EventType::Dropoff,
                },
                timestamp: opts.start + e.time * 3600.0,
                vehicle_id: format!("car{:0width$}", e.vehicle),
                lat,
                lon,
            }
        })
        .collect();
    Ok(GeneratedTrace {
        events,
        station_coords: coords,
        simulated_trips: tally.completed_trips,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::network_from_rates;
    use crate::tracekit::{extract_trips, occupancy_at, parse_events, write_events, CellGrid};

    fn two_station() -> NetworkSpec {
        network_from_rates(&[1.0, 0.6], &[(0, 1, 1.0, 0.3), (1, 0, 1.0, 0.4)], 4).unwrap()
    }

    #[test]
    fn trip_count_matches_simulator() {
        let g = generate_trace(&two_station(), &TraceGenOptions::new(1000.0, 3)).unwrap();
        let mut buf = Vec::new();
        write_events(&g.events, &mut buf).unwrap();
        let parsed = parse_events(buf.as_slice()).unwrap();
        let grid = CellGrid::fit(&parsed.events, 250.0).unwrap();
        let x = extract_trips(&parsed.events, &grid);
        assert_eq!(x.trips.len() as u64, g.simulated_trips);
        assert_eq!(grid.active.len(), 2);
    }

    #[test]
    fn same_seed_same_bytes() {
        let render = |seed| {
            let g = generate_trace(&two_station(), &TraceGenOptions::new(200.0, seed)).unwrap();
            let mut buf = Vec::new();
            write_events(&g.events, &mut buf).unwrap();
            buf
        };
        assert_eq!(render(5), render(5));
        assert_ne!(render(5), render(6));
    }

    #[test]
    fn zero_horizon_is_empty() {
        let g = generate_trace(&two_station(), &TraceGenOptions::new(0.0, 1)).unwrap();
        assert!(g.events.is_empty());
        let mut buf = Vec::new();
        write_events(&g.events, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "event_type,timestamp,vehicle_id,lat,lon\n"
        );
    }

    #[test]
    fn cars_are_conserved_in_the_log() {
        let spec = network_from_rates(
            &[0.8, 1.5, 0.4],
            &[(0, 1, 0.5, 0.3), (0, 2, 0.5, 0.6), (1, 0, 1.0, 0.2), (2, 1, 1.0, 0.4)],
            6,
        )
        .unwrap();
        let g = generate_trace(&spec, &TraceGenOptions::new(300.0, 9)).unwrap();
        let mut events = g.events.clone();
        events.sort_by(|a, b| {
            a.vehicle_id
                .cmp(&b.vehicle_id)
                .then(a.timestamp.total_cmp(&b.timestamp))
        });
        let grid = CellGrid::fit(&events, 250.0).unwrap();
        let x = extract_trips(&events, &grid);
        let (t0, t1) = x.window;
        let mut rng = replication_rng(1, 1, 1);
        for _ in 0..200 {
            let t = rng.random_range(t0..t1);
            let trailing = x
                .anomalies
                .iter()
                .filter(|a| matches!(a, crate::tracekit::Anomaly::TrailingPickup { timestamp, .. } if *timestamp <= t))
                .count();
            assert_eq!(occupancy_at(&x, t) + trailing, 6);
        }
    }
}
