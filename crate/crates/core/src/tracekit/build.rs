use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{CellId, CellStats, CellStatus, TraceError, Trip};
use crate::netmodel::{
    derive_mu_split, strongly_connected_components, DelayLink, LinkId, NetworkSpec, StationId, StationSpec,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedNetwork {
    pub spec: NetworkSpec,
    /// Cell behind each station, in station order.
    pub station_cells: Vec<CellId>,
    /// Active cells left out because they are not in the kept component.
    pub excluded: Vec<CellId>,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
struct PairTally {
    trips: u64,
    hours: f64,
}

/// Builds a network from trips between active cells, restricted to the
/// largest strongly connected part of the trip graph. Routing probabilities
/// are trip-count fractions within that part and travel times are mean trip
/// durations.
pub fn build_network(
    trips: &[Trip],
    stats: &BTreeMap<CellId, CellStats>,
    fleet_size: usize,
) -> Result<EstimatedNetwork, TraceError> {
    let active: BTreeSet<CellId> = stats
        .values()
        .filter(|s| s.status == CellStatus::Active)
        .map(|s| s.cell)
        .collect();
    if active.is_empty() {
        return Err(TraceError::EmptyNetwork("no cell has a usable rate estimate".into()));
    }

    let mut pairs: BTreeMap<(CellId, CellId), PairTally> = BTreeMap::new();
    for t in trips {
        if active.contains(&t.origin_cell) && active.contains(&t.dest_cell) {
            let p = pairs.entry((t.origin_cell, t.dest_cell)).or_default();
            p.trips += 1;
            p.hours += t.duration;
        }
    }

    let cells: Vec<CellId> = active.iter().copied().collect();
    let index: BTreeMap<CellId, usize> = cells.iter().enumerate().map(|(k, &c)| (c, k)).collect();
    let nodes: Vec<usize> = (0..cells.len()).collect();
    let edges: Vec<(usize, usize)> = pairs.keys().map(|(o, d)| (index[o], index[d])).collect();
    let has_self_loop = |k: usize| edges.iter().any(|&(o, d)| o == k && d == k);
    let keep = strongly_connected_components(&nodes, &edges)
        .into_iter()
        .filter(|c| c.len() > 1 || has_self_loop(c[0]))
        .max_by(|a, b| a.len().cmp(&b.len()).then(b.cmp(a)))
        .ok_or_else(|| TraceError::EmptyNetwork("no cell is on a cycle of trips".into()))?;

    let station_cells: Vec<CellId> = keep.iter().map(|&k| cells[k]).collect();
    let station_of: BTreeMap<CellId, usize> = station_cells.iter().enumerate().map(|(s, &c)| (c, s)).collect();

    let mut out_trips = vec![0u64; station_cells.len()];
    for ((o, d), p) in &pairs {
        if let (Some(&so), true) = (station_of.get(o), station_of.contains_key(d)) {
            out_trips[so] += p.trips;
        }
    }

    let mut links = Vec::new();
    for ((o, d), p) in &pairs {
        let (Some(&so), Some(&sd)) = (station_of.get(o), station_of.get(d)) else {
            continue;
        };
        links.push(DelayLink {
            id: LinkId(links.len()),
            origin: StationId(so),
            dest: StationId(sd),
            mean_travel_time: p.hours / p.trips as f64,
            routing_prob: p.trips as f64 / out_trips[so] as f64,
        });
    }
    let stations = station_cells
        .iter()
        .enumerate()
        .map(|(s, c)| StationSpec::with_aggregate(StationId(s), stats[c].mu.expect("active cells have a rate")))
        .collect();
    let spec = derive_mu_split(&NetworkSpec {
        stations,
        links,
        fleet_size,
    })
    .map_err(|e| TraceError::EmptyNetwork(e.to_string()))?;

    let excluded = cells.iter().filter(|c| !station_of.contains_key(c)).copied().collect();
    Ok(EstimatedNetwork {
        spec,
        station_cells,
        excluded,
    })
}
