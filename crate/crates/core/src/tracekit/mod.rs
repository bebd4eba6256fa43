//! From pickup/dropoff logs to a network model, and back.

mod build;
mod clarke;
mod events;
mod generate;
mod grid;
mod trips;

use std::collections::BTreeMap;

use thiserror::Error;

pub use build::{build_network, EstimatedNetwork};
pub use clarke::{
    cell_stats, cell_stats_csv, clarke_estimate, mu_ccdf, mu_ccdf_csv, union_length_hours, CellStats, CellStatus,
};
pub use events::{
    format_timestamp, parse_events, parse_timestamp, write_events, EventType, ParsedEvents, Reject, TraceEvent, HEADER,
};
pub use generate::{generate_trace, station_layout, GeneratedTrace, TraceGenOptions};
pub use grid::{CellGrid, CellId, LocalProjection, SIDE_PRESETS};
pub use trips::{anomalies_jsonl, extract_trips, occupancy_at, Anomaly, ParkingInterval, Trip, TripExtraction};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed trace: {0}")]
    Format(String),
    #[error("no usable network: {0}")]
    EmptyNetwork(String),
}

/// Everything derived from one trace at one cell size.
#[derive(Debug, Clone)]
pub struct Estimation {
    pub grid: CellGrid,
    pub extraction: TripExtraction,
    pub stats: BTreeMap<CellId, CellStats>,
    pub network: EstimatedNetwork,
}

/// Grid, trips, per-cell rates and network for `events`. The fleet size
/// defaults to the number of distinct vehicles.
pub fn estimate(events: &[TraceEvent], side_m: f64, fleet_size: Option<usize>) -> Result<Estimation, TraceError> {
    let grid = CellGrid::fit(events, side_m)?;
    let extraction = extract_trips(events, &grid);
    let stats = cell_stats(&extraction);
    let fleet = fleet_size.unwrap_or(extraction.vehicles);
    let network = build_network(&extraction.trips, &stats, fleet)?;
    Ok(Estimation {
        grid,
        extraction,
        stats,
        network,
    })
}
