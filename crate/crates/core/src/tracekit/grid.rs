use std::collections::BTreeSet;

use serde::Serialize;

use super::{TraceError, TraceEvent};

/// Cell side lengths in meters commonly used for city-scale studies.
pub const SIDE_PRESETS: [f64; 4] = [250.0, 500.0, 1000.0, 2000.0];

const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Square cell, ordered by row then column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CellId {
    pub row: i64,
    pub col: i64,
}

/// Maps degrees to meters with an equirectangular projection around a
/// reference point. Adequate for areas a few tens of kilometers across.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalProjection {
    pub ref_lat: f64,
    pub ref_lon: f64,
}

impl LocalProjection {
    pub fn to_xy(&self, lat: f64, lon: f64) -> (f64, f64) {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        let x = (lon - self.ref_lon) * k * self.ref_lat.to_radians().cos();
        let y = (lat - self.ref_lat) * k;
        (x, y)
    }

    pub fn to_latlon(&self, x: f64, y: f64) -> (f64, f64) {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        let lat = self.ref_lat + y / k;
        let lon = self.ref_lon + x / (k * self.ref_lat.to_radians().cos());
        (lat, lon)
    }
}

/// Square cells covering the bounding box of a trace.
///
/// The grid is anchored half a cell below and left of the lowest projected
/// point, and the projection is centered on the centroid of all events.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellGrid {
    pub side_m: f64,
    pub projection: LocalProjection,
    pub origin_x: f64,
    pub origin_y: f64,
    /// Cells holding at least one event.
    pub active: BTreeSet<CellId>,
}

impl CellGrid {
    pub fn fit(events: &[TraceEvent], side_m: f64) -> Result<CellGrid, TraceError> {
        if !(side_m.is_finite() && side_m > 0.0) {
            return Err(TraceError::Format(format!("cell side {side_m} must be > 0")));
        }
        if events.is_empty() {
            return Err(TraceError::EmptyNetwork("the trace has no events".into()));
        }
        let n = events.len() as f64;
        let projection = LocalProjection {
            ref_lat: events.iter().map(|e| e.lat).sum::<f64>() / n,
            ref_lon: events.iter().map(|e| e.lon).sum::<f64>() / n,
        };
        let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
        for e in events {
            let (x, y) = projection.to_xy(e.lat, e.lon);
            min_x = min_x.min(x);
            min_y = min_y.min(y);
        }
        let mut grid = CellGrid {
            side_m,
            projection,
            origin_x: min_x - side_m / 2.0,
            origin_y: min_y - side_m / 2.0,
            active: BTreeSet::new(),
        };
        grid.active = events.iter().map(|e| grid.cell_of(e.lat, e.lon)).collect();
        Ok(grid)
    }

    pub fn cell_of(&self, lat: f64, lon: f64) -> CellId {
        let (x, y) = self.projection.to_xy(lat, lon);
        CellId {
            row: ((y - self.origin_y) / self.side_m).floor() as i64,
            col: ((x - self.origin_x) / self.side_m).floor() as i64,
        }
    }

    pub fn cell_center(&self, cell: CellId) -> (f64, f64) {
        let x = self.origin_x + (cell.col as f64 + 0.5) * self.side_m;
        let y = self.origin_y + (cell.row as f64 + 0.5) * self.side_m;
        self.projection.to_latlon(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracekit::EventType;

    fn ev(lat: f64, lon: f64) -> TraceEvent {
        TraceEvent {
            event_type: EventType::Pickup,
            timestamp: 0.0,
            vehicle_id: "a".into(),
            lat,
            lon,
        }
    }

    #[test]
    fn projection_round_trip() {
        let p = LocalProjection {
            ref_lat: 52.37,
            ref_lon: 4.89,
        };
        let (x, y) = p.to_xy(52.38, 4.91);
        let (lat, lon) = p.to_latlon(x, y);
        assert!((lat - 52.38).abs() < 1e-12 && (lon - 4.91).abs() < 1e-12);
        // 0.01 degrees of latitude is about 1.1 km.
        assert!((y - 1111.95).abs() < 1.0);
    }

    #[test]
    fn nearby_points_share_a_cell() {
        let p = LocalProjection {
            ref_lat: 52.37,
            ref_lon: 4.89,
        };
        let pts: Vec<(f64, f64)> = [(0.0, 0.0), (30.0, -20.0), (500.0, 0.0), (0.0, 510.0)]
            .iter()
            .map(|&(x, y)| p.to_latlon(x, y))
            .collect();
        let events: Vec<TraceEvent> = pts.iter().map(|&(la, lo)| ev(la, lo)).collect();
        let grid = CellGrid::fit(&events, 250.0).unwrap();
        let cells: Vec<CellId> = pts.iter().map(|&(la, lo)| grid.cell_of(la, lo)).collect();
        assert_eq!(cells[0], cells[1]);
        assert_ne!(cells[0], cells[2]);
        assert_ne!(cells[0], cells[3]);
        assert_eq!(grid.active.len(), 3);
        let (la, lo) = grid.cell_center(cells[2]);
        assert_eq!(grid.cell_of(la, lo), cells[2]);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(CellGrid::fit(&[], 250.0).is_err());
        assert!(CellGrid::fit(&[ev(52.0, 4.0)], 0.0).is_err());
    }
}
