use serde::Serialize;

use super::{CellGrid, CellId, EventType, TraceEvent};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trip {
    pub vehicle_id: String,
    pub origin_cell: CellId,
    pub dest_cell: CellId,
    /// Seconds since the epoch.
    pub start: f64,
    pub end: f64,
    /// Hours.
    pub duration: f64,
}

/// Irregularities found while pairing events. They are data, not errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Anomaly {
    /// A pickup followed by another pickup of the same vehicle.
    RepeatedPickup {
        vehicle_id: String,
        timestamp: f64,
        cell: CellId,
    },
    /// A dropoff of a vehicle that was already parked.
    RepeatedDropoff {
        vehicle_id: String,
        timestamp: f64,
        cell: CellId,
    },
    /// A pickup with no later dropoff in the window.
    TrailingPickup {
        vehicle_id: String,
        timestamp: f64,
        cell: CellId,
    },
    /// A pickup in a different cell from the one the car was left in.
    MovedWhileParked {
        vehicle_id: String,
        timestamp: f64,
        parked: CellId,
        pickup: CellId,
    },
    /// Dropoff at the same instant as its pickup.
    ZeroDuration {
        vehicle_id: String,
        timestamp: f64,
        cell: CellId,
    },
}

/// A car standing in a cell over `[start, end]` (seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParkingInterval {
    pub cell: CellId,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripExtraction {
    pub trips: Vec<Trip>,
    pub anomalies: Vec<Anomaly>,
    pub parking: Vec<ParkingInterval>,
    /// Cell of every vehicle whose first event is a pickup, i.e. parked at
    /// the start of the window.
    pub initially_parked: Vec<CellId>,
    /// Vehicles whose first event is a dropoff: in transit at the start of
    /// the window and part of the parked inventory from that dropoff on.
    pub leading_dropoffs: Vec<(String, CellId, f64)>,
    /// Every pickup event, by cell.
    pub pickups: Vec<CellId>,
    pub window: (f64, f64),
    pub vehicles: usize,
}

enum VehicleState {
    Start,
    Parked { cell: CellId, since: f64 },
    Driving { cell: CellId, since: f64 },
}

/// Pairs each pickup with the next dropoff of the same vehicle and rebuilds
/// parking intervals over the observation window (first to last event).
/// Events may come in any order; ties in time keep their input order.
pub fn extract_trips(events: &[TraceEvent], grid: &CellGrid) -> TripExtraction {
    let mut sorted: Vec<&TraceEvent> = events.iter().collect();
    sorted.sort_by(|a, b| {
        a.vehicle_id
            .cmp(&b.vehicle_id)
            .then(a.timestamp.total_cmp(&b.timestamp))
    });
    let t0 = events.iter().map(|e| e.timestamp).fold(f64::INFINITY, f64::min);
    let t1 = events.iter().map(|e| e.timestamp).fold(f64::NEG_INFINITY, f64::max);
    let mut out = TripExtraction {
        trips: Vec::new(),
        anomalies: Vec::new(),
        parking: Vec::new(),
        initially_parked: Vec::new(),
        leading_dropoffs: Vec::new(),
        pickups: Vec::new(),
        window: if events.is_empty() { (0.0, 0.0) } else { (t0, t1) },
        vehicles: 0,
    };

    for vehicle in sorted.chunk_by(|a, b| a.vehicle_id == b.vehicle_id) {
        out.vehicles += 1;
        let id = &vehicle[0].vehicle_id;
        let mut state = VehicleState::Start;
        for &e in vehicle {
            let cell = grid.cell_of(e.lat, e.lon);
            let t = e.timestamp;
            state = match (state, e.event_type) {
                (VehicleState::Start, EventType::Pickup) => {
                    out.initially_parked.push(cell);
                    out.parking.push(ParkingInterval {
                        cell,
                        start: t0,
                        end: t,
                    });
                    out.pickups.push(cell);
                    VehicleState::Driving { cell, since: t }
                }
                (VehicleState::Start, EventType::Dropoff) => {
                    out.leading_dropoffs.push((id.clone(), cell, t));
                    VehicleState::Parked { cell, since: t }
                }
                (VehicleState::Parked { cell: parked, since }, EventType::Pickup) => {
                    if parked != cell {
                        out.anomalies.push(Anomaly::MovedWhileParked {
                            vehicle_id: id.clone(),
                            timestamp: t,
                            parked,
                            pickup: cell,
                        });
                    }
                    out.parking.push(ParkingInterval {
                        cell: parked,
                        start: since,
                        end: t,
                    });
                    out.pickups.push(cell);
                    VehicleState::Driving { cell, since: t }
                }
                (VehicleState::Parked { cell: parked, since }, EventType::Dropoff) => {
                    out.anomalies.push(Anomaly::RepeatedDropoff {
                        vehicle_id: id.clone(),
                        timestamp: t,
                        cell,
                    });
                    out.parking.push(ParkingInterval {
                        cell: parked,
                        start: since,
                        end: t,
                    });
                    VehicleState::Parked { cell, since: t }
                }
                (VehicleState::Driving { cell: origin, since }, EventType::Pickup) => {
                    out.anomalies.push(Anomaly::RepeatedPickup {
                        vehicle_id: id.clone(),
                        timestamp: since,
                        cell: origin,
                    });
                    out.pickups.push(cell);
                    VehicleState::Driving { cell, since: t }
                }
                (VehicleState::Driving { cell: origin, since }, EventType::Dropoff) => {
                    if t > since {
                        out.trips.push(Trip {
                            vehicle_id: id.clone(),
                            origin_cell: origin,
                            dest_cell: cell,
                            start: since,
                            end: t,
                            duration: (t - since) / 3600.0,
                        });
                    } else {
                        out.anomalies.push(Anomaly::ZeroDuration {
                            vehicle_id: id.clone(),
                            timestamp: t,
                            cell: origin,
                        });
                    }
                    VehicleState::Parked { cell, since: t }
                }
            };
        }
        match state {
            VehicleState::Parked { cell, since } => {
                out.parking.push(ParkingInterval {
                    cell,
                    start: since,
                    end: t1,
                });
            }
            VehicleState::Driving { cell, since } => out.anomalies.push(Anomaly::TrailingPickup {
                vehicle_id: id.clone(),
                timestamp: since,
                cell,
            }),
            VehicleState::Start => {}
        }
    }
    out
}

/// Parked cars per cell plus cars on the road at instant `t`, summed.
pub fn occupancy_at(extraction: &TripExtraction, t: f64) -> usize {
    let parked = extraction.parking.iter().filter(|p| p.start <= t && t < p.end).count();
    let driving = extraction.trips.iter().filter(|tr| tr.start <= t && t < tr.end).count();
    parked + driving
}

/// Anomalies as line-delimited JSON.
pub fn anomalies_jsonl(anomalies: &[Anomaly]) -> String {
    anomalies
        .iter()
        .map(|a| serde_json::to_string(a).expect("anomaly serializes") + "\n")
        .collect()
}
