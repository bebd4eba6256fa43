use std::io::{Read, Write};

use chrono::{DateTime, SecondsFormat};
use serde::{Deserialize, Serialize};

use super::TraceError;

/// Header an event log must start with, verbatim.
pub const HEADER: [&str; 5] = ["event_type", "timestamp", "vehicle_id", "lat", "lon"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventType {
    Pickup,
    Dropoff,
}

impl EventType {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventType::Pickup => "pickup",
            EventType::Dropoff => "dropoff",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    pub event_type: EventType,
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
    pub vehicle_id: String,
    pub lat: f64,
    pub lon: f64,
}

/// A row that could not be turned into an event.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reject {
    /// 1-based line number in the input, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedEvents {
    /// Sorted by vehicle, then time; ties keep file order.
    pub events: Vec<TraceEvent>,
    pub rejects: Vec<Reject>,
}

/// Reads an event log. Malformed rows end up in `rejects`; only an unreadable
/// stream or a wrong header fails the whole parse.
pub fn parse_events<R: Read>(reader: R) -> Result<ParsedEvents, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_to_trace)?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(TraceError::Format(format!(
            "header must be '{}', found '{}'",
            HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut out = ParsedEvents::default();
    for (k, row) in rdr.records().enumerate() {
        let line = k as u64 + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(csv_to_trace(e)),
            Err(e) => {
                out.rejects.push(Reject {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        match parse_row(&row) {
            Ok(ev) => out.events.push(ev),
            Err(reason) => out.rejects.push(Reject { line, reason }),
        }
    }
    out.events.sort_by(|a, b| {
        a.vehicle_id
            .cmp(&b.vehicle_id)
            .then(a.timestamp.total_cmp(&b.timestamp))
    });
    Ok(out)
}

fn csv_to_trace(e: csv::Error) -> TraceError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => TraceError::Io(io),
        other => TraceError::Format(format!("{other:?}")),
    }
}

fn parse_row(row: &csv::StringRecord) -> Result<TraceEvent, String> {
    if row.len() != HEADER.len() {
        return Err(format!("expected {} fields, found {}", HEADER.len(), row.len()));
    }
    let event_type = match row[0].trim() {
        "pickup" => EventType::Pickup,
        "dropoff" => EventType::Dropoff,
        other => return Err(format!("unknown event_type '{other}'")),
    };
    let timestamp = parse_timestamp(row[1].trim())?;
    let vehicle_id = row[2].trim().to_string();
    if vehicle_id.is_empty() {
        return Err("empty vehicle_id".into());
    }
    let lat: f64 = row[3].trim().parse().map_err(|_| format!("bad lat '{}'", &row[3]))?;
    let lon: f64 = row[4].trim().parse().map_err(|_| format!("bad lon '{}'", &row[4]))?;
    if !(lat.is_finite() && (-90.0..=90.0).contains(&lat)) {
        return Err(format!("lat {lat} out of range"));
    }
    if !(lon.is_finite() && (-180.0..=180.0).contains(&lon)) {
        return Err(format!("lon {lon} out of range"));
    }
    Ok(TraceEvent {
        event_type,
        timestamp,
        vehicle_id,
        lat,
        lon,
    })
}

/// ISO-8601 / RFC 3339 timestamp to seconds since the epoch.
pub fn parse_timestamp(s: &str) -> Result<f64, String> {
    let t = DateTime::parse_from_rfc3339(s).map_err(|e| format!("bad timestamp '{s}': {e}"))?;
    Ok(t.timestamp_micros() as f64 / 1e6)
}

/// Seconds since the epoch to an ISO-8601 UTC string with microseconds.
pub fn format_timestamp(secs: f64) -> String {
    let micros = (secs * 1e6).round() as i64;
    DateTime::from_timestamp_micros(micros)
        .expect("timestamp within chrono's range")
        .to_rfc3339_opts(SecondsFormat::Micros, true)
}

/// Writes events with the standard header, in the given order.
pub fn write_events<W: Write>(events: &[TraceEvent], writer: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER).map_err(csv_to_trace)?;
    for e in events {
        w.write_record([
            e.event_type.as_str(),
            &format_timestamp(e.timestamp),
            &e.vehicle_id,
            &format!("{:.7}", e.lat),
            &format!("{:.7}", e.lon),
        ])
        .map_err(csv_to_trace)?;
    }
    w.flush()?;
    Ok(())
}
