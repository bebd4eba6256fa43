//! JSON document format for network specs.
//!
//! ```json
//! {
//!   "stations": [{"id": 0, "mu": 1.5}, {"id": 1, "mu_per_dest": {"0": 2.0}}],
//!   "links": [{"origin": 0, "dest": 1, "mean_travel_time_h": 0.4, "p": 1.0}, ...],
//!   "fleet_size": 10
//! }
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DelayLink, LinkId, NetworkSpec, ServiceRates, StationId, StationSpec};

#[derive(Debug, Error)]
pub enum SpecFileError {
    #[error("malformed network spec: {0}")]
    Json(#[from] serde_json::Error),
    #[error("station {0}: exactly one of \"mu\" and \"mu_per_dest\" must be given")]
    Rates(usize),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDocument {
    stations: Vec<StationRecord>,
    links: Vec<LinkRecord>,
    fleet_size: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StationRecord {
    id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu_per_dest: Option<BTreeMap<usize, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha_per_dest: Option<BTreeMap<usize, f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkRecord {
    origin: usize,
    dest: usize,
    mean_travel_time_h: f64,
    p: f64,
}

fn keyed(map: BTreeMap<usize, f64>) -> BTreeMap<StationId, f64> {
    map.into_iter().map(|(k, v)| (StationId(k), v)).collect()
}

pub(super) fn parse(text: &str) -> Result<NetworkSpec, SpecFileError> {
    let doc: SpecDocument = serde_json::from_str(text)?;
    let mut stations = Vec::with_capacity(doc.stations.len());
    for rec in doc.stations {
        let rates = match (rec.mu, rec.mu_per_dest) {
            (Some(mu), None) => ServiceRates::Aggregate(mu),
            (None, Some(map)) => ServiceRates::PerDestination(keyed(map)),
            _ => return Err(SpecFileError::Rates(rec.id)),
        };
        stations.push(StationSpec {
            id: StationId(rec.id),
            rates,
            alpha_per_dest: rec.alpha_per_dest.map(keyed).unwrap_or_default(),
        });
    }
    let links = doc
        .links
        .into_iter()
        .enumerate()
        .map(|(k, rec)| DelayLink {
            id: LinkId(k),
            origin: StationId(rec.origin),
            dest: StationId(rec.dest),
            mean_travel_time: rec.mean_travel_time_h,
            routing_prob: rec.p,
        })
        .collect();
    Ok(NetworkSpec {
        stations,
        links,
        fleet_size: doc.fleet_size,
    })
}

pub(super) fn render(spec: &NetworkSpec) -> String {
    let unkey = |m: &BTreeMap<StationId, f64>| -> BTreeMap<usize, f64> { m.iter().map(|(k, v)| (k.0, *v)).collect() };
    let doc = SpecDocument {
        stations: spec
            .stations
            .iter()
            .map(|st| {
                let (mu, mu_per_dest) = match &st.rates {
                    ServiceRates::Aggregate(mu) => (Some(*mu), None),
                    ServiceRates::PerDestination(map) => (None, Some(unkey(map))),
                };
                StationRecord {
                    id: st.id.0,
                    mu,
                    mu_per_dest,
                    alpha_per_dest: (!st.alpha_per_dest.is_empty()).then(|| unkey(&st.alpha_per_dest)),
                }
            })
            .collect(),
        links: spec
            .links
            .iter()
            .map(|l| LinkRecord {
                origin: l.origin.0,
                dest: l.dest.0,
                mean_travel_time_h: l.mean_travel_time,
                p: l.routing_prob,
            })
            .collect(),
        fleet_size: spec.fleet_size,
    };
    serde_json::to_string_pretty(&doc).expect("spec document serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
        "stations": [
            {"id": 0, "mu": 1.0},
            {"id": 1, "mu_per_dest": {"0": 0.5}, "alpha_per_dest": {"0": 1.0}}
        ],
        "links": [
            {"origin": 0, "dest": 1, "mean_travel_time_h": 0.5, "p": 1.0},
            {"origin": 1, "dest": 0, "mean_travel_time_h": 0.25, "p": 1.0}
        ],
        "fleet_size": 4
    }"#;

    #[test]
    fn parses_both_rate_forms() {
        let spec = parse(DOC).unwrap();
        assert_eq!(spec.stations[0].rates, ServiceRates::Aggregate(1.0));
        assert_eq!(spec.stations[1].mu_per_dest().unwrap()[&StationId(0)], 0.5);
        assert_eq!(spec.stations[1].alpha_to(StationId(0)), 1.0);
        assert_eq!(spec.links[1].mean_travel_time, 0.25);
        assert_eq!(spec.fleet_size, 4);
    }

    #[test]
    fn render_then_parse_is_identity() {
        let spec = parse(DOC).unwrap();
        assert_eq!(parse(&render(&spec)).unwrap(), spec);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = DOC.replace("\"fleet_size\"", "\"capacity\": 3, \"fleet_size\"");
        assert!(matches!(parse(&bad), Err(SpecFileError::Json(_))));
        let bad = DOC.replace("\"p\": 1.0}", "\"p\": 1.0, \"L\": 9}");
        assert!(parse(&bad).is_err());
    }

    #[test]
    fn rejects_ambiguous_rates() {
        let bad = DOC.replace("{\"id\": 0, \"mu\": 1.0}", "{\"id\": 0}");
        assert!(matches!(parse(&bad), Err(SpecFileError::Rates(0))));
        let bad = DOC.replace("\"mu\": 1.0", "\"mu\": 1.0, \"mu_per_dest\": {\"1\": 1.0}");
        assert!(matches!(parse(&bad), Err(SpecFileError::Rates(0))));
    }
}
