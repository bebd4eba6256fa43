use serde::Serialize;

use super::{NetworkMetrics, VisitRatios};
use crate::netmodel::NetworkSpec;

/// One row per queue: `id,type,e,throughput,utilization,avg_population`.
/// Utilization is left empty for delay links.
pub fn metrics_csv(spec: &NetworkSpec, e: &VisitRatios, m: &NetworkMetrics) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "type", "e", "throughput", "utilization", "avg_population"])
        .expect("in-memory csv");
    for i in 0..spec.num_stations() {
        w.write_record([
            i.to_string(),
            "station".into(),
            e.station[i].to_string(),
            m.station_throughput[i].to_string(),
            m.utilization[i].to_string(),
            m.avg_cars[i].to_string(),
        ])
        .expect("in-memory csv");
    }
    for (l, link) in spec.links.iter().enumerate() {
        w.write_record([
            link.id.0.to_string(),
            "link".into(),
            e.link[l].to_string(),
            m.link_throughput[l].to_string(),
            String::new(),
            m.avg_in_transit[l].to_string(),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
}

#[derive(Serialize)]
struct MetricsDocument<'a> {
    visit_ratios: &'a VisitRatios,
    metrics: &'a NetworkMetrics,
}

pub fn metrics_json(e: &VisitRatios, m: &NetworkMetrics) -> String {
    serde_json::to_string_pretty(&MetricsDocument {
        visit_ratios: e,
        metrics: m,
    })
    .expect("metrics serialize")
}

/// Station availability per fleet size: `station,N=...,N=...`.
pub fn availability_table_csv(sweep: &[NetworkMetrics]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["station".to_string()];
    header.extend(sweep.iter().map(|m| format!("N={}", m.population)));
    w.write_record(&header).expect("in-memory csv");
    let n_stations = sweep.first().map_or(0, |m| m.utilization.len());
    for i in 0..n_stations {
        let mut row = vec![i.to_string()];
        row.extend(sweep.iter().map(|m| m.utilization[i].to_string()));
        w.write_record(&row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
}
