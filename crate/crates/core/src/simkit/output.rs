use super::{PolicyComparison, SimReport};

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// One row per station per report.
pub fn report_csv(reports: &[SimReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "policy",
        "station",
        "availability",
        "availability_se",
        "pickups_per_hour",
        "pickups_per_hour_se",
        "car_departures_per_hour",
        "avg_parked",
        "avg_parked_se",
        "lost_customers",
        "trains",
    ])
    .expect("in-memory csv");
    for r in reports {
        let label = r.policy.label();
        for i in 0..r.availability.len() {
            w.write_record([
                label.clone(),
                i.to_string(),
                fmt(r.availability[i]),
                fmt(r.availability_se[i]),
                fmt(r.pickups_per_hour[i]),
                fmt(r.pickups_per_hour_se[i]),
                fmt(r.car_departures_per_hour[i]),
                fmt(r.avg_parked[i]),
                fmt(r.avg_parked_se[i]),
                fmt(r.lost_customers[i]),
                fmt(r.trains[i]),
            ])
            .expect("in-memory csv");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
}

pub fn reports_json(reports: &[SimReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

/// `station,baseline,<policy>%...` with availability changes in percent.
pub fn variation_csv(cmp: &PolicyComparison) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["station".to_string(), "baseline_availability".to_string()];
    header.extend(cmp.reports.iter().map(|r| format!("{}_pct", r.policy.label())));
    w.write_record(&header).expect("in-memory csv");
    for (i, b) in cmp.baseline.availability.iter().enumerate() {
        let mut row = vec![i.to_string(), fmt(*b)];
        row.extend(cmp.variation_percent.iter().map(|v| fmt(v[i])));
        w.write_record(&row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
}
