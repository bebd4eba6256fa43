use std::collections::BTreeMap;

use serde::Serialize;

use super::{CellId, ParkingInterval, TripExtraction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Active,
    /// No departures or no parked time: nothing to estimate.
    Inactive,
    /// Not more departures than initially parked cars.
    LowSignal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellStats {
    pub cell: CellId,
    pub n_dep: u64,
    pub n_init: u64,
    /// Hours with at least one parked car.
    pub t_busy: f64,
    pub mu: Option<f64>,
    pub status: CellStatus,
}

/// Service rate of a single-server queue from its departure count, initial
/// backlog and busy time: `(n_dep - n_init) / t_busy`.
pub fn clarke_estimate(cell: CellId, n_dep: u64, n_init: u64, t_busy: f64) -> CellStats {
    let (mu, status) = if n_dep == 0 || t_busy <= 0.0 {
        (None, CellStatus::Inactive)
    } else if n_dep <= n_init {
        (None, CellStatus::LowSignal)
    } else {
        (Some((n_dep - n_init) as f64 / t_busy), CellStatus::Active)
    };
    CellStats {
        cell,
        n_dep,
        n_init,
        t_busy,
        mu,
        status,
    }
}

/// Length in hours of the union of intervals given in seconds.
pub fn union_length_hours(intervals: &mut [ParkingInterval]) -> f64 {
    intervals.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut total = 0.0;
    let mut current: Option<(f64, f64)> = None;
    for iv in intervals.iter() {
        match current {
            Some((s, e)) if iv.start <= e => current = Some((s, e.max(iv.end))),
            Some((s, e)) => {
                total += e - s;
                current = Some((iv.start, iv.end));
            }
            None => current = Some((iv.start, iv.end)),
        }
    }
    if let Some((s, e)) = current {
        total += e - s;
    }
    total / 3600.0
}

/// Clarke estimates for every cell that saw a pickup or a parked car.
pub fn cell_stats(extraction: &TripExtraction) -> BTreeMap<CellId, CellStats> {
    let mut n_dep: BTreeMap<CellId, u64> = BTreeMap::new();
    for &c in &extraction.pickups {
        *n_dep.entry(c).or_default() += 1;
    }
    let mut n_init: BTreeMap<CellId, u64> = BTreeMap::new();
    for &c in &extraction.initially_parked {
        *n_init.entry(c).or_default() += 1;
    }
    let mut parking: BTreeMap<CellId, Vec<ParkingInterval>> = BTreeMap::new();
    for p in &extraction.parking {
        parking.entry(p.cell).or_default().push(*p);
    }
    for &c in n_dep.keys() {
        parking.entry(c).or_default();
    }
    parking
        .into_iter()
        .map(|(cell, mut ivs)| {
            let busy = union_length_hours(&mut ivs);
            let stats = clarke_estimate(
                cell,
                n_dep.get(&cell).copied().unwrap_or(0),
                n_init.get(&cell).copied().unwrap_or(0),
                busy,
            );
            (cell, stats)
        })
        .collect()
}

/// Empirical complementary CDF of the estimated rates: `(mu, P[rate >= mu])`
/// at every distinct estimate, ascending.
pub fn mu_ccdf(stats: &BTreeMap<CellId, CellStats>) -> Vec<(f64, f64)> {
    let mut mus: Vec<f64> = stats.values().filter_map(|s| s.mu).collect();
    mus.sort_by(f64::total_cmp);
    let n = mus.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (k, &m) in mus.iter().enumerate() {
        if out.last().is_some_and(|&(prev, _)| prev == m) {
            continue;
        }
        out.push((m, (n - k as f64) / n));
    }
    out
}

pub fn mu_ccdf_csv(ccdf: &[(f64, f64)]) -> String {
    let mut s = String::from("mu,ccdf\n");
    for (m, p) in ccdf {
        s.push_str(&format!("{m},{p}\n"));
    }
    s
}

pub fn cell_stats_csv(stats: &BTreeMap<CellId, CellStats>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row", "col", "n_dep", "n_init", "t_busy_h", "mu", "status"])
        .expect("in-memory csv");
    for s in stats.values() {
        let status = match s.status {
            CellStatus::Active => "active",
            CellStatus::Inactive => "inactive",
            CellStatus::LowSignal => "low_signal",
        };
        w.write_record([
            s.cell.row.to_string(),
            s.cell.col.to_string(),
            s.n_dep.to_string(),
            s.n_init.to_string(),
            s.t_busy.to_string(),
            s.mu.map(|m| m.to_string()).unwrap_or_default(),
            status.to_string(),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
}
