use serde::Serialize;

use super::{check_spec, SolveError};
use crate::netmodel::{NetworkSpec, StationId};

/// Relative arrival rates, normalized so the station entries sum to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisitRatios {
    pub station: Vec<f64>,
    /// `e_l = e_origin · p_l` for every delay link, in link order.
    pub link: Vec<f64>,
}

impl VisitRatios {
    pub fn station(&self, id: StationId) -> f64 {
        self.station[id.0]
    }
}

/// Solves the flow-balance equations `e_j = Σ_i e_i p_ij` with `Σ_i e_i = 1`.
pub fn solve_traffic(spec: &NetworkSpec) -> Result<VisitRatios, SolveError> {
    check_spec(spec)?;
    let n = spec.num_stations();
    let p = spec.routing_matrix();

    // (I - P)^T e = 0 with the last equation swapped for the normalization.
    let mut a = vec![vec![0.0; n + 1]; n];
    for j in 0..n {
        for i in 0..n {
            a[j][i] = if i == j { 1.0 } else { 0.0 } - p[i][j];
        }
    }
    a[n - 1][..n].fill(1.0);
    a[n - 1][n] = 1.0;

    let e = gauss_solve(a).ok_or(SolveError::Ergodicity)?;
    // Components are positive for an irreducible chain; clear round-off.
    let station: Vec<f64> = e.into_iter().map(|v| v.max(0.0)).collect();
    let total: f64 = station.iter().sum();
    let station: Vec<f64> = station.into_iter().map(|v| v / total).collect();
    let link = spec
        .links
        .iter()
        .map(|l| station[l.origin.0] * l.routing_prob)
        .collect();
    Ok(VisitRatios { station, link })
}

/// Gaussian elimination with partial pivoting on an augmented `n × (n+1)`
/// matrix. Returns `None` for a (numerically) singular system.
fn gauss_solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            let (top, bottom) = a.split_at_mut(row);
            for (x, &y) in bottom[0][col..=n].iter_mut().zip(&top[col][col..=n]) {
                *x -= factor * y;
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = a[row][n];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}
