use std::collections::BTreeMap;

use thiserror::Error;

use crate::netmodel::StationId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse '{input}': {reason}")]
pub struct ListParseError {
    pub input: String,
    pub reason: String,
}

fn err(input: &str, reason: impl Into<String>) -> ListParseError {
    ListParseError {
        input: input.to_string(),
        reason: reason.into(),
    }
}

fn parse_pairs(s: &str) -> Result<Vec<(usize, f64)>, ListParseError> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for item in s.split(',') {
        let item = item.trim();
        let (k, v) = item
            .split_once(':')
            .ok_or_else(|| err(s, format!("'{item}' is not of the form id:value")))?;
        let k: usize = k
            .trim()
            .parse()
            .map_err(|_| err(s, format!("'{k}' is not a station id")))?;
        let v: f64 = v.trim().parse().map_err(|_| err(s, format!("'{v}' is not a number")))?;
        if out.iter().any(|&(j, _)| j == k) {
            return Err(err(s, format!("station {k} appears twice")));
        }
        out.push((k, v));
    }
    Ok(out)
}

/// `1:0.2,2:0.8` into per-destination rates, each finite and > 0.
pub fn parse_rate_list(s: &str) -> Result<BTreeMap<StationId, f64>, ListParseError> {
    parse_pairs(s)?
        .into_iter()
        .map(|(k, v)| {
            if v.is_finite() && v > 0.0 {
                Ok((StationId(k), v))
            } else {
                Err(err(s, format!("rate {v} towards {k} must be > 0")))
            }
        })
        .collect()
}

/// Either `uniform` (every destination 1), `uniform:<c>`, or a list
/// `1:1,2:0.5` where missing destinations get 0. Values must lie in [0, 1]
/// and listed destinations must be among `dests`.
pub fn parse_alpha_list(s: &str, dests: &[StationId]) -> Result<BTreeMap<StationId, f64>, ListParseError> {
    let trimmed = s.trim();
    let check = |v: f64| {
        if (0.0..=1.0).contains(&v) {
            Ok(v)
        } else {
            Err(err(s, format!("probability {v} outside [0, 1]")))
        }
    };
    if trimmed.eq_ignore_ascii_case("uniform") {
        return Ok(dests.iter().map(|&d| (d, 1.0)).collect());
    }
    if let Some(rest) = trimmed.strip_prefix("uniform:") {
        let c: f64 = rest
            .trim()
            .parse()
            .map_err(|_| err(s, format!("'{rest}' is not a number")))?;
        let c = check(c)?;
        return Ok(dests.iter().map(|&d| (d, c)).collect());
    }
    let mut out: BTreeMap<StationId, f64> = dests.iter().map(|&d| (d, 0.0)).collect();
    for (k, v) in parse_pairs(s)? {
        let id = StationId(k);
        if !out.contains_key(&id) {
            return Err(err(s, format!("station {k} has no rate")));
        }
        out.insert(id, check(v)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates() {
        let m = parse_rate_list("1:0.2, 2:0.8").unwrap();
        assert_eq!(m[&StationId(1)], 0.2);
        assert_eq!(m[&StationId(2)], 0.8);
        for bad in ["", "1", "1:0", "1:-2", "x:1", "1:y", "1:1,1:2", "1:inf", "1:NaN"] {
            assert!(parse_rate_list(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn alphas() {
        let d = [StationId(1), StationId(2)];
        let a = parse_alpha_list("1:1", &d).unwrap();
        assert_eq!(a[&StationId(1)], 1.0);
        assert_eq!(a[&StationId(2)], 0.0);
        assert!(parse_alpha_list("uniform", &d).unwrap().values().all(|&v| v == 1.0));
        assert!(parse_alpha_list("uniform:0.4", &d).unwrap().values().all(|&v| v == 0.4));
        for bad in ["3:1", "1:1.5", "uniform:2", "uniform:x", "1"] {
            assert!(parse_alpha_list(bad, &d).is_err(), "{bad}");
        }
    }
}
