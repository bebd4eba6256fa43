//! Domain types for the closed car-sharing network: stations (single-server
//! queues where parked cars wait for customers), delay links (infinite-server
//! queues modelling travel) and the fleet size that circulates between them.
//!
//! Rates are per hour and times are in hours everywhere in the crate.

mod file;

pub use file::SpecFileError;

use std::collections::BTreeMap;
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance applied to routing-row sums and rate/routing consistency.
pub const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StationId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub usize);

impl fmt::Display for StationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "station {}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "link {}", self.0)
    }
}

/// Any queue of the network: a station or a delay link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "lowercase")]
pub enum QueueRef {
    Station(StationId),
    Link(LinkId),
}

/// Customer arrival rates at a station.
///
/// Data sources often only know the aggregate pickup rate; [`derive_mu_split`]
/// turns that into per-destination rates using the routing row.
#[derive(Debug, Clone, PartialEq)]
pub enum ServiceRates {
    Aggregate(f64),
    PerDestination(BTreeMap<StationId, f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationSpec {
    pub id: StationId,
    pub rates: ServiceRates,
    /// Probability that a customer headed for the keyed destination takes a
    /// second car along. Missing entries mean 0.
    pub alpha_per_dest: BTreeMap<StationId, f64>,
}

impl StationSpec {
    pub fn with_rates(id: StationId, mu_per_dest: BTreeMap<StationId, f64>) -> Self {
        StationSpec {
            id,
            rates: ServiceRates::PerDestination(mu_per_dest),
            alpha_per_dest: BTreeMap::new(),
        }
    }

    pub fn with_aggregate(id: StationId, mu: f64) -> Self {
        StationSpec {
            id,
            rates: ServiceRates::Aggregate(mu),
            alpha_per_dest: BTreeMap::new(),
        }
    }

    /// Total customer arrival rate μ_i.
    pub fn total_rate(&self) -> f64 {
        match &self.rates {
            ServiceRates::Aggregate(mu) => *mu,
            ServiceRates::PerDestination(map) => map.values().sum(),
        }
    }

    /// Per-destination rates, if they are known.
    pub fn mu_per_dest(&self) -> Option<&BTreeMap<StationId, f64>> {
        match &self.rates {
            ServiceRates::Aggregate(_) => None,
            ServiceRates::PerDestination(map) => Some(map),
        }
    }

    pub fn alpha_to(&self, dest: StationId) -> f64 {
        self.alpha_per_dest.get(&dest).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayLink {
    pub id: LinkId,
    pub origin: StationId,
    pub dest: StationId,
    /// Mean travel time in hours.
    pub mean_travel_time: f64,
    pub routing_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub stations: Vec<StationSpec>,
    pub links: Vec<DelayLink>,
    pub fleet_size: usize,
}

impl NetworkSpec {
    pub fn num_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn num_queues(&self) -> usize {
        self.stations.len() + self.links.len()
    }

    pub fn queues(&self) -> impl Iterator<Item = QueueRef> + '_ {
        let stations = (0..self.stations.len()).map(|i| QueueRef::Station(StationId(i)));
        let links = (0..self.links.len()).map(|l| QueueRef::Link(LinkId(l)));
        stations.chain(links)
    }

    pub fn outgoing(&self, station: StationId) -> impl Iterator<Item = &DelayLink> + '_ {
        self.links.iter().filter(move |l| l.origin == station)
    }

    pub fn incoming(&self, station: StationId) -> impl Iterator<Item = &DelayLink> + '_ {
        self.links.iter().filter(move |l| l.dest == station)
    }

    pub fn link_between(&self, origin: StationId, dest: StationId) -> Option<&DelayLink> {
        self.links.iter().find(|l| l.origin == origin && l.dest == dest)
    }

    /// Dense station-to-station routing matrix built from the links.
    pub fn routing_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.stations.len();
        let mut p = vec![vec![0.0; n]; n];
        for l in &self.links {
            if l.origin.0 < n && l.dest.0 < n {
                p[l.origin.0][l.dest.0] += l.routing_prob;
            }
        }
        p
    }

    /// Same network with another fleet size.
    pub fn with_fleet(&self, fleet_size: usize) -> NetworkSpec {
        NetworkSpec {
            fleet_size,
            ..self.clone()
        }
    }

    pub fn from_json_str(text: &str) -> Result<NetworkSpec, SpecFileError> {
        file::parse(text)
    }

    pub fn to_json_string(&self) -> String {
        file::render(self)
    }
}

/// One broken invariant of a [`NetworkSpec`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    EmptyNetwork,
    ZeroFleet,
    StationIdMismatch {
        index: usize,
        id: StationId,
    },
    LinkIdMismatch {
        index: usize,
        id: LinkId,
    },
    UnknownStation {
        link: LinkId,
        station: StationId,
    },
    NonPositiveRate {
        station: StationId,
        dest: Option<StationId>,
        value: f64,
    },
    AlphaOutOfRange {
        station: StationId,
        dest: StationId,
        value: f64,
    },
    AlphaWithoutRate {
        station: StationId,
        dest: StationId,
    },
    UnsplitRates {
        station: StationId,
    },
    NonPositiveTravelTime {
        link: LinkId,
        value: f64,
    },
    RoutingProbOutOfRange {
        link: LinkId,
        value: f64,
    },
    DuplicateLink {
        origin: StationId,
        dest: StationId,
    },
    RowStochastic {
        station: StationId,
        sum: f64,
    },
    MissingRate {
        station: StationId,
        dest: StationId,
    },
    RateWithoutLink {
        station: StationId,
        dest: StationId,
    },
    RateRoutingMismatch {
        station: StationId,
        dest: StationId,
        rate_share: f64,
        routing_prob: f64,
    },
    Irreducibility {
        components: Vec<Vec<StationId>>,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            EmptyNetwork => write!(f, "network has no stations"),
            ZeroFleet => write!(f, "fleet size must be at least 1"),
            StationIdMismatch { index, id } => {
                write!(f, "station at position {index} carries id {}", id.0)
            }
            LinkIdMismatch { index, id } => write!(f, "link at position {index} carries id {}", id.0),
            UnknownStation { link, station } => write!(f, "{link} refers to unknown {station}"),
            NonPositiveRate {
                station,
                dest: Some(d),
                value,
            } => {
                write!(f, "{station}: rate towards {d} is {value}, must be > 0")
            }
            NonPositiveRate {
                station,
                dest: None,
                value,
            } => {
                write!(f, "{station}: total rate is {value}, must be > 0")
            }
            AlphaOutOfRange { station, dest, value } => {
                write!(
                    f,
                    "{station}: relocation probability towards {dest} is {value}, must lie in [0, 1]"
                )
            }
            AlphaWithoutRate { station, dest } => {
                write!(f, "{station}: relocation probability given for {dest} without a rate")
            }
            UnsplitRates { station } => {
                write!(
                    f,
                    "{station}: only an aggregate rate is known, per-destination split missing"
                )
            }
            NonPositiveTravelTime { link, value } => {
                write!(f, "{link}: mean travel time {value} must be > 0")
            }
            RoutingProbOutOfRange { link, value } => {
                write!(f, "{link}: routing probability {value} must lie in (0, 1]")
            }
            DuplicateLink { origin, dest } => write!(f, "more than one link from {origin} to {dest}"),
            RowStochastic { station, sum } => {
                write!(f, "{station}: outgoing routing probabilities sum to {sum}, expected 1")
            }
            MissingRate { station, dest } => {
                write!(f, "{station}: link towards {dest} has no per-destination rate")
            }
            RateWithoutLink { station, dest } => {
                write!(f, "{station}: rate towards {dest} has no delay link")
            }
            RateRoutingMismatch {
                station,
                dest,
                rate_share,
                routing_prob,
            } => write!(
                f,
                "{station}: rate share {rate_share} towards {dest} differs from routing probability {routing_prob}"
            ),
            Irreducibility { components } => {
                write!(
                    f,
                    "station routing chain is not irreducible ({} components)",
                    components.len()
                )
            }
        }
    }
}

/// Returns every invariant violation of `spec`; an empty list means valid.
pub fn validate(spec: &NetworkSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = spec.stations.len();
    if n == 0 {
        out.push(Violation::EmptyNetwork);
    }
    if spec.fleet_size == 0 {
        out.push(Violation::ZeroFleet);
    }

    for (index, st) in spec.stations.iter().enumerate() {
        if st.id.0 != index {
            out.push(Violation::StationIdMismatch { index, id: st.id });
        }
    }
    for (index, l) in spec.links.iter().enumerate() {
        if l.id.0 != index {
            out.push(Violation::LinkIdMismatch { index, id: l.id });
        }
    }

    let mut known_links = BTreeMap::new();
    for l in &spec.links {
        let mut endpoints_ok = true;
        for s in [l.origin, l.dest] {
            if s.0 >= n {
                out.push(Violation::UnknownStation { link: l.id, station: s });
                endpoints_ok = false;
            }
        }
        if !(l.mean_travel_time > 0.0 && l.mean_travel_time.is_finite()) {
            out.push(Violation::NonPositiveTravelTime {
                link: l.id,
                value: l.mean_travel_time,
            });
        }
        if !(l.routing_prob > 0.0 && l.routing_prob <= 1.0) {
            out.push(Violation::RoutingProbOutOfRange {
                link: l.id,
                value: l.routing_prob,
            });
        }
        if endpoints_ok && known_links.insert((l.origin, l.dest), l.routing_prob).is_some() {
            out.push(Violation::DuplicateLink {
                origin: l.origin,
                dest: l.dest,
            });
        }
    }

    let mut row_ok = vec![true; n];
    for (i, st) in spec.stations.iter().enumerate() {
        let id = StationId(i);
        let sum: f64 = spec.outgoing(id).map(|l| l.routing_prob).sum();
        if (sum - 1.0).abs() > ROW_TOLERANCE {
            out.push(Violation::RowStochastic { station: id, sum });
            row_ok[i] = false;
        }

        let total = st.total_rate();
        match &st.rates {
            ServiceRates::Aggregate(mu) => {
                if !(*mu > 0.0 && mu.is_finite()) {
                    out.push(Violation::NonPositiveRate {
                        station: id,
                        dest: None,
                        value: *mu,
                    });
                }
                out.push(Violation::UnsplitRates { station: id });
            }
            ServiceRates::PerDestination(map) => {
                for (&dest, &rate) in map {
                    if !(rate > 0.0 && rate.is_finite()) {
                        out.push(Violation::NonPositiveRate {
                            station: id,
                            dest: Some(dest),
                            value: rate,
                        });
                    }
                    if !known_links.contains_key(&(id, dest)) {
                        out.push(Violation::RateWithoutLink { station: id, dest });
                    }
                }
                if !(total > 0.0 && total.is_finite()) {
                    out.push(Violation::NonPositiveRate {
                        station: id,
                        dest: None,
                        value: total,
                    });
                }
                for l in spec.outgoing(id) {
                    match map.get(&l.dest) {
                        None => out.push(Violation::MissingRate {
                            station: id,
                            dest: l.dest,
                        }),
                        Some(&rate) if row_ok[i] && total > 0.0 => {
                            let share = rate / total;
                            if (share - l.routing_prob).abs() > ROW_TOLERANCE {
                                out.push(Violation::RateRoutingMismatch {
                                    station: id,
                                    dest: l.dest,
                                    rate_share: share,
                                    routing_prob: l.routing_prob,
                                });
                            }
                        }
                        Some(_) => {}
                    }
                }
            }
        }

        for (&dest, &alpha) in &st.alpha_per_dest {
            if !(0.0..=1.0).contains(&alpha) {
                out.push(Violation::AlphaOutOfRange {
                    station: id,
                    dest,
                    value: alpha,
                });
            }
            let has_rate = match &st.rates {
                ServiceRates::Aggregate(_) => known_links.contains_key(&(id, dest)),
                ServiceRates::PerDestination(map) => map.contains_key(&dest),
            };
            if !has_rate {
                out.push(Violation::AlphaWithoutRate { station: id, dest });
            }
        }
    }

    // Irreducibility over stations that have somewhere to send cars.
    let active: Vec<usize> = (0..n)
        .filter(|&i| spec.outgoing(StationId(i)).next().is_some())
        .collect();
    if !active.is_empty() {
        let edges: Vec<(usize, usize)> = spec
            .links
            .iter()
            .filter(|l| l.origin.0 < n && l.dest.0 < n && l.routing_prob > 0.0)
            .map(|l| (l.origin.0, l.dest.0))
            .collect();
        let comps = strongly_connected_components(&active, &edges);
        if comps.len() > 1 {
            out.push(Violation::Irreducibility {
                components: comps
                    .into_iter()
                    .map(|c| c.into_iter().map(StationId).collect())
                    .collect(),
            });
        }
    }

    out
}

/// Strongly connected components of the graph induced on `nodes`. Edges with
/// an endpoint outside `nodes` are ignored. Components come back sorted, each
/// internally sorted.
pub fn strongly_connected_components(nodes: &[usize], edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut graph = DiGraph::<usize, ()>::new();
    let mut index = BTreeMap::new();
    for &v in nodes {
        index.entry(v).or_insert_with(|| graph.add_node(v));
    }
    for &(a, b) in edges {
        if let (Some(&ia), Some(&ib)) = (index.get(&a), index.get(&b)) {
            graph.update_edge(ia, ib, ());
        }
    }
    let mut comps: Vec<Vec<usize>> = tarjan_scc(&graph)
        .into_iter()
        .map(|c| {
            let mut c: Vec<usize> = c.into_iter().map(|ix| graph[ix]).collect();
            c.sort_unstable();
            c
        })
        .collect();
    comps.sort();
    comps
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsistencyError {
    #[error("{0}: no outgoing routing row to split the aggregate rate over")]
    MissingRoutingRow(StationId),
    #[error("{station}: aggregate rate {value} must be > 0")]
    NonPositiveRate { station: StationId, value: f64 },
}

/// Replaces every aggregate station rate μ_i with per-destination rates
/// μ_ij = μ_i · p_ij. Stations that already carry a split are untouched.
pub fn derive_mu_split(spec: &NetworkSpec) -> Result<NetworkSpec, ConsistencyError> {
    let mut out = spec.clone();
    for st in &mut out.stations {
        let ServiceRates::Aggregate(mu) = st.rates else {
            continue;
        };
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(ConsistencyError::NonPositiveRate {
                station: st.id,
                value: mu,
            });
        }
        let split: BTreeMap<StationId, f64> = spec
            .outgoing(st.id)
            .filter(|l| l.routing_prob > 0.0)
            .map(|l| (l.dest, mu * l.routing_prob))
            .collect();
        if split.is_empty() {
            return Err(ConsistencyError::MissingRoutingRow(st.id));
        }
        st.rates = ServiceRates::PerDestination(split);
    }
    Ok(out)
}

/// Convenience constructor used across tests and generators: builds a network
/// from aggregate station rates and a list of `(origin, dest, p, travel_time)`
/// links, then splits the rates.
pub fn network_from_rates(
    mu: &[f64],
    links: &[(usize, usize, f64, f64)],
    fleet_size: usize,
) -> Result<NetworkSpec, ConsistencyError> {
    let stations = mu
        .iter()
        .enumerate()
        .map(|(i, &m)| StationSpec::with_aggregate(StationId(i), m))
        .collect();
    let links = links
        .iter()
        .enumerate()
        .map(|(k, &(o, d, p, t))| DelayLink {
            id: LinkId(k),
            origin: StationId(o),
            dest: StationId(d),
            mean_travel_time: t,
            routing_prob: p,
        })
        .collect();
    derive_mu_split(&NetworkSpec {
        stations,
        links,
        fleet_size,
    })
}
