use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::parse::{parse_alpha_list, parse_rate_list};
use super::CliError;
use crate::netmodel::{derive_mu_split, validate, NetworkSpec, StationId};
use crate::pfsolver::{
    availability_table_csv, check_spec, convolution_up_to, metrics_csv, metrics_for_population, metrics_json,
    solve_traffic, Complements, SolveError,
};
use crate::relocq::{bound_check, chain_solve, routing_prob, stationary, truncation_for, RelocError, RelocQueueParams};
use crate::simkit::{
    compare_policies, parse_policies, report_csv, reports_json, run_network, variation_csv, SimConfig, SimError,
};
use crate::tracekit::{
    anomalies_jsonl, cell_stats_csv, estimate, generate_trace, mu_ccdf, mu_ccdf_csv, parse_events, write_events,
    TraceError, TraceGenOptions,
};

/// Files a command produced, named relative to the output directory, plus
/// the input files it read.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(String, Vec<u8>)>,
    pub inputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub summary: String,
}

impl Outcome {
    fn file(&mut self, name: impl Into<String>, body: impl Into<Vec<u8>>) {
        self.files.push((name.into(), body.into()));
    }
}

fn read_spec(path: &Path) -> Result<NetworkSpec, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let spec = NetworkSpec::from_json_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let spec = derive_mu_split(&spec).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let violations = validate(&spec);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| format!("  - {v}")).collect();
        return Err(CliError::input(format!(
            "{} is not a valid network:\n{}",
            path.display(),
            list.join("\n")
        )));
    }
    Ok(spec)
}

fn solve_error(e: SolveError) -> CliError {
    match e {
        SolveError::Invalid(_) | SolveError::Ergodicity => CliError::input(e.to_string()),
        _ => CliError::numeric(e.to_string()),
    }
}

fn sim_error(e: SimError) -> CliError {
    CliError::input(e.to_string())
}

fn trace_error(e: TraceError) -> CliError {
    match e {
        TraceError::EmptyNetwork(_) => CliError::estimation(e.to_string()),
        _ => CliError::input(e.to_string()),
    }
}

fn reloc_error(e: RelocError) -> CliError {
    match e {
        RelocError::Unstable { .. } => CliError::instability(e.to_string()),
        _ => CliError::input(e.to_string()),
    }
}

fn side_label(side: f64) -> String {
    format!("{side}m")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveParams {
    pub spec: PathBuf,
    /// Fleet sizes; the network's own when absent.
    #[serde(default)]
    pub fleet: Option<Vec<usize>>,
}

pub fn exec_solve(p: &SolveParams) -> Result<Outcome, CliError> {
    let spec = read_spec(&p.spec)?;
    let sizes = p.fleet.clone().unwrap_or_else(|| vec![spec.fleet_size]);
    if sizes.is_empty() {
        return Err(CliError::input("no fleet size given"));
    }
    check_spec(&spec).map_err(solve_error)?;
    let e = solve_traffic(&spec).map_err(solve_error)?;
    let max_pop = sizes.iter().copied().max().unwrap_or(0);
    let g = convolution_up_to(&spec, &e, max_pop).map_err(solve_error)?;
    let complements = Complements::compute(&spec, &e, &g);

    let mut out = Outcome {
        inputs: vec![p.spec.clone()],
        ..Outcome::default()
    };
    let mut sweep = Vec::new();
    for &n in &sizes {
        let m = metrics_for_population(&spec, &e, &g, &complements, n).map_err(solve_error)?;
        out.file(format!("metrics_N{n}.csv"), metrics_csv(&spec, &e, &m));
        out.file(format!("metrics_N{n}.json"), metrics_json(&e, &m));
        sweep.push(m);
    }
    out.file("availability.csv", availability_table_csv(&sweep));
    out.summary = sweep
        .iter()
        .map(|m| {
            let mean = m.utilization.iter().sum::<f64>() / m.utilization.len() as f64;
            format!("N={}: mean availability {mean:.4}", m.population)
        })
        .collect::<Vec<_>>()
        .join("\n");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateParams {
    pub trace: PathBuf,
    #[serde(default = "default_sides")]
    pub cell_side: Vec<f64>,
    /// Number of cars; distinct vehicles in the trace when absent.
    #[serde(default)]
    pub fleet: Option<usize>,
}

fn default_sides() -> Vec<f64> {
    vec![250.0]
}

pub fn exec_estimate(p: &EstimateParams) -> Result<Outcome, CliError> {
    let file = std::fs::File::open(&p.trace)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", p.trace.display())))?;
    let parsed = parse_events(std::io::BufReader::new(file)).map_err(trace_error)?;
    if parsed.events.is_empty() {
        return Err(CliError::input(format!(
            "{}: no valid events ({} rejected rows)",
            p.trace.display(),
            parsed.rejects.len()
        )));
    }
    if p.cell_side.is_empty() {
        return Err(CliError::input("no cell side given"));
    }

    let mut out = Outcome {
        inputs: vec![p.trace.clone()],
        ..Outcome::default()
    };
    let rejects: String = parsed
        .rejects
        .iter()
        .map(|r| serde_json::to_string(r).expect("reject serializes") + "\n")
        .collect();
    out.file("rejects.jsonl", rejects);
    let mut lines = Vec::new();
    for &side in &p.cell_side {
        let est = estimate(&parsed.events, side, p.fleet).map_err(trace_error)?;
        let label = side_label(side);
        out.file(format!("spec_{label}.json"), est.network.spec.to_json_string());
        out.file(format!("cells_{label}.csv"), cell_stats_csv(&est.stats));
        out.file(format!("mu_ccdf_{label}.csv"), mu_ccdf_csv(&mu_ccdf(&est.stats)));
        out.file(
            format!("anomalies_{label}.jsonl"),
            anomalies_jsonl(&est.extraction.anomalies),
        );
        let cells: Vec<_> = est.network.station_cells.iter().map(|c| [c.row, c.col]).collect();
        out.file(
            format!("stations_{label}.json"),
            serde_json::to_string_pretty(&cells).expect("cells serialize"),
        );
        lines.push(format!(
            "{label}: {} stations, {} trips, {} anomalies",
            est.network.spec.num_stations(),
            est.extraction.trips.len(),
            est.extraction.anomalies.len()
        ));
    }
    out.summary = lines.join("\n");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub spec: PathBuf,
    #[serde(default = "default_policies")]
    pub policy: Vec<String>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub warmup: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub fleet: Option<usize>,
    #[serde(default)]
    pub independent_train_travel: bool,
}

fn default_policies() -> Vec<String> {
    vec!["none".into()]
}

fn default_horizon() -> f64 {
    1000.0
}

fn default_reps() -> usize {
    SimConfig::DEFAULT_REPLICATIONS
}

pub fn exec_simulate(p: &SimulateParams) -> Result<Outcome, CliError> {
    let mut spec = read_spec(&p.spec)?;
    if let Some(n) = p.fleet {
        spec = spec.with_fleet(n);
    }
    let policies = parse_policies(&p.policy.join(",")).map_err(|e| CliError::input(e.to_string()))?;
    let mut config = SimConfig::new(spec, p.horizon, p.seed);
    config.warmup = p.warmup;
    config.replications = p.reps;
    config.independent_train_travel = p.independent_train_travel;
    config.prepare().map_err(sim_error)?;

    let mut out = Outcome {
        inputs: vec![p.spec.clone()],
        seed: Some(p.seed),
        ..Outcome::default()
    };
    let reports = if policies.len() >= 2 {
        let cmp = compare_policies(&config, &policies).map_err(sim_error)?;
        out.file("variation.csv", variation_csv(&cmp));
        cmp.reports
    } else {
        vec![run_network(&config.with_policy(policies[0].clone())).map_err(sim_error)?]
    };
    out.file("report.csv", report_csv(&reports));
    out.file("report.json", reports_json(&reports));
    out.summary = reports
        .iter()
        .map(|r| {
            let mean = r.availability.iter().sum::<f64>() / r.availability.len() as f64;
            format!("{}: mean availability {mean:.4}", r.policy)
        })
        .collect::<Vec<_>>()
        .join("\n");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelocqParams {
    pub lambda: f64,
    /// Per-destination rates, `1:0.2,2:0.8`.
    pub mu: String,
    /// `uniform`, `uniform:<c>` or `1:1,2:0.5`; no relocation when absent.
    #[serde(default)]
    pub alpha: Option<String>,
    #[serde(default)]
    pub truncation: Option<usize>,
    #[serde(default = "default_bound_draws")]
    pub bound_draws: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_bound_draws() -> usize {
    100_000
}

const MAX_CHAIN_STATES: usize = 1_000_000;

pub fn exec_relocq(p: &RelocqParams) -> Result<Outcome, CliError> {
    let mu = parse_rate_list(&p.mu).map_err(|e| CliError::input(e.to_string()))?;
    let dests: Vec<StationId> = mu.keys().copied().collect();
    let alpha = match &p.alpha {
        Some(a) => parse_alpha_list(a, &dests).map_err(|e| CliError::input(e.to_string()))?,
        None => dests.iter().map(|&d| (d, 0.0)).collect(),
    };
    let params = RelocQueueParams::new(p.lambda, mu, alpha).map_err(reloc_error)?;
    let sol = stationary(&params).map_err(reloc_error)?;
    let routing = routing_prob(&params).map_err(reloc_error)?;
    let truncation = p
        .truncation
        .unwrap_or_else(|| truncation_for(&params).min(MAX_CHAIN_STATES));
    let chain = chain_solve(&params, truncation);
    let chain_mean: f64 = chain.iter().enumerate().map(|(n, c)| n as f64 * c).sum();
    let bound = bound_check(p.bound_draws, p.seed);
    let first_alpha = params.alpha(dests[0]);
    let relocation_effect = !dests.iter().all(|&d| params.alpha(d) == first_alpha);

    let mut out = Outcome {
        seed: Some(p.seed),
        ..Outcome::default()
    };
    let doc = json!({
        "params": &params,
        "gamma_total": params.gamma_total(),
        "closed_form": {
            "pi0": sol.pi[0],
            "utilization": sol.utilization,
            "expected_cars": sol.expected_cars,
            "zeta": sol.zeta,
            "rho": sol.rho,
            "tail_bound": sol.tail_bound,
        },
        "chain_solve": {
            "truncation": truncation,
            "pi0": chain[0],
            "utilization": 1.0 - chain[0],
            "expected_cars": chain_mean,
        },
        "routing": &routing,
        "relocation_effect": relocation_effect,
        "bound_check": &bound,
    });
    out.file(
        "relocq.json",
        serde_json::to_string_pretty(&doc).expect("relocq serializes"),
    );

    let mut dist = String::from("n,closed_form,chain_solve\n");
    for (n, c) in chain.iter().enumerate() {
        dist.push_str(&format!("{n},{},{c}\n", sol.prob(n)));
    }
    out.file("distribution.csv", dist);

    let mut rows = String::from("dest,baseline,routing,mixture_form,increment\n");
    for (d, b) in &routing.baseline {
        rows.push_str(&format!(
            "{},{b},{},{},{}\n",
            d.0,
            routing.by_dest[d],
            routing.mixture_form[d],
            routing.increment(*d)
        ));
    }
    out.file("routing.csv", rows);

    let mut summary = vec![format!(
        "zeta {:.6}, rho {:.6}, utilization {:.6}, expected cars {:.6}",
        sol.zeta, sol.rho, sol.utilization, sol.expected_cars
    )];
    for (d, p) in &routing.by_dest {
        summary.push(format!("p[{}] = {p:.6} (baseline {:.6})", d.0, routing.baseline[d]));
    }
    if !relocation_effect {
        summary.push("no relocation effect: equal alpha for every destination".into());
    }
    summary.push(format!(
        "largest routing increment over {} draws: {:.6}",
        bound.draws, bound.max_increment
    ));
    out.summary = summary.join("\n");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenTraceParams {
    pub spec: PathBuf,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_side")]
    pub cell_side: f64,
}

fn default_side() -> f64 {
    250.0
}

pub fn exec_gen_trace(p: &GenTraceParams) -> Result<Outcome, CliError> {
    let spec = read_spec(&p.spec)?;
    let mut opts = TraceGenOptions::new(p.horizon, p.seed);
    opts.cell_side_m = p.cell_side;
    let trace = generate_trace(&spec, &opts).map_err(sim_error)?;
    let mut body = Vec::new();
    write_events(&trace.events, &mut body).map_err(|e| CliError::input(e.to_string()))?;
    let mut out = Outcome {
        inputs: vec![p.spec.clone()],
        seed: Some(p.seed),
        ..Outcome::default()
    };
    out.file("trace.csv", body);
    out.summary = format!(
        "{} events, {} completed trips",
        trace.events.len(),
        trace.simulated_trips
    );
    Ok(out)
}
