//! Experiment configuration: a single JSON file resolved into validated
//! domain objects. Errors name the offending key.

use serde::Deserialize;
use thiserror::Error;

use greeneq_core::field::{FieldPiece, FieldValue};
use greeneq_core::{CompactSet, ExternalField, GreenDomain};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config error at \"{key}\": {message}")]
    Invalid { key: &'static str, message: String },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, message: message.into() }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub domain: String,
    pub k: KSpec,
    pub field: FieldSpec,
    pub cap: f64,
    pub n_list: Vec<usize>,
    #[serde(default)]
    pub grid: GridSpec,
    pub solver: SolverSpec,
    pub pipeline: String,
    /// Explicit node positions (natural parameter) for the `nodes` pipeline;
    /// defaults to partition midpoints.
    #[serde(default)]
    pub nodes: Option<Vec<f64>>,
    /// Support of the reference measure for the `constrained` pipeline;
    /// defaults to all of `k`.
    #[serde(default)]
    pub lambda_segments: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub r_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub greedy_n_max: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KSpec {
    #[serde(default)]
    pub segments: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub arcs: Option<Vec<ArcSpec>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcSpec {
    pub radius: f64,
    pub theta0: f64,
    pub theta1: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    #[serde(default)]
    pub pieces: Vec<FieldPieceSpec>,
    pub default: FieldValue,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldPieceSpec {
    pub lo: f64,
    pub hi: f64,
    pub value: FieldValue,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    /// Candidate points for position optimization.
    pub candidates: usize,
    /// Fine grid for residual / minimum scans.
    pub check: usize,
    /// Highest polynomial moment for weak-star diagnostics.
    pub moments: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { candidates: 256, check: 2001, moments: 8 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    /// Master seed; required because restarts are randomized.
    pub seed: Option<u64>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    #[serde(default = "default_mass_random_starts")]
    pub mass_random_starts: usize,
    #[serde(default)]
    pub tol: Option<f64>,
}

fn default_restarts() -> usize {
    8
}
fn default_max_rounds() -> usize {
    60
}
fn default_mass_random_starts() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    Free,
    Nodes,
    Greedy,
    Constrained,
    VerifyAll,
    ScanR,
}

impl Pipeline {
    pub fn parse(s: &str) -> Option<Pipeline> {
        match s {
            "free" => Some(Pipeline::Free),
            "nodes" => Some(Pipeline::Nodes),
            "greedy" => Some(Pipeline::Greedy),
            "constrained" => Some(Pipeline::Constrained),
            "verify-all" => Some(Pipeline::VerifyAll),
            "scan-r" => Some(Pipeline::ScanR),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Pipeline::Free => "free",
            Pipeline::Nodes => "nodes",
            Pipeline::Greedy => "greedy",
            Pipeline::Constrained => "constrained",
            Pipeline::VerifyAll => "verify-all",
            Pipeline::ScanR => "scan-r",
        }
    }
}

/// A fully validated experiment description.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub domain: GreenDomain,
    pub set: CompactSet,
    pub field: ExternalField,
    pub cap: f64,
    pub n_list: Vec<usize>,
    pub grid: GridSpec,
    pub seed: u64,
    pub restarts: usize,
    pub max_rounds: usize,
    pub mass_random_starts: usize,
    pub tol: Option<f64>,
    pub pipeline: Pipeline,
    pub explicit_nodes: Option<Vec<f64>>,
    pub lambda_set: Option<CompactSet>,
    pub r_grid: Option<Vec<f64>>,
    pub greedy_n_max: usize,
    pub output_dir: String,
}

pub fn parse_config(text: &str) -> Result<Experiment, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    resolve(raw)
}

pub fn resolve(raw: RawConfig) -> Result<Experiment, ConfigError> {
    let domain = match raw.domain.as_str() {
        "half_plane" => GreenDomain::RightHalfPlane,
        "unit_disk" => GreenDomain::UnitDisk,
        other => return Err(invalid("domain", format!("unknown domain \"{other}\""))),
    };

    let set = build_set(domain, &raw.k, "k")?;

    if !(raw.cap > 0.0 && raw.cap.is_finite()) {
        return Err(invalid("cap", format!("mass cap must be positive, got {}", raw.cap)));
    }

    if raw.n_list.is_empty() {
        return Err(invalid("n_list", "at least one N is required"));
    }
    if raw.n_list.iter().any(|&n| n < 2) {
        return Err(invalid("n_list", "every N must be >= 2"));
    }
    if raw.n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("n_list", "N values must be strictly increasing"));
    }

    let pipeline = Pipeline::parse(&raw.pipeline)
        .ok_or_else(|| invalid("pipeline", format!("unknown pipeline \"{}\"", raw.pipeline)))?;

    let randomized = raw.solver.restarts > 0 || raw.solver.mass_random_starts > 0;
    let seed = match raw.solver.seed {
        Some(s) => s,
        None if randomized => {
            return Err(invalid(
                "solver.seed",
                "a seed is required when randomized restarts are enabled",
            ))
        }
        None => 0,
    };

    let pieces: Vec<FieldPiece> = raw
        .field
        .pieces
        .iter()
        .map(|p| FieldPiece { lo: p.lo, hi: p.hi, value: p.value.clone() })
        .collect();
    let field = ExternalField::new(set.clone(), pieces, raw.field.default.clone())
        .map_err(|e| invalid("field", e.to_string()))?;

    let lambda_set = match &raw.lambda_segments {
        None => None,
        Some(segs) => {
            if domain != GreenDomain::RightHalfPlane {
                return Err(invalid("lambda_segments", "only supported on the half-plane"));
            }
            let pairs: Vec<(f64, f64)> = segs.iter().map(|s| (s[0], s[1])).collect();
            Some(
                CompactSet::segments(&pairs)
                    .map_err(|e| invalid("lambda_segments", e.to_string()))?,
            )
        }
    };

    if let Some(r_grid) = &raw.r_grid {
        if r_grid.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(invalid("r_grid", "cap values must be positive"));
        }
        if r_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("r_grid", "cap values must be strictly increasing"));
        }
    } else if pipeline == Pipeline::ScanR {
        return Err(invalid("r_grid", "required for the scan-r pipeline"));
    }

    if raw.grid.candidates < 2 {
        return Err(invalid("grid.candidates", "need at least 2 candidate points"));
    }
    if raw.grid.check < 2 {
        return Err(invalid("grid.check", "need at least 2 check points"));
    }

    if let Some(nodes) = &raw.nodes {
        if nodes.len() < 2 {
            return Err(invalid("nodes", "need at least 2 nodes"));
        }
        let mut sorted = nodes.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.windows(2).any(|w| (w[1] - w[0]).abs() <= 1e-14) {
            return Err(invalid("nodes", "node positions must be pairwise distinct"));
        }
    }

    let greedy_n_max = raw.greedy_n_max.unwrap_or(128);
    if greedy_n_max < 2 {
        return Err(invalid("greedy_n_max", "must be >= 2"));
    }

    Ok(Experiment {
        domain,
        set,
        field,
        cap: raw.cap,
        n_list: raw.n_list,
        grid: raw.grid,
        seed,
        restarts: raw.solver.restarts,
        max_rounds: raw.solver.max_rounds,
        mass_random_starts: raw.solver.mass_random_starts,
        tol: raw.solver.tol,
        pipeline,
        explicit_nodes: raw.nodes,
        lambda_set,
        r_grid: raw.r_grid,
        greedy_n_max,
        output_dir: raw.output_dir.unwrap_or_else(|| "out".into()),
    })
}

fn build_set(domain: GreenDomain, k: &KSpec, key: &'static str) -> Result<CompactSet, ConfigError> {
    match (domain, &k.segments, &k.arcs) {
        (GreenDomain::RightHalfPlane, Some(segs), None) => {
            let pairs: Vec<(f64, f64)> = segs.iter().map(|s| (s[0], s[1])).collect();
            CompactSet::segments(&pairs).map_err(|e| invalid(key, e.to_string()))
        }
        (GreenDomain::UnitDisk, None, Some(arcs)) => {
            let triples: Vec<(f64, f64, f64)> =
                arcs.iter().map(|a| (a.radius, a.theta0, a.theta1)).collect();
            CompactSet::arcs(&triples).map_err(|e| invalid(key, e.to_string()))
        }
        (GreenDomain::RightHalfPlane, _, _) => {
            Err(invalid(key, "half-plane sets are given as \"segments\""))
        }
        (GreenDomain::UnitDisk, _, _) => Err(invalid(key, "unit-disk sets are given as \"arcs\"")),
    }
}
