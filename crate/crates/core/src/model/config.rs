use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

use super::grid::{build_grid, Grid};
use super::potential::{PotentialFamily, PotentialSpec, ResonanceSampling};
use crate::error::{BeamError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum CutoffChoice {
    Fixed(f64),
    #[serde(serialize_with = "auto_str")]
    Auto,
}

fn auto_str<S: serde::Serializer>(s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str("auto")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub max_nodes: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { rel_tol: 1e-8, max_nodes: 1 << 28 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub grid: Grid,
    pub potential: PotentialSpec,
    pub cutoff: CutoffChoice,
    pub quadrature: QuadratureConfig,
    pub rank_tol: f64,
    pub output_dir: PathBuf,
    pub output_format: OutputFormat,
}

impl ExperimentConfig {
    pub const DEFAULT_RANK_TOL: f64 = 1e-8;

    pub fn new(grid: Grid, potential: PotentialSpec) -> Self {
        ExperimentConfig {
            grid,
            potential,
            cutoff: CutoffChoice::Auto,
            quadrature: QuadratureConfig::default(),
            rank_tol: Self::DEFAULT_RANK_TOL,
            output_dir: PathBuf::from("beamlab-out"),
            output_format: OutputFormat::Csv,
        }
    }

    /// Echo of every resolved value, embedded in emitted artifacts.
    pub fn to_json(&self) -> Value {
        let mut params = serde_json::to_value(&self.potential).unwrap_or(Value::Null);
        let family = params.as_object_mut().and_then(|m| m.remove("family")).unwrap_or(Value::Null);
        json!({
            "grid": {"L": self.grid.half_length, "n": self.grid.n, "h": self.grid.h},
            "potential": {"family": family, "params": params},
            "cutoff": {"lambda0": self.cutoff},
            "quadrature": self.quadrature,
            "rank_tol": self.rank_tol,
            "output": {"dir": self.output_dir, "format": self.output_format},
        })
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| BeamError::invalid("config", format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let root: Value = serde_json::from_str(text).map_err(|e| BeamError::invalid("config", e.to_string()))?;
    let root = object(&root, "config")?;
    known_keys(root, "", &["grid", "potential", "cutoff", "quadrature", "rank_tol", "output"])?;

    let grid_obj = object(root.get("grid").ok_or_else(|| missing("grid"))?, "grid")?;
    known_keys(grid_obj, "grid.", &["L", "n"])?;
    let l = number(grid_obj.get("L").ok_or_else(|| missing("grid.L"))?, "grid.L")?;
    let n = integer(grid_obj.get("n").ok_or_else(|| missing("grid.n"))?, "grid.n")?;
    let grid = build_grid(l, n)?;

    let potential = parse_potential(root.get("potential").ok_or_else(|| missing("potential"))?)?;
    let mut cfg = ExperimentConfig::new(grid, potential);

    if let Some(c) = root.get("cutoff") {
        let c = object(c, "cutoff")?;
        known_keys(c, "cutoff.", &["lambda0"])?;
        if let Some(l0) = c.get("lambda0") {
            cfg.cutoff = match l0 {
                Value::String(s) if s == "auto" => CutoffChoice::Auto,
                Value::Number(_) => {
                    let v = number(l0, "cutoff.lambda0")?;
                    if !(v > 0.0) {
                        return Err(BeamError::invalid("cutoff.lambda0", "must be positive"));
                    }
                    CutoffChoice::Fixed(v)
                }
                _ => return Err(BeamError::invalid("cutoff.lambda0", "expected a number or \"auto\"")),
            };
        }
    }
    if let Some(q) = root.get("quadrature") {
        let q = object(q, "quadrature")?;
        known_keys(q, "quadrature.", &["rel_tol", "max_nodes"])?;
        if let Some(v) = q.get("rel_tol") {
            let v = number(v, "quadrature.rel_tol")?;
            if !(v > 0.0 && v < 1.0) {
                return Err(BeamError::invalid("quadrature.rel_tol", "must lie in (0, 1)"));
            }
            cfg.quadrature.rel_tol = v;
        }
        if let Some(v) = q.get("max_nodes") {
            let v = integer(v, "quadrature.max_nodes")?;
            if v < 32 {
                return Err(BeamError::invalid("quadrature.max_nodes", "must be >= 32"));
            }
            cfg.quadrature.max_nodes = v;
        }
    }
    if let Some(r) = root.get("rank_tol") {
        let r = number(r, "rank_tol")?;
        if !(r > 0.0 && r < 1.0) {
            return Err(BeamError::invalid("rank_tol", "must lie in (0, 1)"));
        }
        cfg.rank_tol = r;
    }
    if let Some(o) = root.get("output") {
        let o = object(o, "output")?;
        known_keys(o, "output.", &["dir", "format"])?;
        if let Some(d) = o.get("dir") {
            cfg.output_dir = PathBuf::from(string(d, "output.dir")?);
        }
        if let Some(f) = o.get("format") {
            cfg.output_format = match string(f, "output.format")? {
                "csv" => OutputFormat::Csv,
                "json" => OutputFormat::Json,
                other => return Err(BeamError::invalid("output.format", format!("unknown format `{other}`"))),
            };
        }
    }
    Ok(cfg)
}

fn parse_potential(v: &Value) -> Result<PotentialSpec> {
    let p = object(v, "potential")?;
    known_keys(p, "potential.", &["family", "params"])?;
    let family = string(p.get("family").ok_or_else(|| missing("potential.family"))?, "potential.family")?;
    let empty = Map::new();
    let params = match p.get("params") {
        Some(v) => object(v, "potential.params")?,
        None => &empty,
    };
    let get = |key: &str| params.get(key);
    let req = |key: &str| -> Result<f64> {
        let field = format!("potential.params.{key}");
        number(get(key).ok_or_else(|| missing(&field))?, &field)
    };
    let (family, allowed): (PotentialFamily, &[&str]) = match family {
        "zero" => (PotentialFamily::Zero, &[]),
        "scaled_sech2" => (PotentialFamily::ScaledSech2 { a: req("a")? }, &["a"]),
        "embedded_example" => (PotentialFamily::EmbeddedExample, &[]),
        "resonance_example" => {
            (PotentialFamily::ResonanceExample { c: req("c")?, d: req("d")? }, &["c", "d", "sampling"])
        }
        "tabulated" => {
            let f = string(get("file").ok_or_else(|| missing("potential.params.file"))?, "potential.params.file")?;
            (PotentialFamily::Tabulated { file: PathBuf::from(f) }, &["file"])
        }
        other => return Err(BeamError::invalid("potential.family", format!("unknown family `{other}`"))),
    };
    let mut all: Vec<&str> = allowed.to_vec();
    all.extend(["mu", "coupling"]);
    known_keys(params, "potential.params.", &all)?;

    let mut spec = PotentialSpec::new(family);
    if let Some(m) = get("mu") {
        spec.mu = number(m, "potential.params.mu")?;
    }
    if let Some(c) = get("coupling") {
        spec.coupling = number(c, "potential.params.coupling")?;
    }
    if let Some(s) = get("sampling") {
        spec.sampling = match string(s, "potential.params.sampling")? {
            "collocated" => ResonanceSampling::Collocated,
            "analytic" => ResonanceSampling::Analytic,
            other => {
                return Err(BeamError::invalid("potential.params.sampling", format!("unknown sampling `{other}`")))
            }
        };
    }
    spec.validate()?;
    Ok(spec)
}

fn missing(field: &str) -> BeamError {
    BeamError::invalid(field, "missing required field")
}

fn object<'a>(v: &'a Value, field: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| BeamError::invalid(field, "expected an object"))
}

fn number(v: &Value, field: &str) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| BeamError::invalid(field, "expected a finite number"))
}

fn integer(v: &Value, field: &str) -> Result<usize> {
    v.as_u64().map(|x| x as usize).ok_or_else(|| BeamError::invalid(field, "expected a nonnegative integer"))
}

fn string<'a>(v: &'a Value, field: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| BeamError::invalid(field, "expected a string"))
}

fn known_keys(m: &Map<String, Value>, prefix: &str, allowed: &[&str]) -> Result<()> {
    for k in m.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(BeamError::invalid(format!("{prefix}{k}"), "unknown field"));
        }
    }
    Ok(())
}
