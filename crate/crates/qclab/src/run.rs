//! Run configurations, dispatch to the experiments, and versioned run records.
//!
//! A config is a TOML document:
//!
//! ```toml
//! command = "distance"
//! space = "heis"
//! seed = 7
//!
//! [params]
//! to = [1.0, 0.0, 0.0]
//! method = "both"
//! ```
//!
//! The `obstruction` and `bounded-loewner` commands read their parameters from
//! an `[obstruction]` table instead of `[params]`.

use crate::contacto::{jacobian_agreement, local_bilip_estimate, pullback_check, pushforward_horizontality_check, JacobianKind};
use crate::error::{Error, Result};
use crate::geodesics::{cc_distance_direct, cc_distance_graph, DirectOptions, DistanceResult};
use crate::modulus::{annulus_family_graph, q_modulus, CurveFamily, LoewnerSetup, ModulusOptions};
use crate::obstruction::{bounded_loewner_check, estimate_qi_constants, fit_qi, run_obstruction_experiment, ObstructionConfig, QiOptions};
use crate::output::{csv_bytes, write_atomic, SCHEMA_VERSION};
use crate::planar::{dilatation_estimate, shape_inclusion_fit, stretched_strip_growth, PlanarExample};
use crate::spaces::{Point3, SpaceId, SpaceModel};
use crate::volume::scaled_growth;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

/// Environment variable that overrides the output directory.
pub const OUTPUT_DIR_ENV: &str = "QCLAB_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Distance,
    BallVolume,
    GrowthFit,
    Modulus,
    Loewner,
    Obstruction,
    BoundedLoewner,
    ContactoCheck,
    QiEstimate,
    Planar,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Distance => "distance",
            Command::BallVolume => "ball-volume",
            Command::GrowthFit => "growth-fit",
            Command::Modulus => "modulus",
            Command::Loewner => "loewner",
            Command::Obstruction => "obstruction",
            Command::BoundedLoewner => "bounded-loewner",
            Command::ContactoCheck => "contacto-check",
            Command::QiEstimate => "qi-estimate",
            Command::Planar => "planar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::invalid("format", s, "one of json, csv")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Direct,
    Graph,
    #[default]
    Both,
}

impl FromStr for MethodChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(MethodChoice::Direct),
            "graph" => Ok(MethodChoice::Graph),
            "both" => Ok(MethodChoice::Both),
            _ => Err(Error::invalid("method", s, "one of direct, graph, both")),
        }
    }
}

/// Numeric parameters shared by the commands; each command reads the ones it
/// needs and fills the rest with defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub from: Option<[f64; 3]>,
    pub to: Option<[f64; 3]>,
    pub method: Option<MethodChoice>,
    /// Grid step.
    pub h: Option<f64>,
    pub center: Option<[f64; 3]>,
    pub radii: Option<Vec<f64>>,
    /// Grid steps per radius (volumes) or per unit scale (Loewner).
    pub cells: Option<f64>,
    #[serde(rename = "Q")]
    pub q: Option<f64>,
    pub t: Option<Vec<f64>>,
    pub scale: Option<f64>,
    /// Transverse half-width of the Loewner graph box, in units of `scale`.
    pub width: Option<f64>,
    pub r_in: Option<f64>,
    pub r_out: Option<f64>,
    pub tol: Option<f64>,
    pub samples: Option<usize>,
    pub pairs: Option<usize>,
    pub side: Option<f64>,
    pub ball_radius: Option<f64>,
    pub example: Option<PlanarExample>,
    pub z: Option<[f64; 2]>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub space: Option<SpaceId>,
    /// The single seed handed to every stochastic component.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub format: Format,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub obstruction: ObstructionConfig,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            space: None,
            seed: 0,
            format: Format::Json,
            output_dir: None,
            params: Params::default(),
            obstruction: ObstructionConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let at = match e.span() {
                Some(s) => text.get(s).unwrap_or("").to_string(),
                None => String::new(),
            };
            Error::Config(vec![Error::invalid("config", at, &msg)])
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every violated precondition, each naming key, value and constraint.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let p = &self.params;
        let mut positive = |name: &str, v: Option<f64>| {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    errs.push(Error::invalid(name, v, "must be finite and > 0"));
                }
            }
        };
        positive("h", p.h);
        positive("cells", p.cells);
        positive("scale", p.scale);
        positive("width", p.width);
        positive("r_in", p.r_in);
        positive("r_out", p.r_out);
        positive("tol", p.tol);
        positive("side", p.side);
        positive("ball_radius", p.ball_radius);
        for (name, list) in [("radii", &p.radii), ("t", &p.t)] {
            if let Some(v) = list {
                if v.is_empty() || v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                    errs.push(Error::invalid(name, format!("{v:?}"), "non-empty list of finite values > 0"));
                }
            }
        }
        for (name, pt) in [("from", p.from), ("to", p.to), ("center", p.center)] {
            if let Some(a) = pt {
                if a.iter().any(|x| !x.is_finite()) {
                    errs.push(Error::invalid(name, format!("{a:?}"), "coordinates must be finite"));
                }
            }
        }
        if let Some(q) = p.q {
            if !(q > 1.0 && q.is_finite()) {
                errs.push(Error::invalid("Q", q, "must be finite and > 1"));
            }
        }
        if let Some(l) = p.lambda {
            if !(l > 1.0 && l < 2.0) {
                errs.push(Error::invalid("lambda", l, "must lie in (1, 2)"));
            }
        }
        if let (Some(a), Some(b)) = (p.r_in, p.r_out) {
            if !(b > a) {
                errs.push(Error::invalid("r_out", b, "must exceed r_in"));
            }
        }
        match self.command {
            Command::Distance if p.to.is_none() => errs.push(Error::invalid("to", "missing", "required for distance")),
            Command::BallVolume | Command::GrowthFit => {
                let need = if self.command == Command::GrowthFit { 3 } else { 1 };
                match &p.radii {
                    None => errs.push(Error::invalid("radii", "missing", "required for volume commands")),
                    Some(r) if r.len() < need => {
                        errs.push(Error::invalid("radii", format!("{r:?}"), "growth-fit needs at least three radii"))
                    }
                    _ => {}
                }
                if let Some(c) = p.cells {
                    if c < 2.0 {
                        errs.push(Error::invalid("cells", c, "must be at least 2"));
                    }
                }
            }
            Command::QiEstimate => {
                if let Some(n) = p.pairs {
                    if n < 100 {
                        errs.push(Error::invalid("pairs", n, "at least 100 pairs required"));
                    }
                }
            }
            Command::Planar => {
                if p.example.is_none() {
                    errs.push(Error::invalid("example", "missing", "one of exp-half-strip, exp-strip, stretch"));
                }
            }
            Command::Obstruction | Command::BoundedLoewner => {
                if let Err(e) = self.obstruction.validate() {
                    errs.push(e);
                }
            }
            _ => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    fn space_or(&self, default: SpaceId) -> SpaceModel {
        SpaceModel::new(self.space.unwrap_or(default))
    }

    /// Output directory: the environment override, then the config, then `qclab-out`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        if let Some(d) = std::env::var_os(OUTPUT_DIR_ENV) {
            return PathBuf::from(d);
        }
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("qclab-out"))
    }
}

/// Reads and validates a config file.
pub fn validate_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_toml_str(&text)
}

/// Plot-ready rows; the header names units where there are any.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub schema: String,
    pub version: String,
    pub command: Command,
    pub seed: u64,
    pub config: RunConfig,
    pub result: Value,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub table: Option<Table>,
}

impl RunRecord {
    /// The record without the wall time; identical for identical config and seed.
    pub fn payload_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Value::Object(m) = &mut v {
            m.remove("wall_time_s");
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

fn fmt(x: f64) -> String {
    format!("{x:?}")
}

pub fn dispatch(cfg: &RunConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let (result, table) = match cfg.command {
        Command::Distance => run_distance(cfg)?,
        Command::BallVolume | Command::GrowthFit => run_volume(cfg)?,
        Command::Modulus => run_modulus(cfg)?,
        Command::Loewner => run_loewner(cfg)?,
        Command::Obstruction => run_obstruction(cfg)?,
        Command::BoundedLoewner => run_bounded_loewner(cfg)?,
        Command::ContactoCheck => run_contacto(cfg)?,
        Command::QiEstimate => run_qi(cfg)?,
        Command::Planar => run_planar(cfg)?,
    };
    Ok(RunRecord {
        schema: SCHEMA_VERSION.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: cfg.command,
        seed: cfg.seed,
        config: cfg.clone(),
        result,
        wall_time_s: start.elapsed().as_secs_f64(),
        table,
    })
}

/// Writes `<command>.json` and, for CSV format, `<command>.csv`; returns the paths.
pub fn write_record(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    let name = record.command.name();
    let json_path = dir.join(format!("{name}.json"));
    let mut text = serde_json::to_string_pretty(record)?;
    text.push('\n');
    write_atomic(&json_path, text.as_bytes())?;
    let mut out = vec![json_path];
    if record.config.format == Format::Csv {
        if let Some(t) = &record.table {
            let header: Vec<&str> = t.header.iter().map(String::as_str).collect();
            let path = dir.join(format!("{name}.csv"));
            write_atomic(&path, &csv_bytes(&header, &t.rows)?)?;
            out.push(path);
        }
    }
    Ok(out)
}

type Outcome = (Value, Option<Table>);

fn run_distance(cfg: &RunConfig) -> Result<Outcome> {
    let p = &cfg.params;
    let space = cfg.space_or(SpaceId::Heisenberg);
    let from = Point3::from_array(p.from.unwrap_or([0.0; 3]));
    let to = Point3::from_array(p.to.unwrap_or([0.0; 3]));
    let method = p.method.unwrap_or_default();
    let h = p.h.unwrap_or(0.05);
    let mut results: Vec<DistanceResult> = Vec::new();
    if method != MethodChoice::Graph {
        let opts = DirectOptions { seed: cfg.seed, ..Default::default() };
        results.push(cc_distance_direct(&space, from, to, &opts)?);
    }
    if method != MethodChoice::Direct {
        results.push(cc_distance_graph(&space, from, to, h)?);
    }
    if results.len() == 2 {
        let gap = (results[0].value - results[1].value).abs();
        for r in results.iter_mut() {
            r.gap_hint = Some(gap);
        }
    }
    let mut t = Table::new(&["method", "distance", "endpoint_error"]);
    for r in &results {
        t.push(vec![format!("{:?}", r.method).to_lowercase(), fmt(r.value), fmt(r.endpoint_error)]);
    }
    Ok((json!({ "space": space.id, "from": from, "to": to, "results": results }), Some(t)))
}

fn run_volume(cfg: &RunConfig) -> Result<Outcome> {
    let p = &cfg.params;
    let space = cfg.space_or(SpaceId::Heisenberg);
    let center = Point3::from_array(p.center.unwrap_or([0.0; 3]));
    let radii = p.radii.clone().unwrap_or_default();
    let cells = p.cells.unwrap_or(8.0);
    let mut t = Table::new(&["radius", "volume", "method", "h"]);
    let (fit, rows) = if cfg.command == Command::GrowthFit {
        let (fit, rows) = scaled_growth(&space, center, &radii, cells)?;
        (Some(fit), rows)
    } else {
        let rows = crate::volume::scaled_ball_volumes(&space, center, &radii, cells, crate::geodesics::DEFAULT_MAX_NODES)?;
        (None, rows)
    };
    for r in &rows {
        t.push(vec![fmt(r.radius), fmt(r.volume), r.method.clone(), fmt(r.h)]);
    }
    Ok((json!({ "space": space.id, "center": center, "rows": rows, "fit": fit }), Some(t)))
}

fn modulus_options(p: &Params) -> ModulusOptions {
    let mut o = ModulusOptions::default();
    if let Some(tol) = p.tol {
        o.tol = tol;
    }
    o
}

fn run_modulus(cfg: &RunConfig) -> Result<Outcome> {
    let p = &cfg.params;
    let (r_in, r_out) = (p.r_in.unwrap_or(1.0), p.r_out.unwrap_or(2.0));
    let h = p.h.unwrap_or(0.02);
    let q = p.q.unwrap_or(2.0);
    let (g, e, f) = annulus_family_graph(r_in, r_out, h)?;
    let fam = CurveFamily::new(&g, e, f)?;
    let m = q_modulus(&fam, q, &modulus_options(p))?;
    // conformal modulus of the round annulus, only for Q = 2
    let oracle = (q == 2.0).then(|| 2.0 * std::f64::consts::PI / (r_out / r_in).ln());
    let mut t = Table::new(&["Q", "upper", "lower", "relative_gap", "oracle"]);
    t.push(vec![fmt(q), fmt(m.upper), fmt(m.lower), fmt(m.relative_gap), oracle.map(fmt).unwrap_or_default()]);
    let value = json!({
        "family": "annulus",
        "r_in": r_in,
        "r_out": r_out,
        "h": h,
        "nodes": g.node_count(),
        "Q": q,
        "modulus": m,
        "oracle": oracle,
    });
    Ok((value, Some(t)))
}

fn run_loewner(cfg: &RunConfig) -> Result<Outcome> {
    let p = &cfg.params;
    let space = cfg.space_or(SpaceId::Heisenberg);
    let q = p.q.unwrap_or_else(|| space.local_dimension());
    let ts = p.t.clone().unwrap_or_else(|| vec![1.0, 0.5, 0.25]);
    let scale = p.scale.unwrap_or(1.0);
    let t_max = ts.iter().copied().fold(0.0, f64::max);
    let setup = LoewnerSetup::new(space, scale, t_max, p.cells.unwrap_or(16.0), p.width.unwrap_or(0.5))?;
    let opts = modulus_options(p);
    let mut samples = Vec::new();
    let mut t = Table::new(&["t", "separation", "min_diam", "upper", "lower"]);
    for &ti in &ts {
        let s = setup.sample(q, ti, &opts)?;
        t.push(vec![fmt(ti), fmt(s.separation), fmt(s.min_diam), fmt(s.modulus.upper), fmt(s.modulus.lower)]);
        samples.push(s);
    }
    let value = json!({ "space": space.id, "Q": q, "scale": scale, "nodes": setup.graph.node_count(), "samples": samples });
    Ok((value, Some(t)))
}

fn obstruction_config(cfg: &RunConfig) -> ObstructionConfig {
    ObstructionConfig { seed: cfg.seed, ..cfg.obstruction.clone() }
}

fn run_obstruction(cfg: &RunConfig) -> Result<Outcome> {
    let report = run_obstruction_experiment(&obstruction_config(cfg))?;
    let mut t = Table::new(&[
        "n",
        "rt_upper",
        "rt_lower",
        "rt_separation",
        "h_diam_e",
        "h_diam_f",
        "h_separation",
        "h_upper",
        "h_lower",
    ]);
    for (s, i) in report.source.iter().zip(&report.image) {
        t.push(vec![
            fmt(s.n),
            fmt(s.upper_nested),
            fmt(s.lower_nested),
            fmt(s.separation),
            fmt(i.diam_e),
            fmt(i.diam_f),
            fmt(i.separation),
            fmt(i.upper),
            fmt(i.lower_nested),
        ]);
    }
    Ok((serde_json::to_value(&report)?, Some(t)))
}

fn run_bounded_loewner(cfg: &RunConfig) -> Result<Outcome> {
    let space = cfg.space.unwrap_or(SpaceId::RotoTranslation);
    let ts = cfg.params.t.clone().unwrap_or_else(|| vec![1.0, 0.5]);
    let report = bounded_loewner_check(space, &obstruction_config(cfg), &ts)?;
    let mut t = Table::new(&["t", "n", "separation", "min_diam", "upper", "lower"]);
    for r in &report.rows {
        t.push(vec![fmt(r.t), fmt(r.n), fmt(r.separation), fmt(r.min_diam), fmt(r.upper), fmt(r.lower)]);
    }
    Ok((serde_json::to_value(&report)?, Some(t)))
}

fn run_contacto(cfg: &RunConfig) -> Result<Outcome> {
    let p = &cfg.params;
    let samples = p.samples.unwrap_or(10_000);
    let pairs = p.pairs.unwrap_or(8);
    let seed = cfg.seed;
    let analytic = pullback_check(samples, seed, JacobianKind::Analytic);
    let fd = pullback_check(samples, seed, JacobianKind::FiniteDifference(1e-6));
    let horizontality = pushforward_horizontality_check(samples, seed);
    let jac = jacobian_agreement(samples.min(1000), seed, 1e-6);
    let bilip = if pairs > 0 {
        let opts = DirectOptions { restarts: 2, ..Default::default() };
        Some(local_bilip_estimate(p.ball_radius.unwrap_or(1.0), pairs, seed, &opts)?)
    } else {
        None
    };
    let mut t = Table::new(&["check", "value"]);
    t.push(vec!["max_pullback_error".into(), fmt(analytic)]);
    t.push(vec!["max_pullback_error_fd".into(), fmt(fd)]);
    t.push(vec!["max_horizontality_defect".into(), fmt(horizontality)]);
    let value = json!({
        "samples": samples,
        "max_pullback_error": analytic,
        "max_pullback_error_fd": fd,
        "max_horizontality_defect": horizontality,
        "max_jacobian_gap": jac,
        "bilip_constants": bilip,
    });
    Ok((value, Some(t)))
}

fn run_qi(cfg: &RunConfig) -> Result<Outcome> {
    let p = &cfg.params;
    let pairs = p.pairs.unwrap_or(1000);
    let side = p.side.unwrap_or(50.0);
    let opts = QiOptions::default();
    let est = estimate_qi_constants(pairs, side, cfg.seed, &opts)?;
    // the same fit on the two disjoint halves of the sample
    let half = est.samples.len() / 2;
    let far = opts.far_fraction * side;
    let halves: Vec<(f64, f64)> = [&est.samples[..half], &est.samples[half..]]
        .iter()
        .map(|s| {
            let (l, b, _) = fit_qi(s, far);
            (l, b)
        })
        .collect();
    let mut t = Table::new(&["d_euclidean", "d_rt"]);
    for s in &est.samples {
        t.push(vec![fmt(s.d_e), fmt(s.d_rt)]);
    }
    let value = json!({ "side": side, "estimate": est, "half_fits": halves });
    Ok((value, Some(t)))
}

fn run_planar(cfg: &RunConfig) -> Result<Outcome> {
    let p = &cfg.params;
    let example = p.example.ok_or_else(|| Error::invalid("example", "missing", "required for planar"))?;
    let lambda = match example {
        PlanarExample::Stretch => Some(p.lambda.unwrap_or(1.5)),
        _ => None,
    };
    let z = p.z.unwrap_or(match example {
        PlanarExample::ExpHalfStrip => [1.0, 1.0],
        PlanarExample::ExpStrip => [0.0, 1.0],
        PlanarExample::Stretch => [1.0, 0.0],
    });
    let radii = p.radii.clone().unwrap_or_else(|| vec![1e-2, 1e-3]);
    let samples = p.samples.unwrap_or(256);
    let d = dilatation_estimate(example, z, &radii, samples, lambda)?;
    let mut t = Table::new(&["example", "x", "y", "radius", "estimate"]);
    let tag = serde_json::to_value(example)?.as_str().unwrap_or_default().to_string();
    for (r, h) in d.radii.iter().zip(&d.h_estimates) {
        t.push(vec![tag.clone(), fmt(z[0]), fmt(z[1]), fmt(*r), fmt(*h)]);
    }
    let (shape, growth) = match lambda {
        Some(l) => {
            let shape = shape_inclusion_fit(l, 10_000)?;
            let (fit, _) = stretched_strip_growth(l, &[10.0, 20.0, 40.0, 80.0])?;
            (Some(shape), Some(fit))
        }
        None => (None, None),
    };
    let value = json!({ "example": example, "lambda": lambda, "dilatation": d, "shape_fit": shape, "growth": growth });
    Ok((value, Some(t)))
}
