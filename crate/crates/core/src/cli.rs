//! Command line front end.
//!
//! Every option can also be given in a flat `key = value` config file passed
//! with `--config`; flags given on the command line win.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::cylinder::{
    equivalence_check, evans_ej, f2j, theta_j, convergence_study, F2Route, FourierPotential, GalerkinTruncation,
};
use crate::fredholm1d::{
    assemble_bs_kernel, first_factor_parts, fprime_routes, fredholm_det, jost_nystrom,
    second_factor, simon_jost, simon_jost_minus, zero_mode, SimonQuantity, ZeroModeSource,
};
use crate::matdet::{expansion_regular, expansion_singular, riesz_projection, AnalyticMatrixFamily};
use crate::quad::NystromGrid;
use crate::semisep::det_semiseparable;
use crate::stabindex::{
    fprime_multi, planar_zero_mode, potential_from_wave, solve_standing_wave, stability_index_1d, ReactionProfile,
};
use crate::volterra::{jost_function, solve_aux, solve_jost, JostMethod, Potential1D};
use crate::{c, CMat, Error, NumericPolicy, Result, C64};

#[derive(Debug, Parser)]
#[command(name = "fredjost", version, about = "Jost and Evans functions as Fredholm determinants")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat key = value file with default option values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// CSV output path.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON summary path.
    #[arg(long, global = true)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Jost function F(z) of a line potential.
    Jost(Opts),
    /// Nyström Fredholm determinant against the Volterra Jost function.
    Fredholm(Opts),
    /// Perturbation expansion of det(I - A(z)) for a matrix family.
    Expand(Opts),
    /// Auxiliary solutions at z = 0 and the factors of F'(0).
    Aux(Opts),
    /// Jost solutions from half-line determinants.
    Simon(Opts),
    /// Galerkin-truncated cylinder determinants.
    Cylinder(Opts),
    /// Stability index of a standing wave.
    Index(Opts),
    /// Convergence of the Galerkin truncation.
    Converge(Opts),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Method {
    Wronskian,
    Integral,
    Nystrom,
    Semisep,
}

/// Options shared by all subcommands; each command reads the ones it needs.
#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    /// Potential: kdv:<n>:<kappa>:<c>, zero:<v_inf>, file:<path>; cylinder: planar:<1d>, cos:<1d>:<eps>, file:<path>.
    #[arg(long)]
    pub potential: Option<String>,
    /// Reaction profile: kdv:<n>:<kappa>:<c> or a (w, f, f') table file.
    #[arg(long)]
    pub profile: Option<String>,
    /// Spectral parameters, comma separated (e.g. -8 or -1+1i,0.5+2i).
    #[arg(long, allow_hyphen_values = true)]
    pub z: Option<String>,
    /// circle:<re>,<im>,<r>,<n> or segment:<a>,<b>,<n>.
    #[arg(long)]
    pub contour: Option<String>,
    /// Positions for `simon`, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Nyström nodes.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Half-width X of the truncated domain.
    #[arg(long = "x-max")]
    pub x_max: Option<f64>,
    /// Points of the uniform marching grid.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub symmetric: bool,
    #[arg(long)]
    pub modified: bool,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long = "J")]
    pub j: Option<usize>,
    #[arg(long = "J-list")]
    pub j_list: Option<String>,
    /// nystrom or semiseparable.
    #[arg(long)]
    pub route: Option<String>,
    #[arg(long = "check-equivalence")]
    pub check_equivalence: bool,
    /// Also compute F'(0) by its independent routes.
    #[arg(long)]
    pub fprime: bool,
    /// Matrix family (JSON) for `expand`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Policy override `key=value`, repeatable.
    #[arg(long = "policy")]
    pub policy: Vec<String>,
}

const KEYS: &[&str] = &[
    "potential",
    "profile",
    "z",
    "contour",
    "x",
    "method",
    "nodes",
    "x_max",
    "grid",
    "symmetric",
    "modified",
    "d",
    "J",
    "J_list",
    "route",
    "check_equivalence",
    "fprime",
    "input",
    "out",
    "json",
    "threads",
    "cond_max",
    "rank_tol",
    "degenerate_tol",
    "cross_tol",
    "eigen_tol",
    "ode_residual_tol",
    "tol_circle",
    "trace_int_tol",
];

/// Parsed and merged settings of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub settings: BTreeMap<String, String>,
}

impl RunConfig {
    fn get(&self, k: &str) -> Option<&str> {
        self.settings.get(k).map(|s| s.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, k: &str) -> Result<Option<T>> {
        match self.get(k) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| Error::pre(format!("invalid value for {k}: {v}"))),
        }
    }

    fn flag(&self, k: &str) -> Result<bool> {
        match self.get(k) {
            None => Ok(false),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(v) => Err(Error::pre(format!("invalid boolean for {k}: {v}"))),
        }
    }

    fn policy(&self) -> Result<NumericPolicy> {
        let mut p = NumericPolicy::default();
        let fields: [(&str, &mut f64); 8] = [
            ("cond_max", &mut p.cond_max),
            ("rank_tol", &mut p.rank_tol),
            ("degenerate_tol", &mut p.degenerate_tol),
            ("cross_tol", &mut p.cross_tol),
            ("eigen_tol", &mut p.eigen_tol),
            ("ode_residual_tol", &mut p.ode_residual_tol),
            ("tol_circle", &mut p.tol_circle),
            ("trace_int_tol", &mut p.trace_int_tol),
        ];
        for (k, slot) in fields {
            if let Some(v) = self.get(k) {
                let v: f64 = v.parse().map_err(|_| Error::pre(format!("invalid value for {k}: {v}")))?;
                if !(v > 0.0) {
                    return Err(Error::pre(format!("{k} must be positive")));
                }
                *slot = v;
            }
        }
        Ok(p)
    }
}

/// Read a flat `key = value` file; `#` starts a comment.
pub fn read_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::pre(format!("config line {}: expected key = value", ln + 1)))?;
        let k = k.trim().replace('-', "_");
        if !KEYS.contains(&k.as_str()) {
            return Err(Error::pre(format!("config line {}: unknown key {k}", ln + 1)));
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

fn command_name(c: &Command) -> (&'static str, &Opts) {
    match c {
        Command::Jost(o) => ("jost", o),
        Command::Fredholm(o) => ("fredholm", o),
        Command::Expand(o) => ("expand", o),
        Command::Aux(o) => ("aux", o),
        Command::Simon(o) => ("simon", o),
        Command::Cylinder(o) => ("cylinder", o),
        Command::Index(o) => ("index", o),
        Command::Converge(o) => ("converge", o),
    }
}

/// Merge config file entries with command line flags.
pub fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut settings = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::pre(format!("cannot read {}: {e}", p.display())))?;
            read_config(&text)?
        }
        None => BTreeMap::new(),
    };
    let (name, o) = command_name(&cli.command);
    let mut set = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            settings.insert(k.to_string(), v);
        }
    };
    set("potential", o.potential.clone());
    set("profile", o.profile.clone());
    set("z", o.z.clone());
    set("contour", o.contour.clone());
    set("x", o.x.clone());
    set("method", o.method.map(|m| m.to_possible_value().unwrap().get_name().to_string()));
    set("nodes", o.nodes.map(|v| v.to_string()));
    set("x_max", o.x_max.map(|v| v.to_string()));
    set("grid", o.grid.map(|v| v.to_string()));
    set("symmetric", o.symmetric.then(|| "true".into()));
    set("modified", o.modified.then(|| "true".into()));
    set("d", o.d.map(|v| v.to_string()));
    set("J", o.j.map(|v| v.to_string()));
    set("J_list", o.j_list.clone());
    set("route", o.route.clone());
    set("check_equivalence", o.check_equivalence.then(|| "true".into()));
    set("fprime", o.fprime.then(|| "true".into()));
    set("input", o.input.as_ref().map(|p| p.display().to_string()));
    set("out", cli.out.as_ref().map(|p| p.display().to_string()));
    set("json", cli.json.as_ref().map(|p| p.display().to_string()));
    set("threads", cli.threads.map(|v| v.to_string()));
    for kv in &o.policy {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::pre(format!("policy override {kv}: expected key=value")))?;
        let k = k.trim().replace('-', "_");
        if !KEYS.contains(&k.as_str()) {
            return Err(Error::pre(format!("unknown policy key {k}")));
        }
        settings.insert(k, v.trim().to_string());
    }
    Ok(RunConfig { command: name.to_string(), settings })
}

/// `-8`, `0.5+2i`, `-1-i`, `3i`.
pub fn parse_complex(s: &str) -> Result<C64> {
    let t: String = s.chars().filter(|ch| !ch.is_whitespace()).collect();
    let bad = || Error::pre(format!("cannot parse complex number {s}"));
    if t.is_empty() {
        return Err(bad());
    }
    let Some(body) = t.strip_suffix('i').or_else(|| t.strip_suffix('j')) else {
        return t.parse::<f64>().map(c).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    let mut split = None;
    for i in (1..bytes.len()).rev() {
        if (bytes[i] == b'+' || bytes[i] == b'-') && bytes[i - 1] != b'e' && bytes[i - 1] != b'E' {
            split = Some(i);
            break;
        }
    }
    let (re, im) = match split {
        Some(i) => (&body[..i], &body[i..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        v => v.parse::<f64>().map_err(|_| bad())?,
    };
    Ok(C64::new(re.parse::<f64>().map_err(|_| bad())?, im))
}

fn split_list(s: &str) -> Vec<&str> {
    s.split(',').map(|v| v.trim()).filter(|v| !v.is_empty()).collect()
}

/// Points of a contour specification.
pub fn parse_contour(s: &str) -> Result<Vec<C64>> {
    let bad = || Error::pre(format!("cannot parse contour {s}"));
    let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
    let parts = split_list(rest);
    match kind {
        "circle" => {
            if parts.len() != 4 {
                return Err(bad());
            }
            let re: f64 = parts[0].parse().map_err(|_| bad())?;
            let im: f64 = parts[1].parse().map_err(|_| bad())?;
            let r: f64 = parts[2].parse().map_err(|_| bad())?;
            let n: usize = parts[3].parse().map_err(|_| bad())?;
            if n == 0 || !(r > 0.0) {
                return Err(bad());
            }
            Ok((0..n)
                .map(|j| C64::new(re, im) + C64::from_polar(r, 2.0 * std::f64::consts::PI * j as f64 / n as f64))
                .collect())
        }
        "segment" => {
            if parts.len() != 3 {
                return Err(bad());
            }
            let a = parse_complex(parts[0])?;
            let b = parse_complex(parts[1])?;
            let n: usize = parts[2].parse().map_err(|_| bad())?;
            if n < 2 {
                return Err(bad());
            }
            Ok((0..n).map(|j| a + (b - a) * (j as f64 / (n - 1) as f64)).collect())
        }
        _ => Err(bad()),
    }
}

fn z_values(cfg: &RunConfig, default: Option<&str>) -> Result<Vec<C64>> {
    if let Some(cs) = cfg.get("contour") {
        return parse_contour(cs);
    }
    match cfg.get("z").or(default) {
        Some(zs) => split_list(zs).into_iter().map(parse_complex).collect(),
        None => Err(Error::pre("no spectral parameter given (use --z or --contour)")),
    }
}

/// 1D potential from a spec string.
pub fn parse_potential(spec: &str) -> Result<Potential1D> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::pre(format!("bad number {s} in {spec}")));
    match parts[0] {
        "kdv" => {
            if parts.len() < 2 || parts.len() > 4 {
                return Err(Error::pre(format!("expected kdv:<n>:<kappa>:<c>, got {spec}")));
            }
            let n: u32 = parts[1].parse().map_err(|_| Error::pre(format!("bad n in {spec}")))?;
            let kappa = parts.get(2).map(|s| num(s)).transpose()?.unwrap_or(1.0);
            let cc = parts.get(3).map(|s| num(s)).transpose()?.unwrap_or(1.0);
            Potential1D::kdv(n, kappa, cc)
        }
        "zero" => {
            let v = parts.get(1).map(|s| num(s)).transpose()?.unwrap_or(1.0);
            Potential1D::free(v)
        }
        "file" => Potential1D::from_file(Path::new(&spec[5..])),
        _ if Path::new(spec).exists() => Potential1D::from_file(Path::new(spec)),
        _ => Err(Error::pre(format!("unknown potential {spec}"))),
    }
}

fn potential(cfg: &RunConfig) -> Result<Potential1D> {
    let spec = cfg.get("potential").ok_or_else(|| Error::pre("--potential is required"))?;
    let mut p = parse_potential(spec)?;
    let x_max: Option<f64> = cfg.parse("x_max")?;
    let grid: Option<usize> = cfg.parse("grid")?;
    if x_max.is_some() || grid.is_some() {
        p = p.with_grid(x_max.unwrap_or(p.x_max), grid.unwrap_or(p.n_grid))?;
    }
    Ok(p)
}

/// Cylinder potential and, for planar ones, the underlying line potential.
pub fn parse_cylinder(spec: &str, d: usize) -> Result<(FourierPotential, Option<Potential1D>)> {
    if let Some(rest) = spec.strip_prefix("planar:") {
        let p = parse_potential(rest)?;
        return Ok((FourierPotential::planar(&p, d)?, Some(p)));
    }
    if let Some(rest) = spec.strip_prefix("cos:") {
        let (inner, eps) = rest.rsplit_once(':').ok_or_else(|| Error::pre("expected cos:<1d>:<eps>"))?;
        let eps: f64 = eps.parse().map_err(|_| Error::pre(format!("bad eps {eps}")))?;
        let p = parse_potential(inner)?;
        let fp = FourierPotential::cosine(&p, d, eps)?;
        return Ok((fp, if eps == 0.0 { Some(p) } else { None }));
    }
    let path = spec.strip_prefix("file:").unwrap_or(spec);
    let fp = FourierPotential::from_file(Path::new(path))?;
    if fp.d != d {
        return Err(Error::pre(format!("file declares d = {}, but --d {d} was given", fp.d)));
    }
    Ok((fp, None))
}

/// 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_line(fields: &[String]) -> String {
    let mut s = fields.join(",");
    s.push('\n');
    s
}

fn show(z: C64) -> String {
    if z.im == 0.0 {
        format!("{:.4e}", z.re)
    } else {
        format!("{:.4e}{:+.4e}i", z.re, z.im)
    }
}

fn cjson(z: C64) -> Value {
    json!([z.re, z.im])
}

/// Output of one run.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub stdout: String,
    pub csv: Option<String>,
    pub summary: Value,
}

fn jost_cmd(cfg: &RunConfig) -> Result<Artifacts> {
    let p = potential(cfg)?;
    let zs = z_values(cfg, None)?;
    let method = match cfg.get("method") {
        None | Some("wronskian") => Method::Wronskian,
        Some("integral") => Method::Integral,
        Some("nystrom") => Method::Nystrom,
        Some("semisep") => Method::Semisep,
        Some(m) => return Err(Error::pre(format!("unknown method {m}"))),
    };
    let nodes: usize = cfg.parse("nodes")?.unwrap_or(crate::fredholm1d::DEFAULT_NODES);
    let grid = NystromGrid::gauss_legendre(p.x_max, nodes, crate::fredholm1d::PANEL)?;
    let vals: Vec<C64> = zs
        .par_iter()
        .map(|z| match method {
            Method::Wronskian => jost_function(&p, *z, JostMethod::Wronskian),
            Method::Integral => jost_function(&p, *z, JostMethod::Integral),
            Method::Nystrom => jost_nystrom(&p, *z, &grid),
            Method::Semisep => det_semiseparable(&crate::fredholm1d::bs_semiseparable(&p, *z)?, false),
        })
        .collect::<Result<_>>()?;
    let mut out = String::new();
    let mut csv = csv_line(&["z_re".into(), "z_im".into(), "F_re".into(), "F_im".into()]);
    for (z, f) in zs.iter().zip(&vals) {
        if zs.len() > 1 {
            let _ = write!(out, "z = {}  ", show(*z));
        }
        let _ = writeln!(out, "F = {}", show(*f));
        csv += &csv_line(&[num(z.re), num(z.im), num(f.re), num(f.im)]);
    }
    let summary = json!({
        "method": method,
        "values": zs.iter().zip(&vals).map(|(z, f)| json!({"z": cjson(*z), "F": cjson(*f)})).collect::<Vec<_>>(),
    });
    Ok(Artifacts { stdout: out, csv: Some(csv), summary })
}

fn fredholm_cmd(cfg: &RunConfig) -> Result<Artifacts> {
    let p = potential(cfg)?;
    let policy = cfg.policy()?;
    let nodes: usize = cfg.parse("nodes")?.unwrap_or(crate::fredholm1d::DEFAULT_NODES);
    let grid = NystromGrid::gauss_legendre(p.x_max, nodes, crate::fredholm1d::PANEL)?;
    let symmetric = cfg.flag("symmetric")?;
    let modified = cfg.flag("modified")?;
    let mut out = String::new();
    let mut csv = csv_line(
        &["z_re", "z_im", "det_re", "det_im", "jost_re", "jost_im", "abs_diff"].map(String::from),
    );
    let mut rows = Vec::new();
    let zs = if cfg.get("z").is_some() || cfg.get("contour").is_some() { z_values(cfg, None)? } else { Vec::new() };
    for z in &zs {
        let k = assemble_bs_kernel(&p, *z, &grid, symmetric)?;
        let det = fredholm_det(&k, modified)?;
        let mut jost = jost_function(&p, *z, JostMethod::Wronskian)?;
        if modified {
            jost *= crate::kink::trace_exact(&grid, &k.exp).exp();
        }
        let diff = (det - jost).norm();
        let _ = writeln!(out, "z = {}  det = {}  jost = {}  |diff| = {:.3e}", show(*z), show(det), show(jost), diff);
        csv += &csv_line(&[num(z.re), num(z.im), num(det.re), num(det.im), num(jost.re), num(jost.im), num(diff)]);
        rows.push(json!({"z": cjson(*z), "det": cjson(det), "jost": cjson(jost), "abs_diff": diff}));
    }
    let mut summary = json!({ "nodes": nodes, "symmetric": symmetric, "modified": modified, "values": rows });
    if cfg.flag("fprime")? {
        let r = fprime_routes(&p, &policy)?;
        let _ = writeln!(
            out,
            "F'(0): quadrature = {:.10e}  product = {:.10e} ({:.10e} x {:.10e})  contour = {:.10e}",
            r.quadrature, r.product, r.first_factor, r.second_factor, r.cauchy
        );
        summary["fprime"] = serde_json::to_value(r).unwrap_or(Value::Null);
    }
    if zs.is_empty() && !cfg.flag("fprime")? {
        return Err(Error::pre("nothing to do: give --z, --contour or --fprime"));
    }
    Ok(Artifacts { stdout: out, csv: Some(csv), summary })
}

/// Matrix family JSON: `{"coefficients": [[[ [re, im], ...], ...], ...], "radius": r}`, with
/// optional `modified`, `nodes` and `contour_radius` (Riesz circle around 1, default 0.3).
#[derive(Debug, serde::Deserialize)]
struct FamilyFile {
    coefficients: Vec<Vec<Vec<[f64; 2]>>>,
    radius: f64,
    #[serde(default)]
    modified: bool,
    #[serde(default)]
    nodes: Option<usize>,
    #[serde(default)]
    contour_radius: Option<f64>,
}

fn expand_cmd(cfg: &RunConfig) -> Result<Artifacts> {
    let path = cfg.get("input").ok_or_else(|| Error::pre("--input <family.json> is required"))?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::pre(format!("cannot read {path}: {e}")))?;
    let ff: FamilyFile = serde_json::from_str(&text).map_err(|e| Error::pre(format!("bad family file: {e}")))?;
    let policy = cfg.policy()?;
    let modified = ff.modified || cfg.flag("modified")?;
    let mut mats = Vec::new();
    for m in &ff.coefficients {
        let n = m.len();
        if m.iter().any(|r| r.len() != n) {
            return Err(Error::pre("coefficient matrices must be square"));
        }
        mats.push(CMat::from_fn(n, n, |i, j| C64::new(m[i][j][0], m[i][j][1])));
    }
    let fam = AnalyticMatrixFamily::new(mats, ff.radius)?;
    let (res, case, riesz) = match expansion_regular(&fam, modified, &policy) {
        Ok(r) => (r, "regular", None),
        Err(Error::Precondition(_)) => {
            let nodes = ff.nodes.unwrap_or(64);
            let rd = riesz_projection(fam.a0(), c(1.0), ff.contour_radius.unwrap_or(0.3), nodes, &policy)?;
            let r = expansion_singular(&fam, &rd, modified, &policy)?;
            (r, "singular", Some(json!({"n0": rd.n0, "nu0": rd.nu0})))
        }
        Err(e) => return Err(e),
    };
    let out = format!(
        "case = {case}  order = {}  coefficient = {}\n",
        res.order,
        show(res.leading_coefficient)
    );
    let summary = json!({"case": case, "modified": modified, "result": res, "riesz": riesz});
    Ok(Artifacts { stdout: out, csv: None, summary })
}

fn aux_cmd(cfg: &RunConfig) -> Result<Artifacts> {
    let p = potential(cfg)?;
    let policy = cfg.policy()?;
    let aux = solve_aux(&p, &policy)?;
    let parts = first_factor_parts(&p, &aux);
    let zm = zero_mode(&p, ZeroModeSource::Volterra, &policy)?;
    let second = second_factor(&zm, &p, &policy)?;
    let mut csv = csv_line(&["x", "phi_plus", "phi_minus", "psi_plus_aux", "psi_minus_aux"].map(String::from));
    for i in 0..aux.x.len() {
        csv += &csv_line(&[
            num(aux.x[i]),
            num(aux.phi_plus[i]),
            num(aux.phi_minus[i]),
            num(aux.psi_plus_aux[i]),
            num(aux.psi_minus_aux[i]),
        ]);
    }
    let out = format!(
        "first factor: plus = {:.10e}  minus = {:.10e}  a posteriori = {:.10e}\nsecond factor = {:.10e}\nproduct = {:.10e}\nresidual = {:.3e}\n",
        parts.plus, parts.minus, parts.a_posteriori, second, parts.plus * second, aux.residual
    );
    let summary = json!({
        "first_factor": parts,
        "second_factor": second,
        "product": parts.plus * second,
        "residual": aux.residual,
    });
    Ok(Artifacts { stdout: out, csv: Some(csv), summary })
}

fn simon_cmd(cfg: &RunConfig) -> Result<Artifacts> {
    let p = potential(cfg)?;
    let zs = z_values(cfg, None)?;
    let xs: Vec<f64> = split_list(cfg.get("x").unwrap_or("0"))
        .into_iter()
        .map(|s| s.parse::<f64>().map_err(|_| Error::pre(format!("bad x value {s}"))))
        .collect::<Result<_>>()?;
    let mut out = String::new();
    let mut csv = csv_line(
        &["z_re", "z_im", "x", "side", "quantity", "simon_re", "simon_im", "volterra_re", "volterra_im", "rel_err"]
            .map(String::from),
    );
    let mut rows = Vec::new();
    for z in &zs {
        let sol = solve_jost(&p, *z)?;
        let h = sol.x[1] - sol.x[0];
        for &x in &xs {
            let t = (x - sol.x[0]) / h;
            let i = t.round() as usize;
            if (t - i as f64).abs() > 1e-6 || i >= sol.x.len() {
                return Err(Error::pre(format!("x = {x} is not a node of the marching grid")));
            }
            let cases = [
                ("plus", "value", simon_jost(&p, *z, x, SimonQuantity::Value)?, sol.psi_plus[i]),
                ("plus", "derivative", simon_jost(&p, *z, x, SimonQuantity::Derivative)?, sol.dpsi_plus[i]),
                ("minus", "value", simon_jost_minus(&p, *z, x, SimonQuantity::Value)?, sol.psi_minus[i]),
                ("minus", "derivative", simon_jost_minus(&p, *z, x, SimonQuantity::Derivative)?, sol.dpsi_minus[i]),
            ];
            for (side, q, s, v) in cases {
                let rel = (s - v).norm() / v.norm().max(1e-300);
                let _ = writeln!(out, "z = {}  x = {x}  {side} {q}: {}  (volterra {}, rel {:.2e})", show(*z), show(s), show(v), rel);
                csv += &csv_line(&[
                    num(z.re),
                    num(z.im),
                    num(x),
                    side.into(),
                    q.into(),
                    num(s.re),
                    num(s.im),
                    num(v.re),
                    num(v.im),
                    num(rel),
                ]);
                rows.push(json!({"z": cjson(*z), "x": x, "side": side, "quantity": q, "simon": cjson(s), "volterra": cjson(v), "rel_err": rel}));
            }
        }
    }
    Ok(Artifacts { stdout: out, csv: Some(csv), summary: json!({ "values": rows }) })
}

fn j_values(cfg: &RunConfig, default: &str) -> Result<Vec<usize>> {
    split_list(cfg.get("J_list").or(cfg.get("J")).unwrap_or(default))
        .into_iter()
        .map(|s| s.parse::<usize>().map_err(|_| Error::pre(format!("bad J value {s}"))))
        .collect()
}

fn cylinder_cmd(cfg: &RunConfig) -> Result<Artifacts> {
    let d: usize = cfg.parse("d")?.unwrap_or(2);
    let js = j_values(cfg, "0")?;
    let spec = cfg.get("potential").ok_or_else(|| Error::pre("--potential is required"))?;
    let (fp, line) = parse_cylinder(spec, d)?;
    let truncs = js.iter().map(|j| GalerkinTruncation::new(d, *j)).collect::<Result<Vec<_>>>()?;
    let route = match cfg.get("route") {
        None | Some("nystrom") => F2Route::Nystrom,
        Some("semiseparable") | Some("semisep") => F2Route::Semiseparable,
        Some(r) => return Err(Error::pre(format!("unknown route {r}"))),
    };
    let policy = cfg.policy()?;
    let check = cfg.flag("check_equivalence")?;
    let fprime = cfg.flag("fprime")?;
    let mut out = String::new();
    let mut csv = csv_line(
        &["J", "z_re", "z_im", "F2J_re", "F2J_im", "theta_re", "theta_im", "EJ_re", "EJ_im", "residual"]
            .map(String::from),
    );
    let mut rows = Vec::new();
    let zs = if cfg.get("z").is_some() || cfg.get("contour").is_some() { z_values(cfg, None)? } else { Vec::new() };
    if zs.is_empty() && !fprime {
        return Err(Error::pre("nothing to do: give --z, --contour or --fprime"));
    }
    let jobs: Vec<(usize, C64)> = (0..truncs.len()).flat_map(|a| zs.iter().map(move |z| (a, *z))).collect();
    let computed: Vec<(C64, C64, C64, f64)> = jobs
        .par_iter()
        .map(|&(a, z)| -> Result<_> {
            let t = &truncs[a];
            if check {
                let r = equivalence_check(&fp, t, z)?;
                Ok((r.f2j, r.theta, r.ej, r.residual))
            } else {
                let f = f2j(&fp, t, z, route)?;
                let theta = theta_j(&fp, t, z)?;
                let e = evans_ej(&fp, t, z)?;
                Ok((f, theta, e, (f - theta.exp() * e).norm() / f.norm().max(1.0)))
            }
        })
        .collect::<Result<_>>()?;
    for (&(a, z), &(f, theta, e, residual)) in jobs.iter().zip(&computed) {
        let j = js[a];
        let _ = writeln!(
            out,
            "J = {j}  z = {}  F2J = {}  Theta = {}  EJ = {}  residual = {:.3e}",
            show(z),
            show(f),
            show(theta),
            show(e),
            residual
        );
        csv += &csv_line(&[
            j.to_string(),
            num(z.re),
            num(z.im),
            num(f.re),
            num(f.im),
            num(theta.re),
            num(theta.im),
            num(e.re),
            num(e.im),
            num(residual),
        ]);
        rows.push(
            json!({"J": j, "z": cjson(z), "F2J": cjson(f), "theta": cjson(theta), "EJ": cjson(e), "residual": residual}),
        );
    }
    let modes: Vec<usize> = truncs.iter().map(|t| t.n_modes).collect();
    let mut summary = json!({"d": d, "J": js, "n_modes": modes, "values": rows});
    if fprime {
        let p = line.ok_or_else(|| Error::pre("--fprime needs a planar potential"))?;
        let zm = zero_mode(&p, ZeroModeSource::Volterra, &policy)?;
        let mut list = Vec::new();
        for (j, t) in js.iter().zip(&truncs) {
            let phi = planar_zero_mode(&fp, t, &zm.psi0)?;
            let r = fprime_multi(&fp, t, &phi, &policy)?;
            let _ = writeln!(
                out,
                "J = {j}  F2J'(0): product = {} ({} x {})  contour = {}  gap = {:.2e}",
                show(r.product),
                show(r.first_factor),
                show(r.second_factor),
                show(r.cauchy),
                r.relative_gap
            );
            let mut v = serde_json::to_value(r).unwrap_or(Value::Null);
            v["J"] = json!(j);
            list.push(v);
        }
        summary["fprime"] = Value::Array(list);
    }
    Ok(Artifacts { stdout: out, csv: Some(csv), summary })
}

fn index_cmd(cfg: &RunConfig) -> Result<Artifacts> {
    let policy = cfg.policy()?;
    let p = match (cfg.get("potential"), cfg.get("profile")) {
        (Some(_), _) => potential(cfg)?,
        (None, Some(spec)) => {
            let rp = if let Some(rest) = spec.strip_prefix("kdv:") {
                let v: Vec<&str> = rest.split(':').collect();
                let n: u32 = v[0].parse().map_err(|_| Error::pre(format!("bad profile {spec}")))?;
                let f = |i: usize| -> Result<f64> {
                    v.get(i).map_or(Ok(1.0), |s| s.parse().map_err(|_| Error::pre(format!("bad profile {spec}"))))
                };
                ReactionProfile::kdv(n, f(1)?, f(2)?)?
            } else {
                ReactionProfile::from_file(Path::new(spec.strip_prefix("file:").unwrap_or(spec)))?
            };
            let x_max: f64 = cfg.parse("x_max")?.unwrap_or(crate::volterra::DEFAULT_X);
            let n: usize = cfg.parse("grid")?.unwrap_or(crate::volterra::DEFAULT_GRID);
            let sw = solve_standing_wave(&rp, x_max, n, &policy)?;
            potential_from_wave(&rp, &sw)?
        }
        (None, None) => return Err(Error::pre("--potential or --profile is required")),
    };
    let r = stability_index_1d(&p, &policy)?;
    let summary = json!({
        "potential": p.label,
        "verdict": format!("{:?}", r.verdict).to_lowercase().replace("parityeven", "parity_even"),
        "gamma": r.gamma,
        "order_k": r.order_k,
        "dF0": r.dkf0,
        "report": r,
    });
    let out = serde_json::to_string_pretty(&summary).unwrap_or_default() + "\n";
    Ok(Artifacts { stdout: out, csv: None, summary })
}

fn converge_cmd(cfg: &RunConfig) -> Result<Artifacts> {
    let d: usize = cfg.parse("d")?.unwrap_or(2);
    let spec = cfg.get("potential").ok_or_else(|| Error::pre("--potential is required"))?;
    let (fp, _) = parse_cylinder(spec, d)?;
    let z = parse_complex(cfg.get("z").unwrap_or("-3"))?;
    let js = j_values(cfg, "1,2,4,8,16")?;
    let table = convergence_study(&fp, z, &js)?;
    let mut out = String::new();
    let mut csv = csv_line(&["J", "hs_distance", "F2J_re", "F2J_im", "f_distance"].map(String::from));
    for r in &table.rows {
        let _ = writeln!(
            out,
            "J = {:>3}  ||K_J - K_ref||_HS = {:.6e}  F2J = {}  |F2J - F2ref| = {:.6e}",
            r.j,
            r.hs_distance,
            show(r.f2j),
            r.f_distance
        );
        csv += &csv_line(&[r.j.to_string(), num(r.hs_distance), num(r.f2j.re), num(r.f2j.im), num(r.f_distance)]);
    }
    let _ = writeln!(
        out,
        "slopes: HS {:.4}  F {:.4}  (bound {:.2})  {}",
        table.hs_slope,
        table.f_slope,
        table.slope_bound,
        if table.passed { "ok" } else { "FAILED" }
    );
    let passed = table.passed;
    let summary = serde_json::to_value(&table).unwrap_or(Value::Null);
    if !passed {
        return Err(Error::num(format!("convergence check failed\n{out}")));
    }
    Ok(Artifacts { stdout: out, csv: Some(csv), summary })
}

/// Execute a configured run.
pub fn run(cfg: &RunConfig) -> Result<Artifacts> {
    let mut a = match cfg.command.as_str() {
        "jost" => jost_cmd(cfg),
        "fredholm" => fredholm_cmd(cfg),
        "expand" => expand_cmd(cfg),
        "aux" => aux_cmd(cfg),
        "simon" => simon_cmd(cfg),
        "cylinder" => cylinder_cmd(cfg),
        "index" => index_cmd(cfg),
        "converge" => converge_cmd(cfg),
        other => Err(Error::pre(format!("unknown command {other}"))),
    }?;
    let results = std::mem::take(&mut a.summary);
    a.summary = json!({
        "command": cfg.command,
        "inputs": cfg.settings,
        "version": env!("CARGO_PKG_VERSION"),
        "results": results,
    });
    Ok(a)
}

fn write_file(path: &str, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::pre(format!("cannot write {path}: {e}")))
}

/// Parse arguments, run, write artifacts; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = build_config(&cli).and_then(|cfg| {
        if let Some(n) = cfg.parse::<usize>("threads")? {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
        let a = run(&cfg)?;
        if let (Some(path), Some(csv)) = (cfg.get("out"), &a.csv) {
            write_file(path, csv)?;
        }
        if let Some(path) = cfg.get("json") {
            write_file(path, &(serde_json::to_string_pretty(&a.summary).unwrap_or_default() + "\n"))?;
        }
        Ok(a)
    });
    match result {
        Ok(a) => {
            let mut so = std::io::stdout().lock();
            let _ = so.write_all(a.stdout.as_bytes());
            0
        }
        Err(e) => {
            eprintln!("fredjost: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_parsing() {
        assert_eq!(parse_complex("-8").unwrap(), c(-8.0));
        assert_eq!(parse_complex("-1+1i").unwrap(), C64::new(-1.0, 1.0));
        assert_eq!(parse_complex("0.5+2i").unwrap(), C64::new(0.5, 2.0));
        assert_eq!(parse_complex("-i").unwrap(), C64::new(0.0, -1.0));
        assert_eq!(parse_complex("1e-3-2.5e+1i").unwrap(), C64::new(1e-3, -25.0));
        assert!(parse_complex("abc").is_err());
    }

    #[test]
    fn contours() {
        let pts = parse_contour("circle:0,0,0.5,4").unwrap();
        assert_eq!(pts.len(), 4);
        assert!((pts[1] - C64::new(0.0, 0.5)).norm() < 1e-15);
        let seg = parse_contour("segment:-5,-1+1i,3").unwrap();
        assert_eq!(seg[1], C64::new(-3.0, 0.5));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(read_config("potential = kdv:2:1:1\nz = -8\n").is_ok());
        assert!(read_config("bogus = 1").is_err());
    }
}
