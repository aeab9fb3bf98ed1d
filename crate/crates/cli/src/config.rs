//! Run configuration: flat `key = value` files merged with command-line flags.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "penglm", version, about = "Fit and tune penalized generalized linear models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit at a single tuning value.
    Fit(Flags),
    /// Fit a whole tuning path.
    Path(Flags),
    /// Tune by K-fold cross-validation.
    TuneCv(Flags),
    /// Tune by an information criterion.
    TuneIc(Flags),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Path(_) => "path",
            Command::TuneCv(_) => "tune-cv",
            Command::TuneIc(_) => "tune-ic",
        }
    }

    pub fn flags(&self) -> &Flags {
        match self {
            Command::Fit(f) | Command::Path(f) | Command::TuneCv(f) | Command::TuneIc(f) => f,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Flat key = value config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV file with a header row.
    #[arg(long)]
    pub data: Option<String>,
    /// Response column name(s), comma separated.
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub penalty: Option<String>,
    /// Tuning value for `fit`; `max` uses the grid start.
    #[arg(long)]
    pub pen_val: Option<String>,
    /// convex, adaptive, scad or mcp.
    #[arg(long)]
    pub flavor: Option<String>,
    /// One group per line, comma-separated zero-based feature indices.
    #[arg(long)]
    pub groups: Option<String>,
    #[arg(long)]
    pub cv_k: Option<String>,
    /// min or 1se.
    #[arg(long)]
    pub cv_rule: Option<String>,
    /// aic, bic or ebic.
    #[arg(long)]
    pub criterion: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Output JSON path; stdout when absent.
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long)]
    pub no_intercept: bool,
    /// Any other config key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

pub const KEYS: &[&str] = &[
    "data",
    "response",
    "weights",
    "offsets",
    "loss",
    "classes",
    "huber_knot",
    "quantile_level",
    "quantile_smoothing",
    "penalty",
    "mix",
    "groups",
    "pen_val",
    "flavor",
    "shape",
    "lla_steps",
    "adaptive_exponent",
    "adaptive_perturbation",
    "n_points",
    "eps",
    "grid",
    "ridge_eps",
    "cv_k",
    "cv_rule",
    "seed",
    "criterion",
    "ebic_gamma",
    "noise",
    "standardize",
    "intercept",
    "max_iter",
    "rel_tol",
    "residual_tol",
    "out",
];

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Parse(format!("config line {}: expected key = value", ln + 1)))?;
        let k = k.trim().replace('-', "_");
        if !KEYS.contains(&k.as_str()) {
            return Err(CliError::Parse(format!("config line {}: unknown key '{k}'", ln + 1)));
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

/// Config file values overridden by flags.
pub fn merged_settings(flags: &Flags) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = match &flags.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            parse_config_text(&text)?
        }
        None => BTreeMap::new(),
    };
    for kv in &flags.set {
        let m = parse_config_text(kv)?;
        map.extend(m);
    }
    let pairs = [
        ("data", &flags.data),
        ("response", &flags.response),
        ("loss", &flags.loss),
        ("penalty", &flags.penalty),
        ("pen_val", &flags.pen_val),
        ("flavor", &flags.flavor),
        ("groups", &flags.groups),
        ("cv_k", &flags.cv_k),
        ("cv_rule", &flags.cv_rule),
        ("criterion", &flags.criterion),
        ("seed", &flags.seed),
        ("out", &flags.out),
    ];
    for (k, v) in pairs {
        if let Some(v) = v {
            map.insert(k.to_string(), v.clone());
        }
    }
    if flags.no_standardize {
        map.insert("standardize".into(), "false".into());
    }
    if flags.no_intercept {
        map.insert("intercept".into(), "false".into());
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Convex,
    Adaptive,
    Scad,
    Mcp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PenValue {
    Max,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Noise {
    PlugIn,
    Reid,
    Fixed(f64),
}

/// Fully resolved job description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub data: String,
    pub response: Vec<String>,
    pub weights: Option<String>,
    pub offsets: Option<String>,
    pub loss: String,
    pub classes: Option<usize>,
    pub huber_knot: f64,
    pub quantile_level: f64,
    pub quantile_smoothing: f64,
    pub penalty: String,
    pub mix: f64,
    pub groups: Option<String>,
    pub pen_val: Option<PenValue>,
    pub flavor: Flavor,
    pub shape: Option<f64>,
    pub lla_steps: usize,
    pub adaptive_exponent: f64,
    pub adaptive_perturbation: String,
    pub n_points: usize,
    pub eps: f64,
    pub grid: Option<Vec<f64>>,
    pub ridge_eps: f64,
    pub cv_k: usize,
    pub cv_rule: String,
    pub seed: u64,
    pub criterion: String,
    pub ebic_gamma: f64,
    pub noise: Noise,
    pub standardize: bool,
    pub intercept: bool,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub residual_tol: f64,
    pub out: Option<String>,
}

fn take<T: FromStr>(map: &BTreeMap<String, String>, key: &str, default: T) -> Result<T, CliError> {
    match map.get(key) {
        Some(v) => v
            .parse()
            .map_err(|_| CliError::Parse(format!("invalid value '{v}' for {key}"))),
        None => Ok(default),
    }
}

fn parse_bool(map: &BTreeMap<String, String>, key: &str, default: bool) -> Result<bool, CliError> {
    match map.get(key).map(|s| s.to_ascii_lowercase()) {
        None => Ok(default),
        Some(v) if matches!(v.as_str(), "true" | "1" | "yes" | "on") => Ok(true),
        Some(v) if matches!(v.as_str(), "false" | "0" | "no" | "off") => Ok(false),
        Some(v) => Err(CliError::Parse(format!("invalid boolean '{v}' for {key}"))),
    }
}

fn one_of(map: &BTreeMap<String, String>, key: &str, default: &str, allowed: &[&str]) -> Result<String, CliError> {
    let v = map.get(key).map_or(default, |s| s.as_str()).to_string();
    if allowed.contains(&v.as_str()) {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{key} must be one of {}, got '{v}'", allowed.join(", "))))
    }
}

fn parse_list(s: &str, key: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Parse(format!("invalid number '{t}' in {key}")))
        })
        .collect()
}

pub const LOSSES: &[&str] = &[
    "least_squares",
    "logistic",
    "multinomial",
    "poisson",
    "huber",
    "quantile",
    "squared_hinge",
];

pub const PENALTIES: &[&str] = &[
    "lasso",
    "ridge",
    "group_lasso",
    "multi_task_lasso",
    "tv1",
    "nuclear_norm",
    "elastic_net",
    "sparse_group_lasso",
    "sparse_fused_lasso",
];

impl RunConfig {
    pub fn resolve(command: &str, map: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let data = map
            .get("data")
            .cloned()
            .ok_or_else(|| CliError::Config("missing data".into()))?;
        let response: Vec<String> = map
            .get("response")
            .ok_or_else(|| CliError::Config("missing response".into()))?
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if response.is_empty() {
            return Err(CliError::Config("empty response".into()));
        }
        let flavor = match one_of(map, "flavor", "convex", &["convex", "adaptive", "scad", "mcp"])?.as_str() {
            "adaptive" => Flavor::Adaptive,
            "scad" => Flavor::Scad,
            "mcp" => Flavor::Mcp,
            _ => Flavor::Convex,
        };
        let pen_val = match map.get("pen_val") {
            None => None,
            Some(v) if v == "max" => Some(PenValue::Max),
            Some(v) => Some(PenValue::Value(
                v.parse()
                    .map_err(|_| CliError::Parse(format!("invalid value '{v}' for pen_val")))?,
            )),
        };
        let noise = match map.get("noise").map(|s| s.as_str()) {
            None | Some("plugin") => Noise::PlugIn,
            Some("reid") => Noise::Reid,
            Some(v) => Noise::Fixed(
                v.parse()
                    .map_err(|_| CliError::Parse(format!("invalid value '{v}' for noise")))?,
            ),
        };
        let cfg = RunConfig {
            command: command.to_string(),
            data,
            response,
            weights: map.get("weights").cloned(),
            offsets: map.get("offsets").cloned(),
            loss: one_of(map, "loss", "least_squares", LOSSES)?,
            classes: map
                .get("classes")
                .map(|v| v.parse().map_err(|_| CliError::Parse(format!("invalid value '{v}' for classes"))))
                .transpose()?,
            huber_knot: take(map, "huber_knot", 1.345)?,
            quantile_level: take(map, "quantile_level", 0.5)?,
            quantile_smoothing: take(map, "quantile_smoothing", 0.01)?,
            penalty: one_of(map, "penalty", "lasso", PENALTIES)?,
            mix: take(map, "mix", 0.5)?,
            groups: map.get("groups").cloned(),
            pen_val,
            flavor,
            shape: map
                .get("shape")
                .map(|v| v.parse().map_err(|_| CliError::Parse(format!("invalid value '{v}' for shape"))))
                .transpose()?,
            lla_steps: take(map, "lla_steps", 5)?,
            adaptive_exponent: take(map, "adaptive_exponent", 1.0)?,
            adaptive_perturbation: one_of(map, "adaptive_perturbation", "one_over_n", &["none", "one_over_n"])?,
            n_points: take(map, "n_points", 100)?,
            eps: take(map, "eps", 1e-3)?,
            grid: map.get("grid").map(|s| parse_list(s, "grid")).transpose()?,
            ridge_eps: take(map, "ridge_eps", 1e-3)?,
            cv_k: take(map, "cv_k", 5)?,
            cv_rule: one_of(map, "cv_rule", "min", &["min", "1se"])?,
            seed: take(map, "seed", 0)?,
            criterion: one_of(map, "criterion", "bic", &["aic", "bic", "ebic"])?,
            ebic_gamma: take(map, "ebic_gamma", 0.5)?,
            noise,
            standardize: parse_bool(map, "standardize", true)?,
            intercept: parse_bool(map, "intercept", true)?,
            max_iter: take(map, "max_iter", 2000)?,
            rel_tol: take(map, "rel_tol", 1e-8)?,
            residual_tol: take(map, "residual_tol", 1e-6)?,
            out: map.get("out").cloned(),
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.command == "fit" && self.pen_val.is_none() {
            return bad("fit needs pen_val (a number or 'max')".into());
        }
        if let Some(PenValue::Value(v)) = self.pen_val {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("pen_val must be >= 0, got {v}"));
            }
        }
        if self.command == "tune-cv" && self.cv_k < 2 {
            return bad(format!("tune-cv needs cv_k >= 2, got {}", self.cv_k));
        }
        if self.flavor != Flavor::Convex && self.cv_k < 2 {
            return bad("the adaptive and concave flavors tune their initializer by CV and need cv_k >= 2".into());
        }
        if self.flavor != Flavor::Convex
            && !matches!(
                self.penalty.as_str(),
                "lasso" | "group_lasso" | "multi_task_lasso" | "nuclear_norm"
            )
        {
            return bad(format!(
                "flavor needs lasso, group_lasso, multi_task_lasso or nuclear_norm, got {}",
                self.penalty
            ));
        }
        if matches!(self.penalty.as_str(), "group_lasso" | "sparse_group_lasso") && self.groups.is_none() {
            return bad(format!("{} needs a groups file", self.penalty));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad(format!("eps must lie in (0, 1), got {}", self.eps));
        }
        if self.n_points == 0 || self.lla_steps == 0 || self.max_iter == 0 {
            return bad("n_points, lla_steps and max_iter must be positive".into());
        }
        Ok(())
    }

    /// Key/value form that reproduces this job when used as a config file.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        let f = |v: f64| format!("{v:?}");
        put("data", self.data.clone());
        put("response", self.response.join(","));
        if let Some(w) = &self.weights {
            put("weights", w.clone());
        }
        if let Some(o) = &self.offsets {
            put("offsets", o.clone());
        }
        put("loss", self.loss.clone());
        if let Some(c) = self.classes {
            put("classes", c.to_string());
        }
        put("huber_knot", f(self.huber_knot));
        put("quantile_level", f(self.quantile_level));
        put("quantile_smoothing", f(self.quantile_smoothing));
        put("penalty", self.penalty.clone());
        put("mix", f(self.mix));
        if let Some(g) = &self.groups {
            put("groups", g.clone());
        }
        match &self.pen_val {
            Some(PenValue::Max) => put("pen_val", "max".into()),
            Some(PenValue::Value(v)) => put("pen_val", f(*v)),
            None => {}
        }
        put(
            "flavor",
            match self.flavor {
                Flavor::Convex => "convex",
                Flavor::Adaptive => "adaptive",
                Flavor::Scad => "scad",
                Flavor::Mcp => "mcp",
            }
            .into(),
        );
        if let Some(s) = self.shape {
            put("shape", f(s));
        }
        put("lla_steps", self.lla_steps.to_string());
        put("adaptive_exponent", f(self.adaptive_exponent));
        put("adaptive_perturbation", self.adaptive_perturbation.clone());
        put("n_points", self.n_points.to_string());
        put("eps", f(self.eps));
        if let Some(g) = &self.grid {
            put("grid", g.iter().map(|v| f(*v)).collect::<Vec<_>>().join(","));
        }
        put("ridge_eps", f(self.ridge_eps));
        put("cv_k", self.cv_k.to_string());
        put("cv_rule", self.cv_rule.clone());
        put("seed", self.seed.to_string());
        put("criterion", self.criterion.clone());
        put("ebic_gamma", f(self.ebic_gamma));
        put(
            "noise",
            match self.noise {
                Noise::PlugIn => "plugin".into(),
                Noise::Reid => "reid".into(),
                Noise::Fixed(v) => f(v),
            },
        );
        put("standardize", self.standardize.to_string());
        put("intercept", self.intercept.to_string());
        put("max_iter", self.max_iter.to_string());
        put("rel_tol", f(self.rel_tol));
        put("residual_tol", f(self.residual_tol));
        if let Some(o) = &self.out {
            put("out", o.clone());
        }
        m
    }
}
