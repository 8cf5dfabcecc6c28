//! Run configuration: TOML file, `--set` overrides, validation and
//! construction of the numerical objects.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use gpam::functional::{builtin_functional, Functional, Profile};
use gpam::minimizer::MinimizeOptions;
use gpam::noise::NormFrame;
use gpam::nonlinearity::Nonlinearity;
use gpam::solver::SolveContext;
use gpam::spectral::{Cutoff, Field, MollifierSpec, TorusGrid};
use gpam::taylor::MAX_ORDER;

/// Invalid configuration or override; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub noise: NoiseConfig,
    pub model: ModelConfig,
    pub functional: FunctionalConfig,
    pub expansion: ExpansionConfig,
    pub mc: McConfig,
    pub minimizer: MinimizerConfig,
    pub norm: NormConfig,
    pub simulate: SimulateConfig,
    pub tails: TailsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub t: f64,
    pub dt: f64,
    /// snapshot stride for exported trajectories
    pub record_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub delta: f64,
    pub seed: u64,
    /// `flat_top` or `bump`
    pub mollifier: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub g: String,
    /// field expression, see [`parse_field`]
    pub u0: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FunctionalConfig {
    pub kind: String,
    pub psi: String,
    pub profile: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub eps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizerConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub probes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormConfig {
    pub scales: usize,
    pub stride: usize,
    /// localisation radius; `inf` disables the indicator
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub eps: f64,
    /// shift `h`: a field expression, or `minimizer`
    pub h: String,
    /// sample index within the noise stream
    pub sample: u64,
    /// highest Taylor term exported alongside the solve
    pub terms: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailsConfig {
    /// exponent `p` in `E[exp(−p·Q̂/2)]`
    pub p: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig { n: 32 },
            time: TimeConfig {
                t: 0.1,
                dt: 0.1 / 64.0,
                record_every: 8,
            },
            noise: NoiseConfig {
                delta: 0.125,
                seed: 0,
                mollifier: "flat_top".into(),
            },
            model: ModelConfig {
                g: "cos".into(),
                u0: "-0.08 + cos(1,0,0.5)".into(),
            },
            functional: FunctionalConfig {
                kind: "terminal".into(),
                psi: "25".into(),
                profile: "tanh".into(),
            },
            expansion: ExpansionConfig {
                n: 2,
                eps: vec![0.4, 0.2, 0.1, 0.05],
            },
            mc: McConfig { samples: 1000 },
            minimizer: MinimizerConfig {
                tol: 1e-6,
                max_iter: 200,
                probes: 8,
            },
            norm: NormConfig {
                scales: 3,
                stride: 4,
                rho: f64::INFINITY,
            },
            simulate: SimulateConfig {
                eps: 0.1,
                h: "0".into(),
                sample: 0,
                terms: 0,
            },
            tails: TailsConfig { p: 1.1 },
        }
    }
}

macro_rules! section_defaults {
    ($($ty:ident => $field:ident),* $(,)?) => {
        $(impl Default for $ty {
            fn default() -> Self {
                RunConfig::default().$field
            }
        })*
    };
}

section_defaults!(
    GridConfig => grid,
    TimeConfig => time,
    NoiseConfig => noise,
    ModelConfig => model,
    FunctionalConfig => functional,
    ExpansionConfig => expansion,
    McConfig => mc,
    MinimizerConfig => minimizer,
    NormConfig => norm,
    SimulateConfig => simulate,
    TailsConfig => tails,
);

/// `key=value` with a dotted key; the value is read as a TOML literal and
/// falls back to a plain string.
fn apply_override(table: &mut toml::Table, reference: &toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| bad(format!("override `{assignment}` is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad(format!("malformed key `{key}`")));
    }
    let wants_string = parts
        .iter()
        .try_fold(&toml::Value::Table(reference.clone()), |v, p| v.get(p))
        .is_some_and(|v| v.is_str());
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) if !wants_string => t.remove("v").expect("parsed key"),
        _ => toml::Value::String(raw.trim_matches('"').to_string()),
    };
    let mut cursor = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| bad(format!("`{part}` in `{key}` is not a section")))?;
    }
    cursor.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Reject keys absent from the default configuration, naming the full path.
fn check_keys(table: &toml::Table, reference: &toml::Table, prefix: &str) -> Result<(), ConfigError> {
    for (key, value) in table {
        let path = format!("{prefix}{key}");
        match (value, reference.get(key)) {
            (_, None) => return Err(bad(format!("unknown key `{path}`"))),
            (toml::Value::Table(inner), Some(toml::Value::Table(known))) => check_keys(inner, known, &format!("{path}."))?,
            (toml::Value::Table(_), Some(_)) => return Err(bad(format!("`{path}` is a value, not a section"))),
            (_, Some(toml::Value::Table(_))) => return Err(bad(format!("`{path}` is a section, not a value"))),
            _ => {}
        }
    }
    Ok(())
}

impl RunConfig {
    /// Parse TOML text, apply overrides, then validate.
    pub fn from_sources(text: Option<&str>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = match text {
            Some(t) => toml::from_str::<toml::Table>(t).map_err(|e| bad(e.to_string()))?,
            None => toml::Table::new(),
        };
        let reference = toml::Table::try_from(RunConfig::default()).expect("defaults serialise");
        for o in overrides {
            apply_override(&mut table, &reference, o)?;
        }
        check_keys(&table, &reference, "")?;
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| bad(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| bad(format!("cannot read {}: {e}", p.display())))?),
            None => None,
        };
        Self::from_sources(text.as_deref(), overrides)
    }

    pub fn steps(&self) -> Result<usize, ConfigError> {
        let ratio = self.time.t / self.time.dt;
        let steps = ratio.round();
        if !(steps >= 1.0) || (ratio - steps).abs() > 1e-9 * ratio {
            return Err(bad(format!(
                "time.dt = {} does not divide time.T = {}",
                self.time.dt, self.time.t
            )));
        }
        Ok(steps as usize)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.time.t > 0.0 && self.time.dt > 0.0) {
            return Err(bad("time.T and time.dt must be positive"));
        }
        let steps = self.steps()?;
        if self.time.record_every == 0 || steps % self.time.record_every != 0 {
            return Err(bad(format!("time.record_every must divide the {steps} time steps")));
        }
        if self.expansion.n + 2 > MAX_ORDER {
            return Err(bad(format!("expansion.N must be at most {}", MAX_ORDER - 2)));
        }
        if self.expansion.eps.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return Err(bad("expansion.eps entries must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.simulate.eps) {
            return Err(bad("simulate.eps must lie in [0, 1]"));
        }
        if self.simulate.terms > MAX_ORDER {
            return Err(bad(format!("simulate.terms must be at most {MAX_ORDER}")));
        }
        if self.mc.samples < 2 {
            return Err(bad("mc.samples must be at least 2"));
        }
        if !(self.minimizer.tol > 0.0) {
            return Err(bad("minimizer.tol must be positive"));
        }
        if !(self.norm.rho > 0.0) || self.norm.scales == 0 || self.norm.stride == 0 {
            return Err(bad("norm.rho must be positive, norm.scales and norm.stride at least 1"));
        }
        if !(self.tails.p > 0.0) {
            return Err(bad("tails.p must be positive"));
        }
        // building the objects runs the remaining checks
        self.context()?;
        self.functional()?;
        if self.simulate.h != "minimizer" {
            parse_field(&self.simulate.h, &self.grid()?)?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TorusGrid, ConfigError> {
        TorusGrid::new(self.grid.n).map_err(|e| bad(format!("grid.n: {e}")))
    }

    pub fn mollifier(&self) -> Result<MollifierSpec, ConfigError> {
        let profile = match self.noise.mollifier.as_str() {
            "flat_top" => Cutoff::FlatTop,
            "bump" => Cutoff::Bump,
            other => return Err(bad(format!("noise.mollifier: unknown profile `{other}`"))),
        };
        Ok(MollifierSpec::new(profile, self.noise.delta))
    }

    pub fn context(&self) -> Result<SolveContext, ConfigError> {
        let grid = self.grid()?;
        let u0 = parse_field(&self.model.u0, &grid).map_err(|e| bad(format!("model.u0: {}", e.0)))?;
        let g = Nonlinearity::from_name(&self.model.g).map_err(|e| bad(format!("model.g: {e}")))?;
        SolveContext::new(u0, self.time.t, self.steps()?, g, self.mollifier()?)
            .map_err(|e| bad(format!("noise.delta: {e}")))
    }

    pub fn functional(&self) -> Result<Box<dyn Functional>, ConfigError> {
        let grid = self.grid()?;
        let profile = Profile::from_name(&self.functional.profile).map_err(|e| bad(format!("functional.profile: {e}")))?;
        let psi = parse_field(&self.functional.psi, &grid).map_err(|e| bad(format!("functional.psi: {}", e.0)))?;
        builtin_functional(&self.functional.kind, profile, psi).map_err(|e| bad(format!("functional.kind: {e}")))
    }

    pub fn minimize_options(&self) -> MinimizeOptions {
        MinimizeOptions {
            tol: self.minimizer.tol,
            max_iter: self.minimizer.max_iter,
            random_probes: self.minimizer.probes,
            ..MinimizeOptions::default()
        }
    }

    pub fn norm_frame(&self) -> NormFrame {
        NormFrame {
            scales: self.norm.scales,
            stride: self.norm.stride,
        }
    }
}

/// Field expressions: a `+`-separated sum of terms, each a number (constant),
/// `cos(k1,k2,amp)`, `sin(k1,k2,amp)`, or `file:PATH` for a field CSV.
pub fn parse_field(expr: &str, grid: &TorusGrid) -> Result<Field, ConfigError> {
    let expr = expr.trim();
    if let Some(path) = expr.strip_prefix("file:") {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {path}: {e}")))?;
        let field = gpam::io::field_from_csv(&text).map_err(|e| bad(e.to_string()))?;
        if field.grid() != grid {
            return Err(bad(format!("{path} holds a {}² field, grid is {}²", field.grid().n(), grid.n())));
        }
        return Ok(field);
    }
    let mut acc = Field::zeros(grid);
    for (sign, term) in split_terms(expr) {
        let term = term.trim();
        if term.is_empty() {
            return Err(bad(format!("empty term in `{expr}`")));
        }
        let field = if let Ok(c) = term.parse::<f64>() {
            Field::constant(grid, c)
        } else if let Some(args) = term.strip_prefix("cos(").and_then(|s| s.strip_suffix(')')) {
            let (k1, k2, amp) = mode_args(args, term)?;
            Field::cosine_mode(grid, k1, k2, amp)
        } else if let Some(args) = term.strip_prefix("sin(").and_then(|s| s.strip_suffix(')')) {
            let (k1, k2, amp) = mode_args(args, term)?;
            Field::sine_mode(grid, k1, k2, amp)
        } else {
            return Err(bad(format!("cannot parse field term `{term}`")));
        };
        acc = acc.axpy(sign, &field);
    }
    Ok(acc)
}

/// Split into signed terms on `+`/`-` outside parentheses, keeping exponents
/// like `1e-3` intact.
fn split_terms(expr: &str) -> Vec<(f64, String)> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut sign = 1.0;
    let mut current = String::new();
    let mut prev = ' ';
    for c in expr.chars() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            '+' | '-' if depth == 0 && !matches!(prev, 'e' | 'E') => {
                let s = if c == '-' { -1.0 } else { 1.0 };
                if current.trim().is_empty() {
                    sign *= s;
                } else {
                    out.push((sign, std::mem::take(&mut current)));
                    sign = s;
                }
                prev = c;
                continue;
            }
            _ => {}
        }
        current.push(c);
        if !c.is_whitespace() {
            prev = c;
        }
    }
    out.push((sign, current));
    out
}

fn mode_args(args: &str, term: &str) -> Result<(i64, i64, f64), ConfigError> {
    let parts: Vec<&str> = args.split(',').map(str::trim).collect();
    let parse = || -> Option<(i64, i64, f64)> {
        match parts.as_slice() {
            [k1, k2] => Some((k1.parse().ok()?, k2.parse().ok()?, 1.0)),
            [k1, k2, a] => Some((k1.parse().ok()?, k2.parse().ok()?, a.parse().ok()?)),
            _ => None,
        }
    };
    parse().ok_or_else(|| bad(format!("expected (k1,k2[,amp]) in `{term}`")))
}
