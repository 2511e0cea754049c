//! Run configuration: one TOML document with sections `scenario`, `kernel`, `grid`,
//! `moments`, `certificates`, `metrics`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::state::SimParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Hartree,
    Vlasov,
    /// Hartree run and its Vlasov twin from matched initial data.
    Paired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    Coherent,
    Mixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    pub d: usize,
    pub hbar: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_initial")]
    pub initial: Initial,
    #[serde(default)]
    pub center: Vec<f64>,
    #[serde(default)]
    pub momentum: Vec<f64>,
    /// Position width of the coherent packet (or of each mixture packet).
    pub sigma: f64,
    #[serde(default = "one_usize")]
    pub components: usize,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default = "default_particles")]
    pub particles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub points: usize,
    pub box_length: f64,
    pub dt: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsSection {
    #[serde(default = "default_orders")]
    pub orders: Vec<usize>,
    #[serde(default)]
    pub lp: Vec<f64>,
    #[serde(default = "default_every")]
    pub every: usize,
}

impl Default for MomentsSection {
    fn default() -> Self {
        MomentsSection { orders: default_orders(), lp: Vec::new(), every: default_every() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificatesSection {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "four")]
    pub n: usize,
    #[serde(default = "infinity")]
    pub r: f64,
    #[serde(default = "default_c4")]
    pub c4: f64,
    /// Quasi-convexity constant of the short-time bound; sharp value when absent.
    #[serde(default)]
    pub c_n: Option<f64>,
    /// Absolute constant multiplying the drive.
    #[serde(default = "one")]
    pub drive_constant: f64,
    /// Short-time window `T`.
    #[serde(default = "one")]
    pub short_time: f64,
    #[serde(default = "default_slope_tolerance")]
    pub slope_tolerance: f64,
}

impl Default for CertificatesSection {
    fn default() -> Self {
        CertificatesSection {
            enabled: true,
            n: 4,
            r: f64::INFINITY,
            c4: default_c4(),
            c_n: None,
            drive_constant: 1.0,
            short_time: 1.0,
            slope_tolerance: default_slope_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default)]
    pub enabled: bool,
    /// Entropic regularization in units of the squared phase-grid spacing.
    #[serde(default = "default_eps")]
    pub epsilon_cells: f64,
    #[serde(default = "default_phase_points")]
    pub points_x: usize,
    #[serde(default = "default_phase_points")]
    pub points_xi: usize,
    /// Phase-grid half width in standard deviations of the sampled state.
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    /// Compare every `sample_every` steps.
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    /// Dimensional constant of the growth rate.
    #[serde(default = "one")]
    pub c_d: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            enabled: false,
            epsilon_cells: default_eps(),
            points_x: default_phase_points(),
            points_xi: default_phase_points(),
            half_width: default_half_width(),
            sample_every: default_sample_every(),
            c_d: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioSection,
    #[serde(default = "KernelSpec::none")]
    pub kernel: KernelSpec,
    pub grid: GridSection,
    #[serde(default)]
    pub moments: MomentsSection,
    #[serde(default)]
    pub certificates: CertificatesSection,
    #[serde(default)]
    pub metrics: MetricsSection,
}

fn default_mode() -> Mode {
    Mode::Hartree
}
fn default_initial() -> Initial {
    Initial::Coherent
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn four() -> usize {
    4
}
fn yes() -> bool {
    true
}
fn infinity() -> f64 {
    f64::INFINITY
}
fn default_particles() -> usize {
    20_000
}
fn default_orders() -> Vec<usize> {
    vec![2, 4]
}
fn default_every() -> usize {
    10
}
fn default_c4() -> f64 {
    crate::certificates::DEFAULT_C4
}
fn default_slope_tolerance() -> f64 {
    0.05
}
fn default_eps() -> f64 {
    0.5
}
fn default_phase_points() -> usize {
    6
}
fn default_half_width() -> f64 {
    3.0
}
fn default_sample_every() -> usize {
    50
}

/// 1-based line of `key` inside `[section]`, or of the section header.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

fn field_error(text: &str, section: &str, key: &str, message: impl Into<String>) -> Error {
    let location = match locate(text, section, key) {
        Some(line) => format!("line {line}, field {section}.{key}"),
        None => format!("field {section}.{key}"),
    };
    Error::Config { location, message: message.into() }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => format!("line {}", text[..span.start.min(text.len())].matches('\n').count() + 1),
                None => "document".to_string(),
            };
            Error::Config { location, message: e.message().to_string() }
        })?;
        cfg.validate(text)?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Config::parse(&text)
    }

    fn validate(&self, text: &str) -> Result<()> {
        let s = &self.scenario;
        let err = |section: &str, key: &str, msg: &str| Err(field_error(text, section, key, msg));
        if !(1..=3).contains(&s.d) {
            return err("scenario", "d", "must be 1, 2 or 3");
        }
        if !(s.hbar > 0.0 && s.hbar.is_finite()) {
            return err("scenario", "hbar", "must be a positive finite number");
        }
        if !(s.sigma > 0.0) {
            return err("scenario", "sigma", "must be positive");
        }
        if !(s.mass > 0.0) {
            return err("scenario", "mass", "must be positive");
        }
        if s.components == 0 {
            return err("scenario", "components", "must be >= 1");
        }
        if s.particles == 0 {
            return err("scenario", "particles", "must be >= 1");
        }
        if s.center.len() > s.d {
            return err("scenario", "center", "has more entries than d");
        }
        if s.momentum.len() > s.d {
            return err("scenario", "momentum", "has more entries than d");
        }
        if s.mode != Mode::Hartree && s.initial == Initial::Mixture {
            return err("scenario", "initial", "a mixture has no classical twin; use mode = \"hartree\"");
        }
        let g = &self.grid;
        if g.points < 4 {
            return err("grid", "points", "must be >= 4");
        }
        if !(g.box_length > 0.0) {
            return err("grid", "box_length", "must be positive");
        }
        if !(g.dt > 0.0) {
            return err("grid", "dt", "must be positive");
        }
        if !(g.t_final >= 0.0) {
            return err("grid", "t_final", "must be >= 0");
        }
        if self.moments.orders.iter().any(|n| *n == 0) {
            return err("moments", "orders", "orders must be >= 1");
        }
        if self.moments.lp.iter().any(|p| !(*p >= 1.0)) {
            return err("moments", "lp", "exponents must be >= 1");
        }
        if self.certificates.enabled && !self.moments.orders.contains(&self.certificates.n) {
            return err("certificates", "n", "must be one of moments.orders");
        }
        if self.certificates.enabled && !(self.certificates.short_time > 0.0) {
            return err("certificates", "short_time", "must be positive");
        }
        if !(self.metrics.epsilon_cells > 0.0) {
            return err("metrics", "epsilon_cells", "must be positive");
        }
        if self.metrics.points_x < 2 || self.metrics.points_xi < 2 {
            return err("metrics", "points_x", "phase axes need >= 2 points");
        }
        self.kernel
            .validate(s.d)
            .map_err(|e| field_error(text, "kernel", "family", e.to_string()))?;
        self.params()
            .validate()
            .map_err(|e| field_error(text, "grid", "points", e.to_string()))?;
        Ok(())
    }

    pub fn params(&self) -> SimParams {
        SimParams {
            d: self.scenario.d,
            hbar: self.scenario.hbar,
            box_length: self.grid.box_length,
            grid_points: self.grid.points,
            dt: self.grid.dt,
            t_final: self.grid.t_final,
            seed: self.scenario.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[scenario]
name = "t"
d = 1
hbar = 0.5
sigma = 1.0

[grid]
points = 64
box_length = 20.0
dt = 0.01
t_final = 1.0
"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let c = Config::parse(BASE).unwrap();
        assert_eq!(c.moments.orders, vec![2, 4]);
        assert!(c.kernel.is_none());
        assert!(c.certificates.r.is_infinite());
        assert_eq!(c.params().grid_points, 64);
    }

    #[test]
    fn negative_hbar_names_line_and_field() {
        let text = BASE.replace("hbar = 0.5", "hbar = -0.5");
        match Config::parse(&text) {
            Err(Error::Config { location, .. }) => assert_eq!(location, "line 5, field scenario.hbar"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_and_unknown_fields_carry_lines() {
        let text = BASE.replace("sigma = 1.0", "sigma = 1.0\nbogus = 3");
        match Config::parse(&text) {
            Err(Error::Config { location, message }) => {
                assert_eq!(location, "line 7");
                assert!(message.contains("bogus"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn kernel_section_parses() {
        let text = format!("{BASE}\n[kernel]\nfamily = \"truncated_coulomb\"\neps_tail = 0.5\nsign = 1.0\n");
        assert!(Config::parse(&text).is_err(), "truncated Coulomb is rejected in d = 1");
        let text = text.replace("d = 1", "d = 3").replace("points = 64", "points = 16");
        let c = Config::parse(&text).unwrap();
        assert_eq!(c.kernel, KernelSpec::truncated_coulomb(1.0, 0.5));
    }
}
