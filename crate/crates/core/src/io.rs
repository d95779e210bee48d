//! Run configuration, field files and canonical JSON reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::ObstacleShape;
use crate::kirchhoff_routh::Region;
use crate::patch::SolveOptions;

/// Circulation: a number, or `"critical"` for `bπ I_top` once `ρ` is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Value(f64),
    Keyword(GammaKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaKeyword {
    Critical,
}

impl GammaSpec {
    pub fn resolve(&self, b: f64, i_top: f64) -> f64 {
        match self {
            GammaSpec::Value(g) => *g,
            GammaSpec::Keyword(GammaKeyword::Critical) => b * std::f64::consts::PI * i_top,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionChoice {
    Window,
    Layer,
    Exterior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub panels: usize,
    pub half_width: f64,
    pub h: f64,
    /// Landscape lattice spacing for window and exterior scans; defaults to `h`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landscape_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub b: f64,
    pub gamma: GammaSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_list: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimeConfig {
    pub sigma: f64,
    pub delta: f64,
    pub theta1: f64,
    pub theta2: f64,
    /// Target region of `solve` and `sweep`.
    pub region: RegionChoice,
    /// Regions scanned by `landscape`.
    pub landscape_regions: Vec<RegionChoice>,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        Self {
            sigma: 0.05,
            delta: 0.5,
            theta1: 0.05,
            theta2: 20.0,
            region: RegionChoice::Window,
            landscape_regions: vec![RegionChoice::Window],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub relaxation: f64,
    pub mu_tolerance: f64,
    pub support_budget: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self {
            max_iterations: d.max_iterations,
            relaxation: d.relaxation,
            mu_tolerance: d.mu_tolerance,
            support_budget: d.support_budget,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolveOptions {
        SolveOptions {
            max_iterations: self.max_iterations,
            mu_tolerance: self.mu_tolerance,
            relaxation: self.relaxation,
            support_budget: self.support_budget,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub obstacle: ObstacleShape,
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub regime: RegimeConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::Validation { field: field.into(), reason: reason.into() }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn small_eps(field: &str, v: f64) -> Result<()> {
    positive(field, v)?;
    if v < 1.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be below 1, got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.panels < 8 {
            return Err(invalid("grid.panels", format!("need at least 8 panels, got {}", self.grid.panels)));
        }
        positive("grid.half_width", self.grid.half_width)?;
        positive("grid.h", self.grid.h)?;
        if let Some(h) = self.grid.landscape_h {
            positive("grid.landscape_h", h)?;
        }
        positive("physics.b", self.physics.b)?;
        if let GammaSpec::Value(g) = self.physics.gamma {
            positive("physics.gamma", g)?;
        }
        if let Some(e) = self.physics.eps {
            small_eps("physics.eps", e)?;
        }
        if let Some(list) = &self.physics.eps_list {
            if list.is_empty() {
                return Err(invalid("physics.eps_list", "must not be empty"));
            }
            for &e in list {
                small_eps("physics.eps_list", e)?;
            }
            if list.windows(2).any(|w| !(w[1] < w[0])) {
                return Err(invalid("physics.eps_list", "must be strictly decreasing"));
            }
        }
        let r = &self.regime;
        positive("regime.sigma", r.sigma)?;
        positive("regime.delta", r.delta)?;
        positive("regime.theta1", r.theta1)?;
        positive("regime.theta2", r.theta2)?;
        if r.theta1 >= r.theta2 {
            return Err(invalid("regime.theta2", format!("must exceed theta1 = {}", r.theta1)));
        }
        if r.landscape_regions.is_empty() {
            return Err(invalid("regime.landscape_regions", "must not be empty"));
        }
        let s = &self.solver;
        if s.max_iterations == 0 {
            return Err(invalid("solver.max_iterations", "must be at least 1"));
        }
        if !(s.relaxation > 0.0 && s.relaxation <= 1.0) {
            return Err(invalid("solver.relaxation", format!("must lie in (0, 1], got {}", s.relaxation)));
        }
        positive("solver.mu_tolerance", s.mu_tolerance)?;
        if !(s.support_budget >= 1.0 && s.support_budget.is_finite()) {
            return Err(invalid("solver.support_budget", format!("must be at least 1, got {}", s.support_budget)));
        }
        Ok(())
    }

    /// Region of `choice` with this configuration's knobs.
    pub fn region(&self, choice: RegionChoice) -> Region {
        match choice {
            RegionChoice::Window => Region::Window { half_width: self.grid.half_width },
            RegionChoice::Layer => Region::Layer { theta1: self.regime.theta1, theta2: self.regime.theta2 },
            RegionChoice::Exterior => Region::Exterior { delta: self.regime.delta, half_width: self.grid.half_width },
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Parse and validate a TOML run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&fs::read_to_string(path)?)
}

/// Scalar field sampled at points, written as CSV behind a `#` header.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldFile {
    pub quantity: String,
    pub units: String,
    /// Identifies the sampling layout, e.g. a grid layout hash.
    pub grid_hash: String,
    /// `(x₁, x₂, value)`.
    pub rows: Vec<[f64; 3]>,
}

fn body_of(rows: &[[f64; 3]]) -> String {
    let mut body = String::with_capacity(rows.len() * 72);
    for r in rows {
        writeln!(body, "{:.16e},{:.16e},{:.16e}", r[0], r[1], r[2]).expect("string write");
    }
    body
}

fn checksum(body: &str) -> String {
    Sha256::digest(body.as_bytes())[..16].iter().map(|b| format!("{b:02x}")).collect()
}

impl FieldFile {
    pub fn new(quantity: &str, units: &str, grid_hash: &str, rows: Vec<[f64; 3]>) -> Self {
        Self { quantity: quantity.into(), units: units.into(), grid_hash: grid_hash.into(), rows }
    }

    pub fn render(&self) -> Result<String> {
        if self.rows.is_empty() {
            return Err(Error::Precondition(format!("field `{}` has no rows", self.quantity)));
        }
        let body = body_of(&self.rows);
        Ok(format!(
            "# quantity: {}\n# units: {}\n# grid: {}\n# rows: {}\n# checksum: {}\nx1,x2,value\n{body}",
            self.quantity,
            self.units,
            self.grid_hash,
            self.rows.len(),
            checksum(&body)
        ))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut header = std::collections::BTreeMap::new();
        let (head, body) = text
            .split_once("x1,x2,value\n")
            .ok_or_else(|| Error::Load("missing column header".into()))?;
        for line in head.lines() {
            if let Some(h) = line.strip_prefix("# ") {
                let (k, v) = h.split_once(": ").ok_or_else(|| Error::Load(format!("malformed header line `{line}`")))?;
                header.insert(k.to_string(), v.to_string());
            } else {
                return Err(Error::Load(format!("unexpected line `{line}` before the column header")));
            }
        }
        let get = |k: &str| header.get(k).cloned().ok_or_else(|| Error::Load(format!("missing header `{k}`")));
        let mut rows = Vec::new();
        for line in body.lines() {
            let v: Vec<f64> = line
                .split(',')
                .map(|s| s.parse::<f64>().map_err(|e| Error::Load(format!("bad value `{s}`: {e}"))))
                .collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(Error::Load(format!("row `{line}` does not have three columns")));
            }
            rows.push([v[0], v[1], v[2]]);
        }
        let count: usize = get("rows")?.parse().map_err(|_| Error::Load("row count is not an integer".into()))?;
        if count != rows.len() {
            return Err(Error::Load(format!("header promises {count} rows, found {}", rows.len())));
        }
        if checksum(body) != get("checksum")? {
            return Err(Error::Load("checksum mismatch".into()));
        }
        Ok(Self { quantity: get("quantity")?, units: get("units")?, grid_hash: get("grid")?, rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = self.render()?;
        fs::write(path, text)?;
        Ok(())
    }

    /// Read a field, rejecting files written for a different layout.
    pub fn read(path: &Path, expected_grid: Option<&str>) -> Result<Self> {
        let field = Self::parse(&fs::read_to_string(path)?)?;
        if let Some(hash) = expected_grid {
            if field.grid_hash != hash {
                return Err(Error::Load(format!("grid hash {} does not match {hash}", field.grid_hash)));
            }
        }
        Ok(field)
    }
}

/// JSON with lexicographically sorted keys and a trailing newline.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Precondition(e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Precondition(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_report<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, canonical_json(value)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[obstacle]
shape = "disk"
center = [0.0, 1.5707963267948966]
radius = 0.5

[grid]
panels = 128
half_width = 8.0
h = 0.02454369260617026

[physics]
b = 1.0
gamma = "critical"
eps = 0.05
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.regime, RegimeConfig::default());
        assert_eq!((c.regime.sigma, c.regime.delta, c.regime.theta1, c.regime.theta2), (0.05, 0.5, 0.05, 20.0));
        assert_eq!(c.physics.gamma, GammaSpec::Keyword(GammaKeyword::Critical));
        assert!((c.physics.gamma.resolve(2.0, 0.25) - 0.5 * std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn numeric_gamma_is_kept() {
        let c = parse_config(&MINIMAL.replace("\"critical\"", "2.5")).unwrap();
        assert_eq!(c.physics.gamma.resolve(1.0, 9.0), 2.5);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let r = parse_config(&MINIMAL.replace("eps = 0.05", "eps = 0.05\nepsilon = 0.1"));
        assert!(matches!(r, Err(Error::Config(_))), "{r:?}");
        let r = parse_config(&format!("{MINIMAL}\n[extra]\nx = 1\n"));
        assert!(matches!(r, Err(Error::Config(_))), "{r:?}");
    }

    #[test]
    fn negative_h_names_the_field() {
        let r = parse_config(&MINIMAL.replace("h = 0.0245", "h = -0.0245"));
        assert!(matches!(r, Err(Error::Validation { ref field, .. }) if field == "grid.h"), "{r:?}");
    }

    #[test]
    fn eps_must_be_below_one() {
        let r = parse_config(&MINIMAL.replace("eps = 0.05", "eps = 1.5"));
        assert!(matches!(r, Err(Error::Validation { ref field, .. }) if field == "physics.eps"));
        let r = parse_config(&MINIMAL.replace("eps = 0.05", "eps_list = [0.05, 0.1]"));
        assert!(matches!(r, Err(Error::Validation { ref field, .. }) if field == "physics.eps_list"));
    }

    #[test]
    fn config_round_trips() {
        let mut c = parse_config(MINIMAL).unwrap();
        c.physics.eps_list = Some(vec![0.1, 0.05, 0.025]);
        c.regime.landscape_regions = vec![RegionChoice::Layer, RegionChoice::Exterior];
        c.output.seed = 7;
        c.output.dir = Some("out/run".into());
        let again = parse_config(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn field_round_trip_is_exact() {
        let rows = vec![[0.1, 0.2, -1.0 / 3.0], [1e-300, std::f64::consts::PI, 12345.678901234567]];
        let f = FieldFile::new("robin", "1", "abcd", rows);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        f.write(&path).unwrap();
        assert_eq!(FieldFile::read(&path, Some("abcd")).unwrap(), f);
    }

    #[test]
    fn tampered_field_is_rejected() {
        let f = FieldFile::new("robin", "1", "abcd", vec![[0.0, 1.0, 2.0]]);
        let text = f.render().unwrap();
        assert!(matches!(FieldFile::parse(&text.replace("2.0000000000000000e0", "2.0000000000000001e0")), Err(Error::Load(_))));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        fs::write(&path, text.replace("# grid: abcd", "# grid: abce")).unwrap();
        assert!(matches!(FieldFile::read(&path, Some("abcd")), Err(Error::Load(_))));
    }

    #[test]
    fn empty_field_is_never_written() {
        let f = FieldFile::new("kr", "1", "abcd", vec![]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        assert!(f.write(&path).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn canonical_json_sorts_keys() {
        #[derive(Serialize)]
        struct R {
            zeta: f64,
            alpha: u32,
        }
        let s = canonical_json(&R { zeta: 0.1, alpha: 2 }).unwrap();
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
        assert_eq!(s, canonical_json(&R { zeta: 0.1, alpha: 2 }).unwrap());
    }
}
