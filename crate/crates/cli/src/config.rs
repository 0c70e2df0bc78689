//! Run configuration: a single JSON document, deserialized with JSON-pointer
//! error locations and validated against the grid it will run on.

use std::fmt;
use std::path::{Path, PathBuf};

use epflow::background::{critical_field, PhasePlaneConfig};
use epflow::boundary::{Basis, BoundaryData, ChargeProfile, ChargeTerm, FourierSeries, Mode};
use epflow::elliptic::KrylovOptions;
use epflow::fixpoint::SolverOptions;
use epflow::gas::GasModel;
use epflow::grid::Grid3;
use epflow::verify::VerifyOptions;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

/// Upper bound on grid nodes accepted from a config.
pub const MAX_NODES: usize = 1 << 24;

/// Fraction of the way from `b₀` toward the sonic density used by
/// `"auto-near-b0"`.
pub const AUTO_NEAR_B0_OFFSET: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: schema violation at {pointer}: {message}")]
    Schema {
        path: PathBuf,
        pointer: String,
        message: String,
    },

    #[error("invalid configuration at {pointer}: {message}")]
    Invalid { pointer: String, message: String },
}

fn invalid(pointer: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        pointer: pointer.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSpec {
    pub gamma: f64,
}

/// Inlet density: a number, or `"auto-near-b0"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InletDensity {
    Value(f64),
    AutoNearB0,
}

impl Serialize for InletDensity {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            InletDensity::Value(v) => s.serialize_f64(*v),
            InletDensity::AutoNearB0 => s.serialize_str("auto-near-b0"),
        }
    }
}

impl<'de> Deserialize<'de> for InletDensity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = InletDensity;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or the string \"auto-near-b0\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<InletDensity, E> {
                Ok(InletDensity::Value(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<InletDensity, E> {
                Ok(InletDensity::Value(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<InletDensity, E> {
                Ok(InletDensity::Value(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<InletDensity, E> {
                match v {
                    "auto-near-b0" => Ok(InletDensity::AutoNearB0),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundSpec {
    pub b0: f64,
    pub j: f64,
    pub rho_inlet: InletDensity,
    /// Inlet field; the critical field of `rho_inlet` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_inlet: Option<f64>,
    /// Minimum number of RK4 steps behind the sampled profile.
    #[serde(default = "default_min_intervals")]
    pub min_intervals: usize,
}

fn default_min_intervals() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
}

/// Lateral coefficients in the square's coordinates:
/// `c · X_k(x₂) · Y_l(x₃)` with the basis fixed by the field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub k: u32,
    pub l: u32,
    pub c: f64,
}

/// `c · x₁^p · cos(kπx₂) · cos(lπx₃)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargeSpec {
    pub p: u32,
    pub k: u32,
    pub l: u32,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryDataSpec {
    pub eps: f64,
    pub beta2_in: Vec<ModeSpec>,
    pub beta3_in: Vec<ModeSpec>,
    pub bernoulli_in: Vec<ModeSpec>,
    pub efield_in: Vec<ModeSpec>,
    pub exit_log_density: Vec<ModeSpec>,
    pub charge: Vec<ChargeSpec>,
}

impl BoundaryDataSpec {
    pub fn to_data(&self) -> BoundaryData {
        let series = |basis, modes: &[ModeSpec]| {
            FourierSeries::new(basis, modes.iter().map(|m| Mode { k: m.k, l: m.l, c: m.c }).collect())
        };
        BoundaryData {
            eps: self.eps,
            beta2_in: series(Basis::SinCos, &self.beta2_in),
            beta3_in: series(Basis::CosSin, &self.beta3_in),
            bernoulli_in: series(Basis::CosCos, &self.bernoulli_in),
            efield_in: series(Basis::CosCos, &self.efield_in),
            exit_log_density: series(Basis::CosCos, &self.exit_log_density),
            charge: ChargeProfile {
                terms: self
                    .charge
                    .iter()
                    .map(|t| ChargeTerm {
                        p: t.p,
                        k: t.k,
                        l: t.l,
                        c: t.c,
                    })
                    .collect(),
            },
        }
    }

    fn validate(&self, grid: &GridSpec) -> Result<(), ConfigError> {
        if !self.eps.is_finite() || self.eps < 0.0 {
            return Err(invalid(
                "/boundary/eps",
                format!("must be finite and non-negative, got {}", self.eps),
            ));
        }
        let lists: [(&str, &[ModeSpec]); 5] = [
            ("beta2_in", &self.beta2_in),
            ("beta3_in", &self.beta3_in),
            ("bernoulli_in", &self.bernoulli_in),
            ("efield_in", &self.efield_in),
            ("exit_log_density", &self.exit_log_density),
        ];
        for (name, modes) in lists {
            for (idx, m) in modes.iter().enumerate() {
                check_mode(&format!("/boundary/{name}/{idx}"), m.k, m.l, m.c, grid)?;
            }
        }
        for (idx, t) in self.charge.iter().enumerate() {
            check_mode(&format!("/boundary/charge/{idx}"), t.k, t.l, t.c, grid)?;
        }
        Ok(())
    }
}

fn check_mode(pointer: &str, k: u32, l: u32, c: f64, grid: &GridSpec) -> Result<(), ConfigError> {
    if !c.is_finite() {
        return Err(invalid(format!("{pointer}/c"), "coefficient is not finite"));
    }
    if 2 * k as usize >= grid.n2 {
        return Err(invalid(
            format!("{pointer}/k"),
            format!(
                "mode k = {k} is not resolvable: need k < n2/2 = {}",
                grid.n2 as f64 / 2.0
            ),
        ));
    }
    if 2 * l as usize >= grid.n3 {
        return Err(invalid(
            format!("{pointer}/l"),
            format!(
                "mode l = {l} is not resolvable: need l < n3/2 = {}",
                grid.n3 as f64 / 2.0
            ),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub tol_fp: f64,
    pub max_outer: usize,
    pub krylov_tol: f64,
    pub krylov_max_iter: usize,
    pub substeps: usize,
    pub relaxation: f64,
    pub trust_factor: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let s = SolverOptions::default();
        Self {
            tol_fp: s.tol_fp,
            max_outer: s.max_outer,
            krylov_tol: s.krylov.tol,
            krylov_max_iter: s.krylov.max_iter,
            substeps: s.substeps,
            relaxation: s.relaxation,
            trust_factor: s.trust_factor,
        }
    }
}

impl SolverSpec {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tol_fp: self.tol_fp,
            max_outer: self.max_outer,
            krylov: KrylovOptions {
                tol: self.krylov_tol,
                max_iter: self.krylov_max_iter,
            },
            substeps: self.substeps,
            relaxation: self.relaxation,
            trust_factor: self.trust_factor,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("tol_fp", self.tol_fp),
            ("krylov_tol", self.krylov_tol),
            ("trust_factor", self.trust_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("/solver/{name}"), format!("must be positive, got {v}")));
            }
        }
        let counts = [
            ("max_outer", self.max_outer),
            ("krylov_max_iter", self.krylov_max_iter),
            ("substeps", self.substeps),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(invalid(format!("/solver/{name}"), "must be at least 1"));
            }
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(invalid(
                "/solver/relaxation",
                format!("must lie in (0, 1], got {}", self.relaxation),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnostic {
    EulerPoisson,
    Bernoulli,
    Vorticity,
    Beltrami,
    Riccati,
}

impl Diagnostic {
    pub const ALL: [Diagnostic; 5] = [
        Diagnostic::EulerPoisson,
        Diagnostic::Bernoulli,
        Diagnostic::Vorticity,
        Diagnostic::Beltrami,
        Diagnostic::Riccati,
    ];
}

fn default_diagnostics() -> Vec<Diagnostic> {
    Diagnostic::ALL.to_vec()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub gas: GasSpec,
    pub background: BackgroundSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub boundary: BoundaryDataSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub verify: VerifyOptions,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_diagnostics")]
    pub diagnostics: Vec<Diagnostic>,
}

impl RunConfig {
    /// Parse and validate a config document.
    pub fn from_json(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let pointer = pointer_of(e.path());
            ConfigError::Schema {
                path: path.to_path_buf(),
                pointer,
                message: e.into_inner().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if GasModel::new(self.gas.gamma).is_err() {
            return Err(invalid("/gas/gamma", format!("must exceed 1, got {}", self.gas.gamma)));
        }
        let g = &self.grid;
        if g.n1 < 5 {
            return Err(invalid(
                "/grid/n1",
                format!("need at least 5 axial nodes, got {}", g.n1),
            ));
        }
        for (name, n) in [("n2", g.n2), ("n3", g.n3)] {
            if n < 4 || n % 2 != 0 {
                return Err(invalid(
                    format!("/grid/{name}"),
                    format!("must be even and at least 4, got {n}"),
                ));
            }
        }
        let nodes = g.n1.saturating_mul(g.n2).saturating_mul(g.n3);
        if nodes > MAX_NODES {
            return Err(invalid(
                "/grid",
                format!("{nodes} nodes exceed the limit of {MAX_NODES}"),
            ));
        }
        if self.background.min_intervals == 0 {
            return Err(invalid("/background/min_intervals", "must be at least 1"));
        }
        self.solver.validate()?;
        if !(self.verify.bernoulli_tol > 0.0) {
            return Err(invalid("/verify/bernoulli_tol", "must be positive"));
        }
        self.boundary.validate(g)?;
        self.phase_plane()?;
        Ok(())
    }

    pub fn gas_model(&self) -> GasModel {
        GasModel::new(self.gas.gamma).expect("validated")
    }

    /// Inlet density after resolving `"auto-near-b0"`.
    pub fn inlet_density(&self) -> Result<f64, ConfigError> {
        let gas = self.gas_model();
        let bg = &self.background;
        match bg.rho_inlet {
            InletDensity::Value(v) => Ok(v),
            InletDensity::AutoNearB0 => {
                let sonic = gas
                    .sonic_density(bg.j)
                    .map_err(|e| invalid("/background/j", e.to_string()))?;
                Ok(bg.b0 - AUTO_NEAR_B0_OFFSET * (bg.b0 - sonic))
            }
        }
    }

    pub fn phase_plane(&self) -> Result<PhasePlaneConfig, ConfigError> {
        let gas = self.gas_model();
        let bg = &self.background;
        let rho = self.inlet_density()?;
        let e = match bg.e_inlet {
            Some(e) => e,
            None => critical_field(&gas, bg.b0, bg.j, rho).map_err(|e| invalid("/background", e.to_string()))?,
        };
        PhasePlaneConfig::new(gas, bg.b0, bg.j, rho, e).map_err(|e| invalid("/background", e.to_string()))
    }

    pub fn grid3(&self) -> Grid3 {
        Grid3::new(self.grid.n1, self.grid.n2, self.grid.n3).expect("validated")
    }

    /// Copy with the grid replaced, revalidated.
    pub fn with_grid(&self, grid: GridSpec) -> Result<Self, ConfigError> {
        let mut out = self.clone();
        out.grid = grid;
        out.validate()?;
        Ok(out)
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self, ConfigError> {
        let mut out = self.clone();
        out.boundary.eps = eps;
        out.validate()?;
        Ok(out)
    }
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{key}")),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "gas": {"gamma": 2.0},
        "background": {"b0": 2.0, "j": 1.0, "rho_inlet": 1.5},
        "grid": {"n1": 9, "n2": 8, "n3": 8}
    }"#;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_json(text, Path::new("test.json"))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.solver.tol_fp, 1e-11);
        assert_eq!(cfg.solver.substeps, 2);
        assert_eq!(cfg.boundary.eps, 0.0);
        assert_eq!(cfg.diagnostics, Diagnostic::ALL.to_vec());
        assert_eq!(cfg.output, PathBuf::from("out"));
    }

    #[test]
    fn unresolvable_mode_is_named() {
        let text = MINIMAL.replace(
            r#""grid": {"n1": 9, "n2": 8, "n3": 8}"#,
            r#""grid": {"n1": 9, "n2": 8, "n3": 8},
               "boundary": {"eps": 1e-3, "beta2_in": [{"k": 1, "l": 0, "c": 1.0}, {"k": 4, "l": 0, "c": 1.0}]}"#,
        );
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("/boundary/beta2_in/1/k"), "{err}");
    }

    #[test]
    fn schema_errors_carry_a_pointer() {
        let text = MINIMAL.replace(r#""gamma": 2.0"#, r#""gamma": "two""#);
        let err = parse(&text).unwrap_err();
        assert!(
            matches!(&err, ConfigError::Schema { pointer, .. } if pointer == "/gas/gamma"),
            "{err}"
        );
        let text = MINIMAL.replace(r#""j": 1.0"#, r#""j": 1.0, "flux": 2"#);
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("flux"), "{err}");
    }

    #[test]
    fn auto_inlet_density_sits_below_b0() {
        let text = MINIMAL.replace(r#""rho_inlet": 1.5"#, r#""rho_inlet": "auto-near-b0""#);
        let cfg = parse(&text).unwrap();
        let rho = cfg.inlet_density().unwrap();
        // sonic density is 1 for γ = 2, J = 1
        assert!((rho - (2.0 - 0.05)).abs() < 1e-14, "{rho}");
        assert!(cfg.phase_plane().unwrap().e_inlet > 0.0);
    }

    #[test]
    fn invariant_violations_are_located() {
        let cases = [
            (r#""gamma": 2.0"#, r#""gamma": 0.5"#, "/gas/gamma"),
            (r#""n2": 8"#, r#""n2": 7"#, "/grid/n2"),
            (r#""rho_inlet": 1.5"#, r#""rho_inlet": 0.5"#, "/background"),
        ];
        for (from, to, pointer) in cases {
            let err = parse(&MINIMAL.replace(from, to)).unwrap_err().to_string();
            assert!(err.contains(pointer), "{err}");
        }
        let text = MINIMAL.replace(
            r#""grid": {"n1": 9, "n2": 8, "n3": 8}"#,
            r#""grid": {"n1": 9, "n2": 8, "n3": 8}, "solver": {"tol_fp": 0}"#,
        );
        assert!(parse(&text).unwrap_err().to_string().contains("/solver/tol_fp"));
    }
}
