//! TOML run configuration.

use std::path::{Path, PathBuf};

use ep_annulus_core::background::{DEFAULT_NODES, MIN_NODES};
use ep_annulus_core::sparse::LinearSolver;
use ep_annulus_core::{BoundaryFn, BoundaryPerturbation, Grid2D, InletData, SeparableFn, SolveOptions};
use serde::{Deserialize, Serialize};

use crate::manufactured::{SmoothField3D, N_PARAMS};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("boundary data incompatible: {0}")]
    Compatibility(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InletSection {
    pub gamma: f64,
    pub rho0: f64,
    pub u10: f64,
    pub u20: f64,
    pub a0: f64,
    pub e0: f64,
    pub b0: f64,
    pub r0: f64,
    pub r1: f64,
    #[serde(default = "default_nodes")]
    pub n_nodes: usize,
}

fn default_nodes() -> usize {
    DEFAULT_NODES
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nr: usize,
    pub nz: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Zero,
    CosPi,
    SinPi,
    Poly,
    Table,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FnSpec {
    pub preset: Preset,
    #[serde(default)]
    pub coefficients: Vec<f64>,
}

impl FnSpec {
    pub fn new(preset: Preset, coefficients: Vec<f64>) -> Self {
        Self { preset, coefficients }
    }

    pub fn to_fn(&self) -> BoundaryFn {
        let c = self.coefficients.clone();
        match self.preset {
            Preset::Zero => BoundaryFn::Zero,
            Preset::CosPi => BoundaryFn::CosPi(c),
            Preset::SinPi => BoundaryFn::SinPi(c),
            Preset::Poly => BoundaryFn::Poly(c),
            Preset::Table => BoundaryFn::Table(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparableSpec {
    #[serde(default)]
    pub r: FnSpec,
    #[serde(default)]
    pub x3: FnSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundarySection {
    pub eps: f64,
    pub u2_en: FnSpec,
    pub u3_en: FnSpec,
    pub a_en: FnSpec,
    pub k_en: FnSpec,
    pub phi_en: FnSpec,
    pub u1_ex: FnSpec,
    pub phi_ex: FnSpec,
    pub b_tilde: SeparableSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    #[default]
    Auto,
    Direct,
    Bicgstab,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_guard: Option<f64>,
    pub linear: LinearKind,
    /// eps values of the `sweep` command
    pub sweep_eps: Vec<f64>,
    /// emit plot.gp next to fields.csv
    pub gnuplot: bool,
    /// write the coupled operator as coupled.coo
    pub dump_matrix: bool,
    /// streamlines traced by `residual`
    pub streamlines: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
            delta_guard: None,
            linear: LinearKind::Auto,
            sweep_eps: vec![1e-3, 5e-4, 2.5e-4],
            gnuplot: false,
            dump_matrix: false,
            streamlines: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field3D {
    #[default]
    Background,
    Manufactured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Check3dSection {
    pub field: Field3D,
    /// nodes per direction of each cube level
    pub levels: Vec<usize>,
    /// amplitudes of the manufactured field; `seed` draws them instead
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameters: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for Check3dSection {
    fn default() -> Self {
        Self { field: Field3D::Background, levels: vec![17, 33], parameters: None, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub inlet: InletSection,
    pub grid: GridSection,
    #[serde(default)]
    pub boundary: BoundarySection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub check3d: Check3dSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::parse(&text)
    }

    /// Parses and validates, including boundary compatibility.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every field written out, defaults included.
    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.inlet.n_nodes < MIN_NODES {
            return invalid(format!("inlet.n_nodes = {} is below {MIN_NODES}", self.inlet.n_nodes));
        }
        self.grid2d()?;
        self.solve_options()?.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.solver.sweep_eps.is_empty() {
            return invalid("solver.sweep_eps is empty".into());
        }
        if let Some(e) = self.solver.sweep_eps.iter().find(|e| !e.is_finite()) {
            return invalid(format!("solver.sweep_eps holds {e}"));
        }
        if !self.boundary.eps.is_finite() {
            return invalid(format!("boundary.eps = {}", self.boundary.eps));
        }
        if self.check3d.levels.iter().any(|&n| n < 5) || self.check3d.levels.is_empty() {
            return invalid(format!("check3d.levels = {:?}, need at least one level of 5 or more", self.check3d.levels));
        }
        if let Some(p) = &self.check3d.parameters {
            if p.len() != N_PARAMS {
                return invalid(format!("check3d.parameters needs {N_PARAMS} values, got {}", p.len()));
            }
        }
        self.boundary()
            .check_compatibility()
            .map_err(|e| match e {
                ep_annulus_core::Error::Compatibility(m) => ConfigError::Compatibility(m),
                other => ConfigError::Invalid(other.to_string()),
            })
    }

    pub fn inlet_data(&self) -> InletData {
        let i = &self.inlet;
        InletData { gamma: i.gamma, rho0: i.rho0, u10: i.u10, u20: i.u20, a0: i.a0, e0: i.e0, b0: i.b0, r0: i.r0, r1: i.r1 }
    }

    pub fn grid2d(&self) -> Result<Grid2D, ConfigError> {
        Grid2D::new(self.grid.nr, self.grid.nz, self.inlet.r0, self.inlet.r1)
            .map_err(|e| ConfigError::Invalid(format!("grid: {e}")))
    }

    pub fn boundary(&self) -> BoundaryPerturbation {
        let b = &self.boundary;
        BoundaryPerturbation {
            eps: b.eps,
            u2_en: b.u2_en.to_fn(),
            u3_en: b.u3_en.to_fn(),
            a_en: b.a_en.to_fn(),
            k_en: b.k_en.to_fn(),
            phi_en: b.phi_en.to_fn(),
            u1_ex: b.u1_ex.to_fn(),
            phi_ex: b.phi_ex.to_fn(),
            b_tilde: SeparableFn { r_part: b.b_tilde.r.to_fn(), x3_part: b.b_tilde.x3.to_fn() },
        }
    }

    pub fn solve_options(&self) -> Result<SolveOptions, ConfigError> {
        let s = &self.solver;
        Ok(SolveOptions {
            tol: s.tol,
            max_iter: s.max_iter,
            delta_guard: s.delta_guard,
            grid: self.grid2d()?,
            solver: match s.linear {
                LinearKind::Auto => LinearSolver::Auto,
                LinearKind::Direct => LinearSolver::Direct,
                LinearKind::Bicgstab => LinearSolver::BiCgStab,
            },
        })
    }

    pub fn manufactured(&self) -> SmoothField3D {
        let c = &self.check3d;
        match (&c.parameters, c.seed) {
            (Some(p), _) => SmoothField3D::from_params(self.inlet.gamma, p).expect("length validated"),
            (None, Some(seed)) => SmoothField3D::random(seed),
            (None, None) => SmoothField3D::preset(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "[inlet]
gamma = 2.0
rho0 = 1.0
u10 = 0.5
u20 = 0.5
a0 = 1.0
e0 = 0.1
b0 = 0.5
r0 = 1.0
r1 = 2.0

[grid]
nr = 33
nz = 33
";

    fn with_boundary(extra: &str) -> String {
        format!("{MINIMAL}\n[boundary]\neps = 1e-3\n{extra}\n")
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.inlet.n_nodes, 2049);
        assert_eq!(c.solver.tol, 1e-10);
        assert_eq!(c.solver.linear, LinearKind::Auto);
        assert_eq!(c.boundary.eps, 0.0);
        assert_eq!(c.output.dir, PathBuf::from("out"));
        assert_eq!(c.boundary(), BoundaryPerturbation::zero());
    }

    #[test]
    fn u3_equal_to_x3_is_rejected() {
        let e = RunConfig::parse(&with_boundary("u3_en = { preset = \"poly\", coefficients = [1.0, 0.0] }")).unwrap_err();
        match e {
            ConfigError::Compatibility(m) => assert_eq!(m, "u3_en(1) != 0"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = format!("{MINIMAL}\n[solver]\ntol = \"small\"\n");
        match RunConfig::parse(&text).unwrap_err() {
            ConfigError::Parse { line, .. } => assert_eq!(line, 17),
            other => panic!("{other}"),
        }
        let e = RunConfig::parse(&with_boundary("u2_en = { preset = \"legendre\" }")).unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 18, .. }), "{e}");
        let e = RunConfig::parse(&format!("{MINIMAL}colour = 3\n")).unwrap_err();
        assert!(matches!(e, ConfigError::Parse { .. }), "{e}");
    }

    #[test]
    fn invalid_values_are_reported() {
        let small = MINIMAL.replace("nr = 33", "nr = 3");
        assert!(matches!(RunConfig::parse(&small), Err(ConfigError::Invalid(_))));
        let tol = format!("{MINIMAL}\n[solver]\ntol = -1.0\n");
        assert!(matches!(RunConfig::parse(&tol), Err(ConfigError::Invalid(_))));
        let params = format!("{MINIMAL}\n[check3d]\nfield = \"manufactured\"\nparameters = [0.1]\n");
        assert!(matches!(RunConfig::parse(&params), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn canonical_form_round_trips() {
        let text = with_boundary(
            "u2_en = { preset = \"cospi\", coefficients = [0.2, 1.0] }
u3_en = { preset = \"sinpi\", coefficients = [0.0, 1.0] }
b_tilde = { r = { preset = \"poly\", coefficients = [1.0] }, x3 = { preset = \"cospi\", coefficients = [0.0, 1.0] } }",
        );
        let c = RunConfig::parse(&text).unwrap();
        let canon = c.to_canonical();
        let again = RunConfig::parse(&canon).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_canonical(), canon);
        assert!(canon.contains("n_nodes = 2049"));
    }

    #[test]
    fn table_preset_checks_wall_slopes() {
        let ok = with_boundary("k_en = { preset = \"table\", coefficients = [1.0, 1.0, 1.0, 0.5, 1.0, 1.0, 1.0] }");
        RunConfig::parse(&ok).unwrap();
        let bad = with_boundary("k_en = { preset = \"table\", coefficients = [0.0, 1.0, 2.0] }");
        assert!(matches!(RunConfig::parse(&bad), Err(ConfigError::Compatibility(m)) if m.starts_with("k_en'")));
    }

    fn preset() -> impl Strategy<Value = FnSpec> {
        let coeffs = proptest::collection::vec(-2.0f64..2.0, 0..5);
        (prop_oneof![Just(Preset::Zero), Just(Preset::CosPi)], coeffs).prop_map(|(p, c)| FnSpec::new(p, c))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn canonical_form_is_a_fixed_point(
            eps in -1e-2f64..1e-2,
            k in preset(),
            phi in preset(),
            u3 in proptest::collection::vec(-1.0f64..1.0, 0..4),
            tol in 1e-14f64..1e-6,
            nr in 9usize..200,
            sweep in proptest::collection::vec(1e-5f64..1e-2, 1..4),
        ) {
            let mut c = RunConfig::parse(MINIMAL).unwrap();
            c.boundary.eps = eps;
            c.boundary.k_en = k;
            c.boundary.phi_ex = phi;
            c.boundary.u3_en = FnSpec::new(Preset::SinPi, u3);
            c.solver.tol = tol;
            c.solver.sweep_eps = sweep;
            c.grid.nr = nr;
            c.validate().unwrap();
            let text = c.to_canonical();
            let back = RunConfig::parse(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.to_canonical(), text);
        }
    }
}
