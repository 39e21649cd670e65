//! Experiment configuration: a TOML document with a top-level `kind`, shared
//! `[grid]`, `[measure]`, `[equation]`, `[solver]` and `[tolerances]` sections,
//! and one section named after the experiment.

use crate::error::CliError;
use crate::io;
use nlvisc_core::levy::{build_quadrature, MeasureSpec, RadialSpec};
use nlvisc_core::viscosity::JensenConfig;
use nlvisc_core::{
    FSpec, Grid, GridFunction, Hamiltonian, LevyQuadrature, ModelField, Point, SchemeVariant, SmoothField, SolveParams,
    SymMat, Tolerances,
};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Solve,
    Compare,
    MoreauVerify,
    DoublingVerify,
    NeumannResidual,
    Convergence,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Solve => "solve",
            Kind::Compare => "compare",
            Kind::MoreauVerify => "moreau-verify",
            Kind::DoublingVerify => "doubling-verify",
            Kind::NeumannResidual => "neumann-residual",
            Kind::Convergence => "convergence",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub kind: Kind,
    pub name: Option<String>,
    pub seed: Option<u64>,
    pub grid: GridSection,
    pub measure: Option<MeasureSection>,
    pub equation: Option<EquationSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub tolerances: TolSection,
    pub solve: Option<SolveSection>,
    pub compare: Option<CompareSection>,
    pub moreau: Option<MoreauSection>,
    pub doubling: Option<DoublingSection>,
    pub neumann: Option<NeumannSection>,
    pub convergence: Option<ConvergenceSection>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// `[[lo, hi], ...]`, one pair per axis.
    pub bounds: Vec<[f64; 2]>,
    pub h: Option<f64>,
    /// Defaults to the largest jump of the measure, or 0.
    pub halo: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSection {
    pub file: Option<String>,
    pub atoms: Option<Vec<Vec<f64>>>,
    pub radial: Option<RadialSection>,
    pub scale: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialSection {
    pub density: Density,
    pub r_min: f64,
    pub r_max: f64,
    pub radial_nodes: usize,
    #[serde(default = "default_sectors")]
    pub sectors: usize,
}

fn default_sectors() -> usize {
    16
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Density {
    /// `c / |z|^(N + alpha)`.
    Stable {
        alpha: f64,
        c: f64,
    },
    /// `c · exp(-beta |z|) / |z|^(N + alpha)`.
    Tempered {
        alpha: f64,
        c: f64,
        beta: f64,
    },
    Uniform {
        c: f64,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquationSection {
    pub lambda: f64,
    pub diffusion: Option<DiffusionSpec>,
    pub hamiltonian: Option<HamSpec>,
    pub source: Option<FieldSpec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum DiffusionSpec {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum HamSpec {
    Zero,
    Linear(Vec<f64>),
    Eikonal(f64),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant(f64),
    Quadratic {
        #[serde(default)]
        c0: f64,
        #[serde(default)]
        linear: Vec<f64>,
        #[serde(default)]
        quad: Vec<f64>,
    },
    Quartic(f64),
    Sine {
        amp: f64,
        freq: f64,
    },
    /// `coef · Σ |x_i|`.
    Abs(f64),
    /// Independent uniform values in `[-amp/2, amp/2)` per node.
    Noise {
        amp: f64,
        seed: u64,
    },
    /// Grid-function CSV on the configured grid.
    Csv(String),
    Sum(Vec<FieldSpec>),
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeSpec {
    #[default]
    Standard,
    FlippedNonlocalSign,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub damping: Option<f64>,
    pub max_iters: Option<usize>,
    pub stop_tol: Option<f64>,
    #[serde(default)]
    pub scheme: SchemeSpec,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolSection {
    pub jet_bound: Option<f64>,
    pub matrix_order: Option<f64>,
    pub key_inequality: Option<f64>,
    pub check: Option<f64>,
    pub delta0: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub g: FieldSpec,
    pub exact: Option<FieldSpec>,
    pub error_tol: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub g1: FieldSpec,
    pub g2: FieldSpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoreauSection {
    pub u: FieldSpec,
    pub v: Option<FieldSpec>,
    pub r: Vec<f64>,
    /// Bound `M ≥ max(|u|, |v|)`; defaults to the observed maximum.
    pub m: Option<f64>,
    #[serde(default = "yes")]
    pub certify: bool,
    #[serde(default)]
    pub brute_check: bool,
    pub closed_form: Option<ClosedForm>,
    pub residual: Option<ResidualCurve>,
}

fn yes() -> bool {
    true
}

/// Expected `u^r` in closed form, compared on a sub-box.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedForm {
    pub field: FieldSpec,
    pub region: Vec<[f64; 2]>,
    pub tol: f64,
}

/// Residual of `u^r` in the approximate subsolution inequality over `Ω_r`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualCurve {
    /// Cap on the split radius; the radius used at a node is the largest
    /// lattice radius below the cap where the jet bound holds.
    pub eps: f64,
    pub delta: f64,
    #[serde(default)]
    pub require_decreasing: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub x: Vec<[f64; 2]>,
    pub y: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoublingSection {
    pub u: FieldSpec,
    pub v: FieldSpec,
    pub alpha: f64,
    pub window: Option<WindowSpec>,
    #[serde(default = "default_count")]
    pub count: usize,
    /// Replace `U`, `V` by their sup/inf-convolutions with this `r` first.
    pub regularize: Option<f64>,
    pub semiconvexity: Option<f64>,
    pub max_draws: Option<usize>,
    pub expect_mu: Option<f64>,
    pub mu_tol: Option<f64>,
}

fn default_count() -> usize {
    10
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SideSpec {
    Sub,
    Super,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeumannSection {
    pub w: FieldSpec,
    pub rho: f64,
    pub r: f64,
    pub m: f64,
    pub side: SideSpec,
    /// Sub side: every residual ≤ bound; super side: every residual ≥ -bound.
    pub bound: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    pub u_star: FieldSpec,
    pub hs: Vec<f64>,
    pub min_order: Option<f64>,
    pub max_error: Option<f64>,
}

pub type FieldFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// A parsed configuration with its source text, for diagnostics.
#[derive(Clone, Debug)]
pub struct Config {
    pub raw: RawConfig,
    pub path: PathBuf,
    pub text: String,
}

/// Manual overrides from the command line, applied over `[tolerances]`.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub tolerances: Vec<(String, f64)>,
}

impl Overrides {
    /// Parses `name=value`.
    pub fn parse_tol(spec: &str) -> Result<(String, f64), String> {
        let (k, v) = spec.split_once('=').ok_or_else(|| format!("expected name=value, got '{spec}'"))?;
        let k = k.trim().replace('-', "_");
        if !["jet_bound", "matrix_order", "key_inequality", "check", "delta0"].contains(&k.as_str()) {
            return Err(format!("unknown tolerance '{k}'"));
        }
        let v: f64 = v.trim().parse().map_err(|e| format!("'{v}': {e}"))?;
        if !(v >= 0.0) || !v.is_finite() {
            return Err(format!("tolerance {k} must be finite and non-negative"));
        }
        Ok((k, v))
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::missing(path, e))?;
        Config::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Config, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(text, s.start));
            CliError::config(path, line, e.message().trim())
        })?;
        let cfg = Config { raw, path: path.to_path_buf(), text: text.to_string() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn base_dir(&self) -> PathBuf {
        self.path.parent().map(Path::to_path_buf).unwrap_or_default()
    }

    /// Line of `key` inside `[section]` (top level for an empty section).
    pub fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        let mut current = String::new();
        for (i, line) in self.text.lines().enumerate() {
            let t = line.trim();
            if t.starts_with('[') && !t.starts_with("[[") {
                current = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
                continue;
            }
            if current == section {
                if let Some((k, _)) = t.split_once('=') {
                    if k.trim() == key {
                        return Some(i + 1);
                    }
                }
            }
        }
        self.text.lines().position(|l| l.trim() == format!("[{section}]")).map(|i| i + 1)
    }

    pub fn err(&self, section: &str, key: &str, message: impl std::fmt::Display) -> CliError {
        CliError::config(&self.path, self.line_of(section, key), format!("{section}.{key}: {message}"))
    }

    pub fn dim(&self) -> usize {
        self.raw.grid.bounds.len()
    }

    fn validate(&self) -> Result<(), CliError> {
        let raw = &self.raw;
        let dim = self.dim();
        if !(1..=2).contains(&dim) {
            return Err(self.err("grid", "bounds", format!("need 1 or 2 axes, found {dim}")));
        }
        if let Some(eq) = &raw.equation {
            if !(eq.lambda > 0.0) {
                return Err(self.err(
                    "equation",
                    "lambda",
                    format!("properness requires lambda > 0 (F strictly increasing in u), got {}", eq.lambda),
                ));
            }
        }
        let section_present = match raw.kind {
            Kind::Solve => raw.solve.is_some(),
            Kind::Compare => raw.compare.is_some(),
            Kind::MoreauVerify => raw.moreau.is_some(),
            Kind::DoublingVerify => raw.doubling.is_some(),
            Kind::NeumannResidual => raw.neumann.is_some(),
            Kind::Convergence => raw.convergence.is_some(),
        };
        let section = self.section_name();
        if !section_present {
            return Err(CliError::config(
                &self.path,
                self.line_of("", "kind"),
                format!("kind = \"{}\" needs a [{section}] section", raw.kind.name()),
            ));
        }
        let needs_equation =
            matches!(raw.kind, Kind::Solve | Kind::Compare | Kind::NeumannResidual | Kind::Convergence)
                || raw.moreau.as_ref().is_some_and(|m| m.residual.is_some());
        if needs_equation && (raw.equation.is_none() || raw.measure.is_none()) {
            return Err(CliError::config(
                &self.path,
                None,
                format!("{} needs [equation] and [measure] sections", raw.kind.name()),
            ));
        }
        if raw.kind != Kind::Convergence && raw.grid.h.is_none() {
            return Err(self.err("grid", "h", "missing spacing"));
        }
        if raw.kind == Kind::DoublingVerify && raw.doubling.as_ref().is_some_and(|d| d.count > 0) && raw.seed.is_none()
        {
            return Err(CliError::config(
                &self.path,
                None,
                "seed is required: doubling-verify draws random perturbations (set seed = <integer> at top level)",
            ));
        }
        Ok(())
    }

    pub fn section_name(&self) -> &'static str {
        match self.raw.kind {
            Kind::Solve => "solve",
            Kind::Compare => "compare",
            Kind::MoreauVerify => "moreau",
            Kind::DoublingVerify => "doubling",
            Kind::NeumannResidual => "neumann",
            Kind::Convergence => "convergence",
        }
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.raw.grid.bounds.iter().map(|b| (b[0], b[1])).collect()
    }

    /// Grid at spacing `h`, halo from the config or the measure's reach.
    pub fn grid_with(&self, h: f64, q: Option<&LevyQuadrature>) -> Result<Grid, CliError> {
        let halo = self.raw.grid.halo.unwrap_or_else(|| q.map_or(0.0, |q| q.max_jump()));
        Grid::new(&self.bounds(), h, halo).map_err(|e| self.err("grid", "h", e))
    }

    pub fn grid(&self, q: Option<&LevyQuadrature>) -> Result<Grid, CliError> {
        let h = self.raw.grid.h.ok_or_else(|| self.err("grid", "h", "missing spacing"))?;
        self.grid_with(h, q)
    }

    pub fn measure(&self) -> Result<Option<LevyQuadrature>, CliError> {
        let Some(m) = &self.raw.measure else { return Ok(None) };
        let dim = self.dim();
        let given = [m.file.is_some(), m.atoms.is_some(), m.radial.is_some()].iter().filter(|b| **b).count();
        if given != 1 {
            return Err(self.err("measure", "file", "give exactly one of file, atoms, radial"));
        }
        let q = if let Some(file) = &m.file {
            let path = self.base_dir().join(file);
            let atoms = io::read_atoms(&path, dim)?;
            LevyQuadrature::from_atoms(dim, &atoms).map_err(|e| CliError::config(&path, None, e))?
        } else if let Some(list) = &m.atoms {
            let mut atoms = Vec::with_capacity(list.len());
            for row in list {
                if row.len() != dim + 1 {
                    return Err(self.err(
                        "measure",
                        "atoms",
                        format!("each atom needs {dim} components and a weight, got {row:?}"),
                    ));
                }
                let mut z = [0.0; 2];
                z[..dim].copy_from_slice(&row[..dim]);
                atoms.push((z, row[dim]));
            }
            LevyQuadrature::from_atoms(dim, &atoms).map_err(|e| self.err("measure", "atoms", e))?
        } else {
            let r = m.radial.as_ref().expect("counted above");
            let density = r.density;
            let nd = dim as f64;
            let f = move |s: f64| match density {
                Density::Stable { alpha, c } => c / s.powf(nd + alpha),
                Density::Tempered { alpha, c, beta } => c * (-beta * s).exp() / s.powf(nd + alpha),
                Density::Uniform { c } => c,
            };
            let spec = MeasureSpec::Radial(RadialSpec {
                dim,
                density: &f,
                r_min: r.r_min,
                r_max: r.r_max,
                radial_nodes: r.radial_nodes,
                angular_sectors: r.sectors,
            });
            build_quadrature(&spec).map_err(|e| self.err("measure", "radial", e))?
        };
        match m.scale {
            Some(c) => q.scaled(c).map(Some).map_err(|e| self.err("measure", "scale", e)),
            None => Ok(Some(q)),
        }
    }

    /// Nonlinearity from `[equation]`; `source` defaults to zero.
    pub fn fspec(&self) -> Result<FSpec, CliError> {
        let eq = self
            .raw
            .equation
            .as_ref()
            .ok_or_else(|| CliError::config(&self.path, None, "missing [equation] section"))?;
        let dim = self.dim();
        let mut f = FSpec::new(dim, eq.lambda).map_err(|e| self.err("equation", "lambda", e))?;
        if let Some(d) = &eq.diffusion {
            let a = match d {
                DiffusionSpec::Scalar(s) => SymMat::scalar(dim, *s),
                DiffusionSpec::Matrix(rows) => {
                    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                        return Err(self.err("equation", "diffusion", format!("expected a {dim}x{dim} matrix")));
                    }
                    let mut m = [[0.0; 2]; 2];
                    for i in 0..dim {
                        for j in 0..dim {
                            m[i][j] = rows[i][j];
                        }
                    }
                    if (0..dim).any(|i| (0..dim).any(|j| m[i][j] != m[j][i])) {
                        return Err(self.err("equation", "diffusion", "matrix must be symmetric"));
                    }
                    SymMat::new(dim, m)
                }
            };
            f = f.with_diffusion(a).map_err(|e| self.err("equation", "diffusion", e))?;
        }
        if let Some(h) = &eq.hamiltonian {
            let h = match h {
                HamSpec::Zero => Hamiltonian::Zero,
                HamSpec::Eikonal(k) => Hamiltonian::Eikonal(*k),
                HamSpec::Linear(b) => Hamiltonian::Linear(self.point(b, "equation", "hamiltonian")?),
            };
            f = f.with_hamiltonian(h);
        }
        if let Some(src) = &eq.source {
            let s = self.field(src, None, "equation", "source")?;
            f = f.with_source(move |x| s(x));
        }
        Ok(f)
    }

    fn point(&self, v: &[f64], section: &str, key: &str) -> Result<Point, CliError> {
        if v.len() != self.dim() {
            return Err(self.err(section, key, format!("expected {} components, got {}", self.dim(), v.len())));
        }
        let mut p = [0.0; 2];
        p[..v.len()].copy_from_slice(v);
        Ok(p)
    }

    pub fn solve_params(&self) -> Result<SolveParams, CliError> {
        let s = &self.raw.solver;
        let d = SolveParams::default();
        let p = SolveParams {
            damping: s.damping.unwrap_or(d.damping),
            max_iters: s.max_iters.unwrap_or(d.max_iters),
            stop_tol: s.stop_tol.unwrap_or(d.stop_tol),
            scheme: match s.scheme {
                SchemeSpec::Standard => SchemeVariant::Standard,
                SchemeSpec::FlippedNonlocalSign => SchemeVariant::FlippedNonlocalSign,
            },
        };
        p.validate().map_err(|e| self.err("solver", "damping", e))?;
        Ok(p)
    }

    pub fn tolerances(&self, overrides: &Overrides) -> Tolerances {
        let mut t = Tolerances::default();
        let s = &self.raw.tolerances;
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut t.jet_bound, s.jet_bound);
        set(&mut t.matrix_order, s.matrix_order);
        set(&mut t.key_inequality, s.key_inequality);
        set(&mut t.check, s.check);
        set(&mut t.delta0, s.delta0);
        for (k, v) in &overrides.tolerances {
            match k.as_str() {
                "jet_bound" => t.jet_bound = *v,
                "matrix_order" => t.matrix_order = *v,
                "key_inequality" => t.key_inequality = *v,
                "check" => t.check = *v,
                "delta0" => t.delta0 = *v,
                _ => {}
            }
        }
        t
    }

    pub fn jensen_config(&self, d: &DoublingSection, tol: Tolerances) -> JensenConfig {
        let base = JensenConfig::default();
        JensenConfig {
            count: d.count,
            tolerances: tol,
            semiconvexity: d.semiconvexity,
            max_radius: base.max_radius,
            max_draws: d.max_draws.unwrap_or(base.max_draws),
        }
    }

    /// Evaluates a field spec. `grid` is needed for CSV-backed fields.
    pub fn field(&self, spec: &FieldSpec, grid: Option<&Grid>, section: &str, key: &str) -> Result<FieldFn, CliError> {
        let dim = self.dim();
        Ok(match spec {
            FieldSpec::Csv(file) => {
                let grid = grid.ok_or_else(|| self.err(section, key, "a CSV field is only allowed for grid inputs"))?;
                let path = self.base_dir().join(file);
                let u = io::read_grid_function(&path, grid)?;
                Arc::new(move |x: &Point| u.sample(x).unwrap_or(f64::NAN))
            }
            FieldSpec::Noise { amp, seed } => {
                let (amp, seed) = (*amp, *seed);
                Arc::new(move |x: &Point| {
                    let key =
                        seed ^ x[0].to_bits().wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ x[1].to_bits().rotate_left(29);
                    let mut rng = ChaCha8Rng::seed_from_u64(key);
                    amp * ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
                })
            }
            FieldSpec::Abs(c) => {
                let c = *c;
                Arc::new(move |x: &Point| c * x[..dim].iter().map(|v| v.abs()).sum::<f64>())
            }
            FieldSpec::Sum(parts) => {
                let fs = parts.iter().map(|p| self.field(p, grid, section, key)).collect::<Result<Vec<_>, _>>()?;
                Arc::new(move |x: &Point| fs.iter().map(|f| f(x)).sum())
            }
            smooth => {
                let m = self.smooth_parts(smooth, section, key)?;
                Arc::new(move |x: &Point| m.value(x))
            }
        })
    }

    /// Closed-form fields with known derivatives.
    pub fn smooth(&self, spec: &FieldSpec, section: &str, key: &str) -> Result<FieldSum, CliError> {
        self.smooth_parts(spec, section, key)
    }

    fn smooth_parts(&self, spec: &FieldSpec, section: &str, key: &str) -> Result<FieldSum, CliError> {
        let one = |m: ModelField| Ok(FieldSum(vec![m]));
        match spec {
            FieldSpec::Constant(c) => one(ModelField::Constant(*c)),
            FieldSpec::Quadratic { c0, linear, quad } => {
                let pad = |v: &Vec<f64>, name: &str| -> Result<Point, CliError> {
                    if v.is_empty() {
                        Ok([0.0; 2])
                    } else {
                        self.point(v, section, &format!("{key}.{name}"))
                    }
                };
                one(ModelField::Quadratic { c0: *c0, linear: pad(linear, "linear")?, quad: pad(quad, "quad")? })
            }
            FieldSpec::Quartic(c) => one(ModelField::Quartic { coef: *c }),
            FieldSpec::Sine { amp, freq } => one(ModelField::Sine { amp: *amp, freq: *freq }),
            FieldSpec::Sum(parts) => {
                let mut all = Vec::new();
                for p in parts {
                    all.extend(self.smooth_parts(p, section, key)?.0);
                }
                Ok(FieldSum(all))
            }
            other => Err(self.err(section, key, format!("{other:?} is not a smooth closed-form field"))),
        }
    }

    /// Samples a field on every node of `grid`.
    pub fn grid_function(
        &self,
        spec: &FieldSpec,
        grid: &Grid,
        section: &str,
        key: &str,
    ) -> Result<GridFunction, CliError> {
        let f = self.field(spec, Some(grid), section, key)?;
        GridFunction::from_fn(*grid, |x| f(x)).map_err(|e| self.err(section, key, e))
    }
}

/// Sum of model fields.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSum(pub Vec<ModelField>);

impl SmoothField for FieldSum {
    fn value(&self, x: &Point) -> f64 {
        self.0.iter().map(|m| m.value(x)).sum()
    }

    fn gradient(&self, x: &Point) -> Point {
        self.0.iter().fold([0.0; 2], |acc, m| {
            let g = m.gradient(x);
            [acc[0] + g[0], acc[1] + g[1]]
        })
    }

    fn hessian(&self, x: &Point, dim: usize) -> SymMat {
        self.0.iter().fold(SymMat::zeros(dim), |acc, m| acc.add(&m.hessian(x, dim)))
    }
}
