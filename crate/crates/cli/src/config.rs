//! JSON run configuration. Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use lbdie_core::expr::{parse, Expr};
use lbdie_core::geometry::{Domain, Point};
use lbdie_core::localizers::LocalizingFunction;
use lbdie_core::pde_model::{CoefficientField, ExprVectorField};
use lbdie_core::wiener_hopf::random_spd_tensor;
use serde::Deserialize;

use crate::CliError;

/// A number or an expression in x1, x2, x3.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Expression(String),
}

impl Scalar {
    pub fn expr(&self, what: &str) -> Result<Expr, CliError> {
        match self {
            Scalar::Number(v) => Ok(Expr::lit(*v)),
            Scalar::Expression(src) => parse(src).map_err(|e| CliError::Config(format!("{what}: {e}"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Ball {
        #[serde(default)]
        center: [f64; 3],
        radius: f64,
    },
    Box {
        lo: [f64; 3],
        hi: [f64; 3],
    },
}

impl DomainSpec {
    pub fn domain(&self) -> Result<Domain, CliError> {
        match *self {
            DomainSpec::Ball { center, radius } if radius > 0.0 => Ok(Domain::Ball { center: Point::from(center), radius }),
            DomainSpec::Box { lo, hi } if (0..3).all(|i| hi[i] > lo[i]) => {
                Ok(Domain::Box { lo: Point::from(lo), hi: Point::from(hi) })
            }
            _ => Err(CliError::Config("domain: radius must be positive and hi > lo componentwise".into())),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Laplace,
    ScaledLaplace { scale: Scalar },
    Lame { lambda: Scalar, mu: Scalar },
    /// 81 entries in [p][q][k][j] order.
    General { entries: Vec<Scalar> },
    /// Constant anisotropic tensor from a seeded random SPD Voigt matrix.
    RandomSpd { seed: u64 },
}

impl CoefficientSpec {
    pub fn field(&self) -> Result<CoefficientField, CliError> {
        Ok(match self {
            CoefficientSpec::Laplace => CoefficientField::laplace(),
            CoefficientSpec::ScaledLaplace { scale } => CoefficientField::scaled_laplace(scale.expr("scale")?),
            CoefficientSpec::Lame { lambda, mu } => CoefficientField::lame(lambda.expr("lambda")?, mu.expr("mu")?),
            CoefficientSpec::General { entries } => {
                if entries.len() != 81 {
                    return Err(CliError::Config(format!("general: expected 81 entries, got {}", entries.len())));
                }
                let exprs = entries
                    .iter()
                    .enumerate()
                    .map(|(i, e)| e.expr(&format!("entries[{i}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                CoefficientField::general(std::array::from_fn(|p| {
                    std::array::from_fn(|q| {
                        std::array::from_fn(|k| std::array::from_fn(|j| exprs[27 * p + 9 * q + 3 * k + j].clone()))
                    })
                }))
            }
            CoefficientSpec::RandomSpd { seed } => CoefficientField::general_constant(&random_spd_tensor(*seed)),
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CutoffSpec {
    Chi1k { k: u32, eps: f64 },
    Chi2 { eps: f64 },
    /// Radial profile in the variable r, zero beyond `support`.
    Expression {
        profile: String,
        support: Option<f64>,
        #[serde(default = "default_class")]
        class: u32,
    },
}

fn default_class() -> u32 {
    2
}

impl CutoffSpec {
    pub fn localizer(&self) -> Result<LocalizingFunction, CliError> {
        let positive = |eps: f64| {
            if eps > 0.0 && eps.is_finite() {
                Ok(())
            } else {
                Err(CliError::Config(format!("cutoff: eps must be positive, got {eps}")))
            }
        };
        match self {
            CutoffSpec::Chi1k { k, eps } => {
                positive(*eps)?;
                if *k == 0 {
                    return Err(CliError::Config("cutoff: k must be at least 1".into()));
                }
                Ok(LocalizingFunction::chi1k(*k, *eps))
            }
            CutoffSpec::Chi2 { eps } => {
                positive(*eps)?;
                Ok(LocalizingFunction::chi2(*eps))
            }
            CutoffSpec::Expression { profile, support, class } => {
                let value = parse(profile).map_err(|e| CliError::Config(format!("cutoff profile: {e}")))?;
                Ok(LocalizingFunction::from_expression("expression", value, *support, *class))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    /// Volume cells per axis.
    pub grid: usize,
    /// Icosphere refinement level.
    pub surface: u32,
}

impl Level {
    pub fn label(&self) -> String {
        format!("{}/{}", self.grid, self.surface)
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 300, restart: 60 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SymbolSpec {
    /// Frozen boundary point.
    pub point: [f64; 3],
    /// Outward normal at the frozen point.
    pub normal: [f64; 3],
    /// Tangential frequencies for `factorize`; seeded random ones are added.
    pub xi_prime: Vec<[f64; 2]>,
    pub random_xi: usize,
    pub directions: usize,
    pub floor: f64,
    pub homotopy: bool,
    /// Random sample points for `symbol-check`.
    pub samples: usize,
}

impl Default for SymbolSpec {
    fn default() -> Self {
        Self {
            point: [0.0, 0.0, 1.0],
            normal: [0.0, 0.0, 1.0],
            xi_prime: vec![[1.0, 0.0]],
            random_xi: 0,
            directions: 64,
            floor: 1e-6,
            homotopy: true,
            samples: 32,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizerSpec {
    pub omega_max: f64,
    pub samples: usize,
}

impl Default for LocalizerSpec {
    fn default() -> Self {
        Self { omega_max: 100.0, samples: 1000 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HalfspaceSpec {
    pub sizes: Vec<usize>,
    pub box_size: f64,
    pub width: f64,
    pub center: [f64; 3],
    pub amplitude: [f64; 3],
    /// If set, every residual must stay below this value.
    pub max_residual: Option<f64>,
}

impl Default for HalfspaceSpec {
    fn default() -> Self {
        Self { sizes: vec![32, 64], box_size: 8.0, width: 0.7, center: [0.0; 3], amplitude: [1.0, -0.5, 0.25], max_residual: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Bound on the L² residual of each identity at the finest level.
    pub identity: f64,
    /// Optional bounds on the L² errors of u and ψ at the finest level.
    pub u: Option<f64>,
    pub psi: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { identity: 0.05, u: None, psi: None }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    CheckLocalizer,
    SymbolCheck,
    Factorize,
    SlCheck,
    Halfspace,
    VerifyIdentities,
    Solve,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Subcommands executed in order by `run`.
    #[serde(default)]
    pub commands: Vec<CommandName>,
    pub domain: Option<DomainSpec>,
    pub coefficients: Option<CoefficientSpec>,
    pub cutoff: Option<CutoffSpec>,
    #[serde(default)]
    pub levels: Vec<Level>,
    #[serde(default)]
    pub solver: SolverSpec,
    /// Exact solution; the data f = Au and φ₀ = γ⁺u are derived from it.
    pub manufactured: Option<[String; 3]>,
    /// Source f and Dirichlet data φ₀ when no exact solution is given.
    pub source: Option<[String; 3]>,
    pub dirichlet: Option<[String; 3]>,
    #[serde(default)]
    pub symbol: SymbolSpec,
    #[serde(default)]
    pub localizer: LocalizerSpec,
    #[serde(default)]
    pub halfspace: HalfspaceSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        if text.trim().is_empty() {
            return Err(CliError::Config("empty configuration; expected a JSON object".into()));
        }
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid configuration: {e}")))
    }

    pub fn require<'a, T>(value: &'a Option<T>, key: &str) -> Result<&'a T, CliError> {
        value.as_ref().ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }

    pub fn field(&self) -> Result<CoefficientField, CliError> {
        Self::require(&self.coefficients, "coefficients")?.field()
    }

    pub fn domain(&self) -> Result<Domain, CliError> {
        Self::require(&self.domain, "domain")?.domain()
    }

    /// The configured cutoff, or χ₁₃ with ε = half the domain diameter.
    pub fn localizer(&self, domain: &Domain) -> Result<LocalizingFunction, CliError> {
        match &self.cutoff {
            Some(c) => c.localizer(),
            None => Ok(LocalizingFunction::chi1k(3, 0.5 * domain.diameter())),
        }
    }

    pub fn levels(&self) -> Result<&[Level], CliError> {
        if self.levels.is_empty() {
            return Err(CliError::Config("missing required key `levels`".into()));
        }
        if let Some(bad) = self.levels.iter().find(|l| l.grid < 2) {
            return Err(CliError::Config(format!("levels: grid must be at least 2, got {}", bad.grid)));
        }
        Ok(&self.levels)
    }

    pub fn vector_field(src: &[String; 3], what: &str) -> Result<ExprVectorField, CliError> {
        ExprVectorField::parse([&src[0], &src[1], &src[2]]).map_err(|e| CliError::Config(format!("{what}: {e}")))
    }
}
