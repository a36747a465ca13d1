//! JSON scenario configuration and its validation.
//!
//! Parsing happens in two passes. Structural problems (unknown keys, wrong
//! types) stop at the first error, reported with its location. The semantic
//! pass then collects every defect it finds before giving up.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use gclind_core::gibbs::{boltzmann_operator, GrandCanonicalSpec, ReservoirEnergyModel};
use gclind_core::hierarchy::{EstimatorWeighting, HierarchyConfig, Observable, ProposalMode};
use gclind_core::lindblad::{
    two_level_thermal_channels, EquilibriumCondition, JumpChannel, LindbladModel, SectorCoupling, TwoLevelBathParams,
};
use gclind_core::operator::{
    hermitian_function, pauli_x, pauli_y, pauli_z, sigma_minus, sigma_plus, validate_density, DEFAULT_TOLERANCE,
};
use gclind_core::{DensityOperator, HermitianOperator, Operator, C64};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Evolve,
    Steady,
    Check,
    MuExtract,
    Sample,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Evolve => "evolve",
            ScenarioKind::Steady => "steady",
            ScenarioKind::Check => "check",
            ScenarioKind::MuExtract => "mu-extract",
            ScenarioKind::Sample => "sample",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub model: ModelSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `two_level_thermal`, or absent for an explicit model.
    pub builtin: Option<String>,
    pub omega0: Option<f64>,
    pub beta: Option<f64>,
    pub gamma0: Option<f64>,
    pub hbar: Option<f64>,
    pub hamiltonian: Option<MatrixSpec>,
    pub lamb_shift: Option<MatrixSpec>,
    pub coupling: Option<f64>,
    #[serde(default)]
    pub channels: Vec<ChannelSpec>,
    pub initial_state: Option<MatrixSpec>,
    /// `gibbs`, `grand_canonical` or a matrix.
    pub k: Option<MatrixSpec>,
    pub condition: Option<ConditionSpec>,
    pub grand_canonical: Option<GrandCanonicalSection>,
    pub reservoir: Option<ReservoirSection>,
    pub sampling: Option<SamplingSection>,
}

/// A matrix given by name, as real rows, as real and imaginary rows, or as
/// a file in the operator text format.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Name(String),
    Real(Vec<Vec<f64>>),
    Complex(ComplexRows),
    File(FileRef),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexRows {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRef {
    pub file: PathBuf,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub operator: MatrixSpec,
    pub rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
pub enum ConditionLetter {
    A,
    B,
    C,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSpec {
    pub kind: ConditionLetter,
    pub group_a: Option<Vec<usize>>,
    pub group_b: Option<Vec<usize>>,
    pub f: Option<MatrixSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectorFamily {
    SingleMode,
    NTimesEps,
    Explicit,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrandCanonicalSection {
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    pub family: Option<SectorFamily>,
    pub eps: Option<f64>,
    pub n_max: Option<usize>,
    pub dim: Option<usize>,
    pub sectors: Option<Vec<MatrixSpec>>,
    pub tail_threshold: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyForm {
    Linear,
    Quadratic,
    Table,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirSection {
    pub total_particles: Option<u64>,
    pub n_star: Option<u64>,
    /// `linear`: `E(N) = eps·(M − N)`; `quadratic`: `a(M − N)² + b(M − N)`;
    /// `table`: values for `N = 0, 1, …`.
    pub mean_energy: Option<EnergyForm>,
    pub eps: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub table: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    PaperLiteral,
    Symmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingName {
    SectorNormalized,
    Raw,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    pub window_center: Option<usize>,
    pub window_half_width: Option<usize>,
    pub initial_n: Option<usize>,
    pub steps: Option<usize>,
    pub proposal_mode: Option<ModeName>,
    pub weighting: Option<WeightingName>,
    pub alpha_tilde: Option<f64>,
    /// Applied to every window sector.
    #[serde(default)]
    pub channels: Vec<ChannelSpec>,
    /// `number`, `identity` or `hamiltonian`.
    #[serde(default)]
    pub observables: Vec<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    pub dt: Option<f64>,
    pub t_span: Option<[f64; 2]>,
    pub seed: Option<u64>,
    pub record_every: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub prefix: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Defect {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// A fully validated scenario, ready to run.
#[derive(Debug)]
pub enum Scenario {
    Evolve {
        model: LindbladModel,
        rho0: DensityOperator,
        t_span: (f64, f64),
        dt: f64,
        record_every: usize,
    },
    Steady {
        model: LindbladModel,
    },
    Check {
        condition: EquilibriumCondition,
        channels: Vec<JumpChannel>,
        k: Operator,
    },
    MuExtract {
        reservoir: ReservoirEnergyModel,
        n_star: u64,
    },
    Sample {
        config: Box<HierarchyConfig>,
        observables: Vec<Observable>,
        weighting: EstimatorWeighting,
    },
}

/// Parses the JSON text; the error names the location of the first
/// structural problem.
pub fn parse(text: &str) -> Result<ScenarioConfig, Defect> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Defect {
            path: if path == "." { "config".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })
}

/// Semantic validation; builds the scenario only when no defect is found.
pub fn build(cfg: &ScenarioConfig, base_dir: &Path) -> Result<Scenario, Vec<Defect>> {
    let mut c = Checker {
        defects: Vec::new(),
        base_dir,
    };
    let scenario = match cfg.scenario {
        ScenarioKind::Evolve => c.evolve(cfg),
        ScenarioKind::Steady => c.system_model(&cfg.model).map(|(model, _)| Scenario::Steady { model }),
        ScenarioKind::Check => c.check(&cfg.model),
        ScenarioKind::MuExtract => c.mu_extract(&cfg.model),
        ScenarioKind::Sample => c.sample(cfg),
    };
    match scenario {
        Some(s) if c.defects.is_empty() => Ok(s),
        _ => {
            if c.defects.is_empty() {
                c.defect("config", "scenario could not be assembled");
            }
            Err(c.defects)
        }
    }
}

enum Energy {
    Linear(f64),
    Quadratic(f64, f64),
    Table(Vec<f64>),
}

struct Checker<'a> {
    defects: Vec<Defect>,
    base_dir: &'a Path,
}

impl Checker<'_> {
    fn defect(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.defects.push(Defect {
            path: path.into(),
            message: message.into(),
        });
    }

    fn require<T: Clone>(&mut self, v: &Option<T>, path: &str) -> Option<T> {
        if v.is_none() {
            self.defect(path, "is required");
        }
        v.clone()
    }

    fn positive(&mut self, v: Option<f64>, path: &str) -> Option<f64> {
        match v {
            None => {
                self.defect(path, "is required");
                None
            }
            Some(x) if !(x > 0.0) || !x.is_finite() => {
                self.defect(path, format!("must be positive and finite, got {x}"));
                None
            }
            Some(x) => Some(x),
        }
    }

    fn finite(&mut self, v: Option<f64>, path: &str) -> Option<f64> {
        if v.is_none() {
            self.defect(path, "is required");
            return None;
        }
        self.finite_or(v, 0.0, path)
    }

    fn finite_or(&mut self, v: Option<f64>, default: f64, path: &str) -> Option<f64> {
        let x = v.unwrap_or(default);
        if !x.is_finite() {
            self.defect(path, format!("must be finite, got {x}"));
            return None;
        }
        Some(x)
    }

    fn nonnegative_or(&mut self, v: Option<f64>, default: f64, path: &str) -> Option<f64> {
        let x = v.unwrap_or(default);
        if !(x >= 0.0) || !x.is_finite() {
            self.defect(path, format!("must be finite and ≥ 0, got {x}"));
            return None;
        }
        Some(x)
    }

    fn rows(&mut self, re: &[Vec<f64>], im: Option<&[Vec<f64>]>, path: &str) -> Option<Operator> {
        let d = re.len();
        if d == 0 {
            self.defect(path, "matrix is empty");
            return None;
        }
        if re.iter().any(|r| r.len() != d) || im.is_some_and(|im| im.len() != d || im.iter().any(|r| r.len() != d)) {
            self.defect(path, format!("matrix must be square with {d} rows of {d} entries"));
            return None;
        }
        let entries: Vec<C64> = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| C64::new(re[i][j], im.map_or(0.0, |im| im[i][j])))
            .collect();
        match Operator::from_row_major(d, &entries) {
            Ok(op) => Some(op),
            Err(e) => {
                self.defect(path, e.to_string());
                None
            }
        }
    }

    /// Resolves a matrix; `dim` fixes the size of named operators that
    /// need one (`identity`).
    fn matrix(&mut self, spec: &MatrixSpec, dim: Option<usize>, path: &str) -> Option<Operator> {
        match spec {
            MatrixSpec::Name(name) => match name.as_str() {
                "sigma_plus" => Some(sigma_plus()),
                "sigma_minus" => Some(sigma_minus()),
                "sigma_x" => Some(pauli_x()),
                "sigma_y" => Some(pauli_y()),
                "sigma_z" => Some(pauli_z()),
                "identity" => match dim {
                    Some(d) => Some(Operator::identity(d)),
                    None => {
                        self.defect(path, "`identity` needs a dimension from context; give the matrix explicitly");
                        None
                    }
                },
                other => {
                    self.defect(
                        path,
                        format!("unknown operator `{other}` (expected sigma_plus, sigma_minus, sigma_x, sigma_y, sigma_z or identity)"),
                    );
                    None
                }
            },
            MatrixSpec::Real(rows) => self.rows(rows, None, path),
            MatrixSpec::Complex(c) => self.rows(&c.re, Some(&c.im), path),
            MatrixSpec::File(f) => {
                let full = self.base_dir.join(&f.file);
                match std::fs::read_to_string(&full) {
                    Ok(text) => match Operator::from_text(&text) {
                        Ok(op) => Some(op),
                        Err(e) => {
                            self.defect(format!("{path}.file"), format!("{}: {e}", full.display()));
                            None
                        }
                    },
                    Err(e) => {
                        self.defect(format!("{path}.file"), format!("cannot read {}: {e}", full.display()));
                        None
                    }
                }
            }
        }
        .and_then(|op| match dim {
            Some(d) if op.dim() != d => {
                self.defect(path, format!("has dimension {} but {d} is expected", op.dim()));
                None
            }
            _ => Some(op),
        })
    }

    fn hermitian(&mut self, spec: &MatrixSpec, dim: Option<usize>, path: &str) -> Option<HermitianOperator> {
        let op = self.matrix(spec, dim, path)?;
        match HermitianOperator::new(op) {
            Ok(h) => Some(h),
            Err(e) => {
                self.defect(path, e.to_string());
                None
            }
        }
    }

    fn channels(&mut self, specs: &[ChannelSpec], dim: Option<usize>, path: &str) -> Option<Vec<JumpChannel>> {
        let mut out = Vec::new();
        let mut ok = true;
        for (j, ch) in specs.iter().enumerate() {
            let p = format!("{path}[{j}]");
            let op = self.matrix(&ch.operator, dim, &format!("{p}.operator"));
            if !(ch.rate >= 0.0) || !ch.rate.is_finite() {
                self.defect(format!("{p}.rate"), format!("must be finite and ≥ 0, got {}", ch.rate));
                ok = false;
                continue;
            }
            match op {
                Some(op) => out.push(JumpChannel::new(op, ch.rate).expect("rate checked")),
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn two_level_params(&mut self, m: &ModelSection) -> Option<TwoLevelBathParams> {
        let omega0 = self.positive(m.omega0, "model.omega0");
        let beta = self.positive(m.beta, "model.beta");
        let gamma0 = self.positive(m.gamma0, "model.gamma0");
        let hbar = self.positive(Some(m.hbar.unwrap_or(1.0)), "model.hbar");
        TwoLevelBathParams::new(omega0?, beta?, gamma0?, hbar?).ok()
    }

    fn builtin_name(&mut self, m: &ModelSection) -> Option<Option<()>> {
        match m.builtin.as_deref() {
            None => Some(None),
            Some("two_level_thermal") => Some(Some(())),
            Some(other) => {
                self.defect(
                    "model.builtin",
                    format!("unknown built-in model `{other}` (expected two_level_thermal)"),
                );
                None
            }
        }
    }

    /// The system model for `evolve` and `steady`.
    fn system_model(&mut self, m: &ModelSection) -> Option<(LindbladModel, Option<TwoLevelBathParams>)> {
        let builtin = self.builtin_name(m)?;
        let coupling = self.finite_or(m.coupling, 1.0, "model.coupling");
        // keep going after a bad Hamiltonian so later defects are reported too
        let (h, mut channels, hbar, params, dim) = if builtin.is_some() {
            if m.hamiltonian.is_some() {
                self.defect("model.hamiltonian", "conflicts with model.builtin");
            }
            let p = self.two_level_params(m);
            let hbar = p.map(|p| p.hbar());
            (
                p.map(|p| p.hamiltonian()),
                p.map(|p| two_level_thermal_channels(&p)),
                hbar,
                p,
                Some(2),
            )
        } else {
            let hbar = self.positive(Some(m.hbar.unwrap_or(1.0)), "model.hbar");
            let op = match &m.hamiltonian {
                Some(spec) => self.matrix(spec, None, "model.hamiltonian"),
                None => {
                    self.defect("model.hamiltonian", "is required unless model.builtin is given");
                    None
                }
            };
            let dim = op.as_ref().map(Operator::dim);
            let h = op.and_then(|op| match HermitianOperator::new(op) {
                Ok(h) => Some(h),
                Err(e) => {
                    self.defect("model.hamiltonian", e.to_string());
                    None
                }
            });
            (h, Some(Vec::new()), hbar, None, dim)
        };
        let extra = self.channels(&m.channels, dim, "model.channels");
        let lamb = match &m.lamb_shift {
            Some(spec) => self.hermitian(spec, dim, "model.lamb_shift").map(Some),
            None => Some(None),
        };
        channels.as_mut()?.extend(extra?);
        let model = LindbladModel::builder(h?)
            .maybe_lamb_shift(lamb?)
            .coupling(coupling?)
            .channels(channels?)
            .hbar(hbar?)
            .build();
        match model {
            Ok(model) => Some((model, params)),
            Err(e) => {
                self.defect("model", e.to_string());
                None
            }
        }
    }

    fn evolve(&mut self, cfg: &ScenarioConfig) -> Option<Scenario> {
        let n = &cfg.numerics;
        let dt = self.positive(n.dt, "numerics.dt");
        let t_span = match n.t_span {
            None => {
                self.defect("numerics.t_span", "is required");
                None
            }
            Some([t0, t1]) if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() => {
                self.defect("numerics.t_span", format!("need finite t0 < t1, got [{t0}, {t1}]"));
                None
            }
            Some([t0, t1]) => Some((t0, t1)),
        };
        let record_every = n.record_every.unwrap_or(1);
        if record_every == 0 {
            self.defect("numerics.record_every", "must be at least 1");
        }
        let (model, params) = self.system_model(&cfg.model)?;
        let d = model.dim();
        let rho0 = match &cfg.model.initial_state {
            None if params.is_some() => Some(DensityOperator::new(Operator::unit(2, 0, 0)).expect("pure state")),
            None => {
                self.defect("model.initial_state", "is required for an explicit model");
                None
            }
            Some(spec) => self.initial_state(spec, d),
        };
        Some(Scenario::Evolve {
            model,
            rho0: rho0?,
            t_span: t_span?,
            dt: dt?,
            record_every,
        })
    }

    fn initial_state(&mut self, spec: &MatrixSpec, d: usize) -> Option<DensityOperator> {
        const PATH: &str = "model.initial_state";
        let op = match spec {
            MatrixSpec::Name(name) if name == "excited" || name == "ground" => {
                if d != 2 {
                    self.defect(
                        PATH,
                        format!("`{name}` needs a two-level model, the model has dimension {d}"),
                    );
                    return None;
                }
                // upper level at index 0
                let i = if name == "excited" { 0 } else { 1 };
                Operator::unit(2, i, i)
            }
            MatrixSpec::Name(name) if name == "maximally_mixed" => Operator::identity(d).scale_real(1.0 / d as f64),
            other => self.matrix(other, Some(d), PATH)?,
        };
        match validate_density(op, DEFAULT_TOLERANCE) {
            Ok(rho) => Some(rho),
            Err(e) => {
                self.defect(PATH, e.to_string());
                None
            }
        }
    }

    fn grand_canonical(&mut self, g: &Option<GrandCanonicalSection>, path: &str) -> Option<GrandCanonicalSpec> {
        let Some(g) = g else {
            self.defect(path, "is required");
            return None;
        };
        let beta = self.positive(g.beta, &format!("{path}.beta"));
        let mu = self.finite_or(g.mu, 0.0, &format!("{path}.mu"));
        let family = g.family.unwrap_or(if g.sectors.is_some() {
            SectorFamily::Explicit
        } else {
            SectorFamily::SingleMode
        });
        let spec = match family {
            SectorFamily::SingleMode | SectorFamily::NTimesEps => {
                let eps = self.finite(g.eps, &format!("{path}.eps"));
                let n_max = self.require(&g.n_max, &format!("{path}.n_max"));
                let dim = if family == SectorFamily::NTimesEps {
                    let dim = self.require(&g.dim, &format!("{path}.dim"));
                    if dim == Some(0) {
                        self.defect(format!("{path}.dim"), "must be at least 1");
                        return None;
                    }
                    dim
                } else {
                    Some(1)
                };
                if g.sectors.is_some() {
                    self.defect(format!("{path}.sectors"), "only allowed with family `explicit`");
                }
                let (beta, mu, eps, n_max, dim) = (beta?, mu?, eps?, n_max?, dim?);
                GrandCanonicalSpec::n_times_eps(beta, mu, eps, n_max, dim)
            }
            SectorFamily::Explicit => {
                let Some(specs) = &g.sectors else {
                    self.defect(format!("{path}.sectors"), "is required for family `explicit`");
                    return None;
                };
                if specs.is_empty() {
                    self.defect(format!("{path}.sectors"), "needs at least the N = 0 sector");
                    return None;
                }
                let sectors: Vec<Option<HermitianOperator>> = specs
                    .iter()
                    .enumerate()
                    .map(|(n, s)| self.hermitian(s, None, &format!("{path}.sectors[{n}]")))
                    .collect();
                let sectors: Option<Vec<_>> = sectors.into_iter().collect();
                GrandCanonicalSpec::new(beta?, mu?, sectors?)
            }
        };
        match spec {
            Ok(s) => {
                let t = self.nonnegative_or(g.tail_threshold, s.tail_threshold(), &format!("{path}.tail_threshold"))?;
                Some(s.with_tail_threshold(t))
            }
            Err(e) => {
                self.defect(path, e.to_string());
                None
            }
        }
    }

    fn check(&mut self, m: &ModelSection) -> Option<Scenario> {
        let builtin = self.builtin_name(m)?;
        let Some(k_spec) = &m.k else {
            self.defect("model.k", "is required (gibbs, grand_canonical or a matrix)");
            return None;
        };
        let params = if builtin.is_some() {
            self.two_level_params(m)
        } else {
            None
        };
        let k = match k_spec {
            MatrixSpec::Name(name) if name == "gibbs" => {
                let (h, beta) = match &params {
                    Some(p) => (p.hamiltonian(), p.beta()),
                    None => {
                        let beta = self.positive(m.beta, "model.beta");
                        let Some(spec) = &m.hamiltonian else {
                            self.defect(
                                "model.hamiltonian",
                                "is required for k = gibbs without a built-in model",
                            );
                            return None;
                        };
                        (self.hermitian(spec, None, "model.hamiltonian")?, beta?)
                    }
                };
                hermitian_function(&h, |e| (-beta * e).exp()).ok()?.into_operator()
            }
            MatrixSpec::Name(name) if name == "grand_canonical" => {
                let gc = self.grand_canonical(&m.grand_canonical, "model.grand_canonical")?;
                match boltzmann_operator(&gc) {
                    Ok(k) => k,
                    Err(e) => {
                        self.defect("model.grand_canonical", e.to_string());
                        return None;
                    }
                }
            }
            other => self.matrix(other, None, "model.k")?,
        };
        let d = k.dim();
        let mut channels = match &params {
            Some(p) if d == 2 => two_level_thermal_channels(p),
            Some(_) => {
                self.defect(
                    "model.builtin",
                    format!("two_level_thermal channels are 2x2 but K has dimension {d}"),
                );
                return None;
            }
            None => Vec::new(),
        };
        channels.extend(self.channels(&m.channels, Some(d), "model.channels")?);

        let Some(cond) = &m.condition else {
            self.defect("model.condition", "is required");
            return None;
        };
        let condition = match cond.kind {
            ConditionLetter::A => EquilibriumCondition::Normal,
            ConditionLetter::B => {
                let a = self.require(&cond.group_a, "model.condition.group_a");
                let b = self.require(&cond.group_b, "model.condition.group_b");
                let (a, b) = (a?, b?);
                let n = channels.len();
                let mut seen = vec![0usize; n];
                for (&j, key) in a.iter().map(|j| (j, "group_a")).chain(b.iter().map(|j| (j, "group_b"))) {
                    if j >= n {
                        self.defect(
                            format!("model.condition.{key}"),
                            format!("channel index {j} is out of range for {n} channels"),
                        );
                    } else {
                        seen[j] += 1;
                    }
                }
                for (j, &count) in seen.iter().enumerate() {
                    match count {
                        0 => self.defect("model.condition", format!("channel {j} is in neither group")),
                        1 => {}
                        _ => self.defect("model.condition", format!("channel {j} is in both groups")),
                    }
                }
                EquilibriumCondition::Balanced { group_a: a, group_b: b }
            }
            ConditionLetter::C => {
                let f = match &cond.f {
                    Some(spec) => self.matrix(spec, Some(d), "model.condition.f"),
                    None => {
                        self.defect("model.condition.f", "is required for condition C");
                        None
                    }
                };
                let hbar = self.positive(Some(m.hbar.unwrap_or(1.0)), "model.hbar");
                EquilibriumCondition::Nondissipative { f: f?, hbar: hbar? }
            }
        };
        Some(Scenario::Check { condition, channels, k })
    }

    fn mu_extract(&mut self, m: &ModelSection) -> Option<Scenario> {
        const P: &str = "model.reservoir";
        let Some(r) = &m.reservoir else {
            self.defect(P, "is required");
            return None;
        };
        let total = self.require(&r.total_particles, &format!("{P}.total_particles"));
        let n_star = self.require(&r.n_star, &format!("{P}.n_star"));
        if n_star == Some(0) {
            self.defect(format!("{P}.n_star"), "must be at least 1 for a central difference");
        }
        let form = self.require(&r.mean_energy, &format!("{P}.mean_energy"));
        // form-specific fields are checked even when the common ones failed
        let energy = match form {
            Some(EnergyForm::Linear) => self.finite(r.eps, &format!("{P}.eps")).map(Energy::Linear),
            Some(EnergyForm::Quadratic) => {
                let a = self.finite(r.a, &format!("{P}.a"));
                let b = self.finite_or(r.b, 0.0, &format!("{P}.b"));
                Some(Energy::Quadratic(a?, b?))
            }
            Some(EnergyForm::Table) => self.require(&r.table, &format!("{P}.table")).map(Energy::Table),
            None => None,
        };
        let (total, n_star, energy) = (total?, n_star?, energy?);
        let m_f = total as f64;
        let built = match energy {
            Energy::Linear(eps) => ReservoirEnergyModel::from_fn(total, n_star + 1, move |n| eps * (m_f - n as f64)),
            Energy::Quadratic(a, b) => ReservoirEnergyModel::from_fn(total, n_star + 1, move |n| {
                let x = m_f - n as f64;
                a * x * x + b * x
            }),
            Energy::Table(table) => {
                if (table.len() as u64) < n_star + 2 {
                    self.defect(
                        format!("{P}.table"),
                        format!("needs entries up to N* + 1 = {}, has {}", n_star + 1, table.len()),
                    );
                    return None;
                }
                ReservoirEnergyModel::tabulated(total, table)
            }
        };
        match built {
            Ok(reservoir) => Some(Scenario::MuExtract { reservoir, n_star }),
            Err(e) => {
                self.defect(P, e.to_string());
                None
            }
        }
    }

    fn sample(&mut self, cfg: &ScenarioConfig) -> Option<Scenario> {
        const P: &str = "model.sampling";
        let m = &cfg.model;
        let dt = self.positive(cfg.numerics.dt, "numerics.dt");
        let gc = self.grand_canonical(&m.grand_canonical, "model.grand_canonical");
        let Some(s) = &m.sampling else {
            self.defect(P, "is required");
            return None;
        };
        let center = self.require(&s.window_center, &format!("{P}.window_center"));
        let half = self.require(&s.window_half_width, &format!("{P}.window_half_width"));
        let steps = self.require(&s.steps, &format!("{P}.steps"));
        if steps == Some(0) {
            self.defect(format!("{P}.steps"), "must be at least 1");
        }
        let alpha = self.finite_or(s.alpha_tilde, 0.0, &format!("{P}.alpha_tilde"));
        let hbar = self.positive(Some(m.hbar.unwrap_or(1.0)), "model.hbar");
        let observables: Vec<Option<Observable>> = s
            .observables
            .iter()
            .enumerate()
            .map(|(i, name)| match name.as_str() {
                "number" => Some(Observable::number()),
                "identity" => Some(Observable::identity()),
                "hamiltonian" => Some(Observable::hamiltonian()),
                other => {
                    self.defect(
                        format!("{P}.observables[{i}]"),
                        format!("unknown observable `{other}` (expected number, identity or hamiltonian)"),
                    );
                    None
                }
            })
            .collect();

        let gc = gc?;
        let (center, half) = (center?, half?);
        let n_max = gc.n_max();
        let (lo, hi) = (center as i64 - half as i64, center as i64 + half as i64);
        if lo < 0 || hi > n_max as i64 {
            self.defect(
                format!("{P}.window_center/{P}.window_half_width"),
                format!(
                    "window [{lo}, {hi}] must lie inside the truncation [0, {n_max}]: lower bound {lo} {} 0, upper bound {hi} {} n_max = {n_max}",
                    if lo < 0 { "<" } else { "≥" },
                    if hi > n_max as i64 { ">" } else { "≤" },
                ),
            );
            return None;
        }
        let initial_n = s.initial_n.unwrap_or(center);
        if (initial_n as i64) < lo || initial_n as i64 > hi {
            self.defect(
                format!("{P}.initial_n"),
                format!("N0 = {initial_n} is outside the window [{lo}, {hi}]"),
            );
        }

        let mut couplings = BTreeMap::new();
        if !s.channels.is_empty() {
            let dims = gc.sector_dims();
            let d = dims[lo as usize];
            if (lo..=hi).any(|n| dims[n as usize] != d) {
                self.defect(
                    format!("{P}.channels"),
                    "shared channels need equal sector dimensions across the window",
                );
                return None;
            }
            let channels = self.channels(&s.channels, Some(d), &format!("{P}.channels"))?;
            for n in lo as usize..=hi as usize {
                couplings.insert(
                    n,
                    SectorCoupling {
                        h_ren: None,
                        alpha_tilde: alpha?,
                        channels: channels.clone(),
                        hbar: hbar?,
                    },
                );
            }
        }
        let mut config = HierarchyConfig::new(gc, center, half, initial_n, dt?, steps?, cfg.numerics.seed.unwrap_or(0));
        config.couplings = couplings;
        config.hbar = hbar?;
        config.proposal_mode = match s.proposal_mode.unwrap_or(ModeName::PaperLiteral) {
            ModeName::PaperLiteral => ProposalMode::PaperLiteral,
            ModeName::Symmetric => ProposalMode::Symmetric,
        };
        let weighting = match s.weighting.unwrap_or(WeightingName::SectorNormalized) {
            WeightingName::SectorNormalized => EstimatorWeighting::SectorNormalized,
            WeightingName::Raw => EstimatorWeighting::Raw,
        };
        if let Err(e) = config.validate() {
            self.defect(P, e.to_string());
            return None;
        }
        Some(Scenario::Sample {
            config: Box::new(config),
            observables: observables.into_iter().collect::<Option<Vec<_>>>()?,
            weighting,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn built(text: &str) -> Result<Scenario, Vec<Defect>> {
        build(&parse(text).unwrap(), Path::new("."))
    }

    #[test]
    fn unknown_key_reports_its_path() {
        let d = parse(r#"{"scenario": "steady", "model": {"nope": 1}}"#).unwrap_err();
        assert_eq!(d.path, "model.nope");
    }

    #[test]
    fn wrong_type_reports_its_path() {
        let d = parse(r#"{"scenario": "steady", "model": {}, "numerics": {"dt": "fast"}}"#).unwrap_err();
        assert_eq!(d.path, "numerics.dt");
    }

    #[test]
    fn missing_scenario_is_a_defect() {
        assert!(parse(r#"{"model": {}}"#).is_err());
    }

    #[test]
    fn named_and_complex_matrices() {
        let s = built(
            r#"{"scenario": "steady", "model": {
                "hamiltonian": {"re": [[1, 0], [0, -1]], "im": [[0, 0], [0, 0]]},
                "channels": [{"operator": "sigma_minus", "rate": 0.5}]
            }}"#,
        )
        .unwrap();
        let Scenario::Steady { model } = s else {
            panic!("not a steady scenario")
        };
        assert_eq!(model.dim(), 2);
        assert_eq!(model.channels()[0].operator(), &sigma_minus());
    }

    #[test]
    fn defects_accumulate() {
        let d = built(
            r#"{"scenario": "steady", "model": {
                "hamiltonian": [[0, 1], [0, 0]],
                "channels": [{"operator": [[1, 0, 0]], "rate": -2}]
            }}"#,
        )
        .unwrap_err();
        let paths: Vec<&str> = d.iter().map(|d| d.path.as_str()).collect();
        assert!(paths.contains(&"model.hamiltonian"), "{paths:?}");
        assert!(paths.iter().any(|p| p.starts_with("model.channels[0]")), "{paths:?}");
        assert!(d.len() >= 3, "{d:?}");
    }

    #[test]
    fn reservoir_forms() {
        let s = built(
            r#"{"scenario": "mu-extract", "model": {"reservoir": {
                "total_particles": 1000, "n_star": 3, "mean_energy": "table",
                "table": [10, 9, 8, 7, 6]
            }}}"#,
        )
        .unwrap();
        let Scenario::MuExtract { reservoir, n_star } = s else {
            panic!("not mu-extract")
        };
        assert_eq!(gclind_core::gibbs::chemical_potential(&reservoir, n_star).unwrap(), 1.0);

        let d = built(r#"{"scenario": "mu-extract", "model": {"reservoir": {"n_star": 3, "mean_energy": "linear"}}}"#)
            .unwrap_err();
        assert!(d.iter().any(|d| d.path.ends_with("total_particles")), "{d:?}");
        assert!(d.iter().any(|d| d.path.ends_with("eps")), "{d:?}");
    }
}
