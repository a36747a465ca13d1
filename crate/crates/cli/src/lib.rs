//! Scenario runner behind the `gclind` binary.
//!
//! A scenario is a JSON document with `scenario`, `model`, `numerics` and
//! `output` sections. [`validate_config`] checks one without running it;
//! [`run_scenario`] validates, runs and writes the result files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gclind_core::gibbs::chemical_potential;
use gclind_core::hierarchy::{run_protocol, write_chain_csv, write_estimates_csv};
use gclind_core::lindblad::{
    check_equilibrium_condition, lindblad_rhs, propagate_with, steady_states, PropagationOptions,
};
use gclind_core::Operator;
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{Defect, Scenario, ScenarioConfig, ScenarioKind};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", format_defects(.0))]
    Validation(Vec<Defect>),
    #[error("numerical failure: {0}")]
    Numerical(#[from] gclind_core::Error),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

fn format_defects(defects: &[Defect]) -> String {
    defects.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

/// A parsed configuration with the hash of its raw bytes.
pub struct LoadedConfig {
    pub config: ScenarioConfig,
    pub sha256: String,
    pub base_dir: PathBuf,
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let raw = fs::read(path).map_err(|e| {
        CliError::Validation(vec![Defect {
            path: "config".into(),
            message: format!("cannot read {}: {e}", path.display()),
        }])
    })?;
    let sha256 = Sha256::digest(&raw).iter().map(|b| format!("{b:02x}")).collect();
    let text = String::from_utf8(raw).map_err(|_| {
        CliError::Validation(vec![Defect {
            path: "config".into(),
            message: "file is not valid UTF-8".into(),
        }])
    })?;
    let config = config::parse(&text).map_err(|d| CliError::Validation(vec![d]))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig {
        config,
        sha256,
        base_dir,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    pub kind: Option<ScenarioKind>,
    pub defects: Vec<Defect>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.defects.is_empty()
    }
}

/// Full schema and consistency check without running anything.
pub fn validate_config(path: &Path) -> ValidationReport {
    match load(path) {
        Ok(loaded) => ValidationReport {
            kind: Some(loaded.config.scenario),
            defects: config::build(&loaded.config, &loaded.base_dir)
                .err()
                .unwrap_or_default(),
        },
        Err(CliError::Validation(defects)) => ValidationReport { kind: None, defects },
        Err(e) => ValidationReport {
            kind: None,
            defects: vec![Defect {
                path: "config".into(),
                message: e.to_string(),
            }],
        },
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides `output.dir`; the default is `./out`.
    pub out_dir: Option<PathBuf>,
    /// Overrides `numerics.seed`.
    pub seed: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub kind: ScenarioKind,
    pub files: Vec<PathBuf>,
    /// Human-readable result lines.
    pub lines: Vec<String>,
}

/// Validates and runs the scenario in `path`. With `expected` set, the
/// config must declare that scenario kind.
pub fn run_scenario(path: &Path, expected: Option<ScenarioKind>, opts: &RunOptions) -> Result<RunSummary, CliError> {
    let loaded = load(path)?;
    let cfg = &loaded.config;
    if let Some(kind) = expected {
        if kind != cfg.scenario {
            return Err(CliError::Validation(vec![Defect {
                path: "scenario".into(),
                message: format!(
                    "config declares `{}` but the `{kind}` subcommand was used",
                    cfg.scenario
                ),
            }]));
        }
    }
    let mut scenario = config::build(cfg, &loaded.base_dir).map_err(CliError::Validation)?;
    let seed = opts.seed.or(cfg.numerics.seed).unwrap_or(0);
    if let Scenario::Sample { config, .. } = &mut scenario {
        config.rng_seed = seed;
    }
    let out_dir = opts
        .out_dir
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out_dir).map_err(|source| CliError::Io {
        path: out_dir.clone(),
        source,
    })?;
    let out = Output {
        dir: out_dir,
        prefix: cfg.output.prefix.clone(),
        sha256: loaded.sha256.clone(),
        seed,
    };
    let mut summary = RunSummary {
        kind: cfg.scenario,
        files: Vec::new(),
        lines: Vec::new(),
    };
    match scenario {
        Scenario::Evolve {
            model,
            rho0,
            t_span,
            dt,
            record_every,
        } => {
            let opts = PropagationOptions {
                record_every,
                ..Default::default()
            };
            let traj = propagate_with(&model, &rho0, t_span, dt, &opts)?;
            let d = model.dim();
            let file = out.csv("trajectory.csv", false, |w| {
                let mut header = vec!["time".to_string()];
                header.extend((0..d).map(|i| format!("pop_{i}")));
                for i in 0..d {
                    for j in i + 1..d {
                        header.push(format!("re_rho_{i}_{j}"));
                        header.push(format!("im_rho_{i}_{j}"));
                    }
                }
                header.push("trace".into());
                header.push("min_eigenvalue".into());
                writeln!(w, "{}", header.join(","))?;
                for (t, rho) in traj.iter() {
                    let mut row = vec![t.to_string()];
                    row.extend(rho.populations().iter().map(f64::to_string));
                    for i in 0..d {
                        for j in i + 1..d {
                            let z = rho.as_operator().entry(i, j);
                            row.push(z.re.to_string());
                            row.push(z.im.to_string());
                        }
                    }
                    row.push(rho.trace().to_string());
                    let min_ev = rho.min_eigenvalue().map_err(std::io::Error::other)?;
                    row.push(min_ev.to_string());
                    writeln!(w, "{}", row.join(","))?;
                }
                Ok(())
            })?;
            summary.files.push(file);
            let (t, last) = traj.last().expect("trajectory has endpoints");
            summary
                .lines
                .push(format!("t = {t}: populations {:?}", last.populations()));
        }
        Scenario::Steady { model } => {
            let states = steady_states(&model)?;
            let mut dumped = Vec::new();
            for (i, rho) in states.iter().enumerate() {
                let residual = lindblad_rhs(&model, rho.as_operator())?.max_norm();
                summary.lines.push(format!(
                    "steady state {i}: residual {residual:e}, populations {:?}",
                    rho.populations()
                ));
                dumped.push(json!({
                    "index": i,
                    "residual": residual,
                    "trace": rho.trace(),
                    "populations": rho.populations(),
                    "re": rows(rho.as_operator(), |z| z.re),
                    "im": rows(rho.as_operator(), |z| z.im),
                }));
            }
            let report = json!({
                "tool": format!("gclind {VERSION}"),
                "config_sha256": out.sha256,
                "count": states.len(),
                "states": dumped,
            });
            summary.files.push(out.json("steady.json", &report)?);
        }
        Scenario::Check { condition, channels, k } => {
            let r = check_equilibrium_condition(&condition, &channels, &k)?;
            let status = if r.passed { "PASS" } else { "FAIL" };
            summary.lines.push(format!(
                "condition {}: {status} (residual {:e}, tolerance {:e})",
                r.kind, r.residual, r.tolerance
            ));
            for d in &r.channel_defects {
                summary.lines.push(format!(
                    "  channel {}: normality defect {}, [L,K] {:e}, [L†,K] {:e}",
                    d.index, d.normality, d.commutator, d.adjoint_commutator
                ));
            }
            let report = json!({
                "tool": format!("gclind {VERSION}"),
                "config_sha256": out.sha256,
                "condition": r.kind.to_string(),
                "status": status,
                "passed": r.passed,
                "residual": r.residual,
                "tolerance": r.tolerance,
                "channel_defects": r.channel_defects.iter().map(|d| json!({
                    "index": d.index,
                    "normality": d.normality,
                    "commutator": d.commutator,
                    "adjoint_commutator": d.adjoint_commutator,
                })).collect::<Vec<_>>(),
                "group_norms": r.group_norms.map(|(a, b)| vec![a, b]),
            });
            summary.files.push(out.json("check.json", &report)?);
        }
        Scenario::MuExtract { reservoir, n_star } => {
            let mu = chemical_potential(&reservoir, n_star)?;
            summary.lines.push(format!("mu = {mu}"));
            let report = json!({
                "tool": format!("gclind {VERSION}"),
                "config_sha256": out.sha256,
                "mu": mu,
                "n_star": n_star,
                "total_particles": reservoir.total_particles(),
            });
            summary.files.push(out.json("mu.json", &report)?);
        }
        Scenario::Sample {
            config,
            observables,
            weighting,
        } => {
            let res = run_protocol(&config, &observables, weighting)?;
            summary
                .files
                .push(out.csv("chain.csv", true, |w| write_chain_csv(w, &res.chain))?);
            summary
                .files
                .push(out.csv("estimates.csv", true, |w| write_estimates_csv(w, &res.estimates))?);
            for e in &res.estimates {
                summary.lines.push(format!(
                    "{} = {} ± {} ({} samples)",
                    e.name, e.value, e.std_error, e.n_samples
                ));
            }
            let (lo, hi) = res.hierarchy.window();
            let report = json!({
                "tool": format!("gclind {VERSION}"),
                "config_sha256": out.sha256,
                "seed": seed,
                "window": [lo, hi],
                "steps": res.chain.len(),
                "accepted": res.stats.accepted,
                "rejected": res.stats.rejected,
                "boundary_rejections": res.stats.boundary_rejections,
                "degenerate_steps": res.stats.degenerate_steps,
                "visited": res.chain.visited().into_iter().map(|(n, c)| json!([n, c])).collect::<Vec<_>>(),
            });
            summary.files.push(out.json("stats.json", &report)?);
            summary.lines.push(format!(
                "{} accepted, {} rejected, {} at the window edge",
                res.stats.accepted, res.stats.rejected, res.stats.boundary_rejections
            ));
        }
    }
    Ok(summary)
}

fn rows(op: &Operator, f: impl Fn(gclind_core::C64) -> f64) -> Vec<Vec<f64>> {
    (0..op.dim())
        .map(|i| (0..op.dim()).map(|j| f(op.entry(i, j))).collect())
        .collect()
}

struct Output {
    dir: PathBuf,
    prefix: String,
    sha256: String,
    seed: u64,
}

impl Output {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{}{name}", self.prefix))
    }

    fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Writes the provenance comment line, then whatever `body` emits.
    fn csv(
        &self,
        name: &str,
        with_seed: bool,
        body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let write = || -> std::io::Result<()> {
            let mut w = BufWriter::new(File::create(&path)?);
            write!(w, "# gclind {VERSION} config_sha256={}", self.sha256)?;
            if with_seed {
                write!(w, " seed={}", self.seed)?;
            }
            writeln!(w)?;
            body(&mut w)?;
            w.flush()
        };
        write().map_err(Self::io_err(&path))?;
        Ok(path)
    }

    fn json(&self, name: &str, value: &serde_json::Value) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).expect("JSON values serialize") + "\n";
        fs::write(&path, text).map_err(Self::io_err(&path))?;
        Ok(path)
    }
}
