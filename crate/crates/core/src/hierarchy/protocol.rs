use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{init_hierarchy, metropolis_step, Hierarchy, HierarchyConfig};
use crate::error::{Error, Result};
use crate::operator::{Operator, C64};

/// Largest imaginary part tolerated in an estimate.
pub const IMAGINARY_TOLERANCE: f64 = 1e-10;

/// Per-sector operators of an observable.
#[derive(Clone, Debug)]
pub enum SectorOperators {
    /// `N·Id` on sector `N`.
    Number,
    Identity,
    /// `H_N`.
    Hamiltonian,
    /// One operator per window sector.
    Explicit(BTreeMap<usize, Operator>),
}

#[derive(Clone, Debug)]
pub struct Observable {
    pub name: String,
    pub operators: SectorOperators,
}

impl Observable {
    pub fn new(name: impl Into<String>, operators: SectorOperators) -> Self {
        Observable {
            name: name.into(),
            operators,
        }
    }

    pub fn number() -> Self {
        Self::new("N", SectorOperators::Number)
    }

    pub fn identity() -> Self {
        Self::new("identity", SectorOperators::Identity)
    }

    pub fn hamiltonian() -> Self {
        Self::new("H", SectorOperators::Hamiltonian)
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Observable {
            name: self.name.clone(),
            reason: reason.into(),
        }
    }

    /// The operator on sector `n` of the hierarchy.
    pub fn sector_operator(&self, hierarchy: &Hierarchy, n: usize) -> Result<Operator> {
        let sector = hierarchy
            .sector(n)
            .ok_or_else(|| self.err(format!("sector {n} is outside the window")))?;
        let d = sector.dim();
        let op = match &self.operators {
            SectorOperators::Number => Operator::identity(d).scale_real(n as f64),
            SectorOperators::Identity => Operator::identity(d),
            SectorOperators::Hamiltonian => hierarchy
                .sector_hamiltonian(n)
                .expect("window sector has a Hamiltonian")
                .as_operator()
                .clone(),
            SectorOperators::Explicit(ops) => ops
                .get(&n)
                .cloned()
                .ok_or_else(|| self.err(format!("no operator given for sector {n}")))?,
        };
        if op.dim() != d {
            return Err(self.err(format!(
                "sector {n} operator is {}x{0} but the sector has dimension {d}",
                op.dim()
            )));
        }
        Ok(op)
    }
}

/// How each chain step contributes to an estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EstimatorWeighting {
    /// `tr(ρ_n A)` with the non-normalized sector state.
    Raw,
    /// `tr(ρ_n A)/tr ρ_n`; averages to the window-conditional mean when
    /// the chain samples `N` with the sector weights.
    #[default]
    SectorNormalized,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainStep {
    pub step: usize,
    pub time: f64,
    pub n: usize,
    pub accepted: bool,
    pub weight: f64,
}

/// The sequence of visited sectors; its length is the number of steps `K`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Chain {
    pub steps: Vec<ChainStep>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Multiplicity of each visited sector.
    pub fn visited(&self) -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for s in &self.steps {
            *m.entry(s.n).or_insert(0) += 1;
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    /// Batch-means standard error; NaN for fewer than four samples.
    pub std_error: f64,
    pub n_samples: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ProtocolStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Rejections caused by the window edge.
    pub boundary_rejections: usize,
    /// Steps taken from a zero-weight sector.
    pub degenerate_steps: usize,
}

#[derive(Clone, Debug)]
pub struct ProtocolResult {
    pub chain: Chain,
    pub estimates: Vec<Estimate>,
    pub stats: ProtocolStats,
    /// The hierarchy after the last step.
    pub hierarchy: Hierarchy,
}

fn trace_product(rho: &Operator, a: &Operator) -> C64 {
    rho.matrix()
        .iter()
        .zip(a.matrix().transpose().iter())
        .map(|(x, y)| x * y)
        .sum()
}

struct Accumulator {
    samples: Vec<f64>,
    imag_sum: f64,
}

impl Accumulator {
    fn new(capacity: usize) -> Self {
        Accumulator {
            samples: Vec::with_capacity(capacity),
            imag_sum: 0.0,
        }
    }

    fn push(
        &mut self,
        obs: &Observable,
        hierarchy: &Hierarchy,
        a: &Operator,
        n: usize,
        w: EstimatorWeighting,
    ) -> Result<()> {
        let sector = hierarchy.sector(n).expect("chain stays inside the window");
        let mut v = trace_product(sector.rho.as_operator(), a);
        if w == EstimatorWeighting::SectorNormalized {
            let tr = sector.trace();
            if !(tr > 0.0) {
                return Err(obs.err(format!("sector {n} has zero trace and cannot be normalized")));
            }
            v /= tr;
        }
        self.samples.push(v.re);
        self.imag_sum += v.im;
        Ok(())
    }

    fn finish(self, obs: &Observable) -> Result<Estimate> {
        let k = self.samples.len();
        if k == 0 {
            return Err(obs.err("empty chain"));
        }
        let imag = self.imag_sum / k as f64;
        if imag.abs() > IMAGINARY_TOLERANCE {
            return Err(obs.err(format!(
                "estimate has imaginary part {imag:e}; is the operator Hermitian?"
            )));
        }
        Ok(Estimate {
            name: obs.name.clone(),
            value: self.samples.iter().sum::<f64>() / k as f64,
            std_error: batch_means_std_error(&self.samples),
            n_samples: k,
        })
    }
}

/// Standard error of the mean from `⌊√K⌋` non-overlapping batches.
pub fn batch_means_std_error(samples: &[f64]) -> f64 {
    let n_batches = (samples.len() as f64).sqrt().floor() as usize;
    if n_batches < 2 {
        return f64::NAN;
    }
    let size = samples.len() / n_batches;
    let means: Vec<f64> = samples
        .chunks_exact(size)
        .take(n_batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let b = means.len() as f64;
    let mean = means.iter().sum::<f64>() / b;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

/// `(1/K) Σ_k tr(ρ_{n_k} A_{n_k})` over the chain, with every `ρ_n` taken
/// from the hierarchy as it is now. For time-dependent sectors use the
/// estimates accumulated by [`run_protocol`].
pub fn estimate_observable(
    chain: &Chain,
    hierarchy: &Hierarchy,
    observable: &Observable,
    weighting: EstimatorWeighting,
) -> Result<Estimate> {
    let mut ops = BTreeMap::new();
    let mut acc = Accumulator::new(chain.len());
    for s in &chain.steps {
        let op = match ops.entry(s.n) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(observable.sector_operator(hierarchy, s.n)?),
        };
        acc.push(observable, hierarchy, op, s.n, weighting)?;
    }
    acc.finish(observable)
}

/// Alternates one `Δt` evolution of every window sector with one
/// Metropolis step, `K` times. Step `k` is recorded at `t₀ + (k+1)Δt`
/// together with the sector reached, and every observable is sampled on
/// that sector's current state.
pub fn run_protocol(
    config: &HierarchyConfig,
    observables: &[Observable],
    weighting: EstimatorWeighting,
) -> Result<ProtocolResult> {
    let mut hierarchy = init_hierarchy(config)?;
    let (lo, hi) = hierarchy.window();
    let ops: Vec<Vec<Operator>> = observables
        .iter()
        .map(|o| (lo..=hi).map(|n| o.sector_operator(&hierarchy, n)).collect())
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut chain = Chain {
        steps: Vec::with_capacity(config.n_steps),
    };
    let mut stats = ProtocolStats::default();
    let mut accs: Vec<Accumulator> = observables.iter().map(|_| Accumulator::new(config.n_steps)).collect();
    let mut n = config.initial_n;
    for step in 0..config.n_steps {
        hierarchy.evolve(config.dt)?;
        let out = metropolis_step(&hierarchy, n, config.proposal_mode, &mut rng)?;
        if out.accepted {
            stats.accepted += 1;
        } else {
            stats.rejected += 1;
        }
        stats.boundary_rejections += out.boundary as usize;
        stats.degenerate_steps += out.degenerate as usize;
        n = out.n_next;
        chain.steps.push(ChainStep {
            step,
            time: config.t0 + (step + 1) as f64 * config.dt,
            n,
            accepted: out.accepted,
            weight: hierarchy.weight(n).expect("chain stays inside the window"),
        });
        for ((acc, obs), sector_ops) in accs.iter_mut().zip(observables).zip(&ops) {
            acc.push(obs, &hierarchy, &sector_ops[n - lo], n, weighting)?;
        }
    }
    if stats.boundary_rejections > 0 {
        log::info!(
            "{} of {} steps were rejected at the window edge",
            stats.boundary_rejections,
            config.n_steps
        );
    }
    let estimates = accs
        .into_iter()
        .zip(observables)
        .map(|(acc, obs)| acc.finish(obs))
        .collect::<Result<_>>()?;
    Ok(ProtocolResult {
        chain,
        estimates,
        stats,
        hierarchy,
    })
}

/// Columns `step,time,n,accepted,weight_n`; `accepted` is 0 or 1.
pub fn write_chain_csv<W: Write>(w: &mut W, chain: &Chain) -> std::io::Result<()> {
    writeln!(w, "step,time,n,accepted,weight_n")?;
    for s in &chain.steps {
        writeln!(w, "{},{},{},{},{}", s.step, s.time, s.n, s.accepted as u8, s.weight)?;
    }
    Ok(())
}

/// Columns `observable,estimate,std_error,n_samples`.
pub fn write_estimates_csv<W: Write>(w: &mut W, estimates: &[Estimate]) -> std::io::Result<()> {
    writeln!(w, "observable,estimate,std_error,n_samples")?;
    for e in estimates {
        writeln!(w, "{},{},{},{}", e.name, e.value, e.std_error, e.n_samples)?;
    }
    Ok(())
}
