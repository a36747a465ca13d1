//! Fock-sector bookkeeping and the hierarchy of per-`N` sector states.
//!
//! Each sector in the sampling window carries a non-normalized density
//! operator whose trace is its statistical weight. Sectors evolve
//! independently under their own modified Lindblad generator; a Metropolis
//! chain over `N` then samples observables from them.

mod metropolis;
mod protocol;

pub use metropolis::{metropolis_step, metropolis_step_with_weights, ProposalMode, StepOutcome};
pub use protocol::{
    batch_means_std_error, estimate_observable, run_protocol, write_chain_csv, write_estimates_csv, Chain, ChainStep,
    Estimate, EstimatorWeighting, Observable, ProtocolResult, ProtocolStats, SectorOperators, IMAGINARY_TOLERANCE,
};

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gibbs::{sector_state, GrandCanonicalSpec};
use crate::lindblad::{modified_model, rk4_matrix, LindbladModel, SectorCoupling, POSITIVITY_TOLERANCE};
use crate::operator::{direct_sum, validate_density, DensityOperator, HermitianOperator, Operator};

/// Largest per-step trace change of a sector, relative to `max(1, tr ρ_N)`.
pub const SECTOR_TRACE_TOLERANCE: f64 = 1e-10;

/// `𝓝 = ⊕_N N·Id(dim_N)`.
pub fn fock_number_operator(sector_dims: &[usize]) -> Result<Operator> {
    if sector_dims.is_empty() {
        return Err(Error::param("sector_dims", "need at least one sector"));
    }
    let blocks: Vec<Operator> = sector_dims
        .iter()
        .enumerate()
        .map(|(n, &d)| Operator::identity(d).scale_real(n as f64))
        .collect();
    direct_sum(&blocks)
}

/// `𝓗 = ⊕_N H_N`.
pub fn second_quantized_hamiltonian(sector_hamiltonians: &[HermitianOperator]) -> Result<HermitianOperator> {
    if sector_hamiltonians.is_empty() {
        return Err(Error::param("sector_hamiltonians", "need at least one sector"));
    }
    let blocks: Vec<Operator> = sector_hamiltonians.iter().map(|h| h.as_operator().clone()).collect();
    Ok(HermitianOperator::wrap(direct_sum(&blocks)?))
}

/// One `N`-sector: the non-normalized state `ρ_N` with `tr ρ_N` its weight.
#[derive(Clone, Debug, PartialEq)]
pub struct SectorState {
    pub n: usize,
    pub rho: DensityOperator,
}

impl SectorState {
    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace()
    }
}

#[derive(Clone, Debug)]
pub struct HierarchyConfig {
    pub gc_spec: GrandCanonicalSpec,
    /// Estimate of `⟨N⟩` the window is centred on.
    pub window_center: usize,
    pub window_half_width: usize,
    /// Per-sector Lamb shift, `α̃`, channels and ħ. Sectors without an entry
    /// evolve conservatively with `hbar`.
    pub couplings: BTreeMap<usize, SectorCoupling>,
    pub hbar: f64,
    pub t0: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub rng_seed: u64,
    pub proposal_mode: ProposalMode,
    pub initial_n: usize,
}

impl HierarchyConfig {
    /// Conservative sectors, ħ = 1, `t₀ = 0`, `paper_literal` proposals.
    pub fn new(
        gc_spec: GrandCanonicalSpec,
        window_center: usize,
        window_half_width: usize,
        initial_n: usize,
        dt: f64,
        n_steps: usize,
        rng_seed: u64,
    ) -> Self {
        HierarchyConfig {
            gc_spec,
            window_center,
            window_half_width,
            couplings: BTreeMap::new(),
            hbar: 1.0,
            t0: 0.0,
            dt,
            n_steps,
            rng_seed,
            proposal_mode: ProposalMode::default(),
            initial_n,
        }
    }

    /// Window bounds `(⟨N⟩ − ΔN, ⟨N⟩ + ΔN)`, possibly outside the truncation.
    pub fn window_bounds(&self) -> (i64, i64) {
        let c = self.window_center as i64;
        let w = self.window_half_width as i64;
        (c - w, c + w)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.window_bounds();
        let n_max = self.gc_spec.n_max() as i64;
        if lo < 0 || hi > n_max {
            return Err(Error::param(
                "window",
                format!("window [{lo}, {hi}] is not inside the truncation [0, {n_max}]"),
            ));
        }
        let n0 = self.initial_n as i64;
        if n0 < lo || n0 > hi {
            return Err(Error::param(
                "initial_n",
                format!("N0 = {n0} is outside the window [{lo}, {hi}]"),
            ));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::param("dt", format!("must be positive, got {}", self.dt)));
        }
        if !self.t0.is_finite() {
            return Err(Error::param("t0", "must be finite"));
        }
        if self.n_steps < 1 {
            return Err(Error::param("n_steps", "need at least one step"));
        }
        if !(self.hbar > 0.0) || !self.hbar.is_finite() {
            return Err(Error::param("hbar", "must be positive and finite"));
        }
        for &n in self.couplings.keys() {
            if n as i64 > n_max {
                return Err(Error::SectorOutOfRange {
                    n,
                    n_max: n_max as usize,
                });
            }
        }
        Ok(())
    }
}

/// The window of sector states at a common time.
#[derive(Clone, Debug)]
pub struct Hierarchy {
    time: f64,
    lo: usize,
    sectors: Vec<SectorState>,
    models: Vec<LindbladModel>,
    hamiltonians: Vec<HermitianOperator>,
    weights: Vec<f64>,
}

/// Sectors start from `ρ_GC,N = e^{−β(H_N − μN)}/Q_GC` over the window.
pub fn init_hierarchy(config: &HierarchyConfig) -> Result<Hierarchy> {
    config.validate()?;
    let (lo, hi) = config.window_bounds();
    let states = (lo as usize..=hi as usize)
        .map(|n| sector_state(&config.gc_spec, n))
        .collect::<Result<Vec<_>>>()?;
    Hierarchy::from_states(config, states)
}

impl Hierarchy {
    /// User-supplied initial states, one per window sector in increasing
    /// `N`; their traces become the sampling weights.
    pub fn from_states(config: &HierarchyConfig, states: Vec<DensityOperator>) -> Result<Self> {
        config.validate()?;
        let (lo, hi) = config.window_bounds();
        let (lo, hi) = (lo as usize, hi as usize);
        if states.len() != hi - lo + 1 {
            return Err(Error::DimensionMismatch(format!(
                "window [{lo}, {hi}] needs {} sector states, got {}",
                hi - lo + 1,
                states.len()
            )));
        }
        let mut sectors = Vec::with_capacity(states.len());
        let mut models = Vec::with_capacity(states.len());
        let mut hamiltonians = Vec::with_capacity(states.len());
        for (rho, n) in states.into_iter().zip(lo..=hi) {
            let h_n = config.gc_spec.sector_hamiltonian(n)?;
            if rho.dim() != h_n.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "sector {n} state has dimension {} but H_N has {}",
                    rho.dim(),
                    h_n.dim()
                )));
            }
            let conservative = SectorCoupling::conservative(config.hbar);
            let coupling = config.couplings.get(&n).unwrap_or(&conservative);
            models.push(
                modified_model(h_n, config.gc_spec.mu(), n, coupling)
                    .map_err(|e| Error::SectorIntegration { n, source: Box::new(e) })?,
            );
            hamiltonians.push(h_n.clone());
            sectors.push(SectorState { n, rho });
        }
        let weights = sectors.iter().map(SectorState::trace).collect();
        Ok(Hierarchy {
            time: config.t0,
            lo,
            sectors,
            models,
            hamiltonians,
            weights,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Inclusive window `(lo, hi)`.
    pub fn window(&self) -> (usize, usize) {
        (self.lo, self.lo + self.sectors.len() - 1)
    }

    pub fn contains(&self, n: usize) -> bool {
        let (lo, hi) = self.window();
        (lo..=hi).contains(&n)
    }

    pub fn sectors(&self) -> &[SectorState] {
        &self.sectors
    }

    pub fn sector(&self, n: usize) -> Option<&SectorState> {
        n.checked_sub(self.lo).and_then(|i| self.sectors.get(i))
    }

    pub fn model(&self, n: usize) -> Option<&LindbladModel> {
        n.checked_sub(self.lo).and_then(|i| self.models.get(i))
    }

    /// `H_N` without the `−μN` shift.
    pub fn sector_hamiltonian(&self, n: usize) -> Option<&HermitianOperator> {
        n.checked_sub(self.lo).and_then(|i| self.hamiltonians.get(i))
    }

    /// Sampling weight of sector `n`; `None` outside the window.
    ///
    /// The generator is traceless, so the traces fixed at initialization
    /// stay the weights unless [`Hierarchy::reweight`] replaces them.
    pub fn weight(&self, n: usize) -> Option<f64> {
        n.checked_sub(self.lo).and_then(|i| self.weights.get(i)).copied()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Recomputes the sampling weights from the current sector states.
    pub fn reweight(&mut self, f: impl Fn(&SectorState) -> f64) -> Result<()> {
        let new: Vec<f64> = self.sectors.iter().map(f).collect();
        if let Some((i, w)) = new.iter().enumerate().find(|(_, w)| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::param(
                "weights",
                format!("sector {} got weight {w}; weights must be finite and ≥ 0", self.lo + i),
            ));
        }
        self.weights = new;
        Ok(())
    }

    /// Advances every sector by one RK4 step of its own generator.
    ///
    /// Sectors run concurrently; each result depends only on its own
    /// inputs, so the outcome does not depend on scheduling.
    pub fn evolve(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        let next: Vec<Result<DensityOperator>> = self
            .sectors
            .par_iter()
            .zip(self.models.par_iter())
            .map(|(s, model)| {
                let y = rk4_matrix(model, s.rho.matrix(), dt);
                let op = Operator::wrap(y);
                let before = s.trace();
                let after = op.trace().re;
                let drift = (after - before).abs();
                if !op.is_finite() || drift > SECTOR_TRACE_TOLERANCE * before.abs().max(1.0) {
                    return Err(Error::param(
                        "dt",
                        format!("sector trace drifted by {drift:e} in one step"),
                    ));
                }
                validate_density(op, POSITIVITY_TOLERANCE)
            })
            .collect();
        let mut states = Vec::with_capacity(next.len());
        for (r, s) in next.into_iter().zip(&self.sectors) {
            match r {
                Ok(rho) => states.push(rho),
                Err(e) => {
                    return Err(Error::SectorIntegration {
                        n: s.n,
                        source: Box::new(e),
                    })
                }
            }
        }
        for (s, rho) in self.sectors.iter_mut().zip(states) {
            s.rho = rho;
        }
        self.time += dt;
        Ok(())
    }
}

/// Alias of [`Hierarchy::evolve`] returning the hierarchy.
pub fn evolve_window(mut hierarchy: Hierarchy, dt: f64) -> Result<Hierarchy> {
    hierarchy.evolve(dt)?;
    Ok(hierarchy)
}
