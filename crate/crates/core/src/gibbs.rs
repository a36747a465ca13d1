//! Canonical and grand-canonical equilibrium states.
//!
//! Sector weights `Q_N = tr e^{−β(H_N − μN)}` are kept in log form. Every
//! exponent is shifted by the relevant normalization before exponentiating,
//! so large `β` never overflows; the shift is undone explicitly when a
//! non-normalized `Q_N` is requested.

use std::fmt;
use std::sync::Arc;

use log::warn;

use crate::error::{Error, Result};
use crate::operator::{direct_sum, DensityOperator, HermitianOperator, Operator, Spectrum};

/// Default bound on the truncation tail weight `Q_{n_max}/Q_GC`.
pub const DEFAULT_TAIL_THRESHOLD: f64 = 1e-6;

/// Inverse temperature, chemical potential and the truncated family of
/// sector Hamiltonians `H_0 … H_{n_max}`.
#[derive(Clone, Debug)]
pub struct GrandCanonicalSpec {
    beta: f64,
    mu: f64,
    sectors: Vec<HermitianOperator>,
    tail_threshold: f64,
    // spectra of H_N − μN·Id
    spectra: Vec<Spectrum>,
    log_weights: Vec<f64>,
    log_q_gc: f64,
}

impl GrandCanonicalSpec {
    pub fn new(beta: f64, mu: f64, sectors: Vec<HermitianOperator>) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::param("beta", format!("must be positive and finite, got {beta}")));
        }
        if !mu.is_finite() {
            return Err(Error::param("mu", "must be finite"));
        }
        if sectors.is_empty() {
            return Err(Error::param("sectors", "at least the N = 0 sector is required"));
        }
        let spectra = sectors
            .iter()
            .enumerate()
            .map(|(n, h)| h.shifted(-mu * n as f64).eigh())
            .collect::<Result<Vec<_>>>()?;
        let log_weights: Vec<f64> = spectra
            .iter()
            .map(|s| log_sum_exp(s.values.iter().map(|e| -beta * e)))
            .collect();
        let log_q_gc = log_sum_exp(log_weights.iter().copied());
        Ok(GrandCanonicalSpec {
            beta,
            mu,
            sectors,
            tail_threshold: DEFAULT_TAIL_THRESHOLD,
            spectra,
            log_weights,
            log_q_gc,
        })
    }

    /// One bosonic mode with level spacing `eps`: every sector is
    /// one-dimensional with `H_N = N·eps`.
    pub fn single_mode(beta: f64, mu: f64, eps: f64, n_max: usize) -> Result<Self> {
        let sectors = (0..=n_max)
            .map(|n| HermitianOperator::diagonal(&[n as f64 * eps]))
            .collect();
        Self::new(beta, mu, sectors)
    }

    /// `H_N = N·eps·Id(dim)` for every sector.
    pub fn n_times_eps(beta: f64, mu: f64, eps: f64, n_max: usize, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "sector dimension must be positive"));
        }
        let sectors = (0..=n_max)
            .map(|n| HermitianOperator::identity(dim).scaled(n as f64 * eps))
            .collect();
        Self::new(beta, mu, sectors)
    }

    pub fn with_tail_threshold(mut self, threshold: f64) -> Self {
        self.tail_threshold = threshold;
        self
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn n_max(&self) -> usize {
        self.sectors.len() - 1
    }

    pub fn tail_threshold(&self) -> f64 {
        self.tail_threshold
    }

    pub fn sector_hamiltonians(&self) -> &[HermitianOperator] {
        &self.sectors
    }

    pub fn sector_hamiltonian(&self, n: usize) -> Result<&HermitianOperator> {
        self.check_sector(n)?;
        Ok(&self.sectors[n])
    }

    pub fn sector_dims(&self) -> Vec<usize> {
        self.sectors.iter().map(HermitianOperator::dim).collect()
    }

    /// `ln Q_N`.
    pub fn log_sector_weight(&self, n: usize) -> Result<f64> {
        self.check_sector(n)?;
        Ok(self.log_weights[n])
    }

    /// `ln Q_GC`.
    pub fn log_partition(&self) -> f64 {
        self.log_q_gc
    }

    fn check_sector(&self, n: usize) -> Result<()> {
        if n > self.n_max() {
            return Err(Error::SectorOutOfRange { n, n_max: self.n_max() });
        }
        Ok(())
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalized Gibbs state `e^{−βH}/tr e^{−βH}`.
pub fn canonical_state(h: &HermitianOperator, beta: f64) -> Result<DensityOperator> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::param("beta", format!("must be positive and finite, got {beta}")));
    }
    let spectrum = h.eigh()?;
    let e_min = spectrum.values[0];
    let log_z = log_sum_exp(spectrum.values.iter().map(|e| -beta * (e - e_min)));
    let rho = spectrum.map_real(|e| (-beta * (e - e_min) - log_z).exp());
    Ok(DensityOperator::wrap(rho.into_operator()))
}

/// `Q_N = tr e^{−β(H_N − μN·Id)}`.
pub fn sector_weight(spec: &GrandCanonicalSpec, n: usize) -> Result<f64> {
    Ok(spec.log_sector_weight(n)?.exp())
}

/// `ρ_GC,N = e^{−β(H_N − μN·Id)}/Q_GC`, with trace `Q_N/Q_GC`.
pub fn sector_state(spec: &GrandCanonicalSpec, n: usize) -> Result<DensityOperator> {
    spec.check_sector(n)?;
    let (beta, log_q) = (spec.beta, spec.log_q_gc);
    let rho = spec.spectra[n].map_real(|e| (-beta * e - log_q).exp());
    Ok(DensityOperator::wrap(rho.into_operator()))
}

/// The full Fock-space state as the direct sum of all sector states.
pub fn full_gc_state(spec: &GrandCanonicalSpec) -> Result<DensityOperator> {
    let blocks = (0..=spec.n_max())
        .map(|n| sector_state(spec, n).map(DensityOperator::into_operator))
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityOperator::wrap(direct_sum(&blocks)?))
}

/// Non-normalized `e^{−β(𝓗 − μ𝓝)}` on the truncated Fock space.
pub fn boltzmann_operator(spec: &GrandCanonicalSpec) -> Result<Operator> {
    let beta = spec.beta;
    let blocks: Vec<Operator> = spec
        .spectra
        .iter()
        .map(|s| s.map_real(|e| (-beta * e).exp()).into_operator())
        .collect();
    let k = direct_sum(&blocks)?;
    if !k.is_finite() {
        return Err(Error::InvalidOperator(
            "Boltzmann operator overflows; rescale the sector energies".into(),
        ));
    }
    Ok(k)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcStatistics {
    pub mean_n: f64,
    /// `P(N) = Q_N/Q_GC` for `N = 0..=n_max`.
    pub sector_probabilities: Vec<f64>,
    /// `P(n_max)`, the weight of the last retained sector.
    pub tail_weight: f64,
    pub tail_exceeds_threshold: bool,
}

pub fn gc_statistics(spec: &GrandCanonicalSpec) -> GcStatistics {
    let probs: Vec<f64> = spec.log_weights.iter().map(|lw| (lw - spec.log_q_gc).exp()).collect();
    let mean_n = probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
    let tail_weight = *probs.last().expect("spec has at least one sector");
    let tail_exceeds_threshold = spec.n_max() > 0 && tail_weight > spec.tail_threshold;
    if tail_exceeds_threshold {
        warn!(
            "Fock truncation at n_max = {} keeps tail weight {tail_weight:e} above threshold {:e}",
            spec.n_max(),
            spec.tail_threshold
        );
    }
    GcStatistics {
        mean_n,
        sector_probabilities: probs,
        tail_weight,
        tail_exceeds_threshold,
    }
}

/// Mean Bose–Einstein occupation `1/(e^{βħω₀} − 1)`.
pub fn bose_occupation(beta: f64, omega0: f64, hbar: f64) -> Result<f64> {
    for (name, v) in [("beta", beta), ("omega0", omega0), ("hbar", hbar)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::param(name, format!("must be positive and finite, got {v}")));
        }
    }
    Ok(1.0 / (beta * hbar * omega0).exp_m1())
}

// ---------------------------------------------------------------------------
// Chemical potential from the reservoir energy

/// `N ↦ ⟨E_B(M − N)⟩`, the mean reservoir energy after removing `N` particles.
#[derive(Clone)]
pub enum MeanEnergy {
    /// Values for `N = 0, 1, 2, …`.
    Tabulated(Vec<f64>),
    Function(Arc<dyn Fn(u64) -> f64 + Send + Sync>),
}

impl fmt::Debug for MeanEnergy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeanEnergy::Tabulated(v) => f.debug_tuple("Tabulated").field(v).finish(),
            MeanEnergy::Function(_) => f.write_str("Function(..)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReservoirEnergyModel {
    total_particles: u64,
    mean_energy: MeanEnergy,
    probe_max: u64,
}

impl ReservoirEnergyModel {
    /// Largest admissible `N_probe_max / M`.
    pub const DEFAULT_PROBE_FRACTION: f64 = 0.01;

    /// Tabulated model valid on `N = 0..values.len()`.
    pub fn tabulated(total_particles: u64, values: Vec<f64>) -> Result<Self> {
        Self::tabulated_with_fraction(total_particles, values, Self::DEFAULT_PROBE_FRACTION)
    }

    pub fn tabulated_with_fraction(total_particles: u64, values: Vec<f64>, fraction: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Reservoir("empty energy table".into()));
        }
        if let Some(n) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Reservoir(format!("non-finite energy at N = {n}")));
        }
        let probe_max = values.len() as u64 - 1;
        Self::checked(total_particles, MeanEnergy::Tabulated(values), probe_max, fraction)
    }

    /// Callable model probed on `N = 0..=probe_max`.
    pub fn from_fn(
        total_particles: u64,
        probe_max: u64,
        f: impl Fn(u64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::checked(
            total_particles,
            MeanEnergy::Function(Arc::new(f)),
            probe_max,
            Self::DEFAULT_PROBE_FRACTION,
        )
    }

    fn checked(total_particles: u64, mean_energy: MeanEnergy, probe_max: u64, fraction: f64) -> Result<Self> {
        if total_particles == 0 {
            return Err(Error::Reservoir("total particle number M must be positive".into()));
        }
        let limit = (total_particles as f64 * fraction).floor() as u64;
        if probe_max > limit {
            return Err(Error::Reservoir(format!(
                "probe range up to N = {probe_max} is not small against M = {total_particles} \
                 (limit {limit} at fraction {fraction})"
            )));
        }
        Ok(ReservoirEnergyModel {
            total_particles,
            mean_energy,
            probe_max,
        })
    }

    pub fn total_particles(&self) -> u64 {
        self.total_particles
    }

    pub fn probe_max(&self) -> u64 {
        self.probe_max
    }

    /// `⟨E_B(M − n)⟩`.
    pub fn mean_energy(&self, n: u64) -> Result<f64> {
        if n > self.probe_max {
            return Err(Error::Reservoir(format!(
                "model is undefined at N = {n} (valid up to {})",
                self.probe_max
            )));
        }
        let e = match &self.mean_energy {
            MeanEnergy::Tabulated(v) => v[n as usize],
            MeanEnergy::Function(f) => f(n),
        };
        if !e.is_finite() {
            return Err(Error::Reservoir(format!("non-finite energy at N = {n}")));
        }
        Ok(e)
    }
}

/// `μ = −∂⟨E_B(M − N)⟩/∂N` at `N*`, by a unit-step central difference.
pub fn chemical_potential(model: &ReservoirEnergyModel, n_star: u64) -> Result<f64> {
    if n_star == 0 {
        return Err(Error::Reservoir(
            "central difference needs N* − 1 ≥ 0; N* must be at least 1".into(),
        ));
    }
    let plus = model.mean_energy(n_star + 1)?;
    let minus = model.mean_energy(n_star - 1)?;
    Ok(-(plus - minus) / 2.0)
}
