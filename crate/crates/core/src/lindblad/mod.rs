//! Lindblad generators, including the per-sector form with the effective
//! Hamiltonian `H_N − μN·Id`.
//!
//! The right-hand side is
//!
//! ```text
//! dρ/dt = −(i/ħ)[H + α²·H_ren, ρ] + α² Σ_j λ_j (L_j ρ L_j† − ½{L_j†L_j, ρ})
//! ```
//!
//! The effective rate of channel `j` is `α²·λ_j`; coupling and rates are
//! independent inputs.

mod conditions;
mod liouvillian;
mod propagate;
mod steady;

pub use conditions::{
    check_equilibrium_condition, dissipative_sum, stationarity_residual, ChannelDefects, ConditionKind,
    ConditionReport, EquilibriumCondition, CONDITION_TOLERANCE,
};
pub use liouvillian::liouvillian_matrix;
pub(crate) use propagate::rk4_matrix;
pub use propagate::{
    propagate, propagate_with, rk4_step, PropagationOptions, Trajectory, POSITIVITY_TOLERANCE, TRACE_DRIFT_TOLERANCE,
};
pub use steady::{steady_states, NULL_SPACE_TOLERANCE, STEADY_RESIDUAL_TOLERANCE};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gibbs::bose_occupation;
use crate::operator::{
    commutator, same_dims, sigma_minus, sigma_plus, tensor_product, HermitianOperator, Operator, C64,
};

/// A jump operator with its damping rate `λ ≥ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpChannel {
    op: Operator,
    rate: f64,
}

impl JumpChannel {
    pub fn new(op: Operator, rate: f64) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::param(
                "rate",
                format!("damping rates must be finite and ≥ 0, got {rate}"),
            ));
        }
        Ok(JumpChannel { op, rate })
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }
}

#[derive(Clone, Debug)]
struct Jump {
    rate: f64,
    l: DMatrix<C64>,
    l_dag: DMatrix<C64>,
}

/// A validated Lindblad generator with its matrices precomputed.
#[derive(Clone, Debug)]
pub struct LindbladModel {
    h_sys: HermitianOperator,
    h_ren: Option<HermitianOperator>,
    coupling: f64,
    channels: Vec<JumpChannel>,
    hbar: f64,
    // H + α²·H_ren
    generator: DMatrix<C64>,
    // α²λ_j, L_j, L_j†
    jumps: Vec<Jump>,
    // ½ Σ α²λ_j L_j†L_j
    decay: DMatrix<C64>,
}

pub struct LindbladModelBuilder {
    h_sys: HermitianOperator,
    h_ren: Option<HermitianOperator>,
    coupling: f64,
    channels: Vec<JumpChannel>,
    hbar: f64,
}

impl LindbladModelBuilder {
    pub fn lamb_shift(mut self, h_ren: HermitianOperator) -> Self {
        self.h_ren = Some(h_ren);
        self
    }

    pub fn maybe_lamb_shift(mut self, h_ren: Option<HermitianOperator>) -> Self {
        self.h_ren = h_ren;
        self
    }

    pub fn coupling(mut self, alpha: f64) -> Self {
        self.coupling = alpha;
        self
    }

    pub fn channel(mut self, channel: JumpChannel) -> Self {
        self.channels.push(channel);
        self
    }

    pub fn channels(mut self, channels: impl IntoIterator<Item = JumpChannel>) -> Self {
        self.channels.extend(channels);
        self
    }

    pub fn hbar(mut self, hbar: f64) -> Self {
        self.hbar = hbar;
        self
    }

    pub fn build(self) -> Result<LindbladModel> {
        let d = self.h_sys.dim();
        if !(self.hbar > 0.0) || !self.hbar.is_finite() {
            return Err(Error::param("hbar", "must be positive and finite"));
        }
        if !self.coupling.is_finite() {
            return Err(Error::param("coupling", "must be finite"));
        }
        for (j, ch) in self.channels.iter().enumerate() {
            if ch.dim() != d {
                return Err(Error::DimensionMismatch(format!(
                    "channel {j} has dimension {} but the Hamiltonian has {d}",
                    ch.dim()
                )));
            }
        }
        let alpha2 = self.coupling * self.coupling;
        let mut generator = self.h_sys.matrix().clone();
        if let Some(h_ren) = &self.h_ren {
            same_dims(self.h_sys.as_operator(), h_ren.as_operator())?;
            let defect = commutator(self.h_sys.as_operator(), h_ren.as_operator())?.max_norm();
            let bound = 1e-9 * self.h_sys.as_operator().max_norm() * h_ren.as_operator().max_norm();
            if defect > bound {
                return Err(Error::param(
                    "h_ren",
                    format!("Lamb shift must commute with the system Hamiltonian (defect {defect:e})"),
                ));
            }
            generator += h_ren.matrix() * C64::new(alpha2, 0.0);
        }
        let mut decay = DMatrix::zeros(d, d);
        let jumps: Vec<Jump> = self
            .channels
            .iter()
            .map(|ch| {
                let l = ch.op.matrix().clone();
                let l_dag = l.adjoint();
                let rate = alpha2 * ch.rate;
                decay += (&l_dag * &l) * C64::new(0.5 * rate, 0.0);
                Jump { rate, l, l_dag }
            })
            .collect();
        Ok(LindbladModel {
            h_sys: self.h_sys,
            h_ren: self.h_ren,
            coupling: self.coupling,
            channels: self.channels,
            hbar: self.hbar,
            generator,
            jumps,
            decay,
        })
    }
}

impl LindbladModel {
    /// Starts a model with coupling 1, ħ = 1, no Lamb shift and no channels.
    pub fn builder(h_sys: HermitianOperator) -> LindbladModelBuilder {
        LindbladModelBuilder {
            h_sys,
            h_ren: None,
            coupling: 1.0,
            channels: Vec::new(),
            hbar: 1.0,
        }
    }

    pub fn new(h_sys: HermitianOperator, channels: Vec<JumpChannel>) -> Result<Self> {
        Self::builder(h_sys).channels(channels).build()
    }

    pub fn dim(&self) -> usize {
        self.h_sys.dim()
    }

    pub fn hamiltonian(&self) -> &HermitianOperator {
        &self.h_sys
    }

    pub fn lamb_shift(&self) -> Option<&HermitianOperator> {
        self.h_ren.as_ref()
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn channels(&self) -> &[JumpChannel] {
        &self.channels
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Same model with one more channel.
    pub fn with_channel(&self, channel: JumpChannel) -> Result<Self> {
        Self::builder(self.h_sys.clone())
            .maybe_lamb_shift(self.h_ren.clone())
            .coupling(self.coupling)
            .channels(self.channels.iter().cloned())
            .channel(channel)
            .hbar(self.hbar)
            .build()
    }

    fn check_dim(&self, rho: &Operator) -> Result<()> {
        if rho.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "state has dimension {} but the model has {}",
                rho.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub(crate) fn dissipator_matrix(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = -(&self.decay * rho + rho * &self.decay);
        for j in &self.jumps {
            if j.rate != 0.0 {
                out += (&j.l * rho * &j.l_dag) * C64::new(j.rate, 0.0);
            }
        }
        out
    }

    pub(crate) fn rhs_matrix(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let comm = &self.generator * rho - rho * &self.generator;
        comm * C64::new(0.0, -1.0 / self.hbar) + self.dissipator_matrix(rho)
    }
}

/// `α² Σ_j λ_j (L_j ρ L_j† − ½{L_j†L_j, ρ})`.
pub fn dissipator(model: &LindbladModel, rho: &Operator) -> Result<Operator> {
    model.check_dim(rho)?;
    Ok(Operator::wrap(model.dissipator_matrix(rho.matrix())))
}

/// Full right-hand side `−(i/ħ)[H + α²H_ren, ρ] + D(ρ)`.
pub fn lindblad_rhs(model: &LindbladModel, rho: &Operator) -> Result<Operator> {
    model.check_dim(rho)?;
    Ok(Operator::wrap(model.rhs_matrix(rho.matrix())))
}

/// `H_N − μ·n·Id`.
pub fn effective_hamiltonian(h_n: &HermitianOperator, mu: f64, n: usize) -> HermitianOperator {
    h_n.shifted(-mu * n as f64)
}

/// Everything in a per-sector generator except the sector Hamiltonian:
/// Lamb shift, dissipative coupling `α̃`, channels and ħ.
#[derive(Clone, Debug)]
pub struct SectorCoupling {
    pub h_ren: Option<HermitianOperator>,
    pub alpha_tilde: f64,
    pub channels: Vec<JumpChannel>,
    pub hbar: f64,
}

impl SectorCoupling {
    /// No dissipation: the sector evolves under `H_N − μN·Id` alone.
    pub fn conservative(hbar: f64) -> Self {
        SectorCoupling {
            h_ren: None,
            alpha_tilde: 0.0,
            channels: Vec::new(),
            hbar,
        }
    }
}

/// Generator for one `N`-sector: the Lindblad model with `H_N − μN·Id` as
/// system Hamiltonian and `α̃` as coupling.
pub fn modified_model(h_n: &HermitianOperator, mu: f64, n: usize, rest: &SectorCoupling) -> Result<LindbladModel> {
    LindbladModel::builder(effective_hamiltonian(h_n, mu, n))
        .maybe_lamb_shift(rest.h_ren.clone())
        .coupling(rest.alpha_tilde)
        .channels(rest.channels.iter().cloned())
        .hbar(rest.hbar)
        .build()
}

pub fn modified_rhs(
    h_n: &HermitianOperator,
    mu: f64,
    n: usize,
    rest: &SectorCoupling,
    rho: &Operator,
) -> Result<Operator> {
    lindblad_rhs(&modified_model(h_n, mu, n, rest)?, rho)
}

// ---------------------------------------------------------------------------
// Two-level system in a thermal bosonic bath

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoLevelBathParams {
    omega0: f64,
    beta: f64,
    gamma0: f64,
    hbar: f64,
}

impl TwoLevelBathParams {
    pub fn new(omega0: f64, beta: f64, gamma0: f64, hbar: f64) -> Result<Self> {
        for (name, v) in [("omega0", omega0), ("beta", beta), ("gamma0", gamma0), ("hbar", hbar)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(TwoLevelBathParams {
            omega0,
            beta,
            gamma0,
            hbar,
        })
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }
    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn occupation(&self) -> f64 {
        bose_occupation(self.beta, self.omega0, self.hbar).expect("parameters validated at construction")
    }

    /// `(ħω₀/2)(|1⟩⟨1| − |0⟩⟨0|)`, upper level at index 0.
    pub fn hamiltonian(&self) -> HermitianOperator {
        let e = 0.5 * self.hbar * self.omega0;
        HermitianOperator::diagonal(&[e, -e])
    }
}

/// Emission `(σ_−, γ₀(N̄+1))` and absorption `(σ_+, γ₀N̄)`.
pub fn two_level_thermal_channels(p: &TwoLevelBathParams) -> Vec<JumpChannel> {
    let n_bar = p.occupation();
    vec![
        JumpChannel {
            op: sigma_minus(),
            rate: p.gamma0 * (n_bar + 1.0),
        },
        JumpChannel {
            op: sigma_plus(),
            rate: p.gamma0 * n_bar,
        },
    ]
}

pub fn two_level_thermal_model(p: &TwoLevelBathParams) -> Result<LindbladModel> {
    LindbladModel::builder(p.hamiltonian())
        .channels(two_level_thermal_channels(p))
        .hbar(p.hbar)
        .build()
}

// ---------------------------------------------------------------------------
// System + reservoir Hamiltonian

/// Decomposition `H_diss = Σ_ℓ S_ℓ ⊗ R_ℓ` with the chemical-potential data of
/// one sector.
#[derive(Clone, Debug)]
pub struct InteractionSpec {
    pub terms: Vec<(HermitianOperator, HermitianOperator)>,
    pub mu: f64,
    pub n: usize,
    pub dissipative_coupling: f64,
}

/// `(H_N − μN·Id) ⊗ Id_B + Id_S ⊗ H_B + α̃ Σ_ℓ S_ℓ ⊗ R_ℓ`.
pub fn build_total_hamiltonian(
    spec: &InteractionSpec,
    h_n: &HermitianOperator,
    h_b: &HermitianOperator,
) -> Result<HermitianOperator> {
    let (ds, db) = (h_n.dim(), h_b.dim());
    let h_eff = effective_hamiltonian(h_n, spec.mu, spec.n);
    let mut total = tensor_product(h_eff.as_operator(), &Operator::identity(db))?
        .try_add(&tensor_product(&Operator::identity(ds), h_b.as_operator())?)?;
    for (l, (s, r)) in spec.terms.iter().enumerate() {
        if s.dim() != ds || r.dim() != db {
            return Err(Error::DimensionMismatch(format!(
                "interaction term {l} is {}x{} but the spaces are {ds}x{db}",
                s.dim(),
                r.dim()
            )));
        }
        let sr = tensor_product(s.as_operator(), r.as_operator())?;
        total = total.try_add(&sr.scale_real(spec.dissipative_coupling))?;
    }
    // Kronecker products of Hermitian factors are Hermitian.
    Ok(HermitianOperator::wrap(total))
}
