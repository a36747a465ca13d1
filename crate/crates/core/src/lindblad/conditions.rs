//! Residual checks for stationarity of a (non-normalized) grand-canonical
//! operator `K = e^{−β(𝓗 − μ𝓝)}` under a set of jump channels.

use std::fmt;

use super::JumpChannel;
use crate::error::{Error, Result};
use crate::operator::{commutator, Operator, C64};

/// Pass threshold for every condition check.
pub const CONDITION_TOLERANCE: f64 = 1e-9;

/// `Σ_j λ_j (L_j K L_j† − ½{L_j†L_j, K})`, without any coupling prefactor.
pub fn dissipative_sum(channels: &[JumpChannel], k: &Operator) -> Result<Operator> {
    let km = k.matrix();
    let mut out = nalgebra::DMatrix::zeros(k.dim(), k.dim());
    for (j, ch) in channels.iter().enumerate() {
        if ch.dim() != k.dim() {
            return Err(Error::DimensionMismatch(format!(
                "channel {j} has dimension {} but K has {}",
                ch.dim(),
                k.dim()
            )));
        }
        let l = ch.operator().matrix();
        let l_dag = l.adjoint();
        let ldl = &l_dag * l;
        let term = l * km * &l_dag - (&ldl * km + km * &ldl) * C64::new(0.5, 0.0);
        out += term * C64::new(ch.rate(), 0.0);
    }
    Ok(Operator::wrap(out))
}

/// Max-norm of the dissipative sum on `K`; zero means `K` is stationary.
pub fn stationarity_residual(channels: &[JumpChannel], k: &Operator) -> Result<f64> {
    Ok(dissipative_sum(channels, k)?.max_norm())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConditionKind {
    A,
    B,
    C,
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditionKind::A => "A",
            ConditionKind::B => "B",
            ConditionKind::C => "C",
        })
    }
}

#[derive(Clone, Debug)]
pub enum EquilibriumCondition {
    /// Each `L_j` normal and commuting (with its adjoint) with `K`.
    Normal,
    /// Two groups of channels whose dissipative sums cancel on `K`.
    Balanced { group_a: Vec<usize>, group_b: Vec<usize> },
    /// Dissipative sum equal to `(i/ħ)[f, K]`.
    Nondissipative { f: Operator, hbar: f64 },
}

impl EquilibriumCondition {
    pub fn kind(&self) -> ConditionKind {
        match self {
            EquilibriumCondition::Normal => ConditionKind::A,
            EquilibriumCondition::Balanced { .. } => ConditionKind::B,
            EquilibriumCondition::Nondissipative { .. } => ConditionKind::C,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelDefects {
    pub index: usize,
    /// `‖L†L − LL†‖_max`
    pub normality: f64,
    /// `‖[L, K]‖_max`
    pub commutator: f64,
    /// `‖[L†, K]‖_max`
    pub adjoint_commutator: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub kind: ConditionKind,
    pub passed: bool,
    pub tolerance: f64,
    /// The largest measured defect.
    pub residual: f64,
    /// Condition A only.
    pub channel_defects: Vec<ChannelDefects>,
    /// Condition B only: max-norms of the two group sums.
    pub group_norms: Option<(f64, f64)>,
}

pub fn check_equilibrium_condition(
    condition: &EquilibriumCondition,
    channels: &[JumpChannel],
    k: &Operator,
) -> Result<ConditionReport> {
    let tolerance = CONDITION_TOLERANCE;
    let mut report = ConditionReport {
        kind: condition.kind(),
        passed: false,
        tolerance,
        residual: 0.0,
        channel_defects: Vec::new(),
        group_norms: None,
    };
    match condition {
        EquilibriumCondition::Normal => {
            for (index, ch) in channels.iter().enumerate() {
                if ch.dim() != k.dim() {
                    return Err(Error::DimensionMismatch(format!(
                        "channel {index} has dimension {} but K has {}",
                        ch.dim(),
                        k.dim()
                    )));
                }
                let l = ch.operator();
                let l_dag = l.adjoint();
                let normality = (&(&l_dag * l) - &(l * &l_dag)).max_norm();
                let commutator_defect = commutator(l, k)?.max_norm();
                let adjoint_commutator = commutator(&l_dag, k)?.max_norm();
                report.residual = report
                    .residual
                    .max(normality)
                    .max(commutator_defect)
                    .max(adjoint_commutator);
                report.channel_defects.push(ChannelDefects {
                    index,
                    normality,
                    commutator: commutator_defect,
                    adjoint_commutator,
                });
            }
        }
        EquilibriumCondition::Balanced { group_a, group_b } => {
            check_partition(group_a, group_b, channels.len())?;
            let pick = |g: &[usize]| g.iter().map(|&j| channels[j].clone()).collect::<Vec<_>>();
            let sum_a = dissipative_sum(&pick(group_a), k)?;
            let sum_b = dissipative_sum(&pick(group_b), k)?;
            report.group_norms = Some((sum_a.max_norm(), sum_b.max_norm()));
            report.residual = (&sum_a + &sum_b).max_norm();
        }
        EquilibriumCondition::Nondissipative { f, hbar } => {
            if f.dim() != k.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "f has dimension {} but K has {}",
                    f.dim(),
                    k.dim()
                )));
            }
            if !(*hbar > 0.0) {
                return Err(Error::param("hbar", "must be positive"));
            }
            let target = commutator(f, k)?.scale(C64::new(0.0, 1.0 / hbar));
            report.residual = (&dissipative_sum(channels, k)? - &target).max_norm();
        }
    }
    report.passed = report.residual <= tolerance;
    Ok(report)
}

fn check_partition(a: &[usize], b: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &j in a.iter().chain(b) {
        if j >= n {
            return Err(Error::MalformedPartition(format!(
                "index {j} is out of range for {n} channels"
            )));
        }
        if seen[j] {
            return Err(Error::MalformedPartition(format!("channel {j} appears twice")));
        }
        seen[j] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::MalformedPartition(format!(
            "channel {missing} is not assigned to a group"
        )));
    }
    Ok(())
}
