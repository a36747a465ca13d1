use log::warn;
use rand::Rng;

use super::Hierarchy;
use crate::error::{Error, Result};

/// How a single-particle jump is proposed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ProposalMode {
    /// Move towards the neighbour with the smaller ratio
    /// `r± = tr ρ_n / tr ρ_{n±1}`, accepted with probability `min(1, 1/r*)`.
    /// Ties are broken by a fair coin. Not detailed-balanced in general.
    #[default]
    PaperLiteral,
    /// `±1` with probability ½ each, accepted with probability
    /// `min(1, w_proposed/w_current)`.
    Symmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub n_next: usize,
    pub accepted: bool,
    /// The sector a move was attempted to, if any.
    pub proposed: Option<usize>,
    /// The window cut off a neighbour (literal mode) or the proposal
    /// (symmetric mode).
    pub boundary: bool,
    /// The current sector has zero weight.
    pub degenerate: bool,
}

impl StepOutcome {
    fn stay(n: usize) -> Self {
        StepOutcome {
            n_next: n,
            accepted: false,
            proposed: None,
            boundary: false,
            degenerate: false,
        }
    }
}

/// One Metropolis step on the hierarchy's sampling weights.
pub fn metropolis_step<R: Rng + ?Sized>(
    hierarchy: &Hierarchy,
    n_current: usize,
    mode: ProposalMode,
    rng: &mut R,
) -> Result<StepOutcome> {
    metropolis_step_with_weights(|n| hierarchy.weight(n), n_current, mode, rng)
}

/// One Metropolis step on arbitrary weights; `weight(n)` is `None` for
/// sectors outside the window.
pub fn metropolis_step_with_weights<R: Rng + ?Sized>(
    weight: impl Fn(usize) -> Option<f64>,
    n_current: usize,
    mode: ProposalMode,
    rng: &mut R,
) -> Result<StepOutcome> {
    let w = weight(n_current)
        .ok_or_else(|| Error::param("n_current", format!("sector {n_current} is outside the window")))?;
    if !(w > 0.0) {
        warn!("sector {n_current} has weight {w}; Metropolis step rejected");
        return Ok(StepOutcome {
            degenerate: true,
            ..StepOutcome::stay(n_current)
        });
    }
    let up = n_current.checked_add(1).map(|m| (m, weight(m)));
    let down = n_current.checked_sub(1).map(|m| (m, weight(m)));

    match mode {
        ProposalMode::PaperLiteral => {
            let ratio = |nb: Option<(usize, Option<f64>)>| match nb {
                Some((_, Some(wn))) if wn > 0.0 => w / wn,
                _ => f64::INFINITY,
            };
            let boundary = matches!(up, Some((_, None))) || matches!(down, Some((_, None)));
            let (r_up, r_down) = (ratio(up), ratio(down));
            if r_up.is_infinite() && r_down.is_infinite() {
                return Ok(StepOutcome {
                    boundary,
                    ..StepOutcome::stay(n_current)
                });
            }
            let go_up = if r_up == r_down {
                rng.gen_bool(0.5)
            } else {
                r_up < r_down
            };
            let (target, r_star) = if go_up {
                (n_current + 1, r_up)
            } else {
                (n_current - 1, r_down)
            };
            let u: f64 = rng.gen();
            let accepted = u < (1.0 / r_star).min(1.0);
            Ok(StepOutcome {
                n_next: if accepted { target } else { n_current },
                accepted,
                proposed: Some(target),
                boundary: boundary && !accepted,
                degenerate: false,
            })
        }
        ProposalMode::Symmetric => {
            let nb = if rng.gen_bool(0.5) { up } else { down };
            let (target, w_target) = match nb {
                Some((m, Some(wt))) => (m, wt),
                Some((m, None)) => {
                    return Ok(StepOutcome {
                        proposed: Some(m),
                        boundary: true,
                        ..StepOutcome::stay(n_current)
                    })
                }
                None => {
                    return Ok(StepOutcome {
                        boundary: true,
                        ..StepOutcome::stay(n_current)
                    })
                }
            };
            let u: f64 = rng.gen();
            let accepted = u < (w_target / w).min(1.0);
            Ok(StepOutcome {
                n_next: if accepted { target } else { n_current },
                accepted,
                proposed: Some(target),
                boundary: false,
                degenerate: false,
            })
        }
    }
}
