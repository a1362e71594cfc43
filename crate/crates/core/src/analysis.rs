//! Observables extracted from trajectories and propagators, the Landau-Zener
//! survival formula, and reference-vs-approximate comparison reports.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::algebra::{fidelity, Matrix4, StateVector4};
use crate::error::{Error, Result};
use crate::field::{adiabaticity, FieldProfile};
use crate::frame::{frame_unitary, mixing_angles};
use crate::hamiltonian::{BlockId, Orientation, SystemParams};
use crate::propagate::{
    approximate_propagators, block_splitting, reference_propagate, Frame, Order, ReferenceOptions,
    TimeGrid, Trajectory,
};

/// Unitarity defect accepted by [`transition_probability`].
pub const UNITARY_TOLERANCE: f64 = 1e-9;
/// Lab and frame infidelities of the same pair of states must agree this well.
pub const FRAME_AGREEMENT: f64 = 1e-9;
/// Above this, the adiabaticity ratio or the gauge rate over the gap marks a
/// run as non-adiabatic.
pub const NON_ADIABATIC_THRESHOLD: f64 = 0.1;

/// `|u[to, from]|^2`.
pub fn transition_probability(u: &Matrix4, from: usize, to: usize) -> Result<f64> {
    let defect = u.unitarity_defect();
    if !(defect <= UNITARY_TOLERANCE) {
        return Err(Error::NonUnitaryInput { defect });
    }
    if from > 3 || to > 3 {
        return Err(Error::Consistency(format!(
            "basis index out of range: {from} -> {to}"
        )));
    }
    Ok(u.0[to][from].norm_sqr().min(1.0))
}

/// Diabatic survival `exp(-2 pi (2 A_perp)^2 / ((1 - zeta) v))` of the {2,3}
/// block for a linear sweep `omega(t) = omega_start + v t` along the axis.
///
/// The sweep is assumed to start and end far from the crossing.
pub fn lz_asymptotic(p: &SystemParams) -> Result<f64> {
    if p.orientation() != Orientation::Parallel {
        return Err(Error::UnsupportedOrientation { theta: p.theta });
    }
    let rate = match p.profile {
        FieldProfile::LinearRamp { rate, .. } => rate,
        _ => {
            return Err(Error::InvalidProfile(
                "the Landau-Zener formula needs a linear ramp".into(),
            ))
        }
    };
    let slope = ((1.0 - p.zeta) * rate).abs();
    if slope == 0.0 {
        return Err(Error::ZeroRate);
    }
    let coupling = 2.0 * p.a_perp;
    Ok((-2.0 * PI * coupling * coupling / slope).exp())
}

/// `1 - |<a|b>|^2`.
pub fn infidelity(a: &StateVector4, b: &StateVector4) -> Result<f64> {
    Ok(1.0 - fidelity(a, b)?)
}

/// Probability of leaving basis state `index`.
pub fn leakage(state: &StateVector4, index: usize) -> f64 {
    (1.0 - state.populations()[index]).clamp(0.0, 1.0)
}

/// Largest `|sum of populations - 1|` along a list of states.
pub fn max_probability_defect(states: &[StateVector4]) -> f64 {
    states
        .iter()
        .map(|s| (s.populations().iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Adiabaticity ratio sampled on a set of times.
#[derive(Clone, Debug, PartialEq)]
pub struct EtaSeries {
    /// `None` where the field vanishes and the ratio diverges.
    pub values: Vec<Option<f64>>,
    /// Largest finite `|eta|`.
    pub max: f64,
    pub divergent: bool,
}

pub fn eta_series(profile: &FieldProfile, times: &[f64]) -> Result<EtaSeries> {
    let mut values = Vec::with_capacity(times.len());
    let mut max = 0.0f64;
    let mut divergent = false;
    for &t in times {
        match adiabaticity(profile, t) {
            Ok(x) => {
                max = max.max(x.abs());
                values.push(Some(x));
            }
            Err(Error::DivergentMetric { .. }) => {
                divergent = true;
                values.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(EtaSeries {
        values,
        max,
        divergent,
    })
}

/// Final block transition probabilities `|beta|^2` of the first-order solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockTransitions {
    pub block23: f64,
    /// Absent along the axis, where the {1,4} block is already diagonal.
    pub block14: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceDiagnostics {
    /// Midpoint steps taken by the reference integrator over the run.
    pub reference_steps: usize,
    /// Most midpoint steps used in a single grid interval.
    pub reference_max_substeps: usize,
    /// Worst `|sum of populations - 1|` over all three solutions.
    pub max_probability_defect: f64,
    /// Worst `|infidelity_lab - infidelity_frame|`.
    pub frame_agreement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub grid: TimeGrid,
    /// Zero-based adiabatic state the run starts from.
    pub initial: usize,
    pub infidelity_zeroth: Vec<f64>,
    pub infidelity_first: Vec<f64>,
    pub infidelity_zeroth_frame: Vec<f64>,
    pub infidelity_first_frame: Vec<f64>,
    /// Adiabaticity ratio at each grid point; `None` where the field vanishes.
    pub eta: Vec<Option<f64>>,
    pub eta_max: f64,
    pub eta_divergent: bool,
    /// Largest `|dtheta/dt|` of either mixing angle.
    pub gauge_rate_max: f64,
    /// Largest `|dtheta/dt| / gap` over both blocks.
    pub gauge_ratio_max: f64,
    pub non_adiabatic: bool,
    pub final_beta_sq: BlockTransitions,
    /// Reference probability of leaving the initial adiabatic state at the end.
    pub final_leakage: f64,
    pub diagnostics: ConvergenceDiagnostics,
}

impl ComparisonReport {
    pub fn final_infidelity_zeroth(&self) -> f64 {
        *self.infidelity_zeroth.last().expect("non-empty grid")
    }

    pub fn final_infidelity_first(&self) -> f64 {
        *self.infidelity_first.last().expect("non-empty grid")
    }
}

/// A comparison together with the three lab-frame trajectories behind it.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub report: ComparisonReport,
    pub reference: Trajectory,
    pub zeroth: Vec<StateVector4>,
    pub first: Vec<StateVector4>,
    /// `T(t_k)` at every grid point.
    pub frames: Vec<Matrix4>,
}

pub fn compare_solutions(p: &SystemParams, grid: &TimeGrid, initial: usize) -> Result<ComparisonReport> {
    Ok(compare_detailed(p, grid, initial, &ReferenceOptions::default())?.report)
}

/// Runs the reference, zeroth-order and first-order solutions from the
/// adiabatic state `initial` and compares them at every grid point.
pub fn compare_detailed(
    p: &SystemParams,
    grid: &TimeGrid,
    initial: usize,
    options: &ReferenceOptions,
) -> Result<Comparison> {
    p.validate()?;
    grid.validate()?;
    let orientation = p.exact_orientation()?;
    if initial > 3 {
        return Err(Error::Consistency(format!("no adiabatic state {initial}")));
    }
    let times = grid.times();
    let frames: Vec<Matrix4> = times
        .iter()
        .map(|&t| Ok(frame_unitary(&mixing_angles(p, t)?)))
        .collect::<Result<_>>()?;
    let phi0 = StateVector4::basis(initial);
    let chi0 = frames[0] * phi0;

    let reference = reference_propagate(p, grid, &chi0, Frame::Lab, options)?;
    let ref_frame = reference
        .adiabatic_states
        .as_ref()
        .ok_or_else(|| Error::Consistency("reference has no frame states".into()))?;

    let zeroth_frame: Vec<StateVector4> = approximate_propagators(p, grid, Order::Zeroth)?
        .into_iter()
        .map(|u| u * phi0)
        .collect();
    let first_props = approximate_propagators(p, grid, Order::First)?;
    let first_frame: Vec<StateVector4> = first_props.iter().map(|u| *u * phi0).collect();
    let to_lab = |states: &[StateVector4]| -> Vec<StateVector4> {
        states.iter().zip(&frames).map(|(s, tu)| *tu * *s).collect()
    };
    let zeroth = to_lab(&zeroth_frame);
    let first = to_lab(&first_frame);

    let n = times.len();
    let mut inf = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    let mut agreement = 0.0f64;
    for k in 0..n {
        let z = infidelity(&reference.states[k], &zeroth[k])?;
        let f = infidelity(&reference.states[k], &first[k])?;
        let zf = infidelity(&ref_frame[k], &zeroth_frame[k])?;
        let ff = infidelity(&ref_frame[k], &first_frame[k])?;
        agreement = agreement.max((z - zf).abs()).max((f - ff).abs());
        for (v, x) in inf.iter_mut().zip([z, f, zf, ff]) {
            v.push(x.clamp(0.0, 1.0));
        }
    }
    if agreement > FRAME_AGREEMENT {
        return Err(Error::Consistency(format!(
            "lab and frame infidelities differ by {agreement:.3e}"
        )));
    }

    let EtaSeries {
        values: eta,
        max: eta_max,
        divergent: eta_divergent,
    } = eta_series(&p.profile, &times)?;
    let mut gauge_rate_max = 0.0f64;
    let mut gauge_ratio_max = 0.0f64;
    for &t in &times {
        let angles = mixing_angles(p, t)?;
        for (block, rate) in [
            (BlockId::Block23, angles.theta1_rate),
            (BlockId::Block14, angles.theta2_rate),
        ] {
            gauge_rate_max = gauge_rate_max.max(rate.abs());
            if rate != 0.0 {
                let gap = block_splitting(p, block, t)?.abs();
                gauge_ratio_max = gauge_ratio_max.max(rate.abs() / gap);
            }
        }
    }
    let non_adiabatic = eta_divergent
        || eta_max > NON_ADIABATIC_THRESHOLD
        || gauge_ratio_max > NON_ADIABATIC_THRESHOLD;

    let last = first_frame.len() - 1;
    let u_last = first_props[last];
    let beta_sq = |block: BlockId| -> Result<f64> {
        let (i, j) = block.indices();
        transition_probability(&u_last, i, j)
    };
    let final_beta_sq = BlockTransitions {
        block23: beta_sq(BlockId::Block23)?,
        block14: match orientation {
            Orientation::Parallel => None,
            _ => Some(beta_sq(BlockId::Block14)?),
        },
    };

    let max_probability_defect = [&reference.states, &zeroth, &first]
        .iter()
        .map(|s| max_probability_defect(s))
        .fold(0.0, f64::max);
    let diagnostics = ConvergenceDiagnostics {
        reference_steps: reference.substeps.iter().sum(),
        reference_max_substeps: reference.substeps.iter().copied().max().unwrap_or(0),
        max_probability_defect,
        frame_agreement: agreement,
    };
    let [infidelity_zeroth, infidelity_first, infidelity_zeroth_frame, infidelity_first_frame] =
        inf;
    let report = ComparisonReport {
        grid: *grid,
        initial,
        infidelity_zeroth,
        infidelity_first,
        infidelity_zeroth_frame,
        infidelity_first_frame,
        eta,
        eta_max,
        eta_divergent,
        gauge_rate_max,
        gauge_ratio_max,
        non_adiabatic,
        final_beta_sq,
        final_leakage: leakage(&ref_frame[last], initial),
        diagnostics,
    };
    Ok(Comparison {
        report,
        reference,
        zeroth,
        first,
        frames,
    })
}
