//! Propagators.
//!
//! * [`reference_propagate`]: brute-force exponential-midpoint integration of
//!   the lab-frame or frame Schrödinger equation, with per-interval step
//!   doubling until a Richardson error estimate meets the tolerance.
//! * [`unperturbed_block_u`], [`interaction_picture_v`]: the diagonal block
//!   evolution and the gauge coupling seen from its co-rotating frame.
//! * [`block_history`] / [`first_order_block_solution`]: the block evolution
//!   `U0(t) exp(-i ∫ V^I)`, i.e. the time-ordered exponential truncated to its
//!   first Magnus term, which keeps every block exactly unitary.
//! * [`assemble_full_propagator`]: the 4x4 frame propagator built from blocks.

use serde::{Deserialize, Serialize};

use crate::algebra::{expm_unitary, sigma_x, sigma_y, Matrix2, Matrix4, StateVector4, C64};
use crate::error::{Error, Result};
use crate::frame::{effective_hamiltonian, frame_unitary, mixing_angles};
use crate::hamiltonian::{build_hamiltonian, BlockId, Orientation, SystemParams};
use crate::quadrature::{integrate, integrate_scalar};

/// Absolute accuracy of the phase and interaction-picture integrals over a run.
pub const QUADRATURE_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_HALVINGS: u32 = 12;
/// Allowed mismatch between the closed-form and conjugated `V^I`.
pub const INTERACTION_CHECK: f64 = 1e-10;
/// Starting substep count keeps `dt |H|` below this many radians.
pub const MAX_STEP_PHASE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        let g = TimeGrid {
            t_start,
            t_end,
            n_steps,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t_start.is_finite() || !self.t_end.is_finite() {
            return Err(Error::InvalidGrid("non-finite bounds".into()));
        }
        if self.t_end <= self.t_start {
            return Err(Error::InvalidGrid("t_end must exceed t_start".into()));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidGrid("n_steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_steps as f64
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// Time of grid point `k`, exact at both ends.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_end
        } else {
            self.t_start + k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Lab,
    Adiabatic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepControl {
    /// Exactly `substeps` midpoint steps per grid interval.
    Fixed { substeps: usize },
    /// Double the substeps of each grid interval until the Richardson estimate
    /// `|U_2m - U_m| / 3` falls below `tolerance * interval length`, jumping
    /// ahead by the second-order error model when it is far off. Refinement
    /// starts from the larger of the previous interval's count and the count
    /// that keeps `dt |H|` under [`MAX_STEP_PHASE`], and gives up after
    /// `max_halvings` doublings of that count.
    Adaptive { tolerance: f64, max_halvings: u32 },
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl::Adaptive {
            tolerance: DEFAULT_TOLERANCE,
            max_halvings: DEFAULT_MAX_HALVINGS,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ReferenceOptions {
    pub control: StepControl,
    pub store_propagators: bool,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub grid: TimeGrid,
    /// Frame the equation was integrated in.
    pub frame: Frame,
    /// Lab-frame states at every grid point.
    pub states: Vec<StateVector4>,
    /// Frame states `T^dagger(t) |chi(t)>`; absent for oblique fields.
    pub adiabatic_states: Option<Vec<StateVector4>>,
    /// Propagators from `t_start` in the integration frame, if requested.
    pub propagators: Option<Vec<Matrix4>>,
    /// Midpoint steps used in each grid interval.
    pub substeps: Vec<usize>,
}

impl Trajectory {
    pub fn final_state(&self) -> &StateVector4 {
        self.states.last().expect("trajectory has at least one point")
    }
}

/// One exponential-midpoint step `exp(-i dt G(t + dt/2))`.
pub fn midpoint_step<G>(generator: &mut G, t: f64, dt: f64) -> Result<Matrix4>
where
    G: FnMut(f64) -> Result<Matrix4>,
{
    expm_unitary(&generator(t + 0.5 * dt)?, dt)
}

fn advance<G>(generator: &mut G, t0: f64, t1: f64, m: usize) -> Result<Matrix4>
where
    G: FnMut(f64) -> Result<Matrix4>,
{
    let h = (t1 - t0) / m as f64;
    let mut u = Matrix4::identity();
    for j in 0..m {
        let t = t0 + j as f64 * h;
        u = midpoint_step(generator, t, h)? * u;
    }
    Ok(u)
}

/// Propagators `U(t_k, t_start)` of `i dU/dt = G(t) U` on the grid.
pub fn propagate_generator<G>(
    mut generator: G,
    grid: &TimeGrid,
    control: StepControl,
) -> Result<(Vec<Matrix4>, Vec<usize>)>
where
    G: FnMut(f64) -> Result<Matrix4>,
{
    grid.validate()?;
    let mut out = Vec::with_capacity(grid.n_steps + 1);
    let mut used = Vec::with_capacity(grid.n_steps);
    let mut u = Matrix4::identity();
    out.push(u);
    let mut m_guess = 1usize;
    for k in 0..grid.n_steps {
        let (t0, t1) = (grid.time(k), grid.time(k + 1));
        let (step, m) = match control {
            StepControl::Fixed { substeps } => {
                (advance(&mut generator, t0, t1, substeps.max(1))?, substeps.max(1))
            }
            StepControl::Adaptive {
                tolerance,
                max_halvings,
            } => {
                let target = tolerance * (t1 - t0);
                let norm = generator(0.5 * (t0 + t1))?.frobenius();
                let by_phase = (norm * (t1 - t0) / MAX_STEP_PHASE).ceil() as usize;
                let mut m = m_guess.max(by_phase).max(1);
                let limit = m << max_halvings;
                let mut coarse = advance(&mut generator, t0, t1, m)?;
                loop {
                    let fine = advance(&mut generator, t0, t1, 2 * m)?;
                    let estimate = (fine - coarse).max_abs() / 3.0;
                    if estimate <= target {
                        // try fewer substeps on the next interval
                        m_guess = (m / 2).max(1);
                        break (fine, 2 * m);
                    }
                    if 2 * m >= limit {
                        return Err(Error::ToleranceNotMet {
                            tolerance,
                            estimate: estimate / (t1 - t0),
                            t0,
                            t1,
                        });
                    }
                    // the estimate falls as m^-2; skip doublings that cannot succeed
                    let wanted = (1.1 * (estimate / target).sqrt()).log2().ceil().max(1.0) as u32;
                    let next = (m << wanted.min(max_halvings)).min(limit / 2);
                    coarse = if next == 2 * m {
                        fine
                    } else {
                        advance(&mut generator, t0, t1, next)?
                    };
                    m = next;
                }
            }
        };
        u = step * u;
        out.push(u);
        used.push(m);
    }
    Ok((out, used))
}

/// Brute-force reference trajectory from the lab-frame state `psi0`.
///
/// In the `Adiabatic` frame the integrated equation is
/// `i d|phi>/dt = (T^dagger H T - i T^dagger dT/dt)|phi>` starting from
/// `T^dagger(t_start)|psi0>`; lab states are recovered as `T(t)|phi(t)>`.
pub fn reference_propagate(
    p: &SystemParams,
    grid: &TimeGrid,
    psi0: &StateVector4,
    frame: Frame,
    options: &ReferenceOptions,
) -> Result<Trajectory> {
    p.validate()?;
    psi0.check_normalized()?;
    // the frame exists for both exact orientations unless the {2,3} gap closes
    let has_frame = mixing_angles(p, grid.t_start).is_ok();
    let times = grid.times();

    let (props, substeps) = match frame {
        Frame::Lab => propagate_generator(|t| build_hamiltonian(p, t), grid, options.control)?,
        Frame::Adiabatic => {
            p.exact_orientation()?;
            propagate_generator(
                |t| Ok(effective_hamiltonian(p, t)?.effective_h),
                grid,
                options.control,
            )?
        }
    };

    let frames: Option<Vec<Matrix4>> = if has_frame {
        Some(
            times
                .iter()
                .map(|&t| Ok(frame_unitary(&mixing_angles(p, t)?)))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    let (states, adiabatic_states) = match frame {
        Frame::Lab => {
            let states: Vec<StateVector4> = props.iter().map(|u| *u * *psi0).collect();
            let adiabatic = frames.as_ref().map(|fs| {
                fs.iter()
                    .zip(states.iter())
                    .map(|(tu, s)| tu.adjoint() * *s)
                    .collect()
            });
            (states, adiabatic)
        }
        Frame::Adiabatic => {
            let fs = frames.as_ref().ok_or(Error::DegenerateGap)?;
            let phi0 = fs[0].adjoint() * *psi0;
            let adiabatic: Vec<StateVector4> = props.iter().map(|u| *u * phi0).collect();
            let states = fs
                .iter()
                .zip(adiabatic.iter())
                .map(|(tu, s)| *tu * *s)
                .collect();
            (states, Some(adiabatic))
        }
    };

    Ok(Trajectory {
        grid: *grid,
        frame,
        states,
        adiabatic_states,
        propagators: options.store_propagators.then_some(props),
        substeps,
    })
}

fn check_block(p: &SystemParams, block: BlockId) -> Result<Orientation> {
    let o = p.exact_orientation()?;
    if o == Orientation::Parallel {
        if block == BlockId::Block14 {
            return Err(Error::UnsupportedBlock {
                block,
                theta: p.theta,
            });
        }
        if p.a_perp == 0.0 {
            return Err(Error::DegenerateGap);
        }
    }
    Ok(o)
}

/// Level splitting `omega_block(t)` of a block (e.g. `sqrt(16 A_perp^2 + omega^2 (1-zeta)^2)`
/// for the {2,3} block along the axis).
pub fn block_splitting(p: &SystemParams, block: BlockId, t: f64) -> Result<f64> {
    let (w, wd) = p.profile.eval(t)?;
    Ok(p.block_coefficients(block, w, wd)?.splitting())
}

/// Running phase `Phi(t) = ∫_{t0}^{t} omega_block`.
pub fn running_phase(p: &SystemParams, block: BlockId, t0: f64, t: f64) -> Result<f64> {
    integrate_scalar(|s| block_splitting(p, block, s), t0, t, QUADRATURE_TOLERANCE)
}

fn block_center(p: &SystemParams, block: BlockId) -> Result<f64> {
    Ok(p.block_coefficients(block, 0.0, 0.0)?.center)
}

fn unperturbed_from_phase(center: f64, elapsed: f64, phi: f64) -> (C64, Matrix2) {
    let global = C64::from_polar(1.0, -center * elapsed);
    let d = Matrix2::diag([C64::from_polar(1.0, -0.5 * phi), C64::from_polar(1.0, 0.5 * phi)]);
    (global, d)
}

/// `U0(t) = e^{-i center (t - t0)} exp(-(i/2) Phi(t) sz)`.
pub fn unperturbed_block_u(p: &SystemParams, block: BlockId, t0: f64, t: f64) -> Result<Matrix2> {
    check_block(p, block)?;
    let phi = running_phase(p, block, t0, t)?;
    let (global, d) = unperturbed_from_phase(block_center(p, block)?, t - t0, phi);
    Ok(d.scale(global))
}

/// Gauge coupling inside a block, `V = -theta_dot * sy`.
pub fn block_perturbation(p: &SystemParams, block: BlockId, t: f64) -> Result<Matrix2> {
    let (w, wd) = p.profile.eval(t)?;
    let rate = p.block_coefficients(block, w, wd)?.angle_rate();
    Ok(sigma_y() * (-rate))
}

fn interaction_closed_form(rate: f64, phi: f64) -> Matrix2 {
    let (s, c) = phi.sin_cos();
    (sigma_y() * c + sigma_x() * s) * (-rate)
}

/// `V^I(t) = U0^dagger V U0 = -theta_dot (sy cos Phi + sx sin Phi)`, checked
/// against explicit conjugation.
pub fn interaction_picture_v(p: &SystemParams, block: BlockId, t0: f64, t: f64) -> Result<Matrix2> {
    check_block(p, block)?;
    let phi = running_phase(p, block, t0, t)?;
    let (w, wd) = p.profile.eval(t)?;
    let rate = p.block_coefficients(block, w, wd)?.angle_rate();
    let closed = interaction_closed_form(rate, phi);
    let u0 = unperturbed_block_u(p, block, t0, t)?;
    let direct = u0.adjoint() * block_perturbation(p, block, t)? * u0;
    let gap = (closed - direct).max_abs();
    if gap > INTERACTION_CHECK {
        return Err(Error::Consistency(format!(
            "interaction-picture perturbation mismatch {gap:.3e} at t = {t}"
        )));
    }
    Ok(closed)
}

/// Perturbative order of the block solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    /// `U0` only.
    Zeroth,
    /// `U0 exp(-i ∫ V^I)`.
    First,
}

/// Block propagator at one time: `u2 = phase_factor * [[alpha, beta], [-beta*, alpha*]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockSolution {
    pub block: BlockId,
    pub t: f64,
    pub alpha: C64,
    pub beta: C64,
    pub u2: Matrix2,
    /// `e^{-i center (t - t0)}`, e.g. `e^{i A_par t}` for the {2,3} block along the axis.
    pub phase_factor: C64,
}

impl BlockSolution {
    /// Probability of leaving the initial block state.
    pub fn transition_probability(&self) -> f64 {
        self.beta.norm_sqr()
    }
}

#[derive(Clone, Debug)]
pub struct BlockHistory {
    pub block: BlockId,
    pub order: Order,
    pub grid: TimeGrid,
    pub solutions: Vec<BlockSolution>,
}

impl BlockHistory {
    pub fn last(&self) -> &BlockSolution {
        self.solutions.last().expect("non-empty history")
    }
}

fn interval_tolerance(grid: &TimeGrid, a: f64, b: f64) -> f64 {
    QUADRATURE_TOLERANCE * ((b - a) / grid.duration()).max(1e-6)
}

/// Block solutions at every grid point.
pub fn block_history(p: &SystemParams, block: BlockId, grid: &TimeGrid, order: Order) -> Result<BlockHistory> {
    check_block(p, block)?;
    grid.validate()?;
    let center = block_center(p, block)?;
    let t0 = grid.t_start;
    let mut phi = 0.0;
    // ∫ theta_dot cos Phi and ∫ theta_dot sin Phi
    let mut cos_int = 0.0;
    let mut sin_int = 0.0;
    let mut solutions = Vec::with_capacity(grid.n_steps + 1);
    for k in 0..=grid.n_steps {
        let t = grid.time(k);
        if k > 0 {
            let a = grid.time(k - 1);
            let tol = interval_tolerance(grid, a, t);
            if order == Order::First {
                let phi_a = phi;
                let inner_tol = tol * 1e-2;
                let [c, s] = integrate(
                    |x| {
                        let ph = phi_a
                            + integrate_scalar(|y| block_splitting(p, block, y), a, x, inner_tol)?;
                        let (w, wd) = p.profile.eval(x)?;
                        let rate = p.block_coefficients(block, w, wd)?.angle_rate();
                        Ok([rate * ph.cos(), rate * ph.sin()])
                    },
                    a,
                    t,
                    tol,
                )?;
                cos_int += c;
                sin_int += s;
            }
            phi += integrate_scalar(|y| block_splitting(p, block, y), a, t, tol)?;
        }
        let (global, d) = unperturbed_from_phase(center, t - t0, phi);
        let su2 = match order {
            Order::Zeroth => d,
            Order::First => {
                // ∫ V^I = -(sy cos_int + sx sin_int)
                let integral = (sigma_y() * cos_int + sigma_x() * sin_int) * -1.0;
                d * expm_unitary(&integral, 1.0)?
            }
        };
        solutions.push(BlockSolution {
            block,
            t,
            alpha: su2.0[0][0],
            beta: su2.0[0][1],
            u2: su2.scale(global),
            phase_factor: global,
        });
    }
    Ok(BlockHistory {
        block,
        order,
        grid: *grid,
        solutions,
    })
}

/// First-order block solution at `grid.t_end`.
pub fn first_order_block_solution(p: &SystemParams, block: BlockId, grid: &TimeGrid) -> Result<BlockSolution> {
    Ok(*block_history(p, block, grid, Order::First)?.last())
}

/// Block solutions needed to assemble a 4x4 propagator at one time.
#[derive(Clone, Copy, Debug)]
pub struct BlockSolutions {
    pub block23: Option<BlockSolution>,
    pub block14: Option<BlockSolution>,
}

/// Frame propagator with the block sparsity
///
/// ```text
/// parallel:                        perpendicular:
/// | e^{-i(A t + (1+z)/2 ∫w)}  0  0  0 |    | a2   0    0   b2 |
/// | 0   u23  u23   0                  |    | 0   a1   b1    0 |
/// | 0   u23  u23   0                  |    | 0  -b1* a1*    0 |
/// | 0   0    0  e^{-i(A t - (1+z)/2 ∫w)} |  | -b2*  0   0  a2* |
/// ```
///
/// (block entries carry their `phase_factor`).
pub fn assemble_full_propagator(
    p: &SystemParams,
    solutions: &BlockSolutions,
    t0: f64,
    t: f64,
) -> Result<Matrix4> {
    let orientation = p.exact_orientation()?;
    let b23 = solutions.block23.ok_or(Error::MissingBlock(BlockId::Block23))?;
    let mut u = Matrix4::zeros();
    place_block(&mut u, &b23, t)?;
    match orientation {
        Orientation::Parallel => {
            let field_integral =
                integrate_scalar(|s| p.profile.omega(s), t0, t, QUADRATURE_TOLERANCE)?;
            corner_phases(&mut u, p, t - t0, field_integral);
        }
        _ => {
            let b14 = solutions.block14.ok_or(Error::MissingBlock(BlockId::Block14))?;
            place_block(&mut u, &b14, t)?;
        }
    }
    Ok(u)
}

fn place_block(u: &mut Matrix4, sol: &BlockSolution, t: f64) -> Result<()> {
    if (sol.t - t).abs() > 1e-12 * (1.0 + t.abs()) {
        return Err(Error::Consistency(format!(
            "block solution at t = {} used for t = {t}",
            sol.t
        )));
    }
    let (i, j) = sol.block.indices();
    u.0[i][i] = sol.u2.0[0][0];
    u.0[i][j] = sol.u2.0[0][1];
    u.0[j][i] = sol.u2.0[1][0];
    u.0[j][j] = sol.u2.0[1][1];
    Ok(())
}

fn corner_phases(u: &mut Matrix4, p: &SystemParams, elapsed: f64, field_integral: f64) {
    let zeeman = 0.5 * (1.0 + p.zeta) * field_integral;
    u.0[0][0] = C64::from_polar(1.0, -(p.a_par * elapsed + zeeman));
    u.0[3][3] = C64::from_polar(1.0, -(p.a_par * elapsed - zeeman));
}

/// Frame propagators `U(t_k, t_start)` at every grid point for the given order.
pub fn approximate_propagators(p: &SystemParams, grid: &TimeGrid, order: Order) -> Result<Vec<Matrix4>> {
    let orientation = p.exact_orientation()?;
    let h23 = block_history(p, BlockId::Block23, grid, order)?;
    let h14 = match orientation {
        Orientation::Parallel => None,
        _ => Some(block_history(p, BlockId::Block14, grid, order)?),
    };
    let mut field_integral = 0.0;
    let mut out = Vec::with_capacity(grid.n_steps + 1);
    for k in 0..=grid.n_steps {
        let t = grid.time(k);
        let mut u = Matrix4::zeros();
        place_block(&mut u, &h23.solutions[k], t)?;
        match &h14 {
            Some(h) => place_block(&mut u, &h.solutions[k], t)?,
            None => {
                if k > 0 {
                    let a = grid.time(k - 1);
                    field_integral += integrate_scalar(
                        |s| p.profile.omega(s),
                        a,
                        t,
                        interval_tolerance(grid, a, t),
                    )?;
                }
                corner_phases(&mut u, p, t - grid.t_start, field_integral);
            }
        }
        out.push(u);
    }
    Ok(out)
}

/// Lab-frame propagator `T(t) U_frame T^dagger(t0)`.
pub fn lab_propagator(p: &SystemParams, frame_u: &Matrix4, t0: f64, t: f64) -> Result<Matrix4> {
    let t_now = frame_unitary(&mixing_angles(p, t)?);
    let t_init = frame_unitary(&mixing_angles(p, t0)?);
    Ok(t_now * *frame_u * t_init.adjoint())
}

/// Whether `(i, j)` may be nonzero in the block pattern of the orientation.
pub fn in_block_pattern(orientation: Orientation, i: usize, j: usize) -> bool {
    if i == j {
        return true;
    }
    let pair = (i.min(j), i.max(j));
    match orientation {
        Orientation::Parallel => pair == (1, 2),
        Orientation::Perpendicular => pair == (1, 2) || pair == (0, 3),
        Orientation::Oblique => true,
    }
}

/// Largest entry outside the block pattern.
pub fn out_of_pattern_max(orientation: Orientation, u: &Matrix4) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            if !in_block_pattern(orientation, i, j) {
                worst = worst.max(u.0[i][j].norm());
            }
        }
    }
    worst
}
