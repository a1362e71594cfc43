//! Instantaneous diagonalizing frame.
//!
//! The frame unitary `T(t)` rotates the {2,3} block by `theta1` and the {1,4}
//! block by `theta2`. Lab and frame states are related by `|chi> = T |phi>`, so
//! the frame Hamiltonian is `T^dagger H T - i T^dagger dT/dt`, whose first
//! part is diagonal and whose second part (the gauge term) only couples the two
//! states inside each block.

use crate::algebra::{Matrix4, StateVector4, C64, I};
use crate::error::{Error, Result};
use crate::hamiltonian::{hamiltonian_at, BlockId, Orientation, SystemParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdiabaticAngles {
    /// Rotation in the {2,3} block.
    pub theta1: f64,
    /// Rotation in the {1,4} block.
    pub theta2: f64,
    pub theta1_rate: f64,
    pub theta2_rate: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct FrameSnapshot {
    pub t: f64,
    pub angles: AdiabaticAngles,
    pub frame_unitary: Matrix4,
    /// `T^dagger dT/dt`
    pub gauge: Matrix4,
    /// `T^dagger H T - i T^dagger dT/dt`
    pub effective_h: Matrix4,
}

fn check_gap(p: &SystemParams) -> Result<Orientation> {
    let o = p.exact_orientation()?;
    if o == Orientation::Parallel && p.a_perp == 0.0 {
        return Err(Error::DegenerateGap);
    }
    Ok(o)
}

/// Angles and rates at field `omega` changing at `omega_rate`.
pub fn mixing_angles_at(p: &SystemParams, omega: f64, omega_rate: f64) -> Result<AdiabaticAngles> {
    check_gap(p)?;
    let b23 = p.block_coefficients(BlockId::Block23, omega, omega_rate)?;
    let b14 = p.block_coefficients(BlockId::Block14, omega, omega_rate)?;
    Ok(AdiabaticAngles {
        theta1: b23.angle(),
        theta2: b14.angle(),
        theta1_rate: b23.angle_rate(),
        theta2_rate: b14.angle_rate(),
    })
}

pub fn mixing_angles(p: &SystemParams, t: f64) -> Result<AdiabaticAngles> {
    let (omega, rate) = p.profile.eval(t)?;
    mixing_angles_at(p, omega, rate)
}

/// ```text
/// T = | c2  0   0  -s2 |
///     | 0   c1 -s1  0  |
///     | 0   s1  c1  0  |
///     | s2  0   0   c2 |
/// ```
pub fn frame_unitary(angles: &AdiabaticAngles) -> Matrix4 {
    let (s1, c1) = angles.theta1.sin_cos();
    let (s2, c2) = angles.theta2.sin_cos();
    Matrix4::from_real([
        [c2, 0.0, 0.0, -s2],
        [0.0, c1, -s1, 0.0],
        [0.0, s1, c1, 0.0],
        [s2, 0.0, 0.0, c2],
    ])
}

/// `T^dagger dT/dt`: real, antisymmetric, nonzero only at (1,4), (2,3) and their mirrors.
pub fn gauge_term(angles: &AdiabaticAngles) -> Matrix4 {
    let mut g = Matrix4::zeros();
    g.0[0][3] = C64::new(-angles.theta2_rate, 0.0);
    g.0[3][0] = C64::new(angles.theta2_rate, 0.0);
    g.0[1][2] = C64::new(-angles.theta1_rate, 0.0);
    g.0[2][1] = C64::new(angles.theta1_rate, 0.0);
    g
}

pub fn effective_hamiltonian_at(
    p: &SystemParams,
    t: f64,
    omega: f64,
    omega_rate: f64,
) -> Result<FrameSnapshot> {
    let angles = mixing_angles_at(p, omega, omega_rate)?;
    let tu = frame_unitary(&angles);
    let gauge = gauge_term(&angles);
    let h = hamiltonian_at(p, omega);
    let rotated = tu.adjoint() * h * tu;
    let effective_h = rotated - gauge.scale(I);
    Ok(FrameSnapshot {
        t,
        angles,
        frame_unitary: tu,
        gauge,
        effective_h,
    })
}

pub fn effective_hamiltonian(p: &SystemParams, t: f64) -> Result<FrameSnapshot> {
    let (omega, rate) = p.profile.eval(t)?;
    effective_hamiltonian_at(p, t, omega, rate)
}

/// Adiabatic eigenstates at time `t0` written in the product basis: the
/// columns `T(t0)|chi_i>`. State 2, for instance, is `a+ |+-> + a- |-+>` with
/// `a+ = cos theta1`, `a- = sin theta1`.
pub fn initial_adiabatic_states(p: &SystemParams, t0: f64) -> Result<[StateVector4; 4]> {
    let angles = mixing_angles(p, t0)?;
    let tu = frame_unitary(&angles);
    Ok([0, 1, 2, 3].map(|k| StateVector4(tu.column(k))))
}

/// `|phi> = T^dagger |chi>`
pub fn to_frame(tu: &Matrix4, lab: &StateVector4) -> StateVector4 {
    tu.adjoint() * *lab
}

/// `|chi> = T |phi>`
pub fn to_lab(tu: &Matrix4, frame: &StateVector4) -> StateVector4 {
    *tu * *frame
}

/// Entries of a frame-space matrix that couple the {1,4} and {2,3} subspaces.
pub fn cross_block_max(m: &Matrix4) -> f64 {
    let mut worst = 0.0f64;
    for i in [0usize, 3] {
        for j in [1usize, 2] {
            worst = worst.max(m.0[i][j].norm()).max(m.0[j][i].norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::ZERO;
    use crate::field::FieldProfile;
    use crate::hamiltonian::closed_eigenvalues_at;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

    fn params(a_par: f64, a_perp: f64, zeta: f64, theta: f64, profile: FieldProfile) -> SystemParams {
        SystemParams {
            a_par,
            a_perp,
            zeta,
            theta,
            profile,
        }
    }

    fn constant(omega0: f64) -> FieldProfile {
        FieldProfile::Constant { omega0 }
    }

    #[test]
    fn parallel_angle_reference_value() {
        let p = params(1.0, 0.5, 0.1, 0.0, constant(2.0));
        let a = mixing_angles(&p, 0.0).unwrap();
        assert!((a.theta1 - 0.418990612504195).abs() < 1e-14);
        assert_eq!(a.theta2, 0.0);
        assert_eq!(a.theta1_rate, 0.0);
        assert_eq!(a.theta2_rate, 0.0);
        let snap = effective_hamiltonian(&p, 0.0).unwrap();
        assert!(snap.effective_h.max_off_diagonal() < 1e-12);
    }

    #[test]
    fn zero_field_rate_reference_value() {
        let p = params(1.0, 0.5, 0.0, 0.0, FieldProfile::LinearRamp {
            omega_start: 0.0,
            rate: 1.0,
        });
        let a = mixing_angles(&p, 0.0).unwrap();
        assert!((a.theta1_rate + 0.25).abs() < 1e-15);
        assert!((a.theta1 - FRAC_PI_4).abs() < 1e-15);
        let h = 1e-6;
        let fd = (mixing_angles(&p, h).unwrap().theta1 - mixing_angles(&p, -h).unwrap().theta1)
            / (2.0 * h);
        assert!((fd + 0.25).abs() < 1e-8);

        let snap = effective_hamiltonian(&p, 0.0).unwrap();
        assert!((snap.effective_h.0[1][2].norm() - 0.25).abs() < 1e-15);
        assert!((snap.effective_h.0[2][1].norm() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn frame_unitary_examples() {
        let zero = AdiabaticAngles {
            theta1: 0.0,
            theta2: 0.0,
            theta1_rate: 0.0,
            theta2_rate: 0.0,
        };
        assert_eq!(frame_unitary(&zero), Matrix4::identity());
        let quarter = AdiabaticAngles {
            theta1: FRAC_PI_4,
            ..zero
        };
        let t = frame_unitary(&quarter);
        let r = |i: usize, j: usize| t.0[i][j].re;
        assert!((r(1, 1) - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((r(1, 2) + FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((r(2, 1) - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((r(2, 2) - FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(r(0, 0), 1.0);
        assert_eq!(r(3, 3), 1.0);
    }

    #[test]
    fn gauge_term_examples() {
        let a = AdiabaticAngles {
            theta1: 0.3,
            theta2: 0.0,
            theta1_rate: 0.25,
            theta2_rate: 0.0,
        };
        let g = gauge_term(&a);
        assert_eq!(g.0[1][2].re, -0.25);
        assert_eq!(g.0[2][1].re, 0.25);
        let mut rest = g;
        rest.0[1][2] = ZERO;
        rest.0[2][1] = ZERO;
        assert_eq!(rest, Matrix4::zeros());
        let still = AdiabaticAngles {
            theta1_rate: 0.0,
            ..a
        };
        assert_eq!(gauge_term(&still), Matrix4::zeros());
    }

    #[test]
    fn constant_field_effective_h_is_diagonal_levels() {
        let p = params(1.0, 0.5, 0.1, 0.0, constant(2.0));
        let snap = effective_hamiltonian(&p, 0.0).unwrap();
        let e = closed_eigenvalues_at(&p, 2.0).unwrap();
        for k in 0..4 {
            assert!((snap.effective_h.0[k][k].re - e[k]).abs() < 1e-12);
        }
        assert!(snap.effective_h.max_off_diagonal() < 1e-12);
        assert_eq!(snap.gauge, Matrix4::zeros());
    }

    #[test]
    fn isotropic_perpendicular_has_no_corner_rotation() {
        let p = params(0.6, 0.6, 0.05, FRAC_PI_2, FieldProfile::TanhRamp {
            omega_mid: 0.0,
            amplitude: 3.0,
            timescale: 1.5,
        });
        for k in 0..20 {
            let t = -3.0 + 0.3 * k as f64;
            let a = mixing_angles(&p, t).unwrap();
            assert_eq!(a.theta2, 0.0);
            assert_eq!(a.theta2_rate, 0.0);
        }
    }

    #[test]
    fn degenerate_gap_and_orientation_errors() {
        let p = params(1.0, 0.0, 0.1, 0.0, constant(1.0));
        assert_eq!(mixing_angles(&p, 0.0), Err(Error::DegenerateGap));
        let q = params(1.0, 0.5, 0.1, 0.7, constant(1.0));
        assert!(matches!(
            mixing_angles(&q, 0.0),
            Err(Error::UnsupportedOrientation { .. })
        ));
        assert!(initial_adiabatic_states(&q, 0.0).is_err());
    }

    #[test]
    fn initial_states_parallel_limits() {
        let p = params(1.0, 0.5, 0.1, 0.0, constant(0.0));
        let s = initial_adiabatic_states(&p, 0.0).unwrap();
        assert!((s[1].0[1].re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((s[1].0[2].re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(s[0], StateVector4::basis(0));
        assert_eq!(s[3], StateVector4::basis(3));

        let p = params(1.0, 0.5, 0.1, 0.0, constant(1e9));
        let s = initial_adiabatic_states(&p, 0.0).unwrap();
        assert!((s[1].0[1].re - 1.0).abs() < 1e-12);
        assert!(s[1].0[2].re.abs() < 1e-8);
    }

    #[test]
    fn initial_states_perpendicular_reference_values() {
        let p = params(1.0, 0.5, 0.1, FRAC_PI_2, constant(2.0));
        let s = initial_adiabatic_states(&p, 0.0).unwrap();
        // b+- = sqrt((1 +- 2.2/sqrt(5.84))/2)
        let (bp, bm) = (0.9773347628787704, 0.21169969595797156);
        assert!((s[0].0[0].re - bp).abs() < 1e-14);
        assert!((s[0].0[3].re - bm).abs() < 1e-14);
        assert!((s[3].0[0].re + bm).abs() < 1e-14);
        assert!((s[3].0[3].re - bp).abs() < 1e-14);
        // eigenvector oracle: the {1,4} block of H applied to (b+, b-) returns e1 (b+, b-)
        let h = hamiltonian_at(&p, 2.0);
        let e1 = closed_eigenvalues_at(&p, 2.0).unwrap()[0];
        let hv = h * s[0];
        for k in 0..4 {
            assert!((hv.0[k] - s[0].0[k] * e1).norm() < 1e-14);
        }
        // a+- from the {2,3} block
        let r = 1.8 / (4.0 * 1.5f64.powi(2) + 1.8f64.powi(2)).sqrt();
        assert!((s[1].0[1].re - ((1.0 + r) / 2.0).sqrt()).abs() < 1e-14);
        assert!((s[1].0[2].re - ((1.0 - r) / 2.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn round_trip_between_frames() {
        let p = params(1.0, 0.5, 0.1, FRAC_PI_2, constant(2.0));
        let tu = effective_hamiltonian(&p, 0.0).unwrap().frame_unitary;
        let chi = StateVector4::normalized([
            C64::new(0.1, 0.2),
            C64::new(-0.3, 0.0),
            C64::new(0.5, 0.4),
            C64::new(0.0, -0.6),
        ])
        .unwrap();
        let back = to_lab(&tu, &to_frame(&tu, &chi));
        assert!(back.max_abs_diff(&chi) < 1e-15);
    }

    fn profiles() -> impl Strategy<Value = FieldProfile> {
        prop_oneof![
            (-3.0..3.0f64, 0.5..5.0f64, 0.5..4.0f64).prop_map(|(m, a, tau)| FieldProfile::TanhRamp {
                omega_mid: m,
                amplitude: a,
                timescale: tau,
            }),
            (-3.0..3.0f64, 0.1..2.0f64, 0.2..3.0f64, -3.0..3.0f64).prop_map(|(w, b, o, ph)| {
                FieldProfile::Harmonic {
                    omega0: w,
                    amplitude: b,
                    angular_frequency: o,
                    phase: ph,
                }
            }),
        ]
    }

    fn orientation() -> impl Strategy<Value = f64> {
        prop_oneof![Just(0.0), Just(FRAC_PI_2)]
    }

    proptest! {
        #[test]
        fn frame_diagonalizes_hamiltonian(
            a_par in 0.1..3.0f64, a_perp in 0.1..3.0f64, zeta in -0.2..0.2f64,
            omega in 0.0..10.0f64, theta in orientation(),
        ) {
            let p = params(a_par, a_perp, zeta, theta, constant(omega));
            let snap = effective_hamiltonian(&p, 0.0).unwrap();
            prop_assert!(snap.frame_unitary.unitarity_defect() <= 1e-14);
            let d = snap.frame_unitary.adjoint() * hamiltonian_at(&p, omega) * snap.frame_unitary;
            prop_assert!(d.max_off_diagonal() <= 1e-12);
            let e = closed_eigenvalues_at(&p, omega).unwrap();
            for k in 0..4 {
                prop_assert!((d.0[k][k].re - e[k]).abs() <= 1e-12);
            }
        }

        #[test]
        fn gauge_matches_finite_difference_of_frame(
            a_par in 0.1..3.0f64, a_perp in 0.1..3.0f64, zeta in -0.2..0.2f64,
            profile in profiles(), theta in orientation(), t in -5.0..5.0f64,
        ) {
            let p = params(a_par, a_perp, zeta, theta, profile);
            let h = 1e-5;
            let tm = frame_unitary(&mixing_angles(&p, t - h).unwrap());
            let tp = frame_unitary(&mixing_angles(&p, t + h).unwrap());
            let snap = effective_hamiltonian(&p, t).unwrap();
            let fd = snap.frame_unitary.adjoint() * (tp - tm) * (1.0 / (2.0 * h));
            prop_assert!((fd - snap.gauge).max_abs() <= 1e-6);
            // T^dagger dT = -(dT)^dagger T
            let lhs = snap.frame_unitary.adjoint() * (tp - tm);
            let rhs = -((tp - tm).adjoint() * snap.frame_unitary);
            prop_assert!((lhs - rhs).max_abs() <= 1e-12);
            prop_assert_eq!(snap.gauge, -snap.gauge.transpose());
            prop_assert!(cross_block_max(&snap.effective_h) == 0.0);
        }

        #[test]
        fn angles_stay_in_branch_and_are_continuous(
            a_par in 0.1..3.0f64, a_perp in 0.1..3.0f64, zeta in -0.2..0.2f64,
            theta in orientation(),
        ) {
            // the corner rotation turns by ~pi/2 over a field window ~|A_par - A_perp|
            prop_assume!((a_par - a_perp).abs() > 0.05);
            let p = params(a_par, a_perp, zeta, theta, FieldProfile::LinearRamp {
                omega_start: -6.0, rate: 1.0,
            });
            let dt = 1e-3;
            let mut prev: Option<AdiabaticAngles> = None;
            for k in 0..=12000 {
                let a = mixing_angles(&p, k as f64 * dt).unwrap();
                prop_assert!(a.theta1 >= 0.0 && a.theta1 <= FRAC_PI_2);
                prop_assert!(a.theta2 > -FRAC_PI_2 && a.theta2 <= FRAC_PI_2);
                if let Some(q) = prev {
                    let bound1 = 2.0 * a.theta1_rate.abs().max(q.theta1_rate.abs()) * dt + 1e-9;
                    let bound2 = 2.0 * a.theta2_rate.abs().max(q.theta2_rate.abs()) * dt + 1e-9;
                    prop_assert!((a.theta1 - q.theta1).abs() <= bound1);
                    prop_assert!((a.theta2 - q.theta2).abs() <= bound2);
                }
                prev = Some(a);
            }
        }
    }
}
