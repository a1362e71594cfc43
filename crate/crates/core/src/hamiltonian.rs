//! Two-spin Hamiltonian with an axially symmetric hyperfine coupling, in
//! frequency units:
//!
//! `H = (omega/2) s1z + (zeta omega/2) s2z + A_perp (s1.s2) + (A_par - A_perp)(s1.n)(s2.n)`
//!
//! with `n = (sin theta, 0, cos theta)`. Basis ordering is |++>, |+->, |-+>, |-->
//! (spin 1 first).
//!
//! For `theta = 0` and `theta = pi/2` the matrix splits into the {2,3} and
//! {1,4} two-level blocks, each of the form `center + a sz + c sx`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::algebra::{kron2, sigma_x, sigma_y, sigma_z, Matrix2, Matrix4, C64};
use crate::error::{Error, Result};
use crate::field::FieldProfile;

/// Orientation angles closer than this to 0 or pi/2 are treated as exact.
pub const ORIENTATION_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub a_par: f64,
    pub a_perp: f64,
    pub zeta: f64,
    /// Angle between the field and the symmetry axis, radians.
    pub theta: f64,
    pub profile: FieldProfile,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    /// Field along the symmetry axis.
    Parallel,
    /// Field perpendicular to the symmetry axis.
    Perpendicular,
    /// Any other angle; only the lab-frame reference propagator applies.
    Oblique,
}

/// The two-level subspaces of the block-diagonal Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockId {
    /// States |+-> and |-+>.
    Block23,
    /// States |++> and |-->.
    Block14,
}

impl BlockId {
    /// Zero-based indices (upper, lower) of the block's states.
    pub fn indices(self) -> (usize, usize) {
        match self {
            BlockId::Block23 => (1, 2),
            BlockId::Block14 => (0, 3),
        }
    }

    pub fn of_index(k: usize) -> BlockId {
        match k {
            1 | 2 => BlockId::Block23,
            _ => BlockId::Block14,
        }
    }
}

/// Two-level block `center * I + a * sz + c * sx` and the time derivative of `a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockCoefficients {
    pub center: f64,
    pub a: f64,
    pub c: f64,
    pub a_rate: f64,
}

impl BlockCoefficients {
    /// Difference of the two adiabatic levels (upper minus lower by label).
    ///
    /// With a nonzero coupling this is the gap `2 sqrt(a^2 + c^2)`; for an
    /// uncoupled block the levels keep their diabatic labels, so it is the
    /// signed splitting `2a`.
    pub fn splitting(&self) -> f64 {
        if self.c == 0.0 {
            2.0 * self.a
        } else {
            2.0 * self.a.hypot(self.c)
        }
    }

    /// Rotation angle of the diagonalizing frame, `tan(2 angle) = c / a`.
    pub fn angle(&self) -> f64 {
        if self.c == 0.0 {
            0.0
        } else {
            0.5 * self.c.atan2(self.a)
        }
    }

    /// Time derivative of [`angle`](Self::angle); only `a` depends on time.
    pub fn angle_rate(&self) -> f64 {
        if self.c == 0.0 {
            0.0
        } else {
            -0.5 * self.c * self.a_rate / (self.a * self.a + self.c * self.c)
        }
    }

    pub fn matrix(&self) -> Matrix2 {
        Matrix2::from_real([
            [self.center + self.a, self.c],
            [self.c, self.center - self.a],
        ])
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("a_par", self.a_par),
            ("a_perp", self.a_perp),
            ("zeta", self.zeta),
            ("theta", self.theta),
        ] {
            if !x.is_finite() {
                return Err(Error::InvalidParams(format!("{name} is not finite")));
            }
        }
        if self.theta < -ORIENTATION_TOLERANCE || self.theta > FRAC_PI_2 + ORIENTATION_TOLERANCE {
            return Err(Error::InvalidParams(format!(
                "theta = {} outside [0, pi/2]",
                self.theta
            )));
        }
        self.profile.validate()
    }

    pub fn orientation(&self) -> Orientation {
        if self.theta.abs() <= ORIENTATION_TOLERANCE {
            Orientation::Parallel
        } else if (self.theta - FRAC_PI_2).abs() <= ORIENTATION_TOLERANCE {
            Orientation::Perpendicular
        } else {
            Orientation::Oblique
        }
    }

    /// Orientation restricted to the two block-diagonal cases.
    pub fn exact_orientation(&self) -> Result<Orientation> {
        match self.orientation() {
            Orientation::Oblique => Err(Error::UnsupportedOrientation { theta: self.theta }),
            o => Ok(o),
        }
    }

    /// `(A_par - A_perp) sin^2 theta`.
    pub fn delta_a(&self) -> f64 {
        match self.orientation() {
            Orientation::Parallel => 0.0,
            Orientation::Perpendicular => self.a_par - self.a_perp,
            Orientation::Oblique => (self.a_par - self.a_perp) * self.theta.sin().powi(2),
        }
    }

    /// Block coefficients at field `omega` with rate `omega_rate`.
    pub fn block_coefficients(
        &self,
        block: BlockId,
        omega: f64,
        omega_rate: f64,
    ) -> Result<BlockCoefficients> {
        let orientation = self.exact_orientation()?;
        let z = self.zeta;
        let (center, c) = match (orientation, block) {
            (Orientation::Parallel, BlockId::Block23) => (-self.a_par, 2.0 * self.a_perp),
            (Orientation::Parallel, BlockId::Block14) => (self.a_par, 0.0),
            (_, BlockId::Block23) => (-self.a_perp, self.a_par + self.a_perp),
            (_, BlockId::Block14) => (self.a_perp, self.a_par - self.a_perp),
        };
        let k = match block {
            BlockId::Block23 => 1.0 - z,
            BlockId::Block14 => 1.0 + z,
        };
        Ok(BlockCoefficients {
            center,
            a: 0.5 * omega * k,
            c,
            a_rate: 0.5 * omega_rate * k,
        })
    }
}

/// Lab-frame Hamiltonian at field value `omega`.
pub fn hamiltonian_at(p: &SystemParams, omega: f64) -> Matrix4 {
    let (apar, aperp, z) = (p.a_par, p.a_perp, p.zeta);
    let w1 = 0.5 * omega * (1.0 + z);
    let w2 = 0.5 * omega * (1.0 - z);
    match p.orientation() {
        Orientation::Parallel => Matrix4::from_real([
            [apar + w1, 0.0, 0.0, 0.0],
            [0.0, -apar + w2, 2.0 * aperp, 0.0],
            [0.0, 2.0 * aperp, -apar - w2, 0.0],
            [0.0, 0.0, 0.0, apar - w1],
        ]),
        Orientation::Perpendicular => Matrix4::from_real([
            [aperp + w1, 0.0, 0.0, apar - aperp],
            [0.0, -aperp + w2, apar + aperp, 0.0],
            [0.0, apar + aperp, -aperp - w2, 0.0],
            [apar - aperp, 0.0, 0.0, aperp - w1],
        ]),
        Orientation::Oblique => assemble_from_pauli(p, omega),
    }
}

/// Direct assembly from Pauli products, valid for any angle.
pub fn assemble_from_pauli(p: &SystemParams, omega: f64) -> Matrix4 {
    let id = Matrix2::identity();
    let (sx, sy, sz) = (sigma_x(), sigma_y(), sigma_z());
    let (st, ct) = p.theta.sin_cos();
    let sn = sx * st + sz * ct;
    let zeeman = kron2(&sz, &id) * (0.5 * omega) + kron2(&id, &sz) * (0.5 * p.zeta * omega);
    let iso = kron2(&sx, &sx) + kron2(&sy, &sy) + kron2(&sz, &sz);
    let axial = kron2(&sn, &sn);
    let h = zeeman + iso * p.a_perp + axial * (p.a_par - p.a_perp);
    // strip the rounding-level imaginary parts produced by sy x sy
    let mut out = h;
    for i in 0..4 {
        out.0[i][i] = C64::new(out.0[i][i].re, 0.0);
        for j in (i + 1)..4 {
            let avg = 0.5 * (h.0[i][j] + h.0[j][i].conj());
            out.0[i][j] = avg;
            out.0[j][i] = avg.conj();
        }
    }
    out
}

/// Lab-frame Hamiltonian `H(t)`.
pub fn build_hamiltonian(p: &SystemParams, t: f64) -> Result<Matrix4> {
    Ok(hamiltonian_at(p, p.profile.omega(t)?))
}

/// Closed-form levels `(e1, e2, e3, e4)` in label order.
///
/// Parallel: `e1,4 = A_par +- omega(1+zeta)/2`,
/// `e2,3 = -A_par +- (1/2) sqrt(16 A_perp^2 + omega^2 (1-zeta)^2)`.
/// Perpendicular: `e1,4 = A_perp +- (1/2) sqrt(4(A_par-A_perp)^2 + omega^2(1+zeta)^2)`,
/// `e2,3 = -A_perp +- (1/2) sqrt(4(A_par+A_perp)^2 + omega^2(1-zeta)^2)`.
pub fn closed_eigenvalues_at(p: &SystemParams, omega: f64) -> Result<[f64; 4]> {
    let (apar, aperp, z) = (p.a_par, p.a_perp, p.zeta);
    let w1 = omega * (1.0 + z);
    let w2 = omega * (1.0 - z);
    Ok(match p.exact_orientation()? {
        Orientation::Parallel => {
            let r = 0.5 * (16.0 * aperp * aperp + w2 * w2).sqrt();
            [apar + 0.5 * w1, -apar + r, -apar - r, apar - 0.5 * w1]
        }
        _ => {
            let d = apar - aperp;
            let s = apar + aperp;
            let r14 = 0.5 * (4.0 * d * d + w1 * w1).sqrt();
            let r23 = 0.5 * (4.0 * s * s + w2 * w2).sqrt();
            [aperp + r14, -aperp + r23, -aperp - r23, aperp - r14]
        }
    })
}

pub fn closed_eigenvalues(p: &SystemParams, t: f64) -> Result<[f64; 4]> {
    closed_eigenvalues_at(p, p.profile.omega(t)?)
}
