//! Dense complex linear algebra for the 2x2 and 4x4 matrices and the
//! four-component state vectors used throughout the crate.
//!
//! Everything is stack allocated and `Copy`. The only nontrivial algorithm is
//! the cyclic Jacobi eigensolver for Hermitian matrices, which backs the
//! unitary exponential `exp(-i s H)` in dimension 4. Dimension 2 uses the
//! closed Rodrigues form instead.

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Hermiticity defect above which `expm_unitary` refuses its input.
pub const HERMITIAN_REJECT: f64 = 1e-9;
/// Off-diagonal threshold of the Jacobi iteration, relative to the Frobenius norm.
pub const JACOBI_THRESHOLD: f64 = 1e-14;
pub const JACOBI_MAX_SWEEPS: usize = 50;
/// Norm deviation tolerated by `fidelity`.
pub const NORM_TOLERANCE: f64 = 1e-8;

/// Square complex matrix stored row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix<const N: usize>(pub [[C64; N]; N]);

pub type Matrix2 = Matrix<2>;
pub type Matrix4 = Matrix<4>;

impl<const N: usize> Matrix<N> {
    pub fn zeros() -> Self {
        Matrix([[ZERO; N]; N])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.0[i][i] = ONE;
        }
        m
    }

    pub fn from_real(rows: [[f64; N]; N]) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] = C64::new(rows[i][j], 0.0);
            }
        }
        m
    }

    pub fn diag(d: [C64; N]) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.0[i][i] = d[i];
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] = self.0[j][i].conj();
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] = self.0[j][i];
            }
        }
        m
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..N).map(|i| self.0[i][i]).sum()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .map(|x| x.norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .map(|x| x.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest off-diagonal entry modulus.
    pub fn max_off_diagonal(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..N {
            for j in 0..N {
                if i != j {
                    m = m.max(self.0[i][j].norm());
                }
            }
        }
        m
    }

    /// `max |M - M^dagger|`.
    pub fn hermiticity_defect(&self) -> f64 {
        (*self - self.adjoint()).max_abs()
    }

    /// `max |U^dagger U - I|`.
    pub fn unitarity_defect(&self) -> f64 {
        (self.adjoint() * *self - Self::identity()).max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .all(|x| x.re.is_finite() && x.im.is_finite())
    }

    pub fn apply(&self, v: &[C64; N]) -> [C64; N] {
        let mut out = [ZERO; N];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..N).map(|j| self.0[i][j] * v[j]).sum();
        }
        out
    }

    pub fn column(&self, j: usize) -> [C64; N] {
        let mut c = [ZERO; N];
        for (i, x) in c.iter_mut().enumerate() {
            *x = self.0[i][j];
        }
        c
    }

    /// Real eigenvalues of a Hermitian matrix in ascending order.
    pub fn eigenvalues_sorted(&self) -> Result<[f64; N]> {
        let eig = jacobi_eigen(self)?;
        let mut vals = eig.values;
        vals.sort_by(|a, b| a.total_cmp(b));
        Ok(vals)
    }
}

impl<const N: usize> Index<(usize, usize)> for Matrix<N> {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.0[i][j]
    }
}

impl<const N: usize> IndexMut<(usize, usize)> for Matrix<N> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.0[i][j]
    }
}

impl<const N: usize> Add for Matrix<N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for i in 0..N {
            for j in 0..N {
                self.0[i][j] += rhs.0[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Sub for Matrix<N> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for i in 0..N {
            for j in 0..N {
                self.0[i][j] -= rhs.0[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Neg for Matrix<N> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-ONE)
    }
}

impl<const N: usize> Mul for Matrix<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for k in 0..N {
                let a = self.0[i][k];
                if a == ZERO {
                    continue;
                }
                for j in 0..N {
                    m.0[i][j] += a * rhs.0[k][j];
                }
            }
        }
        m
    }
}

impl<const N: usize> Mul<f64> for Matrix<N> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.scale(C64::new(rhs, 0.0))
    }
}

pub fn sigma_x() -> Matrix2 {
    Matrix2::from_real([[0.0, 1.0], [1.0, 0.0]])
}

pub fn sigma_y() -> Matrix2 {
    Matrix([[ZERO, -I], [I, ZERO]])
}

pub fn sigma_z() -> Matrix2 {
    Matrix2::from_real([[1.0, 0.0], [0.0, -1.0]])
}

/// Kronecker product: `(a ⊗ b)[2i+k][2j+l] = a[i][j] b[k][l]`.
pub fn kron2(a: &Matrix2, b: &Matrix2) -> Matrix4 {
    let mut m = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    m.0[2 * i + k][2 * j + l] = a.0[i][j] * b.0[k][l];
                }
            }
        }
    }
    m
}

/// Eigendecomposition `H = V diag(values) V^dagger` of a Hermitian matrix.
#[derive(Clone, Copy, Debug)]
pub struct HermitianEigen<const N: usize> {
    pub values: [f64; N],
    /// Eigenvectors as columns.
    pub vectors: Matrix<N>,
}

/// Cyclic Jacobi iteration for a Hermitian matrix.
///
/// Each rotation annihilates one off-diagonal pair `(p, q)` with the complex
/// Givens rotation whose columns are `(c, s e^{-i phi})` and `(-s e^{i phi}, c)`,
/// `phi = arg h_pq`. The smaller of the two admissible angles is used so the
/// sweep converges quadratically.
pub fn jacobi_eigen<const N: usize>(h: &Matrix<N>) -> Result<HermitianEigen<N>> {
    let mut a = *h;
    // Symmetrize so tiny rounding asymmetries do not accumulate.
    for i in 0..N {
        a.0[i][i] = C64::new(a.0[i][i].re, 0.0);
        for j in (i + 1)..N {
            let avg = (a.0[i][j] + a.0[j][i].conj()) * 0.5;
            a.0[i][j] = avg;
            a.0[j][i] = avg.conj();
        }
    }
    let mut v = Matrix::<N>::identity();
    let scale = a.frobenius().max(f64::MIN_POSITIVE);
    let threshold = JACOBI_THRESHOLD * scale;

    let off = |a: &Matrix<N>| -> f64 {
        let mut s = 0.0;
        for i in 0..N {
            for j in (i + 1)..N {
                s += a.0[i][j].norm_sqr();
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let off_norm = off(&a);
        if off_norm <= threshold {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::EigenNotConverged {
                sweeps,
                off: off_norm,
            });
        }
        sweeps += 1;
        for p in 0..N {
            for q in (p + 1)..N {
                let hpq = a.0[p][q];
                let mag = hpq.norm();
                if mag <= threshold * 1e-3 {
                    // Exact zeros stay exact; below-threshold noise is dropped.
                    a.0[p][q] = ZERO;
                    a.0[q][p] = ZERO;
                    continue;
                }
                let phase = hpq / mag;
                let app = a.0[p][p].re;
                let aqq = a.0[q][q].re;
                let angle = 0.5 * (2.0 * mag / (app - aqq)).atan();
                let (s, c) = angle.sin_cos();
                // Column transform a <- a J, J[p][p]=c, J[q][p]=s conj(u), J[p][q]=-s u, J[q][q]=c.
                let sp = C64::new(s, 0.0) * phase.conj();
                let sq = C64::new(-s, 0.0) * phase;
                for row in a.0.iter_mut() {
                    let xp = row[p];
                    let xq = row[q];
                    row[p] = xp * c + xq * sp;
                    row[q] = xp * sq + xq * c;
                }
                for row in v.0.iter_mut() {
                    let xp = row[p];
                    let xq = row[q];
                    row[p] = xp * c + xq * sp;
                    row[q] = xp * sq + xq * c;
                }
                // Row transform a <- J^dagger a.
                for j in 0..N {
                    let xp = a.0[p][j];
                    let xq = a.0[q][j];
                    a.0[p][j] = xp * c + xq * sp.conj();
                    a.0[q][j] = xp * sq.conj() + xq * c;
                }
                a.0[p][q] = ZERO;
                a.0[q][p] = ZERO;
                a.0[p][p] = C64::new(a.0[p][p].re, 0.0);
                a.0[q][q] = C64::new(a.0[q][q].re, 0.0);
            }
        }
    }

    let mut values = [0.0; N];
    for (i, x) in values.iter_mut().enumerate() {
        *x = a.0[i][i].re;
    }
    Ok(HermitianEigen { values, vectors: v })
}

/// Unitary exponential `exp(-i s H)` of a Hermitian matrix.
pub trait ExpmUnitary: Sized {
    fn expm_unitary(&self, s: f64) -> Result<Self>;
}

impl ExpmUnitary for Matrix2 {
    /// Closed form: `H = c0 I + c.sigma` gives
    /// `exp(-isH) = e^{-is c0} (cos(s|c|) I - i sin(s|c|) c.sigma/|c|)`.
    fn expm_unitary(&self, s: f64) -> Result<Self> {
        let defect = self.hermiticity_defect();
        if defect > HERMITIAN_REJECT {
            return Err(Error::NonHermitianInput { defect });
        }
        let h = &self.0;
        let c0 = 0.5 * (h[0][0].re + h[1][1].re);
        let cz = 0.5 * (h[0][0].re - h[1][1].re);
        let off = 0.5 * (h[0][1] + h[1][0].conj());
        let (cx, cy) = (off.re, -off.im);
        let norm = (cx * cx + cy * cy + cz * cz).sqrt();
        let x = s * norm;
        let cos = x.cos();
        // sin(s|c|)/|c| -> s as |c| -> 0
        let sinc = if x.abs() < 1e-8 {
            s * (1.0 - x * x / 6.0)
        } else {
            x.sin() / norm
        };
        let m = Matrix([
            [C64::new(cos, -sinc * cz), C64::new(-sinc * cy, -sinc * cx)],
            [C64::new(sinc * cy, -sinc * cx), C64::new(cos, sinc * cz)],
        ]);
        Ok(m.scale(C64::from_polar(1.0, -s * c0)))
    }
}

impl ExpmUnitary for Matrix4 {
    fn expm_unitary(&self, s: f64) -> Result<Self> {
        let defect = self.hermiticity_defect();
        if defect > HERMITIAN_REJECT {
            return Err(Error::NonHermitianInput { defect });
        }
        if let Some(u) = expm_paired_blocks(self, s)? {
            return Ok(u);
        }
        let eig = jacobi_eigen(self)?;
        let v = eig.vectors;
        let mut phases = [ZERO; 4];
        for (ph, &lambda) in phases.iter_mut().zip(eig.values.iter()) {
            *ph = C64::from_polar(1.0, -s * lambda);
        }
        let mut out = Matrix4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = ZERO;
                for k in 0..4 {
                    acc += v.0[i][k] * phases[k] * v.0[j][k].conj();
                }
                out.0[i][j] = acc;
            }
        }
        Ok(out)
    }
}

/// Index pairs {0,3} and {1,2}; a matrix coupling only within them splits
/// into two 2x2 problems.
const PAIRS: [(usize, usize); 2] = [(0, 3), (1, 2)];

/// Closed-form exponential when every entry between the two pairs is exactly
/// zero, `None` otherwise.
fn expm_paired_blocks(h: &Matrix4, s: f64) -> Result<Option<Matrix4>> {
    for (i, j) in [(0, 1), (0, 2), (3, 1), (3, 2)] {
        if h.0[i][j] != ZERO || h.0[j][i] != ZERO {
            return Ok(None);
        }
    }
    let mut out = Matrix4::zeros();
    for (a, b) in PAIRS {
        let sub = Matrix([[h.0[a][a], h.0[a][b]], [h.0[b][a], h.0[b][b]]]);
        let e = sub.expm_unitary(s)?;
        out.0[a][a] = e.0[0][0];
        out.0[a][b] = e.0[0][1];
        out.0[b][a] = e.0[1][0];
        out.0[b][b] = e.0[1][1];
    }
    Ok(Some(out))
}

/// `exp(-i s h)` for Hermitian `h` of dimension 2 or 4.
pub fn expm_unitary<M: ExpmUnitary>(h: &M, s: f64) -> Result<M> {
    h.expm_unitary(s)
}

/// Four complex amplitudes over the product basis |++>, |+->, |-+>, |-->.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateVector4(pub [C64; 4]);

impl StateVector4 {
    pub fn basis(k: usize) -> Self {
        let mut a = [ZERO; 4];
        a[k] = ONE;
        StateVector4(a)
    }

    /// Normalizes the given amplitudes; `None` for the zero vector.
    pub fn normalized(amps: [C64; 4]) -> Option<Self> {
        let n = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if n == 0.0 || !n.is_finite() {
            return None;
        }
        Some(StateVector4(amps.map(|a| a / n)))
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn populations(&self) -> [f64; 4] {
        self.0.map(|a| a.norm_sqr())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Copy with the global phase fixed so the largest-magnitude amplitude is real positive.
    pub fn phase_fixed(&self) -> Self {
        let k = (0..4)
            .max_by(|&i, &j| self.0[i].norm().total_cmp(&self.0[j].norm()))
            .unwrap_or(0);
        let a = self.0[k];
        if a.norm() == 0.0 {
            return *self;
        }
        let ph = (a / a.norm()).conj();
        StateVector4(self.0.map(|x| x * ph))
    }

    pub fn check_normalized(&self) -> Result<()> {
        let deviation = (self.norm() - 1.0).abs();
        if deviation > NORM_TOLERANCE || !deviation.is_finite() {
            return Err(Error::NonNormalizedState { deviation });
        }
        Ok(())
    }
}

impl Mul<StateVector4> for Matrix4 {
    type Output = StateVector4;
    fn mul(self, rhs: StateVector4) -> StateVector4 {
        StateVector4(self.apply(&rhs.0))
    }
}

/// `|<psi|phi>|^2`, clamped into `[0, 1]`.
pub fn fidelity(psi: &StateVector4, phi: &StateVector4) -> Result<f64> {
    psi.check_normalized()?;
    phi.check_normalized()?;
    Ok(psi.inner(phi).norm_sqr().clamp(0.0, 1.0))
}
