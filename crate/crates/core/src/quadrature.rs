//! Adaptive 7/15-point Gauss-Kronrod quadrature for vector-valued integrands.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

pub const MAX_DEPTH: u32 = 40;

fn gk15<const N: usize, F>(f: &mut F, a: f64, b: f64) -> Result<([f64; N], f64)>
where
    F: FnMut(f64) -> Result<[f64; N]>,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kronrod = [0.0; N];
    let mut gauss = [0.0; N];
    let fc = f(c)?;
    for n in 0..N {
        kronrod[n] = WGK[7] * fc[n];
        gauss[n] = WG[3] * fc[n];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx)?;
        let f2 = f(c + dx)?;
        for n in 0..N {
            let s = f1[n] + f2[n];
            kronrod[n] += WGK[j] * s;
            if j % 2 == 1 {
                gauss[n] += WG[j / 2] * s;
            }
        }
    }
    let mut err = 0.0f64;
    for n in 0..N {
        kronrod[n] *= h;
        gauss[n] *= h;
        err = err.max((kronrod[n] - gauss[n]).abs());
    }
    Ok((kronrod, err))
}

/// Integrates `f` over `[a, b]` by recursive bisection until each piece's
/// Kronrod-Gauss difference is below its share of `tol` (absolute, max over
/// components).
pub fn integrate<const N: usize, F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<[f64; N]>
where
    F: FnMut(f64) -> Result<[f64; N]>,
{
    if a == b {
        return Ok([0.0; N]);
    }
    let mut total = [0.0; N];
    // explicit stack of (a, b, depth)
    let mut stack = vec![(a, b, 0u32)];
    let width = (b - a).abs();
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = gk15(&mut f, lo, hi)?;
        let share = tol * ((hi - lo).abs() / width).max(1e-3);
        if err <= share || depth >= MAX_DEPTH || (hi - lo).abs() <= 1e-14 * width {
            if err > share && depth >= MAX_DEPTH {
                return Err(Error::QuadratureFailure {
                    a: lo,
                    b: hi,
                    estimate: err,
                });
            }
            for n in 0..N {
                total[n] += val[n];
            }
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    Ok(total)
}

pub fn integrate_scalar<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    Ok(integrate(|x| Ok([f(x)?]), a, b, tol)?[0])
}
