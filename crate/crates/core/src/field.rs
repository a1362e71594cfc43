//! Scalar driving frequency `omega(t)` and its analytic time derivative.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this |omega| the adiabaticity ratio is reported as divergent.
pub const OMEGA_FLOOR: f64 = 1e-12;

/// Field along the fixed axis in frequency units, with a closed-form or
/// tabulated time dependence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldProfile {
    Constant {
        omega0: f64,
    },
    /// `omega_start + rate * t`
    LinearRamp { omega_start: f64, rate: f64 },
    /// `omega_mid + amplitude * tanh(t / timescale)`
    TanhRamp {
        omega_mid: f64,
        amplitude: f64,
        timescale: f64,
    },
    /// `omega0 + amplitude * cos(angular_frequency * t + phase)`
    Harmonic {
        omega0: f64,
        amplitude: f64,
        angular_frequency: f64,
        phase: f64,
    },
    Tabulated(Tabulated),
}

/// Samples interpolated with a monotone (Fritsch-Carlson) cubic Hermite spline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TabulatedSamples", into = "TabulatedSamples")]
pub struct Tabulated {
    times: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TabulatedSamples {
    samples: Vec<(f64, f64)>,
}

impl TryFrom<TabulatedSamples> for Tabulated {
    type Error = Error;
    fn try_from(s: TabulatedSamples) -> Result<Self> {
        Tabulated::new(s.samples)
    }
}

impl From<Tabulated> for TabulatedSamples {
    fn from(t: Tabulated) -> Self {
        TabulatedSamples {
            samples: t.samples(),
        }
    }
}

impl Tabulated {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidProfile(
                "tabulated profile needs at least two samples".into(),
            ));
        }
        if samples
            .iter()
            .any(|(t, w)| !t.is_finite() || !w.is_finite())
        {
            return Err(Error::InvalidProfile("non-finite sample".into()));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidProfile(
                "sample times must be strictly increasing".into(),
            ));
        }
        let (times, values): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
        let slopes = fritsch_carlson_slopes(&times, &values);
        Ok(Tabulated {
            times,
            values,
            slopes,
        })
    }

    pub fn samples(&self) -> Vec<(f64, f64)> {
        self.times
            .iter()
            .copied()
            .zip(self.values.iter().copied())
            .collect()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    fn eval(&self, t: f64) -> Result<(f64, f64)> {
        let (start, end) = self.range();
        if !(t >= start && t <= end) {
            return Err(Error::OutOfRange { t, start, end });
        }
        // interval index k with times[k] <= t <= times[k+1]
        let k = match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => return Ok((self.values[i], self.slopes[i])),
            Err(i) => i - 1,
        };
        let h = self.times[k + 1] - self.times[k];
        let s = (t - self.times[k]) / h;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k], self.slopes[k + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let value = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        let rate = d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1;
        Ok((value, rate))
    }

    /// Reads two columns `t, omega` separated by commas or whitespace. A first
    /// line that does not parse as numbers is treated as a header.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse().ok()).collect();
            match parsed {
                Some(v) if v.len() == 2 => samples.push((v[0], v[1])),
                _ if samples.is_empty() && lineno == 0 => continue,
                _ => {
                    return Err(Error::InvalidProfile(format!(
                        "line {}: expected two numeric columns",
                        lineno + 1
                    )))
                }
            }
        }
        Tabulated::new(samples)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidProfile(format!("{}: {e}", path.display())))?;
        Self::from_csv_str(&text)
    }
}

/// Monotone cubic Hermite slopes.
fn fritsch_carlson_slopes(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    let secants: Vec<f64> = (0..n - 1)
        .map(|k| (y[k + 1] - y[k]) / (t[k + 1] - t[k]))
        .collect();
    let mut m = vec![0.0; n];
    m[0] = secants[0];
    m[n - 1] = secants[n - 2];
    for k in 1..n - 1 {
        m[k] = if secants[k - 1] * secants[k] <= 0.0 {
            0.0
        } else {
            0.5 * (secants[k - 1] + secants[k])
        };
    }
    for k in 0..n - 1 {
        let d = secants[k];
        if d == 0.0 {
            m[k] = 0.0;
            m[k + 1] = 0.0;
            continue;
        }
        let a = m[k] / d;
        let b = m[k + 1] / d;
        let r = a * a + b * b;
        if r > 9.0 {
            let tau = 3.0 / r.sqrt();
            m[k] = tau * a * d;
            m[k + 1] = tau * b * d;
        }
    }
    m
}

impl FieldProfile {
    pub fn validate(&self) -> Result<()> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let ok = match self {
            FieldProfile::Constant { omega0 } => finite(&[*omega0]),
            FieldProfile::LinearRamp { omega_start, rate } => finite(&[*omega_start, *rate]),
            FieldProfile::TanhRamp {
                omega_mid,
                amplitude,
                timescale,
            } => {
                if !(*timescale > 0.0) {
                    return Err(Error::InvalidProfile("tanh timescale must be > 0".into()));
                }
                finite(&[*omega_mid, *amplitude, *timescale])
            }
            FieldProfile::Harmonic {
                omega0,
                amplitude,
                angular_frequency,
                phase,
            } => {
                if !(*angular_frequency >= 0.0) {
                    return Err(Error::InvalidProfile(
                        "angular frequency must be >= 0".into(),
                    ));
                }
                finite(&[*omega0, *amplitude, *angular_frequency, *phase])
            }
            FieldProfile::Tabulated(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidProfile("non-finite parameter".into()))
        }
    }

    /// `(omega(t), d omega / dt)`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        Ok(match *self {
            FieldProfile::Constant { omega0 } => (omega0, 0.0),
            FieldProfile::LinearRamp { omega_start, rate } => (omega_start + rate * t, rate),
            FieldProfile::TanhRamp {
                omega_mid,
                amplitude,
                timescale,
            } => {
                let th = (t / timescale).tanh();
                (
                    omega_mid + amplitude * th,
                    amplitude / timescale * (1.0 - th * th),
                )
            }
            FieldProfile::Harmonic {
                omega0,
                amplitude,
                angular_frequency,
                phase,
            } => {
                let (s, c) = (angular_frequency * t + phase).sin_cos();
                (omega0 + amplitude * c, -amplitude * angular_frequency * s)
            }
            FieldProfile::Tabulated(ref tab) => tab.eval(t)?,
        })
    }

    pub fn omega(&self, t: f64) -> Result<f64> {
        Ok(self.eval(t)?.0)
    }

    /// Time-rescaled copy `omega_s(t) = omega(t / s)`: the same field shape
    /// traversed `s` times more slowly.
    pub fn stretched(&self, s: f64) -> FieldProfile {
        match self.clone() {
            p @ FieldProfile::Constant { .. } => p,
            FieldProfile::LinearRamp { omega_start, rate } => FieldProfile::LinearRamp {
                omega_start,
                rate: rate / s,
            },
            FieldProfile::TanhRamp {
                omega_mid,
                amplitude,
                timescale,
            } => FieldProfile::TanhRamp {
                omega_mid,
                amplitude,
                timescale: timescale * s,
            },
            FieldProfile::Harmonic {
                omega0,
                amplitude,
                angular_frequency,
                phase,
            } => FieldProfile::Harmonic {
                omega0,
                amplitude,
                angular_frequency: angular_frequency / s,
                phase,
            },
            FieldProfile::Tabulated(tab) => FieldProfile::Tabulated(
                Tabulated::new(tab.samples().into_iter().map(|(t, w)| (t * s, w)).collect())
                    .expect("stretching preserves ordering"),
            ),
        }
    }
}

/// `(omega(t), d omega/dt)`.
pub fn omega_eval(p: &FieldProfile, t: f64) -> Result<(f64, f64)> {
    p.eval(t)
}

/// The adiabaticity ratio `omega_dot / omega^2`.
pub fn adiabaticity(p: &FieldProfile, t: f64) -> Result<f64> {
    let (omega, rate) = p.eval(t)?;
    adiabaticity_ratio(omega, rate, t)
}

pub(crate) fn adiabaticity_ratio(omega: f64, rate: f64, t: f64) -> Result<f64> {
    if omega.abs() < OMEGA_FLOOR {
        return Err(Error::DivergentMetric { t, omega });
    }
    Ok(rate / (omega * omega))
}
