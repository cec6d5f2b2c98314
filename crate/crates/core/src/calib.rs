//! Calibration fits: reflection dip of the magnon mode and the Kittel line.
//!
//! Frequencies and rates are in rad/us, fields in tesla (as mu0 H).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{mhz, TIME_UNIT_S};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Minimum number of points for a reflection fit.
pub const MIN_S11_POINTS: usize = 8;

/// Electron gyromagnetic ratio gamma_e/2pi used for the sample, Hz/T.
pub const GYRO_HZ_PER_TESLA: f64 = 28.2e9;

/// Anisotropy field mu0 H_A of the sample, T.
pub const ANISOTROPY_TESLA: f64 = -3.35e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectionFit {
    pub omega_m: f64,
    /// Antenna coupling rate.
    pub kappa_a: f64,
    /// Magnon damping.
    pub gamma: f64,
    /// Always `kappa_a + gamma`.
    pub kappa_load: f64,
    /// rms misfit of |S11| after baseline normalization.
    pub goodness: f64,
    /// Factor the raw |S11| data was divided by.
    pub baseline: f64,
}

impl ReflectionFit {
    pub fn new(omega_m: f64, kappa_a: f64, gamma: f64) -> Self {
        Self {
            omega_m,
            kappa_a,
            gamma,
            kappa_load: kappa_a + gamma,
            goodness: 0.0,
            baseline: 1.0,
        }
    }
}

/// One-port reflection of the antenna-coupled magnon mode.
pub fn s11_model(omega: f64, fit: &ReflectionFit) -> Complex64 {
    1.0 - fit.kappa_a / (I * (omega - fit.omega_m) + fit.kappa_load / 2.0)
}

/// Which side of critical coupling to report. |S11| alone cannot tell
/// `kappa_a` and `gamma` apart, only their sum and the size of their difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    /// `kappa_a <= gamma`
    #[default]
    Under,
    /// `kappa_a >= gamma`
    Over,
}

// |S11| with the baseline factor, in terms of the centre, half load width `w`
// and half mismatch `d = (gamma - kappa_a)/2`.
fn s11_mag(omega: f64, p: &[f64; 4]) -> f64 {
    let [wm, w, d, c] = *p;
    let x = omega - wm;
    c * ((x * x + d * d) / (x * x + w * w)).sqrt()
}

/// Solves the small dense system `a x = b` by Gaussian elimination with
/// partial pivoting.
fn solve_dense<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let piv = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..N {
            let f = a[r][col] / a[col][col];
            for c in col..N {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for r in (0..N).rev() {
        let s: f64 = (r + 1..N).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Damped Gauss-Newton on `sum (model(x_i, p) - y_i)^2` with a forward
/// difference Jacobian. `scale` sets the step for each parameter.
fn levenberg_marquardt(
    xs: &[f64],
    ys: &[f64],
    model: impl Fn(f64, &[f64; 4]) -> f64,
    mut p: [f64; 4],
    scale: [f64; 4],
) -> ([f64; 4], f64) {
    let cost = |p: &[f64; 4]| -> f64 {
        xs.iter()
            .zip(ys)
            .map(|(x, y)| (model(*x, p) - y).powi(2))
            .sum()
    };
    let mut c0 = cost(&p);
    let mut lambda = 1.0e-3;
    for _ in 0..500 {
        let mut jt_j = [[0.0; 4]; 4];
        let mut jt_r = [0.0; 4];
        for (x, y) in xs.iter().zip(ys) {
            let f = model(*x, &p);
            let mut row = [0.0; 4];
            for k in 0..4 {
                let h = 1.0e-7 * scale[k].max(p[k].abs());
                let mut q = p;
                q[k] += h;
                row[k] = (model(*x, &q) - f) / h;
            }
            for i in 0..4 {
                jt_r[i] += row[i] * (y - f);
                for j in 0..4 {
                    jt_j[i][j] += row[i] * row[j];
                }
            }
        }
        let mut improved = false;
        while lambda < 1.0e12 {
            let mut a = jt_j;
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += lambda * jt_j[i][i].max(1.0e-300);
            }
            let Some(step) = solve_dense(a, jt_r) else {
                lambda *= 10.0;
                continue;
            };
            let mut q = p;
            for k in 0..4 {
                q[k] += step[k];
            }
            let c1 = cost(&q);
            if c1.is_finite() && c1 < c0 {
                let rel = (0..4)
                    .map(|k| step[k].abs() / scale[k].max(q[k].abs()))
                    .fold(0.0, f64::max);
                p = q;
                let done = c0 - c1 <= 1.0e-15 * c0 || rel < 1.0e-12;
                c0 = c1;
                lambda = (lambda / 10.0).max(1.0e-12);
                improved = true;
                if done {
                    return (p, c0);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (p, c0)
}

/// Fits |S11| samples `(omega, |S11|)` to the reflection model.
pub fn fit_s11(spectrum: &[(f64, f64)], coupling: Coupling) -> Result<ReflectionFit> {
    if spectrum.len() < MIN_S11_POINTS {
        return Err(Error::FitFailure(format!(
            "need at least {MIN_S11_POINTS} points, got {}",
            spectrum.len()
        )));
    }
    if spectrum.iter().any(|(w, s)| !w.is_finite() || !s.is_finite() || *s < 0.0) {
        return Err(Error::FitFailure("non-finite or negative samples".into()));
    }
    let mut data = spectrum.to_vec();
    data.sort_by(|a, b| a.0.total_cmp(&b.0));
    let xs: Vec<f64> = data.iter().map(|d| d.0).collect();
    let ys: Vec<f64> = data.iter().map(|d| d.1).collect();
    let n = xs.len();
    let imin = (0..n).min_by(|&i, &j| ys[i].total_cmp(&ys[j])).expect("non-empty");
    if imin == 0 || imin == n - 1 {
        return Err(Error::FitFailure("no reflection dip inside the frequency range".into()));
    }
    let baseline0 = ys.iter().copied().fold(0.0, f64::max);
    if !(baseline0 > 0.0) {
        return Err(Error::FitFailure("all samples are zero".into()));
    }
    let depth = ys[imin] / baseline0;
    if depth > 1.0 - 1.0e-9 {
        return Err(Error::FitFailure("flat spectrum".into()));
    }
    // Half width where the normalized power is midway between the dip and 1.
    let level = ((1.0 + depth * depth) / 2.0).sqrt() * baseline0;
    let left = (0..imin).rev().find(|&i| ys[i] >= level).unwrap_or(0);
    let right = (imin..n).find(|&i| ys[i] >= level).unwrap_or(n - 1);
    let span = xs[n - 1] - xs[0];
    let w0 = ((xs[right] - xs[left]) / 2.0).max(span / n as f64);
    let x0 = xs[imin];
    // Work relative to the dip so the centre is well conditioned.
    let rel: Vec<f64> = xs.iter().map(|x| (x - x0) / w0).collect();
    let p0 = [0.0, 1.0, depth, baseline0];
    let (p, c) = levenberg_marquardt(&rel, &ys, s11_mag, p0, [1.0, 1.0, 1.0, baseline0]);
    if !p.iter().all(|v| v.is_finite()) || !(p[3] > 0.0) {
        return Err(Error::FitFailure("least squares did not converge".into()));
    }
    let w = p[1].abs() * w0;
    let d = p[2].abs().min(p[1].abs()) * w0;
    let (kappa_a, gamma) = match coupling {
        Coupling::Under => (w - d, w + d),
        Coupling::Over => (w + d, w - d),
    };
    Ok(ReflectionFit {
        omega_m: x0 + p[0] * w0,
        kappa_a,
        gamma,
        kappa_load: kappa_a + gamma,
        goodness: (c / n as f64).sqrt() / p[3],
        baseline: p[3],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KittelFit {
    /// gamma_e/2pi, Hz/T.
    pub gyromagnetic_ratio: f64,
    /// mu0 H_A, T.
    pub anisotropy_field: f64,
    /// rms misfit of the magnon frequency, rad/us.
    pub residual_rms: f64,
}

impl KittelFit {
    pub fn reference_sample() -> Self {
        Self {
            gyromagnetic_ratio: GYRO_HZ_PER_TESLA,
            anisotropy_field: ANISOTROPY_TESLA,
            residual_rms: 0.0,
        }
    }

    /// gamma_e in rad/us per tesla.
    pub fn gamma_e(&self) -> f64 {
        mhz(self.gyromagnetic_ratio * 1.0e-6)
    }

    /// Magnon frequency, rad/us, at applied field `b` (mu0 H0, T).
    pub fn omega_m(&self, b: f64) -> f64 {
        self.gamma_e() * (b + self.anisotropy_field)
    }
}

/// Ordinary least squares of `(mu0 H0 [T], omega_m [rad/us])` pairs.
pub fn fit_kittel(points: &[(f64, f64)]) -> Result<KittelFit> {
    let n = points.len();
    if n < 2 {
        return Err(Error::Rank(format!("need at least 2 points, got {n}")));
    }
    let nf = n as f64;
    let bm = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let wm = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sbb: f64 = points.iter().map(|p| (p.0 - bm).powi(2)).sum();
    let sbw: f64 = points.iter().map(|p| (p.0 - bm) * (p.1 - wm)).sum();
    let spread = points.iter().map(|p| (p.0 - bm).abs()).fold(0.0, f64::max);
    if !(spread > 1.0e-12 * bm.abs().max(f64::MIN_POSITIVE)) || !(sbb > 0.0) {
        return Err(Error::Rank("all fields are identical".into()));
    }
    let slope = sbw / sbb;
    let intercept = wm - slope * bm;
    if !(slope != 0.0) || !slope.is_finite() {
        return Err(Error::Rank("magnon frequency does not depend on field".into()));
    }
    let rss: f64 = points
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    Ok(KittelFit {
        gyromagnetic_ratio: slope / (2.0 * std::f64::consts::PI) / TIME_UNIT_S,
        anisotropy_field: intercept / slope,
        residual_rms: (rss / nf).sqrt(),
    })
}

/// Nominal magnon detuning, rad/us, at field `b` (T) from the reference
/// frequency `omega_ref` (rad/us).
pub fn detuning_from_field(b: f64, kittel: &KittelFit, omega_ref: f64) -> f64 {
    kittel.omega_m(b) - omega_ref
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnUnit {
    Hz,
    GHz,
    MilliTesla,
    Gauss,
}

impl ColumnUnit {
    /// Factor to rad/us for frequencies, tesla for fields.
    pub fn to_internal(self) -> f64 {
        match self {
            ColumnUnit::Hz => mhz(1.0e-6),
            ColumnUnit::GHz => mhz(1.0e3),
            ColumnUnit::MilliTesla => 1.0e-3,
            ColumnUnit::Gauss => 1.0e-4,
        }
    }

    fn parse_freq(s: &str) -> Option<Self> {
        match s {
            "Hz" => Some(ColumnUnit::Hz),
            "GHz" => Some(ColumnUnit::GHz),
            _ => None,
        }
    }

    fn parse_field(s: &str) -> Option<Self> {
        match s {
            "mT" => Some(ColumnUnit::MilliTesla),
            "G" => Some(ColumnUnit::Gauss),
            _ => None,
        }
    }
}

/// Two-column numeric table with the unit tags taken from its header line.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedTable {
    /// Unit of the first column.
    pub x_unit: ColumnUnit,
    /// Frequency unit of the second column when it is a frequency.
    pub y_unit: ColumnUnit,
    pub rows: Vec<(f64, f64)>,
}

/// Parses `freq_unit,<Hz|GHz>` or `field_unit,<mT|G>[,<Hz|GHz>]` followed by
/// numeric rows. Blank lines and lines starting with `#` are skipped.
pub fn parse_tagged_csv(text: &str) -> Result<TaggedTable> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let Some((lineno, header)) = lines.next() else {
        return Err(Error::Config("empty table".into()));
    };
    let tags: Vec<&str> = header.split(',').map(str::trim).collect();
    let bad_header = || Error::Config(format!("line {lineno}: unrecognized unit header '{header}'"));
    let (x_unit, y_unit) = match tags.as_slice() {
        ["freq_unit", u] => (ColumnUnit::parse_freq(u).ok_or_else(bad_header)?, ColumnUnit::Hz),
        ["field_unit", u] => (ColumnUnit::parse_field(u).ok_or_else(bad_header)?, ColumnUnit::Hz),
        ["field_unit", u, f] => (
            ColumnUnit::parse_field(u).ok_or_else(bad_header)?,
            ColumnUnit::parse_freq(f).ok_or_else(bad_header)?,
        ),
        _ => return Err(bad_header()),
    };
    let mut rows = Vec::new();
    for (lineno, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 2 {
            return Err(Error::Config(format!(
                "line {lineno}: expected 2 columns, got {}",
                cells.len()
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Config(format!("line {lineno}: '{s}' is not a finite number")))
        };
        rows.push((num(cells[0])?, num(cells[1])?));
    }
    if rows.is_empty() {
        return Err(Error::Config("table has no data rows".into()));
    }
    Ok(TaggedTable { x_unit, y_unit, rows })
}
