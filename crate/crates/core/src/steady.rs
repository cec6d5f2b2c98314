//! Steady-state solutions.
//!
//! Passive: taking the modulus of the stationary equations gives a real cubic in
//! the magnon number `n_m`. Active: with the single-frequency ansatz
//! `a = a0 exp(-i W t)`, `m = m0 exp(-i W t)` and the auxiliary rate
//! `A = G_eff - Gamma |a0|^2`, the stationary conditions reduce to
//!
//! ```text
//!   A^2 + W^2 = 2 g^2 A / gamma
//!   n_m       = 2 A (G_eff - A) / (Gamma gamma)
//!   W (2A - gamma) / (2A) = Delta_m + K n_m
//! ```
//!
//! Eliminating `W` leaves `A (2A-gamma)^2 + 4 A X(A)^2 - (2g^2/gamma)(2A-gamma)^2 = 0`
//! with `X(A) = Delta_m + K n_m(A)`, a quintic in `A`.
//!
//! Both solvers work on a copy of the system with amplitudes rescaled to the
//! reference occupation and rates divided by the largest linear rate, so the
//! polynomial coefficients are O(1).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{horner, poly_roots, real_roots};
use crate::model::{DriveSpec, SystemParams};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Upper bound on the residual of every reported solution.
pub const RESIDUAL_TOL: f64 = 1.0e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixedPointKind {
    Passive,
    Active,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub a0: Complex64,
    pub m0: Complex64,
    /// Frequency offset of the self-oscillation, rad/us. Zero for passive points.
    pub omega_off: f64,
    /// `G_eff - Gamma |a0|^2`, rad/us (active only).
    pub aux_a: Option<f64>,
    pub residual: f64,
    pub kind: FixedPointKind,
    /// False for the bare oscillator branch (`m0 = 0`, only reported when g = 0)
    /// and for the quiescent origin below threshold.
    pub coupled: bool,
}

impl FixedPoint {
    pub fn photons(&self) -> f64 {
        self.a0.norm_sqr()
    }

    pub fn magnons(&self) -> f64 {
        self.m0.norm_sqr()
    }
}

/// Polynomial product, ascending coefficients.
fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, a) in p.iter().enumerate() {
        for (j, b) in q.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

fn poly_add(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len().max(q.len())];
    for (i, a) in p.iter().enumerate() {
        out[i] += a;
    }
    for (i, b) in q.iter().enumerate() {
        out[i] += b;
    }
    out
}

fn poly_scale(p: &[f64], s: f64) -> Vec<f64> {
    p.iter().map(|c| c * s).collect()
}

/// Residual of the stationary equations at `fp`, normalized by the amplitude and
/// the characteristic rate so that it is dimensionless.
pub fn residual(fp: &FixedPoint, params: &SystemParams, drive: Option<&DriveSpec>) -> f64 {
    let (e1, e2) = match fp.kind {
        FixedPointKind::Passive => {
            let eta = drive.map_or(0.0, |d| d.eta);
            passive_equations(fp.a0, fp.m0, params, eta)
        }
        FixedPointKind::Active => active_equations(fp.a0, fp.m0, fp.omega_off, params),
    };
    let amp = fp.a0.norm().max(fp.m0.norm());
    let amp = if amp > 0.0 {
        amp
    } else {
        drive.map_or(1.0, |d| (d.eta / params.rate_scale()).max(1.0))
    };
    e1.norm().max(e2.norm()) / (amp * params.rate_scale())
}

fn passive_equations(a: Complex64, m: Complex64, p: &SystemParams, eta: f64) -> (Complex64, Complex64) {
    let e1 = -(p.kappa / 2.0 + I * p.delta_c) * a - I * p.g * m + eta;
    let e2 = -(p.gamma / 2.0 + I * (p.delta_m + p.kerr * m.norm_sqr())) * m - I * p.g * a;
    (e1, e2)
}

fn active_equations(a: Complex64, m: Complex64, omega: f64, p: &SystemParams) -> (Complex64, Complex64) {
    let e1 = (p.effective_gain() - p.gamma_sat * a.norm_sqr() + I * omega) * a - I * p.g * m;
    let e2 = (p.gamma / 2.0 + I * (p.delta_m - omega + p.kerr * m.norm_sqr())) * m + I * p.g * a;
    (e1, e2)
}

/// Coefficients (ascending) of the passive cubic in the scaled magnon number.
///
/// `n |(kappa/2 + i dc)(gamma/2 + i (dm + K n)) + g^2|^2 - g^2 eta^2`. All inputs
/// are expected in the same (nondimensional) units.
pub fn passive_cubic(p: &SystemParams, eta: f64) -> [f64; 4] {
    let (hk, hg) = (p.kappa / 2.0, p.gamma / 2.0);
    let (dc, dm, k, g2) = (p.delta_c, p.delta_m, p.kerr, p.g * p.g);
    // |C D + g^2|^2 = alpha x^2 + beta x + c0, x = dm + K n.
    let pr = hk * hg + g2;
    let alpha = dc * dc + hk * hk;
    let beta = 2.0 * dc * (hk * hg - pr);
    let c0 = pr * pr + dc * dc * hg * hg;
    [
        -g2 * eta * eta,
        alpha * dm * dm + beta * dm + c0,
        (2.0 * alpha * dm + beta) * k,
        alpha * k * k,
    ]
}

/// Coefficients (ascending) of the active quintic in `A` (all nondimensional).
pub fn active_quintic(p: &SystemParams) -> Vec<f64> {
    let gain = p.effective_gain();
    let (gamma, g2) = (p.gamma, p.g * p.g);
    let k1 = 2.0 * p.kerr / (p.gamma_sat * gamma);
    // X(A) = dm + k1 A (G - A)
    let x = [p.delta_m, k1 * gain, -k1];
    let two_a_minus_gamma = [-gamma, 2.0];
    let sq = poly_mul(&two_a_minus_gamma, &two_a_minus_gamma);
    let t1 = poly_mul(&[0.0, 1.0], &sq);
    let t2 = poly_scale(&poly_mul(&[0.0, 4.0], &poly_mul(&x, &x)), 1.0);
    let t3 = poly_scale(&sq, -2.0 * g2 / gamma);
    let mut out = poly_add(&poly_add(&t1, &t2), &t3);
    while out.len() > 1 && *out.last().unwrap() == 0.0 {
        out.pop();
    }
    out
}

struct Scaling {
    /// Amplitude scale (sqrt of the reference occupation).
    amp: f64,
    /// Rate unit.
    rate: f64,
}

impl Scaling {
    fn apply(&self, p: &SystemParams) -> SystemParams {
        let r = self.rate;
        let n = self.amp * self.amp;
        SystemParams {
            kappa: p.kappa / r,
            kappa_ext: p.kappa_ext / r,
            gamma: p.gamma / r,
            g: p.g / r,
            kerr: p.kerr * n / r,
            gain: p.gain / r,
            gain_absorbed: p.gain_absorbed,
            gamma_sat: p.gamma_sat * n / r,
            omega_d: p.omega_d,
            delta_c: p.delta_c / r,
            delta_m: p.delta_m / r,
        }
    }
}

/// All admissible stationary states of the driven (passive) system.
pub fn passive_fixed_points(params: &SystemParams, drive: &DriveSpec) -> Result<Vec<FixedPoint>> {
    params.validate()?;
    let eta = drive.eta;
    if !eta.is_finite() {
        return Err(Error::Domain("drive amplitude is not finite".into()));
    }
    let rate = params.rate_scale();
    let zero = Complex64::new(0.0, 0.0);
    let cavity = params.kappa / 2.0 + I * params.delta_c;

    if eta == 0.0 {
        let fp = FixedPoint {
            a0: zero,
            m0: zero,
            omega_off: 0.0,
            aux_a: None,
            residual: 0.0,
            kind: FixedPointKind::Passive,
            coupled: params.g != 0.0,
        };
        return Ok(vec![fp]);
    }
    if params.g == 0.0 {
        if cavity.norm() == 0.0 {
            return Ok(Vec::new());
        }
        let mut fp = FixedPoint {
            a0: eta / cavity,
            m0: zero,
            omega_off: 0.0,
            aux_a: None,
            residual: 0.0,
            kind: FixedPointKind::Passive,
            coupled: false,
        };
        fp.residual = residual(&fp, params, Some(drive));
        return Ok(vec![fp]);
    }

    // Reference occupation: the empty-cavity photon number, or the equivalent with
    // the characteristic rate when the cavity is lossless and resonant.
    let denom = cavity.norm_sqr().max((1.0e-12 * rate).powi(2));
    let n_ref = eta * eta / denom;
    let sc = Scaling {
        amp: n_ref.sqrt(),
        rate,
    };
    let sp = sc.apply(params);
    let seta = eta / (sc.amp * rate);
    let coeffs = passive_cubic(&sp, seta);
    let roots = poly_roots(&coeffs)?;
    let mut out = Vec::new();
    for n in real_roots(&roots) {
        if n <= 0.0 {
            continue;
        }
        let n = polish_real(&coeffs, n);
        let d = sp.gamma / 2.0 + I * (sp.delta_m + sp.kerr * n);
        let c = sp.kappa / 2.0 + I * sp.delta_c;
        let a = seta * d / (c * d + sp.g * sp.g);
        let m = -I * sp.g * a / d;
        let (a, m) = refine_passive(&sp, seta, a, m);
        let mut fp = FixedPoint {
            a0: a * sc.amp,
            m0: m * sc.amp,
            omega_off: 0.0,
            aux_a: None,
            residual: 0.0,
            kind: FixedPointKind::Passive,
            coupled: true,
        };
        fp.residual = residual(&fp, params, Some(drive));
        if !(fp.residual < RESIDUAL_TOL) {
            return Err(Error::Consistency(format!(
                "passive root n_m = {:.6e} has residual {:.3e}",
                n * n_ref,
                fp.residual
            )));
        }
        out.push(fp);
    }
    Ok(out)
}

fn polish_real(coeffs: &[f64], x0: f64) -> f64 {
    let mut x = x0;
    for _ in 0..8 {
        let (p, dp) = horner(coeffs, Complex64::new(x, 0.0));
        if dp.re == 0.0 || p.re == 0.0 {
            break;
        }
        let step = p.re / dp.re;
        // Larger corrections mean the companion root was poor; stay on it rather
        // than risk jumping to a neighbouring root.
        if step.abs() > 1.0e-6 * x.abs().max(1.0e-6) {
            break;
        }
        let next = x - step;
        let (pn, _) = horner(coeffs, Complex64::new(next, 0.0));
        if pn.re.abs() < p.re.abs() {
            x = next;
        } else {
            break;
        }
    }
    x
}

/// All single-frequency stationary states of the self-oscillating system.
///
/// With g = 0 only the bare oscillator branch exists and is returned with
/// `coupled = false`. With `G_eff <= 0` there is no self-oscillation and the
/// quiescent origin is the only state.
pub fn active_fixed_points(params: &SystemParams) -> Result<Vec<FixedPoint>> {
    params.validate_active()?;
    let gain = params.effective_gain();
    let zero = Complex64::new(0.0, 0.0);
    if gain <= 0.0 {
        return Ok(vec![FixedPoint {
            a0: zero,
            m0: zero,
            omega_off: 0.0,
            aux_a: Some(gain),
            residual: 0.0,
            kind: FixedPointKind::Active,
            coupled: false,
        }]);
    }
    if !(params.gamma_sat > 0.0) {
        return Err(Error::Domain("gain saturation must be positive above threshold".into()));
    }
    let n_ref = gain / params.gamma_sat;
    if params.g == 0.0 {
        let mut fp = FixedPoint {
            a0: Complex64::new(n_ref.sqrt(), 0.0),
            m0: zero,
            omega_off: 0.0,
            aux_a: Some(0.0),
            residual: 0.0,
            kind: FixedPointKind::Active,
            coupled: false,
        };
        fp.residual = residual(&fp, params, None);
        return Ok(vec![fp]);
    }
    if !(params.gamma > 0.0) {
        return Err(Error::Domain("magnon damping must be positive for the coupled branch".into()));
    }

    let rate = params.rate_scale();
    let sc = Scaling {
        amp: n_ref.sqrt(),
        rate,
    };
    let sp = sc.apply(params);
    let sgain = sp.effective_gain();
    let coeffs = active_quintic(&sp);
    let roots = poly_roots(&coeffs)?;
    let g2 = sp.g * sp.g;
    let a_max = sgain.min(2.0 * g2 / sp.gamma);
    let tol = 1.0e-12;
    let admissible: Vec<f64> = real_roots(&roots)
        .into_iter()
        .filter(|&a| a > tol * sgain && a <= a_max * (1.0 + 1.0e-9) && a < sgain * (1.0 - tol))
        .map(|a| polish_real(&coeffs, a))
        .collect();

    let mut out: Vec<FixedPoint> = Vec::new();
    for group in group_close(&admissible, 1.0e-7) {
        let a_aux = group.iter().sum::<f64>() / group.len() as f64;
        let n_a = (sgain - a_aux) / sp.gamma_sat;
        let n_m = 2.0 * a_aux * (sgain - a_aux) / (sp.gamma_sat * sp.gamma);
        if n_a <= 0.0 || n_m <= 0.0 {
            continue;
        }
        // W from the Kerr constraint, plus both signs from the circle constraint;
        // the latter matter when 2A is (numerically) equal to gamma.
        let x = sp.delta_m + sp.kerr * n_m;
        let w_circle = (2.0 * g2 * a_aux / sp.gamma - a_aux * a_aux).max(0.0).sqrt();
        let mut candidates = vec![w_circle, -w_circle];
        let denom = 2.0 * a_aux - sp.gamma;
        if denom != 0.0 {
            candidates.insert(0, 2.0 * a_aux * x / denom);
        }
        let a0 = n_a.sqrt();
        let mut found: Vec<FixedPoint> = candidates
            .into_iter()
            .map(|w| {
                let m0 = (w - I * a_aux) * a0 / sp.g;
                let (a0r, m0r, wr) = refine_active(&sp, a0, m0, w);
                let mut fp = FixedPoint {
                    a0: Complex64::new(a0r * sc.amp, 0.0),
                    m0: m0r * sc.amp,
                    omega_off: wr * rate,
                    aux_a: Some((sgain - sp.gamma_sat * a0r * a0r) * rate),
                    residual: 0.0,
                    kind: FixedPointKind::Active,
                    coupled: true,
                };
                fp.residual = residual(&fp, params, None);
                fp
            })
            .collect();
        // Newton may wander to a different solution from a poor start; keep only
        // refinements that stay on this root of the quintic.
        found.retain(|fp| {
            let a_fp = fp.aux_a.unwrap_or(f64::NAN) / rate;
            (a_fp - a_aux).abs() <= 1.0e-6 * a_aux.abs().max(1.0e-3 * sgain)
        });
        found.sort_by(|p, q| p.residual.total_cmp(&q.residual));
        if found.is_empty() {
            return Err(Error::Consistency(format!(
                "no frequency reconstructs active root A = {:.6e}",
                a_aux * rate
            )));
        }
        if !(found[0].residual < RESIDUAL_TOL) {
            return Err(Error::Consistency(format!(
                "active root A = {:.6e} has residual {:.3e}",
                a_aux * rate,
                found[0].residual
            )));
        }
        let mut kept: Vec<FixedPoint> = Vec::new();
        for fp in found {
            if kept.len() == group.len() || !(fp.residual < RESIDUAL_TOL) {
                break;
            }
            let dup = kept
                .iter()
                .any(|k| (k.omega_off - fp.omega_off).abs() < 1.0e-6 * rate);
            if !dup {
                kept.push(fp);
            }
        }
        // A repeated root whose copies share one frequency is a fold: keep its
        // multiplicity so solution counts stay continuous across the boundary.
        while kept.len() < group.len() {
            kept.push(kept[0]);
        }
        out.extend(kept);
    }
    Ok(out)
}

/// Clusters sorted values whose relative spacing is below `rel`.
fn group_close(sorted: &[f64], rel: f64) -> Vec<Vec<f64>> {
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for &v in sorted {
        match groups.last_mut() {
            Some(g) if (v - g[g.len() - 1]).abs() <= rel * v.abs().max(g[0].abs()) => g.push(v),
            _ => groups.push(vec![v]),
        }
    }
    groups
}

/// Newton refinement of a passive solution on the raw stationary equations.
fn refine_passive(p: &SystemParams, eta: f64, a: Complex64, m: Complex64) -> (Complex64, Complex64) {
    let eval = |x: &[f64; 4]| -> [f64; 4] {
        let (e1, e2) = passive_equations(Complex64::new(x[0], x[1]), Complex64::new(x[2], x[3]), p, eta);
        [e1.re, e1.im, e2.re, e2.im]
    };
    let x = newton4(eval, [a.re, a.im, m.re, m.im]);
    (Complex64::new(x[0], x[1]), Complex64::new(x[2], x[3]))
}

/// Newton refinement of an active solution on the raw stationary equations, with
/// the phase of `a0` pinned to zero. Unknowns: (a0, Re m0, Im m0, W).
fn refine_active(p: &SystemParams, a0: f64, m0: Complex64, w: f64) -> (f64, Complex64, f64) {
    let eval = |x: &[f64; 4]| -> [f64; 4] {
        let (e1, e2) = active_equations(
            Complex64::new(x[0], 0.0),
            Complex64::new(x[1], x[2]),
            x[3],
            p,
        );
        [e1.re, e1.im, e2.re, e2.im]
    };
    let x = newton4(eval, [a0, m0.re, m0.im, w]);
    (x[0], Complex64::new(x[1], x[2]), x[3])
}

fn norm4(v: &[f64; 4]) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Damped Newton iteration on a 4x4 real system with a finite-difference Jacobian.
/// Only accepts steps that reduce the residual, so it never worsens the start.
pub(crate) fn newton4(f: impl Fn(&[f64; 4]) -> [f64; 4], x0: [f64; 4]) -> [f64; 4] {
    let mut x = x0;
    let mut fx = f(&x);
    for _ in 0..20 {
        let r = norm4(&fx);
        if r == 0.0 || !r.is_finite() {
            break;
        }
        let mut jac = [[0.0; 4]; 4];
        for j in 0..4 {
            let h = 1.0e-7 * (1.0 + x[j].abs());
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let (fp, fm) = (f(&xp), f(&xm));
            for i in 0..4 {
                jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let Some(step) = solve4(jac, fx) else { break };
        let mut lambda = 1.0;
        let mut improved = false;
        while lambda > 1.0e-3 {
            let trial = [
                x[0] - lambda * step[0],
                x[1] - lambda * step[1],
                x[2] - lambda * step[2],
                x[3] - lambda * step[3],
            ];
            let ft = f(&trial);
            if norm4(&ft) < r {
                x = trial;
                fx = ft;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    x
}

/// Gaussian elimination with partial pivoting.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let s: f64 = (row + 1..4).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}
