//! Independent oracles shared by the integration tests. Nothing here goes
//! through the library's polynomial or eigenvalue code.

#![allow(dead_code)]

use magpol::model::SystemParams;
use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Raw passive stationary equations, unknowns (Re a, Im a, Re m, Im m).
pub fn passive_raw(p: &SystemParams, eta: f64, x: &[f64; 4]) -> [f64; 4] {
    let a = Complex64::new(x[0], x[1]);
    let m = Complex64::new(x[2], x[3]);
    let ea = -(p.kappa / 2.0 + I * p.delta_c) * a - I * p.g * m + eta;
    let em = -(p.gamma / 2.0 + I * p.delta_m) * m - I * p.g * a - I * p.kerr * m.norm_sqr() * m;
    [ea.re, ea.im, em.re, em.im]
}

/// Raw active stationary equations in the frame rotating at Omega, with the
/// photon amplitude gauged real. Unknowns (a, Re m, Im m, Omega).
pub fn active_raw(p: &SystemParams, x: &[f64; 4]) -> [f64; 4] {
    let a = Complex64::new(x[0], 0.0);
    let m = Complex64::new(x[1], x[2]);
    let w = x[3];
    let ea = (p.effective_gain() - p.gamma_sat * a.norm_sqr() + I * w) * a - I * p.g * m;
    let em = -(p.gamma / 2.0 + I * (p.delta_m - w)) * m - I * p.g * a - I * p.kerr * m.norm_sqr() * m;
    [ea.re, ea.im, em.re, em.im]
}

fn norm(v: &[f64; 4]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Plain Newton with a central-difference Jacobian and backtracking.
pub fn newton(f: &dyn Fn(&[f64; 4]) -> [f64; 4], x0: [f64; 4], iters: usize) -> Option<[f64; 4]> {
    let mut x = x0;
    let mut fx = f(&x);
    for _ in 0..iters {
        let r = norm(&fx);
        if r < 1e-14 {
            break;
        }
        let mut j = Matrix4::zeros();
        for k in 0..4 {
            let h = 1e-7 * x[k].abs().max(1e-3);
            let (mut xp, mut xm) = (x, x);
            xp[k] += h;
            xm[k] -= h;
            let (fp, fm) = (f(&xp), f(&xm));
            for i in 0..4 {
                j[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let rhs = Vector4::new(-fx[0], -fx[1], -fx[2], -fx[3]);
        let dx = j.lu().solve(&rhs)?;
        let mut t = 1.0;
        loop {
            let xn = [x[0] + t * dx[0], x[1] + t * dx[1], x[2] + t * dx[2], x[3] + t * dx[3]];
            let fnew = f(&xn);
            if norm(&fnew) < r || t < 1e-4 {
                x = xn;
                fx = fnew;
                break;
            }
            t *= 0.5;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    Some(x)
}

/// Working units for an oracle: amplitudes in units of `amp`, rates in units
/// of `rate`.
pub fn scaled(p: &SystemParams, amp: f64, rate: f64) -> SystemParams {
    SystemParams {
        kappa: p.kappa / rate,
        kappa_ext: p.kappa_ext / rate,
        gamma: p.gamma / rate,
        g: p.g / rate,
        kerr: p.kerr * amp * amp / rate,
        gain: p.gain / rate,
        gamma_sat: p.gamma_sat * amp * amp / rate,
        omega_d: p.omega_d / rate,
        delta_c: p.delta_c / rate,
        delta_m: p.delta_m / rate,
        gain_absorbed: p.gain_absorbed,
    }
}

fn rate_of(p: &SystemParams) -> f64 {
    [p.kappa, p.gamma, p.g, p.gain.abs(), p.delta_c.abs(), p.delta_m.abs()]
        .into_iter()
        .fold(0.0, f64::max)
}

fn push_unique(out: &mut Vec<[f64; 4]>, x: [f64; 4], tol: f64) {
    let scale = norm(&x).max(1e-12);
    if !out.iter().any(|y| {
        let d = [x[0] - y[0], x[1] - y[1], x[2] - y[2], x[3] - y[3]];
        norm(&d) < tol * scale
    }) {
        out.push(x);
    }
}

fn converged(f: &dyn Fn(&[f64; 4]) -> [f64; 4], x: &[f64; 4]) -> bool {
    norm(&f(x)) / norm(x).max(1e-300) < 1e-11
}

/// Newton from `x0`; when that lands on a known root, retries with the known
/// roots deflated out and polishes the result.
fn seek(
    f: &dyn Fn(&[f64; 4]) -> [f64; 4],
    x0: [f64; 4],
    found: &mut Vec<[f64; 4]>,
    accept: &dyn Fn(&[f64; 4]) -> bool,
) {
    let before = found.len();
    if let Some(x) = newton(f, x0, 200) {
        if converged(f, &x) && accept(&x) {
            push_unique(found, x, 1e-7);
        }
    }
    if found.len() > before || found.is_empty() {
        return;
    }
    let known = found.clone();
    let deflated = |x: &[f64; 4]| {
        let mut fx = f(x);
        for y in &known {
            let d = [x[0] - y[0], x[1] - y[1], x[2] - y[2], x[3] - y[3]];
            let w = 1.0 / d.iter().map(|v| v * v).sum::<f64>() + 1.0;
            fx.iter_mut().for_each(|v| *v *= w);
        }
        fx
    };
    if let Some(x) = newton(&deflated, x0, 200).and_then(|x| newton(f, x, 50)) {
        if converged(f, &x) && accept(&x) {
            push_unique(found, x, 1e-7);
        }
    }
}

/// Passive solutions `(a, m)` in physical amplitudes from at least `starts`
/// Newton runs seeded along the magnon-number axis.
pub fn passive_oracle(p: &SystemParams, eta: f64, starts: usize) -> Vec<(Complex64, Complex64)> {
    let rate = rate_of(p);
    let cav = (p.kappa / 2.0).powi(2) + p.delta_c.powi(2);
    let n0 = eta * eta / cav;
    let amp = n0.sqrt();
    let sp = scaled(p, amp, rate);
    let se = eta / (amp * rate);
    // Power balance bounds the magnon number by 4 eta^2 / (kappa gamma).
    let n_hi = 8.0 * cav / (p.kappa * p.gamma);
    let f = |x: &[f64; 4]| passive_raw(&sp, se, x);
    let mut found: Vec<[f64; 4]> = Vec::new();
    for k in 0..starts {
        let n = 1e-9 * n_hi * 1e9_f64.powf(k as f64 / (starts - 1) as f64);
        // Linear response with the Kerr shift frozen at n.
        let d = sp.gamma / 2.0 + I * (sp.delta_m + sp.kerr * n);
        let c = sp.kappa / 2.0 + I * sp.delta_c;
        let a = se * d / (c * d + sp.g * sp.g);
        let m = -I * sp.g * a / d;
        seek(&f, [a.re, a.im, m.re, m.im], &mut found, &|_| true);
    }
    found
        .into_iter()
        .map(|x| (Complex64::new(x[0], x[1]) * amp, Complex64::new(x[2], x[3]) * amp))
        .collect()
}

/// Active coupled solutions `(a0 > 0, m0, Omega)` from a grid of Newton starts
/// over frequency offset and photon number.
pub fn active_oracle(p: &SystemParams, omega_starts: usize) -> Vec<(f64, Complex64, f64)> {
    let ge = p.effective_gain();
    if !(ge > 0.0) {
        return Vec::new();
    }
    let rate = rate_of(p);
    let amp = (ge / p.gamma_sat).sqrt();
    let sp = scaled(p, amp, rate);
    let g_s = sp.effective_gain();
    let f = |x: &[f64; 4]| active_raw(&sp, x);
    let w_max = sp.delta_m.abs() + 2.0 * sp.g + sp.kerr * (2.0 * g_s / sp.gamma) + 2.0 * g_s + 1.0;
    let mut found: Vec<[f64; 4]> = Vec::new();
    for fa in [0.02, 0.1, 0.3, 0.5, 0.7, 0.9, 0.97, 0.99, 0.997, 0.999, 0.9999] {
        let x = (fa * g_s / sp.gamma_sat).sqrt();
        for k in 0..omega_starts {
            let w = -w_max + 2.0 * w_max * k as f64 / (omega_starts - 1) as f64;
            // Gauge a > 0 and require both modes populated.
            let admissible = |s: &[f64; 4]| s[0] > 1e-6 && s[1].hypot(s[2]) > 1e-6;
            // Seeds from either mode equation.
            let m = (g_s - sp.gamma_sat * x * x + I * w) * x / (I * sp.g);
            seek(&f, [x, m.re, m.im, w], &mut found, &admissible);
            let m = -I * sp.g * x / (sp.gamma / 2.0 + I * (sp.delta_m - w));
            seek(&f, [x, m.re, m.im, w], &mut found, &admissible);
        }
    }
    found
        .into_iter()
        .map(|s| (s[0] * amp, Complex64::new(s[1], s[2]) * amp, s[3] * rate))
        .collect()
}

/// Outcome of integrating a perturbed fixed point.
#[derive(Debug, Clone, Copy)]
pub struct PerturbOutcome {
    pub initial: f64,
    pub final_dev: f64,
}

impl PerturbOutcome {
    pub fn decayed(&self) -> bool {
        self.final_dev < self.initial
    }

    pub fn grew(&self) -> bool {
        self.final_dev >= 10.0 * self.initial
    }
}

fn rk4(f: &dyn Fn(&[Complex64; 2]) -> [Complex64; 2], z: [Complex64; 2], h: f64) -> [Complex64; 2] {
    let add = |z: &[Complex64; 2], k: &[Complex64; 2], s: f64| [z[0] + k[0] * s, z[1] + k[1] * s];
    let k1 = f(&z);
    let k2 = f(&add(&z, &k1, h / 2.0));
    let k3 = f(&add(&z, &k2, h / 2.0));
    let k4 = f(&add(&z, &k3, h));
    [
        z[0] + (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]) * (h / 6.0),
        z[1] + (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]) * (h / 6.0),
    ]
}

/// Distance from `z` to the orbit `e^{i theta} z0`.
fn phase_free_distance(z: &[Complex64; 2], z0: &[Complex64; 2]) -> f64 {
    let nz = z[0].norm_sqr() + z[1].norm_sqr();
    let n0 = z0[0].norm_sqr() + z0[1].norm_sqr();
    let overlap = (z0[0].conj() * z[0] + z0[1].conj() * z[1]).norm();
    (nz + n0 - 2.0 * overlap).max(0.0).sqrt()
}

fn plain_distance(z: &[Complex64; 2], z0: &[Complex64; 2]) -> f64 {
    ((z[0] - z0[0]).norm_sqr() + (z[1] - z0[1]).norm_sqr()).sqrt()
}

/// Perturbs a stationary state by `rel` of its norm along `dir` and integrates
/// for `duration` us. `omega` is the frame frequency for the active system;
/// `eta` selects the passive system when given.
pub fn perturb_and_integrate(
    p: &SystemParams,
    eta: Option<f64>,
    a0: Complex64,
    m0: Complex64,
    omega: f64,
    dir: [Complex64; 2],
    rel: f64,
    duration: f64,
) -> PerturbOutcome {
    let amp = (a0.norm_sqr() + m0.norm_sqr()).sqrt();
    let rate = rate_of(p);
    let sp = scaled(p, amp, rate);
    let z0 = [a0 / amp, m0 / amp];
    let dn = (dir[0].norm_sqr() + dir[1].norm_sqr()).sqrt();
    let mut z = [z0[0] + dir[0] * (rel / dn), z0[1] + dir[1] * (rel / dn)];
    let w = omega / rate;
    let f = |z: &[Complex64; 2]| -> [Complex64; 2] {
        let (a, m) = (z[0], z[1]);
        let dm = -(sp.gamma / 2.0 + I * (sp.delta_m - w)) * m - I * sp.g * a - I * sp.kerr * m.norm_sqr() * m;
        let da = match eta {
            Some(e) => -(sp.kappa / 2.0 + I * sp.delta_c) * a - I * sp.g * m + e / (amp * rate),
            None => (sp.effective_gain() - sp.gamma_sat * a.norm_sqr() + I * w) * a - I * sp.g * m,
        };
        [da, dm]
    };
    let dist = |z: &[Complex64; 2]| match eta {
        Some(_) => plain_distance(z, &z0),
        None => phase_free_distance(z, &z0),
    };
    let initial = dist(&z);
    let t_end = duration * rate;
    let h = 2e-3;
    let n = (t_end / h).ceil() as usize;
    let h = t_end / n as f64;
    for _ in 0..n {
        z = rk4(&f, z, h);
        if !(z[0].is_finite() && z[1].is_finite()) {
            return PerturbOutcome {
                initial,
                final_dev: f64::INFINITY,
            };
        }
    }
    PerturbOutcome {
        initial,
        final_dev: dist(&z),
    }
}

/// Relative distance between two complex numbers.
pub fn rel_diff(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}
