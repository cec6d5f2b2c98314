//! Linear stability of fixed points in the doubled basis `(da, da*, dm, dm*)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{eigenvalues, SquareMatrix};
use crate::model::SystemParams;
use crate::steady::{FixedPoint, FixedPointKind};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative band around zero margin reported as marginal.
pub const MARGINAL_TOL: f64 = 1.0e-6;

/// Ratio above which the discarded neutral eigenvalue is considered suspicious.
pub const NEUTRAL_TOL: f64 = 1.0e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// All four eigenvalues, rad/us.
    pub eigenvalues: Vec<Complex64>,
    /// Neutral phase eigenvalue removed for self-oscillating solutions.
    pub discarded: Option<Complex64>,
    pub is_stable: bool,
    /// Largest real part among retained eigenvalues, rad/us.
    pub margin: f64,
    pub class: Stability,
    /// Set when the discarded eigenvalue is not small against the retained ones.
    pub neutral_mode_suspect: bool,
}

/// Fills the conjugate rows of a doubled-basis Jacobian from the (da, dm) rows.
fn doubled(row_a: [Complex64; 4], row_m: [Complex64; 4]) -> SquareMatrix {
    // Conjugate row: d/d(x*) of the conjugated equation swaps each pair.
    let conj_row = |r: [Complex64; 4]| [r[1].conj(), r[0].conj(), r[3].conj(), r[2].conj()];
    SquareMatrix::from_rows(&[
        row_a.to_vec(),
        conj_row(row_a).to_vec(),
        row_m.to_vec(),
        conj_row(row_m).to_vec(),
    ])
}

pub fn jacobian_passive(fp: &FixedPoint, params: &SystemParams) -> SquareMatrix {
    let m0 = fp.m0;
    let k = params.kerr;
    let row_a = [
        -(params.kappa / 2.0 + I * params.delta_c),
        ZERO,
        -I * params.g,
        ZERO,
    ];
    let row_m = [
        -I * params.g,
        ZERO,
        -(params.gamma / 2.0 + I * params.delta_m) - 2.0 * I * k * m0.norm_sqr(),
        -I * k * m0 * m0,
    ];
    doubled(row_a, row_m)
}

/// Jacobian in the frame co-rotating with the solution's frequency offset.
pub fn jacobian_active(fp: &FixedPoint, params: &SystemParams) -> SquareMatrix {
    let (a0, m0, w) = (fp.a0, fp.m0, fp.omega_off);
    let gs = params.gamma_sat;
    let k = params.kerr;
    let row_a = [
        params.effective_gain() + I * w - 2.0 * gs * a0.norm_sqr(),
        -gs * a0 * a0,
        -I * params.g,
        ZERO,
    ];
    let row_m = [
        -I * params.g,
        ZERO,
        -(params.gamma / 2.0 + I * (params.delta_m - w)) - 2.0 * I * k * m0.norm_sqr(),
        -I * k * m0 * m0,
    ];
    doubled(row_a, row_m)
}

pub fn jacobian(fp: &FixedPoint, params: &SystemParams) -> SquareMatrix {
    match fp.kind {
        FixedPointKind::Passive => jacobian_passive(fp, params),
        FixedPointKind::Active => jacobian_active(fp, params),
    }
}

/// Classifies `fp` by the sign of the largest retained real part.
///
/// Active solutions always drop the eigenvalue of smallest modulus, which is the
/// free phase of the self-oscillation on a genuine limit cycle.
pub fn classify(fp: &FixedPoint, params: &SystemParams) -> Result<StabilityReport> {
    let j = jacobian(fp, params);
    let mut eig = eigenvalues(&j)?;
    eig.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut retained = eig.clone();
    let mut discarded = None;
    if fp.kind == FixedPointKind::Active {
        let idx = retained
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.norm().total_cmp(&b.norm()))
            .map(|(i, _)| i)
            .expect("four eigenvalues");
        discarded = Some(retained.remove(idx));
    }
    let margin = retained.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let scale = params.rate_scale();
    let class = if margin.abs() < MARGINAL_TOL * scale {
        Stability::Marginal
    } else if margin < 0.0 {
        Stability::Stable
    } else {
        Stability::Unstable
    };
    let max_retained = retained.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let neutral_mode_suspect =
        discarded.is_some_and(|d| fp.coupled && d.norm() >= NEUTRAL_TOL * max_retained);
    Ok(StabilityReport {
        eigenvalues: eig,
        discarded,
        is_stable: margin < 0.0,
        margin,
        class,
        neutral_mode_suspect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mhz, DriveSpec};
    use crate::steady::{active_fixed_points, passive_fixed_points};

    fn contains(eig: &[Complex64], z: Complex64, tol: f64) -> bool {
        eig.iter().any(|e| (e - z).norm() < tol)
    }

    #[test]
    fn uncoupled_linear_passive_spectrum() {
        let p = SystemParams {
            kappa: 2.0,
            gamma: 3.0,
            delta_c: 0.5,
            delta_m: -1.5,
            ..SystemParams::default()
        };
        let fp = passive_fixed_points(&p, &DriveSpec::from_eta(1.0)).unwrap()[0];
        let r = classify(&fp, &p).unwrap();
        for z in [
            Complex64::new(-1.0, 0.5),
            Complex64::new(-1.0, -0.5),
            Complex64::new(-1.5, 1.5),
            Complex64::new(-1.5, -1.5),
        ] {
            assert!(contains(&r.eigenvalues, z, 1e-12), "{z} missing from {:?}", r.eigenvalues);
        }
        assert!(r.is_stable);
    }

    #[test]
    fn beam_splitter_spectrum_without_magnons() {
        let p = SystemParams {
            kappa: 1.0,
            gamma: 2.0,
            g: 3.0,
            kerr: 5.0,
            ..SystemParams::default()
        };
        let fp = passive_fixed_points(&p, &DriveSpec::from_eta(0.0)).unwrap()[0];
        let r = classify(&fp, &p).unwrap();
        // Eigenvalues of [[-1/2, -3i], [-3i, -1]] and its conjugate.
        let tr = Complex64::new(-1.5, 0.0);
        let det = Complex64::new(0.5, 0.0) + 9.0;
        let disc = (tr * tr / 4.0 - det).sqrt();
        for z in [tr / 2.0 + disc, tr / 2.0 - disc] {
            assert!(contains(&r.eigenvalues, z, 1e-12));
            assert!(contains(&r.eigenvalues, z.conj(), 1e-12));
        }
    }

    #[test]
    fn bare_vdp_neutral_and_amplitude_modes() {
        let p = SystemParams {
            g: 0.0,
            ..SystemParams::active_fitted()
        };
        let fp = active_fixed_points(&p).unwrap()[0];
        let r = classify(&fp, &p).unwrap();
        let g = p.effective_gain();
        assert!(contains(&r.eigenvalues, Complex64::new(0.0, 0.0), 1e-9 * g));
        assert!(contains(&r.eigenvalues, Complex64::new(-2.0 * g, 0.0), 1e-9 * g));
        assert!(r.discarded.unwrap().norm() < 1e-9 * g);
        assert!(r.is_stable);
        assert_eq!(r.class, Stability::Stable);
    }

    #[test]
    fn fitted_bistable_is_two_stable_one_unstable() {
        let p = SystemParams {
            delta_m: mhz(-46.4),
            ..SystemParams::active_fitted()
        };
        let fps = active_fixed_points(&p).unwrap();
        let reports: Vec<_> = fps.iter().map(|fp| classify(fp, &p).unwrap()).collect();
        let stable = reports.iter().filter(|r| r.class == Stability::Stable).count();
        let unstable = reports.iter().filter(|r| r.class == Stability::Unstable).count();
        assert_eq!((stable, unstable), (2, 1), "{reports:?}");
        // The saddle sits on the branch with the largest A (fewest photons).
        let saddle = (0..fps.len())
            .max_by(|&i, &j| fps[i].aux_a.unwrap().total_cmp(&fps[j].aux_a.unwrap()))
            .unwrap();
        assert!(!reports[saddle].is_stable);
        for r in &reports {
            assert!(!r.neutral_mode_suspect, "{r:?}");
        }
    }

    #[test]
    fn spectrum_closed_under_conjugation() {
        let p = SystemParams {
            delta_m: mhz(-30.0),
            ..SystemParams::active_fitted()
        };
        for fp in active_fixed_points(&p).unwrap() {
            let r = classify(&fp, &p).unwrap();
            let scale = r.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
            for z in &r.eigenvalues {
                assert!(contains(&r.eigenvalues, z.conj(), 1e-8 * scale));
            }
        }
    }
}
