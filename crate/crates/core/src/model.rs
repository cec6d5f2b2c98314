//! Coupled photon-magnon equations of motion.
//!
//! Internal units: rates in rad/us, time in us. Amplitudes are square roots of
//! quanta and may be rescaled with [`rescale`] so that the working occupation is
//! of order one. SI quantities (W, rad/s) only appear in the conversion helpers.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Internal time unit expressed in seconds.
pub const TIME_UNIT_S: f64 = 1.0e-6;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Angular rate in rad/us from a frequency `nu` given in MHz (the "x/2pi" form).
pub fn mhz(nu: f64) -> f64 {
    2.0 * std::f64::consts::PI * nu
}

/// Angular rate in rad/us from a frequency given in Hz.
pub fn hz(nu: f64) -> f64 {
    mhz(nu * 1.0e-6)
}

/// Inverse of [`mhz`].
pub fn to_mhz(rate: f64) -> f64 {
    rate / (2.0 * std::f64::consts::PI)
}

pub fn rate_to_si(rate: f64) -> f64 {
    rate / TIME_UNIT_S
}

pub fn rate_from_si(rate_si: f64) -> f64 {
    rate_si * TIME_UNIT_S
}

/// Rate constants and detunings of the two-mode model, all in rad/us.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub kappa: f64,
    pub kappa_ext: f64,
    pub gamma: f64,
    pub g: f64,
    /// Magnon self-Kerr coefficient, rad/us per quantum.
    pub kerr: f64,
    /// Linear gain. Effective (G - kappa/2) when `gain_absorbed` is set.
    pub gain: f64,
    pub gain_absorbed: bool,
    /// Gain saturation, rad/us per photon.
    pub gamma_sat: f64,
    pub omega_d: f64,
    pub delta_c: f64,
    pub delta_m: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            kappa: 0.0,
            kappa_ext: 0.0,
            gamma: 0.0,
            g: 0.0,
            kerr: 0.0,
            gain: 0.0,
            gain_absorbed: true,
            gamma_sat: 0.0,
            omega_d: 0.0,
            delta_c: 0.0,
            delta_m: 0.0,
        }
    }
}

impl SystemParams {
    /// Shared parameters of the passive and active stability maps (gain and
    /// drive are set per grid cell).
    pub fn phase_map_reference() -> Self {
        let kappa = mhz(1.5);
        Self {
            kappa,
            kappa_ext: kappa / 2.0,
            gamma: mhz(16.5),
            g: mhz(30.0),
            kerr: hz(9.8e-9),
            gamma_sat: hz(2.0e-6),
            omega_d: mhz(3.0e3),
            ..Self::default()
        }
    }

    /// Active-device parameters obtained from matching the field sweeps.
    pub fn active_fitted() -> Self {
        Self {
            kappa: mhz(1.5),
            gamma: mhz(10.3),
            g: mhz(25.0),
            kerr: hz(3.2e-6),
            gain: mhz(15.45),
            gain_absorbed: true,
            gamma_sat: hz(0.8e-6),
            omega_d: mhz(3.2e3),
            ..Self::default()
        }
    }

    /// Gain with the photon loss folded in.
    pub fn effective_gain(&self) -> f64 {
        if self.gain_absorbed {
            self.gain
        } else {
            self.gain - self.kappa / 2.0
        }
    }

    /// Copy with `gain` set to the given effective gain.
    pub fn with_effective_gain(mut self, g_eff: f64) -> Self {
        self.gain = g_eff;
        self.gain_absorbed = true;
        self
    }

    /// Largest magnitude among the linear rates; used as the characteristic scale.
    pub fn rate_scale(&self) -> f64 {
        [
            self.kappa,
            self.gamma,
            self.g,
            self.effective_gain(),
            self.delta_c,
            self.delta_m,
        ]
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.kappa,
            self.kappa_ext,
            self.gamma,
            self.g,
            self.kerr,
            self.gain,
            self.gamma_sat,
            self.omega_d,
            self.delta_c,
            self.delta_m,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite parameter".into()));
        }
        for (name, v) in [
            ("kappa", self.kappa),
            ("kappa_ext", self.kappa_ext),
            ("gamma", self.gamma),
            ("gamma_sat", self.gamma_sat),
            ("omega_d", self.omega_d),
        ] {
            if v < 0.0 {
                return Err(Error::Domain(format!("{name} must be non-negative")));
            }
        }
        if self.kappa_ext > self.kappa {
            return Err(Error::Domain("kappa_ext exceeds kappa".into()));
        }
        Ok(())
    }

    /// Checks for the self-driven configuration, where the cavity defines the frame.
    pub fn validate_active(&self) -> Result<()> {
        self.validate()?;
        if self.delta_c != 0.0 {
            return Err(Error::Domain("active configuration requires delta_c = 0".into()));
        }
        Ok(())
    }
}

/// Photon and magnon amplitudes at time `t` (us).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeState {
    pub a: Complex64,
    pub m: Complex64,
    pub t: f64,
}

impl ModeState {
    pub fn new(a: Complex64, m: Complex64) -> Self {
        Self { a, m, t: 0.0 }
    }

    pub fn zero() -> Self {
        Self::new(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
    }

    pub fn photons(&self) -> f64 {
        self.a.norm_sqr()
    }

    pub fn magnons(&self) -> f64 {
        self.m.norm_sqr()
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.m.is_finite()
    }

    pub fn max_amplitude(&self) -> f64 {
        self.a.norm().max(self.m.norm())
    }
}

/// Time derivative of a [`ModeState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub da: Complex64,
    pub dm: Complex64,
}

/// Coherent drive of the passive cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    /// Input power, W. `None` when the drive was specified directly by `eta`.
    pub power_in: Option<f64>,
    /// Drive amplitude entering the photon equation, quanta^1/2 per us.
    pub eta: f64,
    /// Incident photon flux, (quanta/s)^1/2. `None` when the drive was specified
    /// directly by `eta`.
    pub s_in: Option<f64>,
}

impl DriveSpec {
    pub fn from_eta(eta: f64) -> Self {
        Self {
            power_in: None,
            eta,
            s_in: None,
        }
    }

    pub fn none() -> Self {
        Self {
            power_in: Some(0.0),
            eta: 0.0,
            s_in: Some(0.0),
        }
    }
}

/// Maps input power to drive amplitude through the external coupling.
pub fn eta_from_power(power_in: f64, params: &SystemParams) -> Result<DriveSpec> {
    if !(power_in >= 0.0) {
        return Err(Error::Domain(format!("input power must be >= 0, got {power_in}")));
    }
    if power_in == 0.0 {
        return Ok(DriveSpec::none());
    }
    if !(params.omega_d > 0.0) {
        return Err(Error::Domain("omega_d must be positive to convert power".into()));
    }
    let s_in = (power_in / (HBAR * rate_to_si(params.omega_d))).sqrt();
    let eta_si = rate_to_si(params.kappa_ext).sqrt() * s_in;
    Ok(DriveSpec {
        power_in: Some(power_in),
        eta: rate_from_si(eta_si),
        s_in: Some(s_in),
    })
}

fn check_state(state: &ModeState) -> Result<()> {
    if state.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericOverflow("mode state"))
    }
}

fn magnon_rhs(a: Complex64, m: Complex64, params: &SystemParams) -> Complex64 {
    -(params.gamma / 2.0 + I * params.delta_m) * m - I * params.g * a - I * params.kerr * m.norm_sqr() * m
}

/// Externally driven cavity coupled to the Kerr magnon, in the drive frame.
pub fn rhs_passive(state: &ModeState, params: &SystemParams, drive: &DriveSpec) -> Result<Derivative> {
    check_state(state)?;
    let (a, m) = (state.a, state.m);
    let da = -(params.kappa / 2.0 + I * params.delta_c) * a - I * params.g * m + drive.eta;
    Ok(Derivative {
        da,
        dm: magnon_rhs(a, m, params),
    })
}

/// Self-oscillating cavity (van der Pol gain and saturation) coupled to the magnon,
/// in the frame of the bare oscillation.
pub fn rhs_active(state: &ModeState, params: &SystemParams) -> Result<Derivative> {
    check_state(state)?;
    let (a, m) = (state.a, state.m);
    let da = (params.effective_gain() - params.gamma_sat * a.norm_sqr()) * a - I * params.g * m;
    Ok(Derivative {
        da,
        dm: magnon_rhs(a, m, params),
    })
}

/// Amplitude rescaling `a -> a/s`. Nonlinear coefficients pick up `s^2`, the drive
/// `1/s`; linear rates are untouched.
pub fn rescale(
    state: &ModeState,
    params: &SystemParams,
    drive: &DriveSpec,
    s: f64,
) -> Result<(ModeState, SystemParams, DriveSpec)> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("scale must be positive, got {s}")));
    }
    let state2 = ModeState {
        a: state.a / s,
        m: state.m / s,
        t: state.t,
    };
    let params2 = SystemParams {
        kerr: params.kerr * s * s,
        gamma_sat: params.gamma_sat * s * s,
        ..*params
    };
    let drive2 = DriveSpec {
        eta: drive.eta / s,
        ..*drive
    };
    Ok((state2, params2, drive2))
}

/// Parameters only (used by the solvers, which never carry a state).
pub fn rescale_params(params: &SystemParams, s: f64) -> SystemParams {
    SystemParams {
        kerr: params.kerr * s * s,
        gamma_sat: params.gamma_sat * s * s,
        ..*params
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn quiescent_passive_is_at_rest() {
        let p = SystemParams::phase_map_reference();
        let d = rhs_passive(&ModeState::zero(), &p, &DriveSpec::from_eta(0.0)).unwrap();
        assert_eq!(d.da, c(0.0, 0.0));
        assert_eq!(d.dm, c(0.0, 0.0));
    }

    #[test]
    fn drive_enters_photon_mode_only() {
        let p = SystemParams::phase_map_reference();
        let d = rhs_passive(&ModeState::zero(), &p, &DriveSpec::from_eta(3.5)).unwrap();
        assert_eq!(d.da, c(3.5, 0.0));
        assert_eq!(d.dm, c(0.0, 0.0));
    }

    #[test]
    fn decoupled_linear_cavity() {
        let p = SystemParams {
            kappa: 2.0,
            delta_c: 0.7,
            gamma: 1.0,
            ..SystemParams::default()
        };
        let a = c(0.3, -1.2);
        let d = rhs_passive(&ModeState::new(a, c(0.0, 0.0)), &p, &DriveSpec::from_eta(0.4)).unwrap();
        let expected = -(c(1.0, 0.7)) * a + 0.4;
        assert_relative_eq!(d.da.re, expected.re, epsilon = 1e-15);
        assert_relative_eq!(d.da.im, expected.im, epsilon = 1e-15);
        assert_eq!(d.dm, c(0.0, 0.0));
    }

    #[test]
    fn non_finite_state_is_rejected() {
        let p = SystemParams::phase_map_reference();
        let s = ModeState::new(c(f64::NAN, 0.0), c(0.0, 0.0));
        assert!(matches!(
            rhs_passive(&s, &p, &DriveSpec::from_eta(0.0)),
            Err(Error::NumericOverflow(_))
        ));
        assert!(matches!(rhs_active(&s, &p), Err(Error::NumericOverflow(_))));
    }

    #[test]
    fn bare_vdp_amplitude_is_stationary() {
        let p = SystemParams {
            gain: 3.0,
            gamma_sat: 0.5,
            ..SystemParams::default()
        };
        let a = c((3.0_f64 / 0.5).sqrt(), 0.0);
        let d = rhs_active(&ModeState::new(a, c(0.0, 0.0)), &p).unwrap();
        assert!(d.da.norm() < 1e-14);
    }

    #[test]
    fn active_photon_sees_magnon_through_coupling() {
        let p = SystemParams {
            g: 2.0,
            gain: 1.0,
            gamma_sat: 1.0,
            ..SystemParams::default()
        };
        let m0 = c(0.4, 0.9);
        let d = rhs_active(&ModeState::new(c(0.0, 0.0), m0), &p).unwrap();
        let expected = -I * 2.0 * m0;
        assert_relative_eq!(d.da.re, expected.re, epsilon = 1e-15);
        assert_relative_eq!(d.da.im, expected.im, epsilon = 1e-15);
    }

    #[test]
    fn raw_gain_subtracts_half_kappa() {
        let p = SystemParams {
            kappa: 4.0,
            gain: 5.0,
            gain_absorbed: false,
            ..SystemParams::default()
        };
        assert_eq!(p.effective_gain(), 3.0);
        assert_eq!(p.with_effective_gain(3.0).effective_gain(), 3.0);
    }

    #[test]
    fn power_to_drive() {
        let kappa = mhz(1.5);
        let p = SystemParams {
            kappa,
            kappa_ext: kappa / 2.0,
            omega_d: mhz(3.0e3),
            ..SystemParams::default()
        };
        let d = eta_from_power(1.0e-6, &p).unwrap();
        // 1e-6 W / (hbar * 2pi * 3e9 Hz), evaluated by hand.
        let flux = 1.0e-6 / (HBAR * 2.0 * std::f64::consts::PI * 3.0e9);
        let s_in = d.s_in.unwrap();
        assert_relative_eq!(s_in, flux.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(s_in, 7.09e8, max_relative = 2e-3);
        let eta_si = (2.0 * std::f64::consts::PI * 0.75e6_f64).sqrt() * s_in;
        assert_relative_eq!(d.eta, eta_si * 1e-6, max_relative = 1e-12);

        let d2 = eta_from_power(2.0e-6, &p).unwrap();
        assert_relative_eq!(d2.eta / d.eta, 2.0_f64.sqrt(), max_relative = 1e-12);

        assert_eq!(eta_from_power(0.0, &p).unwrap().eta, 0.0);
        assert!(matches!(eta_from_power(-1.0, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn rescale_identity_and_kerr_scaling() {
        let p = SystemParams::phase_map_reference();
        let s0 = ModeState::new(c(1.0, 2.0), c(-0.5, 0.25));
        let drive = DriveSpec::from_eta(5.0);
        let (s1, p1, d1) = rescale(&s0, &p, &drive, 1.0).unwrap();
        assert_eq!(s1, s0);
        assert_eq!(p1, p);
        assert_eq!(d1, drive);

        let (_, p3, _) = rescale(&s0, &p, &drive, 1.0e3).unwrap();
        assert_relative_eq!(p3.kerr, hz(9.8e-3), max_relative = 1e-12);

        assert!(rescale(&s0, &p, &drive, 0.0).is_err());
        assert!(rescale(&s0, &p, &drive, -2.0).is_err());
    }

    #[test]
    fn params_validation() {
        let mut p = SystemParams::phase_map_reference();
        assert!(p.validate().is_ok());
        p.kappa_ext = 2.0 * p.kappa;
        assert!(p.validate().is_err());
        let mut q = SystemParams::active_fitted();
        assert!(q.validate_active().is_ok());
        q.delta_c = 1.0;
        assert!(q.validate_active().is_err());
    }
}
