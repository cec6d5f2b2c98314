//! Fixed-step RK4 integration and the hysteretic detuning sweep.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{rhs_active, rhs_passive, Derivative, DriveSpec, ModeState, SystemParams};
use crate::spectral::{phase_slope_offset, PhaseSlope};

/// Amplitude cap, in units of the natural occupation scale, beyond which a
/// trajectory is declared divergent.
pub const DIVERGENCE_CAP: f64 = 1.0e6;

/// Which set of equations to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Equations {
    Active,
    Passive { drive: DriveSpec },
}

impl Equations {
    fn rhs(&self, state: &ModeState, params: &SystemParams) -> Result<Derivative> {
        match self {
            Equations::Active => rhs_active(state, params),
            Equations::Passive { drive } => rhs_passive(state, params, drive),
        }
    }

    /// Square root of the occupation the amplitudes naturally settle to.
    fn amplitude_scale(&self, params: &SystemParams) -> f64 {
        let n = match self {
            Equations::Active => {
                if params.gamma_sat > 0.0 {
                    params.effective_gain() / params.gamma_sat
                } else {
                    0.0
                }
            }
            Equations::Passive { drive } => {
                let d = (params.kappa / 2.0).powi(2) + params.delta_c.powi(2);
                if d > 0.0 {
                    drive.eta * drive.eta / d
                } else {
                    0.0
                }
            }
        };
        if n > 0.0 && n.is_finite() {
            n.sqrt()
        } else {
            1.0
        }
    }
}

/// Uniformly sampled trajectory, one sample per step including the initial one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    /// Sample instants, us.
    pub times: Vec<f64>,
    pub a_samples: Vec<Complex64>,
    pub m_samples: Vec<Complex64>,
    /// Step, us.
    pub dt: f64,
    /// Magnon detuning the segment was integrated with, rad/us.
    pub detuning_used: f64,
    pub final_state: ModeState,
}

impl TrajectorySegment {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the first sample at least `t_drop` after the segment start.
    pub fn drop_index(&self, t_drop: f64) -> usize {
        let t0 = self.times.first().copied().unwrap_or(0.0);
        let tol = 1.0e-6 * self.dt;
        self.times.partition_point(|t| t - t0 < t_drop - tol)
    }
}

fn step_count(duration: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::Domain(format!("duration must be >= 0, got {duration}")));
    }
    let n = duration / dt;
    let k = n.round();
    if (n - k).abs() > 1.0e-6 * n.max(1.0) {
        return Err(Error::Domain(format!(
            "duration {duration} is not an integer multiple of dt {dt}"
        )));
    }
    Ok(k as usize)
}

fn axpy(state: &ModeState, d: &Derivative, h: f64) -> ModeState {
    ModeState {
        a: state.a + d.da * h,
        m: state.m + d.dm * h,
        t: state.t + h,
    }
}

fn rk4_step(eq: &Equations, s: &ModeState, p: &SystemParams, dt: f64) -> Result<ModeState> {
    let k1 = eq.rhs(s, p)?;
    let k2 = eq.rhs(&axpy(s, &k1, dt / 2.0), p)?;
    let k3 = eq.rhs(&axpy(s, &k2, dt / 2.0), p)?;
    let k4 = eq.rhs(&axpy(s, &k3, dt), p)?;
    Ok(ModeState {
        a: s.a + (k1.da + 2.0 * k2.da + 2.0 * k3.da + k4.da) * (dt / 6.0),
        m: s.m + (k1.dm + 2.0 * k2.dm + 2.0 * k3.dm + k4.dm) * (dt / 6.0),
        t: s.t + dt,
    })
}

/// Integrates `duration` us with classical RK4 at step `dt`, recording every step.
pub fn integrate_segment(
    initial: &ModeState,
    params: &SystemParams,
    eq: &Equations,
    duration: f64,
    dt: f64,
) -> Result<TrajectorySegment> {
    let n = step_count(duration, dt)?;
    if !initial.is_finite() {
        return Err(Error::NumericOverflow("initial state"));
    }
    let cap = DIVERGENCE_CAP * eq.amplitude_scale(params);
    let t0 = initial.t;
    let mut times = Vec::with_capacity(n + 1);
    let mut a_samples = Vec::with_capacity(n + 1);
    let mut m_samples = Vec::with_capacity(n + 1);
    times.push(t0);
    a_samples.push(initial.a);
    m_samples.push(initial.m);
    let mut s = *initial;
    for step in 1..=n {
        let next = rk4_step(eq, &s, params, dt);
        let diverged = |magnitude: f64| Error::Divergence {
            step,
            time: t0 + step as f64 * dt,
            magnitude,
        };
        s = match next {
            Ok(ns) if ns.is_finite() && ns.max_amplitude() <= cap => ns,
            Ok(ns) => return Err(diverged(ns.max_amplitude())),
            Err(_) => return Err(diverged(f64::INFINITY)),
        };
        // Avoid drift from repeated addition of dt.
        s.t = t0 + step as f64 * dt;
        times.push(s.t);
        a_samples.push(s.a);
        m_samples.push(s.m);
    }
    Ok(TrajectorySegment {
        times,
        a_samples,
        m_samples,
        dt,
        detuning_used: params.delta_m,
        final_state: s,
    })
}

/// Small real photon kick that lets the self-oscillation start.
pub fn default_seed(params: &SystemParams) -> ModeState {
    let n = if params.gamma_sat > 0.0 && params.effective_gain() > 0.0 {
        params.effective_gain() / params.gamma_sat
    } else {
        1.0
    };
    ModeState::new(Complex64::new(1.0e-3 * n.sqrt(), 0.0), Complex64::new(0.0, 0.0))
}

/// Stepwise magnon-detuning sweep of the active system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepProtocol {
    /// Nominal magnon detunings, rad/us, in sweep order.
    pub detuning_list: Vec<f64>,
    /// us
    pub dt: f64,
    /// us
    pub t_total: f64,
    /// us
    pub t_drop: f64,
    /// Shift each step's detuning by the previous step's frequency offset.
    pub memory_detuning: bool,
    /// Start each step from the previous step's final state.
    pub memory_state: bool,
    pub fit_fraction: f64,
    /// Defaults to [`default_seed`].
    pub initial_state: Option<ModeState>,
}

impl SweepProtocol {
    pub fn new(detuning_list: Vec<f64>) -> Self {
        Self {
            detuning_list,
            dt: 1.0e-3,
            t_total: 8.0,
            t_drop: 3.0,
            memory_detuning: true,
            memory_state: true,
            fit_fraction: 0.5,
            initial_state: None,
        }
    }

    /// `n` evenly spaced detunings from `from` to `to` inclusive.
    pub fn linear(from: f64, to: f64, n: usize) -> Self {
        let list = match n {
            0 => vec![],
            1 => vec![from],
            _ => (0..n)
                .map(|k| from + (to - from) * k as f64 / (n - 1) as f64)
                .collect(),
        };
        Self::new(list)
    }

    pub fn validate(&self) -> Result<()> {
        if self.detuning_list.is_empty() {
            return Err(Error::Config("detuning list is empty".into()));
        }
        if self.detuning_list.iter().any(|d| !d.is_finite()) {
            return Err(Error::Config("detuning list has non-finite entries".into()));
        }
        if !(self.dt > 0.0 && self.dt < self.t_drop && self.t_drop < self.t_total) {
            return Err(Error::Config(format!(
                "need 0 < dt < t_drop < t_total, got dt={}, t_drop={}, t_total={}",
                self.dt, self.t_drop, self.t_total
            )));
        }
        if !(self.fit_fraction > 0.0 && self.fit_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "fit_fraction must lie in (0, 1], got {}",
                self.fit_fraction
            )));
        }
        if let Some(s) = &self.initial_state {
            if !s.is_finite() {
                return Err(Error::Config("initial state is not finite".into()));
            }
        }
        step_count(self.t_total, self.dt).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

/// One row of a sweep: nominal and effective detuning with the extracted offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepStep {
    pub index: usize,
    /// rad/us
    pub delta_nominal: f64,
    /// rad/us
    pub delta_eff: f64,
    /// Frequency offset of the oscillation, rad/us. Positive is a blue shift.
    pub omega: f64,
    pub confidence: f64,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub steps: Vec<SweepStep>,
    pub segments: Vec<TrajectorySegment>,
    /// Set when the sweep stopped early; `steps` holds the completed part.
    pub error: Option<Error>,
}

impl SweepResult {
    pub fn omegas(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.omega).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.error.is_none()
    }
}

/// Runs the sweep step by step. A failing step ends the sweep; everything before
/// it is returned along with the error.
pub fn run_sweep(protocol: &SweepProtocol, params: &SystemParams) -> Result<SweepResult> {
    protocol.validate()?;
    params.validate_active()?;
    let seed = protocol.initial_state.unwrap_or_else(|| default_seed(params));
    let mut result = SweepResult {
        steps: Vec::with_capacity(protocol.detuning_list.len()),
        segments: Vec::with_capacity(protocol.detuning_list.len()),
        error: None,
    };
    let mut omega_prev = 0.0;
    let mut state = seed;
    for (k, &delta0) in protocol.detuning_list.iter().enumerate() {
        let delta_eff = if protocol.memory_detuning {
            delta0 - omega_prev
        } else {
            delta0
        };
        let p = SystemParams {
            delta_m: delta_eff,
            ..*params
        };
        let start = if protocol.memory_state {
            ModeState { t: 0.0, ..state }
        } else {
            ModeState { t: 0.0, ..seed }
        };
        let seg = match integrate_segment(&start, &p, &Equations::Active, protocol.t_total, protocol.dt) {
            Ok(seg) => seg,
            Err(e) => {
                result.error = Some(e);
                break;
            }
        };
        let PhaseSlope { omega, confidence, .. } =
            match phase_slope_offset(&seg, protocol.t_drop, protocol.fit_fraction) {
                Ok(ps) => ps,
                Err(e) => {
                    result.error = Some(e);
                    break;
                }
            };
        state = seg.final_state;
        omega_prev = omega;
        result.steps.push(SweepStep {
            index: k,
            delta_nominal: delta0,
            delta_eff,
            omega,
            confidence,
            low_confidence: PhaseSlope::is_low_confidence(confidence),
        });
        result.segments.push(seg);
    }
    Ok(result)
}
