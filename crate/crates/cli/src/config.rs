//! JSON run configurations. Every physical quantity carries its unit in the key
//! name and unknown keys are rejected.

use std::path::{Path, PathBuf};

use magpol::calib::Coupling;
use magpol::dynamics::SweepProtocol;
use magpol::model::{hz, mhz, DriveSpec, ModeState, SystemParams};
use magpol::phasemap::{n0_to_drive_passive, AxisRange, GridSpec, SystemKind, XAxis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[cfg(test)]
pub fn parse<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Input(format!("at '{path}': {}", e.into_inner()))
    })
}

fn check_version(v: u32) -> Result<(), CliError> {
    if v == FORMAT_VERSION {
        Ok(())
    } else {
        Err(CliError::Input(format!(
            "at 'format_version': unsupported version {v}, expected {FORMAT_VERSION}"
        )))
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default)]
    pub kappa_mhz_over_2pi: f64,
    /// Defaults to half of kappa.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_ext_mhz_over_2pi: Option<f64>,
    pub gamma_mhz_over_2pi: f64,
    pub g_mhz_over_2pi: f64,
    #[serde(default)]
    pub kerr_hz_over_2pi: f64,
    #[serde(default)]
    pub gain_mhz_over_2pi: f64,
    #[serde(default = "yes")]
    pub gain_absorbed: bool,
    #[serde(default)]
    pub gamma_sat_hz_over_2pi: f64,
    #[serde(default)]
    pub omega_d_ghz_over_2pi: f64,
    #[serde(default)]
    pub delta_c_mhz_over_2pi: f64,
    #[serde(default)]
    pub delta_m_mhz_over_2pi: f64,
}

impl SystemConfig {
    pub fn to_params(&self) -> SystemParams {
        SystemParams {
            kappa: mhz(self.kappa_mhz_over_2pi),
            kappa_ext: mhz(self.kappa_ext_mhz_over_2pi.unwrap_or(self.kappa_mhz_over_2pi / 2.0)),
            gamma: mhz(self.gamma_mhz_over_2pi),
            g: mhz(self.g_mhz_over_2pi),
            kerr: hz(self.kerr_hz_over_2pi),
            gain: mhz(self.gain_mhz_over_2pi),
            gain_absorbed: self.gain_absorbed,
            gamma_sat: hz(self.gamma_sat_hz_over_2pi),
            omega_d: mhz(self.omega_d_ghz_over_2pi * 1.0e3),
            delta_c: mhz(self.delta_c_mhz_over_2pi),
            delta_m: mhz(self.delta_m_mhz_over_2pi),
        }
    }
}

/// Passive drive, given by exactly one of the fields.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_per_us: Option<f64>,
}

impl DriveConfig {
    pub fn to_drive(&self, params: &SystemParams) -> Result<DriveSpec, CliError> {
        let set = [self.power_w, self.n0, self.eta_per_us].iter().filter(|v| v.is_some()).count();
        if set != 1 {
            return Err(CliError::Input(
                "at 'drive': give exactly one of power_w, n0, eta_per_us".into(),
            ));
        }
        let drive = if let Some(p) = self.power_w {
            magpol::model::eta_from_power(p, params)
        } else if let Some(n0) = self.n0 {
            n0_to_drive_passive(n0, params)
        } else {
            Ok(DriveSpec::from_eta(self.eta_per_us.unwrap_or(0.0)))
        };
        drive.map_err(|e| CliError::Input(format!("at 'drive': {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointsConfig {
    pub format_version: u32,
    pub kind: SystemKind,
    pub system: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl FixedPointsConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_version(self.format_version)?;
        if self.kind == SystemKind::Active && self.drive.is_some() {
            return Err(CliError::Input("at 'drive': the active system takes no drive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum XAxisConfig {
    /// Empty-condition photon number, log-spaced.
    N0 { min: f64, max: f64, points: usize },
    /// Effective gain, linearly spaced.
    #[serde(rename = "gain_mhz_over_2pi")]
    GainMhzOver2pi { min: f64, max: f64, points: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseDiagramConfig {
    pub format_version: u32,
    pub kind: SystemKind,
    pub system: SystemConfig,
    pub x_axis: XAxisConfig,
    pub delta_m_mhz_over_2pi: RangeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl PhaseDiagramConfig {
    /// Replaces the point counts by `x` columns and `y` rows.
    pub fn with_resolution(mut self, x: usize, y: usize) -> Self {
        match &mut self.x_axis {
            XAxisConfig::N0 { points, .. } | XAxisConfig::GainMhzOver2pi { points, .. } => *points = x,
        }
        self.delta_m_mhz_over_2pi.points = y;
        self
    }

    pub fn to_grid(&self) -> Result<GridSpec, CliError> {
        check_version(self.format_version)?;
        let x_axis = match self.x_axis {
            XAxisConfig::N0 { min, max, points } => XAxis::N0(AxisRange::new(min, max, points)),
            XAxisConfig::GainMhzOver2pi { min, max, points } => {
                XAxis::Gain(AxisRange::new(mhz(min), mhz(max), points))
            }
        };
        let y = self.delta_m_mhz_over_2pi;
        let grid = GridSpec {
            x_axis,
            y_axis: AxisRange::new(mhz(y.min), mhz(y.max), y.points),
            system: self.kind,
            base_params: self.system.to_params(),
        };
        grid.validate().map_err(|e| CliError::Input(e.to_string()))?;
        Ok(grid)
    }
}

/// Nominal detunings, either `from`/`to`/`steps` or an explicit list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetuningsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_mhz_over_2pi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_mhz_over_2pi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub list_mhz_over_2pi: Option<Vec<f64>>,
}

impl DetuningsConfig {
    /// Nominal detunings in rad/us.
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        match (self.from_mhz_over_2pi, self.to_mhz_over_2pi, self.steps, &self.list_mhz_over_2pi) {
            (Some(from), Some(to), Some(n), None) => {
                Ok(SweepProtocol::linear(mhz(from), mhz(to), n).detuning_list)
            }
            (None, None, None, Some(list)) => Ok(list.iter().map(|d| mhz(*d)).collect()),
            _ => Err(CliError::Input(
                "at 'detunings': give either from_mhz_over_2pi/to_mhz_over_2pi/steps or list_mhz_over_2pi"
                    .into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedStateConfig {
    pub a_re: f64,
    #[serde(default)]
    pub a_im: f64,
    #[serde(default)]
    pub m_re: f64,
    #[serde(default)]
    pub m_im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrogramConfig {
    /// Displayed frequency window, MHz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_mhz: Option<[f64; 2]>,
    #[serde(default = "yes")]
    pub log10: bool,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        Self {
            window_mhz: None,
            log10: true,
        }
    }
}

fn default_dt_ns() -> f64 {
    1.0
}

fn default_t_total_us() -> f64 {
    8.0
}

fn default_t_drop_us() -> f64 {
    3.0
}

fn default_fit_fraction() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub format_version: u32,
    pub system: SystemConfig,
    pub detunings: DetuningsConfig,
    #[serde(default = "default_dt_ns")]
    pub dt_ns: f64,
    #[serde(default = "default_t_total_us")]
    pub t_total_us: f64,
    #[serde(default = "default_t_drop_us")]
    pub t_drop_us: f64,
    #[serde(default = "yes")]
    pub memory_detuning: bool,
    #[serde(default = "yes")]
    pub memory_state: bool,
    #[serde(default = "default_fit_fraction")]
    pub fit_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_state: Option<SeedStateConfig>,
    #[serde(default)]
    pub spectrogram: SpectrogramConfig,
    #[serde(default)]
    pub write_traces: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SweepConfig {
    /// Overrides the number of field steps of a range sweep.
    pub fn with_steps(mut self, n: usize) -> Result<Self, CliError> {
        if self.detunings.steps.is_none() {
            return Err(CliError::Input(
                "--resolution only applies to a from/to detuning range".into(),
            ));
        }
        self.detunings.steps = Some(n);
        Ok(self)
    }

    pub fn to_protocol(&self) -> Result<SweepProtocol, CliError> {
        check_version(self.format_version)?;
        let mut proto = SweepProtocol::new(self.detunings.values()?);
        proto.dt = self.dt_ns * 1.0e-3;
        proto.t_total = self.t_total_us;
        proto.t_drop = self.t_drop_us;
        proto.memory_detuning = self.memory_detuning;
        proto.memory_state = self.memory_state;
        proto.fit_fraction = self.fit_fraction;
        proto.initial_state = self.seed_state.map(|s| {
            ModeState::new(Complex64::new(s.a_re, s.a_im), Complex64::new(s.m_re, s.m_im))
        });
        proto.validate().map_err(|e| CliError::Input(e.to_string()))?;
        Ok(proto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub format_version: u32,
    /// Tagged two-column CSV, relative to the config file.
    pub input: PathBuf,
    #[serde(default)]
    pub coupling: Coupling,
}

impl FitConfig {
    pub fn resolve_input(&self, config_path: &Path) -> Result<PathBuf, CliError> {
        check_version(self.format_version)?;
        Ok(match config_path.parent() {
            Some(dir) if self.input.is_relative() => dir.join(&self.input),
            _ => self.input.clone(),
        })
    }
}
