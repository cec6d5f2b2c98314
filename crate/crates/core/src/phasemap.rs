//! Stability phase diagrams: counts of stable and unstable fixed points over a
//! two-dimensional parameter grid. Every cell is solved independently.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{eta_from_power, rate_to_si, DriveSpec, SystemParams, HBAR};
use crate::stability::{classify, Stability};
use crate::steady::{active_fixed_points, passive_fixed_points};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Passive,
    Active,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl AxisRange {
    pub fn new(min: f64, max: f64, points: usize) -> Self {
        Self { min, max, points }
    }

    pub fn linear(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    self.max
                } else {
                    self.min + (self.max - self.min) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }

    pub fn logarithmic(&self) -> Vec<f64> {
        let (lo, hi) = (self.min.log10(), self.max.log10());
        let n = self.points;
        (0..n)
            .map(|i| {
                if i == 0 {
                    self.min
                } else if i + 1 == n {
                    self.max
                } else {
                    10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64)
                }
            })
            .collect()
    }
}

/// Horizontal axis of a phase diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XAxis {
    /// Empty-condition photon number, log-sampled.
    N0(AxisRange),
    /// Effective gain in rad/us, linearly sampled (active only).
    Gain(AxisRange),
}

impl XAxis {
    pub fn range(&self) -> &AxisRange {
        match self {
            XAxis::N0(r) | XAxis::Gain(r) => r,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            XAxis::N0(r) => r.logarithmic(),
            XAxis::Gain(r) => r.linear(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_axis: XAxis,
    /// Magnon detuning, rad/us, linearly sampled.
    pub y_axis: AxisRange,
    pub system: SystemKind,
    pub base_params: SystemParams,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let x = self.x_axis.range();
        for (name, r) in [("x", x), ("y", &self.y_axis)] {
            if r.points < 2 {
                return Err(Error::Config(format!("{name} axis needs at least 2 points")));
            }
            if !(r.min.is_finite() && r.max.is_finite()) || r.max <= r.min {
                return Err(Error::Config(format!("{name} axis range must be increasing")));
            }
        }
        match (self.x_axis, self.system) {
            (XAxis::N0(r), _) if r.min <= 0.0 => {
                Err(Error::Config("log-sampled n0 axis requires a positive range".into()))
            }
            (XAxis::Gain(_), SystemKind::Passive) => {
                Err(Error::Config("gain axis only applies to the active system".into()))
            }
            (_, SystemKind::Active) => self.base_params.validate_active(),
            (_, SystemKind::Passive) => self.base_params.validate(),
        }
    }

    pub fn x_values(&self) -> Vec<f64> {
        self.x_axis.values()
    }

    pub fn y_values(&self) -> Vec<f64> {
        self.y_axis.linear()
    }
}

/// Input power that produces `n0` photons in the uncoupled cavity.
pub fn n0_to_power_passive(n0: f64, params: &SystemParams) -> Result<f64> {
    if !(n0 > 0.0) {
        return Err(Error::Domain(format!("n0 must be positive, got {n0}")));
    }
    if params.kappa == 0.0 && params.kappa_ext == 0.0 || params.kappa_ext == 0.0 {
        return Err(Error::Domain("no external coupling: n0 cannot be set by power".into()));
    }
    let lorentz = (params.kappa / 2.0).powi(2) + params.delta_c.powi(2);
    let photon_energy = HBAR * rate_to_si(params.omega_d);
    // n0 = kappa_ext / lorentz * P / (hbar w_d); rates here in consistent units.
    Ok(n0 * rate_to_si(lorentz / params.kappa_ext) * photon_energy)
}

/// Photon number of the uncoupled cavity under `drive`.
pub fn n0_passive(drive: &DriveSpec, params: &SystemParams) -> f64 {
    drive.eta * drive.eta / ((params.kappa / 2.0).powi(2) + params.delta_c.powi(2))
}

pub fn n0_to_drive_passive(n0: f64, params: &SystemParams) -> Result<DriveSpec> {
    let power = n0_to_power_passive(n0, params)?;
    eta_from_power(power, params)
}

/// Effective gain whose free-running photon number is `n0`.
pub fn n0_to_gain_active(n0: f64, params: &SystemParams) -> f64 {
    n0 * params.gamma_sat
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub stable: u8,
    pub unstable: u8,
    pub marginal: u8,
    /// Solutions whose discarded neutral eigenvalue was not small.
    pub neutral_suspect: u8,
}

impl CellCounts {
    pub fn total(&self) -> u8 {
        self.stable + self.unstable + self.marginal
    }

    pub fn is_blank(&self) -> bool {
        self.total() == 0
    }

    /// Label in the "2S+1U" style; marginal solutions append "+nM".
    pub fn label(&self) -> String {
        if self.is_blank() {
            return "blank".into();
        }
        let mut s = format!("{}S+{}U", self.stable, self.unstable);
        if self.marginal > 0 {
            s.push_str(&format!("+{}M", self.marginal));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub row: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub grid: GridSpec,
    /// Indexed `[row][col]` with row = detuning index and col = x index.
    pub cells: Vec<Vec<CellCounts>>,
    pub errors: Vec<CellError>,
}

impl PhaseDiagram {
    pub fn rows(&self) -> usize {
        self.cells.len()
    }

    pub fn cols(&self) -> usize {
        self.cells.first().map_or(0, |r| r.len())
    }

    pub fn channel(&self, f: impl Fn(&CellCounts) -> u8) -> Vec<Vec<u8>> {
        self.cells.iter().map(|row| row.iter().map(&f).collect()).collect()
    }

    pub fn stable_count(&self) -> Vec<Vec<u8>> {
        self.channel(|c| c.stable)
    }

    pub fn unstable_count(&self) -> Vec<Vec<u8>> {
        self.channel(|c| c.unstable)
    }

    pub fn marginal_count(&self) -> Vec<Vec<u8>> {
        self.channel(|c| c.marginal)
    }

    pub fn blank_mask(&self) -> Vec<Vec<bool>> {
        self.cells
            .iter()
            .map(|row| row.iter().map(|c| c.is_blank()).collect())
            .collect()
    }

    /// Number of cells per phase label.
    pub fn phase_areas(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for c in self.cells.iter().flatten() {
            *out.entry(c.label()).or_insert(0) += 1;
        }
        out
    }

    pub fn label_at(&self, row: usize, col: usize) -> String {
        self.cells[row][col].label()
    }
}

/// Solves and classifies one grid cell.
pub fn evaluate_cell(grid: &GridSpec, x: f64, delta_m: f64) -> Result<CellCounts> {
    let mut params = grid.base_params;
    params.delta_m = delta_m;
    let fps = match (grid.system, grid.x_axis) {
        (SystemKind::Passive, XAxis::N0(_)) => {
            let drive = n0_to_drive_passive(x, &params)?;
            let fps = passive_fixed_points(&params, &drive)?;
            fps.into_iter().filter(|fp| fp.coupled || params.g == 0.0).collect::<Vec<_>>()
        }
        (SystemKind::Active, axis) => {
            let gain = match axis {
                XAxis::N0(_) => n0_to_gain_active(x, &params),
                XAxis::Gain(_) => x,
            };
            params = params.with_effective_gain(gain);
            let fps = active_fixed_points(&params)?;
            // With g > 0 only coupled solutions are counted.
            fps.into_iter().filter(|fp| fp.coupled || params.g == 0.0).collect()
        }
        (SystemKind::Passive, XAxis::Gain(_)) => {
            return Err(Error::Config("gain axis only applies to the active system".into()))
        }
    };
    let mut counts = CellCounts::default();
    for fp in &fps {
        let report = classify(fp, &params)?;
        match report.class {
            Stability::Stable => counts.stable += 1,
            Stability::Unstable => counts.unstable += 1,
            Stability::Marginal => counts.marginal += 1,
        }
        if report.neutral_mode_suspect {
            counts.neutral_suspect += 1;
        }
    }
    Ok(counts)
}

fn assemble(grid: &GridSpec, results: Vec<(usize, usize, Result<CellCounts>)>) -> PhaseDiagram {
    let (ny, nx) = (grid.y_axis.points, grid.x_axis.range().points);
    let mut cells = vec![vec![CellCounts::default(); nx]; ny];
    let mut errors = Vec::new();
    for (row, col, res) in results {
        match res {
            Ok(c) => cells[row][col] = c,
            Err(e) => errors.push(CellError {
                row,
                col,
                message: e.to_string(),
            }),
        }
    }
    errors.sort_by_key(|e| (e.row, e.col));
    PhaseDiagram {
        grid: *grid,
        cells,
        errors,
    }
}

fn cell_indices(grid: &GridSpec) -> Vec<(usize, usize)> {
    let (ny, nx) = (grid.y_axis.points, grid.x_axis.range().points);
    (0..ny).flat_map(|r| (0..nx).map(move |c| (r, c))).collect()
}

/// Parallel scan over all cells (rayon's global pool).
pub fn scan(grid: &GridSpec) -> Result<PhaseDiagram> {
    grid.validate()?;
    let xs = grid.x_values();
    let ys = grid.y_values();
    let results = cell_indices(grid)
        .into_par_iter()
        .map(|(r, c)| (r, c, evaluate_cell(grid, xs[c], ys[r])))
        .collect();
    Ok(assemble(grid, results))
}

/// Same output as [`scan`], evaluating cells on the calling thread in the given
/// order of flat cell indices (row-major). Used to check order independence.
pub fn scan_in_order(grid: &GridSpec, order: &[usize]) -> Result<PhaseDiagram> {
    grid.validate()?;
    let xs = grid.x_values();
    let ys = grid.y_values();
    let all = cell_indices(grid);
    if order.len() != all.len() {
        return Err(Error::Shape(format!(
            "order covers {} of {} cells",
            order.len(),
            all.len()
        )));
    }
    let results = order
        .iter()
        .map(|&k| {
            let (r, c) = all[k];
            (r, c, evaluate_cell(grid, xs[c], ys[r]))
        })
        .collect();
    Ok(assemble(grid, results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{hz, mhz};

    #[test]
    fn n0_from_one_microwatt() {
        let p = SystemParams::phase_map_reference();
        let d = eta_from_power(1.0e-6, &p).unwrap();
        let n0 = n0_passive(&d, &p);
        assert!((n0 / 1.07e11 - 1.0).abs() < 5e-3, "{n0:e}");
    }

    #[test]
    fn n0_detuning_ratio() {
        let p0 = SystemParams::phase_map_reference();
        let d = eta_from_power(1.0e-6, &p0).unwrap();
        let pd = SystemParams {
            delta_c: mhz(80.0),
            ..p0
        };
        let ratio = n0_passive(&d, &p0) / n0_passive(&d, &pd);
        let expected = ((p0.kappa / 2.0).powi(2) + pd.delta_c.powi(2)) / (p0.kappa / 2.0).powi(2);
        assert!((ratio / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn n0_power_round_trip() {
        let p = SystemParams {
            delta_c: mhz(80.0),
            ..SystemParams::phase_map_reference()
        };
        for n0 in [1.0e9, 3.3e12, 1.0e15] {
            let d = n0_to_drive_passive(n0, &p).unwrap();
            assert!((n0_passive(&d, &p) / n0 - 1.0).abs() < 1e-12);
        }
        let dead = SystemParams {
            kappa: 0.0,
            kappa_ext: 0.0,
            ..p
        };
        assert!(n0_to_drive_passive(1.0e9, &dead).is_err());
    }

    #[test]
    fn gain_mapping() {
        let p = SystemParams::phase_map_reference();
        let g = n0_to_gain_active(1.0e12, &p);
        assert!((g / mhz(2.0) - 1.0).abs() < 1e-12);
        let q = SystemParams {
            gamma_sat: hz(0.8e-6),
            ..p
        };
        let n0 = mhz(15.45) / q.gamma_sat;
        assert!((n0 / 1.93e13 - 1.0).abs() < 2e-3);
        assert_eq!(n0_to_gain_active(0.0, &q), 0.0);
    }

    #[test]
    fn grid_validation() {
        let good = GridSpec {
            x_axis: XAxis::N0(AxisRange::new(1.0e9, 1.0e15, 3)),
            y_axis: AxisRange::new(-1.0, 1.0, 3),
            system: SystemKind::Passive,
            base_params: SystemParams::phase_map_reference(),
        };
        assert!(good.validate().is_ok());
        let mut bad = good;
        bad.x_axis = XAxis::N0(AxisRange::new(0.0, 1.0e15, 3));
        assert!(bad.validate().is_err());
        bad = good;
        bad.y_axis.points = 1;
        assert!(bad.validate().is_err());
        bad = good;
        bad.x_axis = XAxis::Gain(AxisRange::new(1.0, 2.0, 3));
        assert!(bad.validate().is_err());
    }

    #[test]
    fn log_axis_hits_endpoints() {
        let v = AxisRange::new(1.0e9, 1.0e15, 7).logarithmic();
        assert_eq!(v[0], 1.0e9);
        assert_eq!(v[6], 1.0e15);
        assert!((v[3] / 1.0e12 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn labels() {
        let c = CellCounts {
            stable: 2,
            unstable: 1,
            marginal: 0,
            neutral_suspect: 0,
        };
        assert_eq!(c.label(), "2S+1U");
        assert_eq!(CellCounts::default().label(), "blank");
    }
}
