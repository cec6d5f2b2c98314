use std::path::{Path, PathBuf};

use magpol::calib::{fit_kittel, fit_s11, parse_tagged_csv, ColumnUnit, Coupling};
use magpol::dynamics::{default_seed, run_sweep, SweepResult};
use magpol::model::{to_mhz, SystemParams};
use magpol::phasemap::{scan, PhaseDiagram, SystemKind, XAxis};
use magpol::spectral::{build_spectrogram, LOG_FLOOR, LOW_CONFIDENCE_RESIDUAL};
use magpol::stability::{classify, Stability};
use magpol::steady::{active_fixed_points, passive_fixed_points};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{self, FitConfig, FixedPointsConfig, PhaseDiagramConfig, SweepConfig};
use crate::error::CliError;
use crate::output::{complex_le_bytes, matrix_csv, to_json, OutDir};

pub const MANIFEST_VERSION: u32 = 1;

/// Loads a config, or the config embedded in a manifest from an earlier run.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let inner = match value {
        Value::Object(mut obj) if obj.contains_key("manifest_version") => {
            obj.remove("config").unwrap_or(Value::Null)
        }
        other => other,
    };
    serde_path_to_error::deserialize(inner).map_err(|e| {
        let field = e.path().to_string();
        CliError::Input(format!("{}: at '{field}': {}", path.display(), e.into_inner()))
    })
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    manifest_version: u32,
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a C,
    outputs: Vec<String>,
    metadata: Value,
}

fn finish<C: Serialize>(
    out: &mut OutDir,
    command: &'static str,
    config: &C,
    metadata: Value,
) -> Result<(), CliError> {
    out.write_json("config.json", config)?;
    let mut outputs = out.files().to_vec();
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        tool: "magpol",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        outputs,
        metadata,
    };
    out.write_json("manifest.json", &manifest)
}

fn mhz_pair(re: f64, im: f64) -> [f64; 2] {
    [to_mhz(re), to_mhz(im)]
}

fn stability_name(s: Stability) -> &'static str {
    match s {
        Stability::Stable => "stable",
        Stability::Unstable => "unstable",
        Stability::Marginal => "marginal",
    }
}

pub fn fixed_points(config: &FixedPointsConfig, out: Option<&Path>) -> Result<String, CliError> {
    config.validate()?;
    let params = config.system.to_params();
    let fps = match config.kind {
        SystemKind::Passive => {
            let drive = config.drive.unwrap_or_default();
            let drive = if config.drive.is_some() {
                drive.to_drive(&params)?
            } else {
                magpol::model::DriveSpec::none()
            };
            params.validate()?;
            passive_fixed_points(&params, &drive)?
        }
        SystemKind::Active => {
            params.validate_active()?;
            active_fixed_points(&params)?
        }
    };
    let (mut stable, mut unstable, mut marginal) = (0, 0, 0);
    let mut list = Vec::new();
    for (i, fp) in fps.iter().enumerate() {
        let r = classify(fp, &params)?;
        match r.class {
            Stability::Stable => stable += 1,
            Stability::Unstable => unstable += 1,
            Stability::Marginal => marginal += 1,
        }
        list.push(json!({
            "index": i,
            "a_re": fp.a0.re,
            "a_im": fp.a0.im,
            "m_re": fp.m0.re,
            "m_im": fp.m0.im,
            "photons": fp.photons(),
            "magnons": fp.magnons(),
            "omega_mhz_over_2pi": to_mhz(fp.omega_off),
            "coupled": fp.coupled,
            "residual": fp.residual,
            "stability": stability_name(r.class),
            "margin_mhz_over_2pi": to_mhz(r.margin),
            "eigenvalues_mhz_over_2pi": r.eigenvalues.iter().map(|z| mhz_pair(z.re, z.im)).collect::<Vec<_>>(),
            "discarded_mhz_over_2pi": r.discarded.map(|z| mhz_pair(z.re, z.im)),
            "neutral_mode_suspect": r.neutral_mode_suspect,
        }));
    }
    let report = json!({
        "kind": config.kind,
        "fixed_points": list,
        "summary": {
            "stable": stable,
            "unstable": unstable,
            "marginal": marginal,
        },
    });
    let text = to_json(&report)?;
    if let Some(dir) = out {
        let mut od = OutDir::create(dir)?;
        od.write_text("fixed_points.json", &format!("{text}\n"))?;
        finish(&mut od, "fixed-points", config, json!({}))?;
    }
    Ok(text)
}

fn axis_json(d: &PhaseDiagram) -> Value {
    let xs = d.grid.x_values();
    let ys = d.grid.y_values();
    let (x_name, x_values): (&str, Vec<f64>) = match d.grid.x_axis {
        XAxis::N0(_) => ("n0", xs),
        XAxis::Gain(_) => ("gain_mhz_over_2pi", xs.iter().map(|g| to_mhz(*g)).collect()),
    };
    json!({
        "layout": "rows follow delta_m, columns follow the x axis",
        "x_axis": { "kind": x_name, "values": x_values },
        "delta_m_mhz_over_2pi": ys.iter().map(|d| to_mhz(*d)).collect::<Vec<_>>(),
    })
}

pub fn phase_diagram(config: &PhaseDiagramConfig, out: Option<&Path>) -> Result<String, CliError> {
    let grid = config.to_grid()?;
    let diagram = scan(&grid)?;
    let areas = diagram.phase_areas();
    let total = (diagram.rows() * diagram.cols()) as f64;
    let mut summary = format!(
        "{} x {} cells, {} failed\n",
        diagram.cols(),
        diagram.rows(),
        diagram.errors.len()
    );
    for (label, n) in &areas {
        summary.push_str(&format!("{label:>10} {n:>8} {:>7.2}%\n", 100.0 * *n as f64 / total));
    }
    if let Some(dir) = out {
        let mut od = OutDir::create(dir)?;
        od.write_text("stable_count.csv", &matrix_csv(&diagram.stable_count()))?;
        od.write_text("unstable_count.csv", &matrix_csv(&diagram.unstable_count()))?;
        od.write_text("marginal_count.csv", &matrix_csv(&diagram.marginal_count()))?;
        let blank: Vec<Vec<u8>> = diagram
            .blank_mask()
            .iter()
            .map(|r| r.iter().map(|b| u8::from(*b)).collect())
            .collect();
        od.write_text("blank_mask.csv", &matrix_csv(&blank))?;
        let mut labels: Vec<Vec<String>> = diagram
            .cells
            .iter()
            .map(|r| r.iter().map(|c| c.label()).collect())
            .collect();
        for e in &diagram.errors {
            labels[e.row][e.col] = "error".into();
        }
        od.write_text("labels.csv", &matrix_csv(&labels))?;
        let mut sidecar = axis_json(&diagram);
        sidecar["phase_areas"] = json!(areas);
        sidecar["errors"] = json!(diagram.errors);
        od.write_json("phase_diagram.json", &sidecar)?;
        finish(&mut od, "phase-diagram", config, json!({}))?;
    }
    Ok(summary)
}

fn sweep_csv(result: &SweepResult) -> String {
    let mut s = String::from(
        "k,delta0_mhz_over_2pi,delta_eff_mhz_over_2pi,omega_mhz_over_2pi,confidence,low_confidence\n",
    );
    for st in &result.steps {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            st.index,
            to_mhz(st.delta_nominal),
            to_mhz(st.delta_eff),
            to_mhz(st.omega),
            st.confidence,
            u8::from(st.low_confidence)
        ));
    }
    s
}

pub fn sweep(config: &SweepConfig, out: Option<&Path>) -> Result<String, CliError> {
    let proto = config.to_protocol()?;
    let params: SystemParams = config.system.to_params();
    let result = run_sweep(&proto, &params)?;
    let seed = proto.initial_state.unwrap_or_else(|| default_seed(&params));
    let n_done = result.steps.len();
    let max_omega = result.omegas().into_iter().fold(f64::NEG_INFINITY, f64::max);
    let mut summary = format!("{n_done} of {} steps", proto.detuning_list.len());
    if n_done > 0 {
        summary.push_str(&format!(", max offset {:.3} MHz", to_mhz(max_omega)));
    }
    summary.push('\n');
    if let Some(e) = &result.error {
        eprintln!("warning: sweep stopped early: {e}");
    }
    if let Some(dir) = out {
        let mut od = OutDir::create(dir)?;
        od.write_text("sweep.csv", &sweep_csv(&result))?;
        if n_done > 0 {
            let window = config
                .spectrogram
                .window_mhz
                .map(|[lo, hi]| (lo * 1.0e6, hi * 1.0e6));
            let nominal: Vec<f64> = result.steps.iter().map(|s| s.delta_nominal).collect();
            let mut spec = build_spectrogram(&result.segments, &nominal, proto.t_drop, window)?;
            spec.log10 = config.spectrogram.log10;
            // Stored with one row per frequency bin.
            let cols = spec.rendered();
            let rows: Vec<Vec<f64>> = (0..spec.freqs.len())
                .map(|i| cols.iter().map(|c| c[i]).collect())
                .collect();
            od.write_text("spectrogram.csv", &matrix_csv(&rows))?;
            od.write_json(
                "spectrogram.json",
                &json!({
                    "layout": "rows follow frequency, columns follow nominal detuning",
                    "freqs_mhz": spec.freqs.iter().map(|f| f * 1.0e-6).collect::<Vec<_>>(),
                    "delta0_mhz_over_2pi": nominal.iter().map(|d| to_mhz(*d)).collect::<Vec<_>>(),
                    "log10": spec.log10,
                    "log_floor": LOG_FLOOR,
                    "normalization": "each column scaled to unit maximum",
                }),
            )?;
        }
        if config.write_traces {
            for (k, seg) in result.segments.iter().enumerate() {
                let mut bytes = complex_le_bytes(&seg.a_samples);
                bytes.extend(complex_le_bytes(&seg.m_samples));
                let name = format!("traces/segment_{k:04}");
                od.write_bytes(&format!("{name}.bin"), &bytes)?;
                od.write_json(
                    &format!("{name}.json"),
                    &json!({
                        "segment": k,
                        "dt_s": seg.dt * 1.0e-6,
                        "length": seg.len(),
                        "layout": "a then m, each length complex samples as little-endian float64 re,im",
                        "delta_eff_mhz_over_2pi": to_mhz(seg.detuning_used),
                    }),
                )?;
            }
        }
        let metadata = json!({
            "omega0_mhz_over_2pi": 0.0,
            "seed_state": {"a_re": seed.a.re, "a_im": seed.a.im, "m_re": seed.m.re, "m_im": seed.m.im},
            "fit_fraction": proto.fit_fraction,
            "phase_weighting": "|a|^2",
            "low_confidence_residual_rad2": LOW_CONFIDENCE_RESIDUAL,
            "integrator": "classical fourth-order Runge-Kutta, fixed step",
            "frequency_convention": "positive offset is a blue shift of the oscillation",
            "steps_completed": n_done,
            "status": match &result.error {
                None => "complete".to_string(),
                Some(e) => format!("stopped early: {e}"),
            },
        });
        finish(&mut od, "sweep", config, metadata)?;
    }
    Ok(summary)
}

/// Fit inputs come either from `--input` or from a config naming the CSV.
pub struct FitSource {
    pub csv: PathBuf,
    pub config: FitConfig,
}

impl FitSource {
    pub fn resolve(
        config_path: Option<&Path>,
        input: Option<&Path>,
        coupling: Option<Coupling>,
    ) -> Result<Self, CliError> {
        let (csv, mut cfg) = match (config_path, input) {
            (Some(_), Some(_)) => {
                return Err(CliError::Input("give either --config or --input, not both".into()))
            }
            (Some(p), None) => {
                let cfg: FitConfig = load_config(p)?;
                (cfg.resolve_input(p)?, cfg)
            }
            (None, Some(csv)) => (
                csv.to_path_buf(),
                FitConfig {
                    format_version: config::FORMAT_VERSION,
                    input: csv.to_path_buf(),
                    coupling: Coupling::default(),
                },
            ),
            (None, None) => return Err(CliError::Input("--config or --input is required".into())),
        };
        if let Some(c) = coupling {
            cfg.coupling = c;
        }
        // Absolute so that a manifest rerun finds the same file.
        cfg.input = std::path::absolute(&csv).unwrap_or_else(|_| csv.clone());
        Ok(Self { csv, config: cfg })
    }

    fn read(&self) -> Result<magpol::calib::TaggedTable, CliError> {
        let text = std::fs::read_to_string(&self.csv)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", self.csv.display())))?;
        parse_tagged_csv(&text).map_err(|e| CliError::Input(format!("{}: {e}", self.csv.display())))
    }
}

pub fn fit_s11_cmd(src: &FitSource, out: Option<&Path>) -> Result<String, CliError> {
    let table = src.read()?;
    if !matches!(table.x_unit, ColumnUnit::Hz | ColumnUnit::GHz) {
        return Err(CliError::Input("reflection data needs a freq_unit header".into()));
    }
    let k = table.x_unit.to_internal();
    let data: Vec<(f64, f64)> = table.rows.iter().map(|(f, s)| (f * k, *s)).collect();
    let fit = fit_s11(&data, src.config.coupling)?;
    let report = json!({
        "omega_m_ghz_over_2pi": to_mhz(fit.omega_m) * 1.0e-3,
        "kappa_a_mhz_over_2pi": to_mhz(fit.kappa_a),
        "gamma_mhz_over_2pi": to_mhz(fit.gamma),
        "kappa_load_mhz_over_2pi": to_mhz(fit.kappa_load),
        "goodness_rms": fit.goodness,
        "baseline_factor": fit.baseline,
        "coupling": src.config.coupling,
        "points": data.len(),
    });
    let text = to_json(&report)?;
    if let Some(dir) = out {
        let mut od = OutDir::create(dir)?;
        od.write_text("fit_s11.json", &format!("{text}\n"))?;
        finish(&mut od, "fit-s11", &src.config, json!({}))?;
    }
    Ok(text)
}

pub fn fit_kittel_cmd(src: &FitSource, out: Option<&Path>) -> Result<String, CliError> {
    let table = src.read()?;
    if !matches!(table.x_unit, ColumnUnit::MilliTesla | ColumnUnit::Gauss) {
        return Err(CliError::Input("Kittel data needs a field_unit header".into()));
    }
    let (kx, ky) = (table.x_unit.to_internal(), table.y_unit.to_internal());
    let pts: Vec<(f64, f64)> = table.rows.iter().map(|(b, f)| (b * kx, f * ky)).collect();
    let fit = fit_kittel(&pts)?;
    let report = json!({
        "gyromagnetic_ratio_mhz_per_mt": fit.gyromagnetic_ratio * 1.0e-9,
        "anisotropy_field_mt": fit.anisotropy_field * 1.0e3,
        "residual_rms_mhz_over_2pi": to_mhz(fit.residual_rms),
        "points": pts.len(),
    });
    let text = to_json(&report)?;
    if let Some(dir) = out {
        let mut od = OutDir::create(dir)?;
        od.write_text("fit_kittel.json", &format!("{text}\n"))?;
        finish(&mut od, "fit-kittel", &src.config, json!({}))?;
    }
    Ok(text)
}
