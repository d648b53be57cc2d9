//! File formats: signal CSV (with sample-rate sidecar), variance CSV, model
//! and fit-report JSON, and the Monte Carlo experiment spec.
//!
//! All floating-point output is printed with 17 significant digits
//! (`{:.16e}`), which round-trips f64 exactly and keeps emitted files
//! byte-stable for golden-file comparison. JSON inputs are parsed with
//! serde; JSON outputs go through a small emitter so the float format and
//! key order stay fixed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fit::{FitResult, Method};
use crate::mc::Experiment;
use crate::model::{CompositeModel, ProcessKind, ScaleGrid, VarianceConvention};
use crate::units::{convert_units, Direction, Quantity, UnitSpec};
use crate::wv::{Signal, WvEstimate};

/// 17-significant-digit float rendering used in every emitted file.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Minimal JSON value for emission with fixed key order and float format.
#[derive(Debug, Clone)]
pub(crate) enum Jv {
    Null,
    Bool(bool),
    Int(i64),
    Num(f64),
    Str(String),
    Arr(Vec<Jv>),
    Obj(Vec<(String, Jv)>),
}

fn escape_json(s: &str, out: &mut String) {
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

impl Jv {
    fn emit(&self, out: &mut String, depth: usize) {
        let pad = |out: &mut String, d: usize| {
            for _ in 0..d {
                out.push_str("  ");
            }
        };
        match self {
            Jv::Null => out.push_str("null"),
            Jv::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Jv::Int(i) => {
                let _ = write!(out, "{i}");
            }
            Jv::Num(v) => {
                if v.is_finite() {
                    out.push_str(&fmt_float(*v));
                } else {
                    out.push_str("null");
                }
            }
            Jv::Str(s) => escape_json(s, out),
            Jv::Arr(items) => {
                if items.is_empty() {
                    out.push_str("[]");
                    return;
                }
                out.push_str("[\n");
                for (i, item) in items.iter().enumerate() {
                    pad(out, depth + 1);
                    item.emit(out, depth + 1);
                    out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
                }
                pad(out, depth);
                out.push(']');
            }
            Jv::Obj(fields) => {
                if fields.is_empty() {
                    out.push_str("{}");
                    return;
                }
                out.push_str("{\n");
                for (i, (key, value)) in fields.iter().enumerate() {
                    pad(out, depth + 1);
                    escape_json(key, out);
                    out.push_str(": ");
                    value.emit(out, depth + 1);
                    out.push_str(if i + 1 < fields.len() { ",\n" } else { "\n" });
                }
                pad(out, depth);
                out.push('}');
            }
        }
    }

    pub(crate) fn to_json(&self) -> String {
        let mut s = String::new();
        self.emit(&mut s, 0);
        s.push('\n');
        s
    }
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

// ---------------------------------------------------------------------------
// Signal CSV + sample-rate sidecar
// ---------------------------------------------------------------------------

pub fn sidecar_path(signal_path: &Path) -> PathBuf {
    signal_path.with_extension("json")
}

pub fn write_signal_csv(path: &Path, signal: &Signal) -> Result<()> {
    let mut out = String::with_capacity(signal.len() * 24 + 8);
    out.push_str("value\n");
    for v in &signal.values {
        out.push_str(&fmt_float(*v));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_sidecar(signal_path: &Path, sample_rate_hz: f64) -> Result<()> {
    let body = Jv::Obj(vec![("sample_rate_hz".into(), Jv::Num(sample_rate_hz))]).to_json();
    fs::write(sidecar_path(signal_path), body)?;
    Ok(())
}

#[derive(Deserialize)]
struct Sidecar {
    sample_rate_hz: f64,
}

/// Read a one-column signal CSV. A leading `value` header row is skipped;
/// malformed or non-finite rows are rejected with their line number. The
/// sample rate comes from the flag when given, else from the sidecar JSON
/// next to the file.
pub fn read_signal_csv(path: &Path, fs_flag: Option<f64>) -> Result<Signal> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    let mut seen_data = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let s = raw.trim();
        if s.is_empty() {
            continue;
        }
        if !seen_data && s.eq_ignore_ascii_case("value") {
            seen_data = true;
            continue;
        }
        seen_data = true;
        let v: f64 = s.parse().map_err(|e| Error::Parse {
            path: path_str(path),
            line,
            message: format!("{e} (got {s:?})"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                path: path_str(path),
                line,
                message: format!("non-finite sample {v}"),
            });
        }
        values.push(v);
    }
    let sample_rate = match fs_flag {
        Some(f) => f,
        None => {
            let sp = sidecar_path(path);
            if !sp.exists() {
                return Err(Error::Usage(format!(
                    "no sample rate: pass --fs or provide a sidecar file {}",
                    sp.display()
                )));
            }
            let meta: Sidecar = serde_json::from_str(&fs::read_to_string(&sp)?)?;
            meta.sample_rate_hz
        }
    };
    Signal::new(values, sample_rate)
}

// ---------------------------------------------------------------------------
// Variance CSV
// ---------------------------------------------------------------------------

const WV_HEADER: &str = "level,half_window_samples,tau_seconds,nu_hat,n_coeff,ci_lo,ci_hi";

pub fn write_wv_csv(path: &Path, est: &WvEstimate) -> Result<()> {
    let mut out = String::new();
    out.push_str(WV_HEADER);
    out.push('\n');
    for (i, &level) in est.grid.levels().iter().enumerate() {
        let ci_lo = est.ci_lo.as_ref().map(|v| fmt_float(v[i])).unwrap_or_default();
        let ci_hi = est.ci_hi.as_ref().map(|v| fmt_float(v[i])).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            level,
            est.grid.half_window(level),
            fmt_float(est.grid.tau_seconds(level, est.sample_rate_hz)),
            fmt_float(est.nu_hat[i]),
            est.grid.coeff_count(level),
            ci_lo,
            ci_hi
        );
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a variance CSV back into an estimate. The grid is reconstructed
/// from the (level, coefficient count) pairs and the sample rate from
/// `half_window / tau`; the convention is supplied by the caller since the
/// table does not store it.
pub fn read_wv_csv(path: &Path, convention: VarianceConvention) -> Result<WvEstimate> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path_str(path),
        line,
        message,
    };
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    if header.trim() != WV_HEADER {
        return Err(parse_err(1, format!("expected header {WV_HEADER:?}")));
    }
    let mut pairs = Vec::new();
    let mut nu_hat = Vec::new();
    let mut ci_lo = Vec::new();
    let mut ci_hi = Vec::new();
    let mut sample_rate: Option<f64> = None;
    for (idx, raw) in lines {
        let line = idx + 1;
        let s = raw.trim();
        if s.is_empty() {
            continue;
        }
        let fields: Vec<&str> = s.split(',').collect();
        if fields.len() != 7 {
            return Err(parse_err(line, format!("expected 7 fields, got {}", fields.len())));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| parse_err(line, format!("field {}: {e}", i + 1)))
        };
        let level: u32 = fields[0]
            .parse()
            .map_err(|e| parse_err(line, format!("level: {e}")))?;
        let half: usize = fields[1]
            .parse()
            .map_err(|e| parse_err(line, format!("half window: {e}")))?;
        if half != 1usize << level {
            return Err(parse_err(
                line,
                format!("half window {half} does not match level {level}"),
            ));
        }
        let tau = num(2)?;
        let nu = num(3)?;
        let count: usize = fields[4]
            .parse()
            .map_err(|e| parse_err(line, format!("n_coeff: {e}")))?;
        let fs_here = half as f64 / tau;
        if let Some(fs_prev) = sample_rate {
            if (fs_here - fs_prev).abs() > 1e-9 * fs_prev.abs() {
                return Err(parse_err(
                    line,
                    format!("inconsistent sample rate {fs_here} vs {fs_prev}"),
                ));
            }
        } else {
            sample_rate = Some(fs_here);
        }
        pairs.push((level, count));
        nu_hat.push(nu);
        match (fields[5].is_empty(), fields[6].is_empty()) {
            (true, true) => {}
            (false, false) => {
                ci_lo.push(num(5)?);
                ci_hi.push(num(6)?);
            }
            _ => return Err(parse_err(line, "ci_lo and ci_hi must come together".into())),
        }
    }
    if pairs.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    if !ci_lo.is_empty() && ci_lo.len() != pairs.len() {
        return Err(parse_err(
            1,
            "confidence bounds must be present on all rows or none".into(),
        ));
    }
    let grid = ScaleGrid::from_levels_counts(&pairs)?;
    Ok(WvEstimate {
        grid,
        convention,
        nu_hat,
        cov_hat: None,
        ci_lo: (!ci_lo.is_empty()).then_some(ci_lo),
        ci_hi: (!ci_hi.is_empty()).then_some(ci_hi),
        sample_rate_hz: sample_rate.expect("at least one row parsed"),
    })
}

// ---------------------------------------------------------------------------
// Model JSON
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct RawModel {
    #[serde(default)]
    convention: Option<String>,
    processes: BTreeMap<String, BTreeMap<String, f64>>,
}

fn parse_convention(tag: Option<&str>) -> Result<VarianceConvention> {
    match tag {
        None => Ok(VarianceConvention::Av),
        Some(t) => VarianceConvention::from_tag(t)
            .ok_or_else(|| Error::Domain(format!("unknown convention {t:?} (use av or wv)"))),
    }
}

fn parse_process_tag(tag: &str) -> Result<ProcessKind> {
    ProcessKind::from_tag(tag).ok_or_else(|| {
        Error::Domain(format!("unknown process tag {tag:?} (use QN, WN, BI, RW, DR)"))
    })
}

/// Parse `{"convention": "av", "processes": {"WN": {"sigma2": ...}, ...}}`.
/// Parameters are per-sample stored values, keyed by their canonical names.
pub fn read_model_json(path: &Path) -> Result<(CompositeModel, VarianceConvention)> {
    let raw: RawModel = serde_json::from_str(&fs::read_to_string(path)?)?;
    let convention = parse_convention(raw.convention.as_deref())?;
    let mut params = BTreeMap::new();
    for (tag, entry) in &raw.processes {
        let kind = parse_process_tag(tag)?;
        let key = kind.param_key();
        if entry.len() != 1 || !entry.contains_key(key) {
            return Err(Error::Domain(format!(
                "process {tag} takes exactly one parameter named {key:?}"
            )));
        }
        params.insert(kind, entry[key]);
    }
    Ok((CompositeModel::new(params)?, convention))
}

pub fn write_model_json(
    path: &Path,
    model: &CompositeModel,
    convention: VarianceConvention,
) -> Result<()> {
    let processes = model
        .iter()
        .map(|(kind, value)| {
            (
                kind.tag().to_string(),
                Jv::Obj(vec![(kind.param_key().to_string(), Jv::Num(value))]),
            )
        })
        .collect();
    let body = Jv::Obj(vec![
        ("convention".into(), Jv::Str(convention.tag().into())),
        ("processes".into(), Jv::Obj(processes)),
    ]);
    fs::write(path, body.to_json())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Fit report JSON and plot CSV
// ---------------------------------------------------------------------------

pub fn fit_report_json(fit: &FitResult, est: &WvEstimate) -> String {
    let theta: Vec<(String, Jv)> = fit
        .theta_hat
        .iter()
        .map(|(kind, value)| (kind.tag().to_string(), Jv::Num(value)))
        .collect();
    let std_errors = match &fit.std_errors {
        None => Jv::Null,
        Some(map) => Jv::Obj(
            map.iter()
                .map(|(kind, se)| (kind.tag().to_string(), Jv::Num(*se)))
                .collect(),
        ),
    };
    let scales = est
        .grid
        .levels()
        .iter()
        .enumerate()
        .map(|(i, &level)| {
            Jv::Obj(vec![
                ("level".into(), Jv::Int(level as i64)),
                ("nu_hat".into(), Jv::Num(est.nu_hat[i])),
                ("fitted".into(), Jv::Num(fit.fitted_wv[i])),
            ])
        })
        .collect();
    Jv::Obj(vec![
        (
            "method".into(),
            Jv::Obj(vec![
                ("f".into(), Jv::Str(fit.method.f.clone())),
                ("omega".into(), Jv::Str(fit.method.omega.clone())),
                ("solver".into(), Jv::Str(fit.method.solver.clone())),
            ]),
        ),
        ("theta_hat".into(), Jv::Obj(theta)),
        ("std_errors".into(), std_errors),
        ("objective".into(), Jv::Num(fit.objective)),
        ("converged".into(), Jv::Bool(fit.converged)),
        ("iterations".into(), Jv::Int(fit.iterations as i64)),
        ("projected".into(), Jv::Bool(fit.projected)),
        (
            "failed_processes".into(),
            Jv::Arr(
                fit.failed_processes
                    .iter()
                    .map(|k| Jv::Str(k.tag().into()))
                    .collect(),
            ),
        ),
        ("scales".into(), Jv::Arr(scales)),
        ("units".into(), Jv::Str("per-sample".into())),
    ])
    .to_json()
}

pub fn write_fit_report(path: &Path, fit: &FitResult, est: &WvEstimate) -> Result<()> {
    fs::write(path, fit_report_json(fit, est))?;
    Ok(())
}

/// Log-log plot data: empirical variance with confidence bounds and the
/// fitted overlay.
pub fn write_fit_plot_csv(path: &Path, fit: &FitResult, est: &WvEstimate) -> Result<()> {
    let mut out = String::from("level,tau_seconds,nu_hat,ci_lo,ci_hi,fitted\n");
    for (i, &level) in est.grid.levels().iter().enumerate() {
        let ci_lo = est.ci_lo.as_ref().map(|v| fmt_float(v[i])).unwrap_or_default();
        let ci_hi = est.ci_hi.as_ref().map(|v| fmt_float(v[i])).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            level,
            fmt_float(est.grid.tau_seconds(level, est.sample_rate_hz)),
            fmt_float(est.nu_hat[i]),
            ci_lo,
            ci_hi,
            fmt_float(fit.fitted_wv[i])
        );
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Experiment spec JSON
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(untagged)]
enum RawParam {
    Physical { value: f64, unit: String },
    Stored(BTreeMap<String, f64>),
}

#[derive(Deserialize)]
struct RawExperiment {
    truth: BTreeMap<String, RawParam>,
    #[serde(default)]
    quantity: Option<String>,
    #[serde(rename = "T")]
    t: usize,
    reps: usize,
    seed: u64,
    sample_rate_hz: f64,
    methods: Vec<String>,
    #[serde(default)]
    convention: Option<String>,
    #[serde(default)]
    grid_floor: Option<usize>,
    #[serde(default)]
    noiseless: bool,
}

/// Parse an experiment spec. Truth entries are either stored per-sample
/// parameters (`{"WN": {"sigma2": 1.7e-3}}`) or physical display values
/// with a unit (`{"WN": {"value": 0.157, "unit": "deg/sqrt(hr)"}}`); the
/// latter require the top-level `quantity` field.
pub fn read_experiment_json(path: &Path) -> Result<Experiment> {
    let raw: RawExperiment = serde_json::from_str(&fs::read_to_string(path)?)?;
    let quantity = match raw.quantity.as_deref() {
        None => None,
        Some(t) => Some(Quantity::from_tag(t).ok_or_else(|| {
            Error::Domain(format!("unknown quantity {t:?} (use gyro_rate or accel)"))
        })?),
    };
    let mut params = BTreeMap::new();
    for (tag, entry) in &raw.truth {
        let kind = parse_process_tag(tag)?;
        let stored = match entry {
            RawParam::Stored(map) => {
                let key = kind.param_key();
                if map.len() != 1 || !map.contains_key(key) {
                    return Err(Error::Domain(format!(
                        "process {tag} takes exactly one parameter named {key:?} \
                         (or a value/unit pair)"
                    )));
                }
                map[key]
            }
            RawParam::Physical { value, unit } => {
                let quantity = quantity.ok_or_else(|| {
                    Error::Domain(format!(
                        "process {tag} gives a physical unit but the experiment \
                         has no quantity field"
                    ))
                })?;
                let spec = UnitSpec {
                    quantity,
                    unit: unit.clone(),
                    sample_rate_hz: raw.sample_rate_hz,
                };
                let display = convert_units(*value, kind, Direction::ToPerSample, &spec)?;
                kind.from_display(display)
            }
        };
        params.insert(kind, stored);
    }
    let methods = raw
        .methods
        .iter()
        .map(|tag| {
            Method::from_tag(tag).ok_or_else(|| {
                Error::Domain(format!(
                    "unknown method {tag:?} (use gmwm, armav or avsm)"
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let exp = Experiment {
        truth: CompositeModel::new(params)?,
        t: raw.t,
        reps: raw.reps,
        seed: raw.seed,
        sample_rate_hz: raw.sample_rate_hz,
        methods,
        convention: parse_convention(raw.convention.as_deref())?,
        grid_floor: raw.grid_floor.unwrap_or(16),
        noiseless: raw.noiseless,
    };
    exp.validate()?;
    Ok(exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use tempfile::tempdir;

    #[test]
    fn float_format_round_trips_exactly() {
        for v in [
            0.1,
            1.0 / 3.0,
            2.5e-317,
            -9.87654321e200,
            1.712e-3,
            f64::MIN_POSITIVE,
        ] {
            let s = fmt_float(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{v} -> {s}");
        }
    }

    #[test]
    fn signal_round_trip_with_sidecar() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sig.csv");
        let signal = Signal::new(vec![1.0, -2.5, 3.25, 0.0, 1.0, 2.0, 3.0, 4.0], 250.0).unwrap();
        write_signal_csv(&path, &signal).unwrap();
        write_sidecar(&path, 250.0).unwrap();
        let back = read_signal_csv(&path, None).unwrap();
        assert_eq!(back.values, signal.values);
        assert_eq!(back.sample_rate_hz, 250.0);
        // Flag beats sidecar.
        let flagged = read_signal_csv(&path, Some(100.0)).unwrap();
        assert_eq!(flagged.sample_rate_hz, 100.0);
    }

    #[test]
    fn signal_parse_errors_cite_lines() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "1.0\nabc\n3.0\n").unwrap();
        match read_signal_csv(&path, Some(1.0)) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        fs::write(&path, "value\n1.0\nNaN\n3.0\n").unwrap();
        match read_signal_csv(&path, Some(1.0)) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_sample_rate_is_usage_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sig.csv");
        fs::write(&path, "value\n1.0\n2.0\n3.0\n4.0\n5.0\n6.0\n7.0\n8.0\n").unwrap();
        assert!(matches!(
            read_signal_csv(&path, None),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn wv_csv_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("wv.csv");
        let grid = ScaleGrid::explicit(1 << 10, vec![1, 2, 3]).unwrap();
        let est = WvEstimate {
            grid,
            convention: VarianceConvention::Av,
            nu_hat: vec![0.5, 0.26, 0.131],
            cov_hat: None,
            ci_lo: Some(vec![0.45, 0.22, 0.10]),
            ci_hi: Some(vec![0.55, 0.30, 0.16]),
            sample_rate_hz: 250.0,
        };
        write_wv_csv(&path, &est).unwrap();
        let back = read_wv_csv(&path, VarianceConvention::Av).unwrap();
        assert_eq!(back.grid.levels(), est.grid.levels());
        assert_eq!(back.grid.t(), est.grid.t());
        assert_eq!(back.nu_hat, est.nu_hat);
        assert_eq!(back.ci_lo, est.ci_lo);
        assert_relative_eq!(back.sample_rate_hz, 250.0, max_relative = 1e-12);
    }

    #[test]
    fn model_json_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = CompositeModel::from_pairs(&[
            (ProcessKind::Wn, 1.712e-3),
            (ProcessKind::Rw, 1.54e-13),
        ])
        .unwrap();
        write_model_json(&path, &model, VarianceConvention::Av).unwrap();
        let (back, convention) = read_model_json(&path).unwrap();
        assert_eq!(convention, VarianceConvention::Av);
        assert_eq!(back.param(ProcessKind::Wn), Some(1.712e-3));
        assert_eq!(back.param(ProcessKind::Rw), Some(1.54e-13));
    }

    #[test]
    fn model_json_rejects_wrong_key() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        fs::write(&path, r#"{"processes": {"WN": {"gamma2": 1.0}}}"#).unwrap();
        assert!(read_model_json(&path).is_err());
    }

    #[test]
    fn experiment_json_parses_both_truth_forms() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("exp.json");
        fs::write(
            &path,
            r#"{
              "truth": {
                "WN": {"value": 1.57e-1, "unit": "deg/sqrt(hr)"},
                "RW": {"gamma2": 1.54e-13}
              },
              "quantity": "gyro_rate",
              "T": 1024,
              "reps": 2,
              "seed": 9,
              "sample_rate_hz": 250.0,
              "methods": ["gmwm", "avsm"]
            }"#,
        )
        .unwrap();
        let exp = read_experiment_json(&path).unwrap();
        assert_eq!(exp.t, 1024);
        assert_eq!(exp.methods, vec![Method::Gmwm, Method::Avsm]);
        let sigma2 = exp.truth.param(ProcessKind::Wn).unwrap();
        let expected = (1.57e-1 / 60.0) * 250f64.sqrt();
        assert_relative_eq!(sigma2, expected * expected, max_relative = 1e-12);
        assert_eq!(exp.truth.param(ProcessKind::Rw), Some(1.54e-13));
        assert_eq!(exp.grid_floor, 16);
        assert!(!exp.noiseless);
    }

    #[test]
    fn experiment_json_rejects_unknown_method() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("exp.json");
        fs::write(
            &path,
            r#"{
              "truth": {"WN": {"sigma2": 1.0}},
              "T": 1024, "reps": 1, "seed": 0,
              "sample_rate_hz": 1.0,
              "methods": ["magic"]
            }"#,
        )
        .unwrap();
        assert!(read_experiment_json(&path).is_err());
    }

    #[test]
    fn emitted_json_is_parseable_and_ordered() {
        let body = Jv::Obj(vec![
            ("b".into(), Jv::Num(0.1)),
            ("a".into(), Jv::Arr(vec![Jv::Int(1), Jv::Null, Jv::Bool(true)])),
            ("s".into(), Jv::Str("with \"quotes\" and \\".into())),
        ])
        .to_json();
        let parsed: serde_json::Value = serde_json::from_str(&body).unwrap();
        assert_eq!(parsed["a"][0], serde_json::json!(1));
        assert_eq!(parsed["s"], serde_json::json!("with \"quotes\" and \\"));
        assert_relative_eq!(parsed["b"].as_f64().unwrap(), 0.1, max_relative = 1e-15);
        // Key order is insertion order, not alphabetical.
        assert!(body.find("\"b\"").unwrap() < body.find("\"a\"").unwrap());
    }
}
