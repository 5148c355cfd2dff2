//! Python bindings: configuration, calibration, online sessions, the
//! composer, log replay, and the metrics lab.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use speller::composer::{CompositionState, Key};
use speller::eventlog::read_log;
use speller::metrics::{self, PConvention, ReportFormat};
use speller::session::{self, replay, Mode, ProviderKind, SessionConfig as CoreConfig, SessionError};
use speller::suggest::{Provenance, SuggestionSet};
use speller::swlda::{self, TrainedModel};

fn session_err(e: SessionError) -> PyErr {
    match e {
        SessionError::Config(m) | SessionError::Provider(m) => PyValueError::new_err(m),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Convert any serialisable value into plain Python objects.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_enum<T: serde::de::DeserializeOwned>(what: &str, s: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| PyValueError::new_err(format!("unknown {what} {s:?}")))
}

/// Session configuration. Built from TOML, or defaults.
#[pyclass(name = "SessionConfig", from_py_object)]
#[derive(Clone)]
struct PySessionConfig {
    inner: CoreConfig,
}

#[pymethods]
impl PySessionConfig {
    #[new]
    #[pyo3(signature = (toml=None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(t) => CoreConfig::from_toml(t).map_err(session_err)?,
            None => CoreConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn default_toml() -> String {
        CoreConfig::default_toml()
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode.as_str()
    }

    #[setter]
    fn set_mode(&mut self, mode: &str) -> PyResult<()> {
        self.inner.mode = parse_enum::<Mode>("mode", mode)?;
        Ok(())
    }

    #[getter]
    fn target(&self) -> String {
        self.inner.target.clone()
    }

    #[setter]
    fn set_target(&mut self, target: String) -> PyResult<()> {
        let mut next = self.inner.clone();
        next.target = target;
        next.validate().map_err(session_err)?;
        self.inner = next;
        Ok(())
    }

    #[getter]
    fn provider(&self) -> PyResult<String> {
        Ok(serde_json::to_value(self.inner.provider.kind).map_err(value_err)?.as_str().unwrap_or_default().to_string())
    }

    #[setter]
    fn set_provider(&mut self, kind: &str) -> PyResult<()> {
        self.inner.provider.kind = parse_enum::<ProviderKind>("provider", kind)?;
        Ok(())
    }

    /// Subject SNR: P300 amplitude over noise SD, with noise SD 1.
    fn set_snr(&mut self, snr: f64) -> PyResult<()> {
        let seed = self.inner.subject.seed;
        let params = speller::subject::SubjectParams { noise_color: self.inner.subject.noise_color, ..speller::subject::SubjectParams::with_snr(snr, seed) };
        params.validate().map_err(value_err)?;
        self.inner.subject = params;
        Ok(())
    }

    fn __repr__(&self) -> String {
        format!("SessionConfig(mode={:?}, seed={}, target={:?})", self.inner.mode.as_str(), self.inner.seed, self.inner.target)
    }
}

/// A trained SWLDA classifier.
#[pyclass(name = "Model", from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: TrainedModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: TrainedModel::from_reader(text.as_bytes()).map_err(value_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        let mut out = Vec::new();
        self.inner.to_writer(&mut out).map_err(value_err)?;
        String::from_utf8(out).map_err(value_err)
    }

    /// Indices of the selected features.
    #[getter]
    fn selected(&self) -> Vec<usize> {
        self.inner.selected.clone()
    }

    /// Classifier score for one 240-value feature vector.
    fn score(&self, values: Vec<f64>) -> PyResult<f64> {
        self.inner.score_values(&values).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("Model(selected={})", self.inner.selected.len())
    }
}

/// Composition state driven by key labels ("A", "Sp", "SLOT0", ...).
#[pyclass(name = "Composer")]
struct PyComposer {
    inner: CompositionState,
}

#[pymethods]
impl PyComposer {
    #[new]
    #[pyo3(signature = (target=None))]
    fn new(target: Option<String>) -> Self {
        Self { inner: CompositionState::new(target) }
    }

    /// Apply one key; returns a warning string for an empty slot.
    fn apply(&mut self, key: &str) -> PyResult<Option<String>> {
        let key: Key = key.parse().map_err(value_err)?;
        let (next, warning) = self.inner.apply_key(key).map_err(value_err)?;
        self.inner = next;
        Ok(warning.map(|w| format!("{w:?}")))
    }

    fn set_suggestions(&mut self, candidates: Vec<String>) {
        self.inner.suggestions = SuggestionSet::new(candidates, Provenance::Mock);
    }

    #[getter]
    fn suggestions(&self) -> Vec<String> {
        self.inner.suggestions.candidates.clone()
    }

    #[getter]
    fn composed(&self) -> String {
        self.inner.composed.clone()
    }

    #[getter]
    fn display(&self) -> String {
        self.inner.display_text()
    }

    #[getter]
    fn finished(&self) -> bool {
        self.inner.finished
    }
}

/// Run calibration and train a model.
#[pyfunction]
fn calibrate(py: Python<'_>, config: PySessionConfig) -> PyResult<PyModel> {
    let cfg = config.inner;
    let res = py.detach(move || session::run_calibration(&cfg, &mut session::sink_log())).map_err(session_err)?;
    Ok(PyModel { inner: res.model })
}

/// Flash-level AUC of `model` on a fresh simulated calibration run.
#[pyfunction]
fn held_out_auc(py: Python<'_>, model: PyModel, config: PySessionConfig, seed: u64) -> PyResult<f64> {
    py.detach(move || session::held_out_auc(&model.inner, &config.inner, seed)).map_err(session_err)
}

/// Validation session; returns {"passed", "passed_at", "trials": [[cued, selected], ...]}.
#[pyfunction]
fn validate<'py>(py: Python<'py>, model: PyModel, config: PySessionConfig) -> PyResult<Bound<'py, PyAny>> {
    let res = py
        .detach(move || session::run_validation(&model.inner, &config.inner, &mut session::sink_log()))
        .map_err(session_err)?;
    let trials: Vec<(String, String)> = res.trials.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    to_py(py, &serde_json::json!({ "passed": res.passed, "passed_at": res.passed_at, "trials": trials }))
}

/// One simulated online sentence; returns the outcome and the JSONL log.
#[pyfunction]
fn run_online<'py>(py: Python<'py>, model: PyModel, config: PySessionConfig) -> PyResult<Bound<'py, PyAny>> {
    let (res, log) = py
        .detach(move || {
            let cfg = config.inner;
            let provider = session::make_provider(&cfg)?;
            let (log, sink) = session::memory_log();
            let res = session::run_online(&model.inner, &cfg, provider, log)?;
            Ok::<_, SessionError>((res, sink.contents()))
        })
        .map_err(session_err)?;
    let log = String::from_utf8(log).map_err(value_err)?;
    to_py(
        py,
        &serde_json::json!({
            "composed": res.final_composed,
            "n_selections": res.n_selections,
            "end": res.end,
            "duration_ms": res.duration_ms,
            "log": log,
        }),
    )
}

/// Re-score a log's features through its model; returns {"selections", "mismatches"}.
#[pyfunction]
fn replay_log<'py>(py: Python<'py>, log: &str) -> PyResult<Bound<'py, PyAny>> {
    let recs = read_log(log.as_bytes()).map_err(value_err)?;
    let rep = replay::replay(&recs).map_err(session_err)?;
    to_py(py, &serde_json::json!({ "selections": rep.selections, "mismatches": rep.mismatches.len() }))
}

/// Metrics report for every sentence in a JSONL log.
#[pyfunction]
#[pyo3(signature = (log, format="json", p="by_task"))]
fn report(log: &str, format: &str, p: &str) -> PyResult<String> {
    let recs = read_log(log.as_bytes()).map_err(value_err)?;
    let conv: PConvention = parse_enum("p convention", p)?;
    let fmt = match format {
        "text" => ReportFormat::Text,
        "csv" => ReportFormat::Csv,
        "json" => ReportFormat::Json,
        other => return Err(PyValueError::new_err(format!("unknown format {other:?}"))),
    };
    let reports = metrics::records_from_log(&recs)
        .iter()
        .map(|r| metrics::report_for(r, conv))
        .collect::<Result<Vec<_>, _>>()
        .map_err(value_err)?;
    metrics::emit_report(&reports, fmt).map_err(value_err)
}

/// Bits per selection for accuracy `p` over `n` symbols.
#[pyfunction]
fn itr_bits(p: f64, n: f64) -> PyResult<f64> {
    metrics::itr_bits_per_selection(p, n).map_err(value_err)
}

/// Bit rate in bits/min with the characters-per-selection factor.
#[pyfunction]
fn itr_star(bits: f64, t_s: f64, alpha: f64) -> PyResult<f64> {
    metrics::itr_star(bits, t_s, alpha).map_err(value_err)
}

/// Keystroke savings from counts; returns {"ks", "ks_wc_max", "ks_wp_max", "ks_dr"} in percent.
#[pyfunction]
fn keystroke_metrics<'py>(py: Python<'py>, chars: usize, words: usize, keystrokes: usize) -> PyResult<Bound<'py, PyAny>> {
    let k = metrics::keystroke_metrics_from_counts(chars, words, keystrokes).map_err(value_err)?;
    to_py(py, &serde_json::json!({ "ks": k.ks, "ks_wc_max": k.ks_wc_max, "ks_wp_max": k.ks_wp_max, "ks_dr": k.ks_dr }))
}

#[pyfunction]
fn feature_layout_hash() -> String {
    swlda::feature_layout_hash()
}

#[pymodule]
fn speller_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySessionConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyComposer>()?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(held_out_auc, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(run_online, m)?)?;
    m.add_function(wrap_pyfunction!(replay_log, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add_function(wrap_pyfunction!(itr_bits, m)?)?;
    m.add_function(wrap_pyfunction!(itr_star, m)?)?;
    m.add_function(wrap_pyfunction!(keystroke_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(feature_layout_hash, m)?)?;
    Ok(())
}
