//! Python bindings. Matrices cross the boundary as lists of row lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use mtgcn::config::{parse_config_str_with, parse_config_with, ConfigOverrides, ExperimentConfig};
use mtgcn::graph::{planted_partition, renormalize, row_normalize_features, write_bundle, GraphBundle, PlantedPartition};
use mtgcn::model::{AuxTasks, CorruptionKind, CorruptionSpec, ReconstructionMode};
use mtgcn::tasks::TaskWeights;
use mtgcn::tensor::{DenseMatrix, Tape};
use mtgcn::train::{AggregateReport, Checkpoint, PreparedData, RunReport};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn core_err(e: mtgcn::Error) -> PyErr {
    match e {
        mtgcn::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => value_err(other),
    }
}

/// Row lists to a dense matrix; every row must have the same length.
pub fn to_dense(rows: &[Vec<f64>]) -> Result<DenseMatrix, String> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(format!("row {i} has {} entries, expected {cols}", rows[i].len()));
    }
    DenseMatrix::from_shape_vec((rows.len(), cols), rows.concat()).map_err(|e| e.to_string())
}

pub fn to_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// A node-classification dataset.
#[pyclass(name = "Bundle", frozen)]
struct PyBundle {
    inner: GraphBundle,
}

#[pymethods]
impl PyBundle {
    /// Reads a bundle directory.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = mtgcn::load_bundle(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    /// Planted-partition graph with class-correlated bag-of-words features.
    #[staticmethod]
    #[pyo3(signature = (seed, classes=3, nodes_per_class=40, features=30))]
    fn synthetic(seed: u64, classes: usize, nodes_per_class: usize, features: usize) -> PyResult<Self> {
        let spec = PlantedPartition {
            classes,
            nodes_per_class,
            features,
            ..PlantedPartition::default()
        };
        let inner = planted_partition(&spec, seed).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_bundle(&self.inner, &path).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_features(&self) -> usize {
        self.inner.num_features()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes
    }

    #[getter]
    fn labels(&self) -> Vec<Option<usize>> {
        self.inner.labels.clone()
    }

    #[getter]
    fn train(&self) -> Vec<usize> {
        self.inner.splits.train.clone()
    }

    #[getter]
    fn val(&self) -> Vec<usize> {
        self.inner.splits.val.clone()
    }

    #[getter]
    fn test(&self) -> Vec<usize> {
        self.inner.splits.test.clone()
    }

    /// Raw feature rows.
    fn features(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.features)
    }

    /// `(i, j, value)` entries of the renormalized adjacency, row-major.
    fn renormalized_adjacency(&self) -> PyResult<Vec<(usize, usize, f64)>> {
        let a = renormalize(&self.inner.adjacency).map_err(value_err)?;
        Ok(a.matrix().triplets().collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Bundle(name={:?}, nodes={}, features={}, classes={})",
            self.inner.name,
            self.inner.num_nodes(),
            self.inner.num_features(),
            self.inner.num_classes
        )
    }
}

/// A validated experiment configuration.
#[pyclass(name = "Config", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

fn overrides(
    dataset: Option<PathBuf>,
    runs: Option<usize>,
    seed: Option<u64>,
    epochs: Option<usize>,
) -> ConfigOverrides {
    ConfigOverrides {
        dataset,
        runs,
        seed,
        epochs,
        output_dir: None,
    }
}

#[pymethods]
impl PyConfig {
    /// Parses a TOML config file; relative paths resolve against its folder.
    #[staticmethod]
    #[pyo3(signature = (path, dataset=None, runs=None, seed=None, epochs=None))]
    fn from_file(
        path: PathBuf,
        dataset: Option<PathBuf>,
        runs: Option<usize>,
        seed: Option<u64>,
        epochs: Option<usize>,
    ) -> PyResult<Self> {
        let inner = parse_config_with(&path, &overrides(dataset, runs, seed, epochs)).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Parses a TOML document; relative paths resolve against `base_dir`.
    #[staticmethod]
    #[pyo3(signature = (text, base_dir=PathBuf::from("."), dataset=None, runs=None, seed=None, epochs=None))]
    fn from_toml(
        text: &str,
        base_dir: PathBuf,
        dataset: Option<PathBuf>,
        runs: Option<usize>,
        seed: Option<u64>,
        epochs: Option<usize>,
    ) -> PyResult<Self> {
        let origin = PathBuf::from("<string>");
        let inner = parse_config_str_with(text, &origin, base_dir, &overrides(dataset, runs, seed, epochs))
            .map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Defaults for `bundle`, optionally enabling auxiliary heads and
    /// overriding how many coordinates FR and ER corrupt.
    #[staticmethod]
    #[pyo3(signature = (bundle, ae=false, fr=false, er=false, fr_count=None, er_count=None))]
    fn for_bundle(
        bundle: &PyBundle,
        ae: bool,
        fr: bool,
        er: bool,
        fr_count: Option<usize>,
        er_count: Option<usize>,
    ) -> PyResult<Self> {
        let mut inner = ExperimentConfig::with_dataset(bundle.inner.name.clone());
        inner.tasks = AuxTasks { ae, fr, er };
        inner.fr.corrupted_count = fr_count.unwrap_or(inner.fr.corrupted_count);
        inner.er.corrupted_count = er_count.unwrap_or(inner.er.corrupted_count);
        inner.name = mtgcn::config::network_label(&inner.tasks);
        inner.validate_for(bundle.inner.num_features()).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn dataset(&self) -> PathBuf {
        self.inner.dataset_path()
    }

    #[getter]
    fn epochs(&self) -> usize {
        self.inner.epochs
    }

    #[setter]
    fn set_epochs(&mut self, epochs: usize) -> PyResult<()> {
        self.update(|c| c.epochs = epochs)
    }

    #[getter]
    fn runs(&self) -> usize {
        self.inner.runs
    }

    #[setter]
    fn set_runs(&mut self, runs: usize) -> PyResult<()> {
        self.update(|c| c.runs = runs)
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
    fn hidden_layers(&self) -> usize {
        self.inner.hidden_layers
    }

    /// `(main, ae, fr, er)` weights as applied: disabled heads read 0.
    #[getter]
    fn weights(&self) -> (f64, f64, f64, f64) {
        let w = self.inner.effective_weights();
        (w.main, w.ae, w.fr, w.er)
    }

    #[pyo3(signature = (ae=None, fr=None, er=None))]
    fn set_weights(&mut self, ae: Option<f64>, fr: Option<f64>, er: Option<f64>) -> PyResult<()> {
        self.update(|c| {
            let w = &mut c.weights;
            *w = TaskWeights {
                ae: ae.unwrap_or(w.ae),
                fr: fr.unwrap_or(w.fr),
                er: er.unwrap_or(w.er),
                ..*w
            };
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }
}

impl PyConfig {
    /// Applies `f` and keeps the result only if it still validates.
    fn update(&mut self, f: impl FnOnce(&mut ExperimentConfig)) -> PyResult<()> {
        let mut next = self.inner.clone();
        f(&mut next);
        next.validate().map_err(value_err)?;
        self.inner = next;
        Ok(())
    }
}

/// Outcome of one training run.
#[pyclass(name = "RunReport", frozen, from_py_object)]
#[derive(Clone)]
struct PyRunReport {
    inner: RunReport,
}

#[pymethods]
impl PyRunReport {
    #[getter]
    fn network(&self) -> String {
        self.inner.network.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn best_epoch(&self) -> usize {
        self.inner.best_epoch
    }

    #[getter]
    fn best_val_accuracy(&self) -> f64 {
        self.inner.best_val_accuracy
    }

    #[getter]
    fn test_accuracy(&self) -> f64 {
        self.inner.test_accuracy
    }

    #[getter]
    fn wall_clock_secs(&self) -> f64 {
        self.inner.wall_clock_secs
    }

    fn train_losses(&self) -> Vec<f64> {
        self.inner.epochs.iter().map(|e| e.train_loss).collect()
    }

    fn val_losses(&self) -> Vec<f64> {
        self.inner.epochs.iter().map(|e| e.val_loss).collect()
    }

    fn learning_rates(&self) -> Vec<f64> {
        self.inner.epochs.iter().map(|e| e.lr).collect()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }
}

/// Mean and standard error of the mean over runs.
#[pyclass(name = "Aggregate", frozen)]
struct PyAggregate {
    inner: AggregateReport,
}

#[pymethods]
impl PyAggregate {
    #[getter]
    fn network(&self) -> String {
        self.inner.network.clone()
    }

    #[getter]
    fn mean(&self) -> f64 {
        self.inner.mean
    }

    #[getter]
    fn sem(&self) -> f64 {
        self.inner.sem
    }

    #[getter]
    fn val_mean(&self) -> f64 {
        self.inner.val_mean
    }

    #[getter]
    fn val_sem(&self) -> f64 {
        self.inner.val_sem
    }

    fn test_accuracies(&self) -> Vec<f64> {
        self.inner.test_accuracies()
    }
}

/// Best-epoch parameters of a run.
#[pyclass(name = "Checkpoint", frozen)]
struct PyCheckpoint {
    inner: Checkpoint,
}

#[pymethods]
impl PyCheckpoint {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Checkpoint::load(&path).map_err(core_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(core_err)
    }

    #[getter]
    fn best_epoch(&self) -> usize {
        self.inner.best_epoch
    }

    /// `(val_loss, val_accuracy, test_accuracy)` with dropout off.
    fn evaluate(&self, bundle: &PyBundle) -> PyResult<(f64, f64, f64)> {
        let e = self.inner.evaluate(bundle.inner.clone()).map_err(core_err)?;
        Ok((e.val_loss, e.val_accuracy, e.test_accuracy))
    }
}

/// Trains one run from `seed` (default: the config's seed).
#[pyfunction]
#[pyo3(signature = (bundle, config, seed=None))]
fn train_run(py: Python<'_>, bundle: &PyBundle, config: &PyConfig, seed: Option<u64>) -> PyResult<(PyRunReport, PyCheckpoint)> {
    let cfg = &config.inner;
    let seed = seed.unwrap_or(cfg.seed);
    let out = py
        .detach(|| mtgcn::train_run(&bundle.inner, cfg, seed))
        .map_err(core_err)?;
    let checkpoint = Checkpoint::from_run(&out, cfg);
    Ok((PyRunReport { inner: out.report }, PyCheckpoint { inner: checkpoint }))
}

/// Trains `config.runs` runs with seeds `config.seed + k`.
#[pyfunction]
fn train(py: Python<'_>, bundle: &PyBundle, config: &PyConfig) -> PyResult<Vec<PyRunReport>> {
    let cfg = &config.inner;
    let outs = py
        .detach(|| {
            let data = PreparedData::new(bundle.inner.clone(), cfg.normalize_features)?;
            mtgcn::train::train_runs(&data, cfg)
        })
        .map_err(core_err)?;
    Ok(outs.into_iter().map(|o| PyRunReport { inner: o.report }).collect())
}

#[pyfunction]
fn aggregate(reports: Vec<PyRunReport>) -> PyResult<PyAggregate> {
    let reports: Vec<RunReport> = reports.into_iter().map(|r| r.inner).collect();
    Ok(PyAggregate {
        inner: mtgcn::aggregate(&reports).map_err(core_err)?,
    })
}

fn feature_spec(dim: usize, indices: Vec<usize>) -> PyResult<CorruptionSpec> {
    CorruptionSpec::new(CorruptionKind::Features, dim, indices, ReconstructionMode::Full).map_err(core_err)
}

/// Zeroes the given feature columns.
#[pyfunction]
fn corrupt_features(x: Vec<Vec<f64>>, indices: Vec<usize>) -> PyResult<Vec<Vec<f64>>> {
    let x = to_dense(&x).map_err(PyValueError::new_err)?;
    let spec = feature_spec(x.ncols(), indices)?;
    Ok(to_rows(&mtgcn::model::corrupt_features(&spec, &x).map_err(core_err)?))
}

/// Keeps only the given columns, in ascending order.
#[pyfunction]
fn select_columns(x: Vec<Vec<f64>>, indices: Vec<usize>) -> PyResult<Vec<Vec<f64>>> {
    let x = to_dense(&x).map_err(PyValueError::new_err)?;
    let spec = feature_spec(x.ncols(), indices)?;
    Ok(to_rows(&mtgcn::model::select_columns(&spec, &x).map_err(core_err)?))
}

/// Divides every row by its L1 norm; all-zero rows stay zero.
#[pyfunction]
fn row_normalize(x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let x = to_dense(&x).map_err(PyValueError::new_err)?;
    Ok(to_rows(&row_normalize_features(&x)))
}

/// One graph convolution `Â X B` on the bundle's graph.
#[pyfunction]
fn gc_forward(bundle: &PyBundle, x: Vec<Vec<f64>>, weight: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let adj = renormalize(&bundle.inner.adjacency).map_err(value_err)?;
    let mut tape = Tape::new();
    let x = tape.constant(to_dense(&x).map_err(PyValueError::new_err)?);
    let w = tape.constant(to_dense(&weight).map_err(PyValueError::new_err)?);
    let y = mtgcn::model::gc_forward(&mut tape, &adj, x, w).map_err(core_err)?;
    Ok(to_rows(tape.value(y)))
}

#[pymodule]
pub fn pymtgcn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBundle>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyRunReport>()?;
    m.add_class::<PyAggregate>()?;
    m.add_class::<PyCheckpoint>()?;
    m.add_function(wrap_pyfunction!(train_run, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(corrupt_features, m)?)?;
    m.add_function(wrap_pyfunction!(select_columns, m)?)?;
    m.add_function(wrap_pyfunction!(row_normalize, m)?)?;
    m.add_function(wrap_pyfunction!(gc_forward, m)?)?;
    Ok(())
}
