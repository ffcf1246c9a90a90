//! Python bindings: corpus synthesis, square fitting, embedding tables and
//! retrieval, mining, evaluation, checkpoints, and the CLI entry point.

use std::path::PathBuf;

use patchwork::corpus::{AberrationSpec, Corpus, CorpusManifest, SceneFamily, SynthConfig};
use patchwork::embed::{self, PatchRef};
use patchwork::eval::{self, EvalSet};
use patchwork::mining::{self, MiningConfig, ROLE_OFFSETS};
use patchwork::nn::{grad_check as nn_grad_check, GradCheckOptions, Tensor};
use patchwork::pretext::{self, PairNet, PairNetConfig, PairObjective, SavedModel};
use patchwork::sampler::{ColorProjection, Patch, SamplerConfig};
use patchwork::{rng, Error};
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn err(e: Error) -> PyErr {
    match e {
        Error::NotFound { .. } | Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Numeric(_) => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Serializes through JSON into plain Python objects.
fn to_py<'py, T: serde::Serialize + ?Sized>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Runs a CLI subcommand in-process and returns its exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    patchwork::cli::run(std::iter::once("patchwork".to_string()).chain(args))
}

#[pyfunction]
#[pyo3(signature = (out_dir, n_images, seed, family="structured", width=160, height=160, green_scale=None))]
fn synth_corpus(
    out_dir: PathBuf,
    n_images: usize,
    seed: u64,
    family: &str,
    width: usize,
    height: usize,
    green_scale: Option<f64>,
) -> PyResult<usize> {
    let family: SceneFamily = family.parse().map_err(err)?;
    let aberration = match green_scale {
        Some(s) => AberrationSpec::new(s).map_err(err)?,
        None => AberrationSpec::disabled(),
    };
    let cfg = SynthConfig { width, height, family, aberration };
    Ok(patchwork::corpus::synth_corpus(n_images, &cfg, seed, out_dir).map_err(err)?.len())
}

/// Best square through four `(x, y)` points in TL, TR, BL, BR order.
#[pyfunction]
fn fit_square<'py>(py: Python<'py>, points: Vec<(f64, f64)>, avg_side: f64) -> PyResult<Bound<'py, PyAny>> {
    let pts: [(f64, f64); 4] = points
        .try_into()
        .map_err(|_| PyValueError::new_err("fit_square needs exactly four points"))?;
    let fit = mining::fit_square(&pts.map(|(x, y)| [x, y]), avg_side).map_err(err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("center", (fit.center[0], fit.center[1]))?;
    d.set_item("side", fit.side)?;
    d.set_item("normalized_error", fit.normalized_error)?;
    d.set_item("verified", fit.verified)?;
    Ok(d.into_any())
}

#[pyfunction]
fn role_offsets() -> Vec<(f64, f64)> {
    ROLE_OFFSETS.iter().map(|d| (d[0], d[1])).collect()
}

/// The 3×3 green-magenta nulling projection.
#[pyfunction]
fn projection_matrix() -> Vec<Vec<f64>> {
    ColorProjection::green_magenta().matrix.iter().map(|r| r.to_vec()).collect()
}

#[pyfunction]
fn normalized_correlation(u: Vec<f32>, v: Vec<f32>) -> PyResult<f64> {
    embed::normalized_correlation(&u, &v).map_err(err)
}

#[pyclass(module = "patchwork_py")]
struct EmbeddingTable {
    inner: embed::EmbeddingTable,
}

#[pymethods]
impl EmbeddingTable {
    #[new]
    fn new(dim: usize) -> Self {
        Self { inner: embed::EmbeddingTable::new(dim) }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: embed::EmbeddingTable::load(&path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    /// Appends a row for patch `"image_id:y:x:size"`.
    fn push(&mut self, patch: &str, vector: Vec<f32>) -> PyResult<()> {
        let r: PatchRef = patch.parse().map_err(err)?;
        self.inner.push(r, &vector).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn patch(&self, row: usize) -> PyResult<String> {
        self.check(row)?;
        Ok(self.inner.patch(row).to_string())
    }

    fn vector(&self, row: usize) -> PyResult<Vec<f32>> {
        self.check(row)?;
        Ok(self.inner.vector(row).to_vec())
    }

    /// Top-`k` `(patch, score)` neighbors of a stored row, itself excluded.
    fn knn(&self, row: usize, k: usize) -> PyResult<Vec<(String, f64)>> {
        let l = embed::knn_query_row(&self.inner, row, k).map_err(err)?;
        Ok(l.hits.into_iter().map(|h| (h.patch, h.score)).collect())
    }

    fn query(&self, vector: Vec<f32>, k: usize) -> PyResult<Vec<(String, f64)>> {
        let l = embed::knn_query(&self.inner, &vector, k).map_err(err)?;
        Ok(l.hits.into_iter().map(|h| (h.patch, h.score)).collect())
    }

    /// Constellation mining over a per-image grid table; cluster records as
    /// dicts, ranked.
    #[pyo3(signature = (n_seeds=512, top_k=20, seed=0))]
    fn mine<'py>(&self, py: Python<'py>, n_seeds: usize, top_k: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let cfg = MiningConfig { n_seeds, top_k, seed };
        let recs = py.detach(|| mining::mine_constellations(&self.inner, &cfg)).map_err(err)?;
        to_py(py, &recs)
    }
}

impl EmbeddingTable {
    fn check(&self, row: usize) -> PyResult<()> {
        if row < self.inner.len() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("row {row} of {}", self.inner.len())))
        }
    }
}

fn patch_tensor(size: usize, patches: Vec<Vec<f32>>) -> PyResult<Tensor> {
    let ps: Vec<Patch> = patches
        .into_iter()
        .map(|d| {
            if d.len() == size * size * 3 {
                Ok(Patch::new(size, d))
            } else {
                Err(PyValueError::new_err(format!("patch has {} values, expected {}", d.len(), size * size * 3)))
            }
        })
        .collect::<PyResult<_>>()?;
    pretext::patch_batch(&ps.iter().collect::<Vec<_>>()).map_err(err)
}

/// A trained or freshly initialized relative-position pair network.
/// Patches are flat row-major RGB lists, already preprocessed.
#[pyclass(module = "patchwork_py")]
struct Model {
    net: PairNet,
    meta: Option<patchwork::pretext::ModelMeta>,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let saved = SavedModel::load(&path).map_err(err)?;
        let net = saved.model.as_pair().map_err(err)?.clone();
        Ok(Self { net, meta: Some(saved.meta) })
    }

    #[staticmethod]
    #[pyo3(signature = (seed=0, patch_size=32, lrn=false))]
    fn init(seed: u64, patch_size: usize, lrn: bool) -> PyResult<Self> {
        let net = PairNet::new(PairNetConfig::desk(patch_size, lrn), &mut rng::stream(seed, u64::MAX)).map_err(err)?;
        Ok(Self { net, meta: None })
    }

    #[getter]
    fn patch_size(&self) -> usize {
        self.net.config.patch_size
    }

    #[getter]
    fn step(&self) -> Option<usize> {
        self.meta.as_ref().map(|m| m.step)
    }

    /// Eight-way logits per `(a, b)` pair.
    fn logits(&self, a: Vec<Vec<f32>>, b: Vec<Vec<f32>>) -> PyResult<Vec<Vec<f64>>> {
        let p = self.net.config.patch_size;
        let (ta, tb) = (patch_tensor(p, a)?, patch_tensor(p, b)?);
        let y = self.net.forward_infer(&ta, &tb).map_err(err)?;
        Ok((0..y.batch()).map(|i| y.sample(i).to_vec()).collect())
    }

    fn predict(&self, a: Vec<Vec<f32>>, b: Vec<Vec<f32>>) -> PyResult<Vec<usize>> {
        Ok(self.logits(a, b)?.iter().map(|r| patchwork::nn::ops::argmax(r)).collect())
    }

    #[pyo3(signature = (patches, layer=pretext::EMBEDDING_LAYER))]
    fn embed(&self, patches: Vec<Vec<f32>>, layer: &str) -> PyResult<Vec<Vec<f64>>> {
        let x = patch_tensor(self.net.config.patch_size, patches)?;
        let y = self.net.embed(&x, layer).map_err(err)?;
        Ok((0..y.batch()).map(|i| y.sample(i).to_vec()).collect())
    }
}

#[pyfunction]
#[pyo3(signature = (model_path, manifest_path, n_images=500, pairs_per_image=32, seed=0))]
fn pretext_accuracy<'py>(
    py: Python<'py>,
    model_path: PathBuf,
    manifest_path: PathBuf,
    n_images: usize,
    pairs_per_image: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let rep = py
        .detach(|| {
            let saved = SavedModel::load(&model_path)?;
            let corpus = Corpus::from_manifest_path(&manifest_path, None)?;
            eval::pretext_accuracy(&saved, &corpus, n_images, pairs_per_image, seed)
        })
        .map_err(err)?;
    to_py(py, &rep)
}

/// Curve over sets given in ranked order.
#[pyfunction]
fn purity_coverage<'py>(py: Python<'py>, sets: Vec<Vec<String>>, manifest_path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let manifest = CorpusManifest::load(&manifest_path).map_err(err)?;
    let cats = manifest.categories();
    let sets: Vec<EvalSet> = sets.into_iter().map(|s| EvalSet::new(s, &cats)).collect::<Result<_, _>>().map_err(err)?;
    let curve = eval::purity_coverage(&sets, &manifest).map_err(err)?;
    to_py(py, &curve)
}

#[pyfunction]
#[pyo3(signature = (manifest_path, n_samples=10000, seed=0, patch_size=32))]
fn chance_rmse(manifest_path: PathBuf, n_samples: usize, seed: u64, patch_size: usize) -> PyResult<f64> {
    let corpus = Corpus::from_manifest_path(&manifest_path, None).map_err(err)?;
    let cfg = SamplerConfig { patch_size, ..SamplerConfig::desk() };
    eval::chance_rmse(&corpus, &cfg, n_samples, seed).map_err(err)
}

/// Largest relative error of a finite-difference check on the desk pair net.
#[pyfunction]
#[pyo3(signature = (seed=0, lrn=false, batch=3))]
fn grad_check(py: Python<'_>, seed: u64, lrn: bool, batch: usize) -> PyResult<f64> {
    py.detach(|| {
        let mut r = rng::stream(seed, 0);
        let net = PairNet::new(PairNetConfig::desk(32, lrn), &mut r)?;
        let input = |off: u64| {
            let mut g = rng::stream(seed, off);
            let data = (0..batch * 3 * 32 * 32).map(|_| StandardNormal.sample(&mut g)).collect();
            Tensor::new(vec![batch, 3, 32, 32], data)
        };
        let (a, b) = (input(1)?, input(2)?);
        let labels = (0..batch).map(|i| i % 8).collect();
        let mut obj = PairObjective { net, a, b, labels };
        nn_grad_check(&mut obj, &GradCheckOptions { seed, ..Default::default() }).map(|rep| rep.max_rel_err())
    })
    .map_err(err)
}

#[pymodule]
fn patchwork_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add_function(wrap_pyfunction!(synth_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(fit_square, m)?)?;
    m.add_function(wrap_pyfunction!(role_offsets, m)?)?;
    m.add_function(wrap_pyfunction!(projection_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(pretext_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(purity_coverage, m)?)?;
    m.add_function(wrap_pyfunction!(chance_rmse, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    m.add_class::<EmbeddingTable>()?;
    m.add_class::<Model>()?;
    Ok(())
}
