//! Python bindings for the RVQ tokenizer toolkit.
//!
//! Exposes codebook training, encode/decode, masking, loss combination,
//! input assembly, and the synthetic probe as the `art_rvq` module. Features
//! cross the boundary as lists of row vectors; token grids as one list of
//! codes per layer.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use art_core::assembly::{self, ClapProjection, EmbeddingConfig, EmbeddingTableSet};
use art_core::kmeans::{KmeansConfig, PointSet};
use art_core::mcm::{self, LossWeights, McmConfig};
use art_core::persistence;
use art_core::probe::{self, SyntheticSpec};
use art_core::rvq::{self, FeatureSequence, TokenSequence};
use art_core::Error;

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn features_from_rows(rows: Vec<Vec<f32>>) -> PyResult<PointSet> {
    PointSet::from_rows(&rows).map_err(to_py_err)
}

fn grid_to_layers(tokens: &TokenSequence) -> Vec<Vec<u32>> {
    (0..tokens.num_layers())
        .map(|n| tokens.layer_codes(n).to_vec())
        .collect()
}

fn grid_from_layers(layers: Vec<Vec<u32>>, codebook_size: u32) -> PyResult<TokenSequence> {
    if layers.is_empty() {
        return Err(PyValueError::new_err("token grid needs at least one layer"));
    }
    let length = layers[0].len();
    for l in &layers {
        if l.len() != length {
            return Err(PyValueError::new_err("token grid must be rectangular"));
        }
    }
    let codes = layers.concat();
    TokenSequence::new(codes, layers.len(), length, codebook_size).map_err(to_py_err)
}

/// Trained stack of RVQ codebooks.
#[pyclass(name = "CodebookStack", module = "art_rvq", skip_from_py_object)]
#[derive(Clone)]
struct PyCodebookStack {
    inner: rvq::CodebookStack,
}

#[pymethods]
impl PyCodebookStack {
    #[getter]
    fn num_layers(&self) -> usize {
        self.inner.num_layers()
    }

    #[getter]
    fn codebook_size(&self) -> usize {
        self.inner.codebook_size()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Alphabet index reserved for the mask token.
    #[getter]
    fn mask_token_id(&self) -> u32 {
        self.inner.codebook_size() as u32
    }

    fn __repr__(&self) -> String {
        format!(
            "CodebookStack(num_layers={}, codebook_size={}, dim={})",
            self.inner.num_layers(),
            self.inner.codebook_size(),
            self.inner.dim()
        )
    }

    /// Encode a feature sequence into an N x L grid (one list per layer).
    fn encode(&self, features: Vec<Vec<f32>>) -> PyResult<Vec<Vec<u32>>> {
        let seq = FeatureSequence::from_points(features_from_rows(features)?);
        let tokens = rvq::encode(&seq, &self.inner).map_err(to_py_err)?;
        Ok(grid_to_layers(&tokens))
    }

    /// Reconstruct features from an N x L grid.
    fn decode(&self, codes: Vec<Vec<u32>>) -> PyResult<Vec<Vec<f32>>> {
        let tokens = grid_from_layers(codes, self.inner.codebook_size() as u32)?;
        let seq = rvq::decode(&tokens, &self.inner).map_err(to_py_err)?;
        Ok(seq.rows().map(|r| r.to_vec()).collect())
    }

    /// Quantize one vector; returns (codes, final_residual).
    fn quantize(&self, vector: Vec<f32>) -> PyResult<(Vec<u32>, Vec<f32>)> {
        rvq::quantize_vector(&vector, &self.inner).map_err(to_py_err)
    }

    /// Residual energies, utilization, and bits per vector for a dataset.
    fn stats<'py>(&self, py: Python<'py>, features: Vec<Vec<f32>>) -> PyResult<Bound<'py, PyDict>> {
        let points = features_from_rows(features)?;
        let stats = rvq::compute_stats(&points, &self.inner).map_err(to_py_err)?;
        let d = PyDict::new(py);
        d.set_item("per_layer_residual_energy", stats.per_layer_residual_energy)?;
        d.set_item("bits_per_vector", stats.bits_per_vector)?;
        d.set_item("codebook_utilization", stats.codebook_utilization)?;
        Ok(d)
    }

    /// First-n-layers sub-stack.
    fn truncated(&self, n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.truncated(n).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        persistence::write_codebook_stack_file(&self.inner, &path).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: persistence::read_codebook_stack_file(&path).map_err(to_py_err)?,
        })
    }
}

/// Train an RVQ codebook stack on feature rows.
#[pyfunction]
#[pyo3(signature = (features, num_layers, codebook_size, max_iters=100, tol=1e-6, seed=0))]
fn train_rvq(
    features: Vec<Vec<f32>>,
    num_layers: usize,
    codebook_size: usize,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> PyResult<PyCodebookStack> {
    let points = features_from_rows(features)?;
    let cfg = KmeansConfig {
        k: codebook_size,
        max_iters,
        rel_tol: tol,
        seed,
    };
    Ok(PyCodebookStack {
        inner: rvq::train_rvq(&points, num_layers, &cfg).map_err(to_py_err)?,
    })
}

/// Span mask over `length` positions; returns one flag per position.
#[pyfunction]
#[pyo3(signature = (length, mask_ratio=0.15, span_length=10, seed=0))]
fn generate_mask(length: usize, mask_ratio: f64, span_length: usize, seed: u64) -> PyResult<Vec<bool>> {
    let cfg = McmConfig {
        mask_ratio,
        span_length,
        seed,
    };
    Ok(mcm::generate_mask(length, &cfg).map_err(to_py_err)?.flags().to_vec())
}

/// Replace all layers' codes with `mask_token_id` at flagged positions.
#[pyfunction]
fn apply_mask(codes: Vec<Vec<u32>>, mask: Vec<bool>, mask_token_id: u32) -> PyResult<Vec<Vec<u32>>> {
    let alphabet = codes
        .iter()
        .flatten()
        .copied()
        .max()
        .unwrap_or(0)
        .saturating_add(1);
    let tokens = grid_from_layers(codes, alphabet)?;
    let mask = mcm::McmMask::from_flags(mask);
    let out = mcm::apply_mask(&tokens, &mask, mask_token_id).map_err(to_py_err)?;
    Ok(grid_to_layers(&out))
}

/// caption_loss + lam * mcm_loss.
#[pyfunction]
#[pyo3(signature = (caption_loss, mcm_loss, lam=0.7))]
fn combine_losses(caption_loss: f64, mcm_loss: f64, lam: f64) -> PyResult<f64> {
    mcm::combine_losses(caption_loss, mcm_loss, &LossWeights { lambda: lam }).map_err(to_py_err)
}

/// Build the (L+3) x hidden_size input matrix from a token grid and a global
/// audio embedding, using seeded tables and projection.
#[pyfunction]
#[pyo3(signature = (codes, audio_embedding, codebook_size, hidden_size=768, max_len=1026, seed=0))]
fn assemble_input(
    codes: Vec<Vec<u32>>,
    audio_embedding: Vec<f32>,
    codebook_size: usize,
    hidden_size: usize,
    max_len: usize,
    seed: u64,
) -> PyResult<Vec<Vec<f32>>> {
    let tokens = grid_from_layers(codes, codebook_size as u32)?;
    let tables = EmbeddingTableSet::generate(&EmbeddingConfig {
        num_layers: tokens.num_layers(),
        codebook_size,
        hidden_size,
        max_len,
        seed,
    })
    .map_err(to_py_err)?;
    let proj = ClapProjection::generate(audio_embedding.len(), hidden_size, seed.wrapping_add(1))
        .map_err(to_py_err)?;
    let clap_vec = assembly::project_clap(&audio_embedding, &proj).map_err(to_py_err)?;
    let embeds = assembly::embed_tokens(&tokens, &tables).map_err(to_py_err)?;
    let out = assembly::build_input(&clap_vec, &embeds, &tables).map_err(to_py_err)?;
    Ok((0..out.matrix.rows()).map(|i| out.matrix.row(i).to_vec()).collect())
}

/// Synthetic layer-count probe; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (layer_counts, num_classes=10, vectors_per_class=200, dim=32, codebook_size=64, class_spread=1.2, center_spread=1.0, seed=0))]
#[allow(clippy::too_many_arguments)]
fn run_probe<'py>(
    py: Python<'py>,
    layer_counts: Vec<usize>,
    num_classes: usize,
    vectors_per_class: usize,
    dim: usize,
    codebook_size: usize,
    class_spread: f64,
    center_spread: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = SyntheticSpec {
        num_classes,
        vectors_per_class,
        dim,
        class_spread,
        center_spread,
        seed,
    };
    let report = probe::run_probe(
        &spec,
        &layer_counts,
        codebook_size,
        &KmeansConfig::new(codebook_size, seed),
    )
    .map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("layer_counts", report.layer_counts)?;
    d.set_item("raw_accuracy", report.raw_accuracy)?;
    d.set_item("quantized_accuracy", report.quantized_accuracy)?;
    d.set_item("residual_energy_ratio", report.residual_energy_ratio)?;
    d.set_item("bits_per_vector", report.bits_per_vector)?;
    Ok(d)
}

/// Read/write the binary feature format from Python.
#[pyfunction]
fn load_features(path: std::path::PathBuf) -> PyResult<Vec<Vec<f32>>> {
    let seq = persistence::read_features_file(&path).map_err(to_py_err)?;
    Ok(seq.rows().map(|r| r.to_vec()).collect())
}

#[pyfunction]
fn save_features(rows: Vec<Vec<f32>>, path: std::path::PathBuf) -> PyResult<()> {
    let seq = FeatureSequence::from_points(features_from_rows(rows)?);
    persistence::write_features_file(&seq, &path).map_err(to_py_err)
}

#[pymodule]
fn art_rvq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCodebookStack>()?;
    m.add_function(wrap_pyfunction!(train_rvq, m)?)?;
    m.add_function(wrap_pyfunction!(generate_mask, m)?)?;
    m.add_function(wrap_pyfunction!(apply_mask, m)?)?;
    m.add_function(wrap_pyfunction!(combine_losses, m)?)?;
    m.add_function(wrap_pyfunction!(assemble_input, m)?)?;
    m.add_function(wrap_pyfunction!(run_probe, m)?)?;
    m.add_function(wrap_pyfunction!(load_features, m)?)?;
    m.add_function(wrap_pyfunction!(save_features, m)?)?;
    Ok(())
}
