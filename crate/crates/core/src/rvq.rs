//! Residual vector quantization over feature sequences.
//!
//! Codebooks are trained greedily: layer 0 on the raw features, each later
//! layer on the residuals left by the layers before it. Encoding walks the
//! same chain per time step and emits one code per layer.

use crate::error::{Error, Result};
use crate::kmeans::{
    self, assign, train_kmeans, Codebook, KmeansConfig, KmeansReport, PointSet,
};

/// Length-L sequence of D-dimensional feature vectors, row-major.
///
/// The encoder's F×T patch grid arrives already flattened; no time-frequency
/// reshaping happens here.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    data: Vec<f32>,
    dim: usize,
    length: usize,
}

impl FeatureSequence {
    pub fn new(data: Vec<f32>, dim: usize) -> Result<Self> {
        let points = PointSet::new(data, dim)?;
        Ok(Self::from_points(points))
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        Ok(Self::from_points(PointSet::from_rows(rows)?))
    }

    pub fn from_points(points: PointSet) -> Self {
        let dim = points.dim();
        let length = points.count();
        Self {
            data: points.as_slice().to_vec(),
            dim,
            length,
        }
    }

    pub fn to_points(&self) -> PointSet {
        PointSet::new(self.data.clone(), self.dim).expect("valid by construction")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// N ordered codebooks sharing size K and dimension D; layer n quantizes the
/// residual left by layers 0..n-1.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookStack {
    layers: Vec<Codebook>,
}

impl CodebookStack {
    pub fn new(layers: Vec<Codebook>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("stack needs at least one layer".into()));
        }
        let k = layers[0].size();
        let dim = layers[0].dim();
        for l in &layers {
            if l.size() != k {
                return Err(Error::ShapeMismatch {
                    what: "codebook size",
                    expected: k,
                    found: l.size(),
                });
            }
            if l.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: l.dim(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn codebook_size(&self) -> usize {
        self.layers[0].size()
    }

    pub fn dim(&self) -> usize {
        self.layers[0].dim()
    }

    pub fn layer(&self, n: usize) -> &Codebook {
        &self.layers[n]
    }

    pub fn layers(&self) -> &[Codebook] {
        &self.layers
    }

    /// Stack holding only the first `n` layers. Because training is greedy
    /// with per-layer derived seeds, this equals a freshly trained `n`-layer
    /// stack on the same data and base seed.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.layers.len() {
            return Err(Error::ShapeMismatch {
                what: "truncated layer count",
                expected: self.layers.len(),
                found: n,
            });
        }
        Ok(Self {
            layers: self.layers[..n].to_vec(),
        })
    }
}

/// N × L grid of codeword indices, stored layer-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    codes: Vec<u32>,
    num_layers: usize,
    length: usize,
    codebook_size: u32,
}

impl TokenSequence {
    pub fn new(codes: Vec<u32>, num_layers: usize, length: usize, codebook_size: u32) -> Result<Self> {
        if num_layers == 0 || length == 0 {
            return Err(Error::InvalidConfig(
                "token grid needs at least one layer and one position".into(),
            ));
        }
        if codes.len() != num_layers * length {
            return Err(Error::ShapeMismatch {
                what: "token grid length",
                expected: num_layers * length,
                found: codes.len(),
            });
        }
        for (idx, &c) in codes.iter().enumerate() {
            if c >= codebook_size {
                return Err(Error::InvalidToken {
                    layer: idx / length,
                    position: idx % length,
                    code: c,
                    codebook_size,
                });
            }
        }
        Ok(Self {
            codes,
            num_layers,
            length,
            codebook_size,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn codebook_size(&self) -> u32 {
        self.codebook_size
    }

    pub fn code(&self, layer: usize, position: usize) -> u32 {
        self.codes[layer * self.length + position]
    }

    /// Layer-major flat view.
    pub fn as_slice(&self) -> &[u32] {
        &self.codes
    }

    pub fn layer_codes(&self, layer: usize) -> &[u32] {
        &self.codes[layer * self.length..(layer + 1) * self.length]
    }

    pub(crate) fn set_code(&mut self, layer: usize, position: usize, code: u32) {
        self.codes[layer * self.length + position] = code;
    }

    pub(crate) fn with_codebook_size(mut self, codebook_size: u32) -> Self {
        self.codebook_size = codebook_size;
        self
    }
}

/// Dataset-level quantization diagnostics.
#[derive(Debug, Clone)]
pub struct QuantizationStats {
    /// Summed squared norms of the residual before quantization and after
    /// each layer; N+1 entries, non-increasing on training data.
    pub per_layer_residual_energy: Vec<f64>,
    pub bits_per_vector: f64,
    /// Fraction of each layer's codewords actually selected.
    pub codebook_utilization: Vec<f64>,
}

/// Per-layer training diagnostics from `train_rvq_detailed`.
#[derive(Debug, Clone)]
pub struct RvqTrainReport {
    pub kmeans_reports: Vec<KmeansReport>,
    /// Residual energy before training and after each layer; N+1 entries.
    pub residual_energies: Vec<f64>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic per-layer seed derivation from one base seed.
pub fn layer_seed(base_seed: u64, layer: usize) -> u64 {
    splitmix64(base_seed ^ splitmix64(layer as u64))
}

fn energy(points: &PointSet) -> f64 {
    points
        .rows()
        .map(|v| v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>())
        .sum()
}

/// Greedy layer-at-a-time RVQ training with full diagnostics.
pub fn train_rvq_detailed(
    features: &PointSet,
    num_layers: usize,
    kcfg: &KmeansConfig,
) -> Result<(CodebookStack, RvqTrainReport)> {
    if num_layers == 0 {
        return Err(Error::InvalidConfig("num_layers must be positive".into()));
    }
    let mut residuals = features.clone();
    let mut layers = Vec::with_capacity(num_layers);
    let mut kmeans_reports = Vec::with_capacity(num_layers);
    let mut residual_energies = Vec::with_capacity(num_layers + 1);
    residual_energies.push(energy(&residuals));

    for n in 0..num_layers {
        let cfg = KmeansConfig {
            seed: layer_seed(kcfg.seed, n),
            ..kcfg.clone()
        };
        let (codebook, report) = train_kmeans(&residuals, &cfg)?;
        let assignments = assign(&residuals, &codebook)?;
        for (i, &a) in assignments.iter().enumerate() {
            let c = codebook.centroid(a).to_vec();
            let r = residuals.row_mut(i);
            for (x, y) in r.iter_mut().zip(c.iter()) {
                *x -= *y;
            }
        }
        residual_energies.push(energy(&residuals));
        layers.push(codebook);
        kmeans_reports.push(report);
    }

    Ok((
        CodebookStack::new(layers)?,
        RvqTrainReport {
            kmeans_reports,
            residual_energies,
        },
    ))
}

pub fn train_rvq(features: &PointSet, num_layers: usize, kcfg: &KmeansConfig) -> Result<CodebookStack> {
    train_rvq_detailed(features, num_layers, kcfg).map(|(stack, _)| stack)
}

/// Quantize one vector through the residual chain: pick the nearest entry in
/// each layer's codebook, subtract it, carry the residual forward.
pub fn quantize_vector(v: &[f32], stack: &CodebookStack) -> Result<(Vec<u32>, Vec<f32>)> {
    if v.len() != stack.dim() {
        return Err(Error::DimensionMismatch {
            expected: stack.dim(),
            found: v.len(),
        });
    }
    let mut residual = v.to_vec();
    let mut codes = Vec::with_capacity(stack.num_layers());
    for layer in stack.layers() {
        let (code, _) = kmeans::nearest(layer, &residual);
        let centroid = layer.centroid(code);
        for (r, c) in residual.iter_mut().zip(centroid.iter()) {
            *r -= *c;
        }
        codes.push(code as u32);
    }
    Ok((codes, residual))
}

pub fn encode(seq: &FeatureSequence, stack: &CodebookStack) -> Result<TokenSequence> {
    if seq.dim() != stack.dim() {
        return Err(Error::DimensionMismatch {
            expected: stack.dim(),
            found: seq.dim(),
        });
    }
    let n = stack.num_layers();
    let l = seq.length();
    let mut codes = vec![0u32; n * l];
    for (t, v) in seq.rows().enumerate() {
        let (col, _) = quantize_vector(v, stack)?;
        for (layer, &c) in col.iter().enumerate() {
            codes[layer * l + t] = c;
        }
    }
    TokenSequence::new(codes, n, l, stack.codebook_size() as u32)
}

/// Reconstruct each time step as the sum of its per-layer codewords.
pub fn decode(tokens: &TokenSequence, stack: &CodebookStack) -> Result<FeatureSequence> {
    if tokens.num_layers() != stack.num_layers() {
        return Err(Error::ShapeMismatch {
            what: "token layer count",
            expected: stack.num_layers(),
            found: tokens.num_layers(),
        });
    }
    let k = stack.codebook_size() as u32;
    let dim = stack.dim();
    let l = tokens.length();
    let mut data = vec![0.0f32; l * dim];
    for layer in 0..tokens.num_layers() {
        let codebook = stack.layer(layer);
        for t in 0..l {
            let code = tokens.code(layer, t);
            if code >= k {
                return Err(Error::InvalidToken {
                    layer,
                    position: t,
                    code,
                    codebook_size: k,
                });
            }
            let centroid = codebook.centroid(code as usize);
            let out = &mut data[t * dim..(t + 1) * dim];
            for (o, c) in out.iter_mut().zip(centroid.iter()) {
                *o += *c;
            }
        }
    }
    FeatureSequence::new(data, dim)
}

pub fn compute_stats(features: &PointSet, stack: &CodebookStack) -> Result<QuantizationStats> {
    if features.dim() != stack.dim() {
        return Err(Error::DimensionMismatch {
            expected: stack.dim(),
            found: features.dim(),
        });
    }
    let n = stack.num_layers();
    let k = stack.codebook_size();
    let mut energies = vec![0.0f64; n + 1];
    let mut used = vec![vec![false; k]; n];

    for v in features.rows() {
        let mut residual = v.to_vec();
        energies[0] += residual.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>();
        for (layer_idx, layer) in stack.layers().iter().enumerate() {
            let (code, _) = kmeans::nearest(layer, &residual);
            used[layer_idx][code] = true;
            let centroid = layer.centroid(code);
            for (r, c) in residual.iter_mut().zip(centroid.iter()) {
                *r -= *c;
            }
            energies[layer_idx + 1] +=
                residual.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>();
        }
    }

    Ok(QuantizationStats {
        per_layer_residual_energy: energies,
        bits_per_vector: n as f64 * (k as f64).log2(),
        codebook_utilization: used
            .iter()
            .map(|u| u.iter().filter(|&&b| b).count() as f64 / k as f64)
            .collect(),
    })
}
