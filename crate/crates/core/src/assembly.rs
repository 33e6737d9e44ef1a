//! Language-model input assembly: multi-layer token embeddings summed per
//! time step, a projected global audio embedding prepended, bos/eos framing,
//! and absolute positional embeddings.
//!
//! No transformer runs here. All tables and the projection are deterministic
//! seeded draws, so downstream consumers get reproducible inputs to fuzz
//! against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rvq::TokenSequence;

/// Row-major real matrix; unlike `FeatureSequence` it may have zero rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    data: Vec<f32>,
    rows: usize,
    cols: usize,
}

impl RowMatrix {
    pub fn new(data: Vec<f32>, rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                what: "matrix data length",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { data, rows, cols })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingConfig {
    pub num_layers: usize,
    pub codebook_size: usize,
    pub hidden_size: usize,
    pub max_len: usize,
    pub seed: u64,
}

/// Seeded embedding tables: one (K+1)-row table per token layer (the extra
/// row at index K is the mask-token slot), bos/eos vectors, and an absolute
/// positional table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTableSet {
    per_layer_tables: Vec<Vec<f32>>,
    bos_embedding: Vec<f32>,
    eos_embedding: Vec<f32>,
    positional_table: Vec<f32>,
    num_layers: usize,
    codebook_size: usize,
    hidden_size: usize,
    max_len: usize,
}

impl EmbeddingTableSet {
    /// Number of special rows appended to each per-layer table.
    pub const SPECIAL_SLOTS: usize = 1;

    /// All parameters drawn uniformly from [-1/sqrt(D_b), 1/sqrt(D_b)] in a
    /// fixed order, so one seed pins the whole set.
    pub fn generate(cfg: &EmbeddingConfig) -> Result<Self> {
        if cfg.num_layers == 0 || cfg.codebook_size == 0 || cfg.hidden_size == 0 {
            return Err(Error::InvalidConfig(
                "embedding table dimensions must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let scale = 1.0 / (cfg.hidden_size as f32).sqrt();
        let mut draw = |len: usize| -> Vec<f32> {
            (0..len)
                .map(|_| rng.random::<f32>() * 2.0 * scale - scale)
                .collect()
        };
        let rows = cfg.codebook_size + Self::SPECIAL_SLOTS;
        let per_layer_tables = (0..cfg.num_layers)
            .map(|_| draw(rows * cfg.hidden_size))
            .collect();
        let bos_embedding = draw(cfg.hidden_size);
        let eos_embedding = draw(cfg.hidden_size);
        let positional_table = draw(cfg.max_len * cfg.hidden_size);
        Ok(Self {
            per_layer_tables,
            bos_embedding,
            eos_embedding,
            positional_table,
            num_layers: cfg.num_layers,
            codebook_size: cfg.codebook_size,
            hidden_size: cfg.hidden_size,
            max_len: cfg.max_len,
        })
    }

    pub fn from_parts(
        per_layer_tables: Vec<Vec<f32>>,
        bos_embedding: Vec<f32>,
        eos_embedding: Vec<f32>,
        positional_table: Vec<f32>,
        codebook_size: usize,
        hidden_size: usize,
        max_len: usize,
    ) -> Result<Self> {
        let num_layers = per_layer_tables.len();
        if num_layers == 0 {
            return Err(Error::InvalidConfig("at least one layer table required".into()));
        }
        let rows = codebook_size + Self::SPECIAL_SLOTS;
        for t in &per_layer_tables {
            if t.len() != rows * hidden_size {
                return Err(Error::ShapeMismatch {
                    what: "layer table length",
                    expected: rows * hidden_size,
                    found: t.len(),
                });
            }
        }
        if bos_embedding.len() != hidden_size || eos_embedding.len() != hidden_size {
            return Err(Error::DimensionMismatch {
                expected: hidden_size,
                found: bos_embedding.len(),
            });
        }
        if positional_table.len() != max_len * hidden_size {
            return Err(Error::ShapeMismatch {
                what: "positional table length",
                expected: max_len * hidden_size,
                found: positional_table.len(),
            });
        }
        Ok(Self {
            per_layer_tables,
            bos_embedding,
            eos_embedding,
            positional_table,
            num_layers,
            codebook_size,
            hidden_size,
            max_len,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn codebook_size(&self) -> usize {
        self.codebook_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Reserved mask-token row, shared by every layer table.
    pub fn mask_token_id(&self) -> u32 {
        self.codebook_size as u32
    }

    pub fn layer_row(&self, layer: usize, row: usize) -> &[f32] {
        &self.per_layer_tables[layer][row * self.hidden_size..(row + 1) * self.hidden_size]
    }

    pub fn layer_table(&self, layer: usize) -> &[f32] {
        &self.per_layer_tables[layer]
    }

    pub fn bos(&self) -> &[f32] {
        &self.bos_embedding
    }

    pub fn eos(&self) -> &[f32] {
        &self.eos_embedding
    }

    pub fn positional(&self, pos: usize) -> &[f32] {
        &self.positional_table[pos * self.hidden_size..(pos + 1) * self.hidden_size]
    }

    pub fn positional_table(&self) -> &[f32] {
        &self.positional_table
    }
}

/// Linear map taking a global audio embedding into the model's hidden space.
#[derive(Debug, Clone, PartialEq)]
pub struct ClapProjection {
    /// Row-major, input_dim rows by hidden_size columns.
    weight: Vec<f32>,
    bias: Vec<f32>,
    input_dim: usize,
    hidden_size: usize,
}

impl ClapProjection {
    pub fn new(weight: Vec<f32>, bias: Vec<f32>, input_dim: usize, hidden_size: usize) -> Result<Self> {
        if weight.len() != input_dim * hidden_size {
            return Err(Error::ShapeMismatch {
                what: "projection weight length",
                expected: input_dim * hidden_size,
                found: weight.len(),
            });
        }
        if bias.len() != hidden_size {
            return Err(Error::DimensionMismatch {
                expected: hidden_size,
                found: bias.len(),
            });
        }
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "projection" });
        }
        Ok(Self {
            weight,
            bias,
            input_dim,
            hidden_size,
        })
    }

    pub fn generate(input_dim: usize, hidden_size: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_size == 0 {
            return Err(Error::InvalidConfig("projection dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (hidden_size as f32).sqrt();
        let weight = (0..input_dim * hidden_size)
            .map(|_| rng.random::<f32>() * 2.0 * scale - scale)
            .collect();
        let bias = (0..hidden_size)
            .map(|_| rng.random::<f32>() * 2.0 * scale - scale)
            .collect();
        Self::new(weight, bias, input_dim, hidden_size)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }
}

/// (L+3) × D_b input matrix: projected audio embedding, then bos, token
/// embeddings, eos, with positional terms on every row except row 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledInput {
    pub matrix: RowMatrix,
}

impl AssembledInput {
    pub fn sequence_length(&self) -> usize {
        self.matrix.rows() - 3
    }
}

/// Sum the per-layer embedding rows for each time step, yielding L × D_b.
pub fn embed_tokens(tokens: &TokenSequence, tables: &EmbeddingTableSet) -> Result<RowMatrix> {
    if tokens.num_layers() != tables.num_layers() {
        return Err(Error::ShapeMismatch {
            what: "embedding layer count",
            expected: tables.num_layers(),
            found: tokens.num_layers(),
        });
    }
    let rows = tables.codebook_size() + EmbeddingTableSet::SPECIAL_SLOTS;
    let mut out = RowMatrix::zeros(tokens.length(), tables.hidden_size());
    for layer in 0..tokens.num_layers() {
        for t in 0..tokens.length() {
            let code = tokens.code(layer, t);
            if code as usize >= rows {
                return Err(Error::InvalidToken {
                    layer,
                    position: t,
                    code,
                    codebook_size: rows as u32,
                });
            }
            let emb = tables.layer_row(layer, code as usize);
            for (o, e) in out.row_mut(t).iter_mut().zip(emb.iter()) {
                *o += *e;
            }
        }
    }
    Ok(out)
}

/// weightᵀ·x + bias.
pub fn project_clap(audio_embedding: &[f32], proj: &ClapProjection) -> Result<Vec<f32>> {
    if audio_embedding.len() != proj.input_dim {
        return Err(Error::DimensionMismatch {
            expected: proj.input_dim,
            found: audio_embedding.len(),
        });
    }
    let mut out = proj.bias.clone();
    for (i, &x) in audio_embedding.iter().enumerate() {
        let row = &proj.weight[i * proj.hidden_size..(i + 1) * proj.hidden_size];
        for (o, &w) in out.iter_mut().zip(row.iter()) {
            *o += w * x;
        }
    }
    Ok(out)
}

/// Stack [clap, bos, token embeddings, eos] and add positional embeddings to
/// every row except the leading clap row.
pub fn build_input(
    clap_vec: &[f32],
    token_embeds: &RowMatrix,
    tables: &EmbeddingTableSet,
) -> Result<AssembledInput> {
    let d_b = tables.hidden_size();
    if clap_vec.len() != d_b {
        return Err(Error::DimensionMismatch {
            expected: d_b,
            found: clap_vec.len(),
        });
    }
    if token_embeds.cols() != d_b && token_embeds.rows() > 0 {
        return Err(Error::DimensionMismatch {
            expected: d_b,
            found: token_embeds.cols(),
        });
    }
    let l = token_embeds.rows();
    if l + 2 > tables.max_len() {
        return Err(Error::PositionalOverflow {
            needed: l + 2,
            available: tables.max_len(),
        });
    }

    let mut data = Vec::with_capacity((l + 3) * d_b);
    data.extend_from_slice(clap_vec);

    let push_with_pos = |row: &[f32], pos: usize, data: &mut Vec<f32>| {
        let p = tables.positional(pos);
        data.extend(row.iter().zip(p.iter()).map(|(&a, &b)| a + b));
    };
    push_with_pos(tables.bos(), 0, &mut data);
    for t in 0..l {
        push_with_pos(token_embeds.row(t), t + 1, &mut data);
    }
    push_with_pos(tables.eos(), l + 1, &mut data);

    Ok(AssembledInput {
        matrix: RowMatrix::new(data, l + 3, d_b)?,
    })
}
