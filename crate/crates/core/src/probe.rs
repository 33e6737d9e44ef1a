//! Synthetic semantic-preservation probe.
//!
//! Generates labeled Gaussian cluster data, trains an RVQ stack on it, and
//! measures how well nearest-centroid classification of the reconstructed
//! vectors tracks the raw-feature accuracy as the layer count grows. The
//! accuracy proxy is our own construction; it classifies with the true class
//! centers so no classifier is trained.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::kmeans::{KmeansConfig, PointSet};
use crate::rvq::{self, FeatureSequence};

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub vectors_per_class: usize,
    pub dim: usize,
    pub class_spread: f64,
    pub center_spread: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            vectors_per_class: 200,
            dim: 32,
            class_spread: 1.2,
            center_spread: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.num_classes < 2
            || self.vectors_per_class == 0
            || self.dim == 0
            || self.class_spread <= 0.0
            || self.center_spread <= 0.0
        {
            return Err(Error::InvalidConfig(format!(
                "classes={} per_class={} dim={} class_spread={} center_spread={}",
                self.num_classes,
                self.vectors_per_class,
                self.dim,
                self.class_spread,
                self.center_spread
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub points: PointSet,
    pub labels: Vec<usize>,
    pub class_centers: PointSet,
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub layer_counts: Vec<usize>,
    pub raw_accuracy: f64,
    pub quantized_accuracy: Vec<f64>,
    pub residual_energy_ratio: Vec<f64>,
    pub bits_per_vector: Vec<f64>,
    pub codebook_size: usize,
}

/// Gaussian class centers with per-class Gaussian point clouds around them.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let between = Normal::new(0.0, spec.center_spread).expect("validated");
    let within = Normal::new(0.0, spec.class_spread).expect("validated");

    let mut centers = Vec::with_capacity(spec.num_classes * spec.dim);
    for _ in 0..spec.num_classes * spec.dim {
        centers.push(between.sample(&mut rng) as f32);
    }
    let class_centers = PointSet::new(centers, spec.dim)?;

    let mut data = Vec::with_capacity(spec.num_classes * spec.vectors_per_class * spec.dim);
    let mut labels = Vec::with_capacity(spec.num_classes * spec.vectors_per_class);
    for g in 0..spec.num_classes {
        let center = class_centers.row(g).to_vec();
        for _ in 0..spec.vectors_per_class {
            for &c in &center {
                data.push(c + within.sample(&mut rng) as f32);
            }
            labels.push(g);
        }
    }
    Ok(SyntheticData {
        points: PointSet::new(data, spec.dim)?,
        labels,
        class_centers,
    })
}

/// Fraction of points whose nearest class center matches their label.
pub fn nearest_centroid_accuracy(
    points: &PointSet,
    labels: &[usize],
    class_centroids: &PointSet,
) -> Result<f64> {
    if points.dim() != class_centroids.dim() {
        return Err(Error::DimensionMismatch {
            expected: class_centroids.dim(),
            found: points.dim(),
        });
    }
    if labels.len() != points.count() {
        return Err(Error::ShapeMismatch {
            what: "label count",
            expected: points.count(),
            found: labels.len(),
        });
    }
    let mut correct = 0usize;
    for (v, &label) in points.rows().zip(labels.iter()) {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (g, c) in class_centroids.rows().enumerate() {
            let d: f64 = v
                .iter()
                .zip(c.iter())
                .map(|(&a, &b)| ((a - b) as f64).powi(2))
                .sum();
            if d < best_d {
                best_d = d;
                best = g;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / points.count() as f64)
}

/// Train once at the largest requested layer count and evaluate truncations;
/// greedy training makes the truncated stack identical to one trained at the
/// smaller count with the same base seed.
pub fn run_probe(
    spec: &SyntheticSpec,
    layer_counts: &[usize],
    codebook_size: usize,
    kcfg: &KmeansConfig,
) -> Result<ProbeReport> {
    if layer_counts.is_empty() || layer_counts.iter().any(|&n| n == 0) {
        return Err(Error::InvalidConfig("layer_counts must be positive".into()));
    }
    let data = generate_synthetic(spec)?;
    let raw_accuracy = nearest_centroid_accuracy(&data.points, &data.labels, &data.class_centers)?;

    let max_n = *layer_counts.iter().max().unwrap();
    let full_cfg = KmeansConfig {
        k: codebook_size,
        ..kcfg.clone()
    };
    let stack = rvq::train_rvq(&data.points, max_n, &full_cfg)?;
    let seq = FeatureSequence::from_points(data.points.clone());

    let mut quantized_accuracy = Vec::with_capacity(layer_counts.len());
    let mut residual_energy_ratio = Vec::with_capacity(layer_counts.len());
    let mut bits_per_vector = Vec::with_capacity(layer_counts.len());

    for &n in layer_counts {
        let sub = stack.truncated(n)?;
        let tokens = rvq::encode(&seq, &sub)?;
        let recon = rvq::decode(&tokens, &sub)?;
        let acc = nearest_centroid_accuracy(&recon.to_points(), &data.labels, &data.class_centers)?;
        let stats = rvq::compute_stats(&data.points, &sub)?;
        let e0 = stats.per_layer_residual_energy[0];
        let ratio = if e0 > 0.0 {
            stats.per_layer_residual_energy[n] / e0
        } else {
            0.0
        };
        quantized_accuracy.push(acc);
        residual_energy_ratio.push(ratio);
        bits_per_vector.push(stats.bits_per_vector);
    }

    Ok(ProbeReport {
        layer_counts: layer_counts.to_vec(),
        raw_accuracy,
        quantized_accuracy,
        residual_energy_ratio,
        bits_per_vector,
        codebook_size,
    })
}

impl ProbeReport {
    /// Human-readable table followed by a machine-parsable key=value section.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "raw nearest-center accuracy: {:.4}\n",
            self.raw_accuracy
        ));
        out.push_str(&format!(
            "{:>8} {:>12} {:>16} {:>14}\n",
            "layers", "accuracy", "residual_ratio", "bits/vector"
        ));
        for i in 0..self.layer_counts.len() {
            out.push_str(&format!(
                "{:>8} {:>12.4} {:>16.6} {:>14.1}\n",
                self.layer_counts[i],
                self.quantized_accuracy[i],
                self.residual_energy_ratio[i],
                self.bits_per_vector[i]
            ));
        }
        out.push_str("---\n");
        out.push_str(&format!("codebook_size={}\n", self.codebook_size));
        out.push_str(&format!("raw_accuracy={:.6}\n", self.raw_accuracy));
        for i in 0..self.layer_counts.len() {
            out.push_str(&format!(
                "layers={} accuracy={:.6} residual_ratio={:.9} bits_per_vector={:.3}\n",
                self.layer_counts[i],
                self.quantized_accuracy[i],
                self.residual_energy_ratio[i],
                self.bits_per_vector[i]
            ));
        }
        out
    }
}
