//! `art` — command-line front end for the RVQ tokenizer pipeline.
//!
//! Subcommands: train, encode, decode, stats, mask, assemble, probe.
//! All randomness flows through an explicit --seed; reruns with identical
//! flags produce byte-identical artifacts.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use art_core::assembly::{self, EmbeddingConfig, EmbeddingTableSet, ClapProjection, RowMatrix};
use art_core::kmeans::KmeansConfig;
use art_core::mcm::{self, McmConfig};
use art_core::persistence;
use art_core::probe::{self, SyntheticSpec};
use art_core::rvq::{self, FeatureSequence};
use art_core::Error;

#[derive(Parser)]
#[command(name = "art", about = "Residual-vector-quantization tokenizer toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct KmeansFlags {
    /// Maximum Lloyd iterations per layer
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Relative objective-change stopping threshold
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Base seed; per-layer seeds derive from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Train an RVQ codebook stack on a feature file
    Train {
        #[arg(long)]
        features: PathBuf,
        /// Number of RVQ layers
        #[arg(long, default_value_t = 16)]
        layers: usize,
        /// Codewords per layer
        #[arg(long, default_value_t = 1024)]
        codebook_size: usize,
        #[command(flatten)]
        kmeans: KmeansFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode features into multi-layer discrete tokens
    Encode {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        codebooks: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct features from tokens
    Decode {
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long)]
        codebooks: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report residual energies, codebook utilization, and bits per vector
    Stats {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        codebooks: PathBuf,
    },
    /// Apply a span mask to a token file
    Mask {
        #[arg(long)]
        tokens: PathBuf,
        /// Target masked fraction
        #[arg(long, default_value_t = 0.15)]
        ratio: f64,
        /// Span length in time steps
        #[arg(long, default_value_t = 10)]
        span_length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the (L+3) x D_b language-model input matrix from tokens
    Assemble {
        #[arg(long)]
        tokens: PathBuf,
        /// Dimension of the global audio embedding before projection
        #[arg(long, default_value_t = 512)]
        clap_dim: usize,
        /// Hidden size D_b of the target model
        #[arg(long, default_value_t = 768)]
        hidden_size: usize,
        /// Positional table length
        #[arg(long, default_value_t = 1026)]
        max_len: usize,
        /// Seed for tables, projection, and the demo audio embedding
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Optionally persist the generated embedding tables
        #[arg(long)]
        tables_out: Option<PathBuf>,
    },
    /// Synthetic semantic-preservation probe over layer counts
    Probe {
        /// Comma-separated layer counts to evaluate
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        layer_counts: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 64)]
        codebook_size: usize,
        #[arg(long, default_value_t = 1.2)]
        class_spread: f64,
        #[arg(long, default_value_t = 1.0)]
        center_spread: f64,
        #[command(flatten)]
        kmeans: KmeansFlags,
        /// Optional report file (plain text)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Format { .. } | Error::Io(_) => 3,
        Error::DimensionMismatch { .. }
        | Error::ShapeMismatch { .. }
        | Error::InvalidToken { .. }
        | Error::PositionalOverflow { .. } => 4,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train {
            features,
            layers,
            codebook_size,
            kmeans,
            out,
        } => {
            let points = persistence::read_features_file(&features)?.to_points();
            let cfg = KmeansConfig {
                k: codebook_size,
                max_iters: kmeans.max_iters,
                rel_tol: kmeans.tol,
                seed: kmeans.seed,
            };
            let (stack, report) = rvq::train_rvq_detailed(&points, layers, &cfg)?;
            println!(
                "trained {} layers, codebook size {}, dim {}",
                stack.num_layers(),
                stack.codebook_size(),
                stack.dim()
            );
            println!("---");
            println!("input_energy={:.9e}", report.residual_energies[0]);
            for n in 0..layers {
                let km = &report.kmeans_reports[n];
                println!(
                    "layer={} objective={:.9e} residual_energy={:.9e} iterations={} converged={}",
                    n,
                    km.objective_history.last().copied().unwrap_or(0.0),
                    report.residual_energies[n + 1],
                    km.iterations_run,
                    km.converged
                );
            }
            persistence::write_codebook_stack_file(&stack, &out)?;
            Ok(())
        }
        Command::Encode {
            features,
            codebooks,
            out,
        } => {
            let seq = persistence::read_features_file(&features)?;
            let stack = persistence::read_codebook_stack_file(&codebooks)?;
            let tokens = rvq::encode(&seq, &stack)?;
            let mut final_energy = 0.0f64;
            for v in seq.rows() {
                let (_, residual) = rvq::quantize_vector(v, &stack)?;
                final_energy += residual.iter().map(|&x| (x as f64).powi(2)).sum::<f64>();
            }
            println!(
                "encoded {} positions x {} layers (alphabet {})",
                tokens.length(),
                tokens.num_layers(),
                tokens.codebook_size()
            );
            println!("---");
            println!("final_residual_energy={final_energy:.9e}");
            persistence::write_tokens_file(&tokens, &out)?;
            Ok(())
        }
        Command::Decode {
            tokens,
            codebooks,
            out,
        } => {
            let grid = persistence::read_tokens_file(&tokens)?;
            let stack = persistence::read_codebook_stack_file(&codebooks)?;
            let recon = rvq::decode(&grid, &stack)?;
            println!("decoded {} x {}", recon.length(), recon.dim());
            persistence::write_features_file(&recon, &out)?;
            Ok(())
        }
        Command::Stats { features, codebooks } => {
            let points = persistence::read_features_file(&features)?.to_points();
            let stack = persistence::read_codebook_stack_file(&codebooks)?;
            let stats = rvq::compute_stats(&points, &stack)?;
            println!(
                "{} layers, codebook size {}, {:.1} bits per vector",
                stack.num_layers(),
                stack.codebook_size(),
                stats.bits_per_vector
            );
            println!("---");
            println!("bits_per_vector={:.3}", stats.bits_per_vector);
            for (n, e) in stats.per_layer_residual_energy.iter().enumerate() {
                println!("residual_energy[{n}]={e:.9e}");
            }
            for (n, u) in stats.codebook_utilization.iter().enumerate() {
                println!("utilization[{n}]={u:.6}");
            }
            Ok(())
        }
        Command::Mask {
            tokens,
            ratio,
            span_length,
            seed,
            out,
        } => {
            let grid = persistence::read_tokens_file(&tokens)?;
            let cfg = McmConfig {
                mask_ratio: ratio,
                span_length,
                seed,
            };
            let mask = mcm::generate_mask(grid.length(), &cfg)?;
            let masked = mcm::apply_mask(&grid, &mask, grid.codebook_size())?;
            println!(
                "masked {} of {} positions ({:.4})",
                mask.masked_count(),
                mask.len(),
                mask.masked_fraction()
            );
            println!("---");
            println!("masked_count={}", mask.masked_count());
            println!("masked_fraction={:.6}", mask.masked_fraction());
            println!("mask_token_id={}", grid.codebook_size());
            persistence::write_tokens_file(&masked, &out)?;
            Ok(())
        }
        Command::Assemble {
            tokens,
            clap_dim,
            hidden_size,
            max_len,
            seed,
            out,
            tables_out,
        } => {
            let grid = persistence::read_tokens_file(&tokens)?;
            let tables = EmbeddingTableSet::generate(&EmbeddingConfig {
                num_layers: grid.num_layers(),
                codebook_size: grid.codebook_size() as usize,
                hidden_size,
                max_len,
                seed,
            })?;
            let proj = ClapProjection::generate(clap_dim, hidden_size, seed.wrapping_add(1))?;
            // Demo audio embedding: a seeded stand-in for a real CLAP vector.
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
            let audio: Vec<f32> = (0..clap_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let clap_vec = assembly::project_clap(&audio, &proj)?;
            let embeds = assembly::embed_tokens(&grid, &tables)?;
            let assembled = assembly::build_input(&clap_vec, &embeds, &tables)?;
            println!(
                "assembled input: {} x {} rows",
                assembled.matrix.rows(),
                assembled.matrix.cols()
            );
            println!("---");
            println!("rows={}", assembled.matrix.rows());
            println!("cols={}", assembled.matrix.cols());
            let seq = matrix_to_features(&assembled.matrix)?;
            persistence::write_features_file(&seq, &out)?;
            if let Some(path) = tables_out {
                persistence::write_embedding_tables_file(&tables, &path)?;
            }
            Ok(())
        }
        Command::Probe {
            layer_counts,
            classes,
            per_class,
            dim,
            codebook_size,
            class_spread,
            center_spread,
            kmeans,
            out,
        } => {
            let spec = SyntheticSpec {
                num_classes: classes,
                vectors_per_class: per_class,
                dim,
                class_spread,
                center_spread,
                seed: kmeans.seed,
            };
            let cfg = KmeansConfig {
                k: codebook_size,
                max_iters: kmeans.max_iters,
                rel_tol: kmeans.tol,
                seed: kmeans.seed,
            };
            let report = probe::run_probe(&spec, &layer_counts, codebook_size, &cfg)?;
            let rendered = report.render();
            print!("{rendered}");
            if let Some(path) = out {
                persistence::atomic_write(&path, |w| {
                    use std::io::Write;
                    w.write_all(rendered.as_bytes()).map_err(Error::Io)
                })?;
            }
            Ok(())
        }
    }
}

fn matrix_to_features(m: &RowMatrix) -> Result<FeatureSequence, Error> {
    FeatureSequence::new(m.as_slice().to_vec(), m.cols())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
