//! Acceptance criterion 9: rerunning train, encode, and probe with identical
//! flags and seed produces byte-identical output files.

use std::path::Path;
use std::process::Command;

use art_core::persistence;
use art_core::rvq::FeatureSequence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run_ok(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_art"))
        .args(args)
        .output()
        .expect("spawn art");
    assert!(
        out.status.success(),
        "art {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn file_digest(path: &Path) -> u64 {
    // FNV-1a; enough to compare two local files.
    let bytes = std::fs::read(path).unwrap();
    let mut hash = 0xcbf29ce484222325u64;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[test]
fn criterion_09_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let features = dir.path().join("feat.artf");
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let data: Vec<f32> = (0..60 * 5).map(|_| rng.random_range(-2.0..2.0)).collect();
    let seq = FeatureSequence::new(data, 5).unwrap();
    persistence::write_features_file(&seq, &features).unwrap();

    let feat = features.to_str().unwrap().to_string();
    for run in ["a", "b"] {
        let stack = dir.path().join(format!("stack_{run}.artc"));
        let tokens = dir.path().join(format!("tok_{run}.artt"));
        let report = dir.path().join(format!("probe_{run}.txt"));
        run_ok(&[
            "train", "--features", &feat, "--layers", "3", "--codebook-size", "8",
            "--seed", "42", "--out", stack.to_str().unwrap(),
        ]);
        run_ok(&[
            "encode", "--features", &feat, "--codebooks", stack.to_str().unwrap(),
            "--out", tokens.to_str().unwrap(),
        ]);
        run_ok(&[
            "probe", "--layer-counts", "1,2,4", "--classes", "4", "--per-class", "40",
            "--dim", "8", "--codebook-size", "16", "--seed", "7",
            "--out", report.to_str().unwrap(),
        ]);
    }

    for name in ["stack", "tok", "probe"] {
        let ext = match name {
            "stack" => "artc",
            "tok" => "artt",
            _ => "txt",
        };
        let a = dir.path().join(format!("{name}_a.{ext}"));
        let b = dir.path().join(format!("{name}_b.{ext}"));
        assert_eq!(file_digest(&a), file_digest(&b), "{name} outputs differ");
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
    println!("PASS criterion 9: train, encode, and probe reruns produced byte-identical artifacts (hash compare)");
}
