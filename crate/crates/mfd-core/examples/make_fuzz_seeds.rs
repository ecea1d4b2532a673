//! Regenerates the checked-in fuzz corpus seeds from the library's own
//! encoders, so every seed is a valid document for its decoder.
//!
//! Usage: `cargo run -p mfd-core --example make_fuzz_seeds -- [corpus_root]`
//! with the root defaulting to `fuzz/corpus`.

use std::fs;
use std::path::PathBuf;

use mfd_core::data::{generate_skewed, SynthConfig};
use mfd_core::experiment::{ExperimentConfig, MethodSection};
use mfd_core::model::{CheckpointMeta, MlpParams, MlpSpec, ModelCheckpoint};
use mfd_core::objectives::Method;

fn main() -> mfd_core::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("fuzz/corpus"));

    let ckpt_dir = root.join("checkpoint_load");
    fs::create_dir_all(&ckpt_dir)?;
    let params = MlpParams::init(MlpSpec::new(vec![3, 4, 2])?, 1)?;
    let ckpt = ModelCheckpoint::from_params(
        &params,
        CheckpointMeta { seed: 1, method: "ce".into(), epoch: 0, lambda: None },
    );
    fs::write(ckpt_dir.join("small.ckpt"), ckpt.to_bytes()?)?;
    let params = MlpParams::init(MlpSpec::new(vec![2, 2])?, 2)?;
    let ckpt = ModelCheckpoint::from_params(
        &params,
        CheckpointMeta { seed: 2, method: "mfd".into(), epoch: 7, lambda: Some(3.0) },
    );
    fs::write(ckpt_dir.join("lambda.ckpt"), ckpt.to_bytes()?)?;

    let data_dir = root.join("dataset_decode");
    fs::create_dir_all(&data_dir)?;
    let ds = generate_skewed(&SynthConfig {
        num_classes: 2,
        dim: 2,
        n_per_class: 4,
        skew: 0.75,
        class_sep: 4.0,
        noise_std: 1.0,
        seed: 9,
    })?;
    fs::write(data_dir.join("small.bin"), ds.to_bytes())?;

    let cfg_dir = root.join("config_parse");
    fs::create_dir_all(&cfg_dir)?;
    fs::write(cfg_dir.join("default.json"), ExperimentConfig::default().to_json()?)?;
    let cfg = ExperimentConfig {
        methods: vec![
            MethodSection::for_method(Method::Hkd),
            MethodSection { lambda: 10.0, ..MethodSection::for_method(Method::Mfd) },
        ],
        ..ExperimentConfig::default()
    };
    fs::write(cfg_dir.join("methods.json"), cfg.to_json()?)?;

    println!("corpus seeds written under {}", root.display());
    Ok(())
}
