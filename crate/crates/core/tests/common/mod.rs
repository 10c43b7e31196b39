#![allow(dead_code)]

use std::path::{Path, PathBuf};

use cgir::datamodel::Dataset;
use cgir::synthworld::{generate_world, SynthConfig, SynthWorld};
use cgir::trainer::{save_checkpoint, train, TrainConfig, TrainOutcome};

pub fn small_world(seed: u64) -> SynthWorld {
    generate_world(&SynthConfig {
        num_users: 60,
        num_items: 40,
        num_attributes: 4,
        adoptions_per_user: 8,
        seed,
        ..Default::default()
    })
    .unwrap()
}

pub fn quick_config() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        user_batch_size: 20,
        triple_batch_size: 32,
        eval_every: 3,
        ..Default::default()
    }
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub data: Dataset,
    pub outcome: TrainOutcome,
    pub config: TrainConfig,
}

impl Fixture {
    pub fn data_dir(&self) -> PathBuf {
        self.dir.path().join("data")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.dir.path().join("ckpt")
    }
}

/// Writes a small world to `<tmp>/data` and a briefly trained checkpoint to `<tmp>/ckpt`.
pub fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let world = small_world(5);
    world.write_dir(&dir.path().join("data")).unwrap();
    let data = world.to_dataset();
    let config = quick_config();
    let outcome = train(&data, &config).unwrap();
    save_checkpoint(&dir.path().join("ckpt"), &outcome.checkpoint_parts(&data, &config)).unwrap();
    Fixture {
        dir,
        data,
        outcome,
        config,
    }
}

pub fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}
