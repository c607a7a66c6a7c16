#![allow(dead_code)]

use cmust_core::config::{ModelConfig, Profile};
use cmust_core::data::{generate_synthetic, SyntheticSpec};
use cmust_core::harness::{TaskData, TrainConfig};
use cmust_core::roada::{AutoencoderConfig, RoAdaConfig};

/// Small synthetic tasks: `nodes` nodes, hourly steps.
pub fn small_tasks(k: usize, nodes: usize, steps: usize, seed: u64) -> Vec<TaskData> {
    generate_synthetic(&SyntheticSpec {
        seed,
        tasks: k,
        nodes,
        steps,
        interval_minutes: 60,
        coupling: 1.0,
        noise_sd: 0.1,
    })
    .unwrap()
    .into_iter()
    .map(|d| TaskData::new(d, 12, 12, 4, 1).unwrap())
    .collect()
}

pub fn tiny_model(tasks: &[TaskData]) -> ModelConfig {
    ModelConfig::for_profile(Profile::Tiny, tasks[0].channels(), tasks[0].slots_per_day())
}

pub fn quick_train(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        max_epochs,
        patience: max_epochs,
        ..TrainConfig::for_profile(Profile::Tiny)
    }
}

pub fn quick_roada(epochs: usize) -> RoAdaConfig {
    RoAdaConfig {
        max_epochs_warmup: epochs,
        max_epochs_refine: epochs,
        autoencoder: AutoencoderConfig {
            epochs: 50,
            ..AutoencoderConfig::default()
        },
        ..RoAdaConfig::default()
    }
}
