//! Desk-scale simulator and library for complexity-aware edge-cloud
//! distributed training and inference.
//!
//! The edge model is a tripartite multi-exit network: a *main* block with
//! an exit over all classes, a lightweight *adaptive* block fed from the
//! raw input, and an *extension* block with a second exit over the hard
//! classes only. Training first fits the main block on everything, ranks
//! classes by validation precision to pick the hard set, then freezes the
//! main block and trains the remaining blocks on hard-class data alone.
//! At inference each instance exits at the main block, the extension
//! block, or a simulated cloud model, driven by prediction entropy and
//! exit confidence. An analytic cost model prices the strategies.
//!
//! Module map:
//! - [`nn`]: dense-layer engine (forward/backward, softmax, SGD).
//! - [`arch`]: the tripartite network, freezing, parameter/MAC accounting.
//! - [`complexity`]: class statistics, hard-class selection, error taxonomy.
//! - [`trainer`]: the staged training pipeline.
//! - [`router`]: entropy/confidence routing across the three exits.
//! - [`cost`]: energy and cost arithmetic.
//! - [`data`]: synthetic benchmark generator and IDX/CSV loaders.
//! - [`checkpoint`]: bit-exact model and partition serialization.
//!
//! # Quick start
//!
//! ```
//! use meanet::arch::{BlockSpec, MeaConfig, Merge};
//! use meanet::data::{gen_synthetic, SyntheticSpec};
//! use meanet::nn::SgdConfig;
//! use meanet::router::{run_inference, RoutePolicy, CloudModel, CloudSim};
//! use meanet::trainer::{run_algorithm1, PipelineParams, TrainParams};
//!
//! # fn main() -> meanet::Result<()> {
//! // Four Gaussian classes, the last two overlapped into a hard group.
//! let spec = SyntheticSpec {
//!     num_classes: 4,
//!     dim: 8,
//!     samples_per_class: 40,
//!     separation: 3.0,
//!     overlap: 1.0,
//!     hard_count: 2,
//!     seed: 7,
//! };
//! let data = gen_synthetic(&spec)?;
//!
//! let quick = |epochs, seed| TrainParams {
//!     sgd: SgdConfig { initial_lr: 0.05, milestones: vec![], decay_factor: 0.1,
//!                      momentum: 0.9, seed },
//!     epochs,
//!     batch_size: 16,
//! };
//! let params = PipelineParams {
//!     mea: MeaConfig::variant_b(
//!         8,
//!         BlockSpec::relu(vec![8, 5]),
//!         BlockSpec::relu(vec![5]),
//!         BlockSpec::relu(vec![12]),
//!         4,
//!         2,
//!         Merge::Sum,
//!     )?,
//!     cloud_spec: BlockSpec::relu(vec![16, 12]),
//!     main_params: quick(5, 1),
//!     cloud_params: quick(5, 2),
//!     extension_params: quick(8, 3),
//!     val_fraction: 0.10,
//!     split_seed: 3,
//!     build_seed: 4,
//!     partition_path: None,
//! };
//!
//! // Train main + cloud, rank classes, freeze, train the extension path.
//! let out = run_algorithm1(&data, &params)?;
//!
//! // Route a test set through the three exits with an oracle cloud.
//! let test = gen_synthetic(&SyntheticSpec { seed: 77, samples_per_class: 10, ..spec })?;
//! let oracle = CloudSim::reliable(CloudModel::Oracle);
//! let policy = RoutePolicy { threshold: 0.8, cloud: Some(&oracle), force_extension: false };
//! let (records, report) = run_inference(&out.net, &out.partition, &test, &policy)?;
//! assert_eq!(records.len(), test.len());
//! assert!(report.beta > 0.0 && report.accuracy > 0.5);
//! # Ok(())
//! # }
//! ```

pub mod arch;
pub mod checkpoint;
pub mod complexity;
pub mod cost;
pub mod data;
pub mod error;
pub mod nn;
pub mod router;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;

use rand_chacha::rand_core::SeedableRng;

/// The crate-wide deterministic RNG. Every stochastic choice (weight
/// init, shuffles, synthetic data) goes through one of these, seeded
/// explicitly, so runs replay bit-identically.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the deterministic RNG for a seed.
pub fn seeded_rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Derives an independent stream from a base seed and a stream label,
/// so pipeline stages can share one experiment seed without reusing
/// random state.
pub fn derived_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
