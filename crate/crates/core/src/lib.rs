//! Reinforcement-learned acquisition for pool-based active learning on
//! multi-entity detection and tagging tasks.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: samples, entity geometry, the dataset container and the pool manager.
//! - [`synth`]: synthetic layout-detection and span-tagging task generators.
//! - [`nn`]: a small dense-network kernel with analytic gradients and SGD+momentum.
//! - [`theta`]: the trainable prediction models and the AP / entity-F1 metrics.
//! - [`state`]: MDP state encoding of candidate and state-set samples.
//! - [`policy`]: the deep-Q acquisition policy, replay buffer and double-DQN updates.
//! - [`acquisition`]: random, entropy, margin and learned-policy selection.
//! - [`annotator`]: simulated strong/weak annotation and the time ledger.
//! - [`rewards`]: metric-delta, class-balance and feedback rewards.
//! - [`loops`]: policy-training episodes and deployment / baseline learning curves.
//! - [`harness`]: experiment configuration, seeding and result aggregation.

pub mod acquisition;
pub mod annotator;
pub mod data;
pub mod error;
pub mod harness;
pub mod loops;
pub mod nn;
pub mod policy;
pub mod rewards;
pub mod rng;
pub mod state;
pub mod synth;
pub mod theta;

pub use error::{OpadError, Result};
