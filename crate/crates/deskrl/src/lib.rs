//! deskrl: a desk-scale reinforcement-learning laboratory.
//!
//! The crate studies how policy-gradient training uses its output budget:
//! a softmax bigram MDP with an explicit stop action, token-averaged
//! policy-gradient updates with and without the negative-gradient mask,
//! closed-form entropy dynamics with an executable entropy-increase check,
//! an exactly verified Countdown arithmetic environment with trace
//! analytics, a coupled data/budget curriculum with a doubling-probe budget
//! selector, and pass@k estimation.
//!
//! Everything is seeded and deterministic: the same seed reproduces the same
//! rollouts, training runs, and emitted artifacts regardless of worker
//! count. See the `examples/` directory for one runnable walkthrough per
//! capability, and the `deskrl` binary for the file-level Interfaces
//! (experiment runner, Countdown tooling, pass@k, trace analytics).

pub mod bigram;
pub mod countdown;
pub mod curriculum;
pub mod entropy;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod seeding;
pub mod update;

pub use bigram::{ActionSpace, BigramPolicy, InitialDistribution, Termination, Trajectory};
pub use error::{Error, Result};
pub use update::{AdvantageScheme, GradientReport, UpdateRule};
