//! Quantum Fisher information (QFI) lower bounds from randomized measurements.
//!
//! The library computes the exact QFI of a state `ρ` with respect to a
//! Hermitian generator `A`, together with the monotone series of polynomial
//! lower bounds `F_0 ≤ F_1 ≤ … ≤ F_Q` obtained by truncating the geometric
//! expansion of `1/(λ_i + λ_j)` over the spectrum of `ρ`. It simulates the
//! randomized-measurement protocol that estimates these bounds from
//! classical shadows (local single-qubit unitaries for qubit registers,
//! global unitaries for collective-spin systems), provides unbiased
//! U-statistics estimators with brute-force and O(M) inclusion–exclusion
//! evaluation paths, and evaluates analytic variance upper bounds and
//! measurement budgets `M(ε, δ)`.
//!
//! Module map:
//! - [`linalg`]: dense complex kernels, Hermitian eigendecomposition, CUE
//!   sampling, permutation operators and partial traces over state copies.
//! - [`stream`]: forkable deterministic RNG streams.
//! - [`states`]: GHZ / N00N / depolarized states, collective-spin and
//!   two-mode observables, Bose-Hubbard quench unitaries.
//! - [`fisher`]: exact QFI, the bound series by several independent routes,
//!   convergence diagnostics, entanglement-depth witnessing.
//! - [`protocol`]: randomized-measurement simulation and classical shadows.
//! - [`estimators`]: U-statistics estimators of the bounds.
//! - [`budget`]: variance upper bounds and required measurement budgets.
//! - [`bench`]: experiment harness reproducing convergence curves, noise
//!   thresholds, and Monte-Carlo error-scaling studies.

pub mod bench;
pub mod budget;
pub mod error;
pub mod estimators;
pub mod fisher;
pub mod linalg;
pub mod protocol;
pub mod states;
pub mod stream;

pub use error::{Error, Result};
