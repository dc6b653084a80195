//! Non-parametric estimation of marked multivariate Hawkes kernels.
//!
//! The crate simulates marked linear Hawkes processes, estimates their first-
//! and second-order statistics, and recovers the kernel matrix by training
//! one small gated network per row to satisfy the integral equation that links
//! the second-order statistics to the kernels. A direct Wiener-Hopf solver is
//! included as a baseline, together with error metrics, causality ratios and
//! helpers to turn raw trade prints into event streams.

pub mod cli;
pub mod dgm;
pub mod error;
pub mod events;
pub mod kernel;
pub mod market;
pub mod metrics;
pub mod norms;
pub mod presets;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod solver;
pub mod stats;
pub mod wiener_hopf;

pub use error::{HawkesError, Result};
pub use events::{Event, EventStream, Segment};
pub use kernel::{KernelEntry, KernelFamily, KernelMatrix, KernelSpec, MarkFactor, TabulatedKernel};
pub use norms::NormMatrix;
pub use quadrature::{build_quadrature, QuadratureGrid, QuadratureRule};
pub use simulate::{intensity_at, simulate, simulate_events, SimConfig};
pub use stats::{build_grid, estimate_first_order, estimate_second_order, SecondOrderStats, StatGrid};
pub use dgm::{DgmParams, InputScaler};
pub use solver::{fit, train_row, RowModel, TrainConfig};
pub use wiener_hopf::{wh_reconstruct, wh_solve, WhSolution, WienerHopfSystem};
pub use metrics::{causality_report, convergence_study, error_report, CausalityReport, ConvergenceReport, ErrorReport};
pub use market::{aggregate_trades, bin_volume, intraday_profile, trades_to_stream, window_filter, TradeRecord, VolumeBinning};
pub use presets::{preset, Preset};
pub use stats::GridConfig;
