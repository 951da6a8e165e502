//! Mahalanobis metric learning from pairwise constraints.
//!
//! Two solvers learn a PSD matrix `M` for the distance
//! `d²(x, y) = (x − y)ᵀ M (x − y)`:
//!
//! * [`pcml`] alternates an SVM-form dual solve with a projection onto the
//!   PSD cone.
//! * [`ncml`] restricts `M` to nonnegative combinations of the pair outer
//!   products, which are PSD by construction, and alternates two QPs.
//!
//! Both stop when the duality gap has shrunk by a factor `ε` relative to
//! the first iteration.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod ncml;
pub mod pairs;
pub mod pcml;
pub mod qp;
pub mod synth;
pub mod trace;

pub use dataset::{read_dataset, Dataset, Format};
pub use error::{Error, Result};
pub use linalg::SymMatrix;
pub use model::{Algorithm, MetricModel, ModelMeta};
pub use ncml::{train_ncml, NcmlConfig};
pub use pairs::{build_constraints, PairSet};
pub use pcml::{train_pcml, PcmlConfig};
pub use trace::{TraceRow, TrainTrace};
