//! Place-specific camera selection.
//!
//! The trajectory is cut into overlapping places. For every place and camera
//! the training-traverse translation errors are turned into a Gaussian KDE,
//! the expected value of a capped monomial cost is estimated under that
//! density, and the camera with the lowest expected cost is recorded in a
//! [`SelectionTable`].

mod cost;
mod kde;
mod partition;
mod table;

use thiserror::Error;

pub use cost::CostFunction;
pub(crate) use kde::expected_cost_with_mode;
pub use kde::{
    expected_cost, expected_cost_quadrature, kde_density, trapezoid, ExpectationMode, KdeConfig, Kernel,
    PoseErrorSampleSet,
};
pub use partition::{partition_places, Place, PlacePartition};
pub use table::{argmin_camera, lookup_camera, select_cameras, PlaceSelection, SelectionTable, TABLE_FORMAT_VERSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cost is undefined for pose error {0}")]
    Domain(f64),
    #[error("sample set is empty")]
    EmptySamples,
    #[error("invalid pose error sample {0}")]
    InvalidSample(f64),
    #[error("no camera has training data for place {0}")]
    NoDataForPlace(usize),
    #[error("selection table line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("selection table is inconsistent: {0}")]
    Inconsistent(String),
}
