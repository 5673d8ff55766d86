use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::GeometryError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),

    #[error("proposal frame {label:?} has no ground-truth counterpart")]
    MisalignedSeries { label: String },

    #[error("MOTA is undefined without ground-truth footprints")]
    ZeroGroundTruth,

    #[error("no areas of interest to score")]
    EmptyDataset,

    #[error("cannot place {requested} buildings: only {capacity} slots fit the grid extent")]
    InfeasiblePacking { requested: usize, capacity: usize },

    #[error("exhaustive matching limited to {limit} footprints on the smaller side, got {got}")]
    TooLarge { got: usize, limit: usize },

    #[error("{}: feature {index} has no {property:?} property", path.display())]
    MissingId {
        path: PathBuf,
        index: usize,
        property: String,
    },

    #[error("{}: feature {index} has invalid geometry: {reason}", path.display())]
    InvalidGeometry {
        path: PathBuf,
        index: usize,
        reason: String,
    },

    #[error("duplicate footprint id {id:?} in frame {label:?}")]
    DuplicateId { label: String, id: String },

    #[error("{}: duplicate timestep label {label:?}", path.display())]
    DuplicateLabel { path: PathBuf, label: String },

    #[error("{}: no footprint files found", path.display())]
    EmptyDirectory { path: PathBuf },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}
