//! Evaluation of identifier-tagged building footprint time series.
//!
//! Per-frame footprints are matched one-to-one by IOU ([`matching`]), the
//! matches are followed through time to count identifier mismatches and
//! newly constructed buildings ([`metric`]), and the tracking and change
//! terms are combined into a single bounded score per area of interest.
//! [`tracker`] holds the baseline identifier-propagation tracker, [`synth`]
//! a seeded scenario generator plus an exhaustive matching oracle, and
//! [`io`] the on-disk formats used by the `scot` command line tool.

pub mod error;
pub mod geometry;
pub mod io;
pub mod matching;
pub mod metric;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::{iou, Polygon, RawPolygon};
pub use matching::{match_frame, MatchResult};
pub use metric::{
    score_aoi, score_dataset, AoiScore, Footprint, Frame, MatchCounts, ScoreReport, ScotConfig, TimeSeries,
};
