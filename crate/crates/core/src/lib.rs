//! Harmonizes gridded, vector and point exposure data onto a planar
//! aperture-7 hexagonal hierarchy and computes exposome analytics on the
//! resulting hex frames.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytics;
pub mod catalog;
pub mod convert;
pub mod expometrics;
pub mod geom;
pub mod hexgrid;
pub mod ingest;
pub mod linkage;

pub use geom::{BBox, Point, Polygon, RasterGrid};
pub use hexgrid::{GridFingerprint, GridSpec, HexId};
