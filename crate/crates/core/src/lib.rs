//! Text destylization pre-training at desk scale.

pub mod annot;
pub mod control;
pub mod error;
pub mod eval;
pub mod geom;
pub mod glyph;
pub mod gradsuite;
pub mod loss;
pub mod model;
pub mod nd;
pub mod synth;
pub mod train;

pub use error::{OdmError, Result};
