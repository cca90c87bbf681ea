//! Sketch representation as sparse lattice point sets, a graph encoder over
//! those points and a mixture-density LSTM decoder back to vector strokes.

pub mod audit;
pub mod dataset;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod lattice;
pub mod model;
pub mod nn;
pub mod params;
pub mod sketch_data;
pub mod train;

pub use error::{Error, ErrorClass, Result};
pub use graph::{build_adjacency, EmbedMode, GraphConfig, Proximity, SketchGraph};
pub use lattice::{mask_lattice, sample_lattice, LatticeConfig, Point, SketchLattice};
pub use model::{Model, ModelConfig};
pub use sketch_data::{Pen, RasterSketch, Step, VectorSketch};
