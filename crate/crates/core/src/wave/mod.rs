//! The damped wave benchmark: FEM model, nested-mesh projections, Monte Carlo
//! error study and the refinement sweep.

pub mod bench;
pub mod fem;
pub mod model;

pub use bench::*;
pub use fem::{assemble_fem, interpolation_embedding, load_vector, FemMesh1D};
pub use model::{build_mesh_projection, build_wave_model, NoisePlacement, WaveParams, WaveSystem};
