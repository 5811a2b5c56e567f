//! Replacement oracles: the shortest-decomposition database, the local
//! fusion pass and the continuous-angle synthesis fallback.

mod canon;
mod db;
mod fuse;
mod synth;

pub use canon::{canonicalize, CanonicalForm, QUANT_SCALE};
pub use db::{build_db, load_db, pi_quarter_grid, placements, save_db, BuildOptions, DbEntry, DbSet, RewriteDb};
pub use fuse::{fuse_local, is_null_angle};
pub use synth::{synthesize_shorter, SynthesisConfig};
