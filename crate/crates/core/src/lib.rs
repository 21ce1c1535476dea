pub mod error;
pub mod inflate;
pub mod losses;
pub mod segmetrics;
pub mod skeleton;
pub mod spatial;
pub mod swc;
pub mod synth;
pub mod tasl;
pub mod tracemetrics;
pub mod volume;

pub use error::{Error, Result};
pub use skeleton::{skeletonize, SkeletonGraph};
pub use swc::{Morphology, SwcRecord};
pub use volume::{Volume3D, VolumeKind, VoxelCoord};
