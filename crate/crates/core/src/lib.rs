pub mod container;
pub mod correct;
pub mod design;
pub mod encode;
pub mod error;
pub mod geometry;
pub mod glm;
pub mod labels;
pub mod parallel;
pub mod rng;
pub mod semantics;
pub mod statmap;
pub mod synth;
pub mod tdist;

pub use container::MatrixContainer;
pub use error::{Error, Result};
pub use geometry::VolumeGeometry;
pub use labels::LabelSet;
pub use statmap::{Level, StatMap};
