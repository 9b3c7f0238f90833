pub mod bench;
pub mod integrate;
pub mod junctions;
pub mod linalg;
pub mod lqr;
pub mod model;
pub mod oracle;
pub mod primitives;
pub mod sequencing;
pub mod tangency;
