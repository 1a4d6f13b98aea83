pub mod audio;
pub mod decode;
pub mod eval;
pub mod longform;
pub mod model;
pub mod normalize;
pub mod vocab;
