//! Rasterization, rotation, binarization and the panel similarity score.

mod draw;
mod pgm;
mod rotate;
mod similarity;

pub use draw::{rasterize, stroke_width, vertices, RECTANGLE_ASPECT, STAR_INNER_RATIO};
pub use pgm::{decode_pgm, encode_pgm};
pub use rotate::rotate_image;
pub use similarity::{similarity, BinaryMask, SimilarityScore};
