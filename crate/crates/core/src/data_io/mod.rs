//! Grayscale image/mask I/O, resampling and synthetic phantoms.

mod pgm;
mod resize;
mod sample;
mod synth;

pub use pgm::{encode_pgm, parse_pgm, read_pgm, write_pgm, Pgm};
pub use resize::{resize_bilinear, resize_nearest};
pub use sample::{
    dataset_manifest, load_image, load_mask, load_sample, mask_from_pgm, mask_to_pgm, save_mask, write_dataset, Dataset,
    GrayImage, Origin, Sample,
};
pub use synth::{synth_generate, Ellipse, SynthConfig};
