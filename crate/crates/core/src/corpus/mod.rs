//! Image ingestion, pixel-budget resizing, and synthetic corpora.

mod codec;
mod image;
mod manifest;
mod resize;
mod synth;

pub use codec::{decode_image, encode_png, encode_png_rgb8, encode_ppm, load_image, save_png};
pub use image::ImageBuffer;
pub use manifest::{Corpus, CorpusManifest, ManifestEntry};
pub use resize::{budget_dimensions, resample_bilinear, resize, resize_to_budget, MAX_UPSCALE};
pub use synth::{
    apply_aberration, category_names, render_scene, synth_corpus, synth_image, synth_in_memory, AberrationSpec,
    SceneFamily, SynthConfig,
};
