//! Procedural scene corpora.
//!
//! Structured scenes hold one dominant object centered on the image and
//! sized to span the central grid, so every grid cell sees a distinct part
//! (corner, edge, or interior) and relative patch position is inferable
//! from content. Smaller objects of the same category are scattered
//! underneath. Texture and noise families carry no layout at all.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::codec::encode_png;
use super::image::ImageBuffer;
use super::manifest::{Corpus, CorpusManifest, ManifestEntry};
use super::resize::resample_bilinear;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AberrationSpec {
    pub enabled: bool,
    pub green_scale: f64,
}

impl AberrationSpec {
    pub const fn disabled() -> Self {
        Self {
            enabled: false,
            green_scale: 1.0,
        }
    }

    pub fn new(green_scale: f64) -> Result<Self> {
        let spec = Self {
            enabled: true,
            green_scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled && !(0.9..=1.0).contains(&self.green_scale) {
            return Err(Error::InvalidArgument(format!(
                "green_scale {} outside [0.9, 1.0]",
                self.green_scale
            )));
        }
        Ok(())
    }
}

impl Default for AberrationSpec {
    fn default() -> Self {
        Self::disabled()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneFamily {
    /// Textured background with 2–5 objects of one category.
    Structured,
    /// Gray texture only, no objects.
    Texture,
    /// Independent uniform noise per pixel and channel.
    Noise,
}

impl std::str::FromStr for SceneFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "structured" => Ok(Self::Structured),
            "texture" => Ok(Self::Texture),
            "noise" => Ok(Self::Noise),
            _ => Err(Error::Config(format!(
                "unknown family {s:?} (structured|texture|noise)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub family: SceneFamily,
    pub aberration: AberrationSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 160,
            height: 160,
            family: SceneFamily::Structured,
            aberration: AberrationSpec::disabled(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Square,
    Disc,
    Diamond,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fill {
    Stripes,
    Dots,
    Checker,
    Solid,
}

struct Category {
    name: &'static str,
    shape: Shape,
    fill: Fill,
    color: [f32; 3],
}

const CATEGORIES: [Category; 6] = [
    Category {
        name: "square_striped",
        shape: Shape::Square,
        fill: Fill::Stripes,
        color: [0.85, 0.25, 0.2],
    },
    Category {
        name: "disc_dotted",
        shape: Shape::Disc,
        fill: Fill::Dots,
        color: [0.2, 0.35, 0.85],
    },
    Category {
        name: "diamond_checked",
        shape: Shape::Diamond,
        fill: Fill::Checker,
        color: [0.25, 0.75, 0.3],
    },
    Category {
        name: "square_dotted",
        shape: Shape::Square,
        fill: Fill::Dots,
        color: [0.9, 0.75, 0.15],
    },
    Category {
        name: "disc_striped",
        shape: Shape::Disc,
        fill: Fill::Stripes,
        color: [0.7, 0.25, 0.75],
    },
    Category {
        name: "diamond_solid",
        shape: Shape::Diamond,
        fill: Fill::Solid,
        color: [0.2, 0.75, 0.8],
    },
];

pub fn category_names() -> Vec<&'static str> {
    CATEGORIES.iter().map(|c| c.name).collect()
}

/// Renders one scene, before any aberration, as a pure function of
/// `(seed, index)`. Returns the image and its category.
pub fn render_scene(cfg: &SynthConfig, seed: u64, index: u64) -> (ImageBuffer, Option<&'static str>) {
    let mut rng = rng::stream(seed, index);
    let (w, h) = (cfg.width, cfg.height);
    match cfg.family {
        SceneFamily::Noise => {
            let data = (0..w * h * 3).map(|_| rng.random::<f32>()).collect();
            (ImageBuffer::from_raw_unchecked(w, h, data), None)
        }
        SceneFamily::Texture => {
            let tex = gray_texture(w, h, &mut rng, 0.5, 0.35);
            (gray_to_rgb(w, h, &tex), None)
        }
        SceneFamily::Structured => {
            let cat = &CATEGORIES[rng.random_range(0..CATEGORIES.len())];
            let img = render_structured(w, h, cat, &mut rng);
            (img, Some(cat.name))
        }
    }
}

fn gray_to_rgb(w: usize, h: usize, gray: &[f32]) -> ImageBuffer {
    let mut data = Vec::with_capacity(w * h * 3);
    for &g in gray {
        data.extend_from_slice(&[g, g, g]);
    }
    ImageBuffer::from_raw_unchecked(w, h, data)
}

/// Two-octave value noise in `[mean - amp/2, mean + amp/2]`.
fn gray_texture(w: usize, h: usize, rng: &mut Rng, mean: f32, amp: f32) -> Vec<f32> {
    let mut acc = vec![0.0f32; w * h];
    for (cell, weight) in [(12usize, 0.6f32), (4, 0.4)] {
        let lw = w.div_ceil(cell) + 1;
        let lh = h.div_ceil(cell) + 1;
        let lattice: Vec<f32> = (0..lw * lh).map(|_| rng.random::<f32>()).collect();
        let up = resample_bilinear(&lattice, lw, lh, 1, lw * cell, lh * cell);
        for y in 0..h {
            for x in 0..w {
                acc[y * w + x] += weight * up[y * lw * cell + x];
            }
        }
    }
    acc.iter()
        .map(|v| (mean + amp * (v - 0.5)).clamp(0.0, 1.0))
        .collect()
}

/// Signed distance-like value, negative inside, in pixels.
fn shape_distance(shape: Shape, dx: f32, dy: f32, r: f32) -> f32 {
    match shape {
        Shape::Square => dx.abs().max(dy.abs()) - r,
        Shape::Disc => (dx * dx + dy * dy).sqrt() - 1.2 * r,
        Shape::Diamond => (dx.abs() + dy.abs() - 1.55 * r) / std::f32::consts::SQRT_2,
    }
}

fn fill_value(fill: Fill, x: f32, y: f32, phase: f32) -> f32 {
    match fill {
        Fill::Stripes => {
            if ((x + y + phase) / 6.0).floor() as i64 % 2 == 0 {
                1.0
            } else {
                0.55
            }
        }
        Fill::Dots => {
            let fx = (x + phase).rem_euclid(10.0) - 5.0;
            let fy = (y + phase).rem_euclid(10.0) - 5.0;
            if fx * fx + fy * fy < 6.0 {
                0.45
            } else {
                1.0
            }
        }
        Fill::Checker => {
            let cx = ((x + phase) / 8.0).floor() as i64;
            let cy = ((y + phase) / 8.0).floor() as i64;
            if (cx + cy) % 2 == 0 {
                1.0
            } else {
                0.6
            }
        }
        Fill::Solid => 1.0,
    }
}

struct Placed {
    cx: f32,
    cy: f32,
    r: f32,
    color: [f32; 3],
    phase: f32,
    outline: f32,
}

fn render_structured(w: usize, h: usize, cat: &Category, rng: &mut Rng) -> ImageBuffer {
    let level = rng.random_range(0.4..0.6);
    let bg = gray_texture(w, h, rng, level, 0.3);
    let mut img = gray_to_rgb(w, h, &bg);
    let scale = w.min(h) as f32;
    let tint = |rng: &mut Rng, c: [f32; 3]| -> [f32; 3] {
        let k = rng.random_range(0.85..1.1f32);
        [
            (c[0] * k).clamp(0.0, 1.0),
            (c[1] * k).clamp(0.0, 1.0),
            (c[2] * k).clamp(0.0, 1.0),
        ]
    };
    let n_small = rng.random_range(1..=4);
    let mut objects = Vec::with_capacity(n_small + 1);
    for _ in 0..n_small {
        let r = rng.random_range(0.03..0.05) * scale;
        objects.push(Placed {
            cx: rng.random_range(r..w as f32 - r),
            cy: rng.random_range(r..h as f32 - r),
            r,
            color: tint(rng, cat.color),
            phase: rng.random_range(0.0..8.0),
            outline: 1.5,
        });
    }
    // the dominant object is drawn last, over any clutter
    let jitter = 0.025 * scale;
    objects.push(Placed {
        cx: w as f32 / 2.0 + rng.random_range(-jitter..jitter),
        cy: h as f32 / 2.0 + rng.random_range(-jitter..jitter),
        r: rng.random_range(0.29..0.32) * scale,
        color: tint(rng, cat.color),
        phase: rng.random_range(0.0..8.0),
        outline: 0.025 * scale,
    });
    let data = img.data_mut();
    for obj in &objects {
        let reach = obj.r * 1.6 + 2.0;
        let x0 = (obj.cx - reach).max(0.0) as usize;
        let x1 = ((obj.cx + reach).ceil() as usize).min(w);
        let y0 = (obj.cy - reach).max(0.0) as usize;
        let y1 = ((obj.cy + reach).ceil() as usize).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
                let d = shape_distance(cat.shape, px - obj.cx, py - obj.cy, obj.r);
                let coverage = (0.5 - d).clamp(0.0, 1.0);
                if coverage <= 0.0 {
                    continue;
                }
                // dark rim of width `outline` just inside the boundary
                let rim = (d + obj.outline + 0.5).clamp(0.0, 1.0);
                let f = fill_value(cat.fill, px, py, obj.phase);
                let i = (y * w + x) * 3;
                for c in 0..3 {
                    let body = obj.color[c] * f;
                    let v = body * (1.0 - rim) + 0.08 * rim;
                    data[i + c] = data[i + c] * (1.0 - coverage) + v * coverage;
                }
            }
        }
    }
    img
}

/// Replaces green with the source green sampled at coordinates scaled by
/// `green_scale` about the image center (bilinear, half-pixel centers).
/// Red and blue are untouched.
pub fn apply_aberration(img: &ImageBuffer, spec: &AberrationSpec) -> ImageBuffer {
    if !spec.enabled {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    let data = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            let g = aberrated_green(img, spec.green_scale, x, y);
            data[(y * w + x) * 3 + 1] = g;
        }
    }
    out
}

pub(crate) fn aberrated_green(img: &ImageBuffer, scale: f64, x: usize, y: usize) -> f32 {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let (cx, cy) = (w / 2.0, h / 2.0);
    let sx = (x as f64 + 0.5 - cx) * scale + cx - 0.5;
    let sy = (y as f64 + 0.5 - cy) * scale + cy - 0.5;
    let sx = sx.clamp(0.0, w - 1.0);
    let sy = sy.clamp(0.0, h - 1.0);
    let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let (fx, fy) = ((sx - x0 as f64) as f32, (sy - y0 as f64) as f32);
    let g = |xx, yy| img.channel(xx, yy, 1);
    let top = g(x0, y0) + (g(x1, y0) - g(x0, y0)) * fx;
    let bot = g(x0, y1) + (g(x1, y1) - g(x0, y1)) * fx;
    (top + (bot - top) * fy).clamp(0.0, 1.0)
}

/// Full rendered image of entry `index`, with aberration if enabled.
pub fn synth_image(cfg: &SynthConfig, seed: u64, index: u64) -> (ImageBuffer, Option<&'static str>) {
    let (img, cat) = render_scene(cfg, seed, index);
    (apply_aberration(&img, &cfg.aberration), cat)
}

fn entry(cfg: &SynthConfig, i: usize, cat: Option<&str>) -> ManifestEntry {
    let image_id = format!("img_{i:05}");
    ManifestEntry {
        path: format!("{image_id}.png"),
        image_id,
        width: cfg.width,
        height: cfg.height,
        category: cat.map(str::to_owned),
    }
}

fn check_config(n_images: usize, cfg: &SynthConfig) -> Result<()> {
    if n_images == 0 {
        return Err(Error::InvalidArgument("n_images must be at least 1".into()));
    }
    cfg.aberration.validate()?;
    if cfg.width < 8 || cfg.height < 8 {
        return Err(Error::InvalidArgument("scene must be at least 8x8".into()));
    }
    Ok(())
}

/// The corpus `synth_corpus` would write, built without touching disk.
/// Images match the decoded PNGs exactly.
pub fn synth_in_memory(n_images: usize, cfg: &SynthConfig, seed: u64) -> Result<Corpus> {
    check_config(n_images, cfg)?;
    let mut entries = Vec::with_capacity(n_images);
    let mut images = Vec::with_capacity(n_images);
    for i in 0..n_images {
        let (img, cat) = synth_image(cfg, seed, i as u64);
        entries.push(entry(cfg, i, cat));
        // round through 8-bit storage like the on-disk corpus
        images.push(ImageBuffer::from_rgb8(img.width(), img.height(), &img.to_rgb8())?);
    }
    let manifest = CorpusManifest::new(seed, entries, ".")?;
    Ok(Corpus { manifest, images })
}

/// Writes `n_images` PNG scenes plus `manifest.jsonl` into `out_dir`.
pub fn synth_corpus(
    n_images: usize,
    cfg: &SynthConfig,
    seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<CorpusManifest> {
    check_config(n_images, cfg)?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(n_images);
    for i in 0..n_images {
        let (img, cat) = synth_image(cfg, seed, i as u64);
        let e = entry(cfg, i, cat);
        let path = out_dir.join(&e.path);
        let bytes = encode_png(&img)?;
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(e);
    }
    let manifest = CorpusManifest::new(seed, entries, out_dir)?;
    manifest.save(out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}
