//! Seeded synthetic image classes for fast tests.
//!
//! Each class is defined by a set of blob anchor positions. Every image
//! re-renders its class with per-image blob jitter, amplitude variation,
//! a global translation, and heavy pixel noise, so classes overlap and a
//! network has to learn genuinely statistical boundaries instead of a
//! lookup table. Pixels are clamped to [0, 1] and snapped to the 1/255
//! grid so IDX round-trips are bitwise. Labels are assigned round-robin,
//! so every class appears floor(n/c) or ceil(n/c) times.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

use super::{LabeledDataset, Split};

const BACKGROUND: f64 = 0.04;
const BLOBS_PER_CLASS: usize = 5;
/// Anchor blobs shared by every class: structure without class signal.
const SHARED_BLOBS: usize = 2;
const BLOB_RADIUS: f64 = 1.9;
const BLOB_AMPLITUDE: f64 = 0.75;
/// Per-image scatter of each blob around its class anchor.
const BLOB_JITTER: f64 = 1.8;
/// Per-image translation of the whole glyph.
const GLOBAL_SHIFT: f64 = 2.0;
const PIXEL_NOISE: f64 = 0.22;

struct Blob {
    y: f64,
    x: f64,
    channel: usize,
}

pub fn make_synthetic(
    n: usize,
    c: usize,
    image_shape: (usize, usize, usize),
    rng_seed: u64,
) -> Result<LabeledDataset> {
    if c < 2 {
        return Err(Error::InvalidArgument("need at least 2 classes".into()));
    }
    if n < c {
        return Err(Error::InvalidArgument(format!(
            "need at least one sample per class: n={} < c={}",
            n, c
        )));
    }
    let (ch, h, w) = image_shape;
    if ch == 0 || h == 0 || w == 0 {
        return Err(Error::InvalidArgument(format!(
            "degenerate image shape {:?}",
            image_shape
        )));
    }

    let anchors: Vec<Vec<Blob>> = (0..c)
        .map(|k| class_anchors(k, image_shape, rng_seed))
        .collect();
    let shared = shared_anchors(image_shape, rng_seed);

    let pixels_per_image = ch * h * w;
    let mut data = Vec::with_capacity(n * pixels_per_image);
    let mut labels = Vec::with_capacity(n);
    let mut rng = seed::rng(seed::derive(rng_seed, "synthetic-noise"));
    let mut image = vec![0.0f64; pixels_per_image];
    for i in 0..n {
        let label = i % c;
        labels.push(label);
        render_image(&mut image, &anchors[label], &shared, image_shape, &mut rng);
        data.extend(image.iter().map(|&v| quantize(v)));
    }
    LabeledDataset::new(
        Tensor::new(vec![n, ch, h, w], data)?,
        labels,
        c,
        Split::Train,
    )
}

fn class_anchors(class: usize, (ch, h, w): (usize, usize, usize), rng_seed: u64) -> Vec<Blob> {
    let mut rng = seed::rng(seed::derive_indexed(rng_seed, "synthetic-class", class as u64));
    (0..BLOBS_PER_CLASS)
        .map(|_| Blob {
            y: rng.random_range(0.15..0.85) * h as f64,
            x: rng.random_range(0.15..0.85) * w as f64,
            channel: rng.random_range(0..ch),
        })
        .collect()
}

fn shared_anchors((ch, h, w): (usize, usize, usize), rng_seed: u64) -> Vec<Blob> {
    let mut rng = seed::rng(seed::derive(rng_seed, "synthetic-shared"));
    (0..SHARED_BLOBS)
        .map(|_| Blob {
            y: rng.random_range(0.15..0.85) * h as f64,
            x: rng.random_range(0.15..0.85) * w as f64,
            channel: rng.random_range(0..ch),
        })
        .collect()
}

fn render_image(
    image: &mut [f64],
    class_blobs: &[Blob],
    shared_blobs: &[Blob],
    (ch, h, w): (usize, usize, usize),
    rng: &mut ChaCha8Rng,
) {
    image.fill(BACKGROUND);
    let dy = rng.random_range(-GLOBAL_SHIFT..GLOBAL_SHIFT);
    let dx = rng.random_range(-GLOBAL_SHIFT..GLOBAL_SHIFT);
    for blob in class_blobs.iter().chain(shared_blobs) {
        let cy = blob.y + dy + rng.random_range(-BLOB_JITTER..BLOB_JITTER);
        let cx = blob.x + dx + rng.random_range(-BLOB_JITTER..BLOB_JITTER);
        let amp = BLOB_AMPLITUDE * rng.random_range(0.55..1.0);
        // bumps fall below the noise floor past ~3 radii
        let reach = (3.0 * BLOB_RADIUS).ceil() as isize;
        let y_lo = ((cy as isize) - reach).max(0) as usize;
        let y_hi = (((cy as isize) + reach + 1).max(0) as usize).min(h);
        let x_lo = ((cx as isize) - reach).max(0) as usize;
        let x_hi = (((cx as isize) + reach + 1).max(0) as usize).min(w);
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                let bump = amp * (-d2 / (2.0 * BLOB_RADIUS * BLOB_RADIUS)).exp();
                let idx = (blob.channel * h + y) * w + x;
                image[idx] = (image[idx] + bump).min(1.0);
            }
        }
    }
    for v in image.iter_mut() {
        *v += rng.random_range(-PIXEL_NOISE..PIXEL_NOISE);
    }
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}
