//! Point-annotated crowd images: manifest ingest, synthetic generation,
//! and resolution capping.
//!
//! The canonical dataset manifest is a JSON array of
//! `{"image": <relative path>, "points": [[x, y], ...]}` entries, with image
//! files (PNG or JPEG) resolved relative to the manifest location.
//! Coordinates are `(x, y) = (column, row)`, origin top-left, sub-pixel
//! floats allowed; a point is in bounds iff it lies in `[0, width) x [0, height)`.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Head coordinates for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct PointAnnotationSet {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    /// `(x, y)` pairs; duplicates permitted.
    pub points: Vec<(f32, f32)>,
}

impl PointAnnotationSet {
    /// Builds an annotation set, rejecting any point outside
    /// `[0, width) x [0, height)`.
    pub fn validated(
        image_id: impl Into<String>,
        width: u32,
        height: u32,
        points: Vec<(f32, f32)>,
    ) -> Result<Self> {
        let image_id = image_id.into();
        for (index, &(x, y)) in points.iter().enumerate() {
            let in_bounds =
                x >= 0.0 && y >= 0.0 && x < width as f32 && y < height as f32 && x.is_finite();
            if !in_bounds || !y.is_finite() {
                return Err(Error::OutOfBoundsPoint {
                    image_id,
                    index,
                    x,
                    y,
                    width,
                    height,
                });
            }
        }
        Ok(Self {
            image_id,
            width,
            height,
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// An image raster paired with its point annotations.
///
/// `pixels` is `H x W x 3`, RGB, values in `[0, 1]`; its dimensions always
/// equal the annotation `height`/`width`.
#[derive(Debug, Clone)]
pub struct ImageRecord {
    pub pixels: Array3<f32>,
    pub annotations: PointAnnotationSet,
}

impl ImageRecord {
    pub fn new(pixels: Array3<f32>, annotations: PointAnnotationSet) -> Result<Self> {
        let (h, w, c) = pixels.dim();
        if h != annotations.height as usize || w != annotations.width as usize || c != 3 {
            return Err(Error::ShapeMismatch {
                context: format!("ImageRecord {}", annotations.image_id),
                expected: format!("{}x{}x3", annotations.height, annotations.width),
                actual: format!("{}x{}x{}", h, w, c),
            });
        }
        Ok(Self {
            pixels,
            annotations,
        })
    }

    pub fn image_id(&self) -> &str {
        &self.annotations.image_id
    }

    pub fn height(&self) -> usize {
        self.annotations.height as usize
    }

    pub fn width(&self) -> usize {
        self.annotations.width as usize
    }
}

/// Configuration for the synthetic dataset generator.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SynthConfig {
    pub num_images: usize,
    /// `(height, width)` in pixels.
    pub image_size: (usize, usize),
    /// Inclusive range of head counts per image.
    pub count_range: (usize, usize),
    /// Range of head radii in pixels.
    pub head_radius_range: (f32, f32),
    /// Amplitude of the uniform background noise, in `[0, 1]` units.
    pub background_noise_level: f32,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.image_size;
        let (cmin, cmax) = self.count_range;
        let (rmin, rmax) = self.head_radius_range;
        if cmin > cmax {
            return Err(Error::InvalidConfig(format!(
                "count_range min {} > max {}",
                cmin, cmax
            )));
        }
        if !(rmin > 0.0) || rmin > rmax {
            return Err(Error::InvalidConfig(format!(
                "head_radius_range ({}, {}) must be positive and ordered",
                rmin, rmax
            )));
        }
        if !(0.0..=1.0).contains(&self.background_noise_level) {
            return Err(Error::InvalidConfig(format!(
                "background_noise_level {} outside [0, 1]",
                self.background_noise_level
            )));
        }
        // Heads must fit: a disk of the maximum radius needs a full diameter
        // inside the image.
        let diameter = (2.0 * rmax).ceil() as usize + 1;
        if h < diameter || w < diameter {
            return Err(Error::InfeasibleSynth(format!(
                "image {}x{} cannot fit a head of radius {}",
                h, w, rmax
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    image: String,
    points: Vec<[f64; 2]>,
}

/// Loads a dataset manifest and its referenced images.
///
/// Points are validated against image bounds; the first offending point is
/// reported with its image id and index.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<ImageRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: path.into(),
        reason: e.to_string(),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    entries
        .iter()
        .map(|entry| {
            let img_path = base.join(&entry.image);
            let pixels = read_image(&img_path)?;
            let (h, w, _) = pixels.dim();
            let points = entry
                .points
                .iter()
                .map(|p| (p[0] as f32, p[1] as f32))
                .collect();
            let ann = PointAnnotationSet::validated(entry.image.clone(), w as u32, h as u32, points)?;
            ImageRecord::new(pixels, ann)
        })
        .collect()
}

/// Writes `records` as PNGs plus a `manifest.json` under `dir`; returns the
/// manifest path. Together with [`load_annotations`] this round-trips point
/// lists losslessly (pixels are quantized to 8-bit).
pub fn save_dataset(records: &[ImageRecord], dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(records.len());
    for record in records {
        let file = format!("{}.png", sanitize_id(record.image_id()));
        write_image(&record.pixels, &dir.join(&file))?;
        entries.push(ManifestEntry {
            image: file,
            points: record
                .annotations
                .points
                .iter()
                .map(|&(x, y)| [x as f64, y as f64])
                .collect(),
        });
    }
    let manifest = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&entries).expect("manifest serialization");
    fs::write(&manifest, text).map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}

/// Replaces path separators and other awkward characters in an image id so it
/// can serve as a file stem.
pub fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn read_image(path: &Path) -> Result<Array3<f32>> {
    let img = image::open(path)
        .map_err(|e| Error::Image {
            path: path.into(),
            source: e,
        })?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Array3::<f32>::zeros((h, w, 3));
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            out[[y as usize, x as usize, c]] = p.0[c] as f32 / 255.0;
        }
    }
    Ok(out)
}

pub fn write_image(pixels: &Array3<f32>, path: &Path) -> Result<()> {
    let (h, w, _) = pixels.dim();
    let mut img = image::RgbImage::new(w as u32, h as u32);
    for (x, y, p) in img.enumerate_pixels_mut() {
        for c in 0..3 {
            let v = pixels[[y as usize, x as usize, c]].clamp(0.0, 1.0);
            p.0[c] = (v * 255.0).round() as u8;
        }
    }
    img.save(path).map_err(|e| Error::Image {
        path: path.into(),
        source: e,
    })
}

/// Generates a deterministic synthetic dataset: anti-aliased bright disks at
/// sampled head positions over a noisy background, with per-image luminance
/// jitter. Annotations record the exact (sub-pixel) disk centers.
pub fn synth_generate(config: &SynthConfig) -> Result<Vec<ImageRecord>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (h, w) = config.image_size;
    let mut records = Vec::with_capacity(config.num_images);
    for idx in 0..config.num_images {
        let count = rng.gen_range(config.count_range.0..=config.count_range.1);
        let base = rng.gen_range(0.08_f32..0.28);
        let tint: [f32; 3] = [
            rng.gen_range(-0.03..0.03),
            rng.gen_range(-0.03..0.03),
            rng.gen_range(-0.03..0.03),
        ];
        let luminance = rng.gen_range(0.6_f32..0.95);

        let mut pixels = Array3::<f32>::zeros((h, w, 3));
        let lvl = config.background_noise_level;
        for row in 0..h {
            for col in 0..w {
                let noise = if lvl > 0.0 { rng.gen_range(-lvl..lvl) } else { 0.0 };
                for c in 0..3 {
                    pixels[[row, col, c]] = (base + tint[c] + noise).clamp(0.0, 1.0);
                }
            }
        }

        let mut points = Vec::with_capacity(count);
        for _ in 0..count {
            let radius = rng.gen_range(config.head_radius_range.0..=config.head_radius_range.1);
            let cx = rng.gen_range(radius..(w as f32 - radius));
            let cy = rng.gen_range(radius..(h as f32 - radius));
            let bright = (luminance * rng.gen_range(0.85..1.15)).clamp(0.0, 1.0);
            stamp_disk(&mut pixels, cx, cy, radius, bright);
            points.push((cx, cy));
        }

        let ann = PointAnnotationSet::validated(
            format!("synth_{:04}", idx),
            w as u32,
            h as u32,
            points,
        )?;
        records.push(ImageRecord::new(pixels, ann)?);
    }
    Ok(records)
}

fn stamp_disk(pixels: &mut Array3<f32>, cx: f32, cy: f32, radius: f32, bright: f32) {
    let (h, w, _) = pixels.dim();
    let r0 = ((cy - radius - 1.0).floor().max(0.0)) as usize;
    let r1 = ((cy + radius + 1.0).ceil().min(h as f32 - 1.0)) as usize;
    let c0 = ((cx - radius - 1.0).floor().max(0.0)) as usize;
    let c1 = ((cx + radius + 1.0).ceil().min(w as f32 - 1.0)) as usize;
    for row in r0..=r1 {
        for col in c0..=c1 {
            let dx = col as f32 + 0.5 - cx;
            let dy = row as f32 + 0.5 - cy;
            let d = (dx * dx + dy * dy).sqrt();
            // Anti-aliased coverage: 1 inside, linear falloff over one pixel.
            let cov = (radius + 0.5 - d).clamp(0.0, 1.0);
            if cov > 0.0 {
                for c in 0..3 {
                    let v = pixels[[row, col, c]];
                    pixels[[row, col, c]] = v + cov * (bright - v);
                }
            }
        }
    }
}

/// Caps the longer image side at `max_side`, preserving aspect ratio.
///
/// Images already within the cap are returned unchanged. Pixel data is
/// resampled bilinearly; points are scaled per-axis by the exact
/// `new_dim / old_dim` factors, so they remain strictly in bounds and the
/// point count is unchanged.
pub fn resize_capped(record: &ImageRecord, max_side: u32) -> Result<ImageRecord> {
    if max_side == 0 {
        return Err(Error::InvalidConfig("max_side must be positive".into()));
    }
    let (h, w) = (record.height(), record.width());
    let longest = h.max(w);
    if longest <= max_side as usize {
        return Ok(record.clone());
    }
    let scale = max_side as f64 / longest as f64;
    let new_h = ((h as f64) * scale).round().max(1.0) as usize;
    let new_w = ((w as f64) * scale).round().max(1.0) as usize;
    let sy = new_h as f32 / h as f32;
    let sx = new_w as f32 / w as f32;

    let pixels = resize_bilinear(&record.pixels, new_h, new_w);
    let points = record
        .annotations
        .points
        .iter()
        .map(|&(x, y)| (x * sx, y * sy))
        .collect();
    let ann = PointAnnotationSet::validated(
        record.image_id().to_string(),
        new_w as u32,
        new_h as u32,
        points,
    )?;
    ImageRecord::new(pixels, ann)
}

pub(crate) fn resize_bilinear(src: &Array3<f32>, new_h: usize, new_w: usize) -> Array3<f32> {
    let (h, w, ch) = src.dim();
    let mut out = Array3::<f32>::zeros((new_h, new_w, ch));
    let fy = h as f32 / new_h as f32;
    let fx = w as f32 / new_w as f32;
    for row in 0..new_h {
        let v = ((row as f32 + 0.5) * fy - 0.5).clamp(0.0, h as f32 - 1.0);
        let r0 = v.floor() as usize;
        let r1 = (r0 + 1).min(h - 1);
        let wy = v - r0 as f32;
        for col in 0..new_w {
            let u = ((col as f32 + 0.5) * fx - 0.5).clamp(0.0, w as f32 - 1.0);
            let c0 = u.floor() as usize;
            let c1 = (c0 + 1).min(w - 1);
            let wx = u - c0 as f32;
            for c in 0..ch {
                let top = src[[r0, c0, c]] * (1.0 - wx) + src[[r0, c1, c]] * wx;
                let bot = src[[r1, c0, c]] * (1.0 - wx) + src[[r1, c1, c]] * wx;
                out[[row, col, c]] = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn flat_record(id: &str, h: usize, w: usize, points: Vec<(f32, f32)>) -> ImageRecord {
        let pixels = Array3::from_elem((h, w, 3), 0.5);
        let ann = PointAnnotationSet::validated(id, w as u32, h as u32, points).unwrap();
        ImageRecord::new(pixels, ann).unwrap()
    }

    #[test]
    fn manifest_roundtrip_single_image() {
        let dir = tempdir().unwrap();
        let record = flat_record("a", 32, 48, vec![(1.0, 2.0), (10.5, 20.25), (47.0, 31.0)]);
        let manifest = save_dataset(&[record.clone()], dir.path()).unwrap();
        let loaded = load_annotations(&manifest).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].annotations.len(), 3);
        assert_eq!(loaded[0].annotations.points, record.annotations.points);
    }

    #[test]
    fn out_of_bounds_point_is_rejected() {
        let err = PointAnnotationSet::validated("img", 64, 64, vec![(64.0, 10.0)]).unwrap_err();
        match err {
            Error::OutOfBoundsPoint { index, x, .. } => {
                assert_eq!(index, 0);
                assert_eq!(x, 64.0);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn empty_manifest_loads_empty() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        fs::write(&path, "[]").unwrap();
        assert!(load_annotations(&path).unwrap().is_empty());
    }

    #[test]
    fn synth_is_deterministic() {
        let config = SynthConfig {
            num_images: 5,
            image_size: (64, 64),
            count_range: (10, 10),
            head_radius_range: (2.0, 4.0),
            background_noise_level: 0.05,
            seed: 7,
        };
        let a = synth_generate(&config).unwrap();
        let b = synth_generate(&config).unwrap();
        assert_eq!(a.len(), 5);
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.pixels, rb.pixels);
            assert_eq!(ra.annotations.points, rb.annotations.points);
        }
    }

    #[test]
    fn synth_zero_heads() {
        let config = SynthConfig {
            num_images: 2,
            image_size: (32, 32),
            count_range: (0, 0),
            head_radius_range: (2.0, 3.0),
            background_noise_level: 0.0,
            seed: 1,
        };
        for record in synth_generate(&config).unwrap() {
            assert!(record.annotations.is_empty());
        }
    }

    #[test]
    fn synth_exact_count_in_bounds() {
        let config = SynthConfig {
            num_images: 1,
            image_size: (128, 128),
            count_range: (20, 20),
            head_radius_range: (2.0, 5.0),
            background_noise_level: 0.05,
            seed: 3,
        };
        let records = synth_generate(&config).unwrap();
        let ann = &records[0].annotations;
        assert_eq!(ann.len(), 20);
        for &(x, y) in &ann.points {
            assert!(x >= 0.0 && x < 128.0 && y >= 0.0 && y < 128.0);
        }
    }

    #[test]
    fn synth_infeasible_config() {
        let config = SynthConfig {
            num_images: 1,
            image_size: (8, 8),
            count_range: (1, 1),
            head_radius_range: (10.0, 10.0),
            background_noise_level: 0.0,
            seed: 0,
        };
        assert!(matches!(
            synth_generate(&config),
            Err(Error::InfeasibleSynth(_))
        ));
    }

    #[test]
    fn resize_caps_long_side() {
        let record = flat_record("big", 3000, 4000, vec![(100.0, 200.0)]);
        let resized = resize_capped(&record, 2048).unwrap();
        assert_eq!(resized.width(), 2048);
        assert_eq!(resized.height(), 1536);
        let (x, y) = resized.annotations.points[0];
        assert!((x - 100.0 * 0.512).abs() < 1e-4);
        assert!((y - 200.0 * 0.512).abs() < 1e-4);
        assert_eq!(resized.annotations.len(), record.annotations.len());
    }

    #[test]
    fn resize_below_cap_unchanged() {
        let record = flat_record("small", 768, 1024, vec![(3.0, 4.0)]);
        let out = resize_capped(&record, 2048).unwrap();
        assert_eq!(out.width(), 1024);
        assert_eq!(out.height(), 768);
        assert_eq!(out.annotations.points, record.annotations.points);
    }

    #[test]
    fn resize_scales_points_affinely() {
        let record = flat_record("p", 300, 400, vec![(100.0, 200.0)]);
        let resized = resize_capped(&record, 200).unwrap();
        assert_eq!((resized.height(), resized.width()), (150, 200));
        assert_eq!(resized.annotations.points[0], (50.0, 100.0));
    }
}
