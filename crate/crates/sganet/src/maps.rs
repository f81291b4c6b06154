//! Dense supervision rasters: Gaussian density maps, box segmentation maps,
//! sum-pooling to network output resolution, and the `DMAP` raster file format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::annotations::PointAnnotationSet;
use crate::error::{Error, Result};

/// Gaussian/box kernel parameters for supervision generation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KernelSpec {
    /// Gaussian bandwidth in pixels.
    pub sigma: f64,
    /// Side of the (square, odd) Gaussian window.
    pub kernel_size: usize,
    /// Side `n` of the (square, odd) all-ones box for segmentation maps.
    pub box_size: usize,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            sigma: 4.0,
            kernel_size: 15,
            box_size: 25,
        }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sigma {} must be positive",
                self.sigma
            )));
        }
        for (name, v) in [("kernel_size", self.kernel_size), ("box_size", self.box_size)] {
            if v == 0 || v % 2 == 0 {
                return Err(Error::InvalidConfig(format!(
                    "{} {} must be odd and positive",
                    name, v
                )));
            }
        }
        Ok(())
    }
}

/// A people-per-pixel raster; `stride` is the downsampling factor relative to
/// the source image (1 at full resolution).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    pub values: Array2<f32>,
    pub stride: u32,
}

/// A foreground raster: `{0, 1}` for ground truth, `[0, 1]` floats for
/// predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMap {
    pub values: Array2<f32>,
    pub stride: u32,
}

/// The `kernel_size x kernel_size` Gaussian window, normalized to unit sum.
pub fn gaussian_kernel(sigma: f64, size: usize) -> Array2<f64> {
    let half = (size / 2) as i64;
    let mut k = Array2::<f64>::zeros((size, size));
    for di in -half..=half {
        for dj in -half..=half {
            let r2 = (di * di + dj * dj) as f64;
            k[[(di + half) as usize, (dj + half) as usize]] =
                (-r2 / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = k.sum();
    k.mapv_inplace(|v| v / total);
    k
}

/// Rounds to the nearest integer with half-way ties toward positive infinity.
#[inline]
pub(crate) fn round_half_up(v: f32) -> i64 {
    (v as f64 + 0.5).floor() as i64
}

/// Rasterizes point annotations into a density map.
///
/// Each point deposits the unit-sum Gaussian window centered at its rounded
/// location; windows overlapping the image border are truncated, so border
/// heads contribute less than one unit of mass. Contributions sum.
pub fn density_map(ann: &PointAnnotationSet, kernel: &KernelSpec) -> Result<DensityMap> {
    kernel.validate()?;
    let (h, w) = (ann.height as usize, ann.width as usize);
    let window = gaussian_kernel(kernel.sigma, kernel.kernel_size);
    let half = (kernel.kernel_size / 2) as i64;
    let mut values = Array2::<f32>::zeros((h, w));
    for &(x, y) in &ann.points {
        let cx = round_half_up(x);
        let cy = round_half_up(y);
        for di in -half..=half {
            let row = cy + di;
            if row < 0 || row >= h as i64 {
                continue;
            }
            for dj in -half..=half {
                let col = cx + dj;
                if col < 0 || col >= w as i64 {
                    continue;
                }
                values[[row as usize, col as usize]] +=
                    window[[(di + half) as usize, (dj + half) as usize]] as f32;
            }
        }
    }
    Ok(DensityMap { values, stride: 1 })
}

/// Rasterizes point annotations into a binary segmentation map: a pixel is 1
/// iff it lies within an `n x n` box centered at any rounded annotation,
/// clipped to image bounds. Overlapping boxes saturate at 1.
pub fn segmentation_map(ann: &PointAnnotationSet, kernel: &KernelSpec) -> Result<SegmentationMap> {
    kernel.validate()?;
    let (h, w) = (ann.height as usize, ann.width as usize);
    let half = (kernel.box_size / 2) as i64;
    let mut values = Array2::<f32>::zeros((h, w));
    for &(x, y) in &ann.points {
        let cx = round_half_up(x);
        let cy = round_half_up(y);
        let r0 = (cy - half).max(0);
        let r1 = (cy + half).min(h as i64 - 1);
        let c0 = (cx - half).max(0);
        let c1 = (cx + half).min(w as i64 - 1);
        if r0 > r1 || c0 > c1 {
            continue;
        }
        for row in r0..=r1 {
            for col in c0..=c1 {
                values[[row as usize, col as usize]] = 1.0;
            }
        }
    }
    Ok(SegmentationMap { values, stride: 1 })
}

fn pooled(values: &Array2<f32>, factor: usize) -> Result<Array2<f32>> {
    let (h, w) = values.dim();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::NonDivisible { h, w, factor });
    }
    let (oh, ow) = (h / factor, w / factor);
    let mut out = Array2::<f32>::zeros((oh, ow));
    for i in 0..oh {
        for j in 0..ow {
            let mut acc = 0.0_f64;
            for bi in 0..factor {
                for bj in 0..factor {
                    acc += values[[i * factor + bi, j * factor + bj]] as f64;
                }
            }
            out[[i, j]] = acc as f32;
        }
    }
    Ok(out)
}

impl DensityMap {
    /// Non-overlapping block summation; conserves total mass.
    pub fn sum_pool(&self, factor: usize) -> Result<DensityMap> {
        Ok(DensityMap {
            values: pooled(&self.values, factor)?,
            stride: self.stride * factor as u32,
        })
    }

    /// Total mass of the map (the count it represents).
    pub fn count(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum()
    }
}

impl SegmentationMap {
    /// Block summation followed by re-binarization (`value > 0`), so a pooled
    /// ground-truth map remains a valid `{0, 1}` target.
    pub fn sum_pool(&self, factor: usize) -> Result<SegmentationMap> {
        let mut values = pooled(&self.values, factor)?;
        values.mapv_inplace(|v| if v > 0.0 { 1.0 } else { 0.0 });
        Ok(SegmentationMap {
            values,
            stride: self.stride * factor as u32,
        })
    }

    pub fn ones_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }
}

/// Returns the sum of all values of a density map.
pub fn count_of(map: &DensityMap) -> f64 {
    map.count()
}

const DMAP_MAGIC: &[u8; 4] = b"DMAP";

/// Writes a raster in the `DMAP` format: magic bytes `DMAP`, then u32 height,
/// u32 width, u32 stride, then `H*W` little-endian f32 values row-major.
pub fn write_dmap(path: impl AsRef<Path>, values: &Array2<f32>, stride: u32) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(DMAP_MAGIC).map_err(io_err)?;
    let (h, wd) = values.dim();
    w.write_u32::<LittleEndian>(h as u32).map_err(io_err)?;
    w.write_u32::<LittleEndian>(wd as u32).map_err(io_err)?;
    w.write_u32::<LittleEndian>(stride).map_err(io_err)?;
    for row in values.rows() {
        for &v in row {
            w.write_f32::<LittleEndian>(v).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Reads a `DMAP` raster; returns the values and stride.
pub fn read_dmap(path: impl AsRef<Path>) -> Result<(Array2<f32>, u32)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != DMAP_MAGIC {
        return Err(Error::Raster {
            path: path.into(),
            reason: "bad magic bytes".into(),
        });
    }
    let io_err = |e| Error::io(path, e);
    let h = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let w = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let stride = r.read_u32::<LittleEndian>().map_err(io_err)?;
    let mut data = vec![0f32; h * w];
    r.read_f32_into::<LittleEndian>(&mut data)
        .map_err(io_err)?;
    let values = Array2::from_shape_vec((h, w), data).map_err(|e| Error::Raster {
        path: path.into(),
        reason: e.to_string(),
    })?;
    Ok((values, stride))
}
