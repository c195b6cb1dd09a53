//! Patch-grid statistics over activation maps and masking of images down to
//! their disease-relevant regions.
//!
//! A patch is kept when the mean activation over its block strictly exceeds
//! the threshold tau; everything outside the kept patches is zeroed in every
//! channel. Activation maps are min-max normalized to [0, 1] before
//! thresholding so tau is scale-free.
//!
//! Images and maps interchange as flat little-endian `f32` rasters with a
//! 20-byte header: magic `AMMRGIMG`, then H, W, C as `u32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const RASTER_MAGIC: [u8; 8] = *b"AMMRGIMG";

/// HWC row-major image with pixels in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Dimension("image dimensions must be positive".into()));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::Dimension(format!(
                "pixel count {} does not match {height}x{width}x{channels}",
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidInput(format!(
                "pixel {i} = {} outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(Self { height, width, channels, pixels })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels, pixels: vec![0.0; height * width * channels] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub(crate) fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        write_raster(path, self.height, self.width, self.channels, &self.pixels)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let (h, w, c, data) = read_raster(path)?;
        Self::new(h, w, c, data)
    }
}

/// Per-pixel relevance field with the same spatial shape as its image,
/// values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ActivationMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension("activation map dimensions must be positive".into()));
        }
        if values.len() != height * width {
            return Err(Error::Dimension(format!(
                "value count {} does not match {height}x{width}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput(format!(
                "activation {i} = {} outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self { height, width, values })
    }

    /// Min-max normalizes arbitrary finite values into [0, 1]; a constant
    /// field normalizes to all zeros.
    pub fn normalized(height: usize, width: usize, raw: &[f64]) -> Result<Self> {
        if raw.len() != height * width {
            return Err(Error::Dimension(format!(
                "value count {} does not match {height}x{width}",
                raw.len()
            )));
        }
        if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("activation value {i}")));
        }
        let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let values = if max > min {
            raw.iter().map(|v| (v - min) / (max - min)).collect()
        } else {
            vec![0.0; raw.len()]
        };
        Self::new(height, width, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        write_raster(path, self.height, self.width, 1, &self.values)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let (h, w, c, data) = read_raster(path)?;
        if c != 1 {
            return Err(Error::InvalidInput(format!(
                "activation map raster must have 1 channel, found {c}"
            )));
        }
        Self::new(h, w, data)
    }
}

/// Mean activation per patch, on the `rows x cols` patch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl PatchGrid {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }
}

/// Which patches survived thresholding, plus the statistics that produced
/// the selection.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiSelection {
    pub patch_size: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub selected: Vec<bool>,
    pub means: Vec<f64>,
    pub threshold: f64,
    pub top_k: Option<usize>,
}

impl RoiSelection {
    pub fn is_selected(&self, r: usize, c: usize) -> bool {
        self.selected[r * self.grid_cols + c]
    }

    pub fn selected_indices(&self) -> Vec<usize> {
        self.selected
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.then_some(i))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.selected.iter().filter(|s| **s).count()
    }
}

/// Mean activation over each `patch_size x patch_size` block.
pub fn patch_means(map: &ActivationMap, patch_size: usize) -> Result<PatchGrid> {
    if patch_size == 0 {
        return Err(Error::InvalidInput("patch_size must be positive".into()));
    }
    if !map.height.is_multiple_of(patch_size) || !map.width.is_multiple_of(patch_size) {
        return Err(Error::Dimension(format!(
            "map {}x{} not divisible by patch size {patch_size}",
            map.height, map.width
        )));
    }
    let rows = map.height / patch_size;
    let cols = map.width / patch_size;
    let area = (patch_size * patch_size) as f64;
    let mut values = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let mut sum = 0.0;
            for py in 0..patch_size {
                for px in 0..patch_size {
                    sum += map.get(r * patch_size + py, c * patch_size + px);
                }
            }
            values[r * cols + c] = sum / area;
        }
    }
    Ok(PatchGrid { rows, cols, values })
}

/// Selects patches whose mean strictly exceeds `tau`; when `top_k` is set the
/// selection is intersected with the k highest means, ties going to the lower
/// row-major patch index.
pub fn select_roi(means: &PatchGrid, tau: f64, top_k: Option<usize>, patch_size: usize) -> Result<RoiSelection> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidInput(format!("tau must lie in [0, 1), got {tau}")));
    }
    if top_k == Some(0) {
        return Err(Error::InvalidInput("top_k must be at least 1 when present".into()));
    }
    let mut selected: Vec<bool> = means.values.iter().map(|m| *m > tau).collect();
    if let Some(k) = top_k {
        let mut order: Vec<usize> = (0..means.values.len()).collect();
        order.sort_by(|&a, &b| {
            means.values[b]
                .partial_cmp(&means.values[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut in_top = vec![false; means.values.len()];
        for &i in order.iter().take(k) {
            in_top[i] = true;
        }
        for (s, t) in selected.iter_mut().zip(&in_top) {
            *s = *s && *t;
        }
    }
    Ok(RoiSelection {
        patch_size,
        grid_rows: means.rows,
        grid_cols: means.cols,
        selected,
        means: means.values.clone(),
        threshold: tau,
        top_k,
    })
}

/// Copies pixels inside selected patches verbatim and zeroes everything else.
pub fn apply_mask(image: &ImageTensor, selection: &RoiSelection) -> Result<ImageTensor> {
    let ps = selection.patch_size;
    if image.height != selection.grid_rows * ps || image.width != selection.grid_cols * ps {
        return Err(Error::Dimension(format!(
            "image {}x{} does not match a {}x{} grid of {ps}-pixel patches",
            image.height, image.width, selection.grid_rows, selection.grid_cols
        )));
    }
    let mut out = ImageTensor::zeros(image.height, image.width, image.channels);
    for r in 0..selection.grid_rows {
        for c in 0..selection.grid_cols {
            if !selection.is_selected(r, c) {
                continue;
            }
            for py in 0..ps {
                for px in 0..ps {
                    let y = r * ps + py;
                    let x = c * ps + px;
                    for ch in 0..image.channels {
                        out.set(y, x, ch, image.get(y, x, ch));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Writes a raster file: `AMMRGIMG`, H, W, C as u32 LE, then H*W*C f32 LE.
pub fn write_raster<P: AsRef<Path>>(path: P, h: usize, w: usize, c: usize, data: &[f64]) -> Result<()> {
    if data.len() != h * w * c {
        return Err(Error::Dimension(format!(
            "raster data length {} does not match {h}x{w}x{c}",
            data.len()
        )));
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&RASTER_MAGIC)?;
    out.write_all(&(h as u32).to_le_bytes())?;
    out.write_all(&(w as u32).to_le_bytes())?;
    out.write_all(&(c as u32).to_le_bytes())?;
    for v in data {
        out.write_all(&(*v as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a raster file written by [`write_raster`].
pub fn read_raster<P: AsRef<Path>>(path: P) -> Result<(usize, usize, usize, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| Error::Parse {
        offset: 0,
        message: "unexpected end of file reading raster magic".into(),
    })?;
    if magic != RASTER_MAGIC {
        return Err(Error::Parse { offset: 0, message: "bad magic, not a raster file".into() });
    }
    let mut dims = [0u8; 12];
    r.read_exact(&mut dims).map_err(|_| Error::Parse {
        offset: 8,
        message: "unexpected end of file reading raster dimensions".into(),
    })?;
    let h = u32::from_le_bytes(dims[0..4].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(dims[4..8].try_into().unwrap()) as usize;
    let c = u32::from_le_bytes(dims[8..12].try_into().unwrap()) as usize;
    let n = h * w * c;
    let mut payload = vec![0u8; n * 4];
    r.read_exact(&mut payload).map_err(|_| Error::Parse {
        offset: 20,
        message: format!("unexpected end of file reading {n} raster values"),
    })?;
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    Ok((h, w, c, data))
}
