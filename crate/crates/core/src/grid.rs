//! Dense per-pixel containers.
//!
//! All grids are row-major with the pixel index `i = row * width + col`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::error::{CoreError, Result};

pub type Vec3 = Vector3<f64>;

/// An `H x W x C` grid of reals, channel-interleaved.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Grid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(CoreError::Usage(format!(
                "grid {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
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

    pub fn len_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Channel vector of pixel `i`.
    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn pixel_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.channels..(i + 1) * self.channels]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f64) {
        self.data[(row * self.width + col) * self.channels + ch] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_dims(&self, height: usize, width: usize) -> bool {
        self.height == height && self.width == width
    }
}

/// `H x W` grid of 3D points.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMap {
    height: usize,
    width: usize,
    points: Vec<Vec3>,
}

impl PointMap {
    pub fn new(height: usize, width: usize, points: Vec<Vec3>) -> Result<Self> {
        if points.len() != height * width {
            return Err(CoreError::Usage(format!(
                "pointmap {height}x{width} needs {} points, got {}",
                height * width,
                points.len()
            )));
        }
        Ok(Self { height, width, points })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            points: vec![Vec3::zeros(); height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [Vec3] {
        &mut self.points
    }

    pub fn same_dims(&self, other_h: usize, other_w: usize) -> bool {
        self.height == other_h && self.width == other_w
    }

    pub fn to_grid(&self) -> Grid {
        let mut data = Vec::with_capacity(self.points.len() * 3);
        for p in &self.points {
            data.extend_from_slice(&[p.x, p.y, p.z]);
        }
        Grid {
            height: self.height,
            width: self.width,
            channels: 3,
            data,
        }
    }

    pub fn from_grid(grid: &Grid) -> Result<Self> {
        if grid.channels != 3 {
            return Err(CoreError::Usage(format!(
                "pointmap needs 3 channels, got {}",
                grid.channels
            )));
        }
        let points = grid.data.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        Ok(Self {
            height: grid.height,
            width: grid.width,
            points,
        })
    }
}

/// `H x W` grid of scalars (uncertainty, per-pixel error, gate logits, noise scale).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

pub type UncertaintyMap = ScalarMap;

impl ScalarMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(CoreError::Usage(format!(
                "scalar map {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        Ok(Self { height, width, values })
    }

    pub fn filled(height: usize, width: usize, v: f64) -> Self {
        Self {
            height,
            width,
            values: vec![v; height * width],
        }
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

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn to_grid(&self) -> Grid {
        Grid {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.values.clone(),
        }
    }

    pub fn from_grid(grid: &Grid) -> Result<Self> {
        if grid.channels != 1 {
            return Err(CoreError::Usage(format!(
                "scalar map needs 1 channel, got {}",
                grid.channels
            )));
        }
        Ok(Self {
            height: grid.height,
            width: grid.width,
            values: grid.data.clone(),
        })
    }

    /// Values at the valid pixels of `mask`, in pixel order.
    pub fn masked(&self, mask: &Mask) -> Vec<f64> {
        self.values
            .iter()
            .zip(mask.values())
            .filter_map(|(&v, &m)| m.then_some(v))
            .collect()
    }
}

/// `H x W` boolean mask (validity, hard regions, ring bands).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    values: Vec<bool>,
}

pub type ValidityMask = Mask;

impl Mask {
    pub fn new(height: usize, width: usize, values: Vec<bool>) -> Result<Self> {
        if values.len() != height * width {
            return Err(CoreError::Usage(format!(
                "mask {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        Ok(Self { height, width, values })
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            values: vec![true; height * width],
        }
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            values: vec![false; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [bool] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.values[row * self.width + col] = v;
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| a && b).collect(),
        }
    }

    pub fn not(&self) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|&a| !a).collect(),
        }
    }

    /// Stored as a 1-channel grid with exact 0.0 / 1.0 values.
    pub fn to_grid(&self) -> Grid {
        Grid {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.values.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn from_grid(grid: &Grid) -> Result<Self> {
        if grid.channels != 1 {
            return Err(CoreError::Usage(format!("mask needs 1 channel, got {}", grid.channels)));
        }
        let mut values = Vec::with_capacity(grid.data.len());
        for (i, &v) in grid.data.iter().enumerate() {
            match v {
                1.0 => values.push(true),
                0.0 => values.push(false),
                other => {
                    return Err(CoreError::InvalidInput(format!(
                        "mask value {other} at pixel {i} is not 0 or 1"
                    )))
                }
            }
        }
        Ok(Self {
            height: grid.height,
            width: grid.width,
            values,
        })
    }

    /// Indices of the set pixels.
    pub fn indices(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| v.then_some(i))
            .collect()
    }
}

/// Per-pixel Euclidean error with the pixels it is defined on.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMap {
    pub e: ScalarMap,
    pub mask: Mask,
}

impl ErrorMap {
    /// Errors at valid pixels, in pixel order.
    pub fn valid_errors(&self) -> Vec<f64> {
        self.e.masked(&self.mask)
    }
}
