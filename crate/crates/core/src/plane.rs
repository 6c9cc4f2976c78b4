//! 2-D planes and binary masks shared by the data, loss and metric code.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlaneError {
    #[error("plane {height}x{width} needs {expected} values, got {got}")]
    Size {
        height: usize,
        width: usize,
        expected: usize,
        got: usize,
    },
    #[error("mask value {value} at pixel {index} is not 0 or 1")]
    NotBinary { index: usize, value: f32 },
}

/// Row-major `H x W` grid of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self, PlaneError> {
        if data.len() != height * width {
            return Err(PlaneError::Size {
                height,
                width,
                expected: height * width,
                got: data.len(),
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.width + c]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Plane {
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self, PlaneError> {
        if bits.len() != height * width {
            return Err(PlaneError::Size {
                height,
                width,
                expected: height * width,
                got: bits.len(),
            });
        }
        Ok(Self { height, width, bits })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c));
            }
        }
        Self { height, width, bits }
    }

    /// Accepts only planes whose values are exactly 0 or 1.
    pub fn from_plane(plane: &Plane) -> Result<Self, PlaneError> {
        let bits = plane
            .data()
            .iter()
            .enumerate()
            .map(|(index, &value)| match value {
                v if v == 0.0 => Ok(false),
                v if v == 1.0 => Ok(true),
                value => Err(PlaneError::NotBinary { index, value }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            height: plane.height(),
            width: plane.width(),
            bits,
        })
    }

    pub fn to_plane(&self) -> Plane {
        Plane {
            height: self.height,
            width: self.width,
            data: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.width + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.bits[r * self.width + c] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).any(|(&a, &b)| a && b)
    }

    /// Nearest-neighbour subsampling: pixel `(r, c)` of the result is `(r*factor, c*factor)`.
    pub fn downsample_nearest(&self, factor: usize) -> Mask {
        let (h, w) = (self.height / factor, self.width / factor);
        Mask::from_fn(h, w, |r, c| self.get(r * factor, c * factor))
    }

    /// Values of `plane` at the set pixels, in row-major order.
    pub fn select(&self, plane: &Plane) -> Vec<f32> {
        self.bits
            .iter()
            .zip(plane.data())
            .filter_map(|(&b, &v)| b.then_some(v))
            .collect()
    }
}
