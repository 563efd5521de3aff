//! Square real-valued pixel images.
//!
//! Pixels are stored row-major: pixel `(i, j)` lives at `i * size + j`.
//! Pixel `(i, j)` sits at the unit-disk coordinate
//! `x = (i - L/2 + 0.5) * 2/L`, `y = (j - L/2 + 0.5) * 2/L`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    size: usize,
    pixel_size: f64,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(size: usize, pixel_size: f64) -> Self {
        Self {
            size,
            pixel_size,
            data: vec![0.0; size * size],
        }
    }

    pub fn from_vec(size: usize, pixel_size: f64, data: Vec<f64>) -> Result<Self> {
        if data.len() != size * size {
            return Err(Error::LengthMismatch {
                expected: size * size,
                got: data.len(),
            });
        }
        Ok(Self {
            size,
            pixel_size,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel center in
    /// unit-disk coordinates.
    pub fn from_fn(size: usize, pixel_size: f64, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut img = Self::zeros(size, pixel_size);
        for i in 0..size {
            let x = pixel_coordinate(i, size);
            for j in 0..size {
                let y = pixel_coordinate(j, size);
                img.data[i * size + j] = f(x, y);
            }
        }
        img
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.size + j] = value;
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Squared L2 norm over pixels inside the closed unit disk.
    pub fn disk_energy(&self) -> f64 {
        let l = self.size;
        let mut acc = 0.0;
        for i in 0..l {
            let x = pixel_coordinate(i, l);
            for j in 0..l {
                let y = pixel_coordinate(j, l);
                if x * x + y * y <= 1.0 {
                    let v = self.data[i * l + j];
                    acc += v * v;
                }
            }
        }
        acc
    }

    pub fn sub(&self, other: &Image) -> Image {
        assert_eq!(self.size, other.size);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Image {
            size: self.size,
            pixel_size: self.pixel_size,
            data,
        }
    }

    /// Rotates the image about its center by `angle` radians
    /// (counter-clockwise in the `(x, y)` frame) with bilinear
    /// interpolation; samples falling outside the grid read zero.
    pub fn rotated(&self, angle: f64) -> Image {
        let l = self.size;
        let (s, c) = angle.sin_cos();
        let half = l as f64 / 2.0;
        let mut out = Image::zeros(l, self.pixel_size);
        for i in 0..l {
            let x = i as f64 - half + 0.5;
            for j in 0..l {
                let y = j as f64 - half + 0.5;
                // inverse rotation of the output coordinate
                let xs = c * x + s * y;
                let ys = -s * x + c * y;
                out.data[i * l + j] = self.bilinear(xs + half - 0.5, ys + half - 0.5);
            }
        }
        out
    }

    fn bilinear(&self, fi: f64, fj: f64) -> f64 {
        let l = self.size as isize;
        let i0 = fi.floor() as isize;
        let j0 = fj.floor() as isize;
        let di = fi - i0 as f64;
        let dj = fj - j0 as f64;
        let at = |i: isize, j: isize| -> f64 {
            if i < 0 || j < 0 || i >= l || j >= l {
                0.0
            } else {
                self.data[(i * l + j) as usize]
            }
        };
        (1.0 - di) * (1.0 - dj) * at(i0, j0)
            + di * (1.0 - dj) * at(i0 + 1, j0)
            + (1.0 - di) * dj * at(i0, j0 + 1)
            + di * dj * at(i0 + 1, j0 + 1)
    }
}

/// Unit-disk coordinate of pixel index `i` on an `size`-pixel axis.
pub fn pixel_coordinate(i: usize, size: usize) -> f64 {
    (i as f64 - size as f64 / 2.0 + 0.5) * 2.0 / size as f64
}
