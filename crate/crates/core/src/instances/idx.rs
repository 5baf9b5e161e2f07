//! Reader for the IDX image format used by the MNIST distribution:
//! big-endian magic `0x00000803`, then image count, rows and columns as
//! 32-bit unsigned integers, then one byte per pixel.

use std::path::Path;

use ndarray::Array2;

use super::{instance_from_images, Image};
use crate::error::{OtError, Result};
use crate::problem::OtInstance;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;

/// Raw image stack from an IDX file.
#[derive(Clone, Debug)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    data: Vec<u8>,
}

impl IdxImages {
    /// Image `index` with pixels rescaled to `[0, 1]`.
    pub fn image(&self, index: usize) -> Result<Array2<f64>> {
        if index >= self.count {
            return Err(OtError::invalid(format!("image index {index} out of range 0..{}", self.count)));
        }
        let size = self.rows * self.cols;
        let bytes = &self.data[index * size..(index + 1) * size];
        Ok(Array2::from_shape_fn((self.rows, self.cols), |(r, c)| bytes[r * self.cols + c] as f64 / 255.0))
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| OtError::Format("truncated IDX header".into()))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(OtError::Format(format!("bad IDX magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let need = count
        .checked_mul(rows)
        .and_then(|x| x.checked_mul(cols))
        .ok_or_else(|| OtError::Format("IDX dimensions overflow".into()))?;
    let data = &bytes[16..];
    if data.len() < need {
        return Err(OtError::Format(format!("truncated IDX data: {} of {need} bytes", data.len())));
    }
    Ok(IdxImages { count, rows, cols, data: data[..need].to_vec() })
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    parse_idx_images(&std::fs::read(path)?)
}

/// Resizes a square image to `m x m`: mean pooling over `k x k` blocks when
/// `m` divides the side, bilinear interpolation otherwise.
pub fn downsample(img: &Array2<f64>, m: usize) -> Result<Array2<f64>> {
    let side = img.nrows();
    if m == 0 || img.ncols() != side {
        return Err(OtError::invalid("downsample needs a square image and m >= 1"));
    }
    if side.is_multiple_of(m) {
        let k = side / m;
        let area = (k * k) as f64;
        return Ok(Array2::from_shape_fn((m, m), |(r, c)| {
            let mut s = 0.0;
            for dr in 0..k {
                for dc in 0..k {
                    s += img[[r * k + dr, c * k + dc]];
                }
            }
            s / area
        }));
    }
    let scale = side as f64 / m as f64;
    let src = |x: usize| {
        let s = ((x as f64 + 0.5) * scale - 0.5).clamp(0.0, (side - 1) as f64);
        let lo = s.floor() as usize;
        (lo, (lo + 1).min(side - 1), s - lo as f64)
    };
    Ok(Array2::from_shape_fn((m, m), |(r, c)| {
        let (r0, r1, fr) = src(r);
        let (c0, c1, fc) = src(c);
        let top = img[[r0, c0]] * (1.0 - fc) + img[[r0, c1]] * fc;
        let bottom = img[[r1, c0]] * (1.0 - fc) + img[[r1, c1]] * fc;
        top * (1.0 - fr) + bottom * fr
    }))
}

/// Offset added to every pixel after resizing.
pub const MNIST_PIXEL_OFFSET: f64 = 0.01;

/// Two images from an IDX file, resized to `m x m`, offset by `0.01` and
/// normalized into marginals, with grid l1 costs.
pub fn load_mnist_pair(path: impl AsRef<Path>, index_a: usize, index_b: usize, m: usize) -> Result<OtInstance> {
    let images = read_idx_images(path)?;
    mnist_pair(&images, index_a, index_b, m)
}

pub fn mnist_pair(images: &IdxImages, index_a: usize, index_b: usize, m: usize) -> Result<OtInstance> {
    if images.rows != images.cols {
        return Err(OtError::Format("IDX images are not square".into()));
    }
    let prep = |idx| -> Result<Image> {
        let small = downsample(&images.image(idx)?, m)?;
        Image::new(small.mapv(|x| x + MNIST_PIXEL_OFFSET))
    };
    instance_from_images(&prep(index_a)?, &prep(index_b)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn idx_bytes(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [IDX_IMAGE_MAGIC, count, rows, cols] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v.extend_from_slice(pixels);
        v
    }

    #[test]
    fn header_parse() {
        let bytes = idx_bytes(2, 3, 3, &[7u8; 18]);
        assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
        let imgs = parse_idx_images(&bytes).unwrap();
        assert_eq!((imgs.count, imgs.rows, imgs.cols), (2, 3, 3));
        assert!((imgs.image(1).unwrap()[[2, 2]] - 7.0 / 255.0).abs() < 1e-15);
        assert!(imgs.image(2).is_err());
    }

    #[test]
    fn bad_inputs() {
        let mut bytes = idx_bytes(1, 2, 2, &[0; 4]);
        bytes[3] = 1;
        assert!(matches!(parse_idx_images(&bytes), Err(OtError::Format(_))));
        let bytes = idx_bytes(2, 2, 2, &[0; 5]);
        assert!(matches!(parse_idx_images(&bytes), Err(OtError::Format(_))));
        assert!(parse_idx_images(&[0, 0, 8]).is_err());
    }

    #[test]
    fn constant_images_stay_constant() {
        let img = Array2::from_elem((28, 28), 0.3);
        for m in [14, 7, 4, 10] {
            let d = downsample(&img, m).unwrap();
            assert!(d.iter().all(|&x| (x - 0.3).abs() < 1e-15), "m = {m}");
        }
    }

    #[test]
    fn blank_digit_gives_uniform_marginal() {
        let images = parse_idx_images(&idx_bytes(2, 4, 4, &[0; 32])).unwrap();
        let inst = mnist_pair(&images, 0, 1, 2).unwrap();
        assert!(inst.r().iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }
}
