//! Gaussian image pyramid for coarse-to-fine training.

use crate::image::Image;

use super::GeometryError;

/// Binomial approximation of a Gaussian, applied separably.
pub const BINOMIAL_KERNEL: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Pyramid levels ordered coarsest first; the last level is the source image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePyramid {
    pub levels: Vec<Image>,
}

impl ImagePyramid {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, k: usize) -> &Image {
        &self.levels[k]
    }

    pub fn finest(&self) -> &Image {
        self.levels.last().expect("pyramid has at least one level")
    }

    /// Continuous coordinate of the center of pixel 0 at level `k`.
    ///
    /// Decimation keeps even pixels, so coarse pixel `x` carries the value
    /// centered at fine coordinate `2^m x + 0.5`, which is `x + 0.5 / 2^m`
    /// in the coarse frame after `m` halvings.
    pub fn pixel_center_offset(&self, k: usize) -> f64 {
        pixel_center_offset(self.depth(), k)
    }
}

pub fn pixel_center_offset(depth: usize, level: usize) -> f64 {
    let halvings = depth - 1 - level;
    0.5 / f64::powi(2.0, halvings as i32)
}

/// One separable blur pass with edge clamping.
fn blur_axis(src: &Image, horizontal: bool) -> Image {
    let (w, h) = (src.width as isize, src.height as isize);
    let mut out = Image::new(src.width, src.height);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f32; 3];
            for (k, weight) in BINOMIAL_KERNEL.iter().enumerate() {
                let off = k as isize - 2;
                let (sx, sy) = if horizontal {
                    ((x + off).clamp(0, w - 1), y)
                } else {
                    (x, (y + off).clamp(0, h - 1))
                };
                let p = src.get(sx as usize, sy as usize);
                for c in 0..3 {
                    acc[c] += weight * p[c];
                }
            }
            out.set(x as usize, y as usize, acc);
        }
    }
    out
}

/// Blur then keep every second pixel; output is `floor(W/2) × floor(H/2)`.
pub fn downsample(image: &Image) -> Image {
    let blurred = blur_axis(&blur_axis(image, true), false);
    Image::from_fn(image.width / 2, image.height / 2, |x, y| blurred.get(2 * x, 2 * y))
}

pub fn build_pyramid(image: &Image, depth: usize) -> Result<ImagePyramid, GeometryError> {
    if depth == 0 {
        return Err(GeometryError::Domain("pyramid depth must be at least 1".into()));
    }
    let min = 1usize << (depth - 1);
    if image.width < min || image.height < min {
        return Err(GeometryError::TooSmall {
            width: image.width,
            height: image.height,
            depth,
        });
    }
    let mut levels = vec![image.clone()];
    for _ in 1..depth {
        let next = downsample(levels.last().unwrap());
        levels.push(next);
    }
    levels.reverse();
    Ok(ImagePyramid { levels })
}
