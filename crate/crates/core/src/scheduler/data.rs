use super::SchedulerError;
use crate::geometry::build_pyramid;
use crate::image::Image;
use crate::synthdata::SceneDataset;

/// All images at one pyramid level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelData {
    pub images: Vec<Image>,
    pub width: usize,
    pub height: usize,
    /// Position of a pixel's center relative to its integer index.
    pub pixel_offset: f64,
}

impl LevelData {
    pub fn pixel_coords(&self, p: usize) -> [f64; 2] {
        [(p % self.width) as f64 + self.pixel_offset, (p / self.width) as f64 + self.pixel_offset]
    }

    pub fn target(&self, image: usize, p: usize) -> [f64; 3] {
        self.images[image].get_flat(p).map(f64::from)
    }

    pub fn trainable_pixels(&self, holdout_stride: usize) -> Vec<usize> {
        (0..self.width * self.height).filter(|&p| !is_held_out(p, holdout_stride)).collect()
    }
}

/// Hold-out rule shared by training and evaluation.
pub fn is_held_out(pixel: usize, stride: usize) -> bool {
    stride > 0 && pixel % stride == 0
}

/// Image pyramids of a whole dataset, coarsest level first.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    levels: Vec<LevelData>,
}

impl TrainingSet {
    pub fn new(dataset: &SceneDataset, depth: usize) -> Result<Self, SchedulerError> {
        let pyramids = dataset.images.iter().map(|im| build_pyramid(im, depth)).collect::<Result<Vec<_>, _>>()?;
        let levels = (0..depth)
            .map(|k| {
                let images: Vec<Image> = pyramids.iter().map(|p| p.level(k).clone()).collect();
                LevelData {
                    width: images[0].width,
                    height: images[0].height,
                    pixel_offset: pyramids[0].pixel_center_offset(k),
                    images,
                }
            })
            .collect();
        Ok(Self { levels })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, k: usize) -> &LevelData {
        &self.levels[k]
    }

    pub fn finest(&self) -> &LevelData {
        self.levels.last().expect("at least one level")
    }

    pub fn image_count(&self) -> usize {
        self.levels[0].images.len()
    }

    /// Factor from level-`k` pixels to finest-level pixels.
    pub fn scale_to_finest(&self, k: usize) -> f64 {
        (1u64 << (self.depth() - 1 - k)) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_and_offsets() {
        let ds = SceneDataset::new(vec![Image::filled(16, 8, [0.5; 3]); 2], None, "t").unwrap();
        let set = TrainingSet::new(&ds, 3).unwrap();
        assert_eq!((set.level(0).width, set.level(0).height), (4, 2));
        assert_eq!(set.level(0).pixel_offset, 0.125);
        assert_eq!(set.finest().pixel_offset, 0.5);
        assert_eq!(set.scale_to_finest(0), 4.0);
        assert_eq!(set.level(2).pixel_coords(17), [1.5, 1.5]);
        assert_eq!(set.level(0).trainable_pixels(4), vec![1, 2, 3, 5, 6, 7]);
    }
}
