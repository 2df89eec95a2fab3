use num_rational::Ratio;

use super::SelectionError;
use crate::geometry::Pose;

/// A window of consecutive trajectory indices `[start_index, end_index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Place {
    pub place_id: usize,
    pub start_index: usize,
    pub end_index: usize,
    pub center_pose: Pose<f64>,
}

impl Place {
    pub fn len(&self) -> usize {
        self.end_index - self.start_index
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, index: usize) -> bool {
        (self.start_index..self.end_index).contains(&index)
    }

    /// Index whose pose is used as the place centre.
    pub fn center_index(&self) -> usize {
        (self.start_index + self.end_index) / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacePartition {
    pub places: Vec<Place>,
    pub width_images: usize,
    pub stride_images: usize,
    pub num_images: usize,
}

impl PlacePartition {
    /// Fraction of a place shared with its successor, `(width - stride) / width`.
    pub fn overlap_factor(&self) -> Ratio<usize> {
        Ratio::new(self.width_images - self.stride_images, self.width_images)
    }

    /// Sets every place's centre pose from per-index trajectory poses.
    pub fn assign_centers(&mut self, poses: &[Pose<f64>]) {
        for place in &mut self.places {
            if let Some(p) = poses.get(place.center_index()) {
                place.center_pose = *p;
            }
        }
    }

    /// Places containing `index`.
    pub fn places_containing(&self, index: usize) -> impl Iterator<Item = &Place> {
        self.places.iter().filter(move |p| p.contains(index))
    }
}

/// Windows of `width` images starting every `stride` images. A trailing
/// partial window is merged into the last full one, so the final place ends
/// at `num_images`.
pub fn partition_places(num_images: usize, width: usize, stride: usize) -> Result<PlacePartition, SelectionError> {
    if width == 0 {
        return Err(SelectionError::Config("place width must be > 0".into()));
    }
    if stride == 0 || stride > width {
        return Err(SelectionError::Config(format!(
            "place stride must be in 1..={width}, got {stride}"
        )));
    }
    if num_images < width {
        return Err(SelectionError::Config(format!(
            "trajectory has {num_images} images, fewer than one place width ({width})"
        )));
    }
    let mut places: Vec<Place> = (0..)
        .map(|k| k * stride)
        .take_while(|start| start + width <= num_images)
        .enumerate()
        .map(|(place_id, start)| Place {
            place_id,
            start_index: start,
            end_index: start + width,
            center_pose: Pose::identity(),
        })
        .collect();
    if let Some(last) = places.last_mut() {
        last.end_index = num_images;
    }
    Ok(PlacePartition {
        places,
        width_images: width,
        stride_images: stride,
        num_images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hundred_images() {
        let part = partition_places(100, 40, 10).unwrap();
        let starts: Vec<_> = part.places.iter().map(|p| p.start_index).collect();
        assert_eq!(starts, vec![0, 10, 20, 30, 40, 50, 60]);
        assert_eq!(part.places.last().unwrap().end_index, 100);
        assert_eq!(part.overlap_factor(), Ratio::new(3, 4));
    }

    #[test]
    fn single_window() {
        let part = partition_places(40, 40, 10).unwrap();
        assert_eq!(part.places.len(), 1);
        assert_eq!((part.places[0].start_index, part.places[0].end_index), (0, 40));
    }

    #[test]
    fn trailing_images_merge_into_last_place() {
        let part = partition_places(105, 40, 10).unwrap();
        let last = part.places.last().unwrap();
        assert_eq!((last.start_index, last.end_index), (60, 105));
    }

    #[test]
    fn interior_coverage_is_width_over_stride() {
        let part = partition_places(100, 40, 10).unwrap();
        for i in 30..70 {
            assert_eq!(part.places_containing(i).count(), 4, "index {i}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(partition_places(39, 40, 10).is_err());
        assert!(partition_places(100, 40, 0).is_err());
        assert!(partition_places(100, 40, 41).is_err());
    }

    proptest! {
        #[test]
        fn covers_every_index(width in 1usize..60, stride_frac in 0.0f64..1.0, extra in 0usize..200) {
            let stride = 1 + ((width - 1) as f64 * stride_frac) as usize;
            let n = width + extra;
            let part = partition_places(n, width, stride).unwrap();
            for i in 0..n {
                prop_assert!(part.places_containing(i).count() >= 1);
            }
            for pair in part.places.windows(2) {
                prop_assert_eq!(pair[1].start_index - pair[0].start_index, stride);
            }
            for p in &part.places[..part.places.len() - 1] {
                prop_assert_eq!(p.len(), width);
            }
            prop_assert!(part.places.last().unwrap().len() >= width);
        }
    }
}
