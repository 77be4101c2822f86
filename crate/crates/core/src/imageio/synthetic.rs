use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

pub const FOREGROUND: f64 = 0.9;
pub const BACKGROUND: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Disk of radius 0.3 at the middle of the domain.
    Disk,
    /// Smooth five-pointed star `r(t) = 0.28 (1 + 0.25 cos 5t)`.
    Star5,
    /// Disk whose visible part is cut by a vertical background bar; the
    /// ground truth is the whole disk.
    OccludedDisk,
    /// Two disks joined by a narrow bridge.
    TwoBlobs,
    /// Axis-aligned square `[0.25, 0.75]^2`.
    Square,
    /// Disk minus an offset disk; not star-shaped about its centroid.
    Crescent,
}

impl Shape {
    pub fn parse(name: &str) -> Result<Shape> {
        serde_json::from_value(serde_json::Value::String(name.to_string()))
            .map_err(|_| Error::validation("shape", format!("unknown shape {name:?}")))
    }

    /// Reference center(s): the centroid for single objects, one per lobe
    /// for `TwoBlobs`.
    pub fn centers(&self) -> Vec<[f64; 2]> {
        match self {
            Shape::TwoBlobs => vec![[0.3, 0.5], [0.7, 0.5]],
            Shape::Crescent => vec![[0.5, 0.2]],
            _ => vec![[0.5, 0.5]],
        }
    }

    fn truth_at(&self, p: [f64; 2]) -> bool {
        let d = |c: [f64; 2]| (p[0] - c[0]).hypot(p[1] - c[1]);
        match self {
            Shape::Disk | Shape::OccludedDisk => d([0.5, 0.5]) <= 0.3,
            Shape::Star5 => {
                let (dx, dy) = (p[0] - 0.5, p[1] - 0.5);
                let t = dy.atan2(dx);
                dx.hypot(dy) <= 0.28 * (1.0 + 0.25 * (5.0 * t).cos())
            }
            Shape::TwoBlobs => {
                d([0.3, 0.5]) <= 0.17
                    || d([0.7, 0.5]) <= 0.17
                    || ((0.3..=0.7).contains(&p[0]) && (p[1] - 0.5).abs() <= 0.05)
            }
            Shape::Square => (0.25..=0.75).contains(&p[0]) && (0.25..=0.75).contains(&p[1]),
            Shape::Crescent => d([0.5, 0.5]) <= 0.35 && d([0.65, 0.5]) > 0.3,
        }
    }

    fn visible_at(&self, p: [f64; 2]) -> bool {
        match self {
            Shape::OccludedDisk => self.truth_at(p) && !(0.62..=0.68).contains(&p[0]),
            _ => self.truth_at(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub grid: ImageGrid,
    pub truth: Vec<bool>,
    pub centers: Vec<[f64; 2]>,
    /// Number of pixels replaced by impulse noise.
    pub corrupted: usize,
}

/// Renders `shape` on a `size x size` grid (foreground 0.9, background 0.1)
/// and replaces exactly `round(noise_fraction * size^2)` pixels, chosen
/// uniformly without replacement, by 0 or 1 with equal probability.
pub fn make_synthetic(shape: Shape, size: usize, noise_fraction: f64, seed: u64) -> Result<Synthetic> {
    if !(0.0..=1.0).contains(&noise_fraction) {
        return Err(Error::validation("noise_fraction", "must lie in [0, 1]"));
    }
    let blank = ImageGrid::blank(size)?;
    let mut intensity = Vec::with_capacity(blank.len());
    let mut truth = Vec::with_capacity(blank.len());
    for k in 0..blank.len() {
        let p = blank.center(k);
        truth.push(shape.truth_at(p));
        intensity.push(if shape.visible_at(p) { FOREGROUND } else { BACKGROUND });
    }
    let corrupted = (noise_fraction * blank.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in sample(&mut rng, blank.len(), corrupted) {
        intensity[k] = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
    }
    Ok(Synthetic {
        grid: ImageGrid::new(size, intensity)?,
        truth,
        centers: shape.centers(),
        corrupted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::verify_star_shape;

    #[test]
    fn noise_free_has_two_levels() {
        let s = make_synthetic(Shape::Disk, 32, 0.0, 1).unwrap();
        let mut vals: Vec<f64> = s.grid.intensity().to_vec();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        assert_eq!(vals, vec![BACKGROUND, FOREGROUND]);
        assert_eq!(s.corrupted, 0);
    }

    #[test]
    fn full_noise_is_binary() {
        let s = make_synthetic(Shape::Star5, 32, 1.0, 2).unwrap();
        assert!(s.grid.intensity().iter().all(|v| *v == 0.0 || *v == 1.0));
    }

    #[test]
    fn corrupted_count_is_exact_and_seeded() {
        let n = 64;
        let clean = make_synthetic(Shape::Star5, n, 0.0, 0).unwrap();
        let noisy = make_synthetic(Shape::Star5, n, 0.3, 9).unwrap();
        let changed = clean
            .grid
            .intensity()
            .iter()
            .zip(noisy.grid.intensity())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, (0.3 * (n * n) as f64).round() as usize);
        assert_eq!(make_synthetic(Shape::Star5, n, 0.3, 9).unwrap(), noisy);
        assert_ne!(make_synthetic(Shape::Star5, n, 0.3, 10).unwrap(), noisy);
        assert!(make_synthetic(Shape::Disk, n, 1.5, 0).is_err());
    }

    #[test]
    fn truths_are_star_shaped_where_expected() {
        for shape in [Shape::Disk, Shape::Star5, Shape::OccludedDisk, Shape::Square] {
            let s = make_synthetic(shape, 64, 0.0, 0).unwrap();
            assert!(verify_star_shape(&s.truth, 64, s.centers[0]).unwrap().is_star, "{shape:?}");
        }
        let s = make_synthetic(Shape::Crescent, 64, 0.0, 0).unwrap();
        assert!(!verify_star_shape(&s.truth, 64, s.centers[0]).unwrap().is_star);
    }

    #[test]
    fn occluder_hides_part_of_the_disk() {
        let s = make_synthetic(Shape::OccludedDisk, 64, 0.0, 0).unwrap();
        let hidden = s
            .truth
            .iter()
            .zip(s.grid.intensity())
            .filter(|(t, v)| **t && **v == BACKGROUND)
            .count();
        assert!(hidden > 0);
    }

    #[test]
    fn parse_names() {
        assert_eq!(Shape::parse("two_blobs").unwrap(), Shape::TwoBlobs);
        assert!(Shape::parse("hexagon").is_err());
    }
}
