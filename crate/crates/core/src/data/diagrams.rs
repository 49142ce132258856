//! Synthetic charge-stability diagrams. Single-dot images carry one family of
//! parallel transition lines; double-dot images carry two families with gaps
//! and short bridging segments at their crossings (a honeycomb-like pattern).

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

use crate::backend::mix_seed;
use crate::error::{invalid, Result};

pub const MIN_RESOLUTION: usize = 8;
pub const DEFAULT_RESOLUTION: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Diagram {
    /// Row-major `resolution × resolution` image with values in [0, 1].
    pub pixels: DMatrix<f64>,
    /// 0 = single dot, 1 = double dot.
    pub label: usize,
}

impl Diagram {
    /// Pixels flattened row by row.
    pub fn features(&self) -> Vec<f64> {
        let (r, c) = self.pixels.shape();
        (0..r)
            .flat_map(|i| (0..c).map(move |j| self.pixels[(i, j)]))
            .collect()
    }
}

/// Family of parallel lines {p : n·p = offset + k·spacing} in unit coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFamily {
    /// Angle of the line normal.
    pub normal_angle: f64,
    pub spacing: f64,
    pub offset: f64,
}

impl LineFamily {
    fn normal(&self) -> (f64, f64) {
        (self.normal_angle.cos(), self.normal_angle.sin())
    }

    /// Distance from `p` to the nearest line of the family.
    fn distance(&self, p: (f64, f64)) -> f64 {
        let (nx, ny) = self.normal();
        let s = nx * p.0 + ny * p.1 - self.offset;
        let r = s.rem_euclid(self.spacing);
        r.min(self.spacing - r)
    }

    fn line_values(&self) -> impl Iterator<Item = f64> + '_ {
        // n·p over the unit square lies within [-√2, √2].
        let lo = ((-2.0 - self.offset) / self.spacing).floor() as i64;
        let hi = ((2.0 - self.offset) / self.spacing).ceil() as i64;
        (lo..=hi).map(move |k| self.offset + k as f64 * self.spacing)
    }
}

/// Analytic description of one diagram.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagramShape {
    pub families: Vec<LineFamily>,
    /// Line half-width in unit coordinates.
    pub width: f64,
    /// Radius of the avoided-crossing gap (double dots only).
    pub gap: f64,
}

impl DiagramShape {
    /// Draws the line geometry for a diagram of the given class.
    pub fn sample<R: Rng + ?Sized>(label: usize, rng: &mut R) -> Self {
        // Transition lines run from upper left to lower right, so normals
        // point into the first quadrant.
        let steep = LineFamily {
            normal_angle: rng.random_range(0.15..0.45) * PI,
            spacing: rng.random_range(0.28..0.42),
            offset: rng.random_range(0.0..1.0),
        };
        if label == 0 {
            return Self {
                families: vec![steep],
                width: 0.035,
                gap: 0.0,
            };
        }
        let first = LineFamily {
            normal_angle: rng.random_range(0.05..0.18) * PI,
            ..steep
        };
        let second = LineFamily {
            normal_angle: rng.random_range(0.32..0.45) * PI,
            spacing: rng.random_range(0.28..0.42),
            offset: rng.random_range(0.0..1.0),
        };
        Self {
            families: vec![first, second],
            width: 0.035,
            gap: 0.06,
        }
    }

    fn crossings(&self) -> Vec<(f64, f64)> {
        let [a, b] = match self.families.as_slice() {
            [a, b] => [a, b],
            _ => return Vec::new(),
        };
        let (ax, ay) = a.normal();
        let (bx, by) = b.normal();
        let det = ax * by - ay * bx;
        if det.abs() < 1e-9 {
            return Vec::new();
        }
        let mut points = Vec::new();
        for ca in a.line_values() {
            for cb in b.line_values() {
                let x = (ca * by - ay * cb) / det;
                let y = (ax * cb - ca * bx) / det;
                if (-0.2..=1.2).contains(&x) && (-0.2..=1.2).contains(&y) {
                    points.push((x, y));
                }
            }
        }
        points
    }

    /// Noise-free image; pixel centres sit at ((j + ½)/R, 1 − (i + ½)/R).
    pub fn render(&self, resolution: usize) -> DMatrix<f64> {
        let crossings = self.crossings();
        let profile = |d: f64| (-(d / self.width).powi(2)).exp();
        DMatrix::from_fn(resolution, resolution, |i, j| {
            let p = (
                (j as f64 + 0.5) / resolution as f64,
                1.0 - (i as f64 + 0.5) / resolution as f64,
            );
            let mut lines = self
                .families
                .iter()
                .map(|f| profile(f.distance(p)))
                .fold(0.0, f64::max);
            if self.gap > 0.0 {
                for &(cx, cy) in &crossings {
                    let (dx, dy) = (p.0 - cx, p.1 - cy);
                    let r = (dx * dx + dy * dy).sqrt();
                    lines *= 1.0 - (-(r / self.gap).powi(2)).exp();
                    // bridge across the gap along the (1, 1) diagonal
                    let along = (dx + dy) / 2f64.sqrt();
                    let across = (dx - dy) / 2f64.sqrt();
                    if along.abs() <= self.gap {
                        lines = lines.max(profile(across));
                    }
                }
            }
            lines.clamp(0.0, 1.0)
        })
    }
}

/// `count` diagrams alternating labels 0, 1, 0, …; sample `i` depends only on
/// `(seed, i)`.
pub fn gen_diagrams(
    count: usize,
    resolution: usize,
    noise_level: f64,
    seed: u64,
) -> Result<Vec<Diagram>> {
    if resolution < MIN_RESOLUTION {
        return Err(invalid(format!(
            "resolution must be at least {MIN_RESOLUTION}, got {resolution}"
        )));
    }
    if count < 2 {
        return Err(invalid("need at least two diagrams so both classes appear"));
    }
    if !(noise_level >= 0.0 && noise_level.is_finite()) {
        return Err(invalid(format!(
            "noise level must be a finite non-negative number, got {noise_level}"
        )));
    }
    Ok((0..count)
        .map(|i| diagram_at(i, resolution, noise_level, seed))
        .collect())
}

fn diagram_at(index: usize, resolution: usize, noise_level: f64, seed: u64) -> Diagram {
    let label = index % 2;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, index as u64));
    let shape = DiagramShape::sample(label, &mut rng);
    let mut pixels = shape.render(resolution);
    if noise_level > 0.0 {
        let normal = Normal::new(0.0, noise_level).expect("finite positive deviation");
        pixels.apply(|v| *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0));
    }
    Diagram { pixels, label }
}

/// Geometry used for sample `index`, for reproducing clean images.
pub fn diagram_shape(index: usize, seed: u64) -> DiagramShape {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, index as u64));
    DiagramShape::sample(index % 2, &mut rng)
}
