//! Seeded two-class synthetic streams in [0,1]².
//!
//! Record `i` belongs to class `i % 2` (labels `"0"` and `"1"`), so class
//! counts are balanced by construction. All randomness comes from
//! [`StreamRng`]; only `+ - * /`, `sqrt` and comparisons touch the samples,
//! which are correctly rounded everywhere, so a seed yields the same bytes
//! on every platform.
//!
//! * `gaussians`: blobs at `(0.5 ∓ separation/2, 0.5)`, each coordinate
//!   perturbed by `noise · N(0,1)` (Irwin–Hall approximation), then clamped.
//! * `rings`: concentric annuli around `(0.5, 0.5)` with radii `radii.0`
//!   (class 0) and `radii.1` (class 1). The radius is drawn uniformly from
//!   `r ± noise`, the direction by normalizing a point rejection-sampled from
//!   the unit disk.
//! * `moons`: two interleaved half circles of radius 0.25, the upper one
//!   centered at `(0.375, 0.4375)` and the lower one at `(0.625, 0.5625)`,
//!   with the same radial noise as `rings`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::DataRecord;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Gaussians,
    Rings,
    Moons,
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussians" => Ok(Self::Gaussians),
            "rings" => Ok(Self::Rings),
            "moons" => Ok(Self::Moons),
            other => Err(Error::InvalidParameter(format!("unknown shape '{other}'"))),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gaussians => "gaussians",
            Self::Rings => "rings",
            Self::Moons => "moons",
        })
    }
}

const MOON_RADIUS: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub shape: Shape,
    pub n: usize,
    pub seed: u64,
    pub separation: f64,
    pub radii: (f64, f64),
    pub noise: f64,
}

impl SyntheticSpec {
    pub fn new(shape: Shape, n: usize, seed: u64) -> Self {
        let noise = match shape {
            Shape::Gaussians => 0.05,
            Shape::Rings | Shape::Moons => 0.03,
        };
        Self {
            shape,
            n,
            seed,
            separation: 0.5,
            radii: (0.15, 0.4),
            noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return bad("noise must be non-negative");
        }
        match self.shape {
            Shape::Gaussians => {
                if !(0.0..=1.0).contains(&self.separation) {
                    return bad("separation must lie in [0, 1]");
                }
            }
            Shape::Rings => {
                let (r0, r1) = self.radii;
                if !(0.0 < r0 - self.noise && r0 < r1 && r1 + self.noise <= 0.5) {
                    return bad("rings need 0 < r0 - noise, r0 < r1 and r1 + noise <= 0.5");
                }
            }
            Shape::Moons => {
                if self.noise > 0.1 {
                    return bad("moons need noise <= 0.1");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub features: Vec<String>,
    pub records: Vec<DataRecord>,
    pub labels: Vec<String>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Synthetic> {
    spec.validate()?;
    let mut rng = StreamRng::new(spec.seed);
    let mut records = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let class = i % 2;
        let (x, y) = match spec.shape {
            Shape::Gaussians => {
                let cx = if class == 0 {
                    0.5 - spec.separation / 2.0
                } else {
                    0.5 + spec.separation / 2.0
                };
                let x = cx + spec.noise * rng.approx_normal();
                let y = 0.5 + spec.noise * rng.approx_normal();
                (x.clamp(0.0, 1.0), y.clamp(0.0, 1.0))
            }
            Shape::Rings => {
                let r = if class == 0 {
                    spec.radii.0
                } else {
                    spec.radii.1
                };
                let (ux, uy) = unit_direction(&mut rng);
                let r = rng.uniform(r - spec.noise, r + spec.noise);
                (0.5 + r * ux, 0.5 + r * uy)
            }
            Shape::Moons => {
                let (ux, uy) = unit_direction(&mut rng);
                let r = rng.uniform(MOON_RADIUS - spec.noise, MOON_RADIUS + spec.noise);
                if class == 0 {
                    (0.375 + r * ux, 0.4375 + r * uy.abs())
                } else {
                    (0.625 + r * ux, 0.5625 - r * uy.abs())
                }
            }
        };
        records.push(DataRecord::new(vec![x, y], i as u64));
        labels.push(class.to_string());
    }
    Ok(Synthetic {
        features: vec!["x".into(), "y".into()],
        records,
        labels,
    })
}

fn unit_direction(rng: &mut StreamRng) -> (f64, f64) {
    loop {
        let u = rng.uniform(-1.0, 1.0);
        let v = rng.uniform(-1.0, 1.0);
        let q = u * u + v * v;
        if q > 1e-12 && q <= 1.0 {
            let n = q.sqrt();
            return (u / n, v / n);
        }
    }
}
