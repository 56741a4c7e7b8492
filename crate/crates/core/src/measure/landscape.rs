//! Seeded synthetic cost functions over a search space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MeasureConfig, Sample, Status};
use crate::error::{Error, Result};
use crate::hash;
use crate::space::{Coordinate, SearchSpace};

/// Cost at a point is `scale * (1 + AMPLITUDE * g)` where `g >= 0` vanishes
/// only at the optimum.
pub const AMPLITUDE: f64 = 4.0;
/// Height of the hash perturbation in the rugged family, in units of `g`.
pub const RUGGED_AMPLITUDE: f64 = 0.1;
/// Plateau family quantizes `g` in steps of `1 / PLATEAU_LEVELS`.
pub const PLATEAU_LEVELS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandscapeFamily {
    /// Weighted squared distance to a seeded center.
    SeparableConvex,
    /// Positive-definite quadratic with pairwise couplings.
    CorrelatedValley,
    /// Convex bowl plus a per-coordinate hash perturbation.
    Rugged,
    /// Convex bowl quantized into flat steps.
    Plateau,
}

impl LandscapeFamily {
    pub const ALL: [LandscapeFamily; 4] = [
        LandscapeFamily::SeparableConvex,
        LandscapeFamily::CorrelatedValley,
        LandscapeFamily::Rugged,
        LandscapeFamily::Plateau,
    ];
}

/// `i` is masked iff `(a * i + b) mod size < count`.
#[derive(Debug, Clone, PartialEq)]
struct InvalidMask {
    a: u128,
    b: u128,
    size: u128,
    count: u128,
}

impl InvalidMask {
    fn contains(&self, i: u128) -> bool {
        self.count > 0 && (mulmod(self.a, i, self.size) + self.b) % self.size < self.count
    }
}

fn mulmod(a: u128, b: u128, m: u128) -> u128 {
    match a.checked_mul(b) {
        Some(p) => p % m,
        None => {
            // double-and-add, only for astronomically large spaces
            let (mut r, mut a, mut b) = (0u128, a % m, b % m);
            while b > 0 {
                if b & 1 == 1 {
                    r = (r + a) % m;
                }
                a = (a << 1) % m;
                b >>= 1;
            }
            r
        }
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// A deterministic cost function over `space`, optionally noisy and with a
/// masked-out invalid region.
#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    pub space: SearchSpace,
    pub family: LandscapeFamily,
    pub seed: u64,
    pub invalid_fraction: f64,
    pub noise_rel: f64,
    /// Cost at the optimum, in nanoseconds.
    pub scale: f64,
    center: Vec<usize>,
    weights: Vec<f64>,
    /// Row-major upper triangle, `coupling[i * dim + j]` for `i < j`.
    coupling: Vec<f64>,
    mask: InvalidMask,
}

impl Landscape {
    /// A noise-free landscape with no invalid points and unit scale.
    pub fn new(space: SearchSpace, family: LandscapeFamily, seed: u64) -> Self {
        let dim = space.dimension();
        let mut rng = ChaCha8Rng::seed_from_u64(hash::combine(seed, [hash::hash_str("landscape")]));
        let center: Vec<usize> = space
            .params()
            .iter()
            .map(|p| rng.gen_range(0..p.cardinality()))
            .collect();
        let weights: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.5..1.5)).collect();
        let mut coupling = vec![0.0; dim * dim];
        if family == LandscapeFamily::CorrelatedValley && dim > 1 {
            // row sums of |c| stay below 0.9, so the quadratic is positive definite
            let cap = 0.9 / (dim - 1) as f64;
            for i in 0..dim {
                for j in i + 1..dim {
                    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    coupling[i * dim + j] = sign * rng.gen_range(0.5..=1.0) * cap;
                }
            }
        }
        let size = space.size().max(1);
        let mask = InvalidMask {
            a: 1,
            b: 0,
            size,
            count: 0,
        };
        Self {
            space,
            family,
            seed,
            invalid_fraction: 0.0,
            noise_rel: 0.0,
            scale: 1.0,
            center,
            weights,
            coupling,
            mask,
        }
    }

    /// Masks exactly `floor(fraction * size)` coordinates, never the optimum.
    pub fn with_invalid_fraction(mut self, fraction: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::InvalidConfig(format!(
                "invalid_fraction must be in [0, 1), got {fraction}"
            )));
        }
        let size = self.space.size().max(1);
        let count = ((fraction * size as f64).floor() as u128).min(size - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(hash::combine(self.seed, [hash::hash_str("mask")]));
        let mut a = 1;
        if size > 1 {
            loop {
                a = rng.gen_range(1..size);
                if gcd(a, size) == 1 {
                    break;
                }
            }
        }
        // place the optimum's image in the unmasked range
        let opt = self.space.linear_index(&self.optimum())?;
        let target = count + rng.gen_range(0..size - count);
        let b = (target + size - mulmod(a, opt, size)) % size;
        self.mask = InvalidMask { a, b, size, count };
        self.invalid_fraction = fraction;
        Ok(self)
    }

    pub fn with_noise(mut self, noise_rel: f64) -> Result<Self> {
        if !(noise_rel >= 0.0 && noise_rel.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise_rel must be finite and >= 0, got {noise_rel}"
            )));
        }
        self.noise_rel = noise_rel;
        Ok(self)
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        assert!(scale > 0.0 && scale.is_finite(), "scale must be positive");
        self.scale = scale;
        self
    }

    /// The global optimum; unique except on plateaus.
    pub fn optimum(&self) -> Coordinate {
        Coordinate::new(self.center.clone())
    }

    /// The analytic minimum cost, attained at [`Self::optimum`].
    pub fn minimum(&self) -> f64 {
        self.scale
    }

    /// Number of masked coordinates.
    pub fn invalid_count(&self) -> u128 {
        self.mask.count
    }

    pub fn is_invalid(&self, c: &Coordinate) -> Result<bool> {
        Ok(self.mask.contains(self.space.linear_index(c)?))
    }

    /// Noise-free cost, ignoring the invalid mask.
    pub fn cost(&self, c: &Coordinate) -> Result<f64> {
        self.space.validate(c)?;
        Ok(self.scale * (1.0 + AMPLITUDE * self.shape(c)?))
    }

    fn offsets(&self, c: &Coordinate) -> Vec<f64> {
        self.space
            .params()
            .iter()
            .zip(c.indices())
            .zip(&self.center)
            .map(|((p, &i), &m)| {
                let span = (p.cardinality() - 1).max(1) as f64;
                (i as f64 - m as f64) / span
            })
            .collect()
    }

    fn shape(&self, c: &Coordinate) -> Result<f64> {
        let d = self.offsets(c);
        let bowl: f64 = d.iter().zip(&self.weights).map(|(x, w)| w * x * x).sum();
        Ok(match self.family {
            LandscapeFamily::SeparableConvex => bowl,
            LandscapeFamily::CorrelatedValley => {
                let dim = d.len();
                let mut cross = 0.0;
                for i in 0..dim {
                    for j in i + 1..dim {
                        let c_ij = self.coupling[i * dim + j];
                        cross +=
                            2.0 * c_ij * (self.weights[i] * self.weights[j]).sqrt() * d[i] * d[j];
                    }
                }
                (bowl + cross).max(0.0)
            }
            LandscapeFamily::Rugged => {
                if c.indices() == self.center.as_slice() {
                    0.0
                } else {
                    let lin = self.space.linear_index(c)?;
                    let h = hash::combine(
                        self.seed,
                        [hash::hash_str("rugged"), lin as u64, (lin >> 64) as u64],
                    );
                    bowl + RUGGED_AMPLITUDE * hash::unit(h)
                }
            }
            LandscapeFamily::Plateau => (bowl * PLATEAU_LEVELS).floor() / PLATEAU_LEVELS,
        })
    }

    /// One simulated measurement: `cfg.repeats` timings of the noise-free
    /// cost, each scaled by `1 + noise_rel * u` with `u` uniform in `[-1, 1]`
    /// drawn from a stream keyed by the seed, the call index and `c`.
    pub fn evaluate(&self, c: &Coordinate, cfg: &MeasureConfig, call_index: u64) -> Result<Sample> {
        let value = self.cost(c)?;
        if self.is_invalid(c)? {
            return Ok(Sample::failed(c.clone(), Status::Invalid));
        }
        if value > cfg.timeout_ns() {
            return Ok(Sample::failed(c.clone(), Status::Timeout));
        }
        let lin = self.space.linear_index(c)?;
        let mut rng = ChaCha8Rng::seed_from_u64(hash::combine(
            self.seed,
            [
                hash::hash_str("noise"),
                call_index,
                lin as u64,
                (lin >> 64) as u64,
            ],
        ));
        let timings = (0..cfg.repeats)
            .map(|_| {
                if self.noise_rel == 0.0 {
                    value
                } else {
                    let u: f64 = rng.gen_range(-1.0..=1.0);
                    (value * (1.0 + self.noise_rel * u)).max(value * 1e-3)
                }
            })
            .collect();
        Ok(Sample::ok(c.clone(), timings))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{ParamDef, ParamKind};

    fn space(cards: &[usize]) -> SearchSpace {
        let params = cards
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                ParamDef::new(format!("p{i}"), ParamKind::Other, (0..n as i64).collect()).unwrap()
            })
            .collect();
        SearchSpace::new(params).unwrap()
    }

    fn brute_min(l: &Landscape) -> (Coordinate, f64) {
        l.space
            .enumerate()
            .unwrap()
            .filter(|c| !l.is_invalid(c).unwrap())
            .map(|c| {
                let v = l.cost(&c).unwrap();
                (c, v)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
    }

    #[test]
    fn optimum_is_the_analytic_minimum() {
        for family in LandscapeFamily::ALL {
            for seed in 0..20 {
                let l = Landscape::new(space(&[5, 4, 6]), family, seed).with_scale(3.0);
                let (c, v) = brute_min(&l);
                assert_eq!(v, 3.0, "{family:?} {seed}");
                if family != LandscapeFamily::Plateau {
                    assert_eq!(c, l.optimum(), "{family:?} {seed}");
                }
                assert_eq!(l.cost(&l.optimum()).unwrap(), l.minimum());
            }
        }
    }

    #[test]
    fn mask_has_exact_size_and_spares_optimum() {
        for seed in 0..30 {
            for f in [0.0, 0.1, 0.37, 0.9, 0.99] {
                let l = Landscape::new(space(&[7, 3, 5]), LandscapeFamily::Rugged, seed)
                    .with_invalid_fraction(f)
                    .unwrap();
                let masked = l
                    .space
                    .enumerate()
                    .unwrap()
                    .filter(|c| l.is_invalid(c).unwrap())
                    .count();
                assert_eq!(masked, (f * 105.0).floor() as usize);
                assert!(!l.is_invalid(&l.optimum()).unwrap());
            }
        }
        assert!(Landscape::new(space(&[2]), LandscapeFamily::Plateau, 0)
            .with_invalid_fraction(1.0)
            .is_err());
    }

    #[test]
    fn zero_noise_evaluation_is_exact() {
        let l =
            Landscape::new(space(&[10, 10]), LandscapeFamily::SeparableConvex, 4).with_scale(250.0);
        let s = l
            .evaluate(&l.optimum(), &MeasureConfig::default(), 17)
            .unwrap();
        assert_eq!(s.cost, 250.0);
        assert_eq!(s.timings, vec![250.0; 10]);
    }

    #[test]
    fn noise_is_bounded_and_reproducible() {
        let l = Landscape::new(space(&[6, 6]), LandscapeFamily::CorrelatedValley, 9)
            .with_noise(0.05)
            .unwrap();
        let c = Coordinate::new(vec![1, 4]);
        let cfg = MeasureConfig::default();
        let a = l.evaluate(&c, &cfg, 3).unwrap();
        assert_eq!(a, l.evaluate(&c, &cfg, 3).unwrap());
        assert_ne!(a, l.evaluate(&c, &cfg, 4).unwrap());
        let v = l.cost(&c).unwrap();
        assert!(a
            .timings
            .iter()
            .all(|t| (t / v - 1.0).abs() <= 0.05 + 1e-12));
    }

    #[test]
    fn invalid_and_timeout_status() {
        let l = Landscape::new(space(&[4, 4]), LandscapeFamily::SeparableConvex, 2)
            .with_invalid_fraction(0.5)
            .unwrap();
        let bad = l
            .space
            .enumerate()
            .unwrap()
            .find(|c| l.is_invalid(c).unwrap())
            .unwrap();
        let s = l.evaluate(&bad, &MeasureConfig::default(), 0).unwrap();
        assert_eq!((s.status, s.cost), (Status::Invalid, f64::INFINITY));

        let slow = Landscape::new(space(&[4]), LandscapeFamily::SeparableConvex, 2).with_scale(2e9);
        let s = slow
            .evaluate(
                &slow.optimum(),
                &MeasureConfig {
                    timeout_ms: 1000,
                    ..Default::default()
                },
                0,
            )
            .unwrap();
        assert_eq!(s.status, Status::Timeout);
    }

    #[test]
    fn rugged_has_local_minima() {
        let l = Landscape::new(space(&[10, 10, 10]), LandscapeFamily::Rugged, 1);
        let local = l
            .space
            .enumerate()
            .unwrap()
            .filter(|c| {
                let v = l.cost(c).unwrap();
                l.space
                    .neighbors(c)
                    .unwrap()
                    .iter()
                    .all(|n| l.cost(n).unwrap() > v)
            })
            .count();
        assert!(local > 1, "{local}");
    }
}
