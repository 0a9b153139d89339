//! Variable stability index `alpha(x)` with its structural bounds.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shape of `alpha` as a function of the first coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum ExponentProfile {
    Constant {
        value: f64,
    },
    /// `base + amplitude * (1 + tanh((x1 - center) / width)) / 2`
    Tanh {
        base: f64,
        amplitude: f64,
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        width: f64,
    },
    /// `mean + amplitude * sin(wavenumber * x1)`
    Sine {
        mean: f64,
        amplitude: f64,
        wavenumber: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl ExponentProfile {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let x1 = x.first().copied().unwrap_or(0.0);
        match *self {
            Self::Constant { value } => value,
            Self::Tanh {
                base,
                amplitude,
                center,
                width,
            } => base + amplitude * 0.5 * (1.0 + ((x1 - center) / width).tanh()),
            Self::Sine {
                mean,
                amplitude,
                wavenumber,
            } => mean + amplitude * (wavenumber * x1).sin(),
        }
    }

    /// `alpha(x + h) - alpha(x)` without cancellation for small `h`.
    pub fn difference(&self, x: &[f64], h: &[f64]) -> f64 {
        let x1 = x.first().copied().unwrap_or(0.0);
        let h1 = h.first().copied().unwrap_or(0.0);
        let y1 = x1 + h1;
        match *self {
            Self::Constant { .. } => 0.0,
            Self::Tanh {
                amplitude,
                center,
                width,
                ..
            } => {
                let (u, v) = ((y1 - center) / width, (x1 - center) / width);
                let gap = h1 / width;
                if gap.abs() > 0.5 {
                    0.5 * amplitude * (u.tanh() - v.tanh())
                } else {
                    0.5 * amplitude * gap.sinh() / (u.cosh() * v.cosh())
                }
            }
            Self::Sine {
                amplitude,
                wavenumber,
                ..
            } => {
                2.0 * amplitude
                    * (wavenumber * (x1 + 0.5 * h1)).cos()
                    * (0.5 * wavenumber * h1).sin()
            }
        }
    }

    /// Exact range `(inf, sup)` over `R^d`.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            Self::Constant { value } => (value, value),
            Self::Tanh {
                base, amplitude, ..
            } => {
                let end = base + amplitude;
                (base.min(end), base.max(end))
            }
            Self::Sine {
                mean, amplitude, ..
            } => (mean - amplitude.abs(), mean + amplitude.abs()),
        }
    }

    /// Lipschitz constant, which serves as the Hoelder constant for `delta = 1`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Self::Constant { .. } => 0.0,
            Self::Tanh {
                amplitude, width, ..
            } => 0.5 * amplitude.abs() / width.abs(),
            Self::Sine {
                amplitude,
                wavenumber,
                ..
            } => (amplitude * wavenumber).abs(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            Self::Constant { .. } => true,
            Self::Tanh { amplitude, .. } | Self::Sine { amplitude, .. } => amplitude == 0.0,
        }
    }
}

/// `alpha(x)` together with the bounds `alpha_lower <= alpha <= alpha_upper`
/// and a Hoelder modulus `|alpha(x) - alpha(y)| <= M |x - y|^delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentField {
    pub profile: ExponentProfile,
    pub dim: usize,
    pub lower: f64,
    pub upper: f64,
    pub hoelder_const: f64,
    pub hoelder_exp: f64,
}

impl ExponentField {
    /// Builds a field with bounds read off the profile and `delta = 1`.
    pub fn new(profile: ExponentProfile, dim: usize) -> Result<Self> {
        let (lower, upper) = profile.range();
        let field = Self {
            hoelder_const: profile.lipschitz(),
            profile,
            dim,
            lower,
            upper,
            hoelder_exp: 1.0,
        };
        field.validate()?;
        Ok(field)
    }

    pub fn constant(alpha: f64, dim: usize) -> Result<Self> {
        Self::new(ExponentProfile::Constant { value: alpha }, dim)
    }

    /// Builds a field with explicitly declared bounds; they are checked
    /// against the profile.
    pub fn with_bounds(
        profile: ExponentProfile,
        dim: usize,
        lower: f64,
        upper: f64,
        hoelder_const: f64,
        hoelder_exp: f64,
    ) -> Result<Self> {
        let field = Self {
            profile,
            dim,
            lower,
            upper,
            hoelder_const,
            hoelder_exp,
        };
        field.validate()?;
        Ok(field)
    }

    pub fn alpha(&self, x: &[f64]) -> f64 {
        self.profile.eval(x)
    }

    /// Evaluates `alpha` and rejects values outside the declared bounds.
    pub fn alpha_checked(&self, x: &[f64]) -> Result<f64> {
        let a = self.alpha(x);
        if !(a > 0.0 && a < 2.0) || a < self.lower - 1e-12 || a > self.upper + 1e-12 {
            return Err(Error::Exponent(format!(
                "alpha({x:?}) = {a} outside [{}, {}] within (0, 2)",
                self.lower, self.upper
            )));
        }
        Ok(a)
    }

    pub fn is_constant(&self) -> bool {
        self.profile.is_constant()
    }

    /// Checks the structural invariants:
    /// `0 < lower <= upper < 2`, `upper < 1 + lower / 2`,
    /// `(2 upper - lower) / 2 < delta <= 1`, and that the profile respects the
    /// declared bounds and Hoelder modulus on a deterministic random sample.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.lower, self.upper);
        if self.dim == 0 {
            return Err(Error::Exponent("dimension must be positive".into()));
        }
        if !(lo > 0.0 && lo <= hi && hi < 2.0) {
            return Err(Error::Exponent(format!(
                "need 0 < lower <= upper < 2, got lower = {lo}, upper = {hi}"
            )));
        }
        if hi >= 1.0 + lo / 2.0 {
            return Err(Error::Exponent(format!(
                "need upper < 1 + lower/2, got upper = {hi}, 1 + lower/2 = {}",
                1.0 + lo / 2.0
            )));
        }
        let delta = self.hoelder_exp;
        if !(delta > 0.5 * (2.0 * hi - lo) && delta <= 1.0) {
            return Err(Error::Exponent(format!(
                "need (2 upper - lower)/2 < delta <= 1, got delta = {delta}, threshold {}",
                0.5 * (2.0 * hi - lo)
            )));
        }
        if self.hoelder_const < 0.0 {
            return Err(Error::Exponent(
                "Hoelder constant must be nonnegative".into(),
            ));
        }
        self.check_samples(4096, 0x5eed)
    }

    fn check_samples(&self, count: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slack = 1e-12;
        for _ in 0..count {
            let scale = 10f64.powf(rng.random_range(-3.0..1.5));
            let x: Vec<f64> = (0..self.dim)
                .map(|_| scale * rng.random_range(-1.0..1.0))
                .collect();
            let step = 10f64.powf(rng.random_range(-6.0..1.0));
            let y: Vec<f64> = x
                .iter()
                .map(|&xi| xi + step * rng.random_range(-1.0..1.0))
                .collect();
            let (ax, ay) = (self.alpha(&x), self.alpha(&y));
            for (p, a) in [(&x, ax), (&y, ay)] {
                if a < self.lower - slack || a > self.upper + slack {
                    return Err(Error::Exponent(format!(
                        "alpha({p:?}) = {a} violates declared bounds [{}, {}]",
                        self.lower, self.upper
                    )));
                }
            }
            let dist = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let bound = self.hoelder_const * dist.powf(self.hoelder_exp);
            if (ax - ay).abs() > bound * (1.0 + 1e-9) + slack {
                return Err(Error::Exponent(format!(
                    "Hoelder bound violated at {x:?}, {y:?}: |diff| = {}, bound = {bound}",
                    (ax - ay).abs()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tanh_profile() -> ExponentProfile {
        ExponentProfile::Tanh {
            base: 0.7,
            amplitude: 0.1,
            center: 0.0,
            width: 1.0,
        }
    }

    #[test]
    fn tanh_field_bounds() {
        let f = ExponentField::new(tanh_profile(), 1).unwrap();
        assert_eq!((f.lower, f.upper), (0.7, 0.7 + 0.1));
        assert!((f.hoelder_const - 0.05).abs() < 1e-15);
        assert!((f.alpha(&[0.0]) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn rejects_wide_range() {
        // upper = 1.5 >= 1 + 0.6/2
        let p = ExponentProfile::Tanh {
            base: 0.6,
            amplitude: 0.9,
            center: 0.0,
            width: 1.0,
        };
        assert!(ExponentField::new(p, 1).is_err());
        assert!(ExponentField::constant(2.0, 1).is_err());
        assert!(ExponentField::constant(0.0, 1).is_err());
    }

    #[test]
    fn rejects_small_delta() {
        // threshold (2*0.8 - 0.7)/2 = 0.45
        let r = ExponentField::with_bounds(tanh_profile(), 1, 0.7, 0.8, 1.0, 0.4);
        assert!(r.is_err());
        let r = ExponentField::with_bounds(tanh_profile(), 1, 0.7, 0.8, 1.0, 0.5);
        assert!(r.is_ok());
    }

    #[test]
    fn understated_bounds_fail_sampling() {
        let r = ExponentField::with_bounds(tanh_profile(), 1, 0.7, 0.78, 1.0, 1.0);
        assert!(r.is_err());
        let r = ExponentField::with_bounds(tanh_profile(), 1, 0.7, 0.8, 0.01, 1.0);
        assert!(r.is_err());
    }

    #[test]
    fn difference_matches_direct_subtraction() {
        let profiles = [
            tanh_profile(),
            ExponentProfile::Sine {
                mean: 1.0,
                amplitude: 0.2,
                wavenumber: 3.0,
            },
        ];
        for p in &profiles {
            for &(x, y) in &[
                (0.3, 1.1),
                (-2.0, 0.5),
                (4.0, -1.0),
                (1e6, 2e6),
                (900.0, 900.2),
            ] {
                let direct = p.eval(&[y]) - p.eval(&[x]);
                assert!((p.difference(&[x], &[y - x]) - direct).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn profile_roundtrips_through_json() {
        let f = ExponentField::new(tanh_profile(), 2).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let g: ExponentField = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
    }
}
