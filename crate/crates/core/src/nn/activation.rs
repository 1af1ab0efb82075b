use serde::{Deserialize, Serialize};

/// Hidden-layer nonlinearity. Output layers are always affine.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    LeakyRelu { slope: f64 },
}

impl Activation {
    pub const CRITIC_DEFAULT: Activation = Activation::LeakyRelu { slope: 0.2 };

    #[inline]
    pub fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => tanh(a),
            Activation::LeakyRelu { slope } => {
                if a > 0.0 {
                    a
                } else {
                    slope * a
                }
            }
        }
    }

    /// Applies the activation in place.
    pub fn apply_slice(self, xs: &mut [f64]) {
        match self {
            Activation::Tanh => xs.iter_mut().for_each(|x| *x = tanh(*x)),
            Activation::LeakyRelu { slope } => xs
                .iter_mut()
                .for_each(|x| *x = if *x > 0.0 { *x } else { slope * *x }),
        }
    }

    /// First derivative expressed through the output `h = φ(a)`. Valid because
    /// both activations are strictly monotone (leaky slope must be positive).
    #[inline]
    pub fn d1(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::LeakyRelu { slope } => {
                if h > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }

    /// Second derivative expressed through the output `h = φ(a)`.
    #[inline]
    pub fn d2(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => -2.0 * h * (1.0 - h * h),
            Activation::LeakyRelu { .. } => 0.0,
        }
    }

    pub fn has_curvature(self) -> bool {
        matches!(self, Activation::Tanh)
    }
}

// Branch-free expm1 for -40 <= x <= 0, written so loops over it vectorise.
// Cody-Waite reduction x = k ln2 + r, then expm1(x) = 2^k expm1(r) + (2^k - 1)
// with a degree-12 Taylor polynomial for expm1(r), |r| <= ln2/2.
#[inline(always)]
fn expm1_nonpositive(x: f64) -> f64 {
    const LN2_HI: f64 = 6.931_471_803_691_238_164_9e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
    const SHIFT: f64 = 6_755_399_441_055_744.0; // 1.5 * 2^52
    let t = x * std::f64::consts::LOG2_E + SHIFT;
    let k = t - SHIFT;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 479_001_600.0;
    p = p * r + 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    // The low mantissa bits of `t` hold k.
    let scale = f64::from_bits(t.to_bits().wrapping_add(1023) << 52);
    scale * (p * r) + (scale - 1.0)
}

/// Hyperbolic tangent accurate to a few ulps, vectorisable.
#[inline(always)]
pub fn tanh(x: f64) -> f64 {
    let m = expm1_nonpositive(-2.0 * x.abs().min(20.0));
    (-m / (2.0 + m)).copysign(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_matches_libm() {
        let mut worst: f64 = 0.0;
        for i in 0..=400_000 {
            let x = -25.0 + i as f64 * 1.25e-4;
            worst = worst.max((tanh(x) - x.tanh()).abs());
        }
        assert!(worst < 1e-15, "max abs error {worst:e}");
        for x in [1e-12, 1e-6, 0.01, 0.1, 0.124, 0.126] {
            assert!(((tanh(x) - x.tanh()) / x.tanh()).abs() < 2e-15, "{x}");
        }
        assert_eq!(tanh(0.0), 0.0);
        assert_eq!(tanh(1e300), 1.0);
        assert_eq!(tanh(-1e300), -1.0);
        assert!((tanh(1e-200) - 1e-200).abs() < 1e-215);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for act in [Activation::Tanh, Activation::LeakyRelu { slope: 0.2 }] {
            for &a in &[-1.3, -0.2, 0.4, 2.1] {
                let h = 1e-6;
                let fd1 = (act.apply(a + h) - act.apply(a - h)) / (2.0 * h);
                let d1 = |z: f64| act.d1(act.apply(z));
                let fd2 = (d1(a + h) - d1(a - h)) / (2.0 * h);
                assert!((act.d1(act.apply(a)) - fd1).abs() < 1e-8);
                assert!((act.d2(act.apply(a)) - fd2).abs() < 1e-6);
            }
        }
    }
}
