//! Gaussian special functions: complementary error function, tail
//! probability, channel capacity, dispersion, and cross-dispersion.

use std::f64::consts::SQRT_2;

// ----------------------------------------------------------------------
// erfc
//
// Rational-approximation erfc after FreeBSD's msun s_erf.c (via Go's
// erf.go), accurate to a couple of ulps across the full double range.
//
// ====================================================
// Copyright (C) 1993 by Sun Microsystems, Inc. All rights reserved.
//
// Developed at SunPro, a Sun Microsystems, Inc. business.
// Permission to use, copy, modify, and distribute this
// software is freely granted, provided that this notice
// is preserved.
// ====================================================
// ----------------------------------------------------------------------

const ERX: f64 = 8.45062911510467529297e-01;

// |x| < 0.84375
const PP0: f64 = 1.28379167095512558561e-01;
const PP1: f64 = -3.25042107247001499370e-01;
const PP2: f64 = -2.84817495755985104766e-02;
const PP3: f64 = -5.77027029648944159157e-03;
const PP4: f64 = -2.37630166566501626084e-05;
const QQ1: f64 = 3.97917223959155352819e-01;
const QQ2: f64 = 6.50222499887672944485e-02;
const QQ3: f64 = 5.08130628187576562776e-03;
const QQ4: f64 = 1.32494738004321644526e-04;
const QQ5: f64 = -3.96022827877536812320e-06;

// 0.84375 <= |x| < 1.25
const PA0: f64 = -2.36211856075265944077e-03;
const PA1: f64 = 4.14856118683748331666e-01;
const PA2: f64 = -3.72207876035701323847e-01;
const PA3: f64 = 3.18346619901161753674e-01;
const PA4: f64 = -1.10894694282396677476e-01;
const PA5: f64 = 3.54783043256182359371e-02;
const PA6: f64 = -2.16637559486879084300e-03;
const QA1: f64 = 1.06420880400844228286e-01;
const QA2: f64 = 5.40397917702171048937e-01;
const QA3: f64 = 7.18286544141962662868e-02;
const QA4: f64 = 1.26171219808761642112e-01;
const QA5: f64 = 1.36370839120290507362e-02;
const QA6: f64 = 1.19844998467991074170e-02;

// 1.25 <= |x| < 1/0.35
const RA0: f64 = -9.86494403484714822705e-03;
const RA1: f64 = -6.93858572707181764372e-01;
const RA2: f64 = -1.05586262253232909814e+01;
const RA3: f64 = -6.23753324503260060396e+01;
const RA4: f64 = -1.62396669462573470355e+02;
const RA5: f64 = -1.84605092906711035994e+02;
const RA6: f64 = -8.12874355063065934246e+01;
const RA7: f64 = -9.81432934416914548592e+00;
const SA1: f64 = 1.96512716674392571292e+01;
const SA2: f64 = 1.37657754143519042600e+02;
const SA3: f64 = 4.34565877475229228821e+02;
const SA4: f64 = 6.45387271733267880336e+02;
const SA5: f64 = 4.29008140027567833386e+02;
const SA6: f64 = 1.08635005541779435134e+02;
const SA7: f64 = 6.57024977031928170135e+00;
const SA8: f64 = -6.04244152148580987438e-02;

// 1/0.35 <= |x| < 28
const RB0: f64 = -9.86494292470009928597e-03;
const RB1: f64 = -7.99283237680523006574e-01;
const RB2: f64 = -1.77579549177547519889e+01;
const RB3: f64 = -1.60636384855821916062e+02;
const RB4: f64 = -6.37566443368389627722e+02;
const RB5: f64 = -1.02509513161107724954e+03;
const RB6: f64 = -4.83519191608651397019e+02;
const SB1: f64 = 3.03380607434824582924e+01;
const SB2: f64 = 3.25792512996573918826e+02;
const SB3: f64 = 1.53672958608443695994e+03;
const SB4: f64 = 3.19985821950859553908e+03;
const SB5: f64 = 2.55305040643316442583e+03;
const SB6: f64 = 4.74528541206955367215e+02;
const SB7: f64 = -2.24409524465858183362e+01;

// 2^-56
const TINY: f64 = 1.3877787807814457e-17;

/// Complementary error function `erfc(x) = 1 - erf(x)`.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    if x == f64::NEG_INFINITY {
        return 2.0;
    }
    let sign = x < 0.0;
    let x = x.abs();
    if x < 0.84375 {
        let temp = if x < TINY {
            x
        } else {
            let z = x * x;
            let r = PP0 + z * (PP1 + z * (PP2 + z * (PP3 + z * PP4)));
            let s = 1.0 + z * (QQ1 + z * (QQ2 + z * (QQ3 + z * (QQ4 + z * QQ5))));
            let y = r / s;
            if x < 0.25 {
                x + x * y
            } else {
                0.5 + (x * y + (x - 0.5))
            }
        };
        return if sign { 1.0 + temp } else { 1.0 - temp };
    }
    if x < 1.25 {
        let s = x - 1.0;
        let p = PA0 + s * (PA1 + s * (PA2 + s * (PA3 + s * (PA4 + s * (PA5 + s * PA6)))));
        let q = 1.0 + s * (QA1 + s * (QA2 + s * (QA3 + s * (QA4 + s * (QA5 + s * QA6)))));
        return if sign {
            1.0 + ERX + p / q
        } else {
            1.0 - ERX - p / q
        };
    }
    if x < 28.0 {
        let s = 1.0 / (x * x);
        let (r, q);
        if x < 1.0 / 0.35 {
            r = RA0 + s * (RA1 + s * (RA2 + s * (RA3 + s * (RA4 + s * (RA5 + s * (RA6 + s * RA7))))));
            q = 1.0
                + s * (SA1
                    + s * (SA2
                        + s * (SA3 + s * (SA4 + s * (SA5 + s * (SA6 + s * (SA7 + s * SA8)))))));
        } else {
            if sign && x > 6.0 {
                return 2.0;
            }
            r = RB0 + s * (RB1 + s * (RB2 + s * (RB3 + s * (RB4 + s * (RB5 + s * RB6)))));
            q = 1.0
                + s * (SB1 + s * (SB2 + s * (SB3 + s * (SB4 + s * (SB5 + s * (SB6 + s * SB7))))));
        }
        // pseudo-single precision split of x for the exp argument
        let z = f64::from_bits(x.to_bits() & 0xffff_ffff_0000_0000);
        let v = (-z * z - 0.5625).exp() * ((z - x) * (z + x) + r / q).exp();
        return if sign { 2.0 - v / x } else { v / x };
    }
    if sign {
        2.0
    } else {
        0.0
    }
}

/// Upper tail of the standard normal: `Q(x) = erfc(x / sqrt(2)) / 2`.
pub fn q_func(x: f64) -> f64 {
    assert!(!x.is_nan(), "Q-function input must not be NaN");
    0.5 * erfc(x / SQRT_2)
}

/// Point-to-point Gaussian capacity in nats per channel use:
/// `C(gamma) = ln(1 + gamma) / 2`.
pub fn capacity(gamma: f64) -> f64 {
    assert!(gamma >= 0.0, "capacity requires gamma >= 0, got {gamma}");
    0.5 * gamma.ln_1p()
}

/// Gaussian dispersion `V(x) = x(2 + x) / (2 (1 + x)^2)`.
pub fn dispersion(x: f64) -> f64 {
    assert!(x >= 0.0, "dispersion requires x >= 0, got {x}");
    x * (2.0 + x) / (2.0 * (1.0 + x) * (1.0 + x))
}

/// Cross-dispersion `V(x, y) = x(2 + y) / (2 (1 + x)(1 + y))` on
/// `0 <= x <= y`.
pub fn cross_dispersion(x: f64, y: f64) -> f64 {
    assert!(
        0.0 <= x && x <= y,
        "cross-dispersion requires 0 <= x <= y, got ({x}, {y})"
    );
    x * (2.0 + y) / (2.0 * (1.0 + x) * (1.0 + y))
}

/// `V'(a, gamma) = V(gamma) + V(a) - 2 V(a, gamma)` for `0 <= a <= gamma`;
/// the dispersion term of the first SIC decoding stage.
pub fn v_prime(alpha_gamma: f64, gamma: f64) -> f64 {
    assert!(
        0.0 <= alpha_gamma && alpha_gamma <= gamma,
        "v_prime requires 0 <= alpha*gamma <= gamma, got ({alpha_gamma}, {gamma})"
    );
    dispersion(gamma) + dispersion(alpha_gamma) - 2.0 * cross_dispersion(alpha_gamma, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_rel(got: f64, want: f64, tol: f64) {
        let rel = (got - want).abs() / want.abs().max(1e-300);
        assert!(rel < tol, "got {got}, want {want} (rel {rel:.3e})");
    }

    #[test]
    fn capacity_anchors() {
        assert_eq!(capacity(0.0), 0.0);
        assert_rel(capacity(1.0), 0.346573590279972655, 1e-15);
        // 5 dB
        assert_rel(capacity(10.0_f64.powf(0.5)), 0.713031219452684067, 1e-14);
    }

    #[test]
    fn q_function_anchors() {
        assert_eq!(q_func(0.0), 0.5);
        assert_rel(q_func(3.816), 6.781625181221699e-5, 1e-12);
        // symmetry identity
        for &x in &[0.1, 0.7, 1.3, 2.9, 4.4, 7.5] {
            let s = q_func(x) + q_func(-x);
            assert!((s - 1.0).abs() < 1e-12, "Q({x}) + Q(-{x}) = {s}");
        }
    }

    #[test]
    fn q_function_strictly_decreasing() {
        let mut prev = q_func(-8.0);
        let mut x = -8.0;
        while x < 8.0 {
            x += 0.25;
            let cur = q_func(x);
            assert!(cur < prev, "Q not decreasing at {x}");
            prev = cur;
        }
    }

    #[test]
    fn dispersion_anchors() {
        assert_eq!(dispersion(0.0), 0.0);
        assert_rel(dispersion(10.0_f64.powf(0.5)), 0.471139230372449128, 1e-14);
        // saturates at 1/2
        assert!((dispersion(1e6) - 0.5).abs() < 1e-5);
    }

    #[test]
    fn cross_dispersion_anchors() {
        assert_eq!(cross_dispersion(0.0, 3.0), 0.0);
        assert_rel(cross_dispersion(1.0, 3.0), 0.3125, 1e-15);
        // V(x, x) collapses to V(x)
        for &x in &[0.3, 1.0, 4.5] {
            assert_rel(cross_dispersion(x, x), dispersion(x), 1e-15);
        }
    }

    #[test]
    fn v_prime_limits_and_composition() {
        let g = 10.0_f64.powf(0.5);
        // alpha = 0 leaves only V(gamma)
        assert_rel(v_prime(0.0, g), dispersion(g), 1e-15);
        // alpha = 1 cancels exactly
        assert!(v_prime(g, g).abs() < 1e-16);
        // compositional recomputation
        let a = 0.5 * g;
        let direct = v_prime(a, g);
        let recomposed = dispersion(g) + dispersion(a) - 2.0 * cross_dispersion(a, g);
        assert_rel(direct, recomposed, 1e-12);
        assert!((0.0..=0.5).contains(&direct));
    }

    #[test]
    #[should_panic(expected = "gamma >= 0")]
    fn capacity_rejects_negative() {
        let _ = capacity(-0.1);
    }

    #[test]
    #[should_panic(expected = "0 <= x <= y")]
    fn cross_dispersion_rejects_reversed_args() {
        let _ = cross_dispersion(3.0, 1.0);
    }
}
