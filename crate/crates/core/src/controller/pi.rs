use super::config::PiGains;

/// Bound on the integral contribution `ki · integrator`.
const INTEGRAL_AUTHORITY: f64 = 1.0;

/// One PI update with conditional-integration anti-windup.
///
/// Returns `(duty, integrator)`. The integrator only advances when doing so
/// does not push an already saturated output further into saturation.
pub fn pi_step(gains: &PiGains, integrator: f64, error: f64, dt: f64) -> (f64, f64) {
    let output = |i: f64| gains.bias + gains.kp * error + gains.ki * i;
    let mut next = integrator + error * dt;
    if gains.ki > 0.0 {
        let bound = INTEGRAL_AUTHORITY / gains.ki;
        next = next.clamp(-bound, bound);
    }
    let raw = output(next);
    let winding = (raw > 1.0 && error > 0.0) || (raw < 0.0 && error < 0.0);
    let integrator = if !winding {
        next
    } else if gains.ki > 0.0 {
        // Advance only as far as the saturation edge.
        let rail = if raw > 1.0 { 1.0 } else { 0.0 };
        let edge = (rail - gains.bias - gains.kp * error) / gains.ki;
        if error > 0.0 {
            edge.max(integrator).min(next)
        } else {
            edge.min(integrator).max(next)
        }
    } else {
        integrator
    };
    (output(integrator).clamp(0.0, 1.0), integrator)
}

/// Integrator value that makes the output equal `duty` at zero error.
pub fn bumpless_integrator(gains: &PiGains, duty: f64) -> f64 {
    if gains.ki > 0.0 {
        ((duty - gains.bias) / gains.ki).clamp(-INTEGRAL_AUTHORITY / gains.ki, INTEGRAL_AUTHORITY / gains.ki)
    } else {
        0.0
    }
}

/// Excitation duty for a terminal-voltage error in volts.
pub fn regulate_excitation(gains: &PiGains, integrator: f64, error: f64, dt_ctrl: f64) -> (f64, f64) {
    pi_step(gains, integrator, error, dt_ctrl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const G: PiGains = PiGains {
        kp: 0.004,
        ki: 0.012,
        bias: 0.5,
    };

    #[test]
    fn zero_error_returns_bias() {
        assert_eq!(regulate_excitation(&G, 0.0, 0.0, 1e-3), (0.5, 0.0));
    }

    #[test]
    fn persistent_positive_error_is_non_decreasing_until_clamp() {
        let mut i = 0.0;
        let mut last = 0.0;
        for _ in 0..200_000 {
            let (d, n) = regulate_excitation(&G, i, 3.0, 1e-3);
            assert!(d >= last);
            last = d;
            i = n;
        }
        assert_eq!(last, 1.0);
    }

    #[test]
    fn integrator_freezes_while_saturated() {
        let (d, i) = pi_step(&G, 40.0, 10.0, 1e-3);
        assert_eq!(d, 1.0);
        assert_eq!(i, 40.0);
        let (_, i) = pi_step(&G, 40.0, -10.0, 1e-3);
        assert!(i < 40.0);
    }

    #[test]
    fn bumpless_start_reproduces_duty() {
        let i = bumpless_integrator(&G, 0.63);
        assert!((pi_step(&G, i, 0.0, 1e-3).0 - 0.63).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn output_and_integrator_bounded(
            errors in prop::collection::vec(-500.0f64..500.0, 1..400),
            kp in 0.0f64..0.1, ki in 0.0f64..1.0, bias in 0.0f64..1.0,
        ) {
            let g = PiGains { kp, ki, bias };
            let mut i = 0.0;
            for e in errors {
                let (d, n) = pi_step(&g, i, e, 1e-3);
                prop_assert!((0.0..=1.0).contains(&d));
                prop_assert!((g.ki * n).abs() <= INTEGRAL_AUTHORITY + 1e-12);
                i = n;
            }
        }
    }
}
