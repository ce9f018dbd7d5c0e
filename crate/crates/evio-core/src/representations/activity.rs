//! Event-activity recurrence.
//!
//! Activity `a` tracks the local event rate through a damped counter: each
//! event contributes one unit, and the running value is shrunk by a factor
//! that grows with both the current activity and the time since the previous
//! event. For a constant inter-event interval `b` seconds the fixed point is
//! `(1 + sqrt(1 + 4/b)) / 2`, about `1/sqrt(b)` for small `b`.

/// One step of the recurrence: `a_i = beta * a_prev + 1` with
/// `beta = 1 / (1 + a_prev * dt)`.
#[inline]
pub fn activity_update(a_prev: f64, dt_s: f64) -> f64 {
    debug_assert!(a_prev >= 0.0 && dt_s >= 0.0);
    a_prev / (1.0 + a_prev * dt_s) + 1.0
}

/// Fixed point of [`activity_update`] under a constant inter-event interval
/// of `b` seconds.
#[inline]
pub fn converged_activity(b_s: f64) -> f64 {
    debug_assert!(b_s > 0.0);
    0.5 * (1.0 + (1.0 + 4.0 / b_s).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fixed_point_solves_the_recurrence() {
        // a* must satisfy a* = a*/(1 + a* b) + 1 exactly.
        for b in [4.0, 1.0, 1e-2, 1e-3, 1e-4, 2e-5] {
            let a = converged_activity(b);
            assert_relative_eq!(activity_update(a, b), a, max_relative = 1e-12);
        }
        // Closed form at b = 4: (1 + sqrt(2)) / 2.
        assert_relative_eq!(
            converged_activity(4.0),
            0.5 * (1.0 + 2.0f64.sqrt()),
            max_relative = 1e-15
        );
    }

    #[test]
    fn iteration_converges_to_fixed_point_from_zero() {
        for b in [1e-3, 1e-4, 2e-5] {
            let target = converged_activity(b);
            let mut a = 0.0;
            // Roughly 1/sqrt(b) events are needed; give it plenty.
            for _ in 0..(20.0 / b.sqrt()) as usize {
                a = activity_update(a, b);
            }
            assert_relative_eq!(a, target, max_relative = 1e-6);
            // And approximately 1/sqrt(b) for small b.
            assert_relative_eq!(target, 1.0 / b.sqrt(), max_relative = 0.05);
        }
    }

    #[test]
    fn activity_is_monotone_in_rate() {
        // Faster streams (smaller dt) keep higher activity.
        let a_fast = (0..1000).fold(0.0, |a, _| activity_update(a, 1e-4));
        let a_slow = (0..1000).fold(0.0, |a, _| activity_update(a, 1e-3));
        assert!(a_fast > a_slow);
    }
}
