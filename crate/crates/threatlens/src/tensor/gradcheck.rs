//! Central-difference gradient verification.

use super::Param;

/// Compare the analytic gradients stored in `params` against central
/// finite differences of `eval`, returning the maximum relative error
/// `|analytic − numeric| / max(1, |numeric|)` over every coordinate.
///
/// `eval` must recompute the scalar objective from the parameters' current
/// values (forward pass only); the caller runs the backward pass that
/// populates the analytic gradients beforehand.
pub fn grad_check(params: &[Param], mut eval: impl FnMut() -> f64, h: f64) -> f64 {
    assert!(h > 0.0, "step size must be positive");
    let mut max_rel = 0.0f64;
    for p in params {
        let analytic = p
            .borrow()
            .grad()
            .expect("run backward before grad_check")
            .to_vec();
        for (k, &a) in analytic.iter().enumerate() {
            let orig = p.borrow().values()[k];
            p.borrow_mut().values_mut()[k] = orig + h;
            let up = eval();
            p.borrow_mut().values_mut()[k] = orig - h;
            let down = eval();
            p.borrow_mut().values_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (a - numeric).abs() / numeric.abs().max(1.0);
            max_rel = max_rel.max(rel);
        }
    }
    max_rel
}
