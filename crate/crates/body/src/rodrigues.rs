use nalgebra::{Matrix3, Vector3};

/// Threshold below which the Rodrigues coefficients switch to their Taylor
/// series. At `theta = 1e-2` the four-term series is still accurate to
/// ~1e-22 relative, while `1 - cos(theta)` has already lost half its digits
/// to cancellation — so the seam sits where both sides are sound.
const TAYLOR_THETA: f64 = 1e-2;
const TAYLOR_S: f64 = TAYLOR_THETA * TAYLOR_THETA;

/// Coefficient `a(s) = sin(sqrt(s)) / sqrt(s)` of the Rodrigues formula,
/// written as a smooth function of `s = theta^2` so it is well defined (and
/// differentiable) straight through zero.
pub fn rot_coef_a(s: f64) -> f64 {
    if s < TAYLOR_S {
        // 1 - s/6 + s^2/120 - s^3/5040
        1.0 - s / 6.0 + s * s / 120.0 - s * s * s / 5040.0
    } else {
        let theta = s.sqrt();
        theta.sin() / theta
    }
}

/// Coefficient `b(s) = (1 - cos(sqrt(s))) / s`, smooth through zero.
pub fn rot_coef_b(s: f64) -> f64 {
    if s < TAYLOR_S {
        // 1/2 - s/24 + s^2/720 - s^3/40320
        0.5 - s / 24.0 + s * s / 720.0 - s * s * s / 40320.0
    } else {
        (1.0 - s.sqrt().cos()) / s
    }
}

/// Derivative `da/ds`, needed by the differentiable rotation layer.
pub fn rot_coef_a_grad(s: f64) -> f64 {
    if s < TAYLOR_S {
        -1.0 / 6.0 + s / 60.0 - s * s / 1680.0 + s * s * s / 90720.0
    } else {
        // d/ds [sin(t)/t] with t = sqrt(s): (cos(t) - sin(t)/t) / (2s)
        let theta = s.sqrt();
        (theta.cos() - theta.sin() / theta) / (2.0 * s)
    }
}

/// Derivative `db/ds`.
pub fn rot_coef_b_grad(s: f64) -> f64 {
    if s < TAYLOR_S {
        -1.0 / 24.0 + s / 360.0 - s * s / 13440.0 + s * s * s / 725760.0
    } else {
        // d/ds [(1 - cos(t)) / s] = (sin(t)/(2t) - (1 - cos(t))/s) / s
        let theta = s.sqrt();
        (theta.sin() / (2.0 * theta) - (1.0 - theta.cos()) / s) / s
    }
}

/// Axis-angle vector to rotation matrix:
/// `R = I + a(s) K + b(s) K^2` with `K` the cross-product matrix of `v` and
/// `s = |v|^2`. Exact identity at `v = 0`.
pub fn rodrigues(v: &Vector3<f64>) -> Matrix3<f64> {
    let s = v.norm_squared();
    let a = rot_coef_a(s);
    let b = rot_coef_b(s);
    let k = Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    );
    Matrix3::identity() + a * k + b * (k * k)
}
