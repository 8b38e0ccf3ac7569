use crate::GeomError;
use nalgebra::{Matrix3, Point3, Vector3};

/// A similarity transform `p -> scale * rotation * p + translation`.
///
/// `rotation` is always a proper rotation (orthonormal, determinant +1);
/// reflections are folded out during estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn identity() -> Similarity {
        Similarity {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.scale * (self.rotation * p.coords) + self.translation)
    }

    /// Applies the transform to every point of a set.
    pub fn apply(&self, points: &[Point3<f64>]) -> Vec<Point3<f64>> {
        points.iter().map(|p| self.apply_point(p)).collect()
    }
}

/// Least-squares similarity alignment of `source` onto `target` (classic
/// orthogonal-Procrustes-with-scale): finds `scale`, `rotation`, and
/// `translation` minimizing `sum_i |target_i - (s R source_i + t)|^2`.
///
/// Requires at least 3 point pairs of equal count. If the centered
/// cross-covariance has rank < 2 (coincident or collinear points) there is no
/// unique minimizer and a degenerate-configuration error is returned.
pub fn procrustes(
    source: &[Point3<f64>],
    target: &[Point3<f64>],
) -> Result<Similarity, GeomError> {
    if source.len() != target.len() {
        return Err(GeomError::LengthMismatch {
            left: source.len(),
            right: target.len(),
        });
    }
    if source.len() < 3 {
        return Err(GeomError::TooFewPoints {
            needed: 3,
            got: source.len(),
        });
    }
    let n = source.len() as f64;

    let mu_s: Vector3<f64> = source.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let mu_t: Vector3<f64> = target.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;

    // Centered cross-covariance (target x source) and source variance.
    let mut sigma = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, t) in source.iter().zip(target) {
        let sc = s.coords - mu_s;
        let tc = t.coords - mu_t;
        sigma += tc * sc.transpose();
        var_s += sc.norm_squared();
    }
    sigma /= n;
    var_s /= n;

    let svd = sigma.svd(true, true);
    let u = svd.u.expect("svd of 3x3 always yields u");
    let v_t = svd.v_t.expect("svd of 3x3 always yields v_t");
    let d = svd.singular_values; // sorted in decreasing order

    // Rank < 2 leaves a whole family of equally good rotations.
    if d[1] <= 1e-12 * d[0].max(1e-300) {
        return Err(GeomError::DegenerateConfiguration);
    }

    // Reflection guard: flip the axis of the smallest singular value when
    // det(U) * det(V) < 0 so the result stays a proper rotation.
    let mut s_diag = Vector3::new(1.0, 1.0, 1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        s_diag[2] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&s_diag) * v_t;

    if var_s <= 0.0 {
        return Err(GeomError::DegenerateConfiguration);
    }
    let scale = d.dot(&s_diag) / var_s;
    let translation = mu_t - scale * (rotation * mu_s);

    Ok(Similarity {
        scale,
        rotation,
        translation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;

    fn tetrahedron() -> Vec<Point3<f64>> {
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ]
    }

    #[test]
    fn recovers_a_known_transform() {
        let src = tetrahedron();
        let rot = Rotation3::from_euler_angles(0.3, -0.8, 1.2);
        let truth = Similarity {
            scale: 2.5,
            rotation: *rot.matrix(),
            translation: Vector3::new(0.4, -1.0, 3.0),
        };
        let dst = truth.apply(&src);
        let est = procrustes(&src, &dst).unwrap();
        assert_relative_eq!(est.scale, truth.scale, epsilon = 1e-12);
        assert_relative_eq!(est.rotation, truth.rotation, epsilon = 1e-12);
        assert_relative_eq!(est.translation, truth.translation, epsilon = 1e-12);
    }

    #[test]
    fn aligning_identical_sets_is_identity() {
        let src = tetrahedron();
        let est = procrustes(&src, &src).unwrap();
        assert_relative_eq!(est.scale, 1.0, epsilon = 1e-12);
        assert_relative_eq!(est.rotation, Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(est.translation, Vector3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn rejects_reflections() {
        // Mirror the tetrahedron; the best proper rotation cannot reproduce
        // it exactly, but the estimate must still have det +1.
        let src = tetrahedron();
        let dst: Vec<_> = src
            .iter()
            .map(|p| Point3::new(-p.x, p.y, p.z))
            .collect();
        let est = procrustes(&src, &dst).unwrap();
        assert_relative_eq!(est.rotation.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn collinear_sources_are_degenerate() {
        let src = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
            Point3::new(3.0, 0.0, 0.0),
        ];
        let dst = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 2.0, 0.0),
            Point3::new(0.0, 3.0, 0.0),
        ];
        let err = procrustes(&src, &dst).unwrap_err();
        assert_eq!(err, GeomError::DegenerateConfiguration);
        assert!(err.to_string().contains("degenerate configuration"));
    }

    #[test]
    fn planar_sources_are_fine() {
        // Rank 2 is the boundary case the reflection guard exists for.
        let src = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
        ];
        let rot = Rotation3::from_euler_angles(-0.5, 0.2, 0.9);
        let truth = Similarity {
            scale: 0.7,
            rotation: *rot.matrix(),
            translation: Vector3::new(1.0, 2.0, -0.3),
        };
        let dst = truth.apply(&src);
        let est = procrustes(&src, &dst).unwrap();
        for (s, t) in src.iter().zip(&dst) {
            assert_relative_eq!(est.apply_point(s), *t, epsilon = 1e-9);
        }
    }

    #[test]
    fn mismatched_lengths_and_tiny_sets_error() {
        let a = tetrahedron();
        assert!(matches!(
            procrustes(&a[..3], &a).unwrap_err(),
            GeomError::LengthMismatch { .. }
        ));
        assert!(matches!(
            procrustes(&a[..2], &a[..2]).unwrap_err(),
            GeomError::TooFewPoints { needed: 3, got: 2 }
        ));
    }
}
