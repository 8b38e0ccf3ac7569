use crate::SceneError;
use conrec_geom::dist::dist_to_surface;
use conrec_geom::{nn_dists, Mesh};

/// Whether a contact map holds hard ground-truth labels or model
/// probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactKind {
    Binary,
    Probability,
}

/// Per-vertex contact values for one mesh. Values live in `[0, 1]`; a
/// [`ContactKind::Binary`] map is restricted to exactly `{0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactMap {
    pub values: Vec<f64>,
    pub kind: ContactKind,
}

impl ContactMap {
    /// A binary map from per-vertex flags.
    pub fn binary(flags: Vec<bool>) -> ContactMap {
        ContactMap {
            values: flags.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect(),
            kind: ContactKind::Binary,
        }
    }

    /// A probability map; every value must lie in `[0, 1]`.
    pub fn probability(values: Vec<f64>) -> Result<ContactMap, SceneError> {
        for (i, &v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(SceneError::Config(format!(
                    "contact probability {v} at vertex {i} is outside [0, 1]"
                )));
            }
        }
        Ok(ContactMap {
            values,
            kind: ContactKind::Probability,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Per-vertex flags after thresholding at `threshold` (inclusive on the
    /// high side: a value of exactly `threshold` counts as contact).
    pub fn binarized(&self, threshold: f64) -> Vec<bool> {
        self.values.iter().map(|&v| v >= threshold).collect()
    }

    /// Number of vertices in contact, thresholding probabilities at 0.5.
    pub fn contact_count(&self) -> usize {
        self.values.iter().filter(|&&v| v >= 0.5).count()
    }

    /// True when no vertex is in contact (thresholding at 0.5).
    pub fn is_all_clear(&self) -> bool {
        self.contact_count() == 0
    }
}

/// How ground-truth contact is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactMode {
    /// A vertex is in contact when some vertex of the other mesh lies within
    /// the threshold. Symmetric by construction and exactly checkable against
    /// an exhaustive pairwise oracle.
    #[default]
    VertexVertex,
    /// A vertex is in contact when the other mesh's *surface* passes within
    /// the threshold. Needs the full-resolution faced meshes, since the
    /// downsampled meshes carry no faces.
    PointToSurface,
}

/// Labels vertex-to-vertex contact between two meshes at threshold `tau`
/// meters (inclusive): human vertex `i` is in contact iff
/// `min_j |h_i - o_j| <= tau`, and symmetrically for object vertices.
pub fn label_contact(
    human: &Mesh,
    object: &Mesh,
    tau: f64,
) -> Result<(ContactMap, ContactMap), SceneError> {
    if human.vertices.is_empty() {
        return Err(SceneError::Geom(conrec_geom::GeomError::EmptySet(
            "contact labeling human mesh",
        )));
    }
    let h_to_o = nn_dists(&human.vertices, &object.vertices)?;
    let o_to_h = nn_dists(&object.vertices, &human.vertices)?;
    Ok((
        ContactMap::binary(h_to_o.into_iter().map(|d| d <= tau).collect()),
        ContactMap::binary(o_to_h.into_iter().map(|d| d <= tau).collect()),
    ))
}

/// Labels point-to-surface contact: each downsampled vertex is tested
/// against the opposing *full-resolution* surface. `human_full` and
/// `object_full` must carry faces.
pub fn label_contact_surface(
    human: &Mesh,
    human_full: &Mesh,
    object: &Mesh,
    object_full: &Mesh,
    tau: f64,
) -> Result<(ContactMap, ContactMap), SceneError> {
    let h_flags = human
        .vertices
        .iter()
        .map(|p| Ok(dist_to_surface(p, object_full)? <= tau))
        .collect::<Result<Vec<bool>, SceneError>>()?;
    let o_flags = object
        .vertices
        .iter()
        .map(|p| Ok(dist_to_surface(p, human_full)? <= tau))
        .collect::<Result<Vec<bool>, SceneError>>()?;
    Ok((ContactMap::binary(h_flags), ContactMap::binary(o_flags)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    fn cloud(points: &[[f64; 3]]) -> Mesh {
        Mesh::from_edges(
            points.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect(),
            vec![],
        )
    }

    #[test]
    fn meshes_a_meter_apart_have_all_zero_maps() {
        let h = cloud(&[[0.0, 0.0, 0.0], [0.02, 0.0, 0.0], [0.0, 0.03, 0.0]]);
        let o = cloud(&[[1.0, 0.0, 0.0], [1.0, 0.05, 0.0]]);
        let (ch, co) = label_contact(&h, &o, 0.05).unwrap();
        assert!(ch.values.iter().all(|&v| v == 0.0));
        assert!(co.values.iter().all(|&v| v == 0.0));
        assert!(ch.is_all_clear() && co.is_all_clear());
    }

    #[test]
    fn coincident_vertex_is_flagged_on_both_sides() {
        let h = cloud(&[[0.3, 0.4, 1.2], [5.0, 5.0, 5.0]]);
        let o = cloud(&[[9.0, 9.0, 9.0], [0.3, 0.4, 1.2]]);
        let (ch, co) = label_contact(&h, &o, 0.05).unwrap();
        assert_eq!(ch.values, vec![1.0, 0.0]);
        assert_eq!(co.values, vec![0.0, 1.0]);
    }

    #[test]
    fn four_centimeters_is_contact_six_is_not() {
        let o = cloud(&[[0.0, 0.0, 0.0]]);
        let near = cloud(&[[0.04, 0.0, 0.0]]);
        let far = cloud(&[[0.06, 0.0, 0.0]]);
        let (ch, _) = label_contact(&near, &o, 0.05).unwrap();
        assert_eq!(ch.values, vec![1.0]);
        let (ch, co) = label_contact(&far, &o, 0.05).unwrap();
        assert_eq!(ch.values, vec![0.0]);
        assert_eq!(co.values, vec![0.0]);
    }

    #[test]
    fn the_threshold_itself_counts_as_contact() {
        let h = cloud(&[[0.05, 0.0, 0.0]]);
        let o = cloud(&[[0.0, 0.0, 0.0]]);
        let (ch, co) = label_contact(&h, &o, 0.05).unwrap();
        assert_eq!(ch.values, vec![1.0]);
        assert_eq!(co.values, vec![1.0]);
    }

    #[test]
    fn matches_the_exhaustive_pairwise_oracle() {
        // Deterministic pseudo-random clouds; the oracle is the double loop
        // over all pairs, written without the nearest-neighbor helper.
        let mut state = 42u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let h: Vec<Point3<f64>> = (0..23)
            .map(|_| Point3::new(next() * 0.3, next() * 0.3, next() * 0.3))
            .collect();
        let o: Vec<Point3<f64>> = (0..17)
            .map(|_| Point3::new(0.2 + next() * 0.3, next() * 0.3, next() * 0.3))
            .collect();
        let tau = 0.12;
        let (ch, co) = label_contact(
            &Mesh::from_edges(h.clone(), vec![]),
            &Mesh::from_edges(o.clone(), vec![]),
            tau,
        )
        .unwrap();
        for (i, hp) in h.iter().enumerate() {
            let hit = o.iter().any(|op| (hp - op).norm() <= tau);
            assert_eq!(ch.values[i] == 1.0, hit, "human vertex {i}");
        }
        for (j, op) in o.iter().enumerate() {
            let hit = h.iter().any(|hp| (op - hp).norm() <= tau);
            assert_eq!(co.values[j] == 1.0, hit, "object vertex {j}");
        }
        // Reciprocity: one side non-empty iff the other is.
        assert_eq!(ch.is_all_clear(), co.is_all_clear());
    }

    #[test]
    fn surface_mode_sees_contact_through_a_face_interior() {
        // A big triangle at z = 0 with far-apart corners; the probe hovers
        // 3 cm above its center. Vertex-to-vertex misses (nearest corner is
        // ~0.58 m away), point-to-surface catches it.
        let tri = Mesh::from_faces(
            vec![
                Point3::new(-0.5, -0.5, 0.0),
                Point3::new(1.5, -0.5, 0.0),
                Point3::new(-0.5, 1.5, 0.0),
            ],
            vec![[0, 1, 2]],
        );
        let probe = cloud(&[[0.5, 0.5, 0.03]]);
        let (v2v, _) = label_contact(&probe, &tri, 0.05).unwrap();
        assert_eq!(v2v.values, vec![0.0]);
        let (p2s, on_tri) = label_contact_surface(&probe, &probe_surface(), &tri, &tri, 0.05).unwrap();
        assert_eq!(p2s.values, vec![1.0]);
        // The triangle's corners are all far from the probe's surface.
        assert_eq!(on_tri.values, vec![0.0, 0.0, 0.0]);
    }

    fn probe_surface() -> Mesh {
        // A tiny triangle around the probe point so the reverse direction of
        // the surface-mode test has faces to measure against.
        Mesh::from_faces(
            vec![
                Point3::new(0.49, 0.49, 0.03),
                Point3::new(0.51, 0.49, 0.03),
                Point3::new(0.5, 0.51, 0.03),
            ],
            vec![[0, 1, 2]],
        )
    }

    #[test]
    fn probability_maps_reject_out_of_range_values() {
        assert!(ContactMap::probability(vec![0.0, 0.5, 1.0]).is_ok());
        assert!(ContactMap::probability(vec![1.2]).is_err());
        assert!(ContactMap::probability(vec![-0.1]).is_err());
        assert!(ContactMap::probability(vec![f64::NAN]).is_err());
    }

    #[test]
    fn binarized_threshold_is_inclusive() {
        let m = ContactMap::probability(vec![0.49, 0.5, 0.51]).unwrap();
        assert_eq!(m.binarized(0.5), vec![false, true, true]);
        assert_eq!(m.contact_count(), 2);
    }
}
