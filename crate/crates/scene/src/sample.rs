use crate::contact::{label_contact, label_contact_surface, ContactMap, ContactMode};
use crate::raster::{rasterize, CHANNELS};
use crate::SceneError;
use conrec_body::template::PELVIS;
use conrec_body::{
    downsample_mesh, lbs_forward, object_forward, rodrigues, BodyParams, BodyTemplate, ObjectKind,
    ObjectParams,
};
use conrec_geom::{Camera, Mesh};
use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};

/// Minimum camera-space depth any rendered vertex may have, in meters.
pub const MIN_CAMERA_CLEARANCE: f64 = 0.1;

/// Placement attempts before giving up on a contact (or clearance)
/// constraint.
const PLACEMENT_ATTEMPTS: usize = 100;

/// All knobs of the generator. Deserializes with per-field defaults, so a
/// config file only needs the fields it wants to change.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub raster_height: usize,
    pub raster_width: usize,
    /// Focal length in pixels (same for both axes, principal point centered).
    pub focal: f64,
    /// Ground-truth human mesh size after downsampling.
    pub human_vertices: usize,
    /// Ground-truth object mesh size after downsampling.
    pub object_vertices: usize,
    /// Probability that a scene is generated with human-object contact.
    pub contact_fraction: f64,
    /// Contact distance threshold in meters (inclusive).
    pub contact_threshold: f64,
    pub contact_mode: ContactMode,
    /// Object shapes to draw from, uniformly.
    pub categories: Vec<ObjectKind>,
    /// Half-range of each non-root joint's axis-angle components, radians.
    pub pose_amplitude: f64,
    /// Half-range of the root yaw (turn about the vertical axis), radians.
    pub root_yaw: f64,
    /// Half-range of the root pitch and roll, radians.
    pub root_tilt: f64,
    /// Half-range of the pelvis' horizontal offset from the optical axis, m.
    pub lateral_range: f64,
    /// Half-range of the pelvis' vertical offset, m.
    pub vertical_range: f64,
    /// Pelvis depth is drawn uniformly from this interval, m.
    pub depth_range: (f64, f64),
    /// Minimum mesh-to-mesh distance for non-contact scenes, m.
    pub min_clearance: f64,
}

impl Default for SceneConfig {
    fn default() -> SceneConfig {
        SceneConfig {
            raster_height: 64,
            raster_width: 64,
            focal: 70.0,
            human_vertices: 108,
            object_vertices: 64,
            contact_fraction: 0.5,
            contact_threshold: 0.05,
            contact_mode: ContactMode::VertexVertex,
            categories: vec![
                ObjectKind::Box { w: 0.35, h: 0.4, d: 0.3 },
                ObjectKind::Cylinder { r: 0.15, h: 0.5 },
                ObjectKind::Ball { r: 0.2 },
            ],
            pose_amplitude: 0.35,
            root_yaw: 0.5,
            root_tilt: 0.15,
            lateral_range: 0.3,
            vertical_range: 0.2,
            depth_range: (2.6, 3.4),
            min_clearance: 0.15,
        }
    }
}

impl SceneConfig {
    /// The camera implied by the raster size and focal length.
    pub fn camera(&self) -> Camera {
        Camera::centered(self.focal, self.raster_width, self.raster_height)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |msg: String| Err(SceneError::Config(msg));
        if self.raster_height < 8 || self.raster_width < 8 {
            return bad(format!(
                "raster size {}x{} is too small (minimum 8x8)",
                self.raster_height, self.raster_width
            ));
        }
        if !(self.focal > 0.0 && self.focal.is_finite()) {
            return bad(format!("focal length {} must be positive", self.focal));
        }
        if self.human_vertices < 4 {
            return bad(format!("human_vertices {} is below 4", self.human_vertices));
        }
        if self.object_vertices < 4 {
            return bad(format!("object_vertices {} is below 4", self.object_vertices));
        }
        if !(0.0..=1.0).contains(&self.contact_fraction) {
            return bad(format!(
                "contact_fraction {} is outside [0, 1]",
                self.contact_fraction
            ));
        }
        if !(self.contact_threshold > 0.0 && self.contact_threshold.is_finite()) {
            return bad(format!(
                "contact_threshold {} must be positive",
                self.contact_threshold
            ));
        }
        if self.categories.is_empty() {
            return bad("categories must not be empty".to_string());
        }
        for (name, v) in [
            ("pose_amplitude", self.pose_amplitude),
            ("root_yaw", self.root_yaw),
            ("root_tilt", self.root_tilt),
        ] {
            if !(0.0..=PI).contains(&v) {
                return bad(format!("{name} {v} is outside [0, pi]"));
            }
        }
        for (name, v) in [
            ("lateral_range", self.lateral_range),
            ("vertical_range", self.vertical_range),
        ] {
            if !(0.0..=2.0).contains(&v) {
                return bad(format!("{name} {v} is outside [0, 2]"));
            }
        }
        let (lo, hi) = self.depth_range;
        if !(lo >= 1.5 && hi >= lo && hi <= 20.0) {
            return bad(format!(
                "depth_range ({lo}, {hi}) must satisfy 1.5 <= lo <= hi <= 20"
            ));
        }
        if !(self.min_clearance > self.contact_threshold) {
            return bad(format!(
                "min_clearance {} must exceed contact_threshold {}",
                self.min_clearance, self.contact_threshold
            ));
        }
        Ok(())
    }
}

/// One object category's shared geometry: the full template and its
/// downsampled counterpart. The `keep` indices map downsampled vertices back
/// into the template, so posed ground truth and any model-side geometry use
/// the identical vertex selection.
#[derive(Debug, Clone)]
pub struct ObjectAsset {
    pub kind: ObjectKind,
    /// Canonical-pose template, with faces.
    pub full: Mesh,
    /// Downsampled template: an edge mesh on the kept vertices.
    pub down: Mesh,
    /// Kept template vertex indices, ascending.
    pub keep: Vec<usize>,
}

/// Geometry shared by every scene of a config: the body template and the
/// downsampling of it and of each object category, all computed once from
/// the rest-pose meshes.
#[derive(Debug, Clone)]
pub struct SceneAssets {
    pub body: BodyTemplate,
    /// Downsampled rest-pose body: an edge mesh on the kept vertices.
    pub human_down: Mesh,
    /// Kept body vertex indices, ascending.
    pub human_keep: Vec<usize>,
    pub objects: Vec<ObjectAsset>,
}

impl SceneAssets {
    pub fn build(config: &SceneConfig) -> Result<SceneAssets, SceneError> {
        config.validate()?;
        let body = BodyTemplate::default_human();
        let (human_down, human_keep) = downsample_mesh(&body.mesh, config.human_vertices)?;
        let mut objects = Vec::with_capacity(config.categories.len());
        for kind in &config.categories {
            let full = kind.mesh();
            let (down, keep) = downsample_mesh(&full, config.object_vertices)?;
            objects.push(ObjectAsset { kind: *kind, full, down, keep });
        }
        Ok(SceneAssets { body, human_down, human_keep, objects })
    }

    /// The asset for `kind`, or an error for a category these assets were
    /// not built with.
    pub fn object_asset(&self, kind: &ObjectKind) -> Result<&ObjectAsset, SceneError> {
        self.objects
            .iter()
            .find(|a| a.kind == *kind)
            .ok_or_else(|| SceneError::Config(format!("unknown object category: {kind:?}")))
    }
}

/// Everything needed to re-render one scene: pose parameters, object pose
/// and category, camera, and the seed it was drawn from.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Scene {
    pub body: BodyParams,
    pub object: ObjectParams,
    pub category: ObjectKind,
    pub camera: Camera,
    pub seed: u64,
}

/// One training/evaluation sample: the rasterized input (stored as the
/// `f32` it serializes to), downsampled ground-truth meshes, binary contact
/// maps, and the scene parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `CHANNELS x height x width`, channel-major, row-major per channel.
    pub raster: Vec<f32>,
    pub raster_shape: [usize; 3],
    pub human: Mesh,
    pub object: Mesh,
    pub contact_human: ContactMap,
    pub contact_object: ContactMap,
    pub scene: Scene,
}

/// Draws one scene from `seed`: a body pose and placement, an object
/// category, and an object pose that either touches the body (with
/// probability `contact_fraction`) or keeps `min_clearance` away from it.
///
/// Deterministic: the same `(assets, config, seed)` always yields the same
/// scene, independent of any other call.
pub fn sample_scene(
    assets: &SceneAssets,
    config: &SceneConfig,
    seed: u64,
) -> Result<Scene, SceneError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Body pose: small axis-angle perturbations per joint; the root gets a
    // wider yaw so the body faces a range of directions.
    let k = assets.body.joint_count();
    let mut rotations = Vec::with_capacity(k);
    for j in 0..k {
        let v = if j == PELVIS {
            Vector3::new(
                symmetric(&mut rng, config.root_tilt),
                symmetric(&mut rng, config.root_yaw),
                symmetric(&mut rng, config.root_tilt),
            )
        } else {
            Vector3::new(
                symmetric(&mut rng, config.pose_amplitude),
                symmetric(&mut rng, config.pose_amplitude),
                symmetric(&mut rng, config.pose_amplitude),
            )
        };
        rotations.push(v);
    }

    // Root translation chosen so the pelvis lands at the drawn position:
    // near the optical axis, at a depth from the configured range.
    let pelvis_target = Point3::new(
        symmetric(&mut rng, config.lateral_range),
        symmetric(&mut rng, config.vertical_range),
        rng.gen_range(config.depth_range.0..=config.depth_range.1),
    );
    let translation = pelvis_target - assets.body.joints[PELVIS];
    let body = BodyParams { rotations, translation };

    let posed = lbs_forward(&assets.body, &body)?;
    let human_down = gather_mesh(&posed.vertices, &assets.human_keep, &assets.human_down.edges);
    let human_full = Mesh::from_faces(posed.vertices, assets.body.mesh.faces.clone());

    let category = config.categories[rng.gen_range(0..config.categories.len())];
    let asset = assets.object_asset(&category)?;
    let want_contact = rng.gen::<f64>() < config.contact_fraction;

    for _ in 0..PLACEMENT_ATTEMPTS {
        // Each attempt draws the same number of values whether or not it is
        // accepted, so the stream stays aligned.
        let rotation = unit_vector(&mut rng) * rng.gen_range(0.0..PI);
        let anchor = human_down.vertices[rng.gen_range(0..human_down.vertices.len())];
        let offset = unit_vector(&mut rng) * rng.gen_range(0.10..=0.50);
        let mut object = ObjectParams {
            rotation,
            translation: (anchor + offset).coords,
        };

        if !clears_camera(&asset.full, &object) {
            continue;
        }
        let down = posed_down(asset, &object);
        let accepted = if want_contact {
            touch_or_pull(config, asset, &human_down, &human_full, &mut object, down)?
        } else {
            let gap = min_pair_dist(&human_down.vertices, &down.vertices);
            gap >= config.min_clearance
                && labels_clear(config, asset, &human_down, &human_full, &object, &down)?
        };
        if accepted {
            return Ok(Scene {
                body,
                object,
                category,
                camera: config.camera(),
                seed,
            });
        }
    }
    if want_contact {
        Err(SceneError::ContactPlacement)
    } else {
        Err(SceneError::SeparationPlacement)
    }
}

/// Renders one scene into a full sample: raster, downsampled ground-truth
/// meshes, and contact maps. `assets` must be the ones the scene was drawn
/// with.
pub fn build_sample(
    assets: &SceneAssets,
    config: &SceneConfig,
    scene: &Scene,
) -> Result<Sample, SceneError> {
    let posed = lbs_forward(&assets.body, &scene.body)?;
    let human_full = Mesh::from_faces(posed.vertices, assets.body.mesh.faces.clone());
    let asset = assets.object_asset(&scene.category)?;
    let object_full = object_forward(&asset.full, &scene.object);

    for v in human_full.vertices.iter().chain(&object_full.vertices) {
        if v.z <= MIN_CAMERA_CLEARANCE {
            return Err(SceneError::CameraClearance { z: v.z });
        }
    }

    let raster = rasterize(
        &human_full,
        &object_full,
        &scene.camera,
        config.raster_height,
        config.raster_width,
    )?;
    let raster: Vec<f32> = raster.into_iter().map(|v| v as f32).collect();

    let human = gather_mesh(&human_full.vertices, &assets.human_keep, &assets.human_down.edges);
    let object = gather_mesh(&object_full.vertices, &asset.keep, &asset.down.edges);
    let (contact_human, contact_object) = match config.contact_mode {
        ContactMode::VertexVertex => label_contact(&human, &object, config.contact_threshold)?,
        ContactMode::PointToSurface => {
            label_contact_surface(&human, &human_full, &object, &object_full, config.contact_threshold)?
        }
    };

    Ok(Sample {
        raster,
        raster_shape: [CHANNELS, config.raster_height, config.raster_width],
        human,
        object,
        contact_human,
        contact_object,
        scene: scene.clone(),
    })
}

/// Generates `count` samples with per-sample seeds `base_seed + index`.
///
/// Samples are fully independent — each owns its rng stream — so this
/// sequential loop produces the identical dataset a parallel map would.
pub fn generate_samples(
    assets: &SceneAssets,
    config: &SceneConfig,
    base_seed: u64,
    count: usize,
) -> Result<Vec<Sample>, SceneError> {
    (0..count)
        .map(|i| {
            let scene = sample_scene(assets, config, base_seed.wrapping_add(i as u64))?;
            build_sample(assets, config, &scene)
        })
        .collect()
}

/// The downsampled vertices of `full`, as an edge mesh with the
/// downsampling's connectivity.
fn gather_mesh(full: &[Point3<f64>], keep: &[usize], edges: &[[usize; 2]]) -> Mesh {
    Mesh::from_edges(keep.iter().map(|&i| full[i]).collect(), edges.to_vec())
}

fn symmetric(rng: &mut ChaCha8Rng, half_range: f64) -> f64 {
    rng.gen_range(-half_range..=half_range)
}

/// Uniform direction on the sphere (area-preserving cylindrical map).
fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let z = rng.gen_range(-1.0..=1.0);
    let phi = rng.gen_range(0.0..TAU);
    let s = (1.0f64 - z * z).max(0.0).sqrt();
    Vector3::new(s * phi.cos(), s * phi.sin(), z)
}

/// True when every posed template vertex keeps the camera clearance.
fn clears_camera(template: &Mesh, params: &ObjectParams) -> bool {
    let r = rodrigues(&params.rotation);
    template
        .vertices
        .iter()
        .all(|v| (r * v.coords + params.translation).z > MIN_CAMERA_CLEARANCE)
}

/// The posed downsampled object as an edge mesh.
fn posed_down(asset: &ObjectAsset, params: &ObjectParams) -> Mesh {
    let posed = object_forward(&asset.full, params);
    gather_mesh(&posed.vertices, &asset.keep, &asset.down.edges)
}

fn min_pair_dist(a: &[Point3<f64>], b: &[Point3<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for p in a {
        for q in b {
            best = best.min((p - q).norm());
        }
    }
    best
}

/// Index pair minimizing the distance between the two point sets.
fn nearest_pair(a: &[Point3<f64>], b: &[Point3<f64>]) -> (usize, usize) {
    let mut best = (0, 0, f64::INFINITY);
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            let d = (p - q).norm();
            if d < best.2 {
                best = (i, j, d);
            }
        }
    }
    (best.0, best.1)
}

/// Ground-truth contact labels for a candidate placement, in the configured
/// mode.
fn label_candidate(
    config: &SceneConfig,
    asset: &ObjectAsset,
    human_down: &Mesh,
    human_full: &Mesh,
    object: &ObjectParams,
    object_down: &Mesh,
) -> Result<(ContactMap, ContactMap), SceneError> {
    match config.contact_mode {
        ContactMode::VertexVertex => {
            label_contact(human_down, object_down, config.contact_threshold)
        }
        ContactMode::PointToSurface => {
            let object_full = object_forward(&asset.full, object);
            label_contact_surface(
                human_down,
                human_full,
                object_down,
                &object_full,
                config.contact_threshold,
            )
        }
    }
}

fn labels_clear(
    config: &SceneConfig,
    asset: &ObjectAsset,
    human_down: &Mesh,
    human_full: &Mesh,
    object: &ObjectParams,
    object_down: &Mesh,
) -> Result<bool, SceneError> {
    let (ch, co) = label_candidate(config, asset, human_down, human_full, object, object_down)?;
    Ok(ch.is_all_clear() && co.is_all_clear())
}

/// Accepts the placement if it already touches; otherwise pulls the object
/// along the nearest-pair direction until that pair sits at 40% of the
/// contact threshold, then re-checks. Returns whether contact was achieved
/// (with `params` updated to the accepted pose).
fn touch_or_pull(
    config: &SceneConfig,
    asset: &ObjectAsset,
    human_down: &Mesh,
    human_full: &Mesh,
    params: &mut ObjectParams,
    object_down: Mesh,
) -> Result<bool, SceneError> {
    let (ch, co) = label_candidate(config, asset, human_down, human_full, params, &object_down)?;
    if !(ch.is_all_clear() && co.is_all_clear()) {
        return Ok(true);
    }
    let (hi, oi) = nearest_pair(&human_down.vertices, &object_down.vertices);
    let gap = human_down.vertices[hi] - object_down.vertices[oi];
    let d = gap.norm();
    if d <= 0.0 {
        return Ok(true);
    }
    let target = 0.4 * config.contact_threshold;
    let pulled = ObjectParams {
        rotation: params.rotation,
        translation: params.translation + gap * (1.0 - target / d),
    };
    if !clears_camera(&asset.full, &pulled) {
        return Ok(false);
    }
    let pulled_down = posed_down(asset, &pulled);
    let (ch, co) = label_candidate(config, asset, human_down, human_full, &pulled, &pulled_down)?;
    if ch.is_all_clear() || co.is_all_clear() {
        return Ok(false);
    }
    *params = pulled;
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{raster_index, CH_MASK_HUMAN, CH_MASK_OBJECT};

    fn assets_and_config() -> (SceneAssets, SceneConfig) {
        let config = SceneConfig::default();
        let assets = SceneAssets::build(&config).unwrap();
        (assets, config)
    }

    #[test]
    fn default_config_validates() {
        SceneConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs_name_the_offending_field() {
        let mut c = SceneConfig::default();
        c.contact_fraction = 1.5;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("contact_fraction"), "{msg}");

        let mut c = SceneConfig::default();
        c.contact_threshold = 0.0;
        assert!(c.validate().unwrap_err().to_string().contains("contact_threshold"));

        let mut c = SceneConfig::default();
        c.categories.clear();
        assert!(c.validate().unwrap_err().to_string().contains("categories"));

        let mut c = SceneConfig::default();
        c.depth_range = (0.5, 3.0);
        assert!(c.validate().unwrap_err().to_string().contains("depth_range"));

        let mut c = SceneConfig::default();
        c.min_clearance = 0.01;
        assert!(c.validate().unwrap_err().to_string().contains("min_clearance"));
    }

    #[test]
    fn config_json_round_trips_and_fills_defaults() {
        let full: SceneConfig = serde_json::from_str(
            &serde_json::to_string(&SceneConfig::default()).unwrap(),
        )
        .unwrap();
        assert_eq!(full, SceneConfig::default());
        // A partial config picks up defaults for everything unspecified.
        let partial: SceneConfig = serde_json::from_str(r#"{"contact_fraction": 1.0}"#).unwrap();
        assert_eq!(partial.contact_fraction, 1.0);
        assert_eq!(partial.raster_height, 64);
        assert_eq!(partial.categories, SceneConfig::default().categories);
    }

    #[test]
    fn zero_contact_fraction_gives_empty_maps() {
        let (assets, mut config) = assets_and_config();
        config.contact_fraction = 0.0;
        let samples = generate_samples(&assets, &config, 11, 6).unwrap();
        for s in &samples {
            assert!(s.contact_human.is_all_clear());
            assert!(s.contact_object.is_all_clear());
        }
    }

    #[test]
    fn unit_contact_fraction_always_touches() {
        let (assets, mut config) = assets_and_config();
        config.contact_fraction = 1.0;
        let samples = generate_samples(&assets, &config, 23, 6).unwrap();
        for s in &samples {
            assert!(s.contact_human.contact_count() >= 1);
            assert!(s.contact_object.contact_count() >= 1);
            // Reciprocity: contact is a property of the pair.
            assert_eq!(s.contact_human.is_all_clear(), s.contact_object.is_all_clear());
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let (assets, config) = assets_and_config();
        let a = sample_scene(&assets, &config, 99).unwrap();
        let b = sample_scene(&assets, &config, 99).unwrap();
        assert_eq!(a, b);
        let sa = build_sample(&assets, &config, &a).unwrap();
        let sb = build_sample(&assets, &config, &b).unwrap();
        assert_eq!(sa, sb);
        // Bitwise, not just approximately: check a few raw float bits.
        for (x, y) in sa.raster.iter().zip(&sb.raster) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn different_seeds_differ() {
        let (assets, config) = assets_and_config();
        let a = sample_scene(&assets, &config, 1).unwrap();
        let b = sample_scene(&assets, &config, 2).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn oversized_object_exhausts_contact_placement() {
        let (_, mut config) = assets_and_config();
        // A 5 m ball can never keep the camera clearance from inside the
        // working volume, so every attempt is rejected.
        config.categories = vec![ObjectKind::Ball { r: 5.0 }];
        config.contact_fraction = 1.0;
        let assets = SceneAssets::build(&config).unwrap();
        let err = sample_scene(&assets, &config, 0).unwrap_err();
        assert_eq!(err.to_string(), "contact placement failed");

        config.contact_fraction = 0.0;
        let err = sample_scene(&assets, &config, 0).unwrap_err();
        assert_eq!(err.to_string(), "separation placement failed");
    }

    #[test]
    fn generated_meshes_keep_camera_clearance() {
        let (assets, config) = assets_and_config();
        for seed in [3, 4, 5] {
            let scene = sample_scene(&assets, &config, seed).unwrap();
            let posed = lbs_forward(&assets.body, &scene.body).unwrap();
            let object = object_forward(
                &assets.object_asset(&scene.category).unwrap().full,
                &scene.object,
            );
            for v in posed.vertices.iter().chain(&object.vertices) {
                assert!(v.z > MIN_CAMERA_CLEARANCE, "vertex at z = {}", v.z);
            }
        }
    }

    #[test]
    fn samples_have_declared_shapes_and_binary_channels() {
        let (assets, config) = assets_and_config();
        let samples = generate_samples(&assets, &config, 7, 3).unwrap();
        for s in &samples {
            assert_eq!(s.raster_shape, [CHANNELS, 64, 64]);
            assert_eq!(s.raster.len(), CHANNELS * 64 * 64);
            assert!(s.raster.iter().all(|v| v.is_finite()));
            assert_eq!(s.human.vertices.len(), config.human_vertices);
            assert_eq!(s.object.vertices.len(), config.object_vertices);
            assert_eq!(s.contact_human.len(), config.human_vertices);
            assert_eq!(s.contact_object.len(), config.object_vertices);
            for m in [&s.contact_human, &s.contact_object] {
                assert!(m.values.iter().all(|&v| v == 0.0 || v == 1.0));
            }
            for c in [CH_MASK_HUMAN, CH_MASK_OBJECT] {
                for y in 0..64 {
                    for x in 0..64 {
                        let v = s.raster[raster_index(c, y, x, 64, 64)];
                        assert!(v == 0.0 || v == 1.0);
                    }
                }
            }
            // The human must actually be visible in the default volume.
            let human_px: f32 = (0..64 * 64)
                .map(|p| s.raster[CH_MASK_HUMAN * 64 * 64 + p])
                .sum();
            assert!(human_px > 50.0, "human silhouette too small: {human_px}");
        }
    }

    #[test]
    fn unknown_category_is_an_error() {
        let (assets, config) = assets_and_config();
        let mut scene = sample_scene(&assets, &config, 0).unwrap();
        scene.category = ObjectKind::Ball { r: 0.123 };
        let err = build_sample(&assets, &config, &scene).unwrap_err();
        assert!(err.to_string().contains("unknown object category"));
    }

    #[test]
    fn surface_mode_also_generates_contact() {
        let (_, mut config) = assets_and_config();
        config.contact_mode = ContactMode::PointToSurface;
        config.contact_fraction = 1.0;
        let assets = SceneAssets::build(&config).unwrap();
        let samples = generate_samples(&assets, &config, 31, 2).unwrap();
        for s in &samples {
            assert!(s.contact_human.contact_count() >= 1);
            assert!(s.contact_object.contact_count() >= 1);
        }
    }

    #[test]
    fn scene_json_round_trips_exactly() {
        let (assets, config) = assets_and_config();
        let scene = sample_scene(&assets, &config, 5).unwrap();
        let text = serde_json::to_string_pretty(&scene).unwrap();
        let back: Scene = serde_json::from_str(&text).unwrap();
        assert_eq!(back, scene);
    }

    #[test]
    fn pelvis_lands_inside_the_configured_volume() {
        let (assets, config) = assets_and_config();
        for seed in 0..8 {
            let scene = sample_scene(&assets, &config, seed).unwrap();
            let posed = lbs_forward(&assets.body, &scene.body).unwrap();
            let pelvis = posed.joints[PELVIS];
            assert!(pelvis.x.abs() <= config.lateral_range + 1e-12);
            assert!(pelvis.y.abs() <= config.vertical_range + 1e-12);
            assert!(pelvis.z >= config.depth_range.0 - 1e-12);
            assert!(pelvis.z <= config.depth_range.1 + 1e-12);
        }
    }
}
