//! The full pipeline: raster in, initial meshes, contact, refined meshes
//! out. [`Model::forward`] builds the differentiable graph for one sample;
//! [`Model::infer`] wraps it and extracts plain meshes and contact maps.

use crate::backbone::backbone;
use crate::config::{MaskMode, ModelConfig};
use crate::contact::{mask_row, ContactFormer};
use crate::features::{reduce_feature_map, vertex_features, HeatmapScale};
use crate::initial::{initial_human, initial_object};
use crate::refine::CrFormer;
use crate::ModelError;
use conrec_body::template::PELVIS;
use conrec_body::{BodyParams, ObjectParams};
use conrec_geom::Mesh;
use conrec_scene::{ContactMap, Sample, SceneAssets, SceneConfig};
use conrec_tensor::store::{Binder, ParamStore};
use conrec_tensor::{Graph, Var};
use nalgebra::{Point3, Vector3};

/// Graph handles for every stage output of one sample's forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardPass {
    /// Predicted body parameters, (3K+3, 1).
    pub theta: Var,
    /// Predicted object parameters, (6, 1).
    pub object_params: Var,
    /// Soft-argmax joints in heatmap units, (3, K).
    pub joints_heatmap: Var,
    /// Posed joints in world space, (3, K).
    pub joints_world: Var,
    /// Contact probability rows, (1, V_h) and (1, V_o).
    pub contact_human: Var,
    pub contact_object: Var,
    /// Initial meshes, (3, V_h) and (3, V_o).
    pub initial_human: Var,
    pub initial_object: Var,
    /// Refined meshes, same shapes.
    pub refined_human: Var,
    pub refined_object: Var,
}

/// Plain-data result of running the pipeline on one sample.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub human_initial: Mesh,
    pub object_initial: Mesh,
    pub human_refined: Mesh,
    pub object_refined: Mesh,
    pub contact_human: ContactMap,
    pub contact_object: ContactMap,
    pub body: BodyParams,
    pub object: ObjectParams,
}

/// A configured pipeline bound to one set of scene assets. The bases place
/// both template meshes on the camera axis at the center of the configured
/// depth range, so the zero-initialized heads start from a plausible scene.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub scene_config: SceneConfig,
    pub assets: SceneAssets,
    pub human_base: Vector3<f64>,
    pub object_base: Vector3<f64>,
}

impl Model {
    pub fn new(config: ModelConfig, scene_config: SceneConfig) -> Result<Model, ModelError> {
        config.validate()?;
        scene_config.validate()?;
        for (axis, extent) in [
            ("raster_height", scene_config.raster_height),
            ("raster_width", scene_config.raster_width),
        ] {
            if crate::backbone::backbone_extent(extent).is_none() {
                return Err(ModelError::Config(format!(
                    "{axis} = {extent} does not divide evenly through the backbone strides"
                )));
            }
        }
        let assets = SceneAssets::build(&scene_config)?;
        let depth_center = (scene_config.depth_range.0 + scene_config.depth_range.1) / 2.0;
        let object_base = Vector3::new(0.0, 0.0, depth_center);
        let human_base = object_base - assets.body.joints[PELVIS].coords;
        Ok(Model {
            config,
            scene_config,
            assets,
            human_base,
            object_base,
        })
    }

    /// Builds the forward graph for one sample under `b`'s store and graph.
    pub fn forward(&self, b: &mut Binder, sample: &Sample) -> Result<ForwardPass, ModelError> {
        let want_shape = [
            5,
            self.scene_config.raster_height,
            self.scene_config.raster_width,
        ];
        if sample.raster_shape != want_shape {
            return Err(ModelError::Data(format!(
                "sample raster shape {:?} does not match the configured {:?}",
                sample.raster_shape, want_shape
            )));
        }
        let asset = self.assets.object_asset(&sample.scene.category)?;
        let camera = sample.scene.camera;

        let g = b.graph();
        let raster = g.input(
            &want_shape.to_vec(),
            sample.raster.iter().map(|&v| v as f64).collect(),
        );
        let bb = backbone(b, &self.config, raster)?;
        let ih = initial_human(
            b,
            &self.config,
            &self.assets.body,
            &self.assets.human_keep,
            &bb,
            self.human_base,
        )?;
        let io = initial_object(b, &self.config, &asset.down, &bb, self.object_base)?;

        let reduced = reduce_feature_map(b, &self.config, &bb)?;
        let scale = HeatmapScale::new(
            (want_shape[1], want_shape[2]),
            (bb.height, bb.width),
        );
        let g = b.graph();
        let feat_h = vertex_features(g, reduced, ih.mesh, &camera, scale)?;
        let feat_o = vertex_features(g, reduced, io.mesh, &camera, scale)?;

        let cf = ContactFormer::new(&self.config);
        let contact = cf.forward(b, feat_h, feat_o)?;

        let g = b.graph();
        let (mask_h, mask_o) = match self.config.mask_mode {
            MaskMode::Predicted => (
                Some(mask_row(g, &g.values(contact.human), self.config.mask_threshold)),
                Some(mask_row(g, &g.values(contact.object), self.config.mask_threshold)),
            ),
            MaskMode::TeacherForced => {
                let v_h = self.assets.human_keep.len();
                let v_o = asset.down.vertices.len();
                if sample.contact_human.len() != v_h || sample.contact_object.len() != v_o {
                    return Err(ModelError::Data(format!(
                        "sample contact maps have {} / {} entries, assets have {} / {} vertices",
                        sample.contact_human.len(),
                        sample.contact_object.len(),
                        v_h,
                        v_o
                    )));
                }
                (
                    Some(mask_row(g, &sample.contact_human.values, self.config.mask_threshold)),
                    Some(mask_row(g, &sample.contact_object.values, self.config.mask_threshold)),
                )
            }
            MaskMode::None => (None, None),
        };

        let cr = CrFormer::new(&self.config);
        let refined = cr.forward(b, feat_h, feat_o, mask_h, mask_o, ih.mesh, io.mesh)?;

        Ok(ForwardPass {
            theta: ih.theta,
            object_params: io.params,
            joints_heatmap: ih.joints_heatmap,
            joints_world: ih.joints_world,
            contact_human: contact.human,
            contact_object: contact.object,
            initial_human: ih.mesh,
            initial_object: io.mesh,
            refined_human: refined.human,
            refined_object: refined.object,
        })
    }

    /// Runs the pipeline on one sample and extracts plain data.
    pub fn infer(&self, store: &mut ParamStore, sample: &Sample) -> Result<PipelineOutput, ModelError> {
        let g = Graph::new();
        let mut b = Binder::new(store, &g);
        let fp = self.forward(&mut b, sample)?;
        let asset = self.assets.object_asset(&sample.scene.category)?;
        let human_edges = &self.assets.human_down.edges;
        let object_edges = &asset.down.edges;

        let body = BodyParams::from_flat(&g.values(fp.theta))?;
        let object = ObjectParams::from_flat(&g.values(fp.object_params))?;
        Ok(PipelineOutput {
            human_initial: mesh_from_columns(&g, fp.initial_human, human_edges),
            object_initial: mesh_from_columns(&g, fp.initial_object, object_edges),
            human_refined: mesh_from_columns(&g, fp.refined_human, human_edges),
            object_refined: mesh_from_columns(&g, fp.refined_object, object_edges),
            contact_human: ContactMap::probability(g.values(fp.contact_human))
                .map_err(ModelError::from)?,
            contact_object: ContactMap::probability(g.values(fp.contact_object))
                .map_err(ModelError::from)?,
            body,
            object,
        })
    }
}

/// Reads a `(3, V)` graph value back into an edge mesh.
pub fn mesh_from_columns(g: &Graph, verts: Var, edges: &[[usize; 2]]) -> Mesh {
    let vals = g.values(verts);
    let n = g.shape(verts)[1];
    let vertices = (0..n)
        .map(|i| Point3::new(vals[i], vals[n + i], vals[2 * n + i]))
        .collect();
    Mesh::from_edges(vertices, edges.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::fixture;
    use conrec_body::lbs_forward;

    #[test]
    fn fresh_model_outputs_templates_at_their_bases() {
        let (_, scene_cfg, sample) = fixture(40);
        let model = Model::new(ModelConfig::default(), scene_cfg).unwrap();
        let mut store = ParamStore::new(0);
        let out = model.infer(&mut store, &sample).unwrap();

        // Initial human: rest template posed at the human base.
        let mut expect = BodyParams::zeros(model.assets.body.joint_count());
        expect.translation = model.human_base;
        let posed = lbs_forward(&model.assets.body, &expect).unwrap();
        for (col, &src) in model.assets.human_keep.iter().enumerate() {
            assert_eq!(out.human_initial.vertices[col], posed.vertices[src]);
        }
        // Refinement starts as the identity.
        assert_eq!(out.human_refined.vertices, out.human_initial.vertices);
        assert_eq!(out.object_refined.vertices, out.object_initial.vertices);
        // Zeroed contact heads sit at one half.
        for v in out
            .contact_human
            .values
            .iter()
            .chain(&out.contact_object.values)
        {
            assert_eq!(*v, 0.5);
        }
        // Object template at the object base.
        let asset = model.assets.object_asset(&sample.scene.category).unwrap();
        for (got, tpl) in out.object_initial.vertices.iter().zip(&asset.down.vertices) {
            assert_eq!(got.coords, tpl.coords + model.object_base);
        }
        assert_eq!(out.body.translation, model.human_base);
        assert_eq!(out.object.translation, model.object_base);
    }

    #[test]
    fn inference_is_deterministic_for_a_fixed_store_seed() {
        let (_, scene_cfg, sample) = fixture(41);
        let model = Model::new(ModelConfig::default(), scene_cfg).unwrap();
        let mut s1 = ParamStore::new(123);
        let mut s2 = ParamStore::new(123);
        let a = model.infer(&mut s1, &sample).unwrap();
        let b = model.infer(&mut s2, &sample).unwrap();
        assert_eq!(a.human_refined.vertices, b.human_refined.vertices);
        assert_eq!(a.object_refined.vertices, b.object_refined.vertices);
        assert_eq!(a.contact_human.values, b.contact_human.values);
        assert_eq!(a.body.rotations, b.body.rotations);
    }

    #[test]
    fn mismatched_raster_shape_is_rejected() {
        let (_, scene_cfg, sample) = fixture(42);
        let mut small = scene_cfg.clone();
        small.raster_height = 28;
        small.raster_width = 28;
        let model = Model::new(ModelConfig::default(), small).unwrap();
        let mut store = ParamStore::new(0);
        let err = model.infer(&mut store, &sample).unwrap_err();
        assert!(matches!(err, ModelError::Data(_)));
        assert!(err.to_string().contains("raster shape"));
    }

    #[test]
    fn raster_size_must_thread_through_the_backbone() {
        let mut scene_cfg = SceneConfig::default();
        scene_cfg.raster_height = 65;
        scene_cfg.raster_width = 65;
        let err = Model::new(ModelConfig::default(), scene_cfg).unwrap_err();
        assert!(matches!(err, ModelError::Config(_)));
        assert!(err.to_string().contains("raster_height"));
    }

    #[test]
    fn unknown_object_category_is_reported() {
        let (_, scene_cfg, sample) = fixture(43);
        let mut narrowed = scene_cfg.clone();
        narrowed.categories = vec![conrec_body::ObjectKind::Ball { r: 0.19 }];
        let model = Model::new(ModelConfig::default(), narrowed).unwrap();
        let mut store = ParamStore::new(0);
        if model
            .assets
            .object_asset(&sample.scene.category)
            .is_ok()
        {
            // The drawn sample happened to be a ball of that size; nothing
            // to test in that case.
            return;
        }
        let err = model.infer(&mut store, &sample).unwrap_err();
        assert!(err.to_string().contains("unknown object category"));
    }
}
