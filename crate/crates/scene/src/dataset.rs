use crate::contact::{ContactMap, ContactMode};
use crate::raster::CHANNELS;
use crate::sample::{Sample, Scene, SceneConfig};
use crate::SceneError;
use conrec_geom::obj::{load_obj, save_obj, ObjError};
use std::fs;
use std::io::Write;
use std::path::Path;

pub const META_FILE: &str = "meta.json";
const FORMAT_VERSION: u32 = 1;

/// Dataset-level metadata: counts, shapes, the labeling conventions, and the
/// full generator config, so a dataset is self-describing.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub num_samples: usize,
    pub raster_shape: [usize; 3],
    pub human_vertices: usize,
    pub object_vertices: usize,
    pub contact_threshold: f64,
    pub contact_mode: ContactMode,
    pub base_seed: u64,
    pub config: SceneConfig,
}

/// Writes a dataset directory: `meta.json` plus one zero-padded subdirectory
/// per sample holding `raster.f32`, `human.obj`, `object.obj`,
/// `contact_h.f32`, `contact_o.f32`, and `params.json`.
///
/// Every file is written atomically (temp file + rename), and `meta.json` is
/// written last, so a directory with valid metadata always has complete
/// samples. Binary blobs are little-endian `f32`, row-major.
pub fn write_dataset(
    dir: &Path,
    samples: &[Sample],
    config: &SceneConfig,
    base_seed: u64,
) -> Result<(), SceneError> {
    let raster_shape = [CHANNELS, config.raster_height, config.raster_width];
    for (i, s) in samples.iter().enumerate() {
        if s.raster_shape != raster_shape {
            return Err(SceneError::Config(format!(
                "sample {i} has raster shape {:?}, config says {:?}",
                s.raster_shape, raster_shape
            )));
        }
        if s.human.vertices.len() != config.human_vertices
            || s.object.vertices.len() != config.object_vertices
        {
            return Err(SceneError::Config(format!(
                "sample {i} has {} human / {} object vertices, config says {} / {}",
                s.human.vertices.len(),
                s.object.vertices.len(),
                config.human_vertices,
                config.object_vertices
            )));
        }
    }

    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (i, s) in samples.iter().enumerate() {
        let sub = dir.join(format!("{i:06}"));
        fs::create_dir_all(&sub).map_err(|e| io_err(&sub, e))?;
        write_f32_blob(&sub.join("raster.f32"), &s.raster)?;
        save_mesh(&sub.join("human.obj"), &s.human)?;
        save_mesh(&sub.join("object.obj"), &s.object)?;
        write_f32_blob(
            &sub.join("contact_h.f32"),
            &to_f32(&s.contact_human.values),
        )?;
        write_f32_blob(
            &sub.join("contact_o.f32"),
            &to_f32(&s.contact_object.values),
        )?;
        let json = serde_json::to_vec_pretty(&s.scene)
            .expect("scene parameters always serialize");
        write_atomic(&sub.join("params.json"), &json)?;
    }

    let meta = DatasetMeta {
        format_version: FORMAT_VERSION,
        num_samples: samples.len(),
        raster_shape,
        human_vertices: config.human_vertices,
        object_vertices: config.object_vertices,
        contact_threshold: config.contact_threshold,
        contact_mode: config.contact_mode,
        base_seed,
        config: config.clone(),
    };
    let json = serde_json::to_vec_pretty(&meta).expect("meta always serializes");
    write_atomic(&dir.join(META_FILE), &json)
}

/// Reads just the metadata of a dataset directory.
pub fn read_meta(dir: &Path) -> Result<DatasetMeta, SceneError> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let meta: DatasetMeta = serde_json::from_str(&text).map_err(|e| SceneError::Meta {
        path: path.clone(),
        msg: e.to_string(),
    })?;
    if meta.format_version != FORMAT_VERSION {
        return Err(SceneError::Meta {
            path,
            msg: format!(
                "unsupported format version {} (this build reads {FORMAT_VERSION})",
                meta.format_version
            ),
        });
    }
    if meta.raster_shape[0] != CHANNELS {
        return Err(SceneError::Meta {
            path,
            msg: format!(
                "raster shape {:?} must have {CHANNELS} channels",
                meta.raster_shape
            ),
        });
    }
    Ok(meta)
}

/// Reads a dataset directory back into memory. Every payload is validated
/// against the metadata: blob lengths, vertex counts, and the binary-ness of
/// contact values, with errors naming the offending file.
pub fn read_dataset(dir: &Path) -> Result<(DatasetMeta, Vec<Sample>), SceneError> {
    let meta = read_meta(dir)?;
    let [c, h, w] = meta.raster_shape;
    let mut samples = Vec::with_capacity(meta.num_samples);
    for i in 0..meta.num_samples {
        let sub = dir.join(format!("{i:06}"));
        let raster = read_f32_blob(
            &sub.join("raster.f32"),
            c * h * w,
            &format!("{c}x{h}x{w}"),
        )?;
        let human = load_mesh(&sub.join("human.obj"), meta.human_vertices)?;
        let object = load_mesh(&sub.join("object.obj"), meta.object_vertices)?;
        let contact_human = read_contact(&sub.join("contact_h.f32"), meta.human_vertices)?;
        let contact_object = read_contact(&sub.join("contact_o.f32"), meta.object_vertices)?;
        let params_path = sub.join("params.json");
        let text = fs::read_to_string(&params_path).map_err(|e| io_err(&params_path, e))?;
        let scene: Scene = serde_json::from_str(&text).map_err(|e| SceneError::Meta {
            path: params_path,
            msg: e.to_string(),
        })?;
        samples.push(Sample {
            raster,
            raster_shape: meta.raster_shape,
            human,
            object,
            contact_human,
            contact_object,
            scene,
        });
    }
    Ok((meta, samples))
}

fn io_err(path: &Path, source: std::io::Error) -> SceneError {
    SceneError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn to_f32(values: &[f64]) -> Vec<f32> {
    values.iter().map(|&v| v as f32).collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), SceneError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

fn write_f32_blob(path: &Path, values: &[f32]) -> Result<(), SceneError> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

fn read_f32_blob(path: &Path, expected: usize, shape: &str) -> Result<Vec<f32>, SceneError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(SceneError::Blob {
            path: path.to_path_buf(),
            msg: format!("{} bytes is not a whole number of float32 values", bytes.len()),
        });
    }
    let got = bytes.len() / 4;
    if got != expected {
        return Err(SceneError::Blob {
            path: path.to_path_buf(),
            msg: format!("expected {expected} float32 values ({shape}), got {got}"),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

fn read_contact(path: &Path, expected: usize) -> Result<ContactMap, SceneError> {
    let raw = read_f32_blob(path, expected, &format!("{expected} vertices"))?;
    let mut flags = Vec::with_capacity(raw.len());
    for (i, &v) in raw.iter().enumerate() {
        if v == 0.0 {
            flags.push(false);
        } else if v == 1.0 {
            flags.push(true);
        } else {
            return Err(SceneError::Blob {
                path: path.to_path_buf(),
                msg: format!("contact value {v} at vertex {i} is not binary"),
            });
        }
    }
    Ok(ContactMap::binary(flags))
}

fn save_mesh(path: &Path, mesh: &conrec_geom::Mesh) -> Result<(), SceneError> {
    save_obj(path, mesh).map_err(|e| obj_err(path, e))
}

fn load_mesh(path: &Path, expected_vertices: usize) -> Result<conrec_geom::Mesh, SceneError> {
    let mesh = load_obj(path).map_err(|e| obj_err(path, e))?;
    if mesh.vertices.len() != expected_vertices {
        return Err(SceneError::Blob {
            path: path.to_path_buf(),
            msg: format!(
                "has {} vertices, meta says {expected_vertices}",
                mesh.vertices.len()
            ),
        });
    }
    Ok(mesh)
}

fn obj_err(path: &Path, e: ObjError) -> SceneError {
    match e {
        ObjError::Io(source) => io_err(path, source),
        parse => SceneError::Obj {
            path: path.to_path_buf(),
            source: parse,
        },
    }
}
