use crate::Mesh;
use nalgebra::Point3;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Errors from OBJ reading or writing.
#[derive(Debug)]
pub enum ObjError {
    Io(std::io::Error),
    /// A malformed line; `line` is 1-based.
    Parse { line: usize, msg: String },
}

impl fmt::Display for ObjError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjError::Io(e) => write!(f, "obj io error: {e}"),
            ObjError::Parse { line, msg } => write!(f, "obj parse error at line {line}: {msg}"),
        }
    }
}

impl std::error::Error for ObjError {}

impl From<std::io::Error> for ObjError {
    fn from(e: std::io::Error) -> ObjError {
        ObjError::Io(e)
    }
}

/// Serializes a mesh to the OBJ subset used by this project: `v` lines for
/// vertices, `f` lines (1-based) for triangles, and — only when the mesh has
/// no faces — `l` lines for its explicit edges.
///
/// Coordinates are written with Rust's shortest round-trip float formatting,
/// so `parse_obj(to_obj_string(m))` reproduces the vertex buffer bit for bit.
pub fn to_obj_string(mesh: &Mesh) -> String {
    let mut out = String::new();
    for v in &mesh.vertices {
        out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    if mesh.faces.is_empty() {
        for &[a, b] in &mesh.edges {
            out.push_str(&format!("l {} {}\n", a + 1, b + 1));
        }
    } else {
        for &[a, b, c] in &mesh.faces {
            out.push_str(&format!("f {} {} {}\n", a + 1, b + 1, c + 1));
        }
    }
    out
}

/// Parses the OBJ subset written by [`to_obj_string`].
///
/// `v`, `f`, and `l` records are honored; comments and unknown keywords are
/// skipped. Face corners may carry `/texture/normal` suffixes (other tools
/// emit them), in which case only the vertex index is used. If the file has
/// faces, the edge list is derived from them; otherwise `l` records supply
/// the edges.
pub fn parse_obj(text: &str) -> Result<Mesh, ObjError> {
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut edges: Vec<[usize; 2]> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let keyword = parts.next().unwrap();
        let rest: Vec<&str> = parts.collect();
        match keyword {
            "v" => {
                if rest.len() < 3 {
                    return Err(parse_err(lineno, "vertex needs 3 coordinates"));
                }
                let mut c = [0.0; 3];
                for (k, tok) in rest[..3].iter().enumerate() {
                    c[k] = tok
                        .parse::<f64>()
                        .map_err(|_| parse_err(lineno, &format!("bad coordinate {tok:?}")))?;
                }
                vertices.push(Point3::new(c[0], c[1], c[2]));
            }
            "f" => {
                if rest.len() != 3 {
                    return Err(parse_err(
                        lineno,
                        &format!("only triangular faces supported, got {} corners", rest.len()),
                    ));
                }
                let mut idx = [0usize; 3];
                for (k, tok) in rest.iter().enumerate() {
                    idx[k] = parse_index(tok, vertices.len(), lineno)?;
                }
                faces.push(idx);
            }
            "l" => {
                if rest.len() != 2 {
                    return Err(parse_err(lineno, "edge needs exactly 2 indices"));
                }
                let a = parse_index(rest[0], vertices.len(), lineno)?;
                let b = parse_index(rest[1], vertices.len(), lineno)?;
                edges.push([a, b]);
            }
            // Normals, texture coords, groups, materials: harmless, skip.
            _ => {}
        }
    }

    if faces.is_empty() {
        Ok(Mesh::from_edges(vertices, edges))
    } else {
        Ok(Mesh::from_faces(vertices, faces))
    }
}

fn parse_index(token: &str, n_vertices: usize, lineno: usize) -> Result<usize, ObjError> {
    // "7", "7/2", and "7/2/5" all refer to vertex 7.
    let head = token.split('/').next().unwrap();
    let one_based: usize = head
        .parse()
        .map_err(|_| parse_err(lineno, &format!("bad index {token:?}")))?;
    if one_based == 0 || one_based > n_vertices {
        return Err(parse_err(
            lineno,
            &format!("index {one_based} out of range (have {n_vertices} vertices)"),
        ));
    }
    Ok(one_based - 1)
}

fn parse_err(line: usize, msg: &str) -> ObjError {
    ObjError::Parse {
        line,
        msg: msg.to_string(),
    }
}

/// Writes a mesh to `path` atomically (temp file in the same directory, then
/// rename), so readers never observe a half-written file.
pub fn save_obj(path: &Path, mesh: &Mesh) -> Result<(), ObjError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(to_obj_string(mesh).as_bytes())?;
    tmp.persist(path).map_err(|e| ObjError::Io(e.error))?;
    Ok(())
}

/// Reads a mesh from an OBJ file; see [`parse_obj`] for the accepted subset.
pub fn load_obj(path: &Path) -> Result<Mesh, ObjError> {
    parse_obj(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn face_mesh_round_trips_bitwise() {
        let mesh = Mesh::from_faces(
            vec![
                Point3::new(0.1, 0.2, 0.30000000000000004),
                Point3::new(-1.5, 2.25, 1.0 / 3.0),
                Point3::new(0.0, -0.0, 1e-17),
            ],
            vec![[0, 1, 2]],
        );
        let text = to_obj_string(&mesh);
        let back = parse_obj(&text).unwrap();
        for (a, b) in mesh.vertices.iter().zip(&back.vertices) {
            assert_eq!(a.x.to_bits(), b.x.to_bits());
            assert_eq!(a.y.to_bits(), b.y.to_bits());
            assert_eq!(a.z.to_bits(), b.z.to_bits());
        }
        assert_eq!(mesh.faces, back.faces);
        assert_eq!(mesh.edges, back.edges);
    }

    #[test]
    fn faceless_mesh_keeps_edges_via_l_records() {
        let mesh = Mesh::from_edges(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(2.0, 0.0, 0.0),
            ],
            vec![[0, 1], [1, 2]],
        );
        let text = to_obj_string(&mesh);
        assert!(text.contains("l 1 2"));
        let back = parse_obj(&text).unwrap();
        assert_eq!(back, mesh);
    }

    #[test]
    fn slashed_face_corners_are_accepted() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3\n";
        let mesh = parse_obj(text).unwrap();
        assert_eq!(mesh.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn comments_and_unknown_keywords_are_skipped() {
        let text = "# header\no thing\nvn 0 0 1\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
        assert_eq!(parse_obj(text).unwrap().vertices.len(), 3);
    }

    #[test]
    fn bad_input_is_reported_with_line_numbers() {
        let quad = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        match parse_obj(quad).unwrap_err() {
            ObjError::Parse { line, msg } => {
                assert_eq!(line, 5);
                assert!(msg.contains("triangular"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let out_of_range = "v 0 0 0\nf 1 2 3\n";
        assert!(matches!(
            parse_obj(out_of_range).unwrap_err(),
            ObjError::Parse { line: 2, .. }
        ));
        let zero_index = "v 0 0 0\nv 1 0 0\nl 0 1\n";
        assert!(parse_obj(zero_index).is_err());
    }

    #[test]
    fn save_and_load_through_the_filesystem() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh.obj");
        let mesh = Mesh::from_faces(
            vec![
                Point3::new(0.25, 0.5, 1.0),
                Point3::new(1.0, 0.0, 2.0),
                Point3::new(0.0, 1.0, 3.0),
            ],
            vec![[0, 1, 2]],
        );
        save_obj(&path, &mesh).unwrap();
        assert_eq!(load_obj(&path).unwrap(), mesh);
    }
}
