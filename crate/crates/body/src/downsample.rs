use crate::BodyError;
use conrec_geom::Mesh;
use std::collections::BTreeSet;

/// Farthest-point sampling of `target` vertex indices.
///
/// Starts from vertex 0 and greedily adds the vertex farthest from the
/// current selection; ties break toward the lowest index, so the result is
/// fully deterministic. Indices are returned in selection order.
pub fn farthest_point_indices(mesh: &Mesh, target: usize) -> Result<Vec<usize>, BodyError> {
    let n = mesh.vertices.len();
    if target == 0 || target > n {
        return Err(BodyError::DownsampleTarget {
            target,
            available: n,
        });
    }
    let mut selected = Vec::with_capacity(target);
    // Squared distance from each vertex to the nearest selected one.
    let mut best = vec![f64::INFINITY; n];
    let mut latest = 0usize;
    selected.push(0);
    while selected.len() < target {
        let p = mesh.vertices[latest];
        let mut far_idx = 0;
        let mut far_d = -1.0;
        for (i, (v, b)) in mesh.vertices.iter().zip(best.iter_mut()).enumerate() {
            let d = (v - p).norm_squared();
            if d < *b {
                *b = d;
            }
            if *b > far_d {
                far_d = *b;
                far_idx = i;
            }
        }
        selected.push(far_idx);
        latest = far_idx;
    }
    Ok(selected)
}

/// Downsamples a mesh to `target` vertices by farthest-point sampling,
/// reconnecting edges through dropped neighbors.
///
/// Kept vertices are renumbered in ascending original-index order. Two kept
/// vertices are joined when the original mesh joins them directly, or joins
/// them through exactly one dropped vertex (a 2-hop path). Faces are not
/// carried over; the result is an edge mesh.
///
/// Returns the downsampled mesh and the kept original indices (ascending).
pub fn downsample_mesh(mesh: &Mesh, target: usize) -> Result<(Mesh, Vec<usize>), BodyError> {
    let mut kept = farthest_point_indices(mesh, target)?;
    kept.sort_unstable();

    let n = mesh.vertices.len();
    let mut new_index = vec![usize::MAX; n];
    for (ni, &oi) in kept.iter().enumerate() {
        new_index[oi] = ni;
    }

    // Adjacency of the original mesh.
    let mut adj = vec![Vec::new(); n];
    for &[a, b] in &mesh.edges {
        adj[a].push(b);
        adj[b].push(a);
    }

    let mut edges: BTreeSet<[usize; 2]> = BTreeSet::new();
    let mut add = |a: usize, b: usize| {
        if a != b {
            edges.insert(if a < b { [a, b] } else { [b, a] });
        }
    };
    for &[a, b] in &mesh.edges {
        let (na, nb) = (new_index[a], new_index[b]);
        if na != usize::MAX && nb != usize::MAX {
            add(na, nb);
        }
    }
    // 2-hop reconnection: kept -- dropped -- kept becomes a direct edge.
    for (mid, neighbors) in adj.iter().enumerate() {
        if new_index[mid] != usize::MAX {
            continue;
        }
        for (i, &a) in neighbors.iter().enumerate() {
            if new_index[a] == usize::MAX {
                continue;
            }
            for &b in &neighbors[i + 1..] {
                if new_index[b] != usize::MAX {
                    add(new_index[a], new_index[b]);
                }
            }
        }
    }

    let vertices = kept.iter().map(|&i| mesh.vertices[i]).collect();
    let down = Mesh::from_edges(vertices, edges.into_iter().collect());
    Ok((down, kept))
}
