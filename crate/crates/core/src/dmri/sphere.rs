use std::collections::HashMap;

use nalgebra::Vector3;

/// Golden-angle spiral on the upper hemisphere (`z > 0`).
///
/// Diffusion measurements are antipodally symmetric, so spreading points
/// over one hemisphere avoids near-duplicate axes.
pub fn fibonacci_hemisphere(n: usize) -> Vec<Vector3<f64>> {
    spiral(n, |i| 1.0 - (i as f64 + 0.5) / n as f64)
}

/// Golden-angle spiral over the whole sphere; near-uniform cells of equal area.
pub fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    spiral(n, |i| 1.0 - 2.0 * (i as f64 + 0.5) / n as f64)
}

fn spiral(n: usize, z_of: impl Fn(usize) -> f64) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = z_of(i);
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * (i as f64 + 0.5);
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Sphere tessellation with neighbour lists.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    pub vertices: Vec<Vector3<f64>>,
    pub neighbors: Vec<Vec<usize>>,
}

impl SphereGrid {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Keeps one vertex of each antipodal pair. Neighbours of a kept vertex
    /// are the representatives of its neighbours on the full sphere.
    pub fn hemisphere(&self) -> SphereGrid {
        let key = |v: &Vector3<f64>| {
            let r = |x: f64| (x * 1e9).round() as i64;
            (r(v.x), r(v.y), r(v.z))
        };
        let lookup: HashMap<_, usize> = self.vertices.iter().enumerate().map(|(i, v)| (key(v), i)).collect();
        let antipode: Vec<usize> = self
            .vertices
            .iter()
            .map(|v| *lookup.get(&key(&-v)).expect("tessellation is antipodally symmetric"))
            .collect();
        let upper = |v: &Vector3<f64>| {
            v.z > 1e-12 || (v.z.abs() <= 1e-12 && (v.y > 1e-12 || (v.y.abs() <= 1e-12 && v.x > 0.0)))
        };
        let mut new_index = vec![usize::MAX; self.len()];
        let mut vertices = Vec::new();
        for (i, v) in self.vertices.iter().enumerate() {
            if upper(v) {
                new_index[i] = vertices.len();
                vertices.push(*v);
            }
        }
        let rep = |i: usize| if new_index[i] != usize::MAX { new_index[i] } else { new_index[antipode[i]] };
        let mut neighbors = vec![Vec::new(); vertices.len()];
        for (i, nbrs) in self.neighbors.iter().enumerate() {
            if new_index[i] == usize::MAX {
                continue;
            }
            let h = new_index[i];
            let mut list: Vec<usize> = nbrs.iter().map(|&j| rep(j)).filter(|&j| j != h).collect();
            list.sort_unstable();
            list.dedup();
            neighbors[h] = list;
        }
        SphereGrid { vertices, neighbors }
    }
}

/// Icosahedron subdivided `level` times by edge midpoints; `10·4^level + 2`
/// vertices.
pub fn icosphere(level: usize) -> SphereGrid {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vector3::new(p[0], p[1], p[2]).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| {
            let k = (a.min(b), a.max(b));
            *midpoints.entry(k).or_insert_with(|| {
                verts.push((verts[a] + verts[b]).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let mut neighbors = vec![Vec::new(); vertices.len()];
    for [a, b, c] in &faces {
        for (u, v) in [(*a, *b), (*b, *c), (*c, *a)] {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
        list.dedup();
    }
    SphereGrid { vertices, neighbors }
}
