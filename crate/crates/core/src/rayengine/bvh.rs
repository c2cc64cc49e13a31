//! Bounding-volume hierarchy over mesh triangles for nearest-hit queries.

use crate::geom::{ray_triangle, Aabb, Vec3};
use crate::scene::TriMesh;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, first: usize, count: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// Triangle ids in leaf order.
    order: Vec<usize>,
    corners: Vec<[Vec3; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub triangle: usize,
}

impl Bvh {
    pub fn build(mesh: &TriMesh) -> Self {
        let corners: Vec<[Vec3; 3]> = (0..mesh.triangle_count())
            .map(|t| mesh.corners(t).map(|v| *v))
            .collect();
        let boxes: Vec<Aabb> = corners
            .iter()
            .map(|c| {
                let mut b = Aabb::empty();
                c.iter().for_each(|v| b.grow(v));
                b
            })
            .collect();
        let mut order: Vec<usize> = (0..corners.len()).collect();
        let mut nodes = Vec::new();
        build_node(&boxes, &mut order, 0, corners.len(), &mut nodes);
        Bvh { nodes, order, corners }
    }

    /// Nearest triangle hit along `dir` closer than `t_max`.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<Hit> {
        let inv = dir.map(|d| 1.0 / d);
        let mut best: Option<Hit> = None;
        let mut limit = t_max;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.bounds().ray_entry(origin, &inv, limit).is_none() {
                continue;
            }
            match *node {
                Node::Leaf { first, count, .. } => {
                    for &t in &self.order[first..first + count] {
                        let [a, b, c] = &self.corners[t];
                        if let Some(d) = ray_triangle(origin, dir, a, b, c) {
                            // lowest triangle id wins exact ties
                            let better = match best {
                                None => d < limit,
                                Some(h) => d < h.distance || (d == h.distance && t < h.triangle),
                            };
                            if better {
                                best = Some(Hit {
                                    distance: d,
                                    triangle: t,
                                });
                                limit = d;
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        best
    }
}

fn build_node(boxes: &[Aabb], order: &mut [usize], first: usize, count: usize, nodes: &mut Vec<Node>) -> usize {
    let slice = &mut order[first..first + count];
    let bounds = slice.iter().fold(Aabb::empty(), |acc, &t| acc.union(&boxes[t]));
    let id = nodes.len();
    if count <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, first, count });
        return id;
    }
    let ext = bounds.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = count / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        let ca = boxes[a].center()[axis];
        let cb = boxes[b].center()[axis];
        ca.total_cmp(&cb).then(a.cmp(&b))
    });
    nodes.push(Node::Leaf { bounds, first, count });
    let left = build_node(boxes, order, first, mid, nodes);
    let right = build_node(boxes, order, first + mid, count - mid, nodes);
    nodes[id] = Node::Inner { bounds, left, right };
    id
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_brute_force() {
        let mut mesh = TriMesh::cuboid(Vec3::zeros(), Vec3::new(5.0, 4.0, 3.0), "wall").unwrap();
        mesh.append(&TriMesh::cuboid(Vec3::new(1.0, 1.0, 0.0), Vec3::new(2.0, 1.5, 0.8), "table").unwrap());
        mesh.append(&TriMesh::cuboid(Vec3::new(3.0, 2.0, 0.0), Vec3::new(3.5, 3.5, 2.0), "shelf").unwrap());
        let bvh = Bvh::build(&mesh);
        let o = Vec3::new(2.5, 2.0, 1.5);
        for k in 0..500 {
            let d = crate::geom::uniform_sphere((k as f64 + 0.5) / 500.0, (k as f64 * 0.618_033_988_7).fract());
            let brute = (0..mesh.triangle_count())
                .filter_map(|t| {
                    let [a, b, c] = mesh.corners(t);
                    ray_triangle(&o, &d, a, b, c).map(|x| (x, t))
                })
                .min_by(|a, b| a.0.total_cmp(&b.0));
            let hit = bvh.intersect(&o, &d, f64::INFINITY).unwrap();
            assert!((hit.distance - brute.unwrap().0).abs() < 1e-12);
        }
    }
}
