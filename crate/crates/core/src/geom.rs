//! Geometry primitives shared by every other module.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = Vector3<f64>;

/// Tolerance on the norm of a [`UnitVector3`].
pub const UNIT_TOL: f64 = 1e-12;

/// A direction in 3-space with Euclidean norm 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector3(Vec3);

impl UnitVector3 {
    /// Wraps `v`, checking that it is finite and unit within [`UNIT_TOL`].
    pub fn try_new(v: Vec3) -> Result<Self> {
        if !v.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("unit vector component"));
        }
        let n = v.norm();
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotUnit(n));
        }
        Ok(Self(v))
    }

    /// Normalizes `v`. Fails on zero or non-finite input.
    pub fn normalize(v: Vec3) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() {
            return Err(Error::NonFinite("vector to normalize"));
        }
        if n == 0.0 {
            return Err(Error::InvalidArgument("cannot normalize zero vector".into()));
        }
        Ok(Self(v / n))
    }

    pub fn new_normalize(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::normalize(Vec3::new(x, y, z))
    }

    pub fn z_axis() -> Self {
        Self(Vec3::z())
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }
    pub fn y(&self) -> f64 {
        self.0.y
    }
    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn as_vec(&self) -> &Vec3 {
        &self.0
    }

    pub fn into_vec(self) -> Vec3 {
        self.0
    }

    pub fn dot(&self, other: &UnitVector3) -> f64 {
        self.0.dot(&other.0)
    }
}

impl std::ops::Neg for UnitVector3 {
    type Output = UnitVector3;
    fn neg(self) -> Self::Output {
        UnitVector3(-self.0)
    }
}

/// A proper rotation of 3-space, stored as a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    /// Builds a rotation from quaternion components; the input is normalized.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(Error::InvalidArgument("quaternion must be finite and nonzero".into()));
        }
        Ok(Self(UnitQuaternion::new_normalize(q)))
    }

    /// Rotation by `angle` radians about `axis` (right-hand rule).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Result<Self> {
        let axis = UnitVector3::normalize(*axis)?;
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis.as_vec();
        Self::from_quaternion(c, s * a.x, s * a.y, s * a.z)
    }

    /// Converts a rotation matrix (orthonormal, determinant +1).
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("rotation matrix"));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "matrix is not a proper rotation (det {det})"
            )));
        }
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*m);
        Ok(Self(UnitQuaternion::from_rotation_matrix(&rot)))
    }

    /// Quaternion components as `(w, x, y, z)`.
    pub fn quaternion(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        *self.0.to_rotation_matrix().matrix()
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0.transform_vector(v)
    }

    pub fn apply_unit(&self, v: &UnitVector3) -> UnitVector3 {
        // Renormalize to keep the unit tolerance exact-ish after many compositions.
        let r = self.apply(v.as_vec());
        UnitVector3(r / r.norm())
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    /// The rotation that applies `self` first and then `next`.
    pub fn then(&self, next: &Rotation) -> Self {
        Self(next.0 * self.0)
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        self.0.angle()
    }
}

/// The minimal-angle rotation taking `v` onto the +z axis.
///
/// For `v = -z` exactly the rotation is 180 degrees about x.
pub fn rotate_to_z(v: &UnitVector3) -> Rotation {
    let v = v.as_vec();
    // v x z = (vy, -vx, 0); the rotation is about this axis by acos(vz).
    let cx = v.y;
    let cy = -v.x;
    let c2 = cx * cx + cy * cy;
    if c2 == 0.0 {
        return if v.z > 0.0 {
            Rotation::identity()
        } else {
            Rotation(UnitQuaternion::new_unchecked(Quaternion::new(0.0, 1.0, 0.0, 0.0)))
        };
    }
    // Quaternion proportional to (1 + vz, v x z). When vz < 0, 1 + vz cancels,
    // so use the identity 1 + vz = (vx^2 + vy^2) / (1 - vz).
    let w = if v.z >= 0.0 { 1.0 + v.z } else { c2 / (1.0 - v.z) };
    Rotation(UnitQuaternion::new_normalize(Quaternion::new(w, cx, cy, 0.0)))
}

/// An ordered point set, optionally with ground-truth normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    gt_normals: Option<Vec<UnitVector3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if !points.iter().all(|p| p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("point coordinate"));
        }
        Ok(Self { points, gt_normals: None })
    }

    pub fn with_normals(points: Vec<Point3>, normals: Vec<UnitVector3>) -> Result<Self> {
        if normals.len() != points.len() {
            return Err(Error::LengthMismatch { expected: points.len(), got: normals.len() });
        }
        let mut cloud = Self::new(points)?;
        cloud.gt_normals = Some(normals);
        Ok(cloud)
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn gt_normals(&self) -> Option<&[UnitVector3]> {
        self.gt_normals.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A query point and its neighbors in a frame centered at the query.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchNeighborhood {
    query_index: usize,
    neighbor_indices: Vec<usize>,
    local_points: Vec<Vec3>,
    scale_h: f64,
}

impl PatchNeighborhood {
    /// Builds a patch from local coordinates. `local_points[pos]` must be the
    /// query point at the origin, where `neighbor_indices[pos] == query_index`.
    pub fn from_local(
        query_index: usize,
        neighbor_indices: Vec<usize>,
        local_points: Vec<Vec3>,
    ) -> Result<Self> {
        if neighbor_indices.len() != local_points.len() {
            return Err(Error::LengthMismatch {
                expected: neighbor_indices.len(),
                got: local_points.len(),
            });
        }
        if local_points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let pos = neighbor_indices
            .iter()
            .position(|&i| i == query_index)
            .ok_or_else(|| Error::InvalidArgument("query index missing from neighbors".into()))?;
        if local_points[pos] != Vec3::zeros() {
            return Err(Error::InvalidArgument("query point must be at the local origin".into()));
        }
        if !local_points.iter().all(|p| p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("local point"));
        }
        let scale_h = scale_of(&local_points);
        Ok(Self { query_index, neighbor_indices, local_points, scale_h })
    }

    pub fn query_index(&self) -> usize {
        self.query_index
    }

    pub fn neighbor_indices(&self) -> &[usize] {
        &self.neighbor_indices
    }

    pub fn local_points(&self) -> &[Vec3] {
        &self.local_points
    }

    /// Largest distance from the query among the local points (1 if all coincide).
    pub fn scale_h(&self) -> f64 {
        self.scale_h
    }

    pub fn len(&self) -> usize {
        self.local_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local_points.is_empty()
    }

    /// The same patch with point `i` dropped. The query point cannot be removed.
    pub fn without_point(&self, i: usize) -> Result<Self> {
        if self.neighbor_indices.get(i) == Some(&self.query_index) {
            return Err(Error::InvalidArgument("cannot remove the query point".into()));
        }
        let mut idx = self.neighbor_indices.clone();
        let mut pts = self.local_points.clone();
        idx.remove(i);
        pts.remove(i);
        Self::from_local(self.query_index, idx, pts)
    }
}

fn scale_of(points: &[Vec3]) -> f64 {
    let h = points.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if h > 0.0 {
        h
    } else {
        1.0
    }
}

/// Rotates every local point of `patch` about the query (the origin).
pub fn apply_rotation(r: &Rotation, patch: &PatchNeighborhood) -> PatchNeighborhood {
    let local_points: Vec<Vec3> = patch.local_points.iter().map(|p| r.apply(p)).collect();
    let scale_h = scale_of(&local_points);
    PatchNeighborhood {
        query_index: patch.query_index,
        neighbor_indices: patch.neighbor_indices.clone(),
        local_points,
        scale_h,
    }
}

/// Exact k-d tree over a point cloud.
///
/// Neighbors are ordered by squared distance with ties broken by ascending
/// point index.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3>,
    nodes: Vec<KdNode>,
    order: Vec<usize>,
}

#[derive(Debug, Clone)]
enum KdNode {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

const LEAF_SIZE: usize = 16;

impl KdTree {
    pub fn build(points: &[Point3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            nodes: Vec::new(),
            order: (0..points.len()).collect(),
        };
        if !points.is_empty() {
            tree.build_node(0, points.len());
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(KdNode::Leaf { start, end });
            return id;
        }
        let axis = self.widest_axis(start, end);
        let mid = start + (end - start) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a][axis].total_cmp(&pts[b][axis])
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(KdNode::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = KdNode::Split { axis, value, left, right };
        id
    }

    fn widest_axis(&self, start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0)
    }

    /// The `k` nearest points to `query`, nearest first. `priority` (if any)
    /// wins distance ties against every other index.
    pub fn nearest(&self, query: &Point3, k: usize, priority: Option<usize>) -> Vec<usize> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, priority, &mut heap);
        let mut out = heap.into_sorted_vec();
        out.truncate(k);
        out.into_iter().map(|c| c.index).collect()
    }

    fn search(
        &self,
        node: usize,
        query: &Point3,
        k: usize,
        priority: Option<usize>,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            KdNode::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = Candidate {
                        d2: squared_distance(&self.points[i], query),
                        rank: u8::from(Some(i) != priority),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if let Some(worst) = heap.peek() {
                        if cand < *worst {
                            heap.pop();
                            heap.push(cand);
                        }
                    }
                }
            }
            KdNode::Split { axis, value, left, right } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, k, priority, heap);
                let bound = diff * diff;
                let visit_far = heap.len() < k || heap.peek().is_some_and(|w| bound <= w.d2);
                if visit_far {
                    self.search(far, query, k, priority, heap);
                }
            }
        }
    }
}

pub(crate) fn squared_distance(a: &Point3, b: &Point3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    d2: f64,
    rank: u8,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.rank.cmp(&other.rank))
            .then(self.index.cmp(&other.index))
    }
}

/// Builds the patch of the `k` nearest neighbors of point `query_index`
/// using a prebuilt tree over the same cloud.
pub fn knn_patch_with_tree(
    cloud: &PointCloud,
    tree: &KdTree,
    query_index: usize,
    k: usize,
) -> Result<PatchNeighborhood> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if k == 0 {
        return Err(Error::KZero);
    }
    if k > cloud.len() {
        return Err(Error::KTooLarge { k, size: cloud.len() });
    }
    if query_index >= cloud.len() {
        return Err(Error::IndexOutOfRange { index: query_index, size: cloud.len() });
    }
    let q = cloud.points()[query_index];
    let neighbor_indices = tree.nearest(&q, k, Some(query_index));
    let local_points = neighbor_indices.iter().map(|&i| cloud.points()[i] - q).collect();
    PatchNeighborhood::from_local(query_index, neighbor_indices, local_points)
}

/// The `k` nearest neighbors of point `query_index` (query included), in
/// query-centered coordinates.
pub fn knn_patch(cloud: &PointCloud, query_index: usize, k: usize) -> Result<PatchNeighborhood> {
    let tree = KdTree::build(cloud.points());
    knn_patch_with_tree(cloud, &tree, query_index, k)
}
