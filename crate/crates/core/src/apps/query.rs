use crate::error::{Error, Result};
use crate::model::GaussianScene;

#[inline]
fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// Nearest `(squared distance, id)` by brute force; ties go to the lower id.
pub fn linear_nearest(points: &[[f64; 3]], ids: &[usize], q: [f64; 3]) -> Option<(f64, usize)> {
    points
        .iter()
        .zip(ids)
        .map(|(p, &id)| (dist2(*p, q), id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
}

/// Static 3D k-d tree. Nodes are stored in median order: the node of a
/// range sits at its midpoint, split on the axis of widest spread.
pub struct KdTree {
    points: Vec<[f64; 3]>,
    ids: Vec<usize>,
    axes: Vec<u8>,
}

impl KdTree {
    pub fn build(points: &[[f64; 3]], ids: &[usize]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axes = vec![0u8; points.len()];
        Self::build_range(points, &mut order, &mut axes, 0);
        Self {
            points: order.iter().map(|&i| points[i]).collect(),
            ids: order.iter().map(|&i| ids[i]).collect(),
            axes,
        }
    }

    fn build_range(points: &[[f64; 3]], order: &mut [usize], axes: &mut [u8], base: usize) {
        if order.is_empty() {
            return;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in order.iter() {
            for a in 0..3 {
                lo[a] = lo[a].min(points[i][a]);
                hi[a] = hi[a].max(points[i][a]);
            }
        }
        let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a))).unwrap_or(0);
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
        axes[base + mid] = axis as u8;
        let (left, rest) = order.split_at_mut(mid);
        Self::build_range(points, left, axes, base);
        Self::build_range(points, &mut rest[1..], axes, base + mid + 1);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest `(squared distance, id)`; ties go to the lower id.
    pub fn nearest(&self, q: [f64; 3]) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        self.search(0, self.points.len(), q, &mut best);
        best
    }

    fn search(&self, lo: usize, hi: usize, q: [f64; 3], best: &mut Option<(f64, usize)>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let cand = (dist2(self.points[mid], q), self.ids[mid]);
        if best.is_none_or(|b| cand.0 < b.0 || (cand.0 == b.0 && cand.1 < b.1)) {
            *best = Some(cand);
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - self.points[mid][axis];
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(near.0, near.1, q, best);
        // equal distances may still hide a lower id on the far side
        if best.is_none_or(|b| diff * diff <= b.0) {
            self.search(far.0, far.1, q, best);
        }
    }
}

/// Nearest-centre distances from queries to the level-`k` subset.
#[derive(Clone, Debug, PartialEq)]
pub struct GeomQuery {
    pub distances: Vec<f64>,
    /// Scene index of each nearest Gaussian.
    pub nearest: Vec<usize>,
    pub subset_size: usize,
    pub full_size: usize,
}

pub fn geom_query(scene: &GaussianScene, k: u32, queries: &[[f64; 3]]) -> Result<GeomQuery> {
    if queries.is_empty() {
        return Err(Error::Invalid("no query points".into()));
    }
    let ids = scene.level_indices(k)?;
    if ids.is_empty() {
        return Err(Error::Invalid(format!("no Gaussians at level <= {k}")));
    }
    let points: Vec<[f64; 3]> = ids.iter().map(|&i| scene.positions[i]).collect();
    let tree = KdTree::build(&points, &ids);
    let (distances, nearest) = queries
        .iter()
        .map(|&q| {
            let (d2, id) = tree.nearest(q).expect("non-empty tree");
            (d2.sqrt(), id)
        })
        .unzip();
    Ok(GeomQuery {
        distances,
        nearest,
        subset_size: ids.len(),
        full_size: scene.len(),
    })
}
