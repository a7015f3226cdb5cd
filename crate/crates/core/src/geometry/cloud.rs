use std::ops::Deref;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of R^d with finite coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("vector must have d >= 1".into()));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("vector {coords:?}")));
        }
        Ok(Self(coords))
    }

    pub fn zeros(d: usize) -> Self {
        assert!(d >= 1, "dimension must be positive");
        Self(vec![0.0; d])
    }

    pub(crate) fn from_slice_unchecked(s: &[f64]) -> Self {
        Self(s.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        super::norm(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

/// Finite non-empty multiset of points in R^d, stored row-major.
///
/// Point order is meaningful: trackers and enumerations record indices into
/// it, and every transformation here preserves first-seen order.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    dim: usize,
    data: Vec<f64>,
}

impl PointCloud {
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("cloud dimension must be >= 1".into()));
        }
        if data.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if data.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "flat buffer of length {} is not a multiple of dim {dim}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("point cloud".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_points<'a, I>(dim: usize, points: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut data = Vec::new();
        for p in points {
            super::check_dims(dim, p.len())?;
            data.extend_from_slice(p);
        }
        Self::from_flat(dim, data)
    }

    pub fn singleton(p: &Vector) -> Self {
        Self {
            dim: p.dim(),
            data: p.coords().to_vec(),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Always false; present for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_vectors(&self) -> Vec<Vector> {
        self.iter().map(Vector::from_slice_unchecked).collect()
    }

    /// Apply a pointwise map, writing into a fresh buffer.
    pub fn map_points<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let mut data = vec![0.0; self.data.len()];
        for (p, out) in self.iter().zip(data.chunks_exact_mut(self.dim)) {
            f(p, out);
        }
        Self::from_flat(self.dim, data)
    }

    pub fn translate(&self, v: &[f64]) -> Result<Self> {
        super::check_dims(self.dim, v.len())?;
        self.map_points(|p, out| {
            for ((o, x), t) in out.iter_mut().zip(p).zip(v) {
                *o = x + t;
            }
        })
    }

    /// Concatenate several clouds of equal dimension.
    pub fn concat<'a, I>(clouds: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a PointCloud>,
    {
        let mut dim = None;
        let mut data = Vec::new();
        for c in clouds {
            match dim {
                None => dim = Some(c.dim),
                Some(d) => super::check_dims(d, c.dim)?,
            }
            data.extend_from_slice(&c.data);
        }
        Self::from_flat(dim.ok_or(Error::EmptyCloud)?, data)
    }

    /// Merge points lying within Euclidean distance `tol` of an earlier kept
    /// point. The first occurrence survives; order is preserved.
    pub fn dedup(&self, tol: f64) -> Self {
        if self.len() <= 1 {
            return self.clone();
        }
        let d = self.dim;
        // kept points per cell as linked lists: head in the map, links in `next`
        let mut heads: FxHashMap<CellKey, usize> = FxHashMap::default();
        heads.reserve(self.len());
        let mut next: Vec<usize> = Vec::new();
        let mut kept: Vec<usize> = Vec::new();
        let mut base = vec![0i64; d];
        let mut probe = vec![0i64; d];
        let n_neighbors = 3usize.pow(d as u32);
        for (i, p) in self.iter().enumerate() {
            for (k, x) in base.iter_mut().zip(p) {
                *k = cell_index(*x, tol);
            }
            let mut duplicate = false;
            'scan: for code in 0..n_neighbors {
                let mut c = code;
                for (pr, k) in probe.iter_mut().zip(&base) {
                    *pr = k.saturating_add((c % 3) as i64 - 1);
                    c /= 3;
                }
                let mut slot = heads.get(&CellKey::new(&probe)).copied();
                while let Some(j) = slot {
                    if super::dist(p, self.point(kept[j])) <= tol {
                        duplicate = true;
                        break 'scan;
                    }
                    slot = (next[j] != usize::MAX).then_some(next[j]);
                }
            }
            if !duplicate {
                let slot = kept.len();
                let prev = heads.insert(CellKey::new(&base), slot);
                next.push(prev.unwrap_or(usize::MAX));
                kept.push(i);
            }
        }
        self.select(&kept)
    }

    /// Snap to an axis-aligned grid of cell size `cell`, keeping the first
    /// point encountered in each occupied cell. Every dropped point lies
    /// within `cell·√d` of the kept representative of its cell.
    pub fn snap(&self, cell: f64) -> Self {
        assert!(cell > 0.0, "snap cell must be positive");
        let mut seen: FxHashSet<CellKey> = FxHashSet::default();
        seen.reserve(self.len());
        let mut kept = Vec::new();
        let mut key = vec![0i64; self.dim];
        for (i, p) in self.iter().enumerate() {
            for (k, x) in key.iter_mut().zip(p) {
                *k = cell_index(*x, cell);
            }
            if seen.insert(CellKey::new(&key)) {
                kept.push(i);
            }
        }
        self.select(&kept)
    }

    fn select(&self, idx: &[usize]) -> Self {
        if idx.len() == self.len() {
            return self.clone();
        }
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.point(i));
        }
        Self {
            dim: self.dim,
            data,
        }
    }
}

/// Grid cell coordinates; inline for d <= 4.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum CellKey {
    Small([i64; 4]),
    Large(Vec<i64>),
}

impl CellKey {
    #[inline]
    fn new(k: &[i64]) -> Self {
        if k.len() <= 4 {
            let mut a = [0i64; 4];
            a[..k.len()].copy_from_slice(k);
            CellKey::Small(a)
        } else {
            CellKey::Large(k.to_vec())
        }
    }
}

#[inline]
fn cell_index(x: f64, cell: f64) -> i64 {
    // `as` saturates for out-of-range values
    (x / cell).floor() as i64
}

impl Serialize for PointCloud {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(self.len()))?;
        for p in self.iter() {
            seq.serialize_element(p)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for PointCloud {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(de)?;
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        PointCloud::from_points(dim, rows.iter().map(Vec::as_slice)).map_err(serde::de::Error::custom)
    }
}
