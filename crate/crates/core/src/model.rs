//! Paths, atoms and ribbons: the in-memory trajectory model.

use glam::Vec3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type PathId = u32;

/// One attributed sample point of a path.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub position: Vec3,
    pub attributes: Vec<f32>,
    pub time: Option<f32>,
}

impl Atom {
    pub fn at(position: Vec3) -> Self {
        Atom { position, attributes: Vec::new(), time: None }
    }
}

/// A trajectory. Atoms are stored column-wise; atom order is traversal order.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub id: PathId,
    pub positions: Vec<Vec3>,
    /// Row-major `len() * attribute_count` values.
    pub attributes: Vec<f32>,
    pub attribute_count: usize,
    pub times: Option<Vec<f32>>,
    pub base_color: [u8; 3],
}

impl Path {
    pub fn new(id: PathId, positions: Vec<Vec3>) -> Self {
        Path {
            id,
            positions,
            attributes: Vec::new(),
            attribute_count: 0,
            times: None,
            base_color: [200, 200, 200],
        }
    }

    pub fn from_atoms(id: PathId, atoms: &[Atom], attribute_count: usize) -> Result<Self> {
        let mut path = Path::new(id, atoms.iter().map(|a| a.position).collect());
        path.attribute_count = attribute_count;
        for (i, atom) in atoms.iter().enumerate() {
            if atom.attributes.len() != attribute_count {
                return Err(Error::Schema(format!(
                    "path {id} atom {i}: {} attributes, schema declares {attribute_count}",
                    atom.attributes.len()
                )));
            }
            path.attributes.extend_from_slice(&atom.attributes);
        }
        if atoms.iter().all(|a| a.time.is_some()) && !atoms.is_empty() {
            path.times = Some(atoms.iter().map(|a| a.time.unwrap_or_default()).collect());
        }
        Ok(path)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn atom_attributes(&self, index: usize) -> &[f32] {
        let k = self.attribute_count;
        &self.attributes[index * k..(index + 1) * k]
    }

    pub fn atom(&self, index: usize) -> Atom {
        Atom {
            position: self.positions[index],
            attributes: self.atom_attributes(index).to_vec(),
            time: self.times.as_ref().map(|t| t[index]),
        }
    }

    pub fn ribbon_count(&self) -> usize {
        self.len().saturating_sub(1)
    }

    /// Keeps the atoms whose indices are listed (ascending).
    pub(crate) fn retain_indices(&self, indices: &[usize]) -> Path {
        let k = self.attribute_count;
        let mut out = Path {
            id: self.id,
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            attributes: Vec::with_capacity(indices.len() * k),
            attribute_count: k,
            times: self.times.as_ref().map(|t| indices.iter().map(|&i| t[i]).collect()),
            base_color: self.base_color,
        };
        for &i in indices {
            out.attributes.extend_from_slice(self.atom_attributes(i));
        }
        out
    }
}

/// Segment between atoms `index` and `index + 1` of a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ribbon {
    pub path_id: PathId,
    pub index: u32,
    pub start: Vec3,
    pub end: Vec3,
    pub degenerate: bool,
}

pub fn ribbons_of(path: &Path) -> Vec<Ribbon> {
    path.positions
        .windows(2)
        .enumerate()
        .map(|(i, w)| Ribbon {
            path_id: path.id,
            index: i as u32,
            start: w[0],
            end: w[1],
            degenerate: w[0] == w[1],
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_point(p: Vec3) -> Self {
        Aabb { min: p, max: p }
    }

    pub fn grow(&mut self, p: Vec3) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.cmpge(self.min).all() && p.cmple(self.max).all()
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub paths: Vec<Path>,
    pub attribute_schema: Vec<String>,
    pub bounds: Option<Aabb>,
    pub total_atoms: usize,
}

impl Dataset {
    /// Builds a dataset, assigning dense path ids in order and computing bounds.
    pub fn new(mut paths: Vec<Path>, attribute_schema: Vec<String>) -> Self {
        for (i, p) in paths.iter_mut().enumerate() {
            p.id = i as PathId;
        }
        let total_atoms = paths.iter().map(Path::len).sum();
        let mut ds = Dataset { paths, attribute_schema, bounds: None, total_atoms };
        ds.bounds = compute_bounds(&ds).ok();
        ds
    }

    pub fn from_positions(paths: Vec<Vec<Vec3>>) -> Self {
        Dataset::new(
            paths.into_iter().map(|p| Path::new(0, p)).collect(),
            Vec::new(),
        )
    }

    pub fn path_count(&self) -> usize {
        self.paths.len()
    }

    pub fn ribbon_count(&self) -> usize {
        self.paths.iter().map(Path::ribbon_count).sum()
    }

    pub fn path(&self, id: PathId) -> Option<&Path> {
        self.paths.get(id as usize)
    }
}

pub fn compute_bounds(dataset: &Dataset) -> Result<Aabb> {
    let mut points = dataset.paths.iter().flat_map(|p| p.positions.iter().copied());
    let first = points.next().ok_or(Error::EmptyDataset)?;
    Ok(points.fold(Aabb::from_point(first), |mut b, p| {
        b.grow(p);
        b
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ribbon_counts() {
        let p = Path::new(0, (0..4).map(|i| Vec3::splat(i as f32)).collect());
        assert_eq!(ribbons_of(&p).len(), 3);
        let single = Path::new(1, vec![Vec3::ZERO]);
        assert!(ribbons_of(&single).is_empty());
        assert!(ribbons_of(&Path::new(2, vec![])).is_empty());
    }

    #[test]
    fn degenerate_ribbon_flagged() {
        let a = Vec3::new(1.0, 2.0, 3.0);
        let b = Vec3::new(4.0, 2.0, 3.0);
        let r = ribbons_of(&Path::new(0, vec![a, a, b]));
        assert_eq!(r.len(), 2);
        assert!(r[0].degenerate);
        assert!(!r[1].degenerate);
        assert_eq!((r[1].start, r[1].end), (a, b));
    }

    #[test]
    fn bounds_examples() {
        let ds = Dataset::from_positions(vec![vec![Vec3::ZERO, Vec3::new(1.0, 2.0, 3.0)]]);
        let b = compute_bounds(&ds).unwrap();
        assert_eq!(b.min, Vec3::ZERO);
        assert_eq!(b.max, Vec3::new(1.0, 2.0, 3.0));

        let ds = Dataset::from_positions(vec![vec![Vec3::splat(5.0)]]);
        let b = compute_bounds(&ds).unwrap();
        assert_eq!(b.min, b.max);

        let empty = Dataset::from_positions(vec![]);
        assert!(matches!(compute_bounds(&empty), Err(Error::EmptyDataset)));
    }

    #[test]
    fn bounds_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec3> = (0..100)
            .map(|_| Vec3::new(rng.random_range(-50.0..50.0), rng.random_range(-5.0..5.0), rng.random()))
            .collect();
        let ds = Dataset::from_positions(vec![pts[..60].to_vec(), pts[60..].to_vec()]);
        let b = compute_bounds(&ds).unwrap();
        let mut lo = [f32::INFINITY; 3];
        let mut hi = [f32::NEG_INFINITY; 3];
        for p in &pts {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        assert_eq!(b.min.to_array(), lo);
        assert_eq!(b.max.to_array(), hi);
        assert!(pts.iter().all(|p| b.contains(*p)));
        assert_eq!(ds.total_atoms, 100);
        assert_eq!(ds.ribbon_count(), 98);
    }

    #[test]
    fn attribute_schema_length_checked() {
        let atoms = vec![Atom { position: Vec3::ZERO, attributes: vec![1.0], time: None }];
        assert!(Path::from_atoms(0, &atoms, 2).is_err());
        let p = Path::from_atoms(0, &atoms, 1).unwrap();
        assert_eq!(p.atom(0).attributes, vec![1.0]);
    }
}
