//! Downward-closed families and the superset zeta / Möbius pair on them.

use std::collections::{HashMap, HashSet};
use std::ops::{Add, Sub};

use num_traits::Zero;

use crate::bits::BitVec;
use crate::error::{Error, Result};

/// `C↓`: every submask of every generator, ordered by `(weight, value)`.
#[derive(Clone, Debug)]
pub struct Downset {
    n: usize,
    generators: Vec<BitVec>,
    members: Vec<BitVec>,
    index: HashMap<BitVec, usize>,
    /// `level_start[w]` is the first member of weight `w`; one extra sentinel at the end.
    level_start: Vec<usize>,
}

/// Generates `C↓` from the generator list.
pub fn generate_downset(generators: &[BitVec]) -> Result<Downset> {
    let first = generators.first().ok_or(Error::EmptyGenerators)?;
    let n = first.dim();
    for g in generators {
        first.check_dim(g)?;
    }
    let mut seen: HashSet<BitVec> = HashSet::new();
    for g in generators {
        if seen.contains(g) {
            continue;
        }
        for sub in g.submasks() {
            seen.insert(sub);
        }
    }
    let mut members: Vec<BitVec> = seen.into_iter().collect();
    members.sort_by(|a, b| a.weight().cmp(&b.weight()).then_with(|| a.cmp(b)));
    let index = members
        .iter()
        .enumerate()
        .map(|(i, m)| (m.clone(), i))
        .collect();
    let top = members.last().map_or(0, BitVec::weight);
    let mut level_start = vec![0; top + 2];
    for w in 0..=top + 1 {
        level_start[w] = members.partition_point(|m| m.weight() < w);
    }
    Ok(Downset {
        n,
        generators: generators.to_vec(),
        members,
        index,
        level_start,
    })
}

impl Downset {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn generators(&self) -> &[BitVec] {
        &self.generators
    }

    pub fn members(&self) -> &[BitVec] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn index_of(&self, x: &BitVec) -> Option<usize> {
        self.index.get(x).copied()
    }

    pub fn contains(&self, x: &BitVec) -> bool {
        self.index.contains_key(x)
    }

    /// Largest member weight; equals the largest generator weight.
    pub fn max_weight(&self) -> usize {
        self.level_start.len() - 2
    }

    /// Members of weight exactly `w`.
    pub fn level(&self, w: usize) -> &[BitVec] {
        if w > self.max_weight() {
            return &[];
        }
        &self.members[self.level_start[w]..self.level_start[w + 1]]
    }

    /// Index range of the members with weight at least `w`.
    pub fn from_level(&self, w: usize) -> std::ops::Range<usize> {
        let start = self.level_start[w.min(self.max_weight() + 1)];
        start..self.members.len()
    }

    /// Number of distinct generators.
    pub fn k(&self) -> usize {
        self.generators.iter().collect::<HashSet<_>>().len()
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len == self.members.len() {
            Ok(())
        } else {
            Err(Error::LengthMismatch {
                expected: self.members.len(),
                found: len,
            })
        }
    }

    /// Indices of the members containing `members[i]`, including `i` itself.
    pub fn supersets_of(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let x = &self.members[i];
        self.from_level(x.weight())
            .filter(move |&j| x.is_subset_of(&self.members[j]))
    }
}

/// `(zeta f)(x) = sum_{y ⊇ x} f(y)` over members.
pub fn zeta_transform<T>(ds: &Downset, f: &[T]) -> Result<Vec<T>>
where
    T: Clone + Zero + Add<Output = T>,
{
    ds.check_len(f.len())?;
    Ok((0..ds.len())
        .map(|i| {
            ds.supersets_of(i)
                .fold(T::zero(), |acc, j| acc + f[j].clone())
        })
        .collect())
}

/// `(mobius f)(x) = sum_{y ⊇ x} (-1)^{|y \ x|} f(y)` over members.
pub fn mobius_transform<T>(ds: &Downset, f: &[T]) -> Result<Vec<T>>
where
    T: Clone + Zero + Add<Output = T> + Sub<Output = T>,
{
    ds.check_len(f.len())?;
    Ok((0..ds.len())
        .map(|i| {
            let wx = ds.members[i].weight();
            ds.supersets_of(i).fold(T::zero(), |acc, j| {
                if (ds.members[j].weight() - wx) % 2 == 0 {
                    acc + f[j].clone()
                } else {
                    acc - f[j].clone()
                }
            })
        })
        .collect())
}
