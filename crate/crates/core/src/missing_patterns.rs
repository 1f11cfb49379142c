//! Missing-data patterns.
//!
//! An [`IncompleteMatrix`] is grouped into patterns: maximal sets of rows that
//! share the same observed/missing column split. Pattern 0 is the
//! fully observed pattern whenever complete cases exist; the remaining
//! patterns follow in order of first row occurrence. All indices are 0-based.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// An `n x p` real matrix together with its observedness mask.
///
/// Missing cells hold `NaN`. Readers must consult the mask, never the
/// sentinel, to decide whether a cell is observed.
#[derive(Debug, Clone, PartialEq)]
pub struct IncompleteMatrix {
    values: DMatrix<f64>,
    /// Row-major, `true` = observed.
    mask: Vec<bool>,
}

impl IncompleteMatrix {
    /// Builds a matrix from values and a row-major mask. Cells with
    /// `mask = false` are overwritten with the missing sentinel.
    pub fn new(mut values: DMatrix<f64>, mask: Vec<bool>) -> Result<Self> {
        let (n, p) = values.shape();
        if mask.len() != n * p {
            return Err(Error::Dimension {
                context: "incomplete matrix mask",
                expected: n * p,
                actual: mask.len(),
            });
        }
        for i in 0..n {
            for j in 0..p {
                if !mask[i * p + j] {
                    values[(i, j)] = f64::NAN;
                }
            }
        }
        Ok(Self { values, mask })
    }

    pub fn from_complete(values: DMatrix<f64>) -> Self {
        let len = values.len();
        Self {
            values,
            mask: vec![true; len],
        }
    }

    /// Row-major cells, `None` for missing.
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        let mut values = DMatrix::from_element(n, p, f64::NAN);
        let mut mask = vec![false; n * p];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Dimension {
                    context: "row length",
                    expected: p,
                    actual: row.len(),
                });
            }
            for (j, cell) in row.iter().enumerate() {
                if let Some(v) = cell {
                    values[(i, j)] = *v;
                    mask[i * p + j] = true;
                }
            }
        }
        Ok(Self { values, mask })
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.ncols() + j]
    }

    /// The observed value, or `None` for a missing cell.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.is_observed(i, j).then(|| self.values[(i, j)])
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn mask_row(&self, i: usize) -> &[bool] {
        let p = self.ncols();
        &self.mask[i * p..(i + 1) * p]
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|m| !**m).count()
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|m| *m)
    }

    /// Copies `filled` and restores every observed cell from `self`, so the
    /// result agrees bit-exactly with the observed data.
    pub fn overlay_observed(&self, filled: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = filled.clone();
        for i in 0..self.nrows() {
            for j in 0..self.ncols() {
                if self.is_observed(i, j) {
                    out[(i, j)] = self.values[(i, j)];
                }
            }
        }
        out
    }

    /// True when `filled` equals the observed cells bit-for-bit and has no
    /// non-finite entries anywhere.
    pub fn agrees_with(&self, filled: &DMatrix<f64>) -> bool {
        if filled.shape() != self.values.shape() {
            return false;
        }
        (0..self.nrows()).all(|i| {
            (0..self.ncols()).all(|j| {
                let v = filled[(i, j)];
                v.is_finite()
                    && (!self.is_observed(i, j) || v.to_bits() == self.values[(i, j)].to_bits())
            })
        })
    }
}

/// One missing-data pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    /// Row indices belonging to the pattern, ascending.
    pub rows: Vec<usize>,
    pub observed: Vec<usize>,
    pub missing: Vec<usize>,
    /// `mask[j]` is true iff column `j` is observed.
    pub mask: Vec<bool>,
}

impl Pattern {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }

    /// The mask vector as 0/1 reals.
    pub fn mask_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.mask.len(),
            self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }),
        )
    }

    /// Whether rows of this pattern can be handed to a generator.
    pub fn is_trainable(&self) -> bool {
        !self.observed.is_empty()
    }
}

/// The row partition of an incomplete matrix into patterns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternPartition {
    n: usize,
    p: usize,
    patterns: Vec<Pattern>,
    row_pattern: Vec<usize>,
    complete: Option<usize>,
}

/// Columns observed in every pattern and columns missing in at least one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommonSets {
    pub common_obs: Vec<usize>,
    pub union_mis: Vec<usize>,
}

/// Groups rows by their exact mask row.
pub fn partition_patterns(data: &IncompleteMatrix) -> PatternPartition {
    let (n, p) = (data.nrows(), data.ncols());
    let mut index: HashMap<&[bool], usize> = HashMap::new();
    let mut order: Vec<&[bool]> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let key = data.mask_row(i);
        let slot = *index.entry(key).or_insert_with(|| {
            order.push(key);
            members.push(Vec::new());
            order.len() - 1
        });
        members[slot].push(i);
    }

    let complete_slot = order.iter().position(|m| m.iter().all(|&o| o));
    let mut ranked: Vec<usize> = (0..order.len()).collect();
    if let Some(c) = complete_slot {
        ranked.retain(|&s| s != c);
        ranked.insert(0, c);
    }

    let mut row_pattern = vec![0; n];
    let patterns: Vec<Pattern> = ranked
        .iter()
        .enumerate()
        .map(|(k, &slot)| {
            let mask = order[slot].to_vec();
            for &i in &members[slot] {
                row_pattern[i] = k;
            }
            Pattern {
                rows: members[slot].clone(),
                observed: (0..p).filter(|&j| mask[j]).collect(),
                missing: (0..p).filter(|&j| !mask[j]).collect(),
                mask,
            }
        })
        .collect();

    PatternPartition {
        n,
        p,
        patterns,
        row_pattern,
        complete: complete_slot.map(|_| 0),
    }
}

impl PatternPartition {
    /// Number of patterns `K`.
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.p
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn pattern(&self, k: usize) -> Result<&Pattern> {
        self.patterns.get(k).ok_or(Error::PatternIndex {
            index: k,
            count: self.patterns.len(),
        })
    }

    /// Index of the fully observed pattern (always 0 when present).
    pub fn complete_pattern(&self) -> Option<usize> {
        self.complete
    }

    /// Rows with no missing cells.
    pub fn complete_rows(&self) -> &[usize] {
        self.complete.map_or(&[], |c| &self.patterns[c].rows)
    }

    /// Indices of the patterns that contain missing cells.
    pub fn incomplete_patterns(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.patterns.len()).filter(move |&k| Some(k) != self.complete)
    }

    pub fn pattern_of_row(&self, i: usize) -> usize {
        self.row_pattern[i]
    }

    /// Patterns whose row count falls below `floor`.
    pub fn small_patterns(&self, floor: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| self.patterns[k].rows.len() < floor)
            .collect()
    }

    /// Rows outside pattern `k`, ascending.
    pub fn complement_rows(&self, k: usize) -> Result<Vec<usize>> {
        self.pattern(k)?;
        Ok((0..self.n).filter(|&i| self.row_pattern[i] != k).collect())
    }

    pub fn common_sets(&self) -> CommonSets {
        let mut seen_missing = vec![false; self.p];
        for pat in &self.patterns {
            for &j in &pat.missing {
                seen_missing[j] = true;
            }
        }
        CommonSets {
            common_obs: (0..self.p).filter(|&j| !seen_missing[j]).collect(),
            union_mis: (0..self.p).filter(|&j| seen_missing[j]).collect(),
        }
    }
}

/// `{0..n} \ P_k`.
pub fn complement_rows(part: &PatternPartition, k: usize) -> Result<Vec<usize>> {
    part.complement_rows(k)
}

pub fn common_sets(part: &PatternPartition) -> CommonSets {
    part.common_sets()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn four_pattern() -> IncompleteMatrix {
        // 1-based observed sets from the worked example; rows 1-2 complete.
        let obs: [&[usize]; 7] = [
            &[1, 2, 3, 4, 5, 6],
            &[1, 2, 3, 4, 5, 6],
            &[1, 2, 3, 4],
            &[1, 2, 3, 4],
            &[1, 2, 3],
            &[1, 2, 3, 5, 6],
            &[1, 2, 3, 5, 6],
        ];
        let rows: Vec<Vec<Option<f64>>> = obs
            .iter()
            .enumerate()
            .map(|(i, o)| {
                (1..=6)
                    .map(|j| o.contains(&j).then(|| (i * 6 + j) as f64))
                    .collect()
            })
            .collect();
        IncompleteMatrix::from_rows(&rows).unwrap()
    }

    fn one_based(v: &[usize]) -> Vec<usize> {
        v.iter().map(|i| i + 1).collect()
    }

    fn random_mask(n: usize, p: usize, seed: u64) -> IncompleteMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = DMatrix::from_fn(n, p, |_, _| rng.gen::<f64>());
        let mask = (0..n * p).map(|_| rng.gen_bool(0.8)).collect();
        IncompleteMatrix::new(values, mask).unwrap()
    }

    #[test]
    fn four_pattern_example() {
        let part = partition_patterns(&four_pattern());
        assert_eq!(part.len(), 4);
        assert_eq!(part.complete_pattern(), Some(0));
        let rows: Vec<_> = part.patterns().iter().map(|p| one_based(&p.rows)).collect();
        assert_eq!(rows, vec![vec![1, 2], vec![3, 4], vec![5], vec![6, 7]]);
        let obs: Vec<_> = part
            .patterns()
            .iter()
            .map(|p| one_based(&p.observed))
            .collect();
        assert_eq!(obs[1], vec![1, 2, 3, 4]);
        assert_eq!(obs[2], vec![1, 2, 3]);
        assert_eq!(obs[3], vec![1, 2, 3, 5, 6]);
        assert_eq!(
            part.pattern(1).unwrap().mask_vector().as_slice(),
            &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn complement_of_second_pattern() {
        let part = partition_patterns(&four_pattern());
        assert_eq!(one_based(&part.complement_rows(1).unwrap()), vec![1, 2, 5, 6, 7]);
        assert!(matches!(
            part.complement_rows(4),
            Err(Error::PatternIndex { index: 4, count: 4 })
        ));
    }

    #[test]
    fn common_sets_of_example() {
        let cs = partition_patterns(&four_pattern()).common_sets();
        assert_eq!(one_based(&cs.common_obs), vec![1, 2, 3]);
        assert_eq!(one_based(&cs.union_mis), vec![4, 5, 6]);
    }

    #[test]
    fn fully_observed_is_single_pattern() {
        let m = IncompleteMatrix::from_complete(DMatrix::from_element(5, 3, 1.0));
        let part = partition_patterns(&m);
        assert_eq!(part.len(), 1);
        assert_eq!(part.patterns()[0].rows, vec![0, 1, 2, 3, 4]);
        assert!(part.patterns()[0].missing.is_empty());
        assert!(part.complement_rows(0).unwrap().is_empty());
        let cs = part.common_sets();
        assert_eq!(cs.common_obs, vec![0, 1, 2]);
        assert!(cs.union_mis.is_empty());
    }

    #[test]
    fn fully_missing_row_is_flagged() {
        let m = IncompleteMatrix::from_rows(&[vec![Some(1.0), Some(2.0)], vec![None, None]]).unwrap();
        let part = partition_patterns(&m);
        assert_eq!(part.len(), 2);
        assert!(!part.patterns()[1].is_trainable());
    }

    #[test]
    fn missing_cells_hold_nan_and_ignore_sentinel() {
        let m = IncompleteMatrix::new(DMatrix::from_element(1, 2, 7.0), vec![true, false]).unwrap();
        assert!(m.values()[(0, 1)].is_nan());
        assert_eq!(m.get(0, 1), None);
        assert_eq!(m.get(0, 0), Some(7.0));
    }

    #[test]
    fn matches_bucketing_oracle() {
        for seed in 0..20 {
            let data = random_mask(20, 5, seed);
            let part = partition_patterns(&data);
            let mut buckets: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
            for i in 0..20 {
                buckets.entry(data.mask_row(i).to_vec()).or_default().push(i);
            }
            assert_eq!(part.len(), buckets.len());
            for pat in part.patterns() {
                assert_eq!(buckets[&pat.mask], pat.rows);
            }
            // complement oracle
            for k in 0..part.len() {
                let rows = &part.patterns()[k].rows;
                let oracle: Vec<usize> = (0..20).filter(|i| !rows.contains(i)).collect();
                assert_eq!(part.complement_rows(k).unwrap(), oracle);
            }
            // set-algebra oracle
            let mut inter: Vec<usize> = (0..5).collect();
            let mut union: Vec<usize> = Vec::new();
            for pat in part.patterns() {
                inter.retain(|j| pat.observed.contains(j));
                for &j in &pat.missing {
                    if !union.contains(&j) {
                        union.push(j);
                    }
                }
            }
            union.sort_unstable();
            let cs = part.common_sets();
            assert_eq!(cs.common_obs, inter);
            assert_eq!(cs.union_mis, union);
        }
    }

    #[test]
    fn complete_pattern_first_then_first_occurrence() {
        let m = IncompleteMatrix::from_rows(&[
            vec![None, Some(1.0)],
            vec![Some(1.0), None],
            vec![Some(1.0), Some(1.0)],
            vec![None, Some(1.0)],
        ])
        .unwrap();
        let part = partition_patterns(&m);
        let rows: Vec<_> = part.patterns().iter().map(|p| p.rows.clone()).collect();
        assert_eq!(rows, vec![vec![2], vec![0, 3], vec![1]]);
        assert_eq!(part.small_patterns(2), vec![0, 2]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn partition_invariants(n in 1usize..30, p in 1usize..6, seed in any::<u64>()) {
                let data = random_mask(n, p, seed);
                let part = partition_patterns(&data);
                let total: usize = part.patterns().iter().map(|pat| pat.rows.len()).sum();
                prop_assert_eq!(total, n);
                let mut seen = vec![false; n];
                for (k, pat) in part.patterns().iter().enumerate() {
                    prop_assert_eq!(pat.observed.len() + pat.missing.len(), p);
                    for &i in &pat.rows {
                        prop_assert!(!seen[i]);
                        seen[i] = true;
                        prop_assert_eq!(part.pattern_of_row(i), k);
                        for j in 0..p {
                            prop_assert_eq!(data.is_observed(i, j), pat.observed.contains(&j));
                        }
                    }
                }
                let cs = part.common_sets();
                prop_assert_eq!(cs.common_obs.len() + cs.union_mis.len(), p);
            }

            #[test]
            fn row_permutation_relabels(n in 2usize..20, seed in any::<u64>()) {
                let data = random_mask(n, 4, seed);
                let perm: Vec<usize> = (0..n).rev().collect();
                let rows: Vec<Vec<Option<f64>>> = perm
                    .iter()
                    .map(|&i| (0..4).map(|j| data.get(i, j)).collect())
                    .collect();
                let permuted = IncompleteMatrix::from_rows(&rows).unwrap();
                let a = partition_patterns(&data);
                let b = partition_patterns(&permuted);
                prop_assert_eq!(a.len(), b.len());
                for pat in a.patterns() {
                    let twin = b.patterns().iter().find(|q| q.mask == pat.mask).unwrap();
                    let mut mapped: Vec<usize> = pat.rows.iter().map(|&i| n - 1 - i).collect();
                    mapped.sort_unstable();
                    prop_assert_eq!(&twin.rows, &mapped);
                }
            }
        }
    }
}
