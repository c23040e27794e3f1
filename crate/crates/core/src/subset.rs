//! Task identifiers, fixed-size subsets of source tasks and their 0/1 design matrix.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::rng::{Domain, SeedStream};

/// Source tasks are numbered `1..=k`; `0` is reserved for the target task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskId(usize);

impl TaskId {
    pub const TARGET: TaskId = TaskId(0);

    /// Source-task id, checked against the run's task count.
    pub fn new(index: usize, k: usize) -> Result<Self> {
        if index == 0 || index > k {
            return Err(Error::invalid(alloc::format!("task id {index} outside 1..={k}")));
        }
        Ok(TaskId(index))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Zero-based column of this task in a design matrix.
    pub fn column(self) -> usize {
        self.0 - 1
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A set of source tasks in canonical (strictly increasing) form.
///
/// Ordering is the lexicographic order of member lists.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Subset {
    members: Vec<TaskId>,
}

impl Subset {
    pub fn empty() -> Self {
        Self::default()
    }

    /// `{1, ..., k}`.
    pub fn full(k: usize) -> Self {
        Self { members: (1..=k).map(TaskId).collect() }
    }

    /// Builds a subset from 1-based ids in any order. Duplicates and the
    /// reserved target id are rejected.
    pub fn new<I: IntoIterator<Item = usize>>(ids: I) -> Result<Self> {
        let mut members: Vec<usize> = ids.into_iter().collect();
        members.sort_unstable();
        if members.first() == Some(&0) {
            return Err(Error::invalid("task id 0 is the target and cannot be a source"));
        }
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid(alloc::format!("duplicate task id in {members:?}")));
        }
        Ok(Self { members: members.into_iter().map(TaskId).collect() })
    }

    /// Like [`Subset::new`], additionally checking every id against `k`.
    pub fn with_k<I: IntoIterator<Item = usize>>(ids: I, k: usize) -> Result<Self> {
        let s = Self::new(ids)?;
        s.check_range(k)?;
        Ok(s)
    }

    pub fn alpha(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[TaskId] {
        &self.members
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().map(|t| t.0)
    }

    pub fn contains(&self, id: usize) -> bool {
        self.members.binary_search(&TaskId(id)).is_ok()
    }

    pub fn is_subset_of(&self, other: &Subset) -> bool {
        self.members.iter().all(|t| other.contains(t.0))
    }

    pub fn check_range(&self, k: usize) -> Result<()> {
        match self.members.last() {
            Some(t) if t.0 > k => {
                Err(Error::invalid(alloc::format!("task id {} outside 1..={k}", t.0)))
            }
            _ => Ok(()),
        }
    }

    /// Space-separated ids, the form used in record files.
    pub fn to_id_list(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.members.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&alloc::format!("{}", t.0));
        }
        out
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, t) in self.members.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", t.0)?;
        }
        f.write_str("}")
    }
}

/// `n x k` 0/1 matrix whose row `i` is the characteristic vector of subset `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[bool] {
        &self.bits[row * self.cols..(row + 1) * self.cols]
    }

    /// Zero-based columns set in `row`.
    pub fn row_columns(&self, row: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(row).iter().enumerate().filter(|(_, b)| **b).map(|(j, _)| j)
    }

    pub fn row_sum(&self, row: usize) -> usize {
        self.row(row).iter().filter(|b| **b).count()
    }

    pub fn column_sums(&self) -> Vec<usize> {
        let mut sums = alloc::vec![0usize; self.cols];
        for i in 0..self.rows {
            for j in self.row_columns(i) {
                sums[j] += 1;
            }
        }
        sums
    }

    /// Inverse of [`indicator_matrix`].
    pub fn to_subsets(&self) -> Vec<Subset> {
        (0..self.rows)
            .map(|i| Subset { members: self.row_columns(i).map(|j| TaskId(j + 1)).collect() })
            .collect()
    }
}

/// One oracle measurement: the multitask performance of a subset (lower is better).
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceRecord {
    pub subset: Subset,
    pub value: f64,
    pub oracle_id: String,
}

impl PerformanceRecord {
    pub fn new(subset: Subset, value: f64, oracle_id: impl Into<String>) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::invalid(alloc::format!("non-finite performance {value} for {subset}")));
        }
        Ok(Self { subset, value, oracle_id: oracle_id.into() })
    }
}

/// Exact binomial coefficient; saturates at `u128::MAX`.
pub fn binomial(n: usize, r: usize) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn check_alpha(k: usize, alpha: usize) -> Result<()> {
    if alpha < 1 || alpha > k {
        return Err(Error::invalid(alloc::format!("alpha={alpha} must lie in 1..={k}")));
    }
    Ok(())
}

fn draw_subset(stream: &SeedStream, index: u64, k: usize, alpha: usize) -> Subset {
    let mut rng = stream.rng(index);
    let mut ids: Vec<usize> =
        rand::seq::index::sample(&mut rng, k, alpha).into_iter().map(|j| j + 1).collect();
    ids.sort_unstable();
    Subset { members: ids.into_iter().map(TaskId).collect() }
}

/// `n` i.i.d. uniform draws from the `C(k, alpha)` subsets of size `alpha`
/// (with replacement over the subset space).
///
/// Draw `i` depends only on `(seed, i)`.
pub fn sample_subsets(k: usize, alpha: usize, n: usize, seed: u64) -> Result<Vec<Subset>> {
    check_alpha(k, alpha)?;
    if n < 1 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let stream = SeedStream::new(seed, Domain::TrainSubsets);
    Ok((0..n as u64).map(|i| draw_subset(&stream, i, k, alpha)).collect())
}

/// Evaluation subsets drawn from a stream disjoint from [`sample_subsets`].
///
/// Draws landing in `exclude` are redrawn from the same per-index stream, so
/// the result contains only unseen subsets whenever the subset space is larger
/// than `exclude`. Otherwise repeats of `exclude` are allowed.
pub fn sample_holdout(
    k: usize,
    alpha: usize,
    count: usize,
    seed: u64,
    exclude: &[Subset],
) -> Result<Vec<Subset>> {
    check_alpha(k, alpha)?;
    let seen: BTreeSet<&Subset> = exclude.iter().collect();
    let filter = binomial(k, alpha) > seen.len() as u128;
    let stream = SeedStream::new(seed, Domain::HoldoutSubsets);
    let mut out = Vec::with_capacity(count);
    for i in 0..count as u64 {
        let mut rng = stream.rng(i);
        loop {
            let mut ids: Vec<usize> =
                rand::seq::index::sample(&mut rng, k, alpha).into_iter().map(|j| j + 1).collect();
            ids.sort_unstable();
            let s = Subset { members: ids.into_iter().map(TaskId).collect() };
            if !filter || !seen.contains(&s) {
                out.push(s);
                break;
            }
        }
    }
    Ok(out)
}

/// All `C(k, alpha)` subsets of size `alpha`, in lexicographic order.
pub fn enumerate_all_subsets(k: usize, alpha: usize) -> Result<Vec<Subset>> {
    if alpha > k {
        return Err(Error::invalid(alloc::format!("alpha={alpha} exceeds k={k}")));
    }
    let total = binomial(k, alpha);
    if total > usize::MAX as u128 {
        return Err(Error::invalid("enumeration does not fit in memory"));
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut comb: Vec<usize> = (1..=alpha).collect();
    loop {
        out.push(Subset { members: comb.iter().copied().map(TaskId).collect() });
        // rightmost position that can still advance
        let mut i = alpha;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if comb[i] < k - (alpha - 1 - i) {
                break;
            }
            if i == 0 {
                return Ok(out);
            }
        }
        comb[i] += 1;
        for j in i + 1..alpha {
            comb[j] = comb[j - 1] + 1;
        }
    }
}

/// 0/1 characteristic-vector matrix of `subsets` over `k` tasks.
pub fn indicator_matrix(subsets: &[Subset], k: usize) -> Result<DesignMatrix> {
    let mut bits = alloc::vec![false; subsets.len() * k];
    for (i, s) in subsets.iter().enumerate() {
        s.check_range(k)?;
        for t in s.members() {
            bits[i * k + t.column()] = true;
        }
    }
    Ok(DesignMatrix { rows: subsets.len(), cols: k, bits })
}
