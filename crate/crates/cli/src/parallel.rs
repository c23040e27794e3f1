//! Concurrent, cached oracle evaluation and chunked normal-equation assembly.

use std::collections::BTreeMap;
use std::sync::Mutex;

use rayon::prelude::*;
use tasksel_core::surrogate::{fit_from_normal_equations, FitOptions, NormalEquations};
use tasksel_core::{DesignMatrix, PerformanceOracle, Result, Subset, SurrogateModel};

/// Rows per accumulation chunk. Fixed so the floating-point reduction order,
/// and therefore the fit, does not depend on the worker count.
pub const FIT_CHUNK_ROWS: usize = 256;

pub(crate) fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool construction")
}

/// Wraps an oracle so batches run on `workers` threads and each canonical
/// subset is evaluated at most once.
pub struct Evaluator<O> {
    inner: O,
    pool: rayon::ThreadPool,
    cache: Mutex<BTreeMap<Subset, f64>>,
}

impl<O: PerformanceOracle + Sync> Evaluator<O> {
    pub fn new(inner: O, workers: usize) -> Self {
        Self { inner, pool: pool(workers), cache: Mutex::new(BTreeMap::new()) }
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    /// Number of distinct subsets evaluated so far.
    pub fn evaluations(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

impl<O: PerformanceOracle + Sync> PerformanceOracle for Evaluator<O> {
    fn evaluate(&self, subset: &Subset) -> Result<f64> {
        if let Some(v) = self.cache.lock().unwrap().get(subset) {
            return Ok(*v);
        }
        let v = self.inner.evaluate(subset)?;
        self.cache.lock().unwrap().insert(subset.clone(), v);
        Ok(v)
    }

    fn evaluate_many(&self, subsets: &[Subset]) -> Vec<Result<f64>> {
        let pending: Vec<Subset> = {
            let cache = self.cache.lock().unwrap();
            let mut seen = std::collections::BTreeSet::new();
            subsets.iter().filter(|s| !cache.contains_key(*s) && seen.insert(*s)).cloned().collect()
        };
        let fresh: Vec<(Subset, Result<f64>)> = self
            .pool
            .install(|| pending.into_par_iter().map(|s| { let v = self.inner.evaluate(&s); (s, v) }).collect());
        let mut errors = BTreeMap::new();
        {
            let mut cache = self.cache.lock().unwrap();
            for (s, v) in fresh {
                match v {
                    Ok(v) => {
                        cache.insert(s, v);
                    }
                    Err(e) => {
                        errors.insert(s, e);
                    }
                }
            }
        }
        let cache = self.cache.lock().unwrap();
        subsets
            .iter()
            .map(|s| match cache.get(s) {
                Some(v) => Ok(*v),
                None => Err(errors.get(s).cloned().expect("every pending subset has a result")),
            })
            .collect()
    }
}

/// Accumulates the normal equations over fixed-size row chunks in parallel and
/// merges them in chunk order.
pub fn parallel_normal_equations(design: &DesignMatrix, values: &[f64], workers: usize) -> NormalEquations {
    let k = design.cols();
    let rows = design.rows().min(values.len());
    let starts: Vec<usize> = (0..rows).step_by(FIT_CHUNK_ROWS).collect();
    let parts: Vec<NormalEquations> = pool(workers).install(|| {
        starts
            .par_iter()
            .map(|&lo| {
                let mut ne = NormalEquations::new(k);
                ne.accumulate(design, values, lo..(lo + FIT_CHUNK_ROWS).min(rows));
                ne
            })
            .collect()
    });
    let mut total = NormalEquations::new(k);
    for part in &parts {
        total.merge(part);
    }
    total
}

pub fn parallel_fit(design: &DesignMatrix, values: &[f64], opts: &FitOptions, workers: usize) -> Result<SurrogateModel> {
    let ne = parallel_normal_equations(design, values, workers);
    fit_from_normal_equations(&ne, design, values, opts)
}
