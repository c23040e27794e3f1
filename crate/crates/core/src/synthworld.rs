//! Linear-Gaussian multitask world.
//!
//! Task `i` (0 = target) has coefficients `beta_i` in `R^p` and labels
//! `y = x^T beta_i + eps`, `x ~ N(0, Id)`, `eps ~ N(0, sigma^2)`. Good tasks sit
//! within distance `a` of the target's coefficients and bad tasks at distance
//! at least `b`. Multitask training is hard parameter sharing, i.e. one pooled
//! least-squares fit over `S ∪ {target}`, and `f(S)` is the resulting
//! prediction MSE on the target validation split.

use alloc::borrow::Cow;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky, CompensatedSum, Matrix};
use crate::oracle::PerformanceOracle;
use crate::rng::{Domain, SeedStream};
use crate::subset::Subset;

/// How source-task offsets `beta_i - beta_target` are oriented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OffsetLayout {
    /// Every offset along one shared random unit direction, so source tasks
    /// differ from the target only in how far they are shifted.
    #[default]
    Collinear,
    /// An independent uniform direction per task.
    Isotropic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldParams {
    pub k: usize,
    /// Feature dimension.
    pub p: usize,
    /// Training rows per task (target included).
    pub d: usize,
    /// Target validation rows.
    pub m: usize,
    /// Good-task radius.
    pub a: f64,
    /// Bad-task radius, `b > a`.
    pub b: f64,
    pub frac_good: f64,
    /// Label noise standard deviation.
    pub sigma: f64,
    /// Norm of the target coefficients.
    pub beta_scale: f64,
    pub layout: OffsetLayout,
    pub seed: u64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self { k: 20, p: 10, d: 500, m: 500, a: 0.1, b: 2.0, frac_good: 0.5, sigma: 0.1, beta_scale: 1.0, layout: OffsetLayout::default(), seed: 0 }
    }
}

impl WorldParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.a, self.b, self.frac_good, self.sigma, self.beta_scale].iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::invalid("world parameters must be finite"));
        }
        if !(self.a >= 0.0 && self.b > self.a) {
            return Err(Error::invalid(alloc::format!("need b > a >= 0, got a={}, b={}", self.a, self.b)));
        }
        if self.p < 1 || self.m < 1 {
            return Err(Error::invalid("p and m must be at least 1"));
        }
        if self.d < self.p {
            return Err(Error::invalid(alloc::format!("d={} must be at least p={}", self.d, self.p)));
        }
        if !(0.0..=1.0).contains(&self.frac_good) {
            return Err(Error::invalid("frac_good must lie in [0, 1]"));
        }
        if self.sigma < 0.0 || self.beta_scale <= 0.0 {
            return Err(Error::invalid("need sigma >= 0 and beta_scale > 0"));
        }
        Ok(())
    }

    /// `floor(frac_good * k)`.
    pub fn good_count(&self) -> usize {
        let exact = self.frac_good * self.k as f64;
        // absorb representation error such as 0.3 * 10 = 2.9999999999999996
        libm::floor(exact + 1e-9) as usize
    }
}

/// Features and labels of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl TaskData {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::invalid("feature rows and labels differ in length"));
        }
        Ok(Self { x, y })
    }

    fn generate(rng: &mut ChaCha8Rng, rows: usize, beta: &[f64], sigma: f64) -> Self {
        let p = beta.len();
        let mut xs = Vec::with_capacity(rows * p);
        let mut y = Vec::with_capacity(rows);
        for _ in 0..rows {
            let start = xs.len();
            for _ in 0..p {
                xs.push(rng.sample::<f64, _>(StandardNormal));
            }
            let noise: f64 = rng.sample(StandardNormal);
            y.push(linalg::dot(&xs[start..], beta) + sigma * noise);
        }
        Self { x: Matrix::from_row_major(rows, p, xs).expect("rows x p"), y }
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }

    /// `X^T X` and `X^T y` over the first `rows` rows.
    pub fn gram(&self, rows: usize) -> (Matrix, Vec<f64>) {
        let p = self.x.cols();
        let mut g = Matrix::zeros(p, p);
        let mut h = alloc::vec![0.0; p];
        for r in 0..rows {
            let xr = self.x.row(r);
            for i in 0..p {
                h[i] += xr[i] * self.y[r];
                for j in i..p {
                    g[(i, j)] += xr[i] * xr[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                g[(i, j)] = g[(j, i)];
            }
        }
        (g, h)
    }
}

/// Per-task sufficient statistics for pooled fits at one row count.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledStats {
    rows: usize,
    grams: Vec<(Matrix, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    params: WorldParams,
    betas: Vec<Vec<f64>>,
    train: Vec<TaskData>,
    validation: TaskData,
    good_mask: Vec<bool>,
    full_stats: PooledStats,
}

fn random_unit(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let n = linalg::norm2(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Generates a world deterministically from `params.seed`.
///
/// The target coefficients are a uniform direction scaled to `beta_scale`.
/// Good tasks are offset by a uniform direction times a radius uniform in
/// `(0, a]`, bad tasks by a radius uniform in `[b, 2b)`. Which tasks are good
/// is a uniform choice of `floor(frac_good * k)` ids.
pub fn generate_world(params: &WorldParams) -> Result<SyntheticWorld> {
    params.validate()?;
    let (k, p) = (params.k, params.p);
    let stream = SeedStream::new(params.seed, Domain::World);

    let mut rng = stream.rng(0);
    let target: Vec<f64> = random_unit(&mut rng, p).into_iter().map(|x| x * params.beta_scale).collect();
    let mut good_mask = alloc::vec![false; k];
    for i in rand::seq::index::sample(&mut rng, k, params.good_count().min(k)) {
        good_mask[i] = true;
    }
    let shared = random_unit(&mut rng, p);
    let mut betas = Vec::with_capacity(k + 1);
    betas.push(target.clone());
    for &good in &good_mask {
        let u: f64 = rng.random();
        let radius = if good { params.a * (1.0 - u) } else { params.b * (1.0 + u) };
        let dir = match params.layout {
            OffsetLayout::Collinear => shared.clone(),
            OffsetLayout::Isotropic => random_unit(&mut rng, p),
        };
        betas.push(target.iter().zip(&dir).map(|(t, d)| t + radius * d).collect());
    }

    // each dataset has its own stream so worlds with more tasks share prefixes
    let train: Vec<TaskData> = (0..=k)
        .map(|t| TaskData::generate(&mut stream.rng(1 + t as u64), params.d, &betas[t], params.sigma))
        .collect();
    let validation = TaskData::generate(&mut stream.rng(u64::MAX), params.m, &betas[0], params.sigma);

    let tol = 1e-9 * (1.0 + params.b);
    for (i, &good) in good_mask.iter().enumerate() {
        let dist = distance(&betas[i + 1], &target);
        let ok = if good { dist <= params.a + tol } else { dist >= params.b - tol };
        if !ok {
            return Err(Error::invalid(alloc::format!("task {} violates its radius bound (distance {dist})", i + 1)));
        }
    }

    let full_stats = PooledStats { rows: params.d, grams: train.iter().map(|t| t.gram(params.d)).collect() };
    Ok(SyntheticWorld { params: params.clone(), betas, train, validation, good_mask, full_stats })
}

impl SyntheticWorld {
    /// Assembles a world from explicit coefficients and data (index 0 of
    /// `betas` and `train` is the target). `params.k`, `p`, `d` and `m` must
    /// match the shapes; the radius bounds are not enforced.
    pub fn from_parts(
        params: WorldParams,
        betas: Vec<Vec<f64>>,
        train: Vec<TaskData>,
        validation: TaskData,
        good_mask: Vec<bool>,
    ) -> Result<Self> {
        let (k, p) = (params.k, params.p);
        let shapes_ok = betas.len() == k + 1
            && betas.iter().all(|b| b.len() == p)
            && train.len() == k + 1
            && train.iter().all(|t| t.x.cols() == p && t.x.rows() == params.d && t.y.len() == params.d)
            && validation.x.cols() == p
            && validation.rows() == params.m
            && validation.x.rows() == params.m
            && good_mask.len() == k;
        if !shapes_ok {
            return Err(Error::invalid("world parts do not match the declared parameters"));
        }
        let full_stats = PooledStats { rows: params.d, grams: train.iter().map(|t| t.gram(params.d)).collect() };
        Ok(Self { params, betas, train, validation, good_mask, full_stats })
    }

    pub fn params(&self) -> &WorldParams {
        &self.params
    }

    pub fn k(&self) -> usize {
        self.params.k
    }

    /// Coefficients, index 0 is the target.
    pub fn betas(&self) -> &[Vec<f64>] {
        &self.betas
    }

    /// Training data of task `t` (0 = target).
    pub fn task(&self, t: usize) -> &TaskData {
        &self.train[t]
    }

    pub fn validation(&self) -> &TaskData {
        &self.validation
    }

    pub fn good_mask(&self) -> &[bool] {
        &self.good_mask
    }

    pub fn good_tasks(&self) -> Subset {
        Subset::new(self.good_mask.iter().enumerate().filter(|(_, g)| **g).map(|(i, _)| i + 1))
            .expect("distinct ids")
    }

    /// `ceil(downsample * d)`, validated.
    pub fn rows_for(&self, downsample: f64) -> Result<usize> {
        if !(downsample > 0.0 && downsample <= 1.0) {
            return Err(Error::invalid(alloc::format!("downsample={downsample} must lie in (0, 1]")));
        }
        let d = self.params.d;
        Ok((libm::ceil(downsample * d as f64) as usize).clamp(1, d))
    }

    fn stats(&self, downsample: f64) -> Result<Cow<'_, PooledStats>> {
        let rows = self.rows_for(downsample)?;
        if rows == self.params.d {
            return Ok(Cow::Borrowed(&self.full_stats));
        }
        Ok(Cow::Owned(PooledStats { rows, grams: self.train.iter().map(|t| t.gram(rows)).collect() }))
    }

    /// An oracle evaluating `f` with a fixed downsampling ratio; statistics
    /// for the reduced row count are computed once.
    pub fn evaluator(&self, downsample: f64) -> Result<WorldOracle<'_>> {
        Ok(WorldOracle { world: self, stats: self.stats(downsample)? })
    }
}

/// [`PerformanceOracle`] view of a world at one downsampling ratio.
#[derive(Debug, Clone)]
pub struct WorldOracle<'w> {
    world: &'w SyntheticWorld,
    stats: Cow<'w, PooledStats>,
}

impl WorldOracle<'_> {
    pub fn world(&self) -> &SyntheticWorld {
        self.world
    }

    /// Pooled least-squares coefficients over `subset ∪ {target}`.
    pub fn pooled_fit(&self, subset: &Subset) -> Result<Vec<f64>> {
        let world = self.world;
        subset.check_range(world.k())?;
        let p = world.params.p;
        if self.stats.rows * (subset.alpha() + 1) < p {
            return Err(Error::invalid(alloc::format!(
                "{} rows per task over {} tasks cannot determine {p} coefficients",
                self.stats.rows,
                subset.alpha() + 1
            )));
        }
        let (g0, h0) = &self.stats.grams[0];
        let mut g = g0.clone();
        let mut h = h0.clone();
        for t in subset.ids() {
            let (gt, ht) = &self.stats.grams[t];
            g.add_assign(gt);
            h.iter_mut().zip(ht).for_each(|(a, b)| *a += b);
        }
        let chol = Cholesky::factor(&g)
            .map_err(|columns| Error::SingularDesign { context: "pooled gram", columns })?;
        Ok(chol.solve(&h))
    }

    pub fn evaluate_f(&self, subset: &Subset) -> Result<f64> {
        let coef = self.pooled_fit(subset)?;
        Ok(validation_mse(&self.world.validation, &coef))
    }
}

impl PerformanceOracle for WorldOracle<'_> {
    fn evaluate(&self, subset: &Subset) -> Result<f64> {
        self.evaluate_f(subset)
    }
}

fn validation_mse(val: &TaskData, coef: &[f64]) -> f64 {
    let mut s = CompensatedSum::default();
    for r in 0..val.rows() {
        let e = linalg::dot(val.x.row(r), coef) - val.y[r];
        s.add(e * e);
    }
    s.value() / val.rows() as f64
}

/// Pooled hard-parameter-sharing fit over `subset ∪ {target}` on the full data.
pub fn pooled_fit(world: &SyntheticWorld, subset: &Subset) -> Result<Vec<f64>> {
    world.evaluator(1.0)?.pooled_fit(subset)
}

/// Target validation MSE of the pooled fit, using the first
/// `ceil(downsample * d)` rows of every participating task.
pub fn evaluate_f(world: &SyntheticWorld, subset: &Subset, downsample: f64) -> Result<f64> {
    world.evaluator(downsample)?.evaluate_f(subset)
}

/// Single-task baseline `f(∅)`.
pub fn stl_baseline(world: &SyntheticWorld) -> Result<f64> {
    evaluate_f(world, &Subset::empty(), 1.0)
}

/// `||B - beta_target||^2` for the pooled fit, the analysis-side view of `f`.
pub fn coefficient_error(world: &SyntheticWorld, subset: &Subset) -> Result<f64> {
    let coef = pooled_fit(world, subset)?;
    let dist = distance(&coef, &world.betas[0]);
    Ok(dist * dist)
}
