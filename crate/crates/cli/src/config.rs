//! Run configuration: a flat `key = value` file plus command-line overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use tasksel_core::selection::default_gamma_grid;
use tasksel_core::synthworld::WorldParams;

use crate::error::{CliError, CliResult};
use crate::format::{fmt_f64, layout_name, parse_layout, read_file};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Synthetic,
    External,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Synthetic => "synthetic",
            Mode::External => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    /// World parameters; `world.k` mirrors `k` once resolved.
    pub world: WorldParams,
    /// Explicit world seed; the run seed is used when absent.
    pub world_seed: Option<u64>,
    pub k: usize,
    pub alpha: usize,
    pub n: usize,
    pub seed: u64,
    pub gamma_grid: Vec<f64>,
    pub holdout_n: usize,
    /// Fraction of each task's training rows used for the sampled subsets.
    pub downsample: f64,
    pub ridge: f64,
    pub output_dir: PathBuf,
    pub workers: usize,
    /// External mode: program run as `<cmd...> <requests> <responses>` when a
    /// response file is missing.
    pub oracle_cmd: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Synthetic,
            world: WorldParams::default(),
            world_seed: None,
            k: 20,
            alpha: 5,
            n: 200,
            seed: 0,
            gamma_grid: default_gamma_grid(),
            holdout_n: 100,
            downsample: 1.0,
            ridge: 0.0,
            output_dir: PathBuf::from("runs"),
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            oracle_cmd: None,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value.trim().parse::<T>().map_err(|_| invalid(format!("{key}: cannot parse {value:?}")))
}

pub fn parse_grid(value: &str) -> CliResult<Vec<f64>> {
    if value.trim() == "default" {
        return Ok(default_gamma_grid());
    }
    value.split(',').map(|g| num::<f64>("gamma_grid", g)).collect()
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let v = value.trim();
        match key.trim() {
            "mode" => {
                self.mode = match v {
                    "synthetic" => Mode::Synthetic,
                    "external" => Mode::External,
                    _ => return Err(invalid(format!("mode must be synthetic or external, got {v:?}"))),
                }
            }
            "k" => self.k = num(key, v)?,
            "alpha" => self.alpha = num(key, v)?,
            "n" => self.n = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "gamma_grid" => self.gamma_grid = parse_grid(v)?,
            "holdout_n" => self.holdout_n = num(key, v)?,
            "downsample" => self.downsample = num(key, v)?,
            "ridge" => self.ridge = num(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "workers" => self.workers = num(key, v)?,
            "oracle_cmd" => self.oracle_cmd = if v.is_empty() { None } else { Some(v.to_string()) },
            "world_p" => self.world.p = num(key, v)?,
            "world_d" => self.world.d = num(key, v)?,
            "world_m" => self.world.m = num(key, v)?,
            "world_a" => self.world.a = num(key, v)?,
            "world_b" => self.world.b = num(key, v)?,
            "world_frac_good" => self.world.frac_good = num(key, v)?,
            "world_sigma" => self.world.sigma = num(key, v)?,
            "world_beta_scale" => self.world.beta_scale = num(key, v)?,
            "world_layout" => self.world.layout = parse_layout(v).map_err(|e| invalid(e.to_string()))?,
            "world_seed" => self.world_seed = Some(num(key, v)?),
            other => return Err(invalid(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| invalid(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v).map_err(|e| invalid(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let mut c = Self::default();
        c.apply_text(&read_file(path)?)?;
        Ok(c)
    }

    /// Checks invariants and propagates `k` and the seed into the world.
    pub fn resolve(mut self) -> CliResult<Self> {
        self.world.k = self.k;
        self.world.seed = self.world_seed.unwrap_or(self.seed);
        if self.k < 2 {
            return Err(invalid("k must be at least 2"));
        }
        if self.alpha < 1 || self.alpha >= self.k {
            return Err(invalid(format!("need 1 <= alpha < k, got alpha={} k={}", self.alpha, self.k)));
        }
        if self.n < 1 {
            return Err(invalid("n must be at least 1"));
        }
        if self.holdout_n < 2 {
            return Err(invalid("holdout_n must be at least 2"));
        }
        if self.gamma_grid.is_empty() || self.gamma_grid.iter().any(|g| !g.is_finite()) {
            return Err(invalid("gamma_grid must be a non-empty list of finite values"));
        }
        if !(self.downsample > 0.0 && self.downsample <= 1.0) {
            return Err(invalid(format!("downsample must lie in (0, 1], got {}", self.downsample)));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(invalid("ridge must be finite and non-negative"));
        }
        if self.workers < 1 {
            return Err(invalid("workers must be at least 1"));
        }
        if self.mode == Mode::Synthetic {
            self.world.validate().map_err(|e| invalid(e.to_string()))?;
        }
        Ok(self)
    }

    /// The settings that determine results, one `key = value` per line in a
    /// fixed order. Output location, worker count and the oracle command are
    /// execution details and excluded.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let grid: Vec<String> = self.gamma_grid.iter().map(|g| fmt_f64(*g)).collect();
        writeln!(s, "mode = {}", self.mode.name()).unwrap();
        writeln!(s, "k = {}", self.k).unwrap();
        writeln!(s, "alpha = {}", self.alpha).unwrap();
        writeln!(s, "n = {}", self.n).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        writeln!(s, "gamma_grid = {}", grid.join(",")).unwrap();
        writeln!(s, "holdout_n = {}", self.holdout_n).unwrap();
        writeln!(s, "downsample = {}", fmt_f64(self.downsample)).unwrap();
        writeln!(s, "ridge = {}", fmt_f64(self.ridge)).unwrap();
        if self.mode == Mode::Synthetic {
            let w = &self.world;
            writeln!(s, "world_p = {}", w.p).unwrap();
            writeln!(s, "world_d = {}", w.d).unwrap();
            writeln!(s, "world_m = {}", w.m).unwrap();
            writeln!(s, "world_a = {}", fmt_f64(w.a)).unwrap();
            writeln!(s, "world_b = {}", fmt_f64(w.b)).unwrap();
            writeln!(s, "world_frac_good = {}", fmt_f64(w.frac_good)).unwrap();
            writeln!(s, "world_sigma = {}", fmt_f64(w.sigma)).unwrap();
            writeln!(s, "world_beta_scale = {}", fmt_f64(w.beta_scale)).unwrap();
            writeln!(s, "world_layout = {}", layout_name(w.layout)).unwrap();
            writeln!(s, "world_seed = {}", w.seed).unwrap();
        }
        s
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(format!("run-{}", &self.hash()[..16]))
    }
}

/// `key = value` pairs of `a` and `b` that differ, ignoring `ignored` keys.
pub fn config_diff(a: &str, b: &str, ignored: &[&str]) -> Vec<String> {
    let pairs = |s: &str| -> Vec<(String, String)> {
        s.lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .filter(|(k, _)| !ignored.contains(&k.as_str()))
            .collect()
    };
    let (pa, pb) = (pairs(a), pairs(b));
    let mut keys: Vec<&String> = pa.iter().chain(&pb).map(|(k, _)| k).collect();
    keys.sort();
    keys.dedup();
    let lookup = |p: &[(String, String)], k: &str| p.iter().find(|(x, _)| x == k).map(|(_, v)| v.clone());
    keys.into_iter()
        .filter_map(|k| {
            let (x, y) = (lookup(&pa, k), lookup(&pb, k));
            (x != y).then(|| format!("{k}: {} vs {}", x.as_deref().unwrap_or("-"), y.as_deref().unwrap_or("-")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_round_trips() {
        let mut c = RunConfig::default();
        c.apply_text("k = 12\nalpha=3\n# comment\nworld_sigma = 0.25\ngamma_grid = -0.1,0,0.1\nworld_layout = isotropic\n").unwrap();
        let c = c.resolve().unwrap();
        let mut again = RunConfig::default();
        again.apply_text(&c.canonical()).unwrap();
        let again = again.resolve().unwrap();
        assert_eq!(again.canonical(), c.canonical());
        assert_eq!(again.world, c.world);
        assert_eq!(c.world.k, 12);
    }

    #[test]
    fn invariants_are_enforced() {
        for (key, value) in [("alpha", "20"), ("holdout_n", "1"), ("downsample", "0"), ("world_b", "0.01")] {
            let mut c = RunConfig::default();
            c.set(key, value).unwrap();
            let err = c.resolve().unwrap_err();
            assert_eq!(err.exit_code(), 2, "{key}");
        }
        assert!(RunConfig::default().set("nonsense", "1").is_err());
    }

    #[test]
    fn execution_settings_do_not_change_the_hash() {
        let a = RunConfig::default().resolve().unwrap();
        let mut b = a.clone();
        b.workers = 1;
        b.output_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.run_dir().file_name(), b.clone().resolve().unwrap().run_dir().file_name());
    }

    #[test]
    fn diff_lists_changed_keys() {
        let d = config_diff("k = 1\nseed = 2\n", "k = 3\nseed = 4\n", &["seed"]);
        assert_eq!(d, vec!["k: 1 vs 3".to_string()]);
    }
}
