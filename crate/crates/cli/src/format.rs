//! Versioned tab-separated text formats for models, subsets, worlds,
//! selections and exhaustive tables.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! value parses back to the identical bit pattern.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use tasksel_core::oracle::ExhaustiveReport;
use tasksel_core::synthworld::{OffsetLayout, SyntheticWorld, TaskData, WorldParams};
use tasksel_core::{SelectionResult, Subset, SurrogateModel};

use crate::error::{CliError, CliResult};

pub const MODEL_TAG: &str = "#tasksel-surrogate v1";
pub const SUBSETS_TAG: &str = "#tasksel-subsets v1";
pub const WORLD_TAG: &str = "#tasksel-world v1";
pub const SELECTION_TAG: &str = "#tasksel-selection v1";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Format(msg.into())
}

pub fn parse_f64(s: &str, what: &str) -> CliResult<f64> {
    s.trim().parse::<f64>().map_err(|_| bad(format!("{what}: not a number: {s:?}")))
}

pub fn parse_usize(s: &str, what: &str) -> CliResult<usize> {
    s.trim().parse::<usize>().map_err(|_| bad(format!("{what}: not a non-negative integer: {s:?}")))
}

pub fn parse_u64(s: &str, what: &str) -> CliResult<u64> {
    s.trim().parse::<u64>().map_err(|_| bad(format!("{what}: not a non-negative integer: {s:?}")))
}

/// Space-separated ids; the empty string is the empty subset.
pub fn parse_tasks(s: &str) -> CliResult<Subset> {
    let ids = s.split_whitespace().map(|t| parse_usize(t, "task id")).collect::<CliResult<Vec<_>>>()?;
    Subset::new(ids).map_err(|e| bad(e.to_string()))
}

pub fn layout_name(layout: OffsetLayout) -> &'static str {
    match layout {
        OffsetLayout::Collinear => "collinear",
        OffsetLayout::Isotropic => "isotropic",
    }
}

pub fn parse_layout(s: &str) -> CliResult<OffsetLayout> {
    match s.trim() {
        "collinear" => Ok(OffsetLayout::Collinear),
        "isotropic" => Ok(OffsetLayout::Isotropic),
        other => Err(bad(format!("unknown offset layout {other:?}"))),
    }
}

/// Writes through a temporary file in the same directory and renames it into place.
pub fn atomic_write(path: &Path, contents: &str) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Append-only persistence: creates `path`, or accepts it unchanged if it
/// already holds exactly `contents`.
pub fn write_once(path: &Path, contents: &str) -> CliResult<()> {
    match fs::read_to_string(path) {
        Ok(existing) if existing == contents => Ok(()),
        Ok(_) => Err(bad(format!("{} exists with different contents; refusing to overwrite", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => atomic_write(path, contents),
        Err(e) => Err(CliError::io(path, e)),
    }
}

pub fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Ordered `key<TAB>value` lines after a schema tag.
#[derive(Debug, Default)]
pub struct Fields {
    entries: Vec<(String, Vec<String>)>,
}

impl Fields {
    pub fn parse(text: &str, tag: &str) -> CliResult<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(first) if first.trim_end() == tag => {}
            other => return Err(bad(format!("expected header {tag:?}, found {:?}", other.unwrap_or("")))),
        }
        let mut entries = Vec::new();
        for line in lines {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let key = parts.next().unwrap_or_default().to_string();
            entries.push((key, parts.map(str::to_string).collect()));
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> CliResult<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .and_then(|(_, v)| v.first())
            .map(String::as_str)
            .ok_or_else(|| bad(format!("missing field {key:?}")))
    }

    pub fn all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a [String]> + 'a {
        self.entries.iter().filter(move |(k, _)| k == key).map(|(_, v)| v.as_slice())
    }

    pub fn f64(&self, key: &str) -> CliResult<f64> {
        parse_f64(self.get(key)?, key)
    }

    pub fn usize(&self, key: &str) -> CliResult<usize> {
        parse_usize(self.get(key)?, key)
    }

    pub fn u64(&self, key: &str) -> CliResult<u64> {
        parse_u64(self.get(key)?, key)
    }
}

pub fn model_to_string(model: &SurrogateModel) -> String {
    let mut s = String::new();
    writeln!(s, "{MODEL_TAG}").unwrap();
    writeln!(s, "k\t{}", model.k()).unwrap();
    writeln!(s, "alpha\t{}", model.alpha()).unwrap();
    writeln!(s, "n\t{}", model.n()).unwrap();
    writeln!(s, "seed\t{}", model.seed()).unwrap();
    writeln!(s, "ridge\t{}", fmt_f64(model.ridge())).unwrap();
    writeln!(s, "train_mse\t{}", fmt_f64(model.train_mse())).unwrap();
    writeln!(s, "condition_estimate\t{}", fmt_f64(model.condition_estimate())).unwrap();
    for (i, t) in model.theta().iter().enumerate() {
        writeln!(s, "theta\t{}\t{}", i + 1, fmt_f64(*t)).unwrap();
    }
    s
}

pub fn parse_model(text: &str) -> CliResult<SurrogateModel> {
    let f = Fields::parse(text, MODEL_TAG)?;
    let k = f.usize("k")?;
    let mut theta = Vec::with_capacity(k);
    for (i, entry) in f.all("theta").enumerate() {
        if entry.len() != 2 || parse_usize(&entry[0], "theta index")? != i + 1 {
            return Err(bad(format!("theta entry {} is malformed or out of order", i + 1)));
        }
        theta.push(parse_f64(&entry[1], "theta")?);
    }
    if theta.len() != k {
        return Err(bad(format!("expected {k} theta entries, found {}", theta.len())));
    }
    SurrogateModel::from_parts(
        theta,
        f.usize("alpha")?,
        f.usize("n")?,
        f.f64("train_mse")?,
        f.u64("seed")?,
        f.f64("ridge")?,
        f.f64("condition_estimate")?,
    )
    .map_err(|e| bad(e.to_string()))
}

pub fn subsets_to_string(subsets: &[Subset]) -> String {
    let mut s = String::new();
    writeln!(s, "{SUBSETS_TAG}").unwrap();
    for (i, sub) in subsets.iter().enumerate() {
        writeln!(s, "{}\t{}", i + 1, sub.to_id_list()).unwrap();
    }
    s
}

/// Parses a subsets file; ids must run `1..=n` in order.
pub fn parse_subsets(text: &str) -> CliResult<Vec<Subset>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim_end) != Some(SUBSETS_TAG) {
        return Err(bad(format!("expected header {SUBSETS_TAG:?}")));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id, tasks) = line
            .split_once('\t')
            .ok_or_else(|| bad(format!("line {}: expected id<TAB>tasks", lineno + 2)))?;
        if parse_usize(id, "id")? != out.len() + 1 {
            return Err(bad(format!("line {}: ids must be consecutive from 1", lineno + 2)));
        }
        out.push(parse_tasks(tasks)?);
    }
    Ok(out)
}

pub fn world_to_string(p: &WorldParams) -> String {
    let mut s = String::new();
    writeln!(s, "{WORLD_TAG}").unwrap();
    writeln!(s, "k\t{}", p.k).unwrap();
    writeln!(s, "p\t{}", p.p).unwrap();
    writeln!(s, "d\t{}", p.d).unwrap();
    writeln!(s, "m\t{}", p.m).unwrap();
    writeln!(s, "a\t{}", fmt_f64(p.a)).unwrap();
    writeln!(s, "b\t{}", fmt_f64(p.b)).unwrap();
    writeln!(s, "frac_good\t{}", fmt_f64(p.frac_good)).unwrap();
    writeln!(s, "sigma\t{}", fmt_f64(p.sigma)).unwrap();
    writeln!(s, "beta_scale\t{}", fmt_f64(p.beta_scale)).unwrap();
    writeln!(s, "layout\t{}", layout_name(p.layout)).unwrap();
    writeln!(s, "seed\t{}", p.seed).unwrap();
    s
}

pub fn parse_world(text: &str) -> CliResult<WorldParams> {
    let f = Fields::parse(text, WORLD_TAG)?;
    Ok(WorldParams {
        k: f.usize("k")?,
        p: f.usize("p")?,
        d: f.usize("d")?,
        m: f.usize("m")?,
        a: f.f64("a")?,
        b: f.f64("b")?,
        frac_good: f.f64("frac_good")?,
        sigma: f.f64("sigma")?,
        beta_scale: f.f64("beta_scale")?,
        layout: parse_layout(f.get("layout")?)?,
        seed: f.u64("seed")?,
    })
}

fn matrix_rows(data: &TaskData) -> String {
    let mut s = String::new();
    let p = data.x.cols();
    let header: Vec<String> = (1..=p).map(|j| format!("x{j}")).chain(["y".to_string()]).collect();
    writeln!(s, "{}", header.join("\t")).unwrap();
    for r in 0..data.rows() {
        let row: Vec<String> = data.x.row(r).iter().chain([&data.y[r]]).map(|v| fmt_f64(*v)).collect();
        writeln!(s, "{}", row.join("\t")).unwrap();
    }
    s
}

/// Writes every generated matrix of `world` into `dir` for external inspection:
/// `betas.tsv`, `good_mask.tsv`, `task_<t>.tsv` (t = 0 is the target) and `validation.tsv`.
pub fn dump_world(world: &SyntheticWorld, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let p = world.params().p;
    let mut betas = String::new();
    let header: Vec<String> = (1..=p).map(|j| format!("b{j}")).collect();
    writeln!(betas, "task\t{}", header.join("\t")).unwrap();
    for (t, b) in world.betas().iter().enumerate() {
        let row: Vec<String> = b.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(betas, "{t}\t{}", row.join("\t")).unwrap();
    }
    atomic_write(&dir.join("betas.tsv"), &betas)?;
    let mut mask = String::from("task\tgood\n");
    for (i, g) in world.good_mask().iter().enumerate() {
        writeln!(mask, "{}\t{}", i + 1, u8::from(*g)).unwrap();
    }
    atomic_write(&dir.join("good_mask.tsv"), &mask)?;
    for t in 0..=world.k() {
        atomic_write(&dir.join(format!("task_{t}.tsv")), &matrix_rows(world.task(t)))?;
    }
    atomic_write(&dir.join("validation.tsv"), &matrix_rows(world.validation()))
}

/// A thresholding outcome together with the evaluated grid candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionFile {
    pub selection: SelectionResult,
    /// `(gamma, subset, value)` for each distinct induced subset, if evaluated.
    pub candidates: Vec<(f64, Subset, f64)>,
}

pub fn selection_to_string(sel: &SelectionFile) -> String {
    let r = &sel.selection;
    let mut s = String::new();
    writeln!(s, "{SELECTION_TAG}").unwrap();
    writeln!(s, "gamma\t{}", fmt_f64(r.gamma)).unwrap();
    writeln!(s, "selected\t{}", r.selected.to_id_list()).unwrap();
    writeln!(s, "stl_baseline\t{}", fmt_f64(r.stl_baseline)).unwrap();
    for (i, score) in r.scores.iter().enumerate() {
        writeln!(s, "score\t{}\t{}", i + 1, fmt_f64(*score)).unwrap();
    }
    for (g, sub, v) in &sel.candidates {
        writeln!(s, "candidate\t{}\t{}\t{}", fmt_f64(*g), sub.to_id_list(), fmt_f64(*v)).unwrap();
    }
    s
}

pub fn parse_selection(text: &str) -> CliResult<SelectionFile> {
    let f = Fields::parse(text, SELECTION_TAG)?;
    let mut scores = Vec::new();
    for (i, e) in f.all("score").enumerate() {
        if e.len() != 2 || parse_usize(&e[0], "score index")? != i + 1 {
            return Err(bad(format!("score entry {} is malformed", i + 1)));
        }
        scores.push(parse_f64(&e[1], "score")?);
    }
    let mut candidates = Vec::new();
    for e in f.all("candidate") {
        if e.len() != 3 {
            return Err(bad("candidate entry needs gamma, tasks and value"));
        }
        candidates.push((parse_f64(&e[0], "gamma")?, parse_tasks(&e[1])?, parse_f64(&e[2], "value")?));
    }
    Ok(SelectionFile {
        selection: SelectionResult {
            gamma: f.f64("gamma")?,
            selected: parse_tasks(f.get("selected")?)?,
            scores,
            stl_baseline: f.f64("stl_baseline")?,
        },
        candidates,
    })
}

/// `tasks<TAB>value` rows in enumeration order, with a header row.
pub fn exhaustive_to_string(report: &ExhaustiveReport) -> String {
    let mut s = String::from("tasks\tvalue\n");
    for (sub, v) in &report.table {
        writeln!(s, "{}\t{}", sub.to_id_list(), fmt_f64(*v)).unwrap();
    }
    s
}

pub fn parse_exhaustive_table(text: &str) -> CliResult<Vec<(Subset, f64)>> {
    let mut lines = text.lines();
    if lines.next() != Some("tasks\tvalue") {
        return Err(bad("expected header tasks<TAB>value"));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (t, v) = l.split_once('\t').ok_or_else(|| bad("expected tasks<TAB>value"))?;
            Ok((parse_tasks(t)?, parse_f64(v, "value")?))
        })
        .collect()
}
