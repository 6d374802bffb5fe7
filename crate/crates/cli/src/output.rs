//! Run directory, emitted files and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Serialize)]
struct Stage {
    name: String,
    seconds: f64,
}

#[derive(Serialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Serialize)]
struct FileEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

pub struct Run {
    dir: PathBuf,
    recipe: String,
    config: Value,
    files: Vec<String>,
    stages: Vec<Stage>,
    assertions: Vec<Assertion>,
}

impl Run {
    /// Opens `dir` for a fresh run. A directory holding a previous manifest is
    /// cleared of the files that manifest lists when `force` is set; any other
    /// non-empty directory is refused.
    pub fn new(dir: &Path, recipe: &str, config: Value, force: bool) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let previous = dir.join(MANIFEST);
        if force && previous.exists() {
            let old: Value = serde_json::from_str(&fs::read_to_string(&previous)?)?;
            for f in old["files"].as_array().into_iter().flatten() {
                if let Some(p) = f["path"].as_str() {
                    let _ = fs::remove_file(dir.join(p));
                }
            }
            fs::remove_file(&previous)?;
        }
        if fs::read_dir(dir)?.next().is_some() {
            bail!("output directory {} is not empty (use --force to replace a previous run)", dir.display());
        }
        Ok(Self { dir: dir.to_path_buf(), recipe: recipe.into(), config, files: vec![], stages: vec![], assertions: vec![] })
    }

    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f();
        self.stages.push(Stage { name: name.into(), seconds: t.elapsed().as_secs_f64() });
        out
    }

    fn register(&mut self, name: &str) -> Result<PathBuf> {
        if self.files.iter().any(|f| f == name) || name == MANIFEST {
            bail!("file {name} written twice");
        }
        self.files.push(name.into());
        Ok(self.dir.join(name))
    }

    pub fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let path = self.register(name)?;
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Raw little-endian float64 array, row-major, plus a JSON sidecar.
    pub fn raw(&mut self, stem: &str, shape: &[usize], data: &[f64], meta: Value) -> Result<()> {
        if shape.iter().product::<usize>() != data.len() {
            bail!("array {stem}: shape {shape:?} does not match {} values", data.len());
        }
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(self.register(&format!("{stem}.f64"))?, bytes)?;
        let sidecar = json!({
            "dtype": "float64",
            "byte_order": "little-endian",
            "layout": "row-major",
            "shape": shape,
            "meta": meta,
        });
        self.json(&format!("{stem}.json"), &sidecar)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.register(name)?;
        fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion { name: name.into(), pass, detail: detail.into() });
    }

    /// Writes the manifest and returns whether every assertion passed.
    pub fn finish(self) -> Result<bool> {
        let mut files = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let data = fs::read(self.dir.join(name))?;
            let digest = Sha256::digest(&data);
            files.push(FileEntry {
                path: name.clone(),
                bytes: data.len() as u64,
                sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            });
        }
        let pass = self.assertions.iter().all(|a| a.pass);
        let failed: Vec<&str> = self.assertions.iter().filter(|a| !a.pass).map(|a| a.name.as_str()).collect();
        let manifest = json!({
            "recipe": self.recipe,
            "config": self.config,
            "versions": {
                "membrane": env!("CARGO_PKG_VERSION"),
                "manifest_format": 1,
            },
            "threads": rayon::current_num_threads(),
            "stages": self.stages,
            "assertions": self.assertions,
            "failed": failed,
            "pass": pass,
            "files": files,
        });
        fs::write(self.dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
        let mut out = std::io::stdout().lock();
        for a in &self.assertions {
            let _ = writeln!(out, "{} {}: {}", if a.pass { "PASS" } else { "FAIL" }, a.name, a.detail);
        }
        let _ = writeln!(out, "{} ({})", if pass { "pass" } else { "fail" }, self.dir.display());
        Ok(pass)
    }
}

/// Shortest round-trip decimal form.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}
