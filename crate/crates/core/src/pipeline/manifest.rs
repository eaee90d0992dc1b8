use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FORMAT: &str = "fundus-qa-manifest";
pub const MANIFEST_VERSION: u32 = 1;

/// Entries with a grade above this are excluded.
pub const MAX_RETAINED_GRADE: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub retina_path: PathBuf,
    pub vessel_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grade: Option<u8>,
    #[serde(default)]
    pub excluded: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub version: u32,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.id.is_empty() {
                return Err(Error::Manifest("entry with empty id".into()));
            }
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate id `{}`", e.id)));
            }
            if e.retina_path.as_os_str().is_empty() || e.vessel_path.as_os_str().is_empty() {
                return Err(Error::Manifest(format!("entry `{}` has an empty path", e.id)));
            }
            if matches!(e.grade, Some(g) if g > 3) {
                return Err(Error::Manifest(format!("entry `{}` has grade outside 0..=3", e.id)));
            }
        }
        Ok(Self {
            version: MANIFEST_VERSION,
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn included(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| !e.excluded)
    }

    /// Line-delimited JSON: a header object, then one entry per line.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let header = Header {
            format: MANIFEST_FORMAT.into(),
            version: self.version,
        };
        let mut write_line = |v: String| writeln!(out, "{v}").map_err(|e| Error::io(path, e));
        write_line(serde_json::to_string(&header).expect("header serializes"))?;
        for e in &self.entries {
            write_line(serde_json::to_string(e).expect("entry serializes"))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let bad = |line: usize, msg: String| Error::Manifest(format!("{}:{}: {msg}", path.display(), line + 1));
        let (n, first) = lines.next().ok_or_else(|| bad(0, "empty manifest".into()))?;
        let first = first.map_err(|e| Error::io(path, e))?;
        let header: Header = serde_json::from_str(&first).map_err(|e| bad(n, e.to_string()))?;
        if header.format != MANIFEST_FORMAT {
            return Err(bad(n, format!("unknown format `{}`", header.format)));
        }
        if header.version != MANIFEST_VERSION {
            return Err(bad(n, format!("unsupported version {}", header.version)));
        }
        let mut entries = Vec::new();
        for (n, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line).map_err(|e| bad(n, e.to_string()))?);
        }
        Self::new(entries)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestBuild {
    pub manifest: DatasetManifest,
    pub warnings: Vec<String>,
}

fn files_by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let read = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for item in read {
        let item = item.map_err(|e| Error::io(dir, e))?;
        let path = item.path();
        if !path.is_file() {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if stem.starts_with('.') {
            continue;
        }
        if let Some(prev) = out.insert(stem.to_string(), path.clone()) {
            return Err(Error::Manifest(format!(
                "{} and {} share the stem `{stem}`",
                prev.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

/// Reads `id,grade` rows (header required).
fn read_grades(path: &Path) -> Result<BTreeMap<String, u8>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Csv(format!("{}: missing `{name}` column", path.display())))
    };
    let (id_col, grade_col) = (col("id")?, col("grade")?);
    let mut grades = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
        let id = record.get(id_col).unwrap_or("").trim().to_string();
        let grade: u8 = record
            .get(grade_col)
            .unwrap_or("")
            .trim()
            .parse()
            .ok()
            .filter(|g| *g <= 3)
            .ok_or_else(|| Error::Csv(format!("{}: bad grade for `{id}`", path.display())))?;
        grades.insert(id, grade);
    }
    Ok(grades)
}

/// Pairs retina and vessel files by basename stem.
///
/// Unmatched files become warnings. Entries graded above 2 are excluded.
pub fn build_manifest(
    retina_dir: &Path,
    vessel_dir: &Path,
    synthetic_dir: Option<&Path>,
    grade_file: Option<&Path>,
) -> Result<ManifestBuild> {
    let retinas = files_by_stem(retina_dir)?;
    let vessels = files_by_stem(vessel_dir)?;
    let synthetic = synthetic_dir.map(files_by_stem).transpose()?;
    let grades = grade_file.map(read_grades).transpose()?;
    let mut warnings = Vec::new();

    for (stem, path) in &retinas {
        if !vessels.contains_key(stem) {
            warnings.push(format!("retina {} has no vessel tree", path.display()));
        }
    }
    for (stem, path) in &vessels {
        if !retinas.contains_key(stem) {
            warnings.push(format!("vessel tree {} has no retina", path.display()));
        }
    }
    let mut entries = Vec::new();
    for (stem, retina) in &retinas {
        let Some(vessel) = vessels.get(stem) else {
            continue;
        };
        let synthetic_path = synthetic.as_ref().and_then(|s| s.get(stem).cloned());
        if synthetic.is_some() && synthetic_path.is_none() {
            warnings.push(format!("`{stem}` has no synthetic image"));
        }
        let grade = grades.as_ref().and_then(|g| g.get(stem).copied());
        if grades.is_some() && grade.is_none() {
            warnings.push(format!("`{stem}` has no grade"));
        }
        entries.push(ManifestEntry {
            id: stem.clone(),
            retina_path: retina.clone(),
            vessel_path: vessel.clone(),
            synthetic_path,
            grade,
            excluded: matches!(grade, Some(g) if g > MAX_RETAINED_GRADE),
        });
    }
    if let Some(s) = &synthetic {
        for (stem, path) in s {
            if !retinas.contains_key(stem) || !vessels.contains_key(stem) {
                warnings.push(format!("synthetic image {} matches no pair", path.display()));
            }
        }
    }
    if let Some(g) = &grades {
        for id in g.keys() {
            if !entries.iter().any(|e| &e.id == id) {
                warnings.push(format!("grade for unknown id `{id}`"));
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyIntersection(
            "no retina and vessel files share a stem".into(),
        ));
    }
    Ok(ManifestBuild {
        manifest: DatasetManifest::new(entries)?,
        warnings,
    })
}
