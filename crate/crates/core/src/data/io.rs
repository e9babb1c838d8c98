//! Sequence files and dataset manifests.
//!
//! Sequence file (UTF-8 text, `\n` line endings):
//!
//! ```text
//! trxos-seq 1
//! source_id <id>
//! class <name>            (line omitted when unlabeled)
//! joints <J>
//! frames <T>
//! <3·J numbers>           (T lines, one frame each: x y z of joint 0, joint 1, ...)
//! ```
//!
//! Numbers are written in Rust's shortest round-trip decimal form, so
//! write-then-read reproduces every f64 bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use super::preprocess::{preprocess, Expectations};
use super::{ClassEntry, DatasetIndex, SkeletonSequence, Split};
use crate::error::{Error, Result};
use crate::exec;

const SEQ_MAGIC: &str = "trxos-seq 1";
pub const SEQ_EXT: &str = "seq";
pub const MANIFEST: &str = "manifest.json";

pub fn format_sequence(seq: &SkeletonSequence) -> String {
    let mut out = String::new();
    out.push_str(SEQ_MAGIC);
    out.push('\n');
    let _ = writeln!(out, "source_id {}", seq.source_id);
    if let Some(c) = &seq.class_label {
        let _ = writeln!(out, "class {c}");
    }
    let _ = writeln!(out, "joints {}", seq.joints());
    let _ = writeln!(out, "frames {}", seq.frames());
    for t in 0..seq.frames() {
        let row: Vec<String> = seq.frame(t).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_sequence(text: &str, origin: &Path) -> Result<SkeletonSequence> {
    let bad = |msg: String| Error::format(origin, msg);
    let mut lines = text.lines().enumerate();
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| bad(format!("missing {what}")))
    };
    let (_, magic) = next("header")?;
    if magic.trim_end() != SEQ_MAGIC {
        return Err(bad(format!("expected `{SEQ_MAGIC}`, found `{magic}`")));
    }
    let field = |line: &str, key: &str| -> Option<String> {
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .map(str::to_string)
    };
    let (_, line) = next("source_id")?;
    let source_id = field(line, "source_id").ok_or_else(|| bad("expected source_id".into()))?;
    let (_, mut line) = next("joints")?;
    let class_label = field(line, "class");
    if class_label.is_some() {
        line = next("joints")?.1;
    }
    let parse_count = |line: &str, key: &str| -> Result<usize> {
        field(line, key)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad(format!("expected `{key} <n>`, found `{line}`")))
    };
    let joints = parse_count(line, "joints")?;
    let frames = parse_count(next("frames")?.1, "frames")?;
    let mut data = Vec::with_capacity(frames * joints * 3);
    for t in 0..frames {
        let (no, row) = next("frame data")?;
        let before = data.len();
        for tok in row.split_ascii_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| bad(format!("line {}: bad number `{tok}`", no + 1)))?;
            data.push(v);
        }
        if data.len() - before != joints * 3 {
            return Err(bad(format!(
                "frame {t}: expected {} values, found {}",
                joints * 3,
                data.len() - before
            )));
        }
    }
    if lines.any(|(_, l)| !l.trim().is_empty()) {
        return Err(bad("trailing content after last frame".into()));
    }
    SkeletonSequence::new(frames, joints, data, class_label, source_id)
}

pub fn write_sequence(path: &Path, seq: &SkeletonSequence) -> Result<()> {
    fs::write(path, format_sequence(seq)).map_err(|e| Error::io(path, e))
}

pub fn read_sequence(path: &Path) -> Result<SkeletonSequence> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sequence(&text, path)
}

/// Class → files → split → exemplar listing stored next to the sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub classes: Vec<ManifestClass>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestClass {
    pub name: String,
    pub split: Split,
    pub exemplar: String,
    pub files: Vec<String>,
}

impl Manifest {
    pub const FORMAT: &'static str = "trxos-manifest/1";

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if m.format != Self::FORMAT {
            return Err(Error::format(path, format!("unknown manifest format {}", m.format)));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

fn file_name(seq: &SkeletonSequence) -> String {
    format!("{}.{SEQ_EXT}", seq.source_id)
}

/// Writes each class's sequences plus the manifest into `dir`.
pub fn write_dataset(
    dir: &Path,
    classes: &[(String, Split, Vec<SkeletonSequence>)],
) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Manifest {
        format: Manifest::FORMAT.into(),
        classes: Vec::new(),
    };
    for (name, split, seqs) in classes {
        let mut files: Vec<String> = Vec::with_capacity(seqs.len());
        for s in seqs {
            let f = file_name(s);
            write_sequence(&dir.join(&f), s)?;
            files.push(f);
        }
        let mut ids: Vec<&SkeletonSequence> = seqs.iter().collect();
        ids.sort_by(|a, b| a.source_id.cmp(&b.source_id));
        manifest.classes.push(ManifestClass {
            name: name.clone(),
            split: *split,
            exemplar: ids.first().map(|s| file_name(s)).unwrap_or_default(),
            files,
        });
    }
    manifest.save(&dir.join(MANIFEST))?;
    Ok(manifest)
}

#[derive(Clone, Copy, Debug)]
pub struct LoadOptions {
    pub expect: Expectations,
    /// Split for classes when the directory has no manifest.
    pub default_split: Split,
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub files_read: usize,
    pub errors: Vec<(PathBuf, String)>,
    pub excluded_classes: Vec<String>,
}

/// Loads a directory of sequence files, preprocessing each one (subsample,
/// center, clamp, validate). Bad files are reported and skipped.
pub fn load_ntu_style(dir: &Path, opts: &LoadOptions) -> Result<(DatasetIndex, LoadReport)> {
    let manifest_path = dir.join(MANIFEST);
    let manifest = if manifest_path.exists() {
        Some(Manifest::load(&manifest_path)?)
    } else {
        None
    };
    let mut files: Vec<PathBuf> = match &manifest {
        Some(m) => m
            .classes
            .iter()
            .flat_map(|c| c.files.iter().map(|f| dir.join(f)))
            .collect(),
        None => fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == SEQ_EXT))
            .collect(),
    };
    files.sort();

    let results = exec::map_range(files.len(), |i| {
        read_sequence(&files[i]).and_then(|s| preprocess(&s, &opts.expect))
    });

    let mut report = LoadReport::default();
    let mut by_class: BTreeMap<String, Vec<Arc<SkeletonSequence>>> = BTreeMap::new();
    for (path, res) in files.iter().zip(results) {
        report.files_read += 1;
        match res {
            Ok(seq) => match seq.class_label.clone() {
                Some(c) => by_class.entry(c).or_default().push(Arc::new(seq)),
                None => report.errors.push((path.clone(), "sequence has no class label".into())),
            },
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                report.errors.push((path.clone(), e.to_string()));
            }
        }
    }

    let split_of = |name: &str| {
        manifest
            .as_ref()
            .and_then(|m| m.classes.iter().find(|c| c.name == name))
            .map_or(opts.default_split, |c| c.split)
    };
    if let Some(m) = &manifest {
        for c in &m.classes {
            if !by_class.contains_key(&c.name) {
                warn!("class {} has no valid sequences; excluded", c.name);
                report.excluded_classes.push(c.name.clone());
            }
        }
    }
    let classes = by_class
        .into_iter()
        .map(|(name, seqs)| {
            let split = split_of(&name);
            ClassEntry::new(name, split, seqs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((DatasetIndex::new(classes)?, report))
}
