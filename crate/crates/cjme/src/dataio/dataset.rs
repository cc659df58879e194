//! On-disk dataset directory format and its validation.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeenFlag {
    Seen,
    Unseen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidConfig(format!("unknown split {other:?}"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// Ground-truth dominant modality for synthetically degraded examples.
/// Stored as an optional extra column; real datasets omit it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dominance {
    Audio,
    Video,
    Neither,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassEntry {
    pub name: String,
    pub seen: SeenFlag,
    pub text_embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleRecord {
    pub id: String,
    pub class_name: String,
    /// Index into the bundle's class table, resolved at load time.
    pub class_idx: usize,
    pub split: Split,
    pub dominant: Option<Dominance>,
    pub audio: Vec<f64>,
    pub video: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub audio: usize,
    pub video: usize,
    pub text: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub classes: Vec<ClassEntry>,
    pub examples: Vec<ExampleRecord>,
    pub dims: Dims,
}

impl DatasetBundle {
    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    pub fn seen_flags(&self) -> Vec<bool> {
        self.classes
            .iter()
            .map(|c| c.seen == SeenFlag::Seen)
            .collect()
    }

    pub fn seen_class_indices(&self) -> Vec<usize> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| c.seen == SeenFlag::Seen)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::EmptyInput("dataset has no classes".into()));
        }
        let mut names = HashMap::new();
        for (i, c) in self.classes.iter().enumerate() {
            if let Some(prev) = names.insert(c.name.clone(), i) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate class name {:?} (entries {} and {})",
                    c.name, prev, i
                )));
            }
            if c.text_embedding.len() != self.dims.text {
                return Err(Error::Shape {
                    op: "dataset class table",
                    expected: format!("text embedding of length {}", self.dims.text),
                    got: format!("{} for class {:?}", c.text_embedding.len(), c.name),
                });
            }
            if c.text_embedding.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("text embedding of {:?}", c.name)));
            }
        }
        let n_seen = self.classes.iter().filter(|c| c.seen == SeenFlag::Seen).count();
        if n_seen == 0 || n_seen == self.classes.len() {
            return Err(Error::InvalidConfig(
                "dataset needs at least one seen and one unseen class".into(),
            ));
        }
        for e in &self.examples {
            if e.class_idx >= self.classes.len()
                || self.classes[e.class_idx].name != e.class_name
            {
                return Err(Error::UnknownClass {
                    example: e.id.clone(),
                    class: e.class_name.clone(),
                });
            }
            if e.split == Split::Train && self.classes[e.class_idx].seen == SeenFlag::Unseen {
                return Err(Error::UnseenInTrain {
                    example: e.id.clone(),
                    class: e.class_name.clone(),
                });
            }
            if e.audio.len() != self.dims.audio || e.video.len() != self.dims.video {
                return Err(Error::Shape {
                    op: "dataset features",
                    expected: format!("audio {} / video {}", self.dims.audio, self.dims.video),
                    got: format!("{} / {} for {:?}", e.audio.len(), e.video.len(), e.id),
                });
            }
            if e.audio.iter().chain(&e.video).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("features of example {:?}", e.id)));
            }
        }
        Ok(())
    }
}

const MANIFEST: &str = "manifest.txt";
const CLASSES: &str = "classes.tsv";
const EXAMPLES: &str = "examples.tsv";
const AUDIO_BLOB: &str = "audio.f32";
const VIDEO_BLOB: &str = "video.f32";

fn fmt_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::DataFormat {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn open(path: &Path) -> Result<fs::File> {
    if !path.exists() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    Ok(fs::File::open(path)?)
}

struct Manifest {
    num_examples: usize,
    dims: Dims,
    num_classes: usize,
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    let file = open(path)?;
    let mut fields: HashMap<String, String> = HashMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| fmt_err(path, format!("line {}: expected `key value`", lineno + 1)))?;
        fields.insert(key.to_string(), value.trim().to_string());
    }
    match fields.get("cjme-dataset").map(String::as_str) {
        Some("1") => {}
        Some(v) => return Err(fmt_err(path, format!("unsupported dataset version {v}"))),
        None => return Err(fmt_err(path, "missing `cjme-dataset 1` header line")),
    }
    let get = |key: &str| -> Result<usize> {
        fields
            .get(key)
            .ok_or_else(|| fmt_err(path, format!("missing `{key}` line")))?
            .parse::<usize>()
            .map_err(|_| fmt_err(path, format!("`{key}` is not a nonnegative integer")))
    };
    Ok(Manifest {
        num_examples: get("num_examples")?,
        dims: Dims {
            audio: get("audio_dim")?,
            video: get("video_dim")?,
            text: get("text_dim")?,
        },
        num_classes: get("num_classes")?,
    })
}

fn read_blob(path: &Path, rows: usize, cols: usize) -> Result<Vec<Vec<f64>>> {
    let file = open(path)?;
    let meta = file.metadata()?;
    let expected = (rows * cols * 4) as u64;
    if meta.len() != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            got: meta.len(),
        });
    }
    let mut reader = BufReader::new(file);
    let mut out = Vec::with_capacity(rows);
    let mut buf = vec![0u8; cols * 4];
    for _ in 0..rows {
        reader.read_exact(&mut buf)?;
        let row: Vec<f64> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        out.push(row);
    }
    Ok(out)
}

/// Loads and validates a dataset directory. Feature row order matches the
/// example table.
pub fn load_dataset(dir: &Path) -> Result<DatasetBundle> {
    let manifest = read_manifest(&dir.join(MANIFEST))?;

    let classes_path = dir.join(CLASSES);
    let mut classes = Vec::with_capacity(manifest.num_classes);
    for (lineno, line) in BufReader::new(open(&classes_path)?).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (name, flag, emb) = match (parts.next(), parts.next(), parts.next()) {
            (Some(n), Some(f), Some(e)) => (n, f, e),
            _ => {
                return Err(fmt_err(
                    &classes_path,
                    format!("line {}: expected 3 tab-separated fields", lineno + 1),
                ))
            }
        };
        let seen = match flag {
            "seen" => SeenFlag::Seen,
            "unseen" => SeenFlag::Unseen,
            other => {
                return Err(fmt_err(
                    &classes_path,
                    format!("line {}: bad seen flag {other:?}", lineno + 1),
                ))
            }
        };
        let text_embedding: Vec<f64> = emb
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| fmt_err(&classes_path, format!("line {}: bad float {s:?}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if text_embedding.len() != manifest.dims.text {
            return Err(fmt_err(
                &classes_path,
                format!(
                    "line {}: class {:?} has {} embedding values, manifest says {}",
                    lineno + 1,
                    name,
                    text_embedding.len(),
                    manifest.dims.text
                ),
            ));
        }
        classes.push(ClassEntry {
            name: name.to_string(),
            seen,
            text_embedding,
        });
    }
    if classes.len() != manifest.num_classes {
        return Err(fmt_err(
            &classes_path,
            format!(
                "{} classes listed, manifest says {}",
                classes.len(),
                manifest.num_classes
            ),
        ));
    }
    let class_by_name: HashMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.name.as_str(), i))
        .collect();

    let examples_path = dir.join(EXAMPLES);
    let mut rows = Vec::with_capacity(manifest.num_examples);
    for (lineno, line) in BufReader::new(open(&examples_path)?).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 && parts.len() != 4 {
            return Err(fmt_err(
                &examples_path,
                format!("line {}: expected 3 or 4 tab-separated fields", lineno + 1),
            ));
        }
        let id = parts[0].to_string();
        let class_name = parts[1].to_string();
        let class_idx = *class_by_name.get(parts[1]).ok_or(Error::UnknownClass {
            example: id.clone(),
            class: class_name.clone(),
        })?;
        let split: Split = parts[2].parse().map_err(|_| {
            fmt_err(
                &examples_path,
                format!("line {}: bad split {:?}", lineno + 1, parts[2]),
            )
        })?;
        let dominant = match parts.get(3) {
            None => None,
            Some(&"dominant:audio") => Some(Dominance::Audio),
            Some(&"dominant:video") => Some(Dominance::Video),
            Some(&"dominant:none") => Some(Dominance::Neither),
            Some(other) => {
                return Err(fmt_err(
                    &examples_path,
                    format!("line {}: bad dominant column {other:?}", lineno + 1),
                ))
            }
        };
        if split == Split::Train && classes[class_idx].seen == SeenFlag::Unseen {
            return Err(Error::UnseenInTrain {
                example: id,
                class: class_name,
            });
        }
        rows.push((id, class_name, class_idx, split, dominant));
    }
    if rows.len() != manifest.num_examples {
        return Err(fmt_err(
            &examples_path,
            format!(
                "{} examples listed, manifest says {}",
                rows.len(),
                manifest.num_examples
            ),
        ));
    }

    let audio = read_blob(&dir.join(AUDIO_BLOB), rows.len(), manifest.dims.audio)?;
    let video = read_blob(&dir.join(VIDEO_BLOB), rows.len(), manifest.dims.video)?;

    let examples: Vec<ExampleRecord> = rows
        .into_iter()
        .zip(audio.into_iter().zip(video))
        .map(
            |((id, class_name, class_idx, split, dominant), (audio, video))| ExampleRecord {
                id,
                class_name,
                class_idx,
                split,
                dominant,
                audio,
                video,
            },
        )
        .collect();

    let bundle = DatasetBundle {
        classes,
        examples,
        dims: manifest.dims,
    };
    bundle.validate()?;
    Ok(bundle)
}

fn write_blob(path: &PathBuf, rows: &[&Vec<f64>]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for row in rows {
        for &v in row.iter() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes a bundle to a dataset directory. Loading it back reproduces the
/// bundle exactly: features are stored as float32, which is lossless for
/// values that were widened from float32 in the first place.
pub fn save_dataset(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    bundle.validate()?;
    fs::create_dir_all(dir)?;

    let mut manifest = String::new();
    manifest.push_str("cjme-dataset 1\n");
    manifest.push_str(&format!("num_examples {}\n", bundle.examples.len()));
    manifest.push_str(&format!("audio_dim {}\n", bundle.dims.audio));
    manifest.push_str(&format!("video_dim {}\n", bundle.dims.video));
    manifest.push_str(&format!("text_dim {}\n", bundle.dims.text));
    manifest.push_str(&format!("num_classes {}\n", bundle.classes.len()));
    fs::write(dir.join(MANIFEST), manifest)?;

    let mut classes = String::new();
    for c in &bundle.classes {
        let flag = match c.seen {
            SeenFlag::Seen => "seen",
            SeenFlag::Unseen => "unseen",
        };
        let emb: Vec<String> = c.text_embedding.iter().map(|v| format!("{v}")).collect();
        classes.push_str(&format!("{}\t{}\t{}\n", c.name, flag, emb.join(" ")));
    }
    fs::write(dir.join(CLASSES), classes)?;

    let mut examples = String::new();
    for e in &bundle.examples {
        examples.push_str(&format!("{}\t{}\t{}", e.id, e.class_name, e.split));
        match e.dominant {
            Some(Dominance::Audio) => examples.push_str("\tdominant:audio"),
            Some(Dominance::Video) => examples.push_str("\tdominant:video"),
            Some(Dominance::Neither) => examples.push_str("\tdominant:none"),
            None => {}
        }
        examples.push('\n');
    }
    fs::write(dir.join(EXAMPLES), examples)?;

    let audio_rows: Vec<&Vec<f64>> = bundle.examples.iter().map(|e| &e.audio).collect();
    let video_rows: Vec<&Vec<f64>> = bundle.examples.iter().map(|e| &e.video).collect();
    write_blob(&dir.join(AUDIO_BLOB), &audio_rows)?;
    write_blob(&dir.join(VIDEO_BLOB), &video_rows)?;
    Ok(())
}
