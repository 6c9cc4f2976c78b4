//! Directory datasets: one `TCTD` file per sample plus a TOML manifest.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::format::{decode_tctd, encode_sample, TctdContent, TctdError, TCTD_VERSION};
use super::{generate_sample, PhantomError, PhantomSpec, Sample};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest {path}: {detail}")]
    Manifest { path: PathBuf, detail: String },
    #[error("dataset integrity: {0}")]
    Integrity(String),
    #[error("{file}: {source}")]
    Format { file: String, source: TctdError },
    #[error(transparent)]
    Phantom(#[from] PhantomError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub count: usize,
    pub seed: u64,
    pub files: Vec<String>,
    pub spec: PhantomSpec,
}

impl Manifest {
    pub fn for_spec(spec: &PhantomSpec, count: usize) -> Self {
        Self {
            format: "TCTD".into(),
            version: TCTD_VERSION,
            count,
            seed: spec.seed,
            files: (0..count).map(sample_file_name).collect(),
            spec: spec.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest fields are TOML-representable")
    }
}

pub fn sample_file_name(index: usize) -> String {
    format!("sample_{index:05}.tctd")
}

/// Train/validation/test indices in the 28:2:12 proportion, contiguous and in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn by_ratio(count: usize) -> Self {
        let train = (count * 28 + 21) / 42;
        let val = ((count * 2 + 21) / 42).min(count - train);
        Self {
            train: (0..train).collect(),
            val: (train..train + val).collect(),
            test: (train + val..count).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn generate(spec: &PhantomSpec, count: usize) -> Result<Self, PhantomError> {
        let samples = (0..count as u64).map(|i| generate_sample(spec, i)).collect::<Result<_, _>>()?;
        Ok(Self {
            manifest: Manifest::for_spec(spec, count),
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self) -> Split {
        Split::by_ratio(self.len())
    }
}

fn checksum_of<'a>(manifest: &[u8], files: impl Iterator<Item = (&'a str, &'a [u8])>) -> String {
    let mut h = Sha256::new();
    h.update(manifest);
    for (name, bytes) in files {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    hex::encode(h.finalize())
}

/// Writes every sample and the manifest into `dir`, returning the dataset checksum.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<String, DatasetError> {
    let m = &dataset.manifest;
    if m.count != dataset.samples.len() || m.files.len() != m.count {
        return Err(DatasetError::Integrity(format!(
            "manifest lists {} files for count {} but {} samples were given",
            m.files.len(),
            m.count,
            dataset.samples.len()
        )));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let encoded: Vec<Vec<u8>> = dataset.samples.iter().map(encode_sample).collect();
    for (name, bytes) in m.files.iter().zip(&encoded) {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(io_err(&p))?;
    }
    let text = m.to_toml();
    let p = dir.join(MANIFEST_FILE);
    fs::write(&p, &text).map_err(io_err(&p))?;
    Ok(checksum_of(
        text.as_bytes(),
        m.files.iter().map(String::as_str).zip(encoded.iter().map(Vec::as_slice)),
    ))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, DatasetError> {
    let p = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    let m: Manifest = toml::from_str(&text).map_err(|e| DatasetError::Manifest {
        path: p.clone(),
        detail: e.to_string(),
    })?;
    if m.format != "TCTD" || m.version != TCTD_VERSION {
        return Err(DatasetError::Manifest {
            path: p,
            detail: format!("unsupported format {} version {}", m.format, m.version),
        });
    }
    Ok(m)
}

/// `.tctd` file names present in `dir`.
fn tctd_files(dir: &Path) -> Result<BTreeSet<String>, DatasetError> {
    let mut out = BTreeSet::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".tctd") {
            out.insert(name);
        }
    }
    Ok(out)
}

fn check_listing(m: &Manifest, dir: &Path) -> Result<(), DatasetError> {
    if m.files.len() != m.count {
        return Err(DatasetError::Integrity(format!(
            "manifest count {} but {} files listed",
            m.count,
            m.files.len()
        )));
    }
    let listed: BTreeSet<String> = m.files.iter().cloned().collect();
    if listed.len() != m.files.len() {
        return Err(DatasetError::Integrity("manifest lists a file twice".into()));
    }
    let present = tctd_files(dir)?;
    if let Some(missing) = listed.difference(&present).next() {
        return Err(DatasetError::Integrity(format!("missing sample file {missing}")));
    }
    if let Some(extra) = present.difference(&listed).next() {
        return Err(DatasetError::Integrity(format!("sample file {extra} is not in the manifest")));
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let manifest = read_manifest(dir)?;
    manifest.spec.validate()?;
    check_listing(&manifest, dir)?;
    let spec = &manifest.spec;
    let mut samples = Vec::with_capacity(manifest.count);
    for name in &manifest.files {
        let p = dir.join(name);
        let bytes = fs::read(&p).map_err(io_err(&p))?;
        let sample = match decode_tctd(&bytes).map_err(|source| DatasetError::Format {
            file: name.clone(),
            source,
        })? {
            TctdContent::Sample(s) => s,
            TctdContent::Dose(_) => {
                return Err(DatasetError::Integrity(format!("{name} is a dose-only file, not a sample")));
            }
        };
        if sample.dims() != (spec.height, spec.width) || sample.oars.len() != spec.n_oar {
            return Err(DatasetError::Integrity(format!(
                "{name} is {:?} with {} OARs, manifest says {}x{} with {}",
                sample.dims(),
                sample.oars.len(),
                spec.height,
                spec.width,
                spec.n_oar
            )));
        }
        samples.push(sample);
    }
    Ok(Dataset { manifest, samples })
}

/// SHA-256 over the manifest and every listed file, hex encoded.
pub fn dataset_checksum(dir: &Path) -> Result<String, DatasetError> {
    let manifest = read_manifest(dir)?;
    let p = dir.join(MANIFEST_FILE);
    let text = fs::read(&p).map_err(io_err(&p))?;
    let mut blobs = Vec::with_capacity(manifest.files.len());
    for name in &manifest.files {
        let p = dir.join(name);
        blobs.push(fs::read(&p).map_err(io_err(&p))?);
    }
    Ok(checksum_of(
        &text,
        manifest.files.iter().map(String::as_str).zip(blobs.iter().map(Vec::as_slice)),
    ))
}
