//! The UCI "Multiple Features" (mfeat) handwritten digit data.
//!
//! Six files describe the same 2000 digit images (200 per class, classes in
//! row blocks) with different feature extractors. Rows are aligned across
//! files, so every split is expressed as row indices and applied to all six.

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::LabeledMatrix;

pub const ROWS: usize = 2000;
pub const CLASSES: usize = 10;
pub const ROWS_PER_CLASS: usize = ROWS / CLASSES;

/// Where the files used to live on the UCI server.
pub const DEFAULT_BASE_URL: &str =
    "https://archive.ics.uci.edu/ml/machine-learning-databases/mfeat";

const INDEX_FILE: &str = "index";
const LOCK_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}: line {line}, column {column}: {message}")]
    Parse {
        file: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{file}: expected {expected} rows, found {found}")]
    RowCount {
        file: String,
        expected: usize,
        found: usize,
    },
    #[error("fetching {file} from {url}: {message}")]
    Fetch {
        file: String,
        url: String,
        message: String,
    },
    #[error("{file}: cached copy fails its integrity check ({detail})")]
    Integrity { file: String, detail: String },
    #[error("unknown feature set '{0}'")]
    UnknownSet(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// The six mfeat feature extractors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    Fourier,
    Profiles,
    Kl,
    Pixel,
    Zernike,
    Morph,
}

impl FeatureKind {
    /// In the conventional set order 1–6.
    pub const ALL: [FeatureKind; 6] = [
        FeatureKind::Fourier,
        FeatureKind::Profiles,
        FeatureKind::Kl,
        FeatureKind::Pixel,
        FeatureKind::Zernike,
        FeatureKind::Morph,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Fourier => "fourier",
            FeatureKind::Profiles => "profiles",
            FeatureKind::Kl => "kl",
            FeatureKind::Pixel => "pixel",
            FeatureKind::Zernike => "zernike",
            FeatureKind::Morph => "morph",
        }
    }

    /// Upstream file name.
    pub fn file_name(self) -> &'static str {
        match self {
            FeatureKind::Fourier => "mfeat-fou",
            FeatureKind::Profiles => "mfeat-fac",
            FeatureKind::Kl => "mfeat-kar",
            FeatureKind::Pixel => "mfeat-pix",
            FeatureKind::Zernike => "mfeat-zer",
            FeatureKind::Morph => "mfeat-mor",
        }
    }

    pub fn expected_dim(self) -> usize {
        match self {
            FeatureKind::Fourier => 76,
            FeatureKind::Profiles => 216,
            FeatureKind::Kl => 64,
            FeatureKind::Pixel => 240,
            FeatureKind::Zernike => 47,
            FeatureKind::Morph => 6,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.file_name() == s || &k.file_name()[6..] == s)
            .ok_or_else(|| DataError::UnknownSet(s.to_string()))
    }
}

/// One parsed mfeat file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub kind: FeatureKind,
    pub matrix: DMatrix<f64>,
    pub labels: Vec<usize>,
}

impl FeatureSet {
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Class of a row: rows are stored in blocks of 200 per digit.
pub fn label_of_row(row: usize) -> usize {
    row / ROWS_PER_CLASS
}

/// Parses whitespace-separated numeric columns, one instance per line.
pub fn parse_mfeat(kind: FeatureKind, raw: &str) -> Result<FeatureSet, DataError> {
    let file = kind.file_name().to_string();
    let dim = kind.expected_dim();
    let mut values = Vec::with_capacity(ROWS * dim);
    let mut rows = 0;
    for (line_no, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if rows == ROWS {
            return Err(DataError::RowCount {
                file,
                expected: ROWS,
                found: raw.lines().filter(|l| !l.trim().is_empty()).count(),
            });
        }
        let mut columns = 0;
        for (col, token) in line.split_ascii_whitespace().enumerate() {
            let parse_err = |message: String| DataError::Parse {
                file: file.clone(),
                line: line_no + 1,
                column: col + 1,
                message,
            };
            let v: f64 = token
                .parse()
                .map_err(|e| parse_err(format!("'{token}': {e}")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value '{token}'")));
            }
            if col < dim {
                values.push(v);
            }
            columns += 1;
        }
        if columns != dim {
            return Err(DataError::Parse {
                file,
                line: line_no + 1,
                column: columns.min(dim) + 1,
                message: format!("expected {dim} columns, found {columns}"),
            });
        }
        rows += 1;
    }
    if rows != ROWS {
        return Err(DataError::RowCount {
            file,
            expected: ROWS,
            found: rows,
        });
    }
    Ok(FeatureSet {
        kind,
        matrix: DMatrix::from_row_slice(ROWS, dim, &values),
        labels: (0..ROWS).map(label_of_row).collect(),
    })
}

/// Writes a feature set back in the mfeat text layout.
pub fn to_mfeat_text(fs: &FeatureSet) -> String {
    let mut out = String::new();
    for r in 0..fs.rows() {
        for v in fs.matrix.row(r).iter() {
            out.push_str("  ");
            out.push_str(&format!("{v:?}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRule {
    /// First `train_per_class` rows of each class block train, the rest test.
    FirstBlock,
    /// Rows shuffled within each class block before taking the first ones.
    Seeded(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_per_class: usize,
    pub rule: SplitRule,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_per_class: 100,
            rule: SplitRule::FirstBlock,
        }
    }
}

impl SplitSpec {
    pub fn seeded(seed: u64) -> Self {
        SplitSpec {
            rule: SplitRule::Seeded(seed),
            ..SplitSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.train_per_class == 0 || self.train_per_class >= ROWS_PER_CLASS {
            return Err(DataError::InvalidSplit(format!(
                "train_per_class must be in 1..{ROWS_PER_CLASS}, got {}",
                self.train_per_class
            )));
        }
        Ok(())
    }

    /// Train and test row indices, ordered by class then position.
    ///
    /// A pure function of the spec, which is what keeps the six feature sets
    /// aligned.
    pub fn indices(&self) -> Result<(Vec<usize>, Vec<usize>), DataError> {
        self.validate()?;
        let mut rng = match self.rule {
            SplitRule::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            SplitRule::FirstBlock => None,
        };
        let mut train = Vec::with_capacity(CLASSES * self.train_per_class);
        let mut test = Vec::with_capacity(ROWS - train.capacity());
        for class in 0..CLASSES {
            let mut block: Vec<usize> =
                (class * ROWS_PER_CLASS..(class + 1) * ROWS_PER_CLASS).collect();
            if let Some(rng) = rng.as_mut() {
                block.shuffle(rng);
            }
            train.extend_from_slice(&block[..self.train_per_class]);
            test.extend_from_slice(&block[self.train_per_class..]);
        }
        Ok((train, test))
    }
}

impl fmt::Display for SplitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rule {
            SplitRule::FirstBlock => write!(f, "first"),
            SplitRule::Seeded(seed) => write!(f, "seeded:{seed}"),
        }
    }
}

impl FromStr for SplitSpec {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "first" {
            return Ok(SplitSpec::default());
        }
        s.strip_prefix("seeded:")
            .and_then(|n| n.parse().ok())
            .map(SplitSpec::seeded)
            .ok_or_else(|| {
                DataError::InvalidSplit(format!("expected 'first' or 'seeded:<n>', got '{s}'"))
            })
    }
}

/// Rows of `fs` selected by `indices`, with their labels.
pub fn select_rows(fs: &FeatureSet, indices: &[usize]) -> LabeledMatrix {
    let rows = fs.matrix.select_rows(indices);
    let labels = indices.iter().map(|&i| fs.labels[i]).collect();
    LabeledMatrix::new(rows, labels, CLASSES).expect("split keeps every class populated")
}

pub fn split(
    fs: &FeatureSet,
    spec: &SplitSpec,
) -> Result<(LabeledMatrix, LabeledMatrix), DataError> {
    let (train, test) = spec.indices()?;
    Ok((select_rows(fs, &train), select_rows(fs, &test)))
}

/// One line of the cache index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexRecord {
    pub name: String,
    pub url: String,
    pub bytes: u64,
    pub sha256: String,
}

fn read_index(cache_dir: &Path) -> Result<Vec<IndexRecord>, DataError> {
    let path = cache_dir.join(INDEX_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(&path)(e)),
    };
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let parts: Vec<&str> = line.split_ascii_whitespace().collect();
        if parts.is_empty() {
            continue;
        }
        let malformed = || DataError::Integrity {
            file: INDEX_FILE.into(),
            detail: format!("malformed record on line {}", i + 1),
        };
        let [name, url, bytes, sha256] = parts[..] else {
            return Err(malformed());
        };
        records.push(IndexRecord {
            name: name.into(),
            url: url.into(),
            bytes: bytes.parse().map_err(|_| malformed())?,
            sha256: sha256.into(),
        });
    }
    Ok(records)
}

fn write_index(cache_dir: &Path, records: &[IndexRecord]) -> Result<(), DataError> {
    let mut text = String::new();
    for r in records {
        text.push_str(&format!("{} {} {} {}\n", r.name, r.url, r.bytes, r.sha256));
    }
    write_atomically(&cache_dir.join(INDEX_FILE), text.as_bytes())
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let tmp = path.with_extension(format!("part-{}", std::process::id()));
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err(path))
}

/// Exclusive lock held through a `*.lock` file created with `create_new`.
struct LockFile {
    path: PathBuf,
}

impl LockFile {
    fn acquire(path: PathBuf) -> Result<Self, DataError> {
        let start = Instant::now();
        loop {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(_) => return Ok(LockFile { path }),
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    if start.elapsed() > LOCK_TIMEOUT {
                        return Err(io_err(&path)(io::Error::new(
                            io::ErrorKind::TimedOut,
                            "lock held too long; remove it if no fetch is running",
                        )));
                    }
                    thread::sleep(Duration::from_millis(50));
                }
                Err(e) => return Err(io_err(&path)(e)),
            }
        }
    }
}

impl Drop for LockFile {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Returns the raw text of one mfeat file, downloading it into `cache_dir`
/// on first use.
///
/// A cached copy is only trusted if it matches the length and SHA-256
/// recorded in `<cache_dir>/index`. `base_url` may be `http(s)://`,
/// `file://` or a plain directory path.
pub fn fetch(kind: FeatureKind, cache_dir: &Path, base_url: &str) -> Result<String, DataError> {
    fs::create_dir_all(cache_dir).map_err(io_err(cache_dir))?;
    let file = kind.file_name();
    let path = cache_dir.join(file);
    let _lock = LockFile::acquire(cache_dir.join(format!("{file}.lock")))?;

    let record = read_index(cache_dir)?
        .into_iter()
        .find(|r| r.name == kind.name());
    if let Some(record) = record {
        if path.exists() {
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            verify(file, &bytes, &record)?;
            return into_text(file, bytes);
        }
    }

    let url = format!("{}/{}", base_url.trim_end_matches('/'), file);
    let bytes = download(&url).map_err(|message| DataError::Fetch {
        file: file.into(),
        url: url.clone(),
        message,
    })?;
    let text = into_text(file, bytes)?;
    write_atomically(&path, text.as_bytes())?;

    let _index_lock = LockFile::acquire(cache_dir.join(format!("{INDEX_FILE}.lock")))?;
    let mut records = read_index(cache_dir)?;
    records.retain(|r| r.name != kind.name());
    records.push(IndexRecord {
        name: kind.name().into(),
        url,
        bytes: text.len() as u64,
        sha256: sha256_hex(text.as_bytes()),
    });
    records.sort_by_key(|r| r.name.parse::<FeatureKind>().ok());
    write_index(cache_dir, &records)?;
    Ok(text)
}

fn verify(file: &str, bytes: &[u8], record: &IndexRecord) -> Result<(), DataError> {
    if bytes.len() as u64 != record.bytes {
        return Err(DataError::Integrity {
            file: file.into(),
            detail: format!("{} bytes, index records {}", bytes.len(), record.bytes),
        });
    }
    let digest = sha256_hex(bytes);
    if !digest.eq_ignore_ascii_case(&record.sha256) {
        return Err(DataError::Integrity {
            file: file.into(),
            detail: format!("sha256 {digest}, index records {}", record.sha256),
        });
    }
    Ok(())
}

fn into_text(file: &str, bytes: Vec<u8>) -> Result<String, DataError> {
    String::from_utf8(bytes).map_err(|e| DataError::Parse {
        file: file.into(),
        line: 0,
        column: 0,
        message: format!("not UTF-8 text: {e}"),
    })
}

fn download(url: &str) -> Result<Vec<u8>, String> {
    if let Some(path) = url.strip_prefix("file://") {
        return fs::read(path).map_err(|e| e.to_string());
    }
    if !(url.starts_with("http://") || url.starts_with("https://")) {
        return fs::read(url).map_err(|e| e.to_string());
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(120)))
        .build()
        .into();
    let mut response = agent.get(url).call().map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    response
        .body_mut()
        .as_reader()
        .read_to_end(&mut bytes)
        .map_err(|e| e.to_string())?;
    Ok(bytes)
}

/// Fetches and parses all six feature sets in the conventional order.
pub fn load_all(cache_dir: &Path, base_url: &str) -> Result<Vec<FeatureSet>, DataError> {
    FeatureKind::ALL
        .into_iter()
        .map(|kind| parse_mfeat(kind, &fetch(kind, cache_dir, base_url)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(kind: FeatureKind, rows: usize) -> String {
        let dim = kind.expected_dim();
        (0..rows)
            .map(|r| {
                (0..dim)
                    .map(|c| format!("  {}", (r * 31 + c * 7) as f64 / 13.0))
                    .collect::<String>()
                    + "\n"
            })
            .collect()
    }

    #[test]
    fn parses_valid_file() {
        let fs = parse_mfeat(FeatureKind::Morph, &synthetic(FeatureKind::Morph, ROWS)).unwrap();
        assert_eq!(fs.dim(), 6);
        assert_eq!(fs.rows(), 2000);
        assert!(fs.labels[..200].iter().all(|&l| l == 0));
        assert_eq!(fs.labels[200], 1);
        assert_eq!(fs.labels[1999], 9);
    }

    #[test]
    fn row_count_errors() {
        let err =
            parse_mfeat(FeatureKind::Morph, &synthetic(FeatureKind::Morph, 1999)).unwrap_err();
        assert!(err.to_string().contains("expected 2000 rows"), "{err}");
        let err =
            parse_mfeat(FeatureKind::Morph, &synthetic(FeatureKind::Morph, 2001)).unwrap_err();
        assert!(err.to_string().contains("expected 2000 rows"), "{err}");
    }

    #[test]
    fn column_and_token_errors() {
        let mut text = synthetic(FeatureKind::Morph, ROWS);
        text = text.replacen("\n", "  1.0\n", 1);
        match parse_mfeat(FeatureKind::Morph, &text).unwrap_err() {
            DataError::Parse { line, message, .. } => {
                assert_eq!(line, 1);
                assert!(message.contains("expected 6 columns"));
            }
            e => panic!("{e}"),
        }
        let text = synthetic(FeatureKind::Morph, ROWS).replacen("  0  ", "  x1  ", 1);
        match parse_mfeat(FeatureKind::Morph, &text).unwrap_err() {
            DataError::Parse { line, column, .. } => assert_eq!((line, column), (1, 1)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn reserialize_is_bit_faithful() {
        let fs = parse_mfeat(FeatureKind::Zernike, &synthetic(FeatureKind::Zernike, ROWS)).unwrap();
        let again = parse_mfeat(FeatureKind::Zernike, &to_mfeat_text(&fs)).unwrap();
        assert_eq!(fs, again);
    }

    #[test]
    fn feature_kind_names() {
        assert_eq!(
            "profiles".parse::<FeatureKind>().unwrap(),
            FeatureKind::Profiles
        );
        assert_eq!(
            "mfeat-fac".parse::<FeatureKind>().unwrap(),
            FeatureKind::Profiles
        );
        assert_eq!("mor".parse::<FeatureKind>().unwrap(), FeatureKind::Morph);
        assert!("digits".parse::<FeatureKind>().is_err());
        let dims: Vec<usize> = FeatureKind::ALL.iter().map(|k| k.expected_dim()).collect();
        assert_eq!(dims, vec![76, 216, 64, 240, 47, 6]);
    }

    #[test]
    fn first_block_split() {
        let (train, test) = SplitSpec::default().indices().unwrap();
        assert_eq!(train.len(), 1000);
        assert_eq!(test.len(), 1000);
        assert_eq!(&train[..100], &(0..100).collect::<Vec<_>>()[..]);
        assert_eq!(&test[..100], &(100..200).collect::<Vec<_>>()[..]);
        for class in 0..CLASSES {
            assert_eq!(
                train.iter().filter(|&&i| label_of_row(i) == class).count(),
                100
            );
            assert_eq!(
                test.iter().filter(|&&i| label_of_row(i) == class).count(),
                100
            );
        }
    }

    #[test]
    fn seeded_split_is_reproducible_and_aligned() {
        let a = SplitSpec::seeded(7).indices().unwrap();
        let b = SplitSpec::seeded(7).indices().unwrap();
        assert_eq!(a, b);
        assert_ne!(a, SplitSpec::seeded(8).indices().unwrap());
        assert_ne!(a, SplitSpec::default().indices().unwrap());
        let mut all: Vec<usize> = a.0.iter().chain(&a.1).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..ROWS).collect::<Vec<_>>());

        let morph = parse_mfeat(FeatureKind::Morph, &synthetic(FeatureKind::Morph, ROWS)).unwrap();
        let zer =
            parse_mfeat(FeatureKind::Zernike, &synthetic(FeatureKind::Zernike, ROWS)).unwrap();
        let (tm, _) = split(&morph, &SplitSpec::seeded(7)).unwrap();
        let (tz, _) = split(&zer, &SplitSpec::seeded(7)).unwrap();
        assert_eq!(tm.labels, tz.labels);
        // first column encodes the source row in the synthetic data
        for (i, &row) in a.0.iter().enumerate() {
            assert_eq!(tm.rows[(i, 0)], (row * 31) as f64 / 13.0);
            assert_eq!(tz.rows[(i, 0)], (row * 31) as f64 / 13.0);
        }
    }

    #[test]
    fn split_spec_parsing_and_validation() {
        assert_eq!("first".parse::<SplitSpec>().unwrap(), SplitSpec::default());
        assert_eq!(
            "seeded:12".parse::<SplitSpec>().unwrap(),
            SplitSpec::seeded(12)
        );
        assert!("seeded:x".parse::<SplitSpec>().is_err());
        assert!("random".parse::<SplitSpec>().is_err());
        let bad = SplitSpec {
            train_per_class: 200,
            rule: SplitRule::FirstBlock,
        };
        assert!(bad.indices().is_err());
    }
}
