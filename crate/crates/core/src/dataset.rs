//! On-disk (field, pseudo-sketch) pairs with a manifest.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.tsv
//! fields/<kind>-<index>.vf2
//! sketches/<kind>-<index>.pgm
//! ```
//!
//! Each manifest line is `kind \t seed \t field path \t sketch path \t sha256`,
//! paths relative to the output directory, hash over the field file bytes
//! followed by the sketch file bytes.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{normalize_field, NormMode, VectorField};
use crate::io::{encode_field, encode_pgm, write_bytes, Precision};
use crate::sketch::{rasterize_sketch, trace_streamlines, TraceOptions};
use crate::synth::{
    combine_patterns, generate_category, rule_based_field, simulate_inflow, FieldCategory, InflowScenario,
    PatternSpec, RuleFieldSpec,
};

pub const MANIFEST_NAME: &str = "manifest.tsv";

/// What produced a sample: one of the six categories or one of the three
/// training strategies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SampleKind {
    Category(FieldCategory),
    Patterns,
    Rules,
    Inflow,
}

impl SampleKind {
    pub fn all() -> Vec<SampleKind> {
        let mut v: Vec<_> = FieldCategory::ALL.into_iter().map(SampleKind::Category).collect();
        v.extend([SampleKind::Patterns, SampleKind::Rules, SampleKind::Inflow]);
        v
    }

    /// File-name friendly form of the tag.
    fn slug(self) -> String {
        self.to_string().replace('+', "_")
    }
}

impl fmt::Display for SampleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleKind::Category(c) => f.write_str(c.tag()),
            SampleKind::Patterns => f.write_str("patterns"),
            SampleKind::Rules => f.write_str("rules"),
            SampleKind::Inflow => f.write_str("inflow"),
        }
    }
}

impl FromStr for SampleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "patterns" => Ok(SampleKind::Patterns),
            "rules" => Ok(SampleKind::Rules),
            "inflow" => Ok(SampleKind::Inflow),
            _ => s.parse().map(SampleKind::Category),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DatasetConfig {
    pub counts: Vec<(SampleKind, usize)>,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Field file precision. Defaults to `f64` so stored fields keep their
    /// category properties exactly.
    pub precision: Precision,
    pub trace: TraceOptions,
}

impl DatasetConfig {
    pub fn new(counts: Vec<(SampleKind, usize)>, seed: u64) -> Self {
        Self {
            counts,
            seed,
            width: 64,
            height: 64,
            precision: Precision::F64,
            trace: TraceOptions::default(),
        }
    }

    /// 500 training samples per category.
    pub fn train_preset(seed: u64) -> Self {
        Self::new(FieldCategory::ALL.map(|c| (SampleKind::Category(c), 500)).to_vec(), seed)
    }

    /// 200 evaluation samples per category.
    pub fn eval_preset(seed: u64) -> Self {
        Self::new(FieldCategory::ALL.map(|c| (SampleKind::Category(c), 200)).to_vec(), seed)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    pub kind: SampleKind,
    pub seed: u64,
    pub field_path: PathBuf,
    pub sketch_path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.kind,
                r.seed,
                r.field_path.display(),
                r.sketch_path.display(),
                r.sha256
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse { line: i + 1, message };
            let cols: Vec<&str> = line.split('\t').collect();
            let [kind, seed, field, sketch, hash] = cols[..] else {
                return Err(bad(format!("expected 5 tab-separated columns, found {}", cols.len())));
            };
            records.push(ManifestRecord {
                kind: kind.parse().map_err(|e: Error| bad(e.to_string()))?,
                seed: seed.parse().map_err(|_| bad(format!("bad seed {seed:?}")))?,
                field_path: field.into(),
                sketch_path: sketch.into(),
                sha256: hash.to_string(),
            });
        }
        Ok(Self { records })
    }
}

/// Seed for sample `index` of `kind`, independent of scheduling.
pub fn sample_seed(seed: u64, kind: SampleKind, index: usize) -> u64 {
    let digest = Sha256::digest(format!("{seed}/{kind}/{index}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Builds one sample field of the given kind.
pub fn sample_field(kind: SampleKind, seed: u64, width: usize, height: usize) -> Result<VectorField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SampleKind::Category(c) => generate_category(c, seed, width, height),
        SampleKind::Patterns => loop {
            let specs: Vec<_> = (0..rng.random_range(1..=4))
                .map(|_| (PatternSpec::random(&mut rng, width, height), rng.random_range(0.25..1.0)))
                .collect();
            match combine_patterns(&specs, width, height) {
                Ok(f) => break Ok(normalize_field(&f, NormMode::ZScore).unwrap_or(f)),
                Err(Error::DegenerateField(_)) => continue,
                Err(e) => break Err(e),
            }
        },
        SampleKind::Rules => loop {
            let f = rule_based_field(&RuleFieldSpec::random(&mut rng, width, height), width, height)?;
            if f.max_magnitude() > 0.0 {
                break Ok(f);
            }
        },
        SampleKind::Inflow => loop {
            let scenario = InflowScenario::random(&mut rng, width, height);
            let last = simulate_inflow(&scenario, width, height)?
                .pop()
                .expect("scenario has at least one step");
            if let Ok(f) = normalize_field(&last, NormMode::MaxNorm) {
                break Ok(f);
            }
        },
    }
}

struct Job {
    kind: SampleKind,
    index: usize,
}

/// Writes every requested sample and the manifest. Output is bitwise
/// reproducible for a given config regardless of thread scheduling.
pub fn generate_dataset(config: &DatasetConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    let out = out_dir.as_ref();
    config.trace.validate()?;
    let jobs: Vec<Job> = config
        .counts
        .iter()
        .flat_map(|&(kind, n)| (0..n).map(move |index| Job { kind, index }))
        .collect();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    if !jobs.is_empty() {
        for sub in ["fields", "sketches"] {
            let d = out.join(sub);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
    }
    let records = jobs
        .par_iter()
        .map(|job| write_sample(config, out, job))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest { records };
    write_bytes(&out.join(MANIFEST_NAME), manifest.to_tsv().as_bytes())?;
    Ok(manifest)
}

fn write_sample(config: &DatasetConfig, out: &Path, job: &Job) -> Result<ManifestRecord> {
    let seed = sample_seed(config.seed, job.kind, job.index);
    let field = sample_field(job.kind, seed, config.width, config.height)?;
    let lines = trace_streamlines(&field, &config.trace)?;
    let sketch = rasterize_sketch(&lines, config.width, config.height);
    let name = format!("{}-{:05}", job.kind.slug(), job.index);
    let field_path = PathBuf::from("fields").join(format!("{name}.vf2"));
    let sketch_path = PathBuf::from("sketches").join(format!("{name}.pgm"));
    let field_bytes = encode_field(&field, config.precision);
    let sketch_bytes = encode_pgm(&sketch.to_gray());
    write_bytes(&out.join(&field_path), &field_bytes)?;
    write_bytes(&out.join(&sketch_path), &sketch_bytes)?;
    let mut hasher = Sha256::new();
    hasher.update(&field_bytes);
    hasher.update(&sketch_bytes);
    Ok(ManifestRecord {
        kind: job.kind,
        seed,
        field_path,
        sketch_path,
        sha256: hex::encode(hasher.finalize()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::read_field;
    use crate::metrics::{cme, cs};

    #[test]
    fn kinds_round_trip() {
        for k in SampleKind::all() {
            assert_eq!(k.to_string().parse::<SampleKind>().unwrap(), k);
        }
        assert!("vortexes".parse::<SampleKind>().is_err());
    }

    #[test]
    fn empty_counts_write_only_an_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatasetConfig::new(vec![(SampleKind::Patterns, 0)], 1);
        let m = generate_dataset(&cfg, dir.path()).unwrap();
        assert!(m.records.is_empty());
        let entries: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(entries, vec![std::ffi::OsString::from(MANIFEST_NAME)]);
        assert_eq!(fs::read(dir.path().join(MANIFEST_NAME)).unwrap(), b"");
    }

    #[test]
    fn same_seed_same_bytes() {
        let counts = SampleKind::all().into_iter().map(|k| (k, 2)).collect();
        let mut cfg = DatasetConfig::new(counts, 42);
        cfg.width = 24;
        cfg.height = 20;
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ma = generate_dataset(&cfg, a.path()).unwrap();
        let mb = generate_dataset(&cfg, b.path()).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(ma.records.len(), 18);
        for r in &ma.records {
            for p in [&r.field_path, &r.sketch_path] {
                assert_eq!(fs::read(a.path().join(p)).unwrap(), fs::read(b.path().join(p)).unwrap());
            }
        }
        let text = fs::read_to_string(a.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(Manifest::parse(&text).unwrap(), ma);
    }

    #[test]
    fn stored_categories_keep_their_properties() {
        let mut cfg = DatasetConfig::new(
            vec![
                (SampleKind::Category(FieldCategory::Irrotational), 3),
                (SampleKind::Category(FieldCategory::Incompressible), 3),
            ],
            9,
        );
        cfg.width = 32;
        cfg.height = 32;
        let dir = tempfile::tempdir().unwrap();
        for r in generate_dataset(&cfg, dir.path()).unwrap().records {
            let f = read_field(dir.path().join(&r.field_path)).unwrap();
            let metric = match r.kind {
                SampleKind::Category(FieldCategory::Irrotational) => cme(&f),
                _ => cs(&f),
            };
            assert!(metric <= 1e-10, "{}: {metric}", r.kind);
        }
    }

    #[test]
    fn per_sample_seeds_differ() {
        let a = sample_seed(1, SampleKind::Rules, 0);
        assert_ne!(a, sample_seed(1, SampleKind::Rules, 1));
        assert_ne!(a, sample_seed(1, SampleKind::Inflow, 0));
        assert_ne!(a, sample_seed(2, SampleKind::Rules, 0));
    }

    #[test]
    fn bad_manifest_line() {
        assert!(matches!(Manifest::parse("all\t1\tx\ty\n"), Err(Error::Parse { line: 1, .. })));
    }
}
