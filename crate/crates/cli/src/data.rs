//! CSV ingestion and the two bundled example datasets.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rpreg::numerics::linalg::Matrix;
use rpreg::ModelData;
use serde::Serialize;
use sha2::{Digest, Sha256};

const BRAIN_WEIGHT: &str = include_str!("../data/brain_weight.csv");
const FIRST_WORD: &str = include_str!("../data/first_word.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Bundled {
    BrainWeight,
    FirstWord,
}

impl Bundled {
    pub fn name(self) -> &'static str {
        match self {
            Bundled::BrainWeight => "brain_weight",
            Bundled::FirstWord => "first_word",
        }
    }

    pub fn contents(self) -> &'static str {
        match self {
            Bundled::BrainWeight => BRAIN_WEIGHT,
            Bundled::FirstWord => FIRST_WORD,
        }
    }

    /// Rows flagged as outliers in the literature (1-based, shipped order).
    pub fn outliers(self) -> &'static [usize] {
        match self {
            Bundled::BrainWeight => &[6, 16, 25],
            Bundled::FirstWord => &[18],
        }
    }

    pub fn default_options(self) -> LoadOptions {
        match self {
            Bundled::BrainWeight => LoadOptions {
                header: true,
                response: Column::Name("brain_g".into()),
                covariates: vec![Column::Name("body_kg".into())],
                add_intercept: true,
                transform: Transform::LogLog,
            },
            Bundled::FirstWord => LoadOptions {
                header: true,
                response: Column::Name("gesell".into()),
                covariates: vec![Column::Name("age_months".into())],
                add_intercept: true,
                transform: Transform::None,
            },
        }
    }

    pub fn load(self) -> Result<Dataset> {
        let opts = self.default_options();
        let data = parse_csv(self.contents(), &opts)?;
        Ok(Dataset {
            descriptor: DatasetDescriptor {
                name: self.name().into(),
                source: format!("bundled:{}", self.name()),
                sha256: sha256_hex(self.contents().as_bytes()),
                transform: opts.transform,
                n: data.n(),
                p: data.p(),
            },
            data,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    None,
    /// Natural log of the response and of every non-intercept covariate.
    LogLog,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Column {
    Name(String),
    /// 1-based position.
    Index(usize),
}

impl Column {
    /// Integers are positions, anything else is a header name.
    pub fn parse(s: &str) -> Self {
        match s.trim().parse::<usize>() {
            Ok(i) => Column::Index(i),
            Err(_) => Column::Name(s.trim().to_string()),
        }
    }

    fn resolve(&self, header: Option<&[String]>, width: usize) -> Result<usize> {
        match self {
            Column::Index(i) if *i >= 1 && *i <= width => Ok(i - 1),
            Column::Index(i) => bail!("column {i} outside 1..={width}"),
            Column::Name(name) => {
                let header = header.ok_or_else(|| anyhow!("column '{name}' selected by name but the file has no header"))?;
                header
                    .iter()
                    .position(|h| h.trim() == name)
                    .ok_or_else(|| anyhow!("column '{name}' not found; available: {}", header.join(", ")))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadOptions {
    pub header: bool,
    pub response: Column,
    /// Empty means every column other than the response.
    pub covariates: Vec<Column>,
    pub add_intercept: bool,
    pub transform: Transform,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetDescriptor {
    pub name: String,
    pub source: String,
    pub sha256: String,
    pub transform: Transform,
    pub n: usize,
    pub p: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub descriptor: DatasetDescriptor,
    pub data: ModelData,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_csv(path: &Path, options: &LoadOptions) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let data = parse_csv(&text, options).with_context(|| format!("loading {}", path.display()))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into());
    Ok(Dataset {
        descriptor: DatasetDescriptor {
            name,
            source: PathBuf::from(path).display().to_string(),
            sha256: sha256_hex(text.as_bytes()),
            transform: options.transform,
            n: data.n(),
            p: data.p(),
        },
        data,
    })
}

pub fn parse_csv(text: &str, options: &LoadOptions) -> Result<ModelData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.header)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Option<Vec<String>> = if options.header {
        Some(reader.headers()?.iter().map(str::to_string).collect())
    } else {
        None
    };
    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;
    let width = header
        .as_ref()
        .map(Vec::len)
        .or_else(|| records.first().map(|r| r.len()))
        .ok_or_else(|| anyhow!("file has no rows"))?;

    let resp = options.response.resolve(header.as_deref(), width)?;
    let covs: Vec<usize> = if options.covariates.is_empty() {
        (0..width).filter(|&j| j != resp).collect()
    } else {
        options
            .covariates
            .iter()
            .map(|c| c.resolve(header.as_deref(), width))
            .collect::<Result<_>>()?
    };
    if covs.contains(&resp) {
        bail!("response column also selected as a covariate");
    }
    let label = |j: usize| header.as_ref().map(|h| h[j].clone()).unwrap_or_else(|| format!("{}", j + 1));
    let line_offset = if options.header { 2 } else { 1 };

    let p = covs.len() + options.add_intercept as usize;
    if p == 0 {
        bail!("no covariates selected and no intercept");
    }
    let mut design = Vec::with_capacity(records.len() * p);
    let mut response = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let line = i + line_offset;
        let cell = |j: usize| -> Result<f64> {
            let raw = rec.get(j).ok_or_else(|| anyhow!("line {line}: missing column '{}'", label(j)))?;
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                bail!("line {line}, column '{}': missing values are not supported", label(j));
            }
            let v: f64 = raw
                .parse()
                .map_err(|_| anyhow!("line {line}, column '{}': cannot parse '{raw}' as a number", label(j)))?;
            if !v.is_finite() {
                bail!("line {line}, column '{}': non-finite value", label(j));
            }
            Ok(v)
        };
        let mut y = cell(resp)?;
        if options.add_intercept {
            design.push(1.0);
        }
        for &j in &covs {
            let mut v = cell(j)?;
            if options.transform == Transform::LogLog {
                v = checked_ln(v).with_context(|| format!("line {line}, column '{}'", label(j)))?;
            }
            design.push(v);
        }
        if options.transform == Transform::LogLog {
            y = checked_ln(y).with_context(|| format!("line {line}, column '{}'", label(resp)))?;
        }
        response.push(y);
    }
    let n = response.len();
    Ok(ModelData::new(Matrix::from_row_major(n, p, design)?, response)?)
}

fn checked_ln(v: f64) -> Result<f64> {
    if v <= 0.0 {
        bail!("log transform needs positive values, got {v}");
    }
    Ok(v.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_shapes() {
        let b = Bundled::BrainWeight.load().unwrap();
        assert_eq!((b.data.n(), b.data.p()), (28, 2));
        let w = Bundled::FirstWord.load().unwrap();
        assert_eq!((w.data.n(), w.data.p()), (21, 2));
    }

    #[test]
    fn loglog_first_row() {
        let b = Bundled::BrainWeight.load().unwrap();
        assert_eq!(b.data.response()[0], 8.1f64.ln());
        assert_eq!(b.data.row(0), &[1.0, 1.35f64.ln()]);
    }

    #[test]
    fn positional_columns_without_header() {
        let opts = LoadOptions {
            header: false,
            response: Column::Index(2),
            covariates: vec![],
            add_intercept: false,
            transform: Transform::None,
        };
        let d = parse_csv("1,10\n2,20\n3,31\n", &opts).unwrap();
        assert_eq!(d.p(), 1);
        assert_eq!(d.response(), &[10.0, 20.0, 31.0]);
    }

    #[test]
    fn missing_value_rejected() {
        let opts = LoadOptions {
            header: true,
            response: Column::Name("y".into()),
            covariates: vec![],
            add_intercept: true,
            transform: Transform::None,
        };
        let err = parse_csv("x,y\n1,2\n,3\n2,5\n", &opts).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("missing"), "{err}");
    }
}
