//! Longitudinal subjects, the lagged design of the global model, and CSV I/O.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RowMatrix;
use crate::splines::KnotSpec;

/// One individual's measurement path. Indices `j` used by the public API are
/// 1-based, matching the usual `Y_{i,j}` notation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// One row of covariates per measurement.
    pub covariates: Vec<Vec<f64>>,
}

impl Subject {
    pub fn new(
        id: impl Into<String>,
        times: Vec<f64>,
        values: Vec<f64>,
        covariates: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let s = Subject {
            id: id.into(),
            times,
            values,
            covariates,
        };
        s.validate()?;
        Ok(s)
    }

    /// Subject without covariates.
    pub fn plain(id: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let covariates = vec![Vec::new(); times.len()];
        Subject::new(id, times, values, covariates)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let m = self.times.len();
        if m == 0 {
            return Err(Error::Input(format!(
                "subject {} has no measurements",
                self.id
            )));
        }
        if self.values.len() != m || self.covariates.len() != m {
            return Err(Error::Shape(format!(
                "subject {}: {} times, {} values, {} covariate rows",
                self.id,
                m,
                self.values.len(),
                self.covariates.len()
            )));
        }
        let l = self.covariates[0].len();
        if self.covariates.iter().any(|r| r.len() != l) {
            return Err(Error::Shape(format!(
                "subject {}: ragged covariate rows",
                self.id
            )));
        }
        if !self.times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Input(format!(
                "subject {}: times are not strictly increasing",
                self.id
            )));
        }
        let finite = self
            .times
            .iter()
            .chain(&self.values)
            .chain(self.covariates.iter().flatten());
        if !finite.into_iter().all(|v| v.is_finite()) {
            return Err(Error::Input(format!(
                "subject {}: non-finite value",
                self.id
            )));
        }
        Ok(())
    }

    fn covariate_dim(&self) -> usize {
        self.covariates.first().map_or(0, Vec::len)
    }
}

/// Gaps `t_j - t_{j-k}` for `k = 1..=p` (1-based `j`).
pub fn time_distances(subject: &Subject, j: usize, p: usize) -> Result<Vec<f64>> {
    if j <= p || j > subject.len() {
        return Err(Error::Index(format!(
            "measurement {j} of subject {} has no {p} predecessors (m = {})",
            subject.id,
            subject.len()
        )));
    }
    let t = subject.times[j - 1];
    Ok((1..=p).map(|k| t - subject.times[j - 1 - k]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub subjects: Vec<Subject>,
    pub covariate_names: Vec<String>,
}

impl Dataset {
    /// Validates subjects; covariate columns are named `x1..xl`.
    pub fn new(subjects: Vec<Subject>) -> Result<Self> {
        let l = subjects.first().map_or(0, Subject::covariate_dim);
        let names = (1..=l).map(|k| format!("x{k}")).collect();
        Dataset::with_names(subjects, names)
    }

    pub fn with_names(subjects: Vec<Subject>, covariate_names: Vec<String>) -> Result<Self> {
        let l = covariate_names.len();
        let mut seen = HashMap::new();
        for s in &subjects {
            s.validate()?;
            if s.covariate_dim() != l {
                return Err(Error::Shape(format!(
                    "subject {} has {} covariates, dataset has {l}",
                    s.id,
                    s.covariate_dim()
                )));
            }
            if seen.insert(s.id.as_str(), ()).is_some() {
                return Err(Error::Input(format!("duplicate subject id {}", s.id)));
            }
        }
        Ok(Dataset {
            subjects,
            covariate_names,
        })
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn all_times(&self) -> Vec<f64> {
        self.subjects
            .iter()
            .flat_map(|s| s.times.iter().copied())
            .collect()
    }

    /// Copy with covariate columns removed.
    pub fn without_covariates(&self) -> Dataset {
        let subjects = self
            .subjects
            .iter()
            .map(|s| Subject {
                id: s.id.clone(),
                times: s.times.clone(),
                values: s.values.clone(),
                covariates: vec![Vec::new(); s.len()],
            })
            .collect();
        Dataset {
            subjects,
            covariate_names: Vec::new(),
        }
    }

    /// Subjects at the given positions; repeated positions get distinct ids
    /// (`id#2`, `id#3`, ...).
    pub fn resample(&self, positions: &[usize]) -> Dataset {
        let mut count: HashMap<usize, usize> = HashMap::new();
        let subjects = positions
            .iter()
            .map(|&i| {
                let c = count.entry(i).or_insert(0);
                *c += 1;
                let mut s = self.subjects[i].clone();
                if *c > 1 {
                    s.id = format!("{}#{}", s.id, c);
                }
                s
            })
            .collect();
        Dataset {
            subjects,
            covariate_names: self.covariate_names.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowId {
    /// Position of the subject in the dataset.
    pub subject: usize,
    /// 1-based measurement index.
    pub j: usize,
}

/// Assembled regression system for lag order `p`.
///
/// Linear block columns: `Y_{j-1}, D_{j,1} Y_{j-1}, ..., Y_{j-p}, D_{j,p} Y_{j-p}, X_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSystem {
    pub spline_block: RowMatrix,
    pub linear_block: RowMatrix,
    pub response: Vec<f64>,
    pub row_index: Vec<RowId>,
    pub p: usize,
    /// Subjects contributing at least one row.
    pub n_subjects: usize,
    /// Subjects with at most `p` measurements.
    pub skipped_subjects: usize,
}

impl DesignSystem {
    pub fn n_rows(&self) -> usize {
        self.response.len()
    }

    /// `[spline block | linear block]`.
    pub fn full_design(&self) -> RowMatrix {
        self.spline_block
            .hstack(&self.linear_block)
            .expect("blocks share row count")
    }
}

/// Linear-block row for the measurement at `t` given previous `(time, value)`
/// pairs ordered oldest first; uses the last `p` of them.
pub fn lagged_row(
    history: &[(f64, f64)],
    t: f64,
    p: usize,
    covariates: &[f64],
    out: &mut Vec<f64>,
) {
    out.clear();
    let last = history.len();
    for k in 1..=p {
        let (tk, yk) = history[last - k];
        out.push(yk);
        out.push((t - tk) * yk);
    }
    out.extend_from_slice(covariates);
}

pub fn build_design(dataset: &Dataset, p: usize, spec: &KnotSpec) -> Result<DesignSystem> {
    let kn = spec.dimension();
    let lin = 2 * p + dataset.n_covariates();
    let n_rows: usize = dataset
        .subjects
        .iter()
        .map(|s| s.len().saturating_sub(p))
        .sum();
    let mut spline = Vec::with_capacity(n_rows * kn);
    let mut linear = Vec::with_capacity(n_rows * lin);
    let mut response = Vec::with_capacity(n_rows);
    let mut row_index = Vec::with_capacity(n_rows);
    let mut basis = vec![0.0; kn];
    let mut skipped = 0;
    for (si, s) in dataset.subjects.iter().enumerate() {
        if s.len() <= p {
            skipped += 1;
            continue;
        }
        for j in p + 1..=s.len() {
            let t = s.times[j - 1];
            spec.eval_into(t, &mut basis).map_err(|_| {
                Error::Domain(format!(
                    "subject {} measurement {j} at time {t} is outside the spline domain [{}, {}]",
                    s.id, spec.t_lower, spec.t_upper
                ))
            })?;
            spline.extend_from_slice(&basis);
            for k in 1..=p {
                let y = s.values[j - 1 - k];
                linear.push(y);
                linear.push((t - s.times[j - 1 - k]) * y);
            }
            linear.extend_from_slice(&s.covariates[j - 1]);
            response.push(s.values[j - 1]);
            row_index.push(RowId { subject: si, j });
        }
    }
    let n = response.len();
    Ok(DesignSystem {
        spline_block: RowMatrix::from_vec(n, kn, spline)?,
        linear_block: RowMatrix::from_vec(n, lin, linear)?,
        response,
        row_index,
        p,
        n_subjects: dataset.len() - skipped,
        skipped_subjects: skipped,
    })
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file)
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_csv(dataset, file)
}

/// Reads `subject,t,y,x1,...` rows. Rows may come in any order; subjects keep
/// the order of their first appearance and are sorted by time.
pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    if header.len() < 3 || &header[0] != "subject" || &header[1] != "t" || &header[2] != "y" {
        return Err(Error::Parse {
            line: 1,
            msg: "header must start with subject,t,y".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
    let l = names.len();

    struct Obs {
        t: f64,
        y: f64,
        x: Vec<f64>,
        line: usize,
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Obs>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != l + 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", l + 3, rec.len()),
            });
        }
        let num = |k: usize| -> Result<f64> {
            let field = &rec[k];
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                msg: format!(
                    "column {} is not a number: {field:?}",
                    header.get(k).unwrap_or("?")
                ),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: format!("non-finite value {field:?}"),
                });
            }
            Ok(v)
        };
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty subject id".into(),
            });
        }
        let obs = Obs {
            t: num(1)?,
            y: num(2)?,
            x: (3..l + 3).map(num).collect::<Result<_>>()?,
            line,
        };
        groups
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push(obs);
    }

    let mut subjects = Vec::with_capacity(order.len());
    for id in order {
        let mut obs = groups.remove(&id).unwrap_or_default();
        obs.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.line.cmp(&b.line)));
        if let Some(w) = obs.windows(2).find(|w| w[0].t >= w[1].t) {
            return Err(Error::Parse {
                line: w[1].line,
                msg: format!("subject {id}: repeated measurement time {}", w[1].t),
            });
        }
        let mut s = Subject {
            id,
            times: vec![],
            values: vec![],
            covariates: vec![],
        };
        for o in obs {
            s.times.push(o.t);
            s.values.push(o.y);
            s.covariates.push(o.x);
        }
        subjects.push(s);
    }
    Dataset::with_names(subjects, names)
}

pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["subject".to_string(), "t".into(), "y".into()];
    header.extend(dataset.covariate_names.iter().cloned());
    w.write_record(&header).map_err(csv_io)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for s in &dataset.subjects {
        for j in 0..s.len() {
            rec.clear();
            rec.push(s.id.clone());
            rec.push(format!("{:?}", s.times[j]));
            rec.push(format!("{:?}", s.values[j]));
            rec.extend(s.covariates[j].iter().map(|v| format!("{v:?}")));
            w.write_record(&rec).map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}
