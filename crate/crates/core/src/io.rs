//! Long-format CSV ingestion and export, model and truth files.
//!
//! Datasets are read from `subject,time,feature,value` tables. Empty cells
//! and `NA`/`NaN`/`null` values mark an entry as missing.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{LongitudinalDataset, Observation, SubjectRecord, TimeMap};
use crate::error::{FacdError, Result};
use crate::metrics::EvaluationReport;
use crate::pipeline::{time_integrated_correlation, ComponentScores, FacdModel};
use crate::scalar::Scalar;
use crate::simulate::GroundTruth;

pub const MODEL_FORMAT: &str = "facd-model";
pub const TRUTH_FORMAT: &str = "facd-truth";
pub const FORMAT_VERSION: u32 = 1;

const HEADER: [&str; 4] = ["subject", "time", "feature", "value"];
const MISSING_TOKENS: [&str; 5] = ["", "NA", "NaN", "nan", "null"];

#[derive(Clone, Debug, PartialEq)]
pub struct RawRow {
    /// 1-based line number in the source, header included.
    pub line: usize,
    pub subject: String,
    pub time: f64,
    pub feature: String,
    pub value: Option<f64>,
}

fn parse_number(field: &str, what: &str, line: usize) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(FacdError::Parse {
            row: line,
            message: format!("{what} `{field}` is not a finite number"),
        }),
    }
}

pub fn parse_long_csv(reader: impl Read) -> Result<Vec<RawRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() != 4 || header.iter().zip(HEADER).any(|(a, b)| a != b) {
        return Err(FacdError::Parse {
            row: 1,
            message: format!("header must be `{}`", HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| FacdError::Parse { row: line, message: e.to_string() })?;
        if rec.len() != 4 {
            return Err(FacdError::Parse {
                row: line,
                message: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let subject = rec[0].to_string();
        let feature = rec[2].to_string();
        if subject.is_empty() || feature.is_empty() {
            return Err(FacdError::Parse { row: line, message: "empty subject or feature".into() });
        }
        let time = parse_number(&rec[1], "time", line)?;
        let value = if MISSING_TOKENS.contains(&&rec[3]) {
            None
        } else {
            Some(parse_number(&rec[3], "value", line)?)
        };
        rows.push(RawRow { line, subject, time, feature, value });
    }
    Ok(rows)
}

pub fn read_long_csv(path: impl AsRef<Path>) -> Result<Vec<RawRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    parse_long_csv(BufReader::new(file))
}

/// One subject's rows: raw time bits -> feature -> (value, line).
type Cells = BTreeMap<u64, BTreeMap<usize, (Option<f64>, usize)>>;

/// Groups rows into subjects and time points. Subjects and features keep
/// their order of first appearance; absent combinations are masked.
pub fn build_dataset<T: Scalar>(
    label: &str,
    rows: &[RawRow],
    time_map: &TimeMap,
    standardize: bool,
) -> Result<LongitudinalDataset<T>> {
    let mut features: Vec<String> = Vec::new();
    let mut feature_ix: HashMap<&str, usize> = HashMap::new();
    let mut subjects: Vec<&str> = Vec::new();
    let mut subject_ix: HashMap<&str, usize> = HashMap::new();
    let mut cells: Vec<Cells> = Vec::new();
    let mut times: HashMap<u64, f64> = HashMap::new();
    for row in rows {
        let j = *feature_ix.entry(&row.feature).or_insert_with(|| {
            features.push(row.feature.clone());
            features.len() - 1
        });
        let i = *subject_ix.entry(&row.subject).or_insert_with(|| {
            subjects.push(&row.subject);
            cells.push(BTreeMap::new());
            subjects.len() - 1
        });
        // +0.0 folds -0.0 onto 0.0
        let t = row.time + 0.0;
        let key = order_key(t);
        times.insert(key, t);
        let slot = cells[i].entry(key).or_default();
        match slot.get(&j) {
            Some(&(prev, _)) if prev.map(f64::to_bits) != row.value.map(f64::to_bits) => {
                if prev.is_some() && row.value.is_some() {
                    return Err(FacdError::Conflict {
                        row: row.line,
                        subject: row.subject.clone(),
                        time: row.time,
                        feature: row.feature.clone(),
                    });
                }
                // a value wins over a missing marker
                if row.value.is_some() {
                    slot.insert(j, (row.value, row.line));
                }
            }
            Some(_) => {}
            None => {
                slot.insert(j, (row.value, row.line));
            }
        }
    }
    let p = features.len();
    let (shift, scale) = if standardize {
        feature_moments(&cells, p)
    } else {
        (vec![0.0; p], vec![1.0; p])
    };
    let records = subjects
        .iter()
        .zip(&cells)
        .map(|(id, by_time)| {
            let observations = by_time
                .iter()
                .map(|(key, entries)| {
                    let t = T::of(time_map.to_unit(times[key]).clamp(0.0, 1.0));
                    let mut values = vec![T::zero(); p];
                    let mut missing = vec![true; p];
                    for (&j, &(v, _)) in entries {
                        if let Some(v) = v {
                            values[j] = T::of((v - shift[j]) / scale[j]);
                            missing[j] = false;
                        }
                    }
                    if missing.iter().any(|&m| m) {
                        Observation::with_mask(t, values, missing)
                    } else {
                        Observation::new(t, values)
                    }
                })
                .collect();
            SubjectRecord { id: id.to_string(), observations }
        })
        .collect();
    LongitudinalDataset::new(label, features, records)
}

/// Total order on finite times, consistent with `<`.
fn order_key(t: f64) -> u64 {
    let b = t.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn feature_moments(cells: &[Cells], p: usize) -> (Vec<f64>, Vec<f64>) {
    let mut sum = vec![0.0; p];
    let mut count = vec![0usize; p];
    let values = || cells.iter().flat_map(|s| s.values()).flat_map(|e| e.iter());
    for (&j, &(v, _)) in values() {
        if let Some(v) = v {
            sum[j] += v;
            count[j] += 1;
        }
    }
    let mean: Vec<f64> = (0..p).map(|j| if count[j] > 0 { sum[j] / count[j] as f64 } else { 0.0 }).collect();
    let mut ss = vec![0.0; p];
    for (&j, &(v, _)) in values() {
        if let Some(v) = v {
            ss[j] += (v - mean[j]).powi(2);
        }
    }
    let sd = (0..p)
        .map(|j| {
            let s = if count[j] > 0 { (ss[j] / count[j] as f64).sqrt() } else { 0.0 };
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, sd)
}

/// Reads both sides with a time map pooled over the two files.
pub fn ingest_pair<T: Scalar>(
    path_x: impl AsRef<Path>,
    path_y: impl AsRef<Path>,
    standardize: bool,
) -> Result<(LongitudinalDataset<T>, LongitudinalDataset<T>, TimeMap)> {
    let rx = read_long_csv(path_x)?;
    let ry = read_long_csv(path_y)?;
    let map = TimeMap::spanning(rx.iter().chain(&ry).map(|r| r.time))
        .ok_or_else(|| FacdError::InvalidInput("both files are empty".into()))?;
    let x = build_dataset("x", &rx, &map, standardize)?;
    let y = build_dataset("y", &ry, &map, standardize)?;
    Ok((x, y, map))
}

/// Reads both sides with a fixed map, e.g. the one stored in a model.
/// Times outside the map's range are clamped to [0, 1].
pub fn ingest_pair_with_map<T: Scalar>(
    path_x: impl AsRef<Path>,
    path_y: impl AsRef<Path>,
    time_map: &TimeMap,
    standardize: bool,
) -> Result<(LongitudinalDataset<T>, LongitudinalDataset<T>)> {
    let x = build_dataset("x", &read_long_csv(path_x)?, time_map, standardize)?;
    let y = build_dataset("y", &read_long_csv(path_y)?, time_map, standardize)?;
    Ok((x, y))
}

/// Every entry becomes one row; masked entries are written as `NA`, so
/// reading the file back restores the mask and the feature order.
pub fn write_long_csv<T: Scalar>(writer: impl Write, data: &LongitudinalDataset<T>, time_map: &TimeMap) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    let names = data.feature_names();
    for s in data.subjects() {
        for o in &s.observations {
            let time = time_map.from_unit(o.time.as_f64()).to_string();
            for (j, name) in names.iter().enumerate() {
                let value = if o.is_observed(j) { o.values[j].to_string() } else { "NA".into() };
                w.write_record([s.id.as_str(), &time, name, &value])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_long_csv_file<T: Scalar>(path: impl AsRef<Path>, data: &LongitudinalDataset<T>, time_map: &TimeMap) -> Result<()> {
    write_long_csv(BufWriter::new(File::create(path)?), data, time_map)
}

#[derive(Serialize, Deserialize)]
#[serde(bound(deserialize = ""))]
struct ModelFile<T: Scalar> {
    format: String,
    version: u32,
    scalar: String,
    model: FacdModel<T>,
}

fn scalar_name<T: Scalar>() -> &'static str {
    std::any::type_name::<T>()
}

pub fn write_model<T: Scalar>(writer: impl Write, model: &FacdModel<T>) -> Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: FORMAT_VERSION,
        scalar: scalar_name::<T>().into(),
        model: model.clone(),
    };
    let mut w = BufWriter::new(writer);
    serde_json::to_writer_pretty(&mut w, &file)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_model<T: Scalar>(reader: impl Read) -> Result<FacdModel<T>> {
    let file: ModelFile<T> = serde_json::from_reader(BufReader::new(reader))?;
    if file.format != MODEL_FORMAT || file.version != FORMAT_VERSION {
        return Err(FacdError::InvalidInput(format!(
            "unsupported model file `{}` version {}",
            file.format, file.version
        )));
    }
    if file.scalar != scalar_name::<T>() {
        return Err(FacdError::InvalidInput(format!(
            "model was fitted in {}, requested {}",
            file.scalar,
            scalar_name::<T>()
        )));
    }
    Ok(file.model)
}

pub fn save_model<T: Scalar>(path: impl AsRef<Path>, model: &FacdModel<T>) -> Result<()> {
    write_model(File::create(path)?, model)
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<FacdModel<T>> {
    read_model(File::open(path)?)
}

#[derive(Serialize, Deserialize)]
struct TruthFile {
    format: String,
    version: u32,
    time_map: TimeMap,
    truth: GroundTruth,
}

pub fn save_truth(path: impl AsRef<Path>, truth: &GroundTruth, time_map: &TimeMap) -> Result<()> {
    let file = TruthFile {
        format: TRUTH_FORMAT.into(),
        version: FORMAT_VERSION,
        time_map: *time_map,
        truth: truth.clone(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &file)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_truth(path: impl AsRef<Path>) -> Result<(GroundTruth, TimeMap)> {
    let file: TruthFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if file.format != TRUTH_FORMAT || file.version != FORMAT_VERSION {
        return Err(FacdError::InvalidInput(format!(
            "unsupported truth file `{}` version {}",
            file.format, file.version
        )));
    }
    Ok((file.truth, file.time_map))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadingRow {
    pub component: usize,
    pub side: String,
    pub feature: String,
    /// Position on the model's [0, 1] grid.
    pub t: f64,
    /// `t` mapped back to the original time scale.
    pub time: f64,
    pub value: f64,
}

pub fn write_loadings<T: Scalar>(writer: impl Write, model: &FacdModel<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for c in &model.components {
        let sides = [
            ("x", &model.feature_names_x, &c.loadings_x),
            ("y", &model.feature_names_y, &c.loadings_y),
        ];
        for (side, names, loadings) in sides {
            for (name, l) in names.iter().zip(loadings.iter()) {
                for (&t, &v) in model.grid.points().iter().zip(l) {
                    w.serialize(LoadingRow {
                        component: c.rank_index,
                        side: side.into(),
                        feature: name.clone(),
                        t: t.as_f64(),
                        time: model.time_map.from_unit(t.as_f64()),
                        value: v.as_f64(),
                    })?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Loadings of one component read back from CSV, features in first-seen order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadingTable {
    pub grid: Vec<f64>,
    pub features_x: Vec<String>,
    pub features_y: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

pub fn read_loadings(reader: impl Read) -> Result<BTreeMap<usize, LoadingTable>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out: BTreeMap<usize, LoadingTable> = BTreeMap::new();
    for (k, row) in rdr.deserialize::<LoadingRow>().enumerate() {
        let row = row.map_err(|e| FacdError::Parse { row: k + 2, message: e.to_string() })?;
        let table = out.entry(row.component).or_default();
        let (names, values) = match row.side.as_str() {
            "x" => (&mut table.features_x, &mut table.x),
            "y" => (&mut table.features_y, &mut table.y),
            other => {
                return Err(FacdError::Parse { row: k + 2, message: format!("unknown side `{other}`") })
            }
        };
        if names.last() != Some(&row.feature) {
            if names.contains(&row.feature) {
                return Err(FacdError::Parse {
                    row: k + 2,
                    message: format!("rows of feature `{}` are not contiguous", row.feature),
                });
            }
            names.push(row.feature.clone());
            values.push(Vec::new());
        }
        let v = values.last_mut().expect("pushed above");
        if names.len() == 1 && table.features_x.len() + table.features_y.len() == 1 {
            table.grid.push(row.t);
        }
        v.push(row.value);
    }
    for (c, t) in &out {
        if t.x.iter().chain(&t.y).any(|l| l.len() != t.grid.len()) {
            return Err(FacdError::InvalidInput(format!("component {c}: loadings have unequal grids")));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub subject: String,
    pub component: usize,
    pub score_x: f64,
    pub score_y: f64,
}

pub fn write_scores<T: Scalar>(writer: impl Write, scores: &ComponentScores<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (r, (sx, sy)) in scores.per_component.iter().enumerate() {
        for ((id, a), b) in scores.subject_ids.iter().zip(sx).zip(sy) {
            w.serialize(ScoreRow {
                subject: id.clone(),
                component: r + 1,
                score_x: a.as_f64(),
                score_y: b.as_f64(),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn model_scores<T: Scalar>(model: &FacdModel<T>) -> ComponentScores<T> {
    ComponentScores {
        subject_ids: model.subject_ids.clone(),
        per_component: model.components.iter().map(|c| (c.scores_x.clone(), c.scores_y.clone())).collect(),
    }
}

pub fn read_scores(reader: impl Read) -> Result<Vec<ScoreRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize::<ScoreRow>()
        .enumerate()
        .map(|(k, r)| r.map_err(|e| FacdError::Parse { row: k + 2, message: e.to_string() }))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub component: usize,
    pub feature_x: String,
    pub feature_y: String,
    pub rho: f64,
}

/// Edges with `|ρ| > threshold` of every component, strongest first.
pub fn write_network<T: Scalar>(writer: impl Write, model: &FacdModel<T>, threshold: f64) -> Result<usize> {
    let mut w = csv::Writer::from_writer(writer);
    let mut written = 0;
    for c in &model.components {
        let net = time_integrated_correlation(model, c.rank_index)?;
        let mut edges: Vec<EdgeRow> = Vec::new();
        for j in 0..model.p() {
            for m in 0..model.q() {
                let rho = net.rho[(j, m)].as_f64();
                if rho.abs() > threshold {
                    edges.push(EdgeRow {
                        component: c.rank_index,
                        feature_x: model.feature_names_x[j].clone(),
                        feature_y: model.feature_names_y[m].clone(),
                        rho,
                    });
                }
            }
        }
        edges.sort_by(|a, b| b.rho.abs().total_cmp(&a.rho.abs()));
        written += edges.len();
        for e in edges {
            w.serialize(e)?;
        }
    }
    w.flush()?;
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub replicate: String,
    pub method: String,
    pub rank_index: usize,
    pub loading_error_x: f64,
    pub loading_error_y: f64,
    pub fpr_x: f64,
    pub fpr_y: f64,
    pub fnr_x: f64,
    pub fnr_y: f64,
    pub score_corr_x: f64,
    pub score_corr_y: f64,
}

impl ReportRow {
    pub fn new(replicate: impl Into<String>, method: impl Into<String>, r: &EvaluationReport) -> Self {
        Self {
            replicate: replicate.into(),
            method: method.into(),
            rank_index: r.rank_index,
            loading_error_x: r.loading_error_x,
            loading_error_y: r.loading_error_y,
            fpr_x: r.fpr_x,
            fpr_y: r.fpr_y,
            fnr_x: r.fnr_x,
            fnr_y: r.fnr_y,
            score_corr_x: r.score_corr_x,
            score_corr_y: r.score_corr_y,
        }
    }
}

pub fn write_report(writer: impl Write, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{fit, FacdConfig, Sparsity};
    use crate::simulate::{generate, SimulationConfig};

    fn table(text: &str) -> Vec<RawRow> {
        parse_long_csv(text.as_bytes()).unwrap()
    }

    #[test]
    fn non_finite_scores_survive_json() {
        let fit = crate::spline::PenalizedFit::<f64> {
            coefficients: vec![1.0],
            nu: 0.5,
            gcv_score: f64::INFINITY,
            edf: 1.0,
            rss: 0.0,
            n_obs: 1,
            ridged: false,
        };
        let text = serde_json::to_string(&fit).unwrap();
        assert!(text.contains("\"inf\""));
        let back: crate::spline::PenalizedFit<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, fit);
    }

    #[test]
    fn one_subject_two_times_two_features() {
        let rows = table("subject,time,feature,value\na,0,f,1\na,0,g,2\na,1,f,3\na,1,g,4\n");
        let d: LongitudinalDataset<f64> = build_dataset("x", &rows, &TimeMap::identity(), false).unwrap();
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.subjects()[0].observations.len(), 2);
        assert_eq!(d.subjects()[0].observations[1].values, vec![3.0, 4.0]);
        assert_eq!(d.feature_names(), ["f", "g"]);
    }

    #[test]
    fn pooled_time_map() {
        let dir = tempfile::tempdir().unwrap();
        let px = dir.path().join("x.csv");
        let py = dir.path().join("y.csv");
        std::fs::write(&px, "subject,time,feature,value\na,0,f,1\na,30,f,2\na,60,f,3\n").unwrap();
        std::fs::write(&py, "subject,time,feature,value\na,0,g,1\na,15,g,2\n").unwrap();
        let (x, y, map) = ingest_pair::<f64>(&px, &py, false).unwrap();
        let tx: Vec<f64> = x.subjects()[0].observations.iter().map(|o| o.time).collect();
        let ty: Vec<f64> = y.subjects()[0].observations.iter().map(|o| o.time).collect();
        assert_eq!(tx, vec![0.0, 0.5, 1.0]);
        assert_eq!(ty, vec![0.0, 0.25]);
        assert_eq!(map, TimeMap { min: 0.0, max: 60.0 });
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let err = parse_long_csv("subject,time,feature,value\na,0,f,1\na,0.5,f,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, FacdError::Parse { row: 3, .. }), "{err}");
        assert!(err.to_string().contains("row 3"));
        let err = parse_long_csv("subject,time,feature,value\na,x,f,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, FacdError::Parse { row: 2, .. }));
        let err = parse_long_csv("subject,time,feature,value\na,0,f\n".as_bytes()).unwrap_err();
        assert!(matches!(err, FacdError::Parse { row: 2, .. }));
        let err = parse_long_csv("id,time,feature,value\n".as_bytes()).unwrap_err();
        assert!(matches!(err, FacdError::Parse { row: 1, .. }));
    }

    #[test]
    fn duplicates() {
        let same = table("subject,time,feature,value\na,0,f,1\na,0,f,1\n");
        assert!(build_dataset::<f64>("x", &same, &TimeMap::identity(), false).is_ok());
        let clash = table("subject,time,feature,value\na,0,f,1\nb,0,f,5\na,0,f,2\n");
        let err = build_dataset::<f64>("x", &clash, &TimeMap::identity(), false).unwrap_err();
        assert!(matches!(err, FacdError::Conflict { row: 4, .. }), "{err}");
    }

    #[test]
    fn missing_combinations_are_masked() {
        let rows = table("subject,time,feature,value\na,0,f,1\na,1,g,2\nb,0.5,f,NA\nb,0.5,g,\nb,0.2,g,7\n");
        let d: LongitudinalDataset<f64> = build_dataset("x", &rows, &TimeMap::identity(), false).unwrap();
        let a = &d.subjects()[0].observations;
        assert!(a[0].is_observed(0) && !a[0].is_observed(1));
        assert!(!a[1].is_observed(0) && a[1].is_observed(1));
        let b = &d.subjects()[1].observations;
        assert_eq!(b[0].time, 0.2);
        assert!(b[1].is_fully_missing());
    }

    #[test]
    fn standardization_zscores_each_feature() {
        let rows = table("subject,time,feature,value\na,0,f,1\na,1,f,3\nb,0,f,5\nb,0,g,4\nb,1,g,4\n");
        let d: LongitudinalDataset<f64> = build_dataset("x", &rows, &TimeMap::identity(), true).unwrap();
        let f: Vec<f64> = d.subjects().iter().flat_map(|s| s.observations.iter().filter(|o| o.is_observed(0)).map(|o| o.values[0])).collect();
        let mean = f.iter().sum::<f64>() / 3.0;
        let var = f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        // a constant feature is only centered
        assert_eq!(d.subjects()[1].observations[0].values[1], 0.0);
    }

    #[test]
    fn write_then_ingest_round_trips() {
        let cfg = SimulationConfig { n: 12, p: 4, q: 3, n_components: 2, n_active: 2, n_basis: 3, seed: 5, ..SimulationConfig::default() };
        let (x, _, _) = generate::<f64>(&cfg).unwrap();
        // mask a few entries, including a whole observation
        let mut subjects = x.clone().into_subjects();
        let o = &mut subjects[0].observations[0];
        *o = Observation::with_mask(o.time, vec![0.0, o.values[1], 0.0, o.values[3]], vec![true, false, true, false]);
        let o = &mut subjects[1].observations[1];
        *o = Observation::with_mask(o.time, vec![0.0; 4], vec![true; 4]);
        let x = LongitudinalDataset::new("x", x.feature_names().to_vec(), subjects).unwrap();
        let mut buf = Vec::new();
        write_long_csv(&mut buf, &x, &TimeMap::identity()).unwrap();
        let back: LongitudinalDataset<f64> = build_dataset("x", &parse_long_csv(buf.as_slice()).unwrap(), &TimeMap::identity(), false).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn model_file_round_trips_and_is_deterministic() {
        let cfg = SimulationConfig { n: 40, p: 5, q: 4, n_components: 2, n_active: 2, n_basis: 3, seed: 6, ..SimulationConfig::default() };
        let (x, y, _) = generate::<f64>(&cfg).unwrap();
        let fc = FacdConfig { sparsity: Sparsity::Fixed { rho_x: 0.01, rho_y: 0.01 }, n_components: 2, ..FacdConfig::default() };
        let model = fit(&x, &y, &fc).unwrap();
        let mut a = Vec::new();
        write_model(&mut a, &model).unwrap();
        let mut b = Vec::new();
        write_model(&mut b, &fit(&x, &y, &fc).unwrap()).unwrap();
        assert_eq!(a, b);
        let back: FacdModel<f64> = read_model(a.as_slice()).unwrap();
        assert_eq!(back, model);
        assert!(read_model::<f32>(a.as_slice()).is_err());

        let mut csv = Vec::new();
        write_loadings(&mut csv, &model).unwrap();
        let tables = read_loadings(csv.as_slice()).unwrap();
        assert_eq!(tables.len(), model.components.len());
        let t = &tables[&1];
        assert_eq!(t.grid.len(), model.grid.len());
        assert_eq!(t.x, model.components[0].loadings_x);
        assert_eq!(t.features_y, model.feature_names_y);

        let mut sc = Vec::new();
        write_scores(&mut sc, &model_scores(&model)).unwrap();
        let rows = read_scores(sc.as_slice()).unwrap();
        assert_eq!(rows.len(), 40 * model.components.len());
        assert_eq!(rows[3].score_x, model.components[0].scores_x[3]);

        let mut net = Vec::new();
        let n = write_network(&mut net, &model, 0.0).unwrap();
        assert_eq!(String::from_utf8(net).unwrap().lines().count(), n + 1);
    }
}
