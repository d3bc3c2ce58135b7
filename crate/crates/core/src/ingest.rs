//! POI records, flat-file loading, category one-hot encoding and granularity
//! labelings.
//!
//! Every dataset is kept in ascending-id order; feature rows, graph nodes and
//! labelings all index into that ordering.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::matrix::FeatureMatrix;

/// Columns of the POI CSV schema, in output order.
pub const CSV_COLUMNS: [&str; 8] = ["id", "name", "lon", "lat", "category", "state", "city", "zip"];

/// Granularities carried as first-class columns of the flat-file schema.
pub const ADMIN_COLUMNS: [&str; 3] = ["state", "city", "zip"];

pub const CATEGORY_SEPARATOR: &str = " > ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiRecord {
    pub id: String,
    pub name: String,
    pub location: GeoPoint,
    pub category_path: Vec<String>,
    /// Granularity name to class, e.g. `"state" -> "GA"`.
    pub admin: BTreeMap<String, String>,
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoiFormat {
    Csv,
    Jsonl,
}

impl PoiFormat {
    /// Picks the format from the file extension; anything but `.jsonl`/`.json`
    /// is treated as CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("jsonl") || e.eq_ignore_ascii_case("json") => PoiFormat::Jsonl,
            _ => PoiFormat::Csv,
        }
    }
}

/// Splits a rendered category such as `"Dining and Drinking > Pizzeria"`.
pub fn split_category(s: &str) -> Vec<String> {
    s.split('>')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Sorts records by id and rejects duplicates.
pub fn into_dataset(mut records: Vec<PoiRecord>) -> Result<Vec<PoiRecord>> {
    records.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = records.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::DuplicateId(w[0].id.clone()));
    }
    Ok(records)
}

pub fn load_pois(path: &Path, format: PoiFormat) -> Result<Vec<PoiRecord>> {
    let records = match format {
        PoiFormat::Csv => read_csv(path)?,
        PoiFormat::Jsonl => read_jsonl(path)?,
    };
    into_dataset(records)
}

fn parse_err(path: &Path, line: u64, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        field: field.to_owned(),
        message: message.into(),
    }
}

fn read_csv(path: &Path) -> Result<Vec<PoiRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, "header", e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let mut required = HashMap::new();
    for name in ["id", "name", "lon", "lat", "category"] {
        let idx = col(name).ok_or_else(|| parse_err(path, 1, name, "missing column"))?;
        required.insert(name, idx);
    }
    let admin_cols: Vec<(usize, &str)> = ADMIN_COLUMNS.iter().filter_map(|&a| col(a).map(|i| (i, a))).collect();
    let extra_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !CSV_COLUMNS.contains(&h.trim()))
        .map(|(i, h)| (i, h.trim().to_owned()))
        .collect();

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, "row", e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let get = |name: &str| row.get(required[name]).unwrap_or("").trim();

        let id = get("id");
        if id.is_empty() {
            return Err(parse_err(path, line, "id", "empty id"));
        }
        let coord = |name: &str| -> Result<f64> {
            get(name)
                .parse::<f64>()
                .map_err(|e| parse_err(path, line, name, format!("{e}: `{}`", get(name))))
        };
        let (lon, lat) = (coord("lon")?, coord("lat")?);
        let location = GeoPoint::new(lon, lat).map_err(|e| parse_err(path, line, "lon/lat", e.to_string()))?;
        let category_path = split_category(get("category"));
        if category_path.is_empty() {
            return Err(parse_err(path, line, "category", "empty category"));
        }
        let admin = admin_cols
            .iter()
            .filter_map(|&(i, a)| {
                let v = row.get(i)?.trim();
                (!v.is_empty()).then(|| (a.to_owned(), v.to_owned()))
            })
            .collect();
        let extra = extra_cols
            .iter()
            .filter_map(|(i, k)| {
                let v = row.get(*i)?;
                (!v.is_empty()).then(|| (k.clone(), v.to_owned()))
            })
            .collect();
        out.push(PoiRecord {
            id: id.to_owned(),
            name: get("name").to_owned(),
            location,
            category_path,
            admin,
            extra,
        });
    }
    Ok(out)
}

fn json_scalar_to_string(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

fn read_jsonl(path: &Path) -> Result<Vec<PoiRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i as u64 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let obj: serde_json::Map<String, Value> =
            serde_json::from_str(&line).map_err(|e| parse_err(path, lineno, "object", e.to_string()))?;
        out.push(record_from_json(&obj).map_err(|(f, m)| parse_err(path, lineno, f, m))?);
    }
    Ok(out)
}

fn record_from_json(obj: &serde_json::Map<String, Value>) -> std::result::Result<PoiRecord, (&'static str, String)> {
    let string = |f: &'static str| -> std::result::Result<String, (&'static str, String)> {
        match obj.get(f) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Number(n)) => Ok(n.to_string()),
            Some(_) => Err((f, "expected a string".into())),
            None => Err((f, "missing field".into())),
        }
    };
    let number = |f: &'static str| -> std::result::Result<f64, (&'static str, String)> {
        match obj.get(f) {
            Some(Value::Number(n)) => n.as_f64().ok_or((f, "not representable".into())),
            Some(Value::String(s)) => s.trim().parse().map_err(|e| (f, format!("{e}"))),
            Some(_) => Err((f, "expected a number".into())),
            None => Err((f, "missing field".into())),
        }
    };

    let id = string("id")?;
    if id.is_empty() {
        return Err(("id", "empty id".into()));
    }
    let location = GeoPoint::new(number("lon")?, number("lat")?).map_err(|e| ("lon/lat", e.to_string()))?;
    let category_path = match obj.get("category") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.trim().to_owned()),
                _ => Err(("category", "expected an array of strings".to_owned())),
            })
            .filter(|r| r.as_ref().map_or(true, |s| !s.is_empty()))
            .collect::<std::result::Result<Vec<_>, _>>()?,
        Some(Value::String(s)) => split_category(s),
        Some(_) => return Err(("category", "expected an array of strings".into())),
        None => return Err(("category", "missing field".into())),
    };
    if category_path.is_empty() {
        return Err(("category", "empty category".into()));
    }

    let mut admin = BTreeMap::new();
    for a in ADMIN_COLUMNS {
        if let Some(v) = obj.get(a).and_then(json_scalar_to_string) {
            if !v.is_empty() {
                admin.insert(a.to_owned(), v);
            }
        }
    }
    if let Some(v) = obj.get("admin") {
        let map = v.as_object().ok_or(("admin", "expected an object".to_owned()))?;
        for (k, v) in map {
            if let Some(s) = json_scalar_to_string(v).filter(|s| !s.is_empty()) {
                admin.insert(k.clone(), s);
            }
        }
    }
    let mut extra = BTreeMap::new();
    if let Some(v) = obj.get("extra") {
        let map = v.as_object().ok_or(("extra", "expected an object".to_owned()))?;
        for (k, v) in map {
            if let Some(s) = json_scalar_to_string(v) {
                extra.insert(k.clone(), s);
            }
        }
    }
    Ok(PoiRecord {
        id,
        name: obj.get("name").and_then(json_scalar_to_string).unwrap_or_default(),
        location,
        category_path,
        admin,
        extra,
    })
}

/// Writes records in the POI CSV schema, followed by `extra_columns` taken from
/// each record's `extra` map (empty when absent).
pub fn write_pois_csv<W: Write>(w: W, records: &[PoiRecord], extra_columns: &[&str]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = CSV_COLUMNS.to_vec();
    header.extend_from_slice(extra_columns);
    wtr.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.id.clone(),
            r.name.clone(),
            r.location.lon().to_string(),
            r.location.lat().to_string(),
            r.category_path.join(CATEGORY_SEPARATOR),
        ];
        for a in ADMIN_COLUMNS {
            row.push(r.admin.get(a).cloned().unwrap_or_default());
        }
        for c in extra_columns {
            row.push(r.extra.get(*c).cloned().unwrap_or_default());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

/// One JSON object per record using the POI JSONL schema.
pub fn poi_to_json(r: &PoiRecord) -> serde_json::Map<String, Value> {
    let mut obj = serde_json::Map::new();
    obj.insert("id".into(), r.id.clone().into());
    obj.insert("name".into(), r.name.clone().into());
    obj.insert("lon".into(), r.location.lon().into());
    obj.insert("lat".into(), r.location.lat().into());
    obj.insert("category".into(), r.category_path.clone().into());
    for (k, v) in &r.admin {
        obj.insert(k.clone(), v.clone().into());
    }
    if !r.extra.is_empty() {
        let extra: serde_json::Map<String, Value> = r
            .extra
            .iter()
            .map(|(k, v)| (k.clone(), Value::from(v.clone())))
            .collect();
        obj.insert("extra".into(), Value::Object(extra));
    }
    obj
}

pub fn write_pois_jsonl<W: Write>(mut w: W, records: &[PoiRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, &poi_to_json(r))?;
        w.write_all(b"\n").map_err(|e| Error::io("<jsonl output>", e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryVocabulary {
    levels: Vec<Vec<String>>,
    offsets: Vec<usize>,
}

impl CategoryVocabulary {
    pub fn levels(&self) -> &[Vec<String>] {
        &self.levels
    }

    pub fn level_offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn dim(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// Column of `category` at `level`, if known.
    pub fn column(&self, level: usize, category: &str) -> Option<usize> {
        let vocab = self.levels.get(level)?;
        vocab
            .binary_search_by(|c| c.as_str().cmp(category))
            .ok()
            .map(|i| self.offsets[level] + i)
    }
}

/// Sorted distinct categories per taxonomy level, concatenated level by level.
pub fn build_vocabulary(records: &[PoiRecord], levels: usize) -> Result<CategoryVocabulary> {
    if levels == 0 {
        return Err(Error::InvalidInput("vocabulary needs at least one level".into()));
    }
    if records.is_empty() {
        return Err(Error::InvalidInput("vocabulary needs at least one record".into()));
    }
    let mut sets = vec![BTreeSet::new(); levels];
    for r in records {
        for (l, c) in r.category_path.iter().take(levels).enumerate() {
            sets[l].insert(c.as_str());
        }
    }
    let levels: Vec<Vec<String>> = sets
        .into_iter()
        .map(|s| s.into_iter().map(str::to_owned).collect())
        .collect();
    let mut offsets = Vec::with_capacity(levels.len());
    let mut acc = 0;
    for l in &levels {
        offsets.push(acc);
        acc += l.len();
    }
    Ok(CategoryVocabulary { levels, offsets })
}

/// One-hot encodes each record's category path, one block per level.
///
/// Levels deeper than the vocabulary are ignored; absent levels stay zero.
pub fn encode_features(records: &[PoiRecord], vocab: &CategoryVocabulary) -> Result<FeatureMatrix> {
    let d = vocab.dim();
    let mut m = FeatureMatrix::zeros(records.len(), d);
    let values = m.values_mut();
    for (i, r) in records.iter().enumerate() {
        for (l, c) in r.category_path.iter().take(vocab.levels.len()).enumerate() {
            let col = vocab.column(l, c).ok_or_else(|| Error::UnknownCategory {
                id: r.id.clone(),
                category: c.clone(),
                level: l,
            })?;
            values[i * d + col] = 1.0;
        }
    }
    Ok(m)
}

/// Column-wise concatenation `[base | aux]`.
pub fn concat_aux_features(base: &FeatureMatrix, aux: &FeatureMatrix) -> Result<FeatureMatrix> {
    if base.n() != aux.n() {
        return Err(Error::DimensionMismatch(format!(
            "base has {} rows, aux has {}",
            base.n(),
            aux.n()
        )));
    }
    let d = base.d() + aux.d();
    let mut values = Vec::with_capacity(base.n() * d);
    for (b, a) in base.rows().zip(aux.rows()) {
        values.extend_from_slice(b);
        values.extend_from_slice(a);
    }
    FeatureMatrix::new(base.n(), d, values)
}

/// Reads auxiliary per-node features from a CSV with an `id` column followed by
/// numeric columns, aligned to `records`.
pub fn load_aux_features(path: &Path, records: &[PoiRecord]) -> Result<FeatureMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    let id_col = headers
        .iter()
        .position(|h| h.trim() == "id")
        .ok_or_else(|| parse_err(path, 1, "id", "missing column"))?;
    let value_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != id_col)
        .map(|(i, h)| (i, h.to_owned()))
        .collect();
    let mut by_id: HashMap<String, Vec<f64>> = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let id = row.get(id_col).unwrap_or("").trim().to_owned();
        let vals = value_cols
            .iter()
            .map(|(i, h)| {
                let s = row.get(*i).unwrap_or("").trim();
                s.parse::<f64>()
                    .map_err(|e| parse_err(path, line, h, format!("{e}: `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        by_id.insert(id, vals);
    }
    let d = value_cols.len();
    let mut values = Vec::with_capacity(records.len() * d);
    for r in records {
        let row = by_id
            .get(&r.id)
            .ok_or_else(|| Error::InvalidInput(format!("{}: no auxiliary features for `{}`", path.display(), r.id)))?;
        values.extend_from_slice(row);
    }
    FeatureMatrix::new(records.len(), d, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranularityLabeling {
    pub granularity_name: String,
    pub classes: Vec<String>,
    pub assignment: Vec<usize>,
}

impl GranularityLabeling {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Node indices of each class, in node order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.classes.len()];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.members().iter().map(Vec::len).collect()
    }
}

pub fn labeling_for(records: &[PoiRecord], granularity: &str) -> Result<GranularityLabeling> {
    let values = records
        .iter()
        .map(|r| {
            r.admin
                .get(granularity)
                .filter(|v| !v.is_empty())
                .map(String::as_str)
                .ok_or_else(|| Error::MissingAdmin {
                    id: r.id.clone(),
                    granularity: granularity.to_owned(),
                })
        })
        .collect::<Result<Vec<&str>>>()?;
    let classes: Vec<String> = values
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_owned)
        .collect();
    let assignment = values
        .iter()
        .map(|v| classes.binary_search_by(|c| c.as_str().cmp(v)).expect("class present"))
        .collect();
    Ok(GranularityLabeling {
        granularity_name: granularity.to_owned(),
        classes,
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: &str, path: &[&str]) -> PoiRecord {
        PoiRecord {
            id: id.into(),
            name: id.into(),
            location: GeoPoint::new(0.0, 0.0).unwrap(),
            category_path: path.iter().map(|s| s.to_string()).collect(),
            admin: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }

    fn with_admin(mut r: PoiRecord, k: &str, v: &str) -> PoiRecord {
        r.admin.insert(k.into(), v.into());
        r
    }

    #[test]
    fn vocabulary_dimension_counts_distinct_strings() {
        let rs = vec![
            rec("1", &["A", "x"]),
            rec("2", &["B", "y"]),
            rec("3", &["A", "z"]),
            rec("4", &["B"]),
        ];
        let v = build_vocabulary(&rs, 2).unwrap();
        assert_eq!(v.dim(), 5);
        assert_eq!(v.level_offsets(), &[0, 2]);

        let single = build_vocabulary(&[rec("1", &["A"])], 1).unwrap();
        assert_eq!(single.dim(), 1);
        let m = encode_features(&[rec("1", &["A"])], &single).unwrap();
        assert_eq!(m.values(), &[1.0]);

        let three = build_vocabulary(&rs, 3).unwrap();
        assert_eq!(three.dim(), 5);
        assert!(three.levels()[2].is_empty());
    }

    #[test]
    fn one_hot_rows() {
        let rs = vec![rec("1", &["A", "x"]), rec("2", &["B", "y"]), rec("3", &["A", "z"])];
        let v = build_vocabulary(&rs, 2).unwrap();
        let m = encode_features(&[rec("a", &["A", "y"]), rec("b", &["B"]), rec("c", &["A", "y"])], &v).unwrap();
        assert_eq!(m.row(0), &[1.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(m.row(1), &[0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.row(0), m.row(2));
    }

    #[test]
    fn unknown_category_names_record() {
        let v = build_vocabulary(&[rec("1", &["A"])], 1).unwrap();
        match encode_features(&[rec("p9", &["Q"])], &v) {
            Err(Error::UnknownCategory { id, category, .. }) => {
                assert_eq!(id, "p9");
                assert_eq!(category, "Q");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn concat_examples() {
        let base = FeatureMatrix::zeros(2, 3);
        let aux = FeatureMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let m = concat_aux_features(&base, &aux).unwrap();
        assert_eq!(m.row(0), &[0.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(concat_aux_features(&base, &FeatureMatrix::zeros(2, 0)).unwrap(), base);
        assert!(concat_aux_features(&base, &FeatureMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn labeling_examples() {
        let rs = vec![
            with_admin(rec("1", &["A"]), "state", "GA"),
            with_admin(rec("2", &["A"]), "state", "CA"),
            with_admin(rec("3", &["A"]), "state", "GA"),
        ];
        let l = labeling_for(&rs, "state").unwrap();
        assert_eq!(l.classes, vec!["CA", "GA"]);
        assert_eq!(l.assignment, vec![1, 0, 1]);
        assert_eq!(l.class_sizes().iter().sum::<usize>(), 3);

        let same: Vec<_> = (0..4)
            .map(|i| with_admin(rec(&i.to_string(), &["A"]), "zip", "30322"))
            .collect();
        let l = labeling_for(&same, "zip").unwrap();
        assert_eq!(l.num_classes(), 1);
        assert!(l.assignment.iter().all(|&a| a == 0));

        assert!(matches!(
            labeling_for(&rs, "city"),
            Err(Error::MissingAdmin { ref id, .. }) if id == "1"
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = into_dataset(vec![rec("p1", &["A"]), rec("p0", &["A"]), rec("p1", &["B"])]);
        assert!(matches!(err, Err(Error::DuplicateId(ref id)) if id == "p1"));
    }

    #[test]
    fn category_splitting() {
        assert_eq!(
            split_category("Dining and Drinking > Pizzeria"),
            vec!["Dining and Drinking", "Pizzeria"]
        );
        assert_eq!(split_category("Professional Services >  Hair Salon").len(), 2);
    }

    fn taxonomy() -> impl Strategy<Value = Vec<Vec<String>>> {
        prop::collection::vec(
            prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 1..=3)
                .prop_map(|v| v.into_iter().map(String::from).collect()),
            1..30,
        )
    }

    proptest! {
        #[test]
        fn encoded_rows_sum_to_populated_levels(paths in taxonomy(), levels in 1usize..=3) {
            let rs: Vec<PoiRecord> = paths
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let p: Vec<&str> = p.iter().map(String::as_str).collect();
                    rec(&i.to_string(), &p)
                })
                .collect();
            let v = build_vocabulary(&rs, levels).unwrap();
            let m = encode_features(&rs, &v).unwrap();
            for (r, row) in rs.iter().zip(m.rows()) {
                let s: f64 = row.iter().sum();
                prop_assert_eq!(s, r.category_path.len().min(levels) as f64);
            }
        }
    }
}
