//! External CSV datasets, the synthetic blob benchmark, and sharding across
//! federated clients.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label, Sample, SeededRng, Stream};
use crate::error::{Error, Result};

/// Column layout of a labeled CSV export, stored as a JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub feature_columns: Vec<String>,
    pub label_column: String,
    pub anomalous_value: String,
    pub normal_value: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Optional sample id column; row numbers are used otherwise.
    #[serde(default)]
    pub id_column: Option<String>,
    /// Optional cluster / client column.
    #[serde(default)]
    pub group_column: Option<String>,
}

fn default_delimiter() -> char {
    ','
}

impl CsvSchema {
    pub fn new(features: &[&str], label: &str) -> Self {
        Self {
            feature_columns: features.iter().map(|s| s.to_string()).collect(),
            label_column: label.to_string(),
            anomalous_value: "1".into(),
            normal_value: "0".into(),
            delimiter: ',',
            id_column: None,
            group_column: None,
        }
    }

    /// Schema that `export_csv` writes for `data`: id, features, label, and a
    /// group column when any sample carries one.
    pub fn for_dataset(data: &Dataset) -> Self {
        Self {
            feature_columns: data.feature_names.clone(),
            label_column: "label".into(),
            anomalous_value: "1".into(),
            normal_value: "0".into(),
            delimiter: ',',
            id_column: Some("id".into()),
            group_column: data.samples.iter().any(|s| s.group.is_some()).then(|| "group".into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_columns.is_empty() {
            return Err(Error::SchemaMismatch("no feature columns".into()));
        }
        let mut named: Vec<&str> = self.feature_columns.iter().map(String::as_str).collect();
        named.push(&self.label_column);
        named.extend(self.id_column.as_deref());
        named.extend(self.group_column.as_deref());
        let mut sorted = named.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::SchemaMismatch(format!("column `{}` is used twice", w[0])));
        }
        if self.anomalous_value == self.normal_value {
            return Err(Error::SchemaMismatch("anomalous and normal label values coincide".into()));
        }
        if !self.delimiter.is_ascii() || self.delimiter == '"' || self.delimiter == '.' {
            return Err(Error::SchemaMismatch(format!("unusable delimiter {:?}", self.delimiter)));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| not_found_or(e, path))?;
        let schema: Self = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

fn not_found_or(e: std::io::Error, path: &Path) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::FileNotFound(path.to_path_buf())
    } else {
        Error::Io(e)
    }
}

/// A row rejected during loading; `line` is 1-based and counts the header.
#[derive(Debug, Clone, PartialEq)]
pub struct MalformedRow {
    pub line: u64,
    pub reason: String,
}

/// Strict decimal: optional sign, digits with an optional point, optional
/// exponent. Thousands separators, decimal commas, `inf` and `nan` fail.
pub fn parse_decimal(s: &str) -> Option<f64> {
    let b = s.as_bytes();
    let mut i = 0;
    if matches!(b.first(), Some(b'+' | b'-')) {
        i += 1;
    }
    let int_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits = i - int_start;
    if i < b.len() && b[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        digits += i - frac_start;
    }
    if digits == 0 {
        return None;
    }
    if i < b.len() && matches!(b[i], b'e' | b'E') {
        i += 1;
        if i < b.len() && matches!(b[i], b'+' | b'-') {
            i += 1;
        }
        let exp_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == exp_start {
            return None;
        }
    }
    if i != b.len() {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Loads `path` under `schema`, aborting with `TooManyMalformedRows` when
/// more than 1% of the data rows fail to parse.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    load_csv_report(path, schema).map(|(d, _)| d)
}

/// Like [`load_csv`] but also returns the tolerated malformed rows.
pub fn load_csv_report(path: &Path, schema: &CsvSchema) -> Result<(Dataset, Vec<MalformedRow>)> {
    schema.validate()?;
    if !path.is_file() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::SchemaMismatch(format!("column `{name}` not found in {}", path.display())))
    };
    let features = schema
        .feature_columns
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;
    let label = column(&schema.label_column)?;
    let id = schema.id_column.as_deref().map(column).transpose()?;
    let group = schema.group_column.as_deref().map(column).transpose()?;

    let mut samples = Vec::new();
    let mut malformed = Vec::new();
    let mut total = 0usize;
    for (row, record) in reader.records().enumerate() {
        total += 1;
        let line = row as u64 + 2;
        let parsed = record.map_err(|e| e.to_string()).and_then(|r| {
            if r.len() != headers.len() {
                return Err(format!("expected {} fields, found {}", headers.len(), r.len()));
            }
            let values = features
                .iter()
                .map(|&j| parse_decimal(&r[j]).ok_or_else(|| format!("`{}` is not a decimal number", &r[j])))
                .collect::<Result<Vec<f64>, String>>()?;
            let label = match &r[label] {
                v if v == schema.anomalous_value => Label::Anomalous,
                v if v == schema.normal_value => Label::Normal,
                v => return Err(format!("unknown label `{v}`")),
            };
            let id = match id {
                Some(j) => r[j].parse::<u64>().map_err(|_| format!("bad id `{}`", &r[j]))?,
                None => row as u64,
            };
            let group = match group {
                Some(j) if !r[j].is_empty() => {
                    Some(r[j].parse::<u32>().map_err(|_| format!("bad group `{}`", &r[j]))?)
                }
                _ => None,
            };
            Ok(Sample {
                id,
                features: values,
                label: Some(label),
                group,
            })
        });
        match parsed {
            Ok(s) => samples.push(s),
            Err(reason) => malformed.push(MalformedRow { line, reason }),
        }
    }
    if malformed.len() * 100 > total {
        let first = &malformed[0];
        return Err(Error::TooManyMalformedRows {
            malformed: malformed.len(),
            total,
            first: format!("line {}: {}", first.line, first.reason),
        });
    }
    let name = path.file_stem().map_or_else(|| "csv".into(), |s| s.to_string_lossy().into_owned());
    let data = Dataset::new(name, samples).with_feature_names(schema.feature_columns.clone());
    Ok((data, malformed))
}

/// Loads several files concurrently; results keep the input order.
pub fn load_many(inputs: &[(PathBuf, CsvSchema)]) -> Vec<Result<Dataset>> {
    inputs.par_iter().map(|(p, s)| load_csv(p, s)).collect()
}

/// Writes `data` under `CsvSchema::for_dataset(data)`. Every sample must be labeled.
pub fn export_csv(data: &Dataset, path: &Path) -> Result<CsvSchema> {
    let schema = CsvSchema::for_dataset(data);
    let flags = data.anomaly_flags()?;
    let mut w = csv::WriterBuilder::new()
        .delimiter(schema.delimiter as u8)
        .from_path(path)?;
    let mut header = vec!["id".to_string()];
    header.extend(schema.feature_columns.iter().cloned());
    header.push(schema.label_column.clone());
    header.extend(schema.group_column.clone());
    w.write_record(&header)?;
    for (s, &anomalous) in data.samples.iter().zip(&flags) {
        let mut rec = vec![s.id.to_string()];
        rec.extend(s.features.iter().map(f64::to_string));
        rec.push(if anomalous { &schema.anomalous_value } else { &schema.normal_value }.clone());
        if schema.group_column.is_some() {
            rec.push(s.group.map(|g| g.to_string()).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(schema)
}

/// Gaussian blob plus planted outliers.
///
/// `round(contamination * n)` outliers sit at radius `separation + e` along a
/// uniform random direction, `e` a standard normal clipped to [-3, 3]; the
/// rest are standard normal inliers. Outlier positions among the ids are
/// shuffled.
pub fn synth_benchmark(n: usize, d: usize, contamination: f64, separation: f64, seed: u64) -> Result<Dataset> {
    if !(contamination > 0.0 && contamination < 0.5) {
        return Err(Error::InvalidParameter(format!("contamination {contamination} outside (0, 0.5)")));
    }
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter("n and d must be positive".into()));
    }
    let mut rng = SeededRng::new(seed, Stream::Synth);
    let outliers = (contamination * n as f64).round() as usize;
    let mut flags: Vec<bool> = (0..n).map(|i| i < outliers).collect();
    flags.shuffle(&mut rng);
    let samples = flags
        .iter()
        .enumerate()
        .map(|(i, &anomalous)| {
            let mut x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            if anomalous {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let jitter: f64 = rng.sample::<f64, _>(StandardNormal).clamp(-3.0, 3.0);
                let r = separation + jitter;
                if norm > 0.0 {
                    x.iter_mut().for_each(|v| *v *= r / norm);
                } else {
                    x[0] = r;
                }
            }
            Sample::labeled(i as u64, x, Label::from_flag(anomalous))
        })
        .collect();
    let names = (0..d).map(|j| format!("x{j}")).collect();
    Ok(Dataset::new(format!("synth-{seed}"), samples).with_feature_names(names))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShardStrategy {
    /// Seeded shuffle, then round-robin.
    IidUniform,
    /// One shard per distinct `group`, groups folded modulo K in sorted order.
    ByClusterColumn,
    /// Seeded shuffle, then contiguous runs with log-normal relative sizes.
    SizeWeighted,
}

impl std::str::FromStr for ShardStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid_uniform" => Ok(Self::IidUniform),
            "by_cluster_column" => Ok(Self::ByClusterColumn),
            "size_weighted" => Ok(Self::SizeWeighted),
            _ => Err(Error::InvalidParameter(format!("unknown shard strategy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardPlan {
    pub strategy: ShardStrategy,
    pub k: usize,
    pub seed: u64,
}

/// Splits `data` into `plan.k` disjoint, covering, non-empty shards. Each
/// shard keeps the original sample order.
pub fn shard(data: &Dataset, plan: &ShardPlan) -> Result<Vec<Dataset>> {
    let n = data.len();
    if plan.k == 0 {
        return Err(Error::InvalidParameter("K must be positive".into()));
    }
    if plan.k > n {
        return Err(Error::KTooLarge { k: plan.k, n });
    }
    let mut rng = SeededRng::new(plan.seed, Stream::Shard);
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); plan.k];
    match plan.strategy {
        ShardStrategy::IidUniform => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            for (pos, i) in order.into_iter().enumerate() {
                buckets[pos % plan.k].push(i);
            }
        }
        ShardStrategy::ByClusterColumn => {
            let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for (i, s) in data.samples.iter().enumerate() {
                let g = s.group.ok_or_else(|| Error::InvalidParameter(format!("sample {i} has no group")))?;
                groups.entry(g).or_default().push(i);
            }
            if groups.len() < plan.k {
                return Err(Error::KTooLarge { k: plan.k, n: groups.len() });
            }
            for (rank, members) in groups.into_values().enumerate() {
                buckets[rank % plan.k].extend(members);
            }
        }
        ShardStrategy::SizeWeighted => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let dist = LogNormal::new(0.0, 1.0).expect("valid log-normal");
            let weights: Vec<f64> = (0..plan.k).map(|_| dist.sample(&mut rng)).collect();
            let sizes = apportion(&weights, n);
            let mut start = 0;
            for (b, size) in buckets.iter_mut().zip(sizes) {
                b.extend_from_slice(&order[start..start + size]);
                start += size;
            }
        }
    }
    Ok(buckets
        .into_iter()
        .enumerate()
        .map(|(k, mut idx)| {
            idx.sort_unstable();
            data.subset(format!("{}-shard{k}", data.name), &idx)
        })
        .collect())
}

/// Largest-remainder split of `n` by `weights`, every part at least 1.
fn apportion(weights: &[f64], n: usize) -> Vec<usize> {
    let k = weights.len();
    let spare = n - k;
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / total * spare as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = spare - sizes.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..k).collect();
    by_remainder.sort_by(|&a, &b| {
        (quotas[b] - quotas[b].floor())
            .total_cmp(&(quotas[a] - quotas[a].floor()))
            .then(a.cmp(&b))
    });
    for &i in &by_remainder {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    sizes.iter().map(|s| s + 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn three_well_formed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "a,b,y\n1,2,0\n3.5,-4e2,1\n0,0,0\n");
        let d = load_csv(&p, &CsvSchema::new(&["a", "b"], "y")).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.samples[1].features, vec![3.5, -400.0]);
        assert_eq!(d.anomaly_flags().unwrap(), vec![false, true, false]);
        assert_eq!(d.ids(), vec![0, 1, 2]);
    }

    #[test]
    fn missing_label_column_is_schema_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "a,b\n1,2\n");
        assert!(matches!(load_csv(&p, &CsvSchema::new(&["a", "b"], "y")), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn missing_file_is_file_not_found() {
        let r = load_csv(Path::new("/nonexistent/x.csv"), &CsvSchema::new(&["a"], "y"));
        assert!(matches!(r, Err(Error::FileNotFound(_))));
    }

    #[test]
    fn label_among_features_rejected() {
        assert!(matches!(CsvSchema::new(&["a", "y"], "y").validate(), Err(Error::SchemaMismatch(_))));
    }

    fn rows_with_bad(total: usize, bad: usize) -> String {
        let mut s = String::from("a,y\n");
        for i in 0..total {
            if i < bad {
                s.push_str("1,5,0\n");
            } else {
                s.push_str(&format!("{i},0\n"));
            }
        }
        s
    }

    #[test]
    fn two_malformed_of_fifty_aborts() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", &rows_with_bad(50, 2));
        match load_csv(&p, &CsvSchema::new(&["a"], "y")) {
            Err(Error::TooManyMalformedRows { malformed, total, .. }) => assert_eq!((malformed, total), (2, 50)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn one_percent_is_tolerated_and_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", &rows_with_bad(100, 1));
        let (d, bad) = load_csv_report(&p, &CsvSchema::new(&["a"], "y")).unwrap();
        assert_eq!(d.len(), 99);
        assert_eq!(bad, vec![MalformedRow { line: 2, reason: "expected 2 fields, found 3".into() }]);
    }

    #[test]
    fn strict_decimal() {
        for ok in ["1", "-1.5", "+.5", "5.", "1e3", "2.5E-7", "0"] {
            assert!(parse_decimal(ok).is_some(), "{ok}");
        }
        for bad in ["", "1,5", "1.000,5", "inf", "NaN", "1e", ".", "-", "0x10", "1 000", "1e999"] {
            assert!(parse_decimal(bad).is_none(), "{bad}");
        }
    }

    #[test]
    fn semicolon_delimiter_and_custom_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "s.csv", "t;P1;Attack\n7;1.25;Attack\n8;1.5;Normal\n");
        let schema = CsvSchema {
            delimiter: ';',
            anomalous_value: "Attack".into(),
            normal_value: "Normal".into(),
            id_column: Some("t".into()),
            ..CsvSchema::new(&["P1"], "Attack")
        };
        let d = load_csv(&p, &schema).unwrap();
        assert_eq!(d.ids(), vec![7, 8]);
        assert_eq!(d.anomaly_flags().unwrap(), vec![true, false]);
    }

    #[test]
    fn export_load_round_trip() {
        let mut data = synth_benchmark(200, 4, 0.1, 6.0, 3).unwrap();
        data.samples[5].group = Some(2);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("synth-3.csv");
        let schema = export_csv(&data, &p).unwrap();
        let back = load_csv(&p, &schema).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn schema_sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        let s = CsvSchema::for_dataset(&synth_benchmark(10, 2, 0.2, 5.0, 1).unwrap());
        s.save(&p).unwrap();
        assert_eq!(CsvSchema::load(&p).unwrap(), s);
    }

    #[test]
    fn load_many_keeps_order() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "a.csv", "a,y\n1,0\n");
        let b = write(dir.path(), "b.csv", "a,y\n1,0\n2,1\n");
        let s = CsvSchema::new(&["a"], "y");
        let out = load_many(&[(a, s.clone()), (dir.path().join("none.csv"), s.clone()), (b, s)]);
        assert_eq!(out[0].as_ref().unwrap().len(), 1);
        assert!(matches!(out[1], Err(Error::FileNotFound(_))));
        assert_eq!(out[2].as_ref().unwrap().len(), 2);
    }

    #[test]
    fn synth_counts_and_separation() {
        let d = synth_benchmark(1000, 8, 0.1, 10.0, 4).unwrap();
        let flags = d.anomaly_flags().unwrap();
        assert_eq!(flags.iter().filter(|&&f| f).count(), 100);
        for (s, f) in d.samples.iter().zip(&flags) {
            if *f {
                assert!(s.features.iter().map(|v| v * v).sum::<f64>().sqrt() > 6.0);
            }
        }
        assert_eq!(d, synth_benchmark(1000, 8, 0.1, 10.0, 4).unwrap());
        assert_ne!(d, synth_benchmark(1000, 8, 0.1, 10.0, 5).unwrap());
    }

    #[test]
    fn synth_rejects_bad_contamination() {
        assert!(synth_benchmark(10, 2, 0.5, 5.0, 1).is_err());
        assert!(synth_benchmark(10, 2, 0.0, 5.0, 1).is_err());
    }

    fn plan(strategy: ShardStrategy, k: usize) -> ShardPlan {
        ShardPlan { strategy, k, seed: 9 }
    }

    #[test]
    fn round_robin_sizes() {
        let d = synth_benchmark(10, 2, 0.1, 5.0, 1).unwrap();
        let mut sizes: Vec<usize> = shard(&d, &plan(ShardStrategy::IidUniform, 3)).unwrap().iter().map(Dataset::len).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, vec![4, 3, 3]);
    }

    #[test]
    fn one_shard_is_the_dataset() {
        let d = synth_benchmark(50, 3, 0.1, 5.0, 1).unwrap();
        for s in [ShardStrategy::IidUniform, ShardStrategy::SizeWeighted] {
            let out = shard(&d, &plan(s, 1)).unwrap();
            assert_eq!(out[0].samples, d.samples);
        }
    }

    #[test]
    fn k_too_large() {
        let d = synth_benchmark(5, 2, 0.2, 5.0, 1).unwrap();
        assert!(matches!(shard(&d, &plan(ShardStrategy::IidUniform, 6)), Err(Error::KTooLarge { k: 6, n: 5 })));
    }

    #[test]
    fn by_cluster_column_groups() {
        let mut d = synth_benchmark(30, 2, 0.1, 5.0, 1).unwrap();
        d.samples.iter_mut().enumerate().for_each(|(i, s)| s.group = Some((i % 3) as u32 * 10));
        let out = shard(&d, &plan(ShardStrategy::ByClusterColumn, 3)).unwrap();
        for (k, s) in out.iter().enumerate() {
            assert!(s.samples.iter().all(|x| x.group == Some(k as u32 * 10)));
        }
        assert!(matches!(shard(&d, &plan(ShardStrategy::ByClusterColumn, 4)), Err(Error::KTooLarge { .. })));
    }

    #[test]
    fn iid_anomaly_share_near_global() {
        let d = synth_benchmark(5000, 2, 0.05, 5.0, 2).unwrap();
        for k in [2, 5, 10] {
            for s in shard(&d, &plan(ShardStrategy::IidUniform, k)).unwrap() {
                let share = s.anomaly_flags().unwrap().iter().filter(|&&f| f).count() as f64 / s.len() as f64;
                assert!((share / 0.05 - 1.0).abs() <= 0.5, "k={k} share={share}");
            }
        }
    }

    proptest! {
        #[test]
        fn shards_partition(n in 1usize..300, k in 1usize..20, seed in 0u64..1000, strat in 0usize..3) {
            prop_assume!(k <= n);
            let mut d = Dataset::from_rows("p", (0..n).map(|i| vec![i as f64]).collect());
            d.samples.iter_mut().for_each(|s| s.group = Some((s.id % k as u64) as u32));
            let strategy = [ShardStrategy::IidUniform, ShardStrategy::ByClusterColumn, ShardStrategy::SizeWeighted][strat];
            let out = shard(&d, &ShardPlan { strategy, k, seed }).unwrap();
            prop_assert_eq!(out.len(), k);
            let mut seen = BTreeSet::new();
            for s in &out {
                prop_assert!(!s.is_empty());
                for id in s.ids() {
                    prop_assert!(seen.insert(id));
                }
            }
            prop_assert_eq!(seen, d.ids().into_iter().collect::<BTreeSet<_>>());
        }

        #[test]
        fn decimal_round_trip(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(parse_decimal(&v.to_string()), Some(v));
        }
    }
}
