//! CSV ingestion: strict header checking against the schema, typed row
//! parsing with line numbers in every error, and bag assembly for
//! bag-labeled data.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use csv::StringRecord;
use sgtree::{BagExample, Instance};

use crate::schema::Schema;

/// Where each schema column sits in the CSV header.
struct ColumnMap {
    features: Vec<usize>,
    target: usize,
    bag: Option<usize>,
}

fn map_columns(header: &StringRecord, schema: &Schema) -> Result<ColumnMap> {
    let mut positions: HashMap<&str, usize> = HashMap::new();
    for (i, name) in header.iter().enumerate() {
        if positions.insert(name.trim(), i).is_some() {
            bail!("CSV header repeats column `{}`", name.trim());
        }
    }
    let mut expected: Vec<&str> = schema.feature_names().collect();
    expected.push(schema.target().name());
    if let Some(bag) = schema.bag_id() {
        expected.push(bag);
    }
    let missing: Vec<&str> =
        expected.iter().copied().filter(|c| !positions.contains_key(c)).collect();
    if !missing.is_empty() {
        bail!("CSV header is missing schema columns: {}", missing.join(", "));
    }
    let extra: Vec<&str> = positions
        .keys()
        .copied()
        .filter(|c| !expected.contains(c))
        .collect();
    if !extra.is_empty() {
        let mut extra = extra;
        extra.sort_unstable();
        bail!("CSV header has columns the schema does not declare: {}", extra.join(", "));
    }
    Ok(ColumnMap {
        features: schema.feature_names().map(|n| positions[n]).collect(),
        target: positions[schema.target().name()],
        bag: schema.bag_id().map(|n| positions[n]),
    })
}

fn cell<'r>(rec: &'r StringRecord, col: usize, name: &str, line: u64) -> Result<&'r str> {
    let raw = rec.get(col).unwrap_or("");
    if raw.trim().is_empty() {
        bail!("line {line}: empty value in column `{name}`");
    }
    Ok(raw)
}

fn parse_instance(
    schema: &Schema,
    map: &ColumnMap,
    rec: &StringRecord,
    line: u64,
) -> Result<Instance> {
    let mut out = Vec::with_capacity(map.features.len());
    for (i, (&col, name)) in map.features.iter().zip(schema.feature_names()).enumerate() {
        let raw = cell(rec, col, name, line)?;
        let value =
            schema.parse_feature(i, raw).with_context(|| format!("line {line}"))?;
        out.push(value);
    }
    Ok(out)
}

fn records(
    data: &Path,
    schema: &Schema,
    mut visit: impl FnMut(u64, Instance, &str, Option<&str>) -> Result<()>,
) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(data)
        .with_context(|| format!("opening {}", data.display()))?;
    let map = map_columns(reader.headers().context("reading CSV header")?, schema)?;
    let target_name = schema.target().name().to_string();
    let bag_name = schema.bag_id().map(str::to_string);
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("reading data row {}", i + 1))?;
        // Values never contain embedded newlines, so the file line is the
        // record index plus the header row. (The reader's own position is
        // off by one on CRLF files.)
        let line = i as u64 + 2;
        let x = parse_instance(schema, &map, &rec, line)?;
        let target = cell(&rec, map.target, &target_name, line)?.to_string();
        let bag = match (map.bag, &bag_name) {
            (Some(col), Some(name)) => Some(cell(&rec, col, name, line)?.to_string()),
            _ => None,
        };
        visit(line, x, &target, bag.as_deref())?;
    }
    Ok(())
}

/// Loads a class-labeled CSV in file order.
pub fn load_classification(data: &Path, schema: &Schema) -> Result<Vec<(Instance, u32)>> {
    let mut out = Vec::new();
    records(data, schema, |line, x, target, _| {
        let label = schema.parse_class(target).with_context(|| format!("line {line}"))?;
        out.push((x, label));
        Ok(())
    })?;
    Ok(out)
}

/// Loads a numerically-labeled CSV in file order.
pub fn load_regression(data: &Path, schema: &Schema) -> Result<Vec<(Instance, f64)>> {
    let mut out = Vec::new();
    records(data, schema, |line, x, target, _| {
        let y = schema.parse_numeric_target(target).with_context(|| format!("line {line}"))?;
        out.push((x, y));
        Ok(())
    })?;
    Ok(out)
}

/// Loads a bag-labeled CSV, grouping rows by bag id in first-appearance
/// order. Every row of a bag must carry the same label.
pub fn load_bags(data: &Path, schema: &Schema) -> Result<Vec<BagExample>> {
    let mut order: Vec<(String, bool, Vec<Instance>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    records(data, schema, |line, x, target, bag| {
        let label = schema.parse_bag_label(target).with_context(|| format!("line {line}"))?;
        let bag = bag.expect("bag column is mapped for bag_label targets");
        match index.get(bag) {
            Some(&i) => {
                let entry = &mut order[i];
                if entry.1 != label {
                    bail!("line {line}: bag `{bag}` changes label mid-file");
                }
                entry.2.push(x);
            }
            None => {
                index.insert(bag.to_string(), order.len());
                order.push((bag.to_string(), label, vec![x]));
            }
        }
        Ok(())
    })?;
    order
        .into_iter()
        .map(|(_, label, instances)| BagExample::new(instances, label).map_err(Into::into))
        .collect()
}
