use std::path::Path;

use serde_json::{json, Value};
use softreg::data_io::{load_csv, load_idx_dataset, PixelScale};
use softreg::Dataset;

use crate::args::{DataArgs, TestDataArgs};
use crate::CliError;

const IDX_DEFAULT_CLASSES: usize = 10;

/// Loads the training set described by `args`, with a JSON digest of what
/// was read.
pub fn load(args: &DataArgs) -> Result<(Dataset, Value), CliError> {
    match (&args.data, &args.labels, &args.csv) {
        (Some(images), Some(labels), None) => load_idx(args, images, labels, args.limit),
        (None, None, Some(csv)) => load_csv_args(args, csv, args.limit),
        (None, None, None) => Err(CliError::Usage(
            "no data: give --data and --labels, or --csv".into(),
        )),
        _ => Err(CliError::Usage(
            "give either --data with --labels or --csv, not both".into(),
        )),
    }
}

/// Loads the held-out set, reusing the layout flags of the training set.
pub fn load_test(args: &DataArgs, test: &TestDataArgs) -> Result<Option<(Dataset, Value)>, CliError> {
    match (&test.test_data, &test.test_labels, &test.test_csv) {
        (Some(images), Some(labels), None) => load_idx(args, images, labels, test.test_limit).map(Some),
        (None, None, Some(csv)) => load_csv_args(args, csv, test.test_limit).map(Some),
        (None, None, None) => Ok(None),
        _ => Err(CliError::Usage(
            "give either --test-data with --test-labels or --test-csv".into(),
        )),
    }
}

pub fn has_data(args: &DataArgs) -> bool {
    args.data.is_some() || args.csv.is_some()
}

fn load_idx(args: &DataArgs, images: &Path, labels: &Path, limit: Option<usize>) -> Result<(Dataset, Value), CliError> {
    let scale = if args.raw_pixels {
        PixelScale::Raw
    } else {
        PixelScale::Unit
    };
    let classes = args.classes.unwrap_or(IDX_DEFAULT_CLASSES);
    let data = load_idx_dataset(images, labels, classes, scale)?;
    finish(args, data, limit, json!({
        "format": "idx",
        "images": images.display().to_string(),
        "labels": labels.display().to_string(),
    }))
}

fn load_csv_args(args: &DataArgs, path: &Path, limit: Option<usize>) -> Result<(Dataset, Value), CliError> {
    let classes = args
        .classes
        .ok_or_else(|| CliError::Usage("--classes is required with CSV input".into()))?;
    let data = load_csv(path, args.label_column, classes, args.header)?;
    finish(args, data, limit, json!({
        "format": "csv",
        "path": path.display().to_string(),
        "label_column": args.label_column,
    }))
}

fn finish(args: &DataArgs, data: Dataset, limit: Option<usize>, mut digest: Value) -> Result<(Dataset, Value), CliError> {
    let data = match limit {
        Some(n) => data.truncated(n)?,
        None => data,
    };
    let data = if args.bias { data.with_bias() } else { data };
    let obj = digest.as_object_mut().expect("digest is an object");
    obj.insert("classes".into(), json!(data.classes()));
    obj.insert("features".into(), json!(data.features()));
    obj.insert("samples".into(), json!(data.samples()));
    obj.insert("bias".into(), json!(args.bias));
    Ok((data, digest))
}
