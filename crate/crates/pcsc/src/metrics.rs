//! CSV emission and parsing for sweep metrics and training history.
//!
//! Metrics schema (version-stable): `snr_db,chamfer_mean,chamfer_sum,accuracy,n_samples,fingerprint`.
//! History schema: `epoch,loss_total,loss_rec_sum,loss_rec_mean,loss_cls,train_acc`.
//! Floats are written with shortest round-trip formatting; the bypass
//! condition is encoded as `snr_db = inf`.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use pcsc_core::eval::MetricsRecord;
use pcsc_core::training::TrainHistory;

pub const METRICS_HEADER: &str = "snr_db,chamfer_mean,chamfer_sum,accuracy,n_samples,fingerprint";
pub const HISTORY_HEADER: &str = "epoch,loss_total,loss_rec_sum,loss_rec_mean,loss_cls,train_acc";

pub fn metrics_to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.snr_db, r.chamfer_mean, r.chamfer_sum, r.accuracy, r.n_samples, r.fingerprint
        ));
    }
    out
}

pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    fs::write(path, metrics_to_csv(records))
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        Some(other) => bail!("{}: unexpected header '{other}'", path.display()),
        None => bail!("{}: empty metrics file", path.display()),
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            bail!("{}:{}: expected 6 fields", path.display(), i + 2);
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse()
                .with_context(|| format!("{}:{}: bad {what} '{s}'", path.display(), i + 2))
        };
        records.push(MetricsRecord {
            snr_db: parse(fields[0], "snr_db")?,
            chamfer_mean: parse(fields[1], "chamfer_mean")?,
            chamfer_sum: parse(fields[2], "chamfer_sum")?,
            accuracy: parse(fields[3], "accuracy")?,
            n_samples: fields[4]
                .parse()
                .with_context(|| format!("{}:{}: bad n_samples", path.display(), i + 2))?,
            fingerprint: fields[5].to_string(),
        });
    }
    Ok(records)
}

pub fn write_history_csv(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for e in &history.epochs {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.epoch, e.loss_total, e.loss_rec_sum, e.loss_rec_mean, e.loss_cls, e.train_acc
        ));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let rx = ranks(x);
    let ry = ranks(y);
    pearson(&rx, &ry)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).expect("finite values"));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[order[k]] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}
