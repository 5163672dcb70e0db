//! Text renderings of CV reports and training logs.

use std::fmt::Write;

use mermix_core::cv::CvReport;
use mermix_core::train::StepRecord;
use mermix_core::ConfusionMatrix;

pub fn confusion_table(cm: &ConfusionMatrix, class_names: &[String]) -> String {
    let width = class_names.iter().map(String::len).max().unwrap_or(0).max(6);
    let mut out = format!("{:width$}", "true\\pred");
    for name in class_names {
        let _ = write!(out, " {name:>width$}");
    }
    out.push('\n');
    for (t, name) in class_names.iter().enumerate() {
        let _ = write!(out, "{name:width$}");
        for p in 0..class_names.len() {
            let _ = write!(out, " {:>width$}", cm.get(t, p));
        }
        out.push('\n');
    }
    out
}

/// Human-readable per-fold table, means, and the pooled confusion matrix.
pub fn cv_table(report: &CvReport, class_names: &[String]) -> String {
    let mut out = String::from("fold  train   test      WA      UA\n");
    for f in &report.folds {
        let _ = writeln!(
            out,
            "{:>4} {:>6} {:>6}  {:.4}  {:.4}",
            f.fold, f.train_size, f.test_size, f.wa, f.ua
        );
    }
    let _ = writeln!(out, "mean               {:.4}  {:.4}", report.mean_wa, report.mean_ua);
    let mut pooled = ConfusionMatrix::new(class_names.len());
    for f in &report.folds {
        pooled.merge(&f.confusion).expect("folds share the class count");
    }
    out.push_str("\nconfusion over all folds\n");
    out.push_str(&confusion_table(&pooled, class_names));
    out
}

/// One tab-separated line per fold plus a `mean` line. Confusion entries are
/// flattened row-major into columns `c<true>_<pred>`.
pub fn cv_records(report: &CvReport) -> String {
    let e = report.folds.first().map_or(0, |f| f.confusion.classes());
    let mut out = String::from("fold\twa\tua\ttrain_size\ttest_size");
    for t in 0..e {
        for p in 0..e {
            let _ = write!(out, "\tc{t}_{p}");
        }
    }
    out.push('\n');
    for f in &report.folds {
        let _ = write!(out, "{}\t{}\t{}\t{}\t{}", f.fold, f.wa, f.ua, f.train_size, f.test_size);
        for c in f.confusion.counts() {
            let _ = write!(out, "\t{c}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "mean\t{}\t{}", report.mean_wa, report.mean_ua);
    out
}

pub const LOG_HEADER: &str = "epoch\tstep\tl_main\tl_aux1\tl_aux2\ttrain_acc\n";

pub fn log_line(r: &StepRecord) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\n",
        r.epoch,
        r.step,
        r.losses.main,
        r.losses.aux1,
        r.losses.aux2,
        r.losses.accuracy()
    )
}

pub fn training_log(steps: &[StepRecord]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.extend(steps.iter().map(log_line));
    out
}
