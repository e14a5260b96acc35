//! Accuracy and F1, confusion heatmaps with FP/FN rows, and report files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::signal_io::SeizureType;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    EmptyEval,
    #[error("{truths} truths but {predictions} predictions")]
    LengthMismatch { truths: usize, predictions: usize },
    #[error("label {0} is not one of the report classes")]
    UnknownClass(SeizureType),
    #[error("heatmap CSV: {0}")]
    BadCsv(String),
    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// (TP + TN) / (TP + TN + FP + FN)
    pub fn accuracy(&self) -> Result<f64, EvalError> {
        let total = self.total();
        if total == 0 {
            return Err(EvalError::EmptyEval);
        }
        Ok((self.tp + self.tn) as f64 / total as f64)
    }

    /// TP / (TP + (FP + FN) / 2); `None` when TP + FP + FN = 0.
    pub fn f1(&self) -> Option<f64> {
        let denom = self.tp as f64 + (self.fp + self.fn_) as f64 / 2.0;
        if self.tp + self.fp + self.fn_ == 0 {
            None
        } else {
            Some(self.tp as f64 / denom)
        }
    }
}

/// One-vs-all counts for each class.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionCounts {
    pub classes: Vec<SeizureType>,
    pub per_class: Vec<ClassCounts>,
    pub total: u64,
}

impl ConfusionCounts {
    pub fn from_pairs(classes: &[SeizureType], truths: &[SeizureType], preds: &[SeizureType]) -> Result<Self, EvalError> {
        check_lengths(truths, preds)?;
        let total = truths.len() as u64;
        let per_class = classes
            .iter()
            .map(|&c| {
                let mut k = ClassCounts::default();
                for (&t, &p) in truths.iter().zip(preds) {
                    match (t == c, p == c) {
                        (true, true) => k.tp += 1,
                        (false, true) => k.fp += 1,
                        (true, false) => k.fn_ += 1,
                        (false, false) => k.tn += 1,
                    }
                }
                k
            })
            .collect();
        Ok(Self {
            classes: classes.to_vec(),
            per_class,
            total,
        })
    }

    pub fn get(&self, class: SeizureType) -> Option<&ClassCounts> {
        self.classes.iter().position(|&c| c == class).map(|i| &self.per_class[i])
    }
}

pub fn accuracy(c: &ConfusionCounts, class: SeizureType) -> Result<f64, EvalError> {
    c.get(class).ok_or(EvalError::UnknownClass(class))?.accuracy()
}

pub fn f1(c: &ConfusionCounts, class: SeizureType) -> Result<Option<f64>, EvalError> {
    Ok(c.get(class).ok_or(EvalError::UnknownClass(class))?.f1())
}

fn check_lengths(truths: &[SeizureType], preds: &[SeizureType]) -> Result<(), EvalError> {
    if truths.len() != preds.len() {
        return Err(EvalError::LengthMismatch {
            truths: truths.len(),
            predictions: preds.len(),
        });
    }
    Ok(())
}

/// `grid[t][p]` counts samples of true class t predicted as p. The FP and FN
/// rows hold, per class, predictions wrongly into it and samples wrongly out
/// of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeatmapGrid {
    pub classes: Vec<SeizureType>,
    pub grid: Vec<Vec<u64>>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
}

impl HeatmapGrid {
    pub fn n(&self) -> usize {
        self.classes.len()
    }

    pub fn total(&self) -> u64 {
        self.grid.iter().flatten().sum()
    }

    pub fn diagonal(&self) -> u64 {
        (0..self.n()).map(|i| self.grid[i][i]).sum()
    }

    /// Correct predictions over all samples.
    pub fn micro_accuracy(&self) -> Result<f64, EvalError> {
        match self.total() {
            0 => Err(EvalError::EmptyEval),
            t => Ok(self.diagonal() as f64 / t as f64),
        }
    }

    pub fn counts(&self) -> ConfusionCounts {
        let total = self.total();
        let per_class = (0..self.n())
            .map(|i| {
                let tp = self.grid[i][i];
                let (fp, fn_) = (self.fp[i], self.fn_[i]);
                ClassCounts {
                    tp,
                    fp,
                    fn_,
                    tn: total - tp - fp - fn_,
                }
            })
            .collect();
        ConfusionCounts {
            classes: self.classes.clone(),
            per_class,
            total,
        }
    }

    /// FP/FN rows agree with the grid and row sums are non-negative totals.
    pub fn check(&self) -> Result<(), EvalError> {
        for i in 0..self.n() {
            let fp: u64 = (0..self.n()).filter(|&t| t != i).map(|t| self.grid[t][i]).sum();
            let fn_: u64 = (0..self.n()).filter(|&p| p != i).map(|p| self.grid[i][p]).sum();
            if fp != self.fp[i] || fn_ != self.fn_[i] {
                return Err(EvalError::Inconsistent(format!(
                    "FP/FN rows disagree with grid for {}",
                    self.classes[i]
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for c in &self.classes {
            let _ = write!(out, ",{}", c.code());
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.grid) {
            out.push_str(c.code());
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        for (name, row) in [("FP", &self.fp), ("FN", &self.fn_)] {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let bad = |m: &str| EvalError::BadCsv(m.to_string());
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        let classes = header
            .split(',')
            .skip(1)
            .map(|s| s.parse::<SeizureType>().map_err(|e| EvalError::BadCsv(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let n = classes.len();
        let mut grid = Vec::with_capacity(n);
        let mut fp = Vec::new();
        let mut fn_ = Vec::new();
        for (i, line) in lines.enumerate() {
            let mut fields = line.split(',');
            let name = fields.next().ok_or_else(|| bad("empty row"))?;
            let values = fields
                .map(|f| f.parse::<u64>().map_err(|_| bad("non-integer cell")))
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != n {
                return Err(bad("row width differs from header"));
            }
            match (i, name) {
                (i, _) if i < n => {
                    if name != classes[i].code() {
                        return Err(bad("row labels must follow header order"));
                    }
                    grid.push(values);
                }
                (i, "FP") if i == n => fp = values,
                (i, "FN") if i == n + 1 => fn_ = values,
                _ => return Err(bad("unexpected row")),
            }
        }
        if grid.len() != n || fp.len() != n || fn_.len() != n {
            return Err(bad("missing rows"));
        }
        let g = Self { classes, grid, fp, fn_ };
        g.check()?;
        Ok(g)
    }

    /// Heatmap as SVG: linear white-to-blue scale over the class grid, with
    /// the FP and FN rows underneath, every cell annotated.
    pub fn to_svg(&self, title: &str) -> String {
        let cell = 64;
        let left = 120;
        let top = 70;
        let n = self.n();
        let width = left + cell * n.max(1) + 20;
        let height = top + cell * (n + 2) + 60;
        let max = self
            .grid
            .iter()
            .flatten()
            .chain(&self.fp)
            .chain(&self.fn_)
            .copied()
            .max()
            .unwrap_or(0)
            .max(1);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, width / 2, escape(title));
        let _ = writeln!(s, r#"<text x="{}" y="45" text-anchor="middle">Predicted label</text>"#, left + cell * n / 2);
        for (j, c) in self.classes.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                left + j * cell + cell / 2,
                top - 6,
                c.code()
            );
        }
        let rows = self
            .classes
            .iter()
            .map(|c| c.code())
            .zip(self.grid.iter())
            .chain([("FP", &self.fp), ("FN", &self.fn_)]);
        for (i, (name, row)) in rows.enumerate() {
            let y = top + i * cell;
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 8, y + cell / 2 + 4, name);
            for (j, &v) in row.iter().enumerate() {
                let x = left + j * cell;
                let shade = v as f64 / max as f64;
                let (r, g, b) = (
                    (255.0 - 247.0 * shade).round() as u8,
                    (255.0 - 207.0 * shade).round() as u8,
                    (255.0 - 148.0 * shade).round() as u8,
                );
                let text_fill = if shade > 0.5 { "white" } else { "black" };
                let _ = writeln!(
                    s,
                    r##"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="#{r:02x}{g:02x}{b:02x}" stroke="#888"/><text x="{}" y="{}" text-anchor="middle" fill="{text_fill}">{v}</text>"##,
                    x + cell / 2,
                    y + cell / 2 + 4
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">True label</text>"#,
            top + cell * n / 2,
            top + cell * n / 2
        );
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn build_heatmap(classes: &[SeizureType], truths: &[SeizureType], preds: &[SeizureType]) -> Result<HeatmapGrid, EvalError> {
    check_lengths(truths, preds)?;
    let n = classes.len();
    let index = |l: SeizureType| classes.iter().position(|&c| c == l).ok_or(EvalError::UnknownClass(l));
    let mut grid = vec![vec![0u64; n]; n];
    for (&t, &p) in truths.iter().zip(preds) {
        grid[index(t)?][index(p)?] += 1;
    }
    let fp = (0..n).map(|p| (0..n).filter(|&t| t != p).map(|t| grid[t][p]).sum()).collect();
    let fn_ = (0..n).map(|t| (0..n).filter(|&p| p != t).map(|p| grid[t][p]).sum()).collect();
    Ok(HeatmapGrid {
        classes: classes.to_vec(),
        grid,
        fp,
        fn_,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub class: SeizureType,
    pub counts: ClassCounts,
    pub accuracy: f64,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub title: String,
    pub heatmap: HeatmapGrid,
    pub metrics: Vec<ClassMetrics>,
    pub micro_accuracy: f64,
    /// Mean of per-class one-vs-all accuracies.
    pub mean_class_accuracy: f64,
    /// Mean of defined per-class F1 values.
    pub macro_f1: Option<f64>,
}

/// Builds the report and cross-checks every metric against a recount from
/// the raw (truth, prediction) pairs.
pub fn evaluate(title: &str, classes: &[SeizureType], truths: &[SeizureType], preds: &[SeizureType]) -> Result<EvalReport, EvalError> {
    if truths.is_empty() {
        return Err(EvalError::EmptyEval);
    }
    let heatmap = build_heatmap(classes, truths, preds)?;
    heatmap.check()?;
    let counts = heatmap.counts();
    let direct = ConfusionCounts::from_pairs(classes, truths, preds)?;
    if counts != direct {
        return Err(EvalError::Inconsistent("grid counts disagree with pairwise recount".into()));
    }
    let correct = truths.iter().zip(preds).filter(|(t, p)| t == p).count();
    let micro_accuracy = heatmap.micro_accuracy()?;
    if (micro_accuracy - correct as f64 / truths.len() as f64).abs() > 1e-15 {
        return Err(EvalError::Inconsistent("micro accuracy disagrees with resolved labels".into()));
    }
    let metrics: Vec<ClassMetrics> = classes
        .iter()
        .zip(&counts.per_class)
        .map(|(&class, k)| {
            Ok(ClassMetrics {
                class,
                counts: *k,
                accuracy: k.accuracy()?,
                f1: k.f1(),
            })
        })
        .collect::<Result<_, EvalError>>()?;
    let mean_class_accuracy = metrics.iter().map(|m| m.accuracy).sum::<f64>() / metrics.len() as f64;
    let defined: Vec<f64> = metrics.iter().filter_map(|m| m.f1).collect();
    let macro_f1 = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(EvalReport {
        title: title.to_string(),
        heatmap,
        metrics,
        micro_accuracy,
        mean_class_accuracy,
        macro_f1,
    })
}

impl EvalReport {
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("class,tp,tn,fp,fn,accuracy,f1\n");
        for m in &self.metrics {
            let f1 = m.f1.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                m.class.code(),
                m.counts.tp,
                m.counts.tn,
                m.counts.fp,
                m.counts.fn_,
                m.accuracy,
                f1
            );
        }
        let _ = writeln!(out, "micro_accuracy,,,,,{},", self.micro_accuracy);
        let _ = writeln!(
            out,
            "mean_class_accuracy,,,,,{},{}",
            self.mean_class_accuracy,
            self.macro_f1.map(|v| v.to_string()).unwrap_or_default()
        );
        out
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.title);
        let _ = writeln!(s, "samples: {}", self.heatmap.total());
        let _ = writeln!(s, "micro accuracy (diagonal / total): {:.4}", self.micro_accuracy);
        let _ = writeln!(s, "mean one-vs-all accuracy: {:.4}", self.mean_class_accuracy);
        match self.macro_f1 {
            Some(f) => {
                let _ = writeln!(s, "macro F1 (defined classes): {f:.4}");
            }
            None => s.push_str("macro F1: undefined\n"),
        }
        let _ = writeln!(s, "\n{:<16} {:>6} {:>6} {:>6} {:>6} {:>9} {:>7}", "class", "TP", "TN", "FP", "FN", "accuracy", "F1");
        for m in &self.metrics {
            let f1 = m.f1.map(|v| format!("{v:.4}")).unwrap_or_else(|| "absent".into());
            let _ = writeln!(
                s,
                "{:<16} {:>6} {:>6} {:>6} {:>6} {:>9.4} {:>7}",
                m.class.display_name(),
                m.counts.tp,
                m.counts.tn,
                m.counts.fp,
                m.counts.fn_,
                m.accuracy,
                f1
            );
        }
        s
    }

    /// Writes metrics.csv, heatmap.csv, heatmap.svg and summary.txt into
    /// `dir`; returns the written paths.
    pub fn render(&self, dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
        render(&self.heatmap, dir, &self.title)?;
        let mut paths = vec![dir.join("heatmap.csv"), dir.join("heatmap.svg")];
        for (name, body) in [("metrics.csv", self.metrics_csv()), ("summary.txt", self.summary())] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|source| EvalError::Io { path: p.clone(), source })?;
            paths.push(p);
        }
        Ok(paths)
    }
}

/// Writes `heatmap.csv` and `heatmap.svg` under `dir`. The CSV is re-parsed
/// and compared against the grid before returning.
pub fn render(g: &HeatmapGrid, dir: &Path, title: &str) -> Result<(), EvalError> {
    g.check()?;
    fs::create_dir_all(dir).map_err(|source| EvalError::Io { path: dir.to_path_buf(), source })?;
    let csv = g.to_csv();
    if HeatmapGrid::from_csv(&csv)? != *g {
        return Err(EvalError::Inconsistent("heatmap CSV does not re-parse to the grid".into()));
    }
    for (name, body) in [("heatmap.csv", csv), ("heatmap.svg", g.to_svg(title))] {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|source| EvalError::Io { path: p, source })?;
    }
    Ok(())
}
