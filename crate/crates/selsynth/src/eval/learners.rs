//! Machine-learning utility: train built-in learners on real or synthetic
//! rows, score them on a held-out real split.
//!
//! The learners are deliberately small and fully deterministic: multinomial
//! logistic regression under full-batch gradient descent, least-squares
//! linear regression via the normal equations, and brute-force k-nearest
//! neighbors. Determinism is what makes the harness's identity oracle exact:
//! training on the real split itself must reproduce the real scores bit for
//! bit.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::table::RawTable;
use crate::transform::schema::{FittedKind, TableSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub label: String,
    pub kind: TaskKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Score {
    Classification { accuracy: f64, f1: f64 },
    Regression { mse: f64, r2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerScores {
    pub learner: String,
    /// Trained on the real training split.
    pub origin: Score,
    /// Trained on the synthetic table.
    pub synth: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlUtilityReport {
    pub task: TaskSpec,
    pub learners: Vec<LearnerScores>,
}

/// Train-on-synthetic / test-on-real protocol: split the original table
/// 75/25, train each learner once on the real training split and once on the
/// synthetic table, score both on the real test split.
pub fn ml_utility(
    t_origin: &RawTable,
    t_synth: &RawTable,
    schema: &TableSchema,
    task: &TaskSpec,
    seed: u64,
) -> Result<MlUtilityReport> {
    let label_col = schema
        .columns
        .iter()
        .position(|c| c.name == task.label)
        .ok_or_else(|| Error::Argument(format!("label column {:?} not in schema", task.label)))?;
    if t_origin.n_rows() < 8 {
        return Err(Error::Argument("too few rows for a train/test split".into()));
    }

    let mut order: Vec<usize> = (0..t_origin.n_rows()).collect();
    let mut rng = stream(seed, "eval/ml/split");
    order.shuffle(&mut rng);
    let test_len = t_origin.n_rows() / 4;
    let (test_idx, train_idx) = order.split_at(test_len);

    let featurizer = Featurizer::fit(t_origin, train_idx, schema, label_col, task.kind)?;
    let train = featurizer.dataset(t_origin, schema, Some(train_idx))?;
    let test = featurizer.dataset(t_origin, schema, Some(test_idx))?;
    let synth = featurizer.dataset(t_synth, schema, None)?;

    let mut learners = Vec::new();
    match task.kind {
        TaskKind::Classification => {
            let logistic = |d: &Dataset| {
                let model = LogisticModel::fit(d, featurizer.n_classes);
                score_classifier(|x| model.predict(x), &test, featurizer.n_classes)
            };
            let knn_origin = score_classifier(
                |x| knn_classify(&train, x, featurizer.n_classes),
                &test,
                featurizer.n_classes,
            );
            let knn_synth = score_classifier(
                |x| knn_classify(&synth, x, featurizer.n_classes),
                &test,
                featurizer.n_classes,
            );
            learners.push(LearnerScores {
                learner: "logistic_regression".into(),
                origin: logistic(&train),
                synth: logistic(&synth),
            });
            learners.push(LearnerScores {
                learner: "knn".into(),
                origin: knn_origin,
                synth: knn_synth,
            });
        }
        TaskKind::Regression => {
            let linear = |d: &Dataset| {
                let model = LinearModel::fit(d);
                score_regressor(|x| model.predict(x), &test)
            };
            learners.push(LearnerScores {
                learner: "linear_regression".into(),
                origin: linear(&train),
                synth: linear(&synth),
            });
            learners.push(LearnerScores {
                learner: "knn".into(),
                origin: score_regressor(|x| knn_regress(&train, x), &test),
                synth: score_regressor(|x| knn_regress(&synth, x), &test),
            });
        }
    }

    Ok(MlUtilityReport {
        task: task.clone(),
        learners,
    })
}

/// Numeric feature encoding shared by both arms: continuous standardized by
/// the real training split's moments, ordinals as ranks, nominals one-hot.
struct Featurizer {
    label_col: usize,
    kind: TaskKind,
    n_classes: usize,
    /// Per feature column: fitted (mean, std) for continuous, None otherwise.
    standardize: Vec<Option<(f64, f64)>>,
}

struct Dataset {
    xs: Vec<Vec<f64>>,
    /// Class index or regression target.
    ys: Vec<f64>,
}

impl Featurizer {
    fn fit(
        table: &RawTable,
        train_idx: &[usize],
        schema: &TableSchema,
        label_col: usize,
        kind: TaskKind,
    ) -> Result<Featurizer> {
        let mut standardize = Vec::with_capacity(schema.columns.len());
        for (i, meta) in schema.columns.iter().enumerate() {
            if i == label_col || !meta.is_continuous() {
                standardize.push(None);
                continue;
            }
            let values: Vec<f64> = train_idx
                .iter()
                .map(|&r| {
                    table.rows[r][i]
                        .as_real()
                        .ok_or_else(|| Error::Data(format!("non-numeric cell in {}", meta.name)))
                })
                .collect::<Result<_>>()?;
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            standardize.push(Some((mean, if std > 0.0 { std } else { 1.0 })));
        }
        let n_classes = match (&schema.columns[label_col].kind, kind) {
            (FittedKind::Ordinal { categories, .. }, TaskKind::Classification)
            | (FittedKind::Nominal { categories, .. }, TaskKind::Classification) => {
                categories.len()
            }
            (FittedKind::Continuous { .. }, TaskKind::Classification) => {
                return Err(Error::Argument(
                    "classification label must be a categorical column".into(),
                ))
            }
            (FittedKind::Continuous { .. }, TaskKind::Regression) => 0,
            (FittedKind::Ordinal { .. }, TaskKind::Regression) => {
                return Err(Error::Argument(
                    "regression label must be a continuous column".into(),
                ))
            }
            (FittedKind::Nominal { .. }, TaskKind::Regression) => {
                return Err(Error::Argument(
                    "regression label must be a continuous column".into(),
                ))
            }
        };
        Ok(Featurizer {
            label_col,
            kind,
            n_classes,
            standardize,
        })
    }

    fn dataset(
        &self,
        table: &RawTable,
        schema: &TableSchema,
        rows: Option<&[usize]>,
    ) -> Result<Dataset> {
        let indices: Vec<usize> = match rows {
            Some(r) => r.to_vec(),
            None => (0..table.n_rows()).collect(),
        };
        let mut xs = Vec::with_capacity(indices.len());
        let mut ys = Vec::with_capacity(indices.len());
        for &r in &indices {
            let row = &table.rows[r];
            let mut x = Vec::new();
            for (i, meta) in schema.columns.iter().enumerate() {
                if i == self.label_col {
                    continue;
                }
                match &meta.kind {
                    FittedKind::Continuous { .. } => {
                        let v = row[i].as_real().ok_or_else(|| {
                            Error::Data(format!("non-numeric cell in {}", meta.name))
                        })?;
                        let (mean, std) = self.standardize[i].expect("fitted for continuous");
                        x.push((v - mean) / std);
                    }
                    FittedKind::Ordinal { .. } | FittedKind::Nominal { .. } => {
                        let label = row[i].as_cat().ok_or_else(|| {
                            Error::Data(format!("numeric cell in {}", meta.name))
                        })?;
                        x.extend(meta.encode_categorical(label)?);
                    }
                }
            }
            let meta = &schema.columns[self.label_col];
            let y = match self.kind {
                TaskKind::Regression => row[self.label_col].as_real().ok_or_else(|| {
                    Error::Data(format!("non-numeric label in {}", meta.name))
                })?,
                TaskKind::Classification => {
                    let label = row[self.label_col].as_cat().ok_or_else(|| {
                        Error::Data(format!("numeric label in {}", meta.name))
                    })?;
                    let enc = meta.encode_categorical(label)?;
                    match &meta.kind {
                        FittedKind::Ordinal { .. } => enc[0] - 1.0,
                        _ => crate::transform::gmm::argmax(&enc) as f64,
                    }
                }
            };
            xs.push(x);
            ys.push(y);
        }
        Ok(Dataset { xs, ys })
    }

}

impl LogisticModel {
    /// Full-batch gradient descent on the softmax cross entropy; zero init
    /// keeps it deterministic.
    fn fit(data: &Dataset, n_classes: usize) -> LogisticModel {
        let d = data.xs.first().map_or(0, Vec::len);
        let mut w = vec![vec![0.0; d + 1]; n_classes];
        let lr = 0.5;
        let iters = 300;
        let n = data.xs.len().max(1) as f64;
        for _ in 0..iters {
            let mut grad = vec![vec![0.0; d + 1]; n_classes];
            for (x, &y) in data.xs.iter().zip(&data.ys) {
                let probs = softmax_scores(&w, x);
                for (c, g) in grad.iter_mut().enumerate() {
                    let delta = probs[c] - if c == y as usize { 1.0 } else { 0.0 };
                    for (j, xv) in x.iter().enumerate() {
                        g[j] += delta * xv;
                    }
                    g[d] += delta;
                }
            }
            for (wc, gc) in w.iter_mut().zip(&grad) {
                for (wv, gv) in wc.iter_mut().zip(gc) {
                    *wv -= lr * gv / n;
                }
            }
        }
        LogisticModel { w }
    }

    fn predict(&self, x: &[f64]) -> usize {
        let scores = softmax_scores(&self.w, x);
        crate::transform::gmm::argmax(&scores)
    }
}

struct LogisticModel {
    /// Per class: feature weights then bias.
    w: Vec<Vec<f64>>,
}

fn softmax_scores(w: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let logits: Vec<f64> = w
        .iter()
        .map(|wc| wc[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + wc[d])
        .collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

struct LinearModel {
    /// Feature weights then bias.
    w: Vec<f64>,
}

impl LinearModel {
    /// Least squares via the normal equations with a tiny ridge for rank
    /// safety.
    fn fit(data: &Dataset) -> LinearModel {
        let d = data.xs.first().map_or(0, Vec::len) + 1;
        let mut ata = vec![vec![0.0; d]; d];
        let mut atb = vec![0.0; d];
        for (x, &y) in data.xs.iter().zip(&data.ys) {
            let mut xe = x.clone();
            xe.push(1.0);
            for i in 0..d {
                for j in 0..d {
                    ata[i][j] += xe[i] * xe[j];
                }
                atb[i] += xe[i] * y;
            }
        }
        for (i, row) in ata.iter_mut().enumerate() {
            row[i] += 1e-8;
        }
        let w = solve(ata, atb);
        LinearModel { w }
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let d = x.len();
        self.w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.w[d]
    }
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[pivot][col].abs() {
                pivot = r;
            }
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        if p.abs() < 1e-300 {
            continue;
        }
        for r in col + 1..n {
            let f = a[r][col] / p;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for c in col + 1..n {
            s -= a[col][c] * x[c];
        }
        x[col] = if a[col][col].abs() < 1e-300 {
            0.0
        } else {
            s / a[col][col]
        };
    }
    x
}

const KNN_K: usize = 5;

fn knn_neighbors<'d>(data: &'d Dataset, x: &[f64]) -> Vec<(f64, usize)> {
    let mut dists: Vec<(f64, usize)> = data
        .xs
        .iter()
        .enumerate()
        .map(|(i, xi)| {
            let d: f64 = xi.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, i)
        })
        .collect();
    dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    dists.truncate(KNN_K.min(data.xs.len()));
    dists
}

fn knn_classify(data: &Dataset, x: &[f64], n_classes: usize) -> usize {
    let mut votes = vec![0usize; n_classes.max(1)];
    for (_, i) in knn_neighbors(data, x) {
        votes[data.ys[i] as usize] += 1;
    }
    let mut best = 0;
    for (c, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = c;
        }
    }
    best
}

fn knn_regress(data: &Dataset, x: &[f64]) -> f64 {
    let neigh = knn_neighbors(data, x);
    let k = neigh.len().max(1);
    neigh.iter().map(|&(_, i)| data.ys[i]).sum::<f64>() / k as f64
}

fn score_classifier(
    predict: impl Fn(&[f64]) -> usize,
    test: &Dataset,
    n_classes: usize,
) -> Score {
    let mut correct = 0usize;
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    let mut present = vec![false; n_classes];
    for (x, &y) in test.xs.iter().zip(&test.ys) {
        let truth = y as usize;
        present[truth] = true;
        let pred = predict(x);
        if pred == truth {
            correct += 1;
            tp[truth] += 1;
        } else {
            fp[pred] += 1;
            fn_[truth] += 1;
        }
    }
    // macro F1 over classes present in the test ground truth
    let mut f1_sum = 0.0;
    let mut f1_n = 0usize;
    for c in 0..n_classes {
        if !present[c] {
            continue;
        }
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        let f1 = if denom == 0 {
            0.0
        } else {
            2.0 * tp[c] as f64 / denom as f64
        };
        f1_sum += f1;
        f1_n += 1;
    }
    Score::Classification {
        accuracy: correct as f64 / test.xs.len().max(1) as f64,
        f1: f1_sum / f1_n.max(1) as f64,
    }
}

fn score_regressor(predict: impl Fn(&[f64]) -> f64, test: &Dataset) -> Score {
    let n = test.xs.len().max(1) as f64;
    let mean_y = test.ys.iter().sum::<f64>() / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, &y) in test.xs.iter().zip(&test.ys) {
        let p = predict(x);
        ss_res += (y - p) * (y - p);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    Score::Regression {
        mse: ss_res / n,
        r2: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 },
    }
}
