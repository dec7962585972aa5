use serde::{Deserialize, Serialize};

use super::{predict, verdict_for, Class, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores `>= threshold` are called malware; `None` for the origin.
    pub threshold: Option<f64>,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            let t = p.threshold.map_or_else(|| "inf".to_owned(), |t| format!("{t:.16e}"));
            out.push_str(&format!("{t},{:.16e},{:.16e}\n", p.fpr, p.tpr));
        }
        out
    }
}

/// Ratios with a zero denominator are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub confusion: Confusion,
    pub roc_points: Vec<RocPoint>,
    pub auc: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn compute_metrics(preds: &[Class], labels: &[Class]) -> Result<Metrics> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    if preds.is_empty() {
        return Err(Error::DegenerateDataset("no samples to score".into()));
    }
    let mut c = Confusion::default();
    for (p, y) in preds.iter().zip(labels) {
        match (p, y) {
            (Class::Malware, Class::Malware) => c.tp += 1,
            (Class::Malware, Class::Benign) => c.fp += 1,
            (Class::Benign, Class::Benign) => c.tn += 1,
            (Class::Benign, Class::Malware) => c.fn_ += 1,
        }
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(Metrics {
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        precision,
        recall,
        f1,
        confusion: c,
        roc_points: Vec::new(),
        auc: None,
    })
}

/// ROC curve by sweeping the threshold down through the distinct scores;
/// samples with equal scores enter together as one (possibly diagonal) step.
/// AUC by the trapezoid rule.
pub fn roc_auc(scores: &[f64], labels: &[Class]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("ROC scores".into()));
    }
    let pos = labels.iter().filter(|l| l.is_malware()).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateDataset("ROC needs both classes".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint { threshold: None, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]].is_malware() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().unwrap();
        let p = RocPoint { threshold: Some(s), fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64 };
        auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    Ok(RocCurve { points, auc })
}

/// Confusion metrics plus ROC/AUC from raw scores, thresholded at zero. The
/// ROC part is left empty when only one class is present.
pub fn metrics_from_scores(scores: &[f64], labels: &[Class]) -> Result<Metrics> {
    let preds: Vec<Class> = scores.iter().map(|&s| verdict_for(s)).collect();
    let mut m = compute_metrics(&preds, labels)?;
    match roc_auc(scores, labels) {
        Ok(roc) => {
            m.roc_points = roc.points;
            m.auc = Some(roc.auc);
        }
        Err(Error::DegenerateDataset(_)) => {}
        Err(e) => return Err(e),
    }
    Ok(m)
}

/// [`metrics_from_scores`] over a model's scores on labelled samples.
pub fn evaluate(params: &Mlp, samples: &[(Vec<f64>, Class)]) -> Result<Metrics> {
    let scores = samples.iter().map(|(x, _)| predict(params, x).map(|p| p.1)).collect::<Result<Vec<f64>>>()?;
    let labels: Vec<Class> = samples.iter().map(|(_, y)| *y).collect();
    metrics_from_scores(&scores, &labels)
}
