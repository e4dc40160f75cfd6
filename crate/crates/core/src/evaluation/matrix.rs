use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ablation::{classic_ablation, entropy_ablation, entropy_ablation_sweep, AblationConfig, Fraction, Target};
use crate::attribution::{Explainer, Method};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::io::write_rows;

/// Scoring rule applied to every (instance, method) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluator {
    Entropy(Fraction),
    /// Area under the entropy-ablation curve over the given fractions.
    EntropyAuc(Vec<f64>),
    Classic(AblationConfig),
}

/// Default share of features ablated by the entropy test.
pub const DEFAULT_FRACTION: f64 = 0.1;

impl Default for Evaluator {
    fn default() -> Self {
        Evaluator::Entropy(Fraction::Of(DEFAULT_FRACTION))
    }
}

impl Evaluator {
    pub fn tag(&self) -> String {
        match self {
            Evaluator::Entropy(f) => format!("entropy_{}", f.tag()),
            Evaluator::EntropyAuc(_) => "entropy_auc".into(),
            Evaluator::Classic(c) => format!(
                "classic_{}_{}",
                match c.target {
                    Target::Logit => "logit",
                    Target::Softmax => "softmax",
                    Target::Entropy => "entropy",
                },
                c.fraction.tag()
            ),
        }
    }
}

/// Scores of one method over the evaluated instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub method: String,
    pub baseline: Option<String>,
    pub instances: Vec<usize>,
    pub scores: Vec<f64>,
    /// Instances whose map had nothing positive to ablate.
    pub no_positive: Vec<bool>,
    pub mean: f64,
    pub median: f64,
    /// Population variance.
    pub variance: f64,
    pub error: Option<String>,
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    mean(&v.iter().map(|x| (x - m) * (x - m)).collect::<Vec<_>>())
}

impl AblationReport {
    pub fn from_scores(method: Method, instances: Vec<usize>, scores: Vec<f64>, no_positive: Vec<bool>) -> Self {
        Self {
            method: method.tag(),
            baseline: baseline_tag(method),
            mean: mean(&scores),
            median: median(&scores),
            variance: variance(&scores),
            instances,
            scores,
            no_positive,
            error: None,
        }
    }

    fn failed(method: Method, err: &Error) -> Self {
        let mut r = Self::from_scores(method, vec![], vec![], vec![]);
        r.error = Some(err.to_string());
        r
    }
}

fn baseline_tag(method: Method) -> Option<String> {
    match method {
        Method::IntegratedGradients(k) => Some(k.tag().to_string()),
        _ => None,
    }
}

/// Per-instance seed shared by every method, so noise baselines and
/// SmoothGrad differ across instances but not across reruns.
pub fn instance_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Evaluates every method on every instance in `indices`.
///
/// Instances are scored in parallel; reports come back in `methods` order
/// with scores in `indices` order. A failing cell keeps its error and
/// leaves the others intact.
pub fn run_matrix(
    explainer: &Explainer<'_, '_>,
    data: &LabeledDataset,
    indices: &[usize],
    methods: &[Method],
    evaluator: &Evaluator,
    seed: u64,
) -> Vec<AblationReport> {
    let net = explainer.network();
    let needs_entropy_input = !matches!(evaluator, Evaluator::Classic(_));
    let substitute = if needs_entropy_input {
        match explainer.factory.max_entropy_full() {
            Ok(r) => Some(r.best.clone()),
            Err(e) => return methods.iter().map(|&m| AblationReport::failed(m, &e)).collect(),
        }
    } else {
        None
    };
    methods
        .iter()
        .map(|&method| {
            let cell: Result<Vec<(f64, bool)>> = indices
                .par_iter()
                .map(|&i| {
                    let x = data.instance(i);
                    let class = net.predict(&x)?;
                    let attr = explainer.explain(method, &x, class, instance_seed(seed, i))?;
                    match (evaluator, &substitute) {
                        (Evaluator::Entropy(f), Some(s)) => {
                            entropy_ablation(net, &x, &attr, s, *f).map(|o| (o.score, o.no_positive))
                        }
                        (Evaluator::EntropyAuc(fr), Some(s)) => {
                            entropy_ablation_sweep(net, &x, &attr, s, fr).map(|o| (o.auc, o.scores.iter().all(|&v| v == 0.0)))
                        }
                        (Evaluator::Classic(cfg), _) => {
                            classic_ablation(net, &x, &attr, cfg).map(|o| (o.score, o.no_positive))
                        }
                        _ => unreachable!("entropy evaluators always carry a substitute"),
                    }
                })
                .collect();
            match cell {
                Ok(pairs) => {
                    let (scores, flags) = pairs.into_iter().unzip();
                    AblationReport::from_scores(method, indices.to_vec(), scores, flags)
                }
                Err(e) => AblationReport::failed(method, &e),
            }
        })
        .collect()
}

fn file_tag(tag: &str) -> String {
    tag.replace(':', "_")
}

/// Writes `cell_<method>.csv` per report and `summary.csv` with one column
/// per method and rows for mean, median and variance.
pub fn write_matrix(reports: &[AblationReport], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for r in reports {
        let rows = r
            .instances
            .iter()
            .zip(&r.scores)
            .zip(&r.no_positive)
            .map(|((i, s), f)| vec![i.to_string(), s.to_string(), f.to_string()]);
        write_rows(
            &dir.join(format!("cell_{}.csv", file_tag(&r.method))),
            &["instance", "score", "no_positive"],
            rows,
        )?;
    }
    let mut header = vec!["statistic"];
    header.extend(reports.iter().map(|r| r.method.as_str()));
    let row = |name: &str, f: fn(&AblationReport) -> f64| {
        let mut v = vec![name.to_string()];
        v.extend(reports.iter().map(|r| if r.error.is_some() { "error".into() } else { f(r).to_string() }));
        v
    };
    write_rows(
        &dir.join("summary.csv"),
        &header,
        [
            row("mean", |r| r.mean),
            row("median", |r| r.median),
            row("variance", |r| r.variance),
        ],
    )
}
