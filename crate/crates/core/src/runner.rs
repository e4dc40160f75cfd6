//! Seeded experiment runner behind the command-line subcommands.
//!
//! Every command resolves a [`RunConfig`], writes it as `config.toml` into
//! `<output root>/<command>/` and puts its CSV/JSON outputs next to it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attribution::{compute_hybrid_weights, hybrid_explain, Explainer, ExplainerConfig, Method};
use crate::baselines::{entropy_curve, export_baseline, BaselineFactory, BaselineKind, BaselineParams};
use crate::data::{bundled_digits, load_idx_split, toy_generate, GroundTruthMask, LabeledDataset, ToySpec, ValueRange};
use crate::error::{Error, Result};
use crate::evaluation::{
    entropy_phase_gap, linear_transform_test, mean_baseline_sweep, min_loss_histogram, nonconservation_demo, run_matrix,
    write_matrix, AblationConfig, BaselinePolicy, DemoTarget, Evaluator, Fraction, LossKind, Reference, ShiftShape,
    ShiftSpec, Substitute, Target, DEFAULT_FRACTION,
};
use crate::io::{write_json, write_rows, write_tensor_csv};
use crate::nn::{self, Network, Optimizer, TrainConfig, TrainReport};
use crate::tensor::{softmax, TensorF};

/// Seed used when neither the config file nor the command line sets one.
pub const DEFAULT_SEED: u64 = 0;

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "MAXENT_IG_OUT";

/// Output root used when nothing else is configured.
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Output root; falls back to `$MAXENT_IG_OUT`, then `runs`.
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub baselines: BaselineSection,
    pub explainer: ExplainerConfig,
    pub explain: ExplainSection,
    pub evaluate: EvaluateSection,
    pub sweep: SweepSection,
    pub invariance: InvarianceSection,
    pub nonconservation: NonconservationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            output_dir: None,
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            train: TrainSection::default(),
            baselines: BaselineSection::default(),
            explainer: ExplainerConfig::default(),
            explain: ExplainSection::default(),
            evaluate: EvaluateSection::default(),
            sweep: SweepSection::default(),
            invariance: InvarianceSection::default(),
            nonconservation: NonconservationSection::default(),
        }
    }
}

fn digits_range() -> [f64; 2] {
    [-0.42, 2.82]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Tabular toy data; its seed is the run seed.
    Toy {
        features: usize,
        relevant: usize,
        classes: usize,
        #[serde(default = "two")]
        values: usize,
        #[serde(default = "toy_instances")]
        instances: usize,
    },
    /// The bundled 8x8 digits, rescaled into `range`.
    Digits {
        #[serde(default = "digits_range")]
        range: [f64; 2],
    },
    /// IDX image files, rescaled into `range`.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default = "digits_range")]
        range: [f64; 2],
    },
}

fn two() -> usize {
    2
}

fn toy_instances() -> usize {
    10_000
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Digits { range: digits_range() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Fc,
    Cnn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden: Vec<usize>,
    /// Convolution channels and kernel size; CNN only.
    pub channels: usize,
    pub kernel: usize,
    /// Load weights from this file instead of training.
    pub load: Option<PathBuf>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Fc,
            hidden: vec![64, 32],
            channels: 8,
            kernel: 3,
            load: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            optimizer: t.optimizer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub kinds: Vec<BaselineKind>,
    pub params: BaselineParams,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            kinds: BaselineKind::ALL.to_vec(),
            params: BaselineParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    /// Position in the test split.
    pub instance: usize,
    pub methods: Vec<Method>,
}

fn all_methods(kinds: &[BaselineKind]) -> Vec<Method> {
    let mut m = vec![Method::Random];
    m.extend(Method::GRADIENT_FAMILY);
    m.extend(kinds.iter().map(|&k| Method::IntegratedGradients(k)));
    m
}

impl Default for ExplainSection {
    fn default() -> Self {
        Self {
            instance: 0,
            methods: all_methods(&BaselineKind::ALL),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Entropy,
    EntropyAuc,
    ClassicLogit,
    ClassicSoftmax,
}

/// `"all_positive"` or a number in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FractionSetting {
    Of(f64),
    Named(NamedFraction),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedFraction {
    AllPositive,
}

impl From<FractionSetting> for Fraction {
    fn from(f: FractionSetting) -> Self {
        match f {
            FractionSetting::Of(p) => Fraction::Of(p),
            FractionSetting::Named(NamedFraction::AllPositive) => Fraction::AllPositive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubstituteSetting {
    Zero,
    InstanceMin,
    SignFlip,
    Blur,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub score: ScoreKind,
    pub fraction: FractionSetting,
    /// Fractions integrated by `entropy_auc`.
    pub fractions: Vec<f64>,
    /// Replacement for the classic scores.
    pub substitute: SubstituteSetting,
    /// Leading test instances to score; 0 means the whole test split.
    pub instances: usize,
    /// Defaults to random, the gradient family and IG over every listed baseline.
    pub methods: Option<Vec<Method>>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            score: ScoreKind::Entropy,
            fraction: FractionSetting::Of(DEFAULT_FRACTION),
            fractions: (1..10).map(|i| i as f64 / 10.0).collect(),
            substitute: SubstituteSetting::Zero,
            instances: 0,
            methods: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub grid: usize,
    /// Defaults to KL on toy data and Spearman otherwise.
    pub loss: Option<LossKind>,
    pub instances: usize,
    pub bins: usize,
    /// Instances used to weight the hybrid reference (image data only).
    pub hybrid_instances: usize,
    pub hybrid_methods: Vec<Method>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            grid: 200,
            loss: None,
            instances: 50,
            bins: 50,
            hybrid_instances: 50,
            hybrid_methods: Method::GRADIENT_FAMILY.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvarianceSection {
    pub amplitude: f64,
    pub instances: usize,
    /// Points on the entropy phase sweep.
    pub phase_points: usize,
}

impl Default for InvarianceSection {
    fn default() -> Self {
        Self {
            amplitude: 0.5,
            instances: 10,
            phase_points: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonconservationSection {
    pub steps: usize,
    /// Descent step as a fraction of the range width.
    pub lr_fraction: f64,
    /// Position in the test split of the starting point.
    pub instance: usize,
}

impl Default for NonconservationSection {
    fn default() -> Self {
        Self {
            steps: 1000,
            lr_fraction: 0.01,
            instance: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text)?)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    /// Reads `path` (if any), applies `key=value` overrides on dotted paths and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
                parse_table(&text)?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg = Self::from_table(table)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        Fraction::from(self.evaluate.fraction).validate()?;
        if self.sweep.grid < 2 || self.sweep.bins == 0 {
            return Err(Error::Config("sweep needs grid >= 2 and bins >= 1".into()));
        }
        if self.model.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            seed: self.seed,
            optimizer: self.train.optimizer,
        }
    }

    pub fn output_root(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
    }

    pub fn evaluator(&self) -> Result<Evaluator> {
        let fraction = Fraction::from(self.evaluate.fraction);
        let substitute = || match self.evaluate.substitute {
            SubstituteSetting::Zero => Substitute::Zero,
            SubstituteSetting::InstanceMin => Substitute::InstanceMin,
            SubstituteSetting::SignFlip => Substitute::SignFlip,
            SubstituteSetting::Blur => Substitute::Blur {
                sigma: self.baselines.params.blur_sigma,
                kernel: self.baselines.params.blur_kernel,
            },
        };
        Ok(match self.evaluate.score {
            ScoreKind::Entropy => Evaluator::Entropy(fraction),
            ScoreKind::EntropyAuc => {
                for &p in &self.evaluate.fractions {
                    Fraction::Of(p).validate()?;
                }
                Evaluator::EntropyAuc(self.evaluate.fractions.clone())
            }
            ScoreKind::ClassicLogit => Evaluator::Classic(AblationConfig::classic(Target::Logit, substitute(), fraction)?),
            ScoreKind::ClassicSoftmax => {
                Evaluator::Classic(AblationConfig::classic(Target::Softmax, substitute(), fraction)?)
            }
        })
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(format!("invalid config: {e}")))
}

/// Sets `a.b.c = value`, reading `value` as a TOML literal and falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Dataset and model shared by every command.
pub struct Prepared {
    pub data: LabeledDataset,
    /// Ground truth for toy data.
    pub mask: Option<GroundTruthMask>,
    pub net: Network,
    /// Present when the model was trained in this run.
    pub train_report: Option<TrainReport>,
}

impl Prepared {
    pub fn range(&self) -> ValueRange {
        self.data.value_range()
    }

    /// Test-split index at position `pos`.
    pub fn test_index(&self, pos: usize) -> Result<usize> {
        self.data.test_indices().get(pos).copied().ok_or_else(|| {
            Error::Config(format!(
                "instance {pos} is outside the test split of {} instances",
                self.data.test_indices().len()
            ))
        })
    }

    /// The first `n` test indices; all of them when `n` is 0.
    pub fn leading_test(&self, n: usize) -> Vec<usize> {
        let t = self.data.test_indices();
        t[..if n == 0 { t.len() } else { n.min(t.len()) }].to_vec()
    }

    pub fn factory(&self, cfg: &RunConfig) -> BaselineFactory<'_> {
        BaselineFactory::new(&self.net, self.range(), cfg.baselines.params.clone(), cfg.seed).with_training_data(&self.data)
    }
}

pub fn load_dataset(cfg: &RunConfig) -> Result<(LabeledDataset, Option<GroundTruthMask>)> {
    let rescale = |ds: LabeledDataset, r: [f64; 2]| ds.normalize(ValueRange::new(r[0], r[1])?);
    match &cfg.dataset {
        DatasetConfig::Toy {
            features,
            relevant,
            classes,
            values,
            instances,
        } => {
            let (ds, mask) = toy_generate(&ToySpec {
                features: *features,
                relevant: *relevant,
                classes: *classes,
                values: *values,
                instances: *instances,
                seed: cfg.seed,
            })?;
            Ok((ds, Some(mask)))
        }
        DatasetConfig::Digits { range } => Ok((rescale(bundled_digits()?, *range)?, None)),
        DatasetConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            range,
        } => {
            for p in [train_images, train_labels, test_images, test_labels] {
                if !p.is_file() {
                    return Err(Error::Config(format!("dataset file {} does not exist", p.display())));
                }
            }
            let ds = load_idx_split(train_images, train_labels, test_images, test_labels)?;
            Ok((rescale(ds, *range)?, None))
        }
    }
}

pub fn build_network(cfg: &RunConfig, data: &LabeledDataset) -> Result<Network> {
    let m = &cfg.model;
    match m.kind {
        ModelKind::Fc => Network::fully_connected(data.feature_shape(), &m.hidden, data.classes(), cfg.seed),
        ModelKind::Cnn => Network::small_cnn(data.feature_shape(), m.channels, m.kernel, &m.hidden, data.classes(), cfg.seed),
    }
}

/// Loads the dataset and either loads or trains the model.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let (data, mask) = load_dataset(cfg)?;
    let (net, train_report) = match &cfg.model.load {
        Some(p) => {
            let net = nn::io::load(p)?;
            if net.input_shape() != data.feature_shape() || net.classes() != data.classes() {
                return Err(Error::Config(format!(
                    "model {} expects {:?} -> {} classes, dataset has {:?} -> {}",
                    p.display(),
                    net.input_shape(),
                    net.classes(),
                    data.feature_shape(),
                    data.classes()
                )));
            }
            (net, None)
        }
        None => {
            let (net, report) = nn::train(build_network(cfg, &data)?, &data, &cfg.train_config())?;
            (net.into_inner(), Some(report))
        }
    };
    Ok(Prepared {
        data,
        mask,
        net,
        train_report,
    })
}

/// Creates `<root>/<command>/` and writes the resolved config into it.
fn command_dir(cfg: &RunConfig, command: &str) -> Result<PathBuf> {
    let dir = cfg.output_root().join(command);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    Ok(dir)
}

fn fmt_rows<const N: usize>(rows: impl IntoIterator<Item = [String; N]>) -> Vec<Vec<String>> {
    rows.into_iter().map(|r| r.to_vec()).collect()
}

/// Summary printed by the command-line front end.
#[derive(Debug, Clone)]
pub struct CommandSummary {
    pub dir: PathBuf,
    pub lines: Vec<String>,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<CommandSummary> {
    let dir = command_dir(cfg, "train")?;
    let p = prepare(cfg)?;
    nn::io::save(&p.net, &dir.join("model.bin"))?;
    let mut lines = vec![format!("parameters: {}", p.net.parameter_count())];
    match &p.train_report {
        Some(r) => {
            write_json(r, &dir.join("train_report.json"))?;
            lines.push(format!("train accuracy: {:.4}", r.train_accuracy));
            lines.push(format!("test accuracy: {:.4}", r.test_accuracy));
        }
        None => {
            let acc = nn::accuracy(&p.net, &p.data, p.data.test_indices())?;
            write_rows(&dir.join("accuracy.csv"), &["split", "accuracy"], [vec!["test".into(), acc.to_string()]])?;
            lines.push(format!("test accuracy: {acc:.4}"));
        }
    }
    Ok(CommandSummary { dir, lines })
}

pub fn cmd_baseline(cfg: &RunConfig) -> Result<CommandSummary> {
    let dir = command_dir(cfg, "baseline")?;
    let p = prepare(cfg)?;
    let factory = p.factory(cfg);
    let idx = p.test_index(cfg.explain.instance)?;
    let x = p.data.instance(idx);
    let mut rows = Vec::new();
    for &kind in &cfg.baselines.kinds {
        match factory.build(kind, &x, cfg.seed) {
            Ok(spec) => {
                export_baseline(&spec, &cfg.baselines.params, &dir.join("dumps"), kind.tag())?;
                rows.push([kind.tag().to_string(), spec.entropy.to_string(), String::new()]);
            }
            Err(e) if matches!(e.kind(), crate::ErrorKind::Config) => {
                rows.push([kind.tag().to_string(), String::new(), e.to_string()]);
            }
            Err(e) => return Err(e),
        }
    }
    write_rows(&dir.join("entropy.csv"), &["baseline", "entropy", "error"], fmt_rows(rows))?;
    let bound = (p.net.classes() as f64).ln();
    write_json(
        &serde_json::json!({ "instance": idx, "label": p.data.label(idx), "entropy_bound": bound }),
        &dir.join("instance.json"),
    )?;
    Ok(CommandSummary {
        lines: vec![format!("{} baselines for test instance {idx}; entropy bound {bound:.6}", cfg.baselines.kinds.len())],
        dir,
    })
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<CommandSummary> {
    let dir = command_dir(cfg, "sweep")?;
    let p = prepare(cfg)?;
    let range = p.range();
    let s = &cfg.sweep;
    let loss = s.loss.unwrap_or(if p.mask.is_some() { LossKind::Kl } else { LossKind::Spearman });
    let indices = p.leading_test(s.instances);
    if indices.is_empty() {
        return Err(Error::Config("the sweep needs at least one test instance".into()));
    }
    let instances = indices
        .iter()
        .map(|&i| {
            let x = p.data.instance(i);
            let c = p.net.predict(&x)?;
            Ok((x, c))
        })
        .collect::<Result<Vec<_>>>()?;
    let steps = cfg.explainer.ig_steps;
    let curve = entropy_curve(&p.net, range, s.grid)?;
    write_rows(
        &dir.join("entropy_curve.csv"),
        &["baseline", "entropy"],
        curve.samples.iter().map(|(u, h)| vec![u.to_string(), h.to_string()]),
    )?;
    let (hist, mean_curve) = match &p.mask {
        Some(mask) => {
            let reference = Reference::Mask(mask.clone());
            let mean_curve = mean_baseline_sweep(&p.net, &instances, &reference, range, s.grid, loss, steps)?;
            let hist = min_loss_histogram(&p.net, &instances, |_, _| Ok(reference.clone()), range, s.grid, s.bins, loss, steps)?;
            (hist, Some(mean_curve))
        }
        None => {
            if loss == LossKind::Kl {
                return Err(Error::Config("the KL loss needs toy data with a ground-truth mask".into()));
            }
            let factory = p.factory(cfg);
            let explainer = Explainer::new(&factory, cfg.explainer.clone());
            let wi = p.leading_test(s.hybrid_instances);
            let weights = compute_hybrid_weights(&explainer, &p.data, &wi, &s.hybrid_methods, Fraction::Of(DEFAULT_FRACTION), cfg.seed)?;
            write_json(&weights, &dir.join("hybrid_weights.json"))?;
            let hist = min_loss_histogram(
                &p.net,
                &instances,
                |x, c| hybrid_explain(&explainer, x, c, &s.hybrid_methods, &weights, cfg.seed).map(Reference::Map),
                range,
                s.grid,
                s.bins,
                loss,
                steps,
            )?;
            (hist, None)
        }
    };
    let mut f = fs::File::create(dir.join("histogram.csv"))?;
    hist.write_csv(&mut f)?;
    write_rows(
        &dir.join("argmins.csv"),
        &["instance", "argmin"],
        indices.iter().zip(&hist.argmins).map(|(i, u)| vec![i.to_string(), u.to_string()]),
    )?;
    let (h_u, h_max) = curve.argmax();
    let mut markers = serde_json::json!({
        "loss": loss,
        "entropy_argmax": h_u,
        "entropy_max": h_max,
        "histogram_mode": hist.mode,
        "range_width": range.width(),
    });
    let mut lines = vec![format!("entropy argmax {h_u:.4}; histogram mode {:.4}", hist.mode)];
    if let Some(c) = mean_curve {
        let mut f = fs::File::create(dir.join("loss_curve.csv"))?;
        c.write_csv(&mut f)?;
        let (u, l) = c.argmin();
        markers["loss_argmin"] = u.into();
        markers["loss_min"] = l.into();
        lines.push(format!("mean loss argmin {u:.4}"));
    }
    write_json(&markers, &dir.join("markers.json"))?;
    Ok(CommandSummary { dir, lines })
}

pub fn cmd_invariance(cfg: &RunConfig) -> Result<CommandSummary> {
    let dir = command_dir(cfg, "invariance")?;
    let p = prepare(cfg)?;
    let a = cfg.invariance.amplitude;
    let xs: Vec<TensorF> = p.leading_test(cfg.invariance.instances).into_iter().map(|i| p.data.instance(i)).collect();
    let zero = TensorF::zeros(p.net.input_shape());
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for shape in [ShiftShape::Uniform, ShiftShape::Cross] {
        for policy in [BaselinePolicy::Hold, BaselinePolicy::ShiftWithInput] {
            let shift = ShiftSpec { shape, amplitude: a };
            let tags = [tag_of(&shape), tag_of(&policy)];
            match linear_transform_test(&p.net, &xs, &shift, policy, &zero, cfg.explainer.ig_steps) {
                Ok(r) => {
                    lines.push(format!("{} / {}: max diff {:e}", tags[0], tags[1], r.max_abs_diff));
                    rows.push([
                        tags[0].clone(),
                        tags[1].clone(),
                        r.instances.to_string(),
                        r.max_abs_diff.to_string(),
                        r.max_logit_diff.to_string(),
                        r.invariant.to_string(),
                        String::new(),
                    ]);
                }
                Err(e @ Error::Unsupported(_)) => {
                    lines.push(format!("{} / {}: {e}", tags[0], tags[1]));
                    rows.push([tags[0].clone(), tags[1].clone(), xs.len().to_string(), String::new(), String::new(), String::new(), e.to_string()]);
                }
                Err(e) => return Err(e),
            }
        }
    }
    write_rows(
        &dir.join("invariance.csv"),
        &["shift", "policy", "instances", "max_abs_diff", "max_logit_diff", "invariant", "error"],
        fmt_rows(rows),
    )?;
    let gap = entropy_phase_gap(&p.net, a, p.range(), cfg.invariance.phase_points)?;
    write_json(
        &serde_json::json!({ "amplitude": a, "points": cfg.invariance.phase_points, "max_gap": gap }),
        &dir.join("phase.json"),
    )?;
    lines.push(format!("entropy phase gap {gap:e}"));
    Ok(CommandSummary { dir, lines })
}

fn tag_of<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<CommandSummary> {
    let dir = command_dir(cfg, "evaluate")?;
    let evaluator = cfg.evaluator()?;
    let p = prepare(cfg)?;
    let factory = p.factory(cfg);
    let explainer = Explainer::new(&factory, cfg.explainer.clone());
    let methods = cfg.evaluate.methods.clone().unwrap_or_else(|| all_methods(&cfg.baselines.kinds));
    let indices = p.leading_test(cfg.evaluate.instances);
    let reports = run_matrix(&explainer, &p.data, &indices, &methods, &evaluator, cfg.seed);
    write_matrix(&reports, &dir)?;
    write_json(
        &serde_json::json!({ "evaluator": evaluator.tag(), "instances": indices.len() }),
        &dir.join("metadata.json"),
    )?;
    let lines = reports
        .iter()
        .map(|r| match &r.error {
            Some(e) => format!("{:<24} error: {e}", r.method),
            None => format!("{:<24} median {:.4}  mean {:.4}", r.method, r.median, r.mean),
        })
        .collect();
    Ok(CommandSummary { dir, lines })
}

pub fn cmd_nonconservation(cfg: &RunConfig) -> Result<CommandSummary> {
    let dir = command_dir(cfg, "nonconservation")?;
    let p = prepare(cfg)?;
    let range = p.range();
    let x = p.data.instance(p.test_index(cfg.nonconservation.instance)?);
    let class = p.net.predict(&x)?;
    let factory = p.factory(cfg);
    let mut substitutes = vec![
        ("zero".to_string(), TensorF::zeros(x.shape())),
        ("max_entropy_full".to_string(), factory.max_entropy_full()?.best.clone()),
    ];
    if x.image_dims().is_some() {
        substitutes.push(("blur".into(), factory.build(BaselineKind::Blur, &x, cfg.seed)?.values));
    }
    let lr = cfg.nonconservation.lr_fraction * range.width();
    let mut summary = Vec::new();
    let mut markers = Vec::new();
    let mut lines = Vec::new();
    for target in DemoTarget::ALL {
        let r = nonconservation_demo(&p.net, target, class, &x, cfg.nonconservation.steps, lr, range, &substitutes)?;
        let mut f = fs::File::create(dir.join(format!("trajectory_{}.csv", target.tag())))?;
        r.write_csv(&mut f)?;
        summary.push([target.tag().to_string(), r.trajectory[0].to_string(), r.min_found.to_string()]);
        for m in &r.markers {
            markers.push([target.tag().to_string(), m.name.clone(), m.value.to_string(), m.residue.to_string()]);
        }
        lines.push(format!("{}: start {:.4}, min found {:.4}", target.tag(), r.trajectory[0], r.min_found));
    }
    write_rows(&dir.join("summary.csv"), &["target", "start", "min_found"], fmt_rows(summary))?;
    write_rows(&dir.join("markers.csv"), &["target", "substitute", "value", "residue"], fmt_rows(markers))?;
    Ok(CommandSummary { dir, lines })
}

pub fn cmd_explain(cfg: &RunConfig) -> Result<CommandSummary> {
    let dir = command_dir(cfg, "explain")?;
    let p = prepare(cfg)?;
    let idx = p.test_index(cfg.explain.instance)?;
    let x = p.data.instance(idx);
    let logits = p.net.forward(&x)?;
    let class = p.net.predict(&x)?;
    let factory = p.factory(cfg);
    let explainer = Explainer::new(&factory, cfg.explainer.clone());
    write_tensor_csv(&x, &dir.join("input.csv"))?;
    let mut rows = Vec::new();
    for &m in &cfg.explain.methods {
        let seed = crate::evaluation::instance_seed(cfg.seed, idx);
        let a = explainer.explain(m, &x, class, seed)?;
        let name = m.tag().replace(':', "_");
        write_tensor_csv(&a.values, &dir.join(format!("{name}.csv")))?;
        rows.push([m.tag(), a.values.sum().to_string()]);
    }
    write_rows(&dir.join("methods.csv"), &["method", "attribution_sum"], fmt_rows(rows))?;
    write_json(
        &serde_json::json!({
            "instance": idx,
            "label": p.data.label(idx),
            "predicted": class,
            "logits": logits.data(),
            "probabilities": softmax(logits.data()),
        }),
        &dir.join("prediction.json"),
    )?;
    Ok(CommandSummary {
        lines: vec![format!("test instance {idx}: label {}, predicted {class}", p.data.label(idx))],
        dir,
    })
}
