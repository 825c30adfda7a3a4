use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "vocabdiff", version, about = "Vocabulary difficulty modeling pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate an item table and write it in canonical form.
    Ingest(IngestArgs),
    /// Build the feature matrix for a set of items.
    Features(FeaturesArgs),
    /// Train a gradient-boosted tree model.
    TrainGbt(TrainGbtArgs),
    /// Train the linear token rater with soft or hard targets.
    TrainToy(TrainToyArgs),
    /// Predict scores with a trained model.
    Predict(PredictArgs),
    /// Write per-item SHAP explanations and global importance.
    Explain(ExplainArgs),
    /// Fit or apply a per-language linear stack over prediction files.
    Stack(StackArgs),
    /// Compute RMSE and Pearson correlation per language.
    Eval(EvalArgs),
    /// Simulate the rank-confidence-interval optimum.
    SimulateOptimum(SimulateArgs),
    /// Print a rendered prompt for one item.
    RenderPrompt(RenderArgs),
    /// Derive prompt-based features from a completion endpoint or fixtures.
    DerivePromptFeatures(DeriveArgs),
}

/// `name=path` pair.
#[derive(Debug, Clone, Serialize)]
pub struct Named {
    pub name: String,
    pub path: PathBuf,
}

impl FromStr for Named {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once('=') {
            Some((n, p)) if !n.is_empty() && !p.is_empty() => Ok(Named {
                name: n.to_string(),
                path: PathBuf::from(p),
            }),
            _ => Err(format!("expected NAME=PATH, got `{s}`")),
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct ManifestArg {
    /// Manifest location; defaults to the main output path plus `.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct IngestArgs {
    /// Tab-separated item table.
    #[arg(long)]
    pub items: PathBuf,
    /// Language for tables without an `l1` column.
    #[arg(long)]
    pub l1: Option<String>,
    /// Canonical item table to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also fit and write a score-to-scale map.
    #[arg(long)]
    pub scale_out: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub k: u32,
    #[arg(long, value_enum, default_value_t = ScaleModeArg::Linear)]
    pub scale_mode: ScaleModeArg,
    #[command(flatten)]
    pub common: ManifestArg,
}

#[derive(Args, Debug, Serialize)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub items: PathBuf,
    /// JSON list of feature specifications.
    #[arg(long)]
    pub schema: PathBuf,
    /// Word frequency table, `name=path` (repeatable).
    #[arg(long = "frequency")]
    pub frequency: Vec<Named>,
    /// Word CEFR level table, `name=path` (repeatable).
    #[arg(long = "cefr")]
    pub cefr: Vec<Named>,
    /// Extra numeric word table, `name=path` (repeatable).
    #[arg(long = "numeric")]
    pub numeric: Vec<Named>,
    /// Feature CSV written by `derive-prompt-features`.
    #[arg(long)]
    pub prompt_features: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MultiwordArg::ExactString)]
    pub multiword: MultiwordArg,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: ManifestArg,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainGbtArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Item table providing the gold scores.
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 200)]
    pub n_estimators: usize,
    #[arg(long, default_value_t = 1.0)]
    pub min_child_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Also write out-of-fold predictions.
    #[arg(long)]
    pub oof: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: ManifestArg,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainToyArgs {
    /// Feature CSV; requires `--items`. Omit to use `--synthetic`.
    #[arg(long, requires = "items")]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub items: Option<PathBuf>,
    /// Score-to-scale map; fitted on the items when omitted.
    #[arg(long)]
    pub scale: Option<PathBuf>,
    /// Train on `N` points of the built-in synthetic benchmark.
    #[arg(long, conflicts_with = "features")]
    pub synthetic: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 5000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5.0)]
    pub learning_rate: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Soft)]
    pub loss: LossArg,
    #[arg(long, value_enum, default_value_t = InferenceArg::Weighted)]
    pub inference: InferenceArg,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Non-scale tokens in the output vocabulary.
    #[arg(long, default_value_t = 3)]
    pub distractors: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: ManifestArg,
}

#[derive(Args, Debug, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Prediction TSV (item_id, prediction, flag).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: ManifestArg,
}

#[derive(Args, Debug, Serialize)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Background rows for interventional SHAP; defaults to `--features`.
    #[arg(long)]
    pub background: Option<PathBuf>,
    /// Background rows are thinned evenly to at most this many.
    #[arg(long, default_value_t = 100)]
    pub background_size: usize,
    #[arg(long, value_enum, default_value_t = FlavorArg::Interventional)]
    pub flavor: FlavorArg,
    /// JSON object mapping group names to member features.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Explanations as JSON lines.
    #[arg(long)]
    pub out: PathBuf,
    /// Mean absolute SHAP per feature and group.
    #[arg(long)]
    pub importance: PathBuf,
    /// Static HTML tables for reading.
    #[arg(long)]
    pub html: Option<PathBuf>,
    #[command(flatten)]
    pub common: ManifestArg,
}

#[derive(Args, Debug, Serialize)]
pub struct StackArgs {
    /// Item table with gold scores and languages.
    #[arg(long)]
    pub items: PathBuf,
    /// Prediction TSV used as a stack input, `name=path` (repeatable).
    #[arg(long = "input", required = true)]
    pub inputs: Vec<Named>,
    /// Feature CSV supplying extra input columns.
    #[arg(long, requires = "feature_columns")]
    pub features: Option<PathBuf>,
    /// Comma-separated feature names to add as inputs.
    #[arg(long, value_delimiter = ',')]
    pub feature_columns: Vec<String>,
    /// Apply this stack instead of fitting one.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Average the inputs instead of fitting a linear stack.
    #[arg(long, conflicts_with = "model")]
    pub average: bool,
    /// Fitted stack models (JSON); required unless applying or averaging.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Stacked predictions TSV.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[command(flatten)]
    pub common: ManifestArg,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    /// Prediction TSV.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Item table, or a prediction TSV together with `--l1`.
    #[arg(long)]
    pub gold: PathBuf,
    /// Language for gold files without one.
    #[arg(long)]
    pub l1: Option<String>,
    /// Row label in the report; defaults to the prediction file stem.
    #[arg(long)]
    pub system: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: ManifestArg,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    /// Complete item table used for ranking.
    #[arg(long)]
    pub items: PathBuf,
    /// Items to predict (first column `item_id`); defaults to all items.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// One width for every language instead of the published ones.
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Simulated predictions TSV.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[command(flatten)]
    pub common: ManifestArg,
}

#[derive(Args, Debug, Serialize)]
pub struct RenderArgs {
    #[arg(long)]
    pub template: String,
    #[arg(long)]
    pub items: PathBuf,
    /// Item to render; defaults to the first row.
    #[arg(long)]
    pub item_id: Option<String>,
    /// JSON object of extra placeholder values.
    #[arg(long)]
    pub bindings: Option<PathBuf>,
    /// Items the difficulty examples are drawn from; defaults to `--items`.
    #[arg(long)]
    pub training: Option<PathBuf>,
    /// Write the prompt here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: ManifestArg,
}

#[derive(Args, Debug, Serialize)]
pub struct DeriveArgs {
    #[arg(long)]
    pub items: PathBuf,
    /// Templates to query (repeatable).
    #[arg(long = "template", required = true)]
    pub templates: Vec<String>,
    /// Replay recorded responses from `*.jsonl` files in this directory.
    #[arg(long, conflicts_with = "endpoint")]
    pub fixtures: Option<PathBuf>,
    /// Completion endpoint URL for live requests.
    #[arg(long, required_unless_present = "fixtures")]
    pub endpoint: Option<String>,
    /// Model name sent with live requests.
    #[arg(long, required_unless_present = "fixtures")]
    pub model_name: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
    /// Save live exchanges as `fixtures.jsonl` in this directory.
    #[arg(long, requires = "endpoint")]
    pub record: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    #[arg(long, default_value_t = 5)]
    pub logprobs: u32,
    /// JSON object of extra placeholder values.
    #[arg(long)]
    pub bindings: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Fit the temperature of 1-to-5 prompts against the gold scores.
    #[arg(long)]
    pub fit_temperature: bool,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: ManifestArg,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleModeArg {
    Linear,
    ExpitThenLinear,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiwordArg {
    ExactString,
    FirstToken,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossArg {
    Soft,
    Hard,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceArg {
    Weighted,
    Argmax,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlavorArg {
    Interventional,
    TreePathDependent,
}

/// Input paths a command reads, for the existence check before running.
pub fn input_paths(cmd: &Command) -> Vec<&Path> {
    fn opt(p: &Option<PathBuf>) -> Option<&Path> {
        p.as_deref()
    }
    let mut v: Vec<&Path> = Vec::new();
    match cmd {
        Command::Ingest(a) => v.push(&a.items),
        Command::Features(a) => {
            v.extend([a.items.as_path(), &a.schema]);
            v.extend(a.frequency.iter().chain(&a.cefr).chain(&a.numeric).map(|n| n.path.as_path()));
            v.extend(opt(&a.prompt_features));
        }
        Command::TrainGbt(a) => v.extend([a.features.as_path(), &a.items]),
        Command::TrainToy(a) => v.extend([opt(&a.features), opt(&a.items), opt(&a.scale)].into_iter().flatten()),
        Command::Predict(a) => v.extend([a.model.as_path(), &a.features]),
        Command::Explain(a) => {
            v.extend([a.model.as_path(), &a.features]);
            v.extend([opt(&a.background), opt(&a.groups)].into_iter().flatten());
        }
        Command::Stack(a) => {
            v.push(&a.items);
            v.extend(a.inputs.iter().map(|n| n.path.as_path()));
            v.extend([opt(&a.features), opt(&a.model)].into_iter().flatten());
        }
        Command::Eval(a) => v.extend([a.predictions.as_path(), &a.gold]),
        Command::SimulateOptimum(a) => {
            v.push(&a.items);
            v.extend(opt(&a.eval));
        }
        Command::RenderPrompt(a) => {
            v.push(&a.items);
            v.extend([opt(&a.bindings), opt(&a.training)].into_iter().flatten());
        }
        Command::DerivePromptFeatures(a) => {
            v.push(&a.items);
            v.extend([opt(&a.fixtures), opt(&a.bindings)].into_iter().flatten());
        }
    }
    v
}
