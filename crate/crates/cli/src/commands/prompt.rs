use std::path::Path;
use std::time::Duration;

use vocabdiff::data_model::{fit_scale, ScaleMap, ScaleMode, TestItem};
use vocabdiff::features::{write_feature_csv, FeatureRow};
use vocabdiff::prompting::{
    ambiguity_examples_es, calque_v1_examples, complete_all, difficulty_examples, digit_position,
    feature_from_rating_prompt, render, scale_logprobs, solve_example_de, spelling_index, trickiness, Bindings,
    CompletionClient, CompletionRequest, FixtureClient, FixtureRecord, HttpClient, LogProbResponse, RatingScale,
    RecordingClient, TemplateId,
};
use vocabdiff::soft_target::{default_temperature_grid, fit_gscale_temperature, gscale};

use crate::args::{DeriveArgs, RenderArgs};
use crate::failure::{internal, user, At, CliResult};
use crate::output::{manifest_path, print_stdout, Run};
use crate::tables::read_items;

/// Built-in example bindings, overridden by a user bindings file.
fn load_bindings(run: &mut Run, path: Option<&Path>) -> CliResult<Bindings> {
    let mut b = ambiguity_examples_es();
    b.extend(calque_v1_examples());
    b.insert("solve_example".into(), solve_example_de());
    if let Some(p) = path {
        let user_bindings: Bindings = run.read_json(p)?;
        b.extend(user_bindings);
    }
    Ok(b)
}

fn item_bindings(id: TemplateId, item: &TestItem, base: &Bindings, training: &[TestItem], scale: Option<&ScaleMap>) -> CliResult<Bindings> {
    let mut b = base.clone();
    if id == TemplateId::Difficulty && !b.contains_key("examples") {
        let scale = scale.ok_or_else(|| user("difficulty examples need at least two distinct gold scores"))?;
        let ex = difficulty_examples(training, item, scale).at(&item.item_id)?;
        b.insert("examples".into(), ex);
    }
    Ok(b)
}

fn training_scale(items: &[TestItem]) -> Option<ScaleMap> {
    let gold: Vec<f64> = items.iter().map(|i| i.gold_score).collect();
    fit_scale(&gold, 5, ScaleMode::Linear).ok()
}

pub fn render_prompt(a: &RenderArgs) -> CliResult<()> {
    let mut run = Run::new("render-prompt");
    let id: TemplateId = a.template.parse().at("--template")?;
    let items = read_items(&mut run, &a.items, None)?;
    let item = match &a.item_id {
        Some(want) => items
            .iter()
            .find(|i| &i.item_id == want)
            .ok_or_else(|| user(format!("no item `{want}` in `{}`", a.items.display())))?,
        None => items
            .first()
            .ok_or_else(|| user(format!("`{}` has no items", a.items.display())))?,
    };
    let base = load_bindings(&mut run, a.bindings.as_deref())?;
    let training = match &a.training {
        Some(p) => read_items(&mut run, p, None)?,
        None => items.clone(),
    };
    let scale = training_scale(&training);
    let bindings = item_bindings(id, item, &base, &training, scale.as_ref())?;
    let text = render(id, item, &bindings).at(id)?;

    match &a.out {
        Some(path) => run.write(path, text.as_bytes())?,
        None => print_stdout(&format!("{text}\n"))?,
    }
    run.note("item_id", &item.item_id);
    run.note("fixture_key", vocabdiff::prompting::fixture_key(id, &text));
    run.finish(a, None, &manifest_path(&a.common.manifest, a.out.as_deref(), "render-prompt"))
}

enum Client {
    Replay(FixtureClient),
    Live(HttpClient),
    Recording(RecordingClient<HttpClient>),
}

impl Client {
    fn as_dyn(&self) -> &dyn CompletionClient {
        match self {
            Client::Replay(c) => c,
            Client::Live(c) => c,
            Client::Recording(c) => c,
        }
    }
}

fn load_fixtures(run: &mut Run, dir: &Path) -> CliResult<FixtureClient> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| user(format!("cannot list `{}`: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut records = Vec::new();
    for f in &files {
        let text = run.read_text(f)?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: FixtureRecord = serde_json::from_str(line)
                .map_err(|e| user(format!("{} line {}: {e}", f.display(), i + 1)))?;
            records.push(rec);
        }
    }
    Ok(FixtureClient::from_records(records))
}

fn max_tokens(id: TemplateId) -> u32 {
    match id {
        TemplateId::Spelling => 6,
        TemplateId::TrickShort | TemplateId::TrickLong => 8,
        _ => 1,
    }
}

/// Log-probabilities over the 1..5 points for one response.
fn rating_logprobs(id: TemplateId, response: &LogProbResponse, item: &TestItem) -> vocabdiff::Result<Vec<f64>> {
    let candidates = match id {
        TemplateId::Spelling => digit_position(response, spelling_index(&item.l1)?)?,
        _ => &response.first_token_candidates,
    };
    scale_logprobs(candidates, RatingScale::OneToFive)
}

pub fn derive_prompt_features(a: &DeriveArgs) -> CliResult<()> {
    let mut run = Run::new("derive-prompt-features");
    let items = read_items(&mut run, &a.items, None)?;
    let mut templates = Vec::new();
    for t in &a.templates {
        let id: TemplateId = t.parse().at("--template")?;
        let usable = id.rating_scale().is_some() || matches!(id, TemplateId::TrickShort | TemplateId::TrickLong);
        if !usable {
            return Err(user(format!("template `{id}` does not yield a feature")));
        }
        if !templates.contains(&id) {
            templates.push(id);
        }
    }
    let base = load_bindings(&mut run, a.bindings.as_deref())?;
    let scale = training_scale(&items);

    let client = match (&a.fixtures, &a.endpoint) {
        (Some(dir), _) => Client::Replay(load_fixtures(&mut run, dir)?),
        (None, Some(url)) => {
            let model = a.model_name.as_deref().ok_or_else(|| user("--endpoint needs --model-name"))?;
            let http = HttpClient::new(url, model, a.api_key_env.as_deref(), Duration::from_secs(a.timeout_secs))
                .at("--endpoint")?;
            if a.record.is_some() {
                Client::Recording(RecordingClient::new(http))
            } else {
                Client::Live(http)
            }
        }
        (None, None) => return Err(user("give --fixtures or --endpoint")),
    };

    let mut columns: Vec<(TemplateId, Vec<f64>)> = Vec::new();
    let mut temperatures = std::collections::BTreeMap::new();
    for &id in &templates {
        let requests = items
            .iter()
            .map(|item| {
                let b = item_bindings(id, item, &base, &items, scale.as_ref())?;
                Ok(CompletionRequest {
                    template: id,
                    prompt: render(id, item, &b).at(format!("{id} for `{}`", item.item_id))?,
                    max_tokens: max_tokens(id),
                    logprobs: a.logprobs,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let responses = complete_all(client.as_dyn(), &requests, a.max_in_flight)
            .into_iter()
            .zip(&items)
            .map(|(r, item)| r.at(format!("{id} for `{}`", item.item_id)))
            .collect::<CliResult<Vec<_>>>()?;

        let values = match id.rating_scale() {
            None => responses.iter().zip(&items).map(|(r, i)| trickiness(r, i)).collect(),
            Some(RatingScale::Binary) => {
                temperatures.insert(id.to_string(), a.temperature);
                feature_from_rating_prompt(&responses, RatingScale::Binary, a.temperature).at(id)?
            }
            Some(RatingScale::OneToFive) => {
                let lps = responses
                    .iter()
                    .zip(&items)
                    .map(|(r, i)| rating_logprobs(id, r, i).at(format!("{id} for `{}`", i.item_id)))
                    .collect::<CliResult<Vec<_>>>()?;
                let tokens = RatingScale::OneToFive.tokens();
                let t = if a.fit_temperature {
                    let scale = scale.as_ref().ok_or_else(|| user("temperature fitting needs distinct gold scores"))?;
                    // higher gold means easier, higher rating means harder
                    let targets: Vec<f64> = items.iter().map(|i| 6.0 - scale.to_scale(i.gold_score)).collect();
                    fit_gscale_temperature(&lps, &targets, a.folds, &tokens, &default_temperature_grid()).at(id)?
                } else {
                    a.temperature
                };
                temperatures.insert(id.to_string(), t);
                lps.iter().map(|lp| gscale(lp, t, &tokens)).collect::<vocabdiff::Result<_>>().at(id)?
            }
        };
        columns.push((id, values));
    }

    let rows: Vec<FeatureRow> = items
        .iter()
        .enumerate()
        .map(|(k, item)| FeatureRow {
            item_id: item.item_id.clone(),
            values: columns.iter().map(|(id, v)| (id.to_string(), Some(v[k]))).collect(),
        })
        .collect();
    let mut buf = Vec::new();
    write_feature_csv(&mut buf, &rows).map_err(internal)?;
    run.write(&a.out, &buf)?;
    if let (Client::Recording(rec), Some(dir)) = (&client, &a.record) {
        let mut out = Vec::new();
        rec.write_jsonl(&mut out).map_err(internal)?;
        run.write(&dir.join("fixtures.jsonl"), &out)?;
    }
    run.note("temperatures", temperatures);
    run.note("mode", if a.fixtures.is_some() { "replay" } else { "live" });
    run.finish(a, None, &manifest_path(&a.common.manifest, Some(&a.out), "derive-prompt-features"))
}
