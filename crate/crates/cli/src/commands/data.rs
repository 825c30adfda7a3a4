use std::collections::{BTreeMap, HashMap};

use vocabdiff::data_model::{fit_scale, write_items, ScaleMode};
use vocabdiff::features::{
    assemble, read_cefr_table, read_numeric_table, write_feature_csv, FeatureSpec, FrequencyTable,
    MultiwordLookup, PromptValues, Resources,
};

use crate::args::{FeaturesArgs, IngestArgs, MultiwordArg, ScaleModeArg};
use crate::failure::{internal, user, At, CliResult};
use crate::output::{manifest_path, Run};
use crate::tables::{parse_language, read_features, read_items};

pub fn scale_mode(m: ScaleModeArg) -> ScaleMode {
    match m {
        ScaleModeArg::Linear => ScaleMode::Linear,
        ScaleModeArg::ExpitThenLinear => ScaleMode::ExpitThenLinear,
    }
}

pub fn ingest(a: &IngestArgs) -> CliResult<()> {
    let mut run = Run::new("ingest");
    let l1 = parse_language(&a.l1)?;
    let items = read_items(&mut run, &a.items, l1.as_ref())?;
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = items.iter().find(|i| !seen.insert(i.item_id.as_str())) {
        return Err(user(format!("duplicate item id `{}`", dup.item_id)));
    }

    let mut buf = Vec::new();
    write_items(&mut buf, &items).at(a.out.display())?;
    run.write(&a.out, &buf)?;
    if let Some(path) = &a.scale_out {
        let golds: Vec<f64> = items.iter().map(|i| i.gold_score).collect();
        let scale = fit_scale(&golds, a.k, scale_mode(a.scale_mode)).at("scale")?;
        run.write_json(path, &scale)?;
    }

    let mut per_l1: BTreeMap<String, usize> = BTreeMap::new();
    for i in &items {
        *per_l1.entry(i.l1.code().to_string()).or_default() += 1;
    }
    run.note("items", items.len());
    run.note("items_per_l1", per_l1);
    run.finish(a, None, &manifest_path(&a.common.manifest, Some(&a.out), "ingest"))
}

pub fn features(a: &FeaturesArgs) -> CliResult<()> {
    let mut run = Run::new("features");
    let items = read_items(&mut run, &a.items, None)?;
    let schema: Vec<FeatureSpec> = run.read_json(&a.schema)?;

    let mut res = Resources {
        multiword: match a.multiword {
            MultiwordArg::ExactString => MultiwordLookup::ExactString,
            MultiwordArg::FirstToken => MultiwordLookup::FirstToken,
        },
        ..Resources::default()
    };
    for n in &a.frequency {
        let bytes = run.read(&n.path)?;
        let table = FrequencyTable::from_tsv(&n.name, bytes.as_slice(), None).at(n.path.display())?;
        res.frequency.insert(n.name.clone(), table);
    }
    for n in &a.cefr {
        let bytes = run.read(&n.path)?;
        res.cefr.insert(n.name.clone(), read_cefr_table(bytes.as_slice()).at(n.path.display())?);
    }
    for n in &a.numeric {
        let bytes = run.read(&n.path)?;
        res.numeric.insert(n.name.clone(), read_numeric_table(bytes.as_slice()).at(n.path.display())?);
    }

    let mut prompts = PromptValues::new();
    if let Some(path) = &a.prompt_features {
        for row in read_features(&mut run, path)? {
            for (key, v) in row.values {
                let col: &mut HashMap<String, f64> = prompts.entry(key).or_default();
                if let Some(v) = v {
                    col.insert(row.item_id.clone(), v);
                }
            }
        }
    }

    let assembled = assemble(&items, &schema, &res, &prompts).at("features")?;
    let mut buf = Vec::new();
    write_feature_csv(&mut buf, &assembled.rows).map_err(internal)?;
    run.write(&a.out, &buf)?;
    run.note("rows", assembled.rows.len());
    run.note("missing_rates", &assembled.missing_rates);
    run.finish(a, None, &manifest_path(&a.common.manifest, Some(&a.out), "features"))
}
