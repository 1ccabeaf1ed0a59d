//! `generate`: schema -> org -> calendars -> conflict datasets.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use calconf_core::calendar_gen::{generate_regular_calendar, Calendar};
use calconf_core::conflict_gen::ConflictGenerator;
use calconf_core::org_schema::{builtin_schema, default_plan, instantiate_org, load_schema, SizePlan, BUILTIN_SCHEMAS};
use calconf_core::{ConflictDataset, OrgSchema, UserProfile};
use rayon::prelude::*;

use crate::config::{required, GenerateConfig};
use crate::error::{Classify, CliError, CliResult};
use crate::layout;
use crate::manifest::{write_json, Manifest};

#[derive(Debug, Clone)]
pub struct GenerateSummary {
    pub out: PathBuf,
    pub users: Vec<String>,
    pub total_rounds: usize,
}

fn resolve_schema(spec: &str) -> CliResult<OrgSchema> {
    if BUILTIN_SCHEMAS.contains(&spec) {
        return builtin_schema(spec).data_err();
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(CliError::usage(anyhow!(
            "schema {spec:?} is neither a builtin ({}) nor an existing file",
            BUILTIN_SCHEMAS.join(", ")
        )));
    }
    load_schema(path).with_context(|| format!("schema stage: {spec}")).data_err()
}

fn resolve_plan(cfg: &GenerateConfig) -> CliResult<SizePlan> {
    match &cfg.plan {
        Some(p) => p.parse::<SizePlan>().map_err(|e| CliError::usage(anyhow!("--plan: {e}"))),
        None => default_plan(&cfg.schema)
            .ok_or_else(|| CliError::usage(anyhow!("--plan is required for schema {:?}", cfg.schema))),
    }
}

fn select_users(cfg: &GenerateConfig, profiles: Vec<UserProfile>) -> CliResult<Vec<UserProfile>> {
    if !cfg.user_ids.is_empty() {
        return cfg
            .user_ids
            .iter()
            .map(|id| {
                profiles
                    .iter()
                    .find(|p| &p.user_id == id)
                    .cloned()
                    .ok_or_else(|| CliError::usage(anyhow!("unknown user id {id:?}")))
            })
            .collect();
    }
    match cfg.users {
        Some(n) if n > profiles.len() => Err(CliError::usage(anyhow!(
            "--users {n} exceeds the {} members of the org",
            profiles.len()
        ))),
        Some(n) => Ok(profiles.into_iter().take(n).collect()),
        None => Ok(profiles),
    }
}

pub fn generate(cfg: &GenerateConfig) -> CliResult<GenerateSummary> {
    let out = &required(&cfg.out, "out").usage_err()?;
    let params = cfg.conflict_params();
    params.validate().usage_err()?;
    let schema = resolve_schema(&cfg.schema)?;
    let plan = resolve_plan(cfg)?;
    let (org, profiles) = instantiate_org(&schema, &plan, cfg.seed).context("org stage").data_err()?;
    let profiles = select_users(cfg, profiles)?;
    if profiles.is_empty() {
        return Err(CliError::usage(anyhow!("no users selected")));
    }
    let generator = ConflictGenerator::new(&org, &schema.adhoc_templates, params);
    let built: Vec<(Calendar, ConflictDataset)> = profiles
        .par_iter()
        .map(|p| {
            let cal = generate_regular_calendar(p, &org, cfg.year, cfg.seed)
                .with_context(|| format!("calendar stage, user {}", p.user_id))?;
            let ds = generator
                .build_user_dataset(p, &cal, cfg.seed)
                .with_context(|| format!("conflict stage, user {}", p.user_id))?;
            Ok((cal, ds))
        })
        .collect::<anyhow::Result<_>>()
        .data_err()?;

    // Paths stay out of the manifest so identical inputs give identical bytes.
    let recorded = GenerateConfig {
        out: None,
        ..cfg.clone()
    };
    let mut manifest = Manifest::new("generate", Some(cfg.seed), serde_json::to_value(&recorded).data_err()?);
    let mut put = |rel: &str, value: &dyn erased::Json| -> CliResult<()> {
        let path = out.join(rel);
        value.write(&path).data_err()?;
        manifest.record(out, &path).data_err()
    };
    put(layout::SCHEMA, &schema)?;
    put(layout::ORG, &org)?;
    put(layout::PROFILES, &profiles)?;
    for (cal, ds) in &built {
        let (public, truth) = ds.split();
        put(&layout::calendar(&ds.user_id), cal)?;
        put(&layout::dataset(&ds.user_id), &public)?;
        put(&layout::truth(&ds.user_id), &truth)?;
    }
    manifest.write(out).data_err()?;
    Ok(GenerateSummary {
        out: out.to_path_buf(),
        users: built.iter().map(|(_, d)| d.user_id.clone()).collect(),
        total_rounds: built.iter().map(|(_, d)| d.n()).sum(),
    })
}

/// Lets one closure write values of different types.
mod erased {
    use super::*;

    pub trait Json {
        fn write(&self, path: &Path) -> anyhow::Result<()>;
    }

    impl<T: serde::Serialize> Json for T {
        fn write(&self, path: &Path) -> anyhow::Result<()> {
            write_json(path, self)
        }
    }
}
