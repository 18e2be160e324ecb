use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use hgx_core::autodiff::save_checkpoint;
use hgx_core::dataset::{convert, features_to_csv, load_dataset_dir, parse_labels, read_features_csv};
use hgx_core::hypergraph::{clique_expansion_adjacency, clique_expansion_incidence, read_hg, serialize_hg, stats};
use hgx_core::propagation::{HnhnNormalizer, HnhnParams, PropagationRule};
use hgx_core::reproduce::{self, ReproduceOptions, Target, GRADCHECK_LAYERS, GRADCHECK_TOLERANCE};
use hgx_core::train::{run_experiment, run_experiment_with_params, synth_gaussian_features, TrainConfig};
use hgx_core::Error;

use crate::star::{parse_star_text, to_star_text};
use crate::{Cli, Command, ConvertKind, Rule};

/// Error kind, message and exit code for a failure.
pub fn classify(err: &anyhow::Error) -> (&'static str, String, u8) {
    if let Some(e) = err.downcast_ref::<Error>() {
        // Library errors already embed their source in the message.
        return (e.kind(), e.to_string(), if e.is_input_error() { 2 } else { 3 });
    }
    let message = format!("{err:#}");
    if err.downcast_ref::<std::io::Error>().is_some() {
        return ("IoError", message, 2);
    }
    ("Internal", message, 3)
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let seed = cli.seed;
    match cli.command {
        Command::Stats { input, json } => cmd_stats(&input, json)?,
        Command::Convert { kind, input, out } => cmd_convert(kind, &input, out.as_deref())?,
        Command::Propagate {
            hg,
            features,
            rule,
            steps,
            order,
            p,
            alpha,
            beta,
            header,
            out,
        } => {
            let hg = read_hg(&hg)?;
            let x = read_features_csv(&features, header)?;
            let order = || {
                order.or_else(|| hg.uniform_order()).ok_or_else(|| {
                    Error::InvalidConfig("hypergraph is not uniform; pass --order".into())
                })
            };
            let rule = match rule {
                Rule::CePropH => PropagationRule::CePropH,
                Rule::CePropA => PropagationRule::CePropA,
                Rule::ZProp => PropagationRule::ZProp { order: order()? },
                Rule::HProp => PropagationRule::HProp { order: order()? },
                Rule::Hgnn => PropagationRule::Hgnn,
                Rule::Hcha => PropagationRule::Hcha,
                Rule::Hnhn => PropagationRule::Hnhn(HnhnParams {
                    alpha,
                    beta,
                    normalizer: HnhnNormalizer::NodeDegree,
                }),
                Rule::Hypergcn => PropagationRule::HyperGcn,
                Rule::Hypersage => PropagationRule::HyperSage { p },
            };
            let y = rule.iterate(&hg, &x, steps)?;
            emit(out.as_deref(), &features_to_csv(&y))?;
        }
        Command::SynthFeatures {
            labels,
            classes,
            sigma,
            dim,
            out,
        } => {
            let text = fs::read_to_string(&labels).map_err(|e| Error::Io {
                path: labels.clone(),
                source: e,
            })?;
            let labels = parse_labels(&text, &labels.display().to_string(), classes)?;
            let classes = classes.unwrap_or_else(|| labels.iter().max().map_or(0, |&c| c + 1));
            let x = synth_gaussian_features(&labels, classes, dim, sigma, seed.unwrap_or(0))?;
            emit(out.as_deref(), &features_to_csv(&x))?;
        }
        Command::Train {
            config,
            jobs,
            out,
            save_params,
        } => cmd_train(&config, seed, jobs, out.as_deref(), save_params.as_deref())?,
        Command::Reproduce {
            target,
            data,
            cora,
            jobs,
            json,
        } => return cmd_reproduce(&target, data, cora, seed, jobs, json),
        Command::Gradcheck { layer, seeds, json } => return cmd_gradcheck(&layer, seed.unwrap_or(0), seeds, json),
    }
    Ok(ExitCode::SUCCESS)
}

/// Writes to `out`, or stdout when absent.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn required_out(out: Option<&Path>, what: &str) -> Result<PathBuf> {
    out.map(Path::to_path_buf)
        .ok_or_else(|| Error::InvalidConfig(format!("{what} needs --out <dir>")).into())
}

fn cmd_stats(input: &Path, json: bool) -> Result<()> {
    let (hg, extra) = if input.is_dir() {
        let bundle = load_dataset_dir(input)?;
        let extra = serde_json::json!({
            "name": bundle.name,
            "features": bundle.feature_dim(),
            "classes": bundle.num_classes,
        });
        (bundle.hypergraph, Some(extra))
    } else {
        (read_hg(input)?, None)
    };
    let s = stats(&hg);
    if json {
        let mut value = serde_json::to_value(&s)?;
        if let (Some(obj), Some(extra)) = (value.as_object_mut(), extra) {
            obj.insert("dataset".into(), extra);
        }
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        println!("{}", s.to_table());
        if let Some(extra) = extra {
            let features = extra["features"].as_u64().map_or_else(|| "none".into(), |f| f.to_string());
            println!("features   {features}");
            println!("classes    {}", extra["classes"]);
        }
    }
    Ok(())
}

fn cmd_convert(kind: ConvertKind, input: &Path, out: Option<&Path>) -> Result<()> {
    match kind {
        ConvertKind::ZooUci => convert::read_zoo_uci(input)?.write_dir(&required_out(out, "zoo-uci")?)?,
        ConvertKind::CoraLinqs => convert::read_cora_linqs(input)?.write_dir(&required_out(out, "cora-linqs")?)?,
        ConvertKind::ToStar => emit(out, &to_star_text(&read_hg(input)?))?,
        ConvertKind::FromStar => {
            let text = fs::read_to_string(input).map_err(|e| Error::Io {
                path: input.to_path_buf(),
                source: e,
            })?;
            let hg = parse_star_text(&text, &input.display().to_string())?;
            emit(out, &serialize_hg(&hg))?;
        }
        ConvertKind::CeAdj => emit(out, &features_to_csv(&clique_expansion_adjacency(&read_hg(input)?)))?,
        ConvertKind::CeInc => emit(out, &features_to_csv(&clique_expansion_incidence(&read_hg(input)?)))?,
        ConvertKind::Hg => emit(out, &serialize_hg(&read_hg(input)?))?,
    }
    Ok(())
}

fn cmd_train(config: &Path, seed: Option<u64>, jobs: usize, out: Option<&Path>, save: Option<&Path>) -> Result<()> {
    let mut cfg = TrainConfig::read(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let data = cfg.dataset.load()?;
    let result = match save {
        None => run_experiment(&cfg, &data, jobs)?,
        Some(stem) => {
            let (result, trained) = run_experiment_with_params(&cfg, &data, jobs)?;
            let name = stem.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            for run in &trained {
                let path = stem.with_file_name(format!("{name}-run{}", run.record.run));
                save_checkpoint(&run.params, run.record.seed, &result.config_hash, &path)?;
            }
            result
        }
    };
    let json = serde_json::to_string_pretty(&result)?;
    match out {
        Some(path) => {
            emit(Some(path), &json)?;
            let std = result.std.map_or_else(String::new, |s| format!(" ± {s:.4}"));
            println!(
                "{} on {}: test accuracy {:.4}{std} over {} runs",
                result.model,
                result.dataset,
                result.mean,
                result.runs.len()
            );
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_reproduce(
    target: &str,
    data: PathBuf,
    cora: Option<PathBuf>,
    seed: Option<u64>,
    jobs: usize,
    json: bool,
) -> Result<ExitCode> {
    let target = Target::parse(target).ok_or_else(|| {
        let names: Vec<_> = Target::ALL.iter().map(|t| t.name()).collect();
        Error::InvalidConfig(format!("unknown target {target:?}; expected one of {}", names.join(", ")))
    })?;
    let mut opts = ReproduceOptions::new(data);
    opts.cora_dir = cora;
    opts.seed = seed.unwrap_or(0);
    opts.jobs = jobs.max(1);
    let reports = reproduce::run_target(target, &opts);
    if json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    } else {
        for r in &reports {
            println!("{}", r.line());
        }
    }
    Ok(if reports.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_gradcheck(layers: &[String], seed: u64, seeds: u64, json: bool) -> Result<ExitCode> {
    let selected: Vec<&str> = if layers.is_empty() {
        GRADCHECK_LAYERS.to_vec()
    } else {
        layers
            .iter()
            .map(|l| {
                GRADCHECK_LAYERS
                    .iter()
                    .copied()
                    .find(|k| k.eq_ignore_ascii_case(l))
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown layer {l:?}; expected one of {GRADCHECK_LAYERS:?}")))
            })
            .collect::<Result<_, _>>()?
    };
    let mut rows = Vec::new();
    let mut ok = true;
    for kind in selected {
        let (mut worst, mut excess, mut entries, mut kinks) = (0.0f64, 0.0f64, 0, 0);
        for s in 0..seeds {
            let r = reproduce::gradcheck_layer(kind, seed.wrapping_add(s))?;
            worst = worst.max(r.max_raw_rel_err);
            excess = excess.max(r.max_rel_err);
            entries += r.entries_checked;
            kinks += r.kinks;
        }
        let passed = worst < GRADCHECK_TOLERANCE;
        ok &= passed;
        rows.push(serde_json::json!({
            "layer": kind,
            "passed": passed,
            "max_rel_err": worst,
            "max_excess_rel_err": excess,
            "entries": entries,
            "kinks": kinks,
        }));
        if !json {
            println!(
                "{} {kind:<18} max rel-err {worst:.2e} over {entries} entries ({kinks} near a kink, {excess:.1e} beyond rounding)",
                if passed { "PASS" } else { "FAIL" }
            );
        }
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
