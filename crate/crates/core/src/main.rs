use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use repalign::analysis::{self, layer_brain_meta, meta_to_table};
use repalign::forge::{self, CalibrationConfig, ForgeConfig};
use repalign::pipeline::{self, PipelineError, RunConfig};
use repalign::repsim::{build_rdm, rsa, Rdm};
use repalign::saliency;
use repalign::tensorio::{
    load_feature_matrix, load_manifest, read_score_table, save_feature_matrix, write_score_table, ScoreRow,
    ScoreTable,
};

type CliResult = Result<ExitCode, PipelineError>;

#[derive(Parser)]
#[command(name = "repalign", version, about = "Representational alignment of layers and brain regions with saliency and semantics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compute saliency maps for a manifest and save them as a feature matrix.
    Saliency {
        #[arg(long)]
        manifest: PathBuf,
        /// Output `.npy`; ids go to the `.ids.txt` sidecar.
        #[arg(long)]
        out: PathBuf,
        /// Also write one grayscale PNG per map into this directory.
        #[arg(long)]
        heatmaps: Option<PathBuf>,
        #[arg(long, default_value = "localmax")]
        variant: String,
    },
    /// Build the cosine-distance RDM of a feature matrix.
    Rdm {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spearman RSA between two saved RDMs.
    Rsa {
        #[arg(long)]
        rdm_a: PathBuf,
        #[arg(long)]
        rdm_b: PathBuf,
        /// Append the score to this CSV (created when missing).
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, default_value = "cli")]
        system: String,
        #[arg(long, default_value = "rdm_a")]
        unit: String,
        #[arg(long, default_value = "rsa")]
        metric: String,
    },
    /// Calibrate thresholds and build the distractor dataset.
    Forge {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1150)]
        n_targets: usize,
        #[arg(long, default_value_t = 200)]
        retry_budget: usize,
        #[arg(long, default_value_t = 1000)]
        saliency_pairs: usize,
        #[arg(long, default_value_t = 5000)]
        caption_items: usize,
    },
    /// RSA between ROI responses and a target RDM.
    Brain {
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        target_rdm: PathBuf,
        #[arg(long, default_value = "subj")]
        subject: String,
        #[arg(long, default_value = "ROI")]
        roi: String,
    },
    /// Correlate per-layer semantics and saliency RSA with brain scores.
    Meta {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = analysis::DEFAULT_PERMUTATIONS)]
        n_perm: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the correlations as score rows.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multi-label top-5 accuracy of a predictions file.
    Top5 {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Bin means, raw values and SVG charts from a score table.
    Report {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        bins: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = pipeline::init_workers() {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Run { config } => run(&config),
        Command::Saliency {
            manifest,
            out,
            heatmaps,
            variant,
        } => saliency_cmd(&manifest, &out, heatmaps.as_deref(), &variant),
        Command::Rdm { features, out } => {
            let rdm = build_rdm(&load_feature_matrix(&features, None)?)?;
            rdm.save(&out)?;
            println!("{} items -> {}", rdm.n(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Rsa {
            rdm_a,
            rdm_b,
            scores,
            system,
            unit,
            metric,
        } => {
            let a = Rdm::load(&rdm_a)?;
            let b = Rdm::load(&rdm_b)?;
            let b = b.select(a.items())?;
            let s = rsa(&a, &b)?;
            println!("rho={} n_pairs={}", s.rho, s.n_pairs);
            if let Some(path) = scores {
                let mut table = if path.exists() {
                    read_score_table(&path)?
                } else {
                    ScoreTable::new()
                };
                table.push(ScoreRow {
                    system,
                    unit,
                    unit_index: 0,
                    condition: repalign::metrics::BASELINE.into(),
                    metric,
                    value: s.rho,
                    n_items: a.n() as u64,
                    seed: 0,
                })?;
                write_score_table(&table, &path)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Forge {
            manifest,
            embeddings,
            seed,
            out,
            n_targets,
            retry_budget,
            saliency_pairs,
            caption_items,
        } => {
            let manifest = load_manifest(&manifest)?;
            let emb = load_feature_matrix(&embeddings, None)?;
            let cal = CalibrationConfig {
                n_saliency_pairs: saliency_pairs,
                n_caption_items: caption_items.min(emb.n_items()),
                target_pool: Some(n_targets.min(manifest.len())),
            };
            let sal = saliency::SaliencyConfig::default();
            let thresholds = forge::calibrate_thresholds(&manifest, &emb, &cal, &sal, seed)?;
            let cfg = ForgeConfig {
                n_targets,
                retry_budget,
                seed,
                saliency: sal,
            };
            let result = forge::build_dataset(&manifest, &emb, &thresholds, &cfg, &out)?;
            println!("{} images written to {}", result.records.len(), out.display());
            for (id, n) in &result.exhausted {
                eprintln!("skipped target {id} after {n} draws");
            }
            Ok(if result.exhausted.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(4)
            })
        }
        Command::Brain {
            responses,
            target_rdm,
            subject,
            roi,
        } => {
            let target = Rdm::load(&target_rdm)?;
            let resp = load_feature_matrix(&responses, None)?;
            let ids: Vec<String> = target
                .items()
                .iter()
                .filter(|id| resp.items().contains(id))
                .cloned()
                .collect();
            let target = target.select(&ids)?;
            let s = analysis::brain_rsa(&resp, &target, &subject, &roi)?;
            println!("subject={} roi={} rho={} n_items={}", s.subject, s.roi, s.rho, s.n_items);
            Ok(ExitCode::SUCCESS)
        }
        Command::Meta {
            scores,
            n_perm,
            seed,
            out,
        } => {
            let table = read_score_table(&scores)?;
            let meta = layer_brain_meta(&table, n_perm, seed)?;
            for m in &meta {
                println!(
                    "{} {}: r={} p={} n={}",
                    m.predictor.name(),
                    m.subset.name(),
                    m.r,
                    m.p_value,
                    m.n
                );
            }
            if let Some(path) = out {
                write_score_table(&meta_to_table(&meta, seed)?, &path)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Top5 { preds, manifest } => {
            let p = analysis::load_predictions(&preds)?;
            let m = load_manifest(&manifest)?;
            println!("{}", analysis::top5_accuracy(&p, &m)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { scores, out, bins } => {
            let table = read_score_table(&scores)?;
            for f in pipeline::report(&table, bins, &out)? {
                println!("{}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run(config: &Path) -> CliResult {
    let out = pipeline::run(config)?;
    let dir = RunConfig::load(config)?.output_dir;
    println!("{} score rows -> {}", out.table.len(), dir.join(pipeline::SCORES_FILE).display());
    if out.is_partial() {
        for s in &out.skipped {
            eprintln!("skipped: {s}");
        }
        return Ok(ExitCode::from(4));
    }
    Ok(ExitCode::SUCCESS)
}

fn saliency_cmd(manifest: &Path, out: &Path, heatmaps: Option<&Path>, variant: &str) -> CliResult {
    let cfg = pipeline::saliency_variant(variant)?;
    let m = load_manifest(manifest)?;
    let jobs: Vec<(String, &Path)> = m
        .entries
        .iter()
        .map(|e| (e.image_id.clone(), e.image_path.as_path()))
        .collect();
    let maps = saliency::compute_saliency_batch(&jobs, &cfg)?;
    if let Some(dir) = heatmaps {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::Data(format!("{}: {e}", dir.display())))?;
        for map in &maps {
            map.save_png(&dir.join(format!("{}.png", map.image_id)))?;
        }
    }
    let fm = saliency::maps_to_feature_matrix(&maps, &cfg.variant_tag())?;
    save_feature_matrix(out, &fm)?;
    println!("{} maps -> {}", maps.len(), out.display());
    Ok(ExitCode::SUCCESS)
}
