use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use c4net::harness::ablate::{parse_modes, report_csv, run_all};
use c4net::harness::config::RunConfig;
use c4net::harness::data::{generate_dataset, list_stems, load_dataset, save_dataset};
use c4net::harness::gradcheck::{run_scope, validate_scope, TOLERANCE};
use c4net::harness::netpbm;
use c4net::harness::train::{load_run, mask_pairs, split, train_with, write_run, CHECKPOINT_FILE, LOG_FILE};
use c4net::metrics::{evaluate, MaskPair};

/// C4Net salient-object detection: training, evaluation and verification tools.
#[derive(Parser)]
#[command(name = "c4net", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write its checkpoint, config and epoch log.
    Train {
        /// Run configuration (`key = value` lines).
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory with images/*.ppm and masks/*.pgm.
        #[arg(long)]
        data: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Seed for initialization, shuffling and augmentation.
        #[arg(long)]
        seed: u64,
    },
    /// Evaluate a checkpoint on a dataset and write a metrics report.
    Eval {
        /// Checkpoint written by `train`; its config.cfg must sit beside it.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory with images/*.ppm and masks/*.pgm.
        #[arg(long)]
        data: PathBuf,
        /// Report CSV path.
        #[arg(long)]
        report: PathBuf,
    },
    /// Score saved prediction maps against ground-truth masks.
    Metrics {
        /// Directory of predicted maps (*.pgm).
        #[arg(long)]
        pred: PathBuf,
        /// Directory of ground-truth masks (*.pgm) with matching names.
        #[arg(long)]
        gt: PathBuf,
        /// Report CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Also write pr_curve.csv and f_curve.csv into this directory.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Compare reverse-mode gradients with central finite differences.
    Gradcheck {
        /// Unit name, or one of: ops, layers, losses, all.
        #[arg(long)]
        scope: String,
        /// Seed for the random inputs.
        #[arg(long)]
        seed: u64,
    },
    /// Train several variants over seeds and compare their metrics.
    Ablate {
        /// Comma-separated variants: decoder modes, with_EL, without_EL,
        /// baseline, +EL, +CCM, +CEM, +PSM.
        #[arg(long)]
        modes: String,
        /// Dataset directory with images/*.ppm and masks/*.pgm.
        #[arg(long)]
        data: PathBuf,
        /// Comparison CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Number of seeds (0..N) per variant.
        #[arg(long)]
        seeds: u64,
        /// Base run configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic dataset.
    GenData {
        /// Number of samples.
        #[arg(long)]
        n: usize,
        /// Image side: 32, 64 or 128.
        #[arg(long)]
        size: usize,
        /// Generator seed.
        #[arg(long)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(RunConfig::parse(&text).with_context(|| format!("parsing {}", path.display()))?)
}

fn load_gray_dir(dir: &Path) -> Result<Vec<(String, netpbm::Raster)>> {
    list_stems(dir, "pgm")
        .with_context(|| format!("listing {}", dir.display()))?
        .into_iter()
        .map(|stem| {
            let r = netpbm::load_pgm(&dir.join(format!("{}.pgm", stem)))?;
            Ok((stem, r))
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train { config, data, out, seed } => {
            let mut cfg = read_config(&config)?;
            cfg.train.seed = seed;
            let samples = load_dataset(&data)?;
            let (tr, va) = split(&samples, cfg.train.val_fraction);
            let outcome = train_with(&cfg, tr, va, |e| {
                println!("epoch {:>3}  loss {:.6}  val_mae {:.6}  lr_head {:.6}", e.epoch, e.loss, e.val_mae, e.lr_head);
            })?;
            write_run(&out, &cfg, &outcome)?;
            println!("wrote {} and {}", out.join(CHECKPOINT_FILE).display(), out.join(LOG_FILE).display());
        }
        Command::Eval { checkpoint, data, report } => {
            let (cfg, net) = load_run(&checkpoint)?;
            let samples = load_dataset(&data)?;
            let rep = evaluate(&mask_pairs(&net, &samples, cfg.train.batch_size)?)?;
            write_file(&report, &rep.to_csv())?;
            println!("mae {:.6}  mF {:.6}  e_xi {:.6}  mFP {:.6}  mFN {:.6}", rep.mae, rep.mean_f, rep.e_xi, rep.mfp, rep.mfn);
        }
        Command::Metrics { pred, gt, out, curves } => {
            let preds = load_gray_dir(&pred)?;
            let gts = load_gray_dir(&gt)?;
            if preds.is_empty() {
                bail!("no *.pgm predictions in {}", pred.display());
            }
            let mut pairs = Vec::with_capacity(preds.len());
            for (stem, p) in preds {
                let Some((_, g)) = gts.iter().find(|(s, _)| *s == stem) else {
                    bail!("no ground truth for {}", stem);
                };
                if (p.width, p.height) != (g.width, g.height) {
                    bail!("{}: prediction and ground truth sizes differ", stem);
                }
                pairs.push(MaskPair::from_gray(stem, p.height, p.width, p.to_planar(), &g.to_planar())?);
            }
            let rep = evaluate(&pairs)?;
            write_file(&out, &rep.to_csv())?;
            if let Some(dir) = curves {
                write_file(&dir.join("pr_curve.csv"), &rep.pr_csv())?;
                write_file(&dir.join("f_curve.csv"), &rep.f_csv())?;
            }
            println!("mae {:.6}  mF {:.6}  e_xi {:.6}  mFP {:.6}  mFN {:.6}", rep.mae, rep.mean_f, rep.e_xi, rep.mfp, rep.mfn);
        }
        Command::Gradcheck { scope, seed } => {
            validate_scope(&scope)?;
            let reports = run_scope(&scope, seed)?;
            let mut ok = true;
            for r in &reports {
                let pass = r.passes();
                ok &= pass;
                let kinks = match r.kinks {
                    k if k.retried + k.unresolved == 0 => String::new(),
                    k => format!("  (kinks: {} retried, {} unresolved)", k.retried, k.unresolved),
                };
                println!("{:<20} max_rel_error {:.3e}  {}{}", r.name, r.max_error(), if pass { "PASS" } else { "FAIL" }, kinks);
                for p in r.probes.iter().filter(|p| !p.passes(TOLERANCE)) {
                    println!("  {} coord {}: analytic {:.9e} numeric {:.9e}", p.name, p.worst_coord, p.analytic, p.numeric);
                }
            }
            if !ok {
                eprintln!("gradient check failed (tolerance {:e})", TOLERANCE);
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Ablate { modes, data, out, seeds, config } => {
            let base = match config {
                Some(p) => read_config(&p)?,
                None => RunConfig::default(),
            };
            let modes = parse_modes(&modes, &base)?;
            if seeds == 0 {
                bail!("--seeds must be at least 1");
            }
            let samples = load_dataset(&data)?;
            let (tr, va) = split(&samples, base.train.val_fraction);
            let seed_list: Vec<u64> = (0..seeds).collect();
            let runs = run_all(&modes, &base, &seed_list, tr, va, |r| match r.scores {
                Some(s) => println!("{:<12} seed {}  mae {:.6}  mFP {:.6}", r.variant, r.seed, s.mae, s.mfp),
                None => println!("{:<12} seed {}  unstable (diverged)", r.variant, r.seed),
            })?;
            write_file(&out, &report_csv(&modes, &runs))?;
        }
        Command::GenData { n, size, seed, out } => {
            let samples = generate_dataset(n, size, seed)?;
            save_dataset(&out, &samples)?;
            println!("wrote {} samples to {}", samples.len(), out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::FAILURE
        }
    }
}
