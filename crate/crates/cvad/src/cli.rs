//! Command-line surface: `synth | train | score | eval | recon`.
//!
//! Exit codes: 0 success, 2 config/usage error, 3 I/O or dataset error,
//! 4 training divergence, 5 checkpoint/state mismatch, 6 degenerate metric
//! input. Human-readable summaries go to stdout; machine-readable output goes
//! to files only.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::data::{
    load_entries, load_folder, synth_generate, write_png, DatasetManifest, ImageSet, Split,
};
use crate::error::{Error, Result};
use crate::metrics::{bootstrap, gmean_threshold, roc_curve, LabeledScores, RocCurve};
use crate::render::{recon_grid, roc_plot};
use crate::scoring::{
    read_score_csv, score_set, write_score_csv, ScoreMode, ScoreRecord, LABEL_UNKNOWN,
};
use crate::training::{
    calibrate, train_discriminator, train_generator, write_log_csv, Checkpoint, Stage, TrainLogRow,
};

const USAGE: &str = "usage: cvad <synth|train|score|eval|recon> [flags]

  synth  --out DIR      [--config PATH] [--preset desk|paper] [--seed N]
  train  --data DIR --out CKPT [--config PATH] [--preset desk|paper] [--seed N]
         [--stage generator|full] [--deterministic]
  score  --ckpt CKPT --out CSV (--data DIR | --folder DIR) [--mode dataset|calibrated]
  eval   --scores CSV --out CSV [--rounds N] [--seed N] [--plot]
  recon  --ckpt CKPT --out DIR (--data DIR | --folder DIR) [--count N]
";

/// Entry point used by the `cvad` binary; returns the process exit code.
pub fn run(args: &[String]) -> i32 {
    match dispatch(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(args: &[String]) -> Result<()> {
    let Some(cmd) = args.first() else {
        eprint!("{USAGE}");
        return Err(Error::Config("missing subcommand".into()));
    };
    let flags = Flags::parse(&args[1..])?;
    match cmd.as_str() {
        "synth" => cmd_synth(&flags),
        "train" => cmd_train(&flags),
        "score" => cmd_score(&flags),
        "eval" => cmd_eval(&flags),
        "recon" => cmd_recon(&flags),
        other => {
            eprint!("{USAGE}");
            Err(Error::Config(format!("unknown subcommand `{other}`")))
        }
    }
}

#[derive(Debug)]
struct Flags {
    values: BTreeMap<String, String>,
    switches: Vec<String>,
}

const VALUE_FLAGS: &[&str] = &[
    "--out", "--config", "--preset", "--seed", "--data", "--folder", "--ckpt", "--scores",
    "--mode", "--rounds", "--stage", "--count",
];
const SWITCH_FLAGS: &[&str] = &["--plot", "--deterministic"];

impl Flags {
    fn parse(args: &[String]) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut switches = Vec::new();
        let mut i = 0;
        while i < args.len() {
            let flag = args[i].as_str();
            if SWITCH_FLAGS.contains(&flag) {
                switches.push(flag.to_string());
                i += 1;
            } else if VALUE_FLAGS.contains(&flag) {
                let value = args
                    .get(i + 1)
                    .ok_or_else(|| Error::Config(format!("flag {flag} needs a value")))?;
                values.insert(flag.to_string(), value.clone());
                i += 2;
            } else {
                eprint!("{USAGE}");
                return Err(Error::Config(format!("unknown flag `{flag}`")));
            }
        }
        Ok(Flags { values, switches })
    }

    fn get(&self, flag: &str) -> Option<&str> {
        self.values.get(flag).map(|s| s.as_str())
    }

    fn require(&self, flag: &str) -> Result<&str> {
        self.get(flag)
            .ok_or_else(|| Error::Config(format!("missing required flag {flag}")))
    }

    fn path(&self, flag: &str) -> Result<PathBuf> {
        Ok(PathBuf::from(self.require(flag)?))
    }

    fn has(&self, flag: &str) -> bool {
        self.switches.iter().any(|s| s == flag)
    }

    fn parsed<T: std::str::FromStr>(&self, flag: &str) -> Result<Option<T>> {
        match self.get(flag) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Config(format!("bad value `{v}` for {flag}"))),
        }
    }

    /// Preset -> config file overlay -> --seed override.
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::preset(self.get("--preset").unwrap_or("desk"))?;
        if let Some(path) = self.get("--config") {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_text(&text)?;
        }
        if let Some(seed) = self.parsed::<u64>("--seed")? {
            cfg.train.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn cmd_synth(flags: &Flags) -> Result<()> {
    let cfg = flags.config()?;
    let out = flags.path("--out")?;
    let spec = cfg.synth_spec();
    let manifest = synth_generate(&spec, &out)?;
    let train = manifest.select(Split::Train, None).len();
    let val = manifest.select(Split::Val, None).len();
    let test = manifest.select(Split::Test, None).len();
    println!(
        "synth: {} images under {} (train {train} / val {val} / test {test}), spec hash {}",
        manifest.entries.len(),
        out.display(),
        manifest.spec_hash
    );
    Ok(())
}

fn load_split(
    manifest: &DatasetManifest,
    root: &Path,
    split: Split,
    cfg: &RunConfig,
) -> Result<ImageSet> {
    let entries = manifest.select(split, None);
    load_entries(root, &entries, cfg.arch.image_size, cfg.arch.in_channels)
}

fn cmd_train(flags: &Flags) -> Result<()> {
    let cfg = flags.config()?;
    let data_dir = flags.path("--data")?;
    let out = flags.path("--out")?;
    let stage = flags.get("--stage").unwrap_or("full");
    if flags.has("--deterministic") {
        // Runs are deterministic by construction; the flag is accepted for
        // compatibility with scripted pipelines.
    }
    let manifest = DatasetManifest::read(&data_dir.join(DatasetManifest::FILE_NAME))?;
    manifest.validate()?;
    let train_set = load_split(&manifest, &data_dir, Split::Train, &cfg)?;
    let val_set = load_split(&manifest, &data_dir, Split::Val, &cfg)?;

    println!(
        "train: stage 1 ({} epochs, {} images, batch {})",
        cfg.train.epochs_stage1,
        train_set.len(),
        cfg.train.batch_size
    );
    let print_row = |row: &TrainLogRow| match row.disc_acc {
        Some(acc) => println!(
            "  epoch {:>3} {:<5} loss {:>10.3} acc {acc:.3}",
            row.epoch, row.split, row.loss_total
        ),
        None => println!(
            "  epoch {:>3} {:<5} loss {:>10.3} (recon1 {:.1} kl1 {:.1} recon2 {:.1} kl2 {:.1})",
            row.epoch, row.split, row.loss_total, row.recon1, row.kl1, row.recon2, row.kl2
        ),
    };
    let (mut ckpt, mut rows) = train_generator(&train_set, &val_set, &cfg, print_row)?;

    if stage == "full" {
        println!(
            "train: stage 2 ({} epochs, discriminator)",
            cfg.train.epochs_stage2
        );
        let (full, disc_rows) = train_discriminator(&ckpt, &train_set, &cfg, print_row)?;
        ckpt = full;
        rows.extend(disc_rows);
        calibrate(&mut ckpt, &val_set)?;
        let cal = ckpt.calibration.expect("calibration just computed");
        println!(
            "train: calibrated L_G range [{}, {}]",
            cal.lg_min, cal.lg_max
        );
    } else if stage != "generator" {
        return Err(Error::Config(format!(
            "--stage must be generator|full, got `{stage}`"
        )));
    }

    ckpt.save(&out)?;
    let log_path = out.with_extension("log.csv");
    write_log_csv(&log_path, &rows, &ckpt.config_hash)?;
    println!(
        "train: wrote {} (stage={}) and {}",
        out.display(),
        ckpt.stage.as_str(),
        log_path.display()
    );
    Ok(())
}

fn cmd_score(flags: &Flags) -> Result<()> {
    let ckpt = Checkpoint::load(&flags.path("--ckpt")?)?;
    if ckpt.stage != Stage::Full {
        return Err(Error::State(
            "scoring requires a stage=full checkpoint".into(),
        ));
    }
    let out = flags.path("--out")?;
    let mode = match flags.get("--mode") {
        Some(m) => ScoreMode::parse(m)?,
        None => ScoreMode::Dataset,
    };
    let set = match (flags.get("--data"), flags.get("--folder")) {
        (Some(dir), None) => {
            let root = PathBuf::from(dir);
            let manifest = DatasetManifest::read(&root.join(DatasetManifest::FILE_NAME))?;
            manifest.validate()?;
            let entries = manifest.eval_entries();
            load_entries(&root, &entries, ckpt.arch.image_size, ckpt.arch.in_channels)?
        }
        (None, Some(dir)) => {
            let mut set = load_folder(Path::new(dir), ckpt.arch.image_size, ckpt.arch.in_channels)?;
            set.labels = vec![LABEL_UNKNOWN; set.len()];
            set
        }
        _ => {
            return Err(Error::Config(
                "score needs exactly one of --data or --folder".into(),
            ))
        }
    };
    let records = score_set(&ckpt, &set, mode)?;
    write_score_csv(&out, &records, &ckpt.config_hash)?;
    let mean_s: f64 = records.iter().map(|r| r.s as f64).sum::<f64>() / records.len() as f64;
    println!(
        "score: {} samples -> {} (mode {}, mean S {mean_s:.4})",
        records.len(),
        out.display(),
        mode.as_str()
    );
    Ok(())
}

pub const REPORT_HEADER: &str = "ood_role,auc_mean,auc_std,tpr,tpr_std,fpr,fpr_std,threshold";

type ScorePick = fn(&ScoreRecord) -> f32;

/// Per-role labeled score sets for one score column (ID rows vs that role).
fn role_sets(
    records: &[ScoreRecord],
    pick: impl Fn(&ScoreRecord) -> f32,
) -> Result<Vec<(String, LabeledScores)>> {
    let id_scores: Vec<f64> = records
        .iter()
        .filter(|r| r.label == 0)
        .map(|r| pick(r) as f64)
        .collect();
    if id_scores.is_empty() {
        return Err(Error::Metric("score file has no ID-labeled rows".into()));
    }
    let mut roles: Vec<String> = records
        .iter()
        .filter(|r| r.label == 1)
        .map(|r| r.role.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if roles.is_empty() {
        return Err(Error::Metric("score file has no OOD-labeled rows".into()));
    }
    roles.sort();
    let mut out = Vec::new();
    for role in roles {
        let mut scores = id_scores.clone();
        let mut labels = vec![0u8; scores.len()];
        for r in records.iter().filter(|r| r.label == 1 && r.role == role) {
            scores.push(pick(r) as f64);
            labels.push(1);
        }
        out.push((role, LabeledScores::new(scores, labels)?));
    }
    Ok(out)
}

fn cmd_eval(flags: &Flags) -> Result<()> {
    let scores_path = flags.path("--scores")?;
    let out = flags.path("--out")?;
    let rounds = flags.parsed::<usize>("--rounds")?.unwrap_or(10);
    let seed = flags.parsed::<u64>("--seed")?.unwrap_or(7);
    let records = read_score_csv(&scores_path)?;
    let config_hash = read_embedded_hash(&scores_path).unwrap_or_else(|| "unknown".to_string());

    let mut report = format!("# config_hash={config_hash}\n");
    let mut plot_curves: Vec<(String, RocCurve)> = Vec::new();
    let picks: [(&str, ScorePick); 3] = [("S_G", |r| r.s_g), ("S_D", |r| r.s_d), ("S", |r| r.s)];
    for (name, pick) in picks {
        report.push_str(&format!("# score={name}\n{REPORT_HEADER}\n"));
        for (role, ls) in role_sets(&records, pick)? {
            let curve = roc_curve(&ls)?;
            let point = gmean_threshold(&curve);
            let boot = bootstrap(&ls, rounds, seed)?;
            report.push_str(&format!(
                "{role},{},{},{},{},{},{},{}\n",
                boot.auc_mean,
                boot.auc_std,
                boot.tpr_mean,
                boot.tpr_std,
                boot.fpr_mean,
                boot.fpr_std,
                point.threshold
            ));
            if name == "S" {
                plot_curves.push((role, curve));
            }
        }
    }
    fs::write(&out, &report).map_err(|e| Error::io(&out, e))?;
    println!(
        "eval: report -> {} ({rounds} bootstrap rounds)",
        out.display()
    );

    if flags.has("--plot") {
        let plot_path = out.with_extension("png");
        let (w, h, px) = roc_plot(&plot_curves)?;
        let interleaved = px; // roc_plot emits interleaved RGB already
        write_png(&plot_path, w, h, 3, &interleaved)?;
        println!("eval: ROC plot -> {}", plot_path.display());
    }
    Ok(())
}

fn cmd_recon(flags: &Flags) -> Result<()> {
    let ckpt = Checkpoint::load(&flags.path("--ckpt")?)?;
    let out_dir = flags.path("--out")?;
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let count = flags.parsed::<usize>("--count")?.unwrap_or(16);
    let set = match (flags.get("--data"), flags.get("--folder")) {
        (Some(dir), None) => {
            let root = PathBuf::from(dir);
            let manifest = DatasetManifest::read(&root.join(DatasetManifest::FILE_NAME))?;
            let entries = manifest.eval_entries();
            load_entries(&root, &entries, ckpt.arch.image_size, ckpt.arch.in_channels)?
        }
        (None, Some(dir)) => {
            load_folder(Path::new(dir), ckpt.arch.image_size, ckpt.arch.in_channels)?
        }
        _ => {
            return Err(Error::Config(
                "recon needs exactly one of --data or --folder".into(),
            ))
        }
    };
    let gen = ckpt.generator()?;
    let take = count.min(set.len());
    let mut written = 0usize;
    let mut start = 0;
    while start < take {
        let batch_n = ckpt.train.batch_size.min(take - start);
        let x = set.batch(start, batch_n);
        let fwd = gen.forward_eval(&x, None, None)?;
        for i in 0..batch_n {
            let (w, h, c, bytes) = recon_grid(&fwd, &x, i);
            let stem = set.paths[start + i].replace(['/', '\\'], "_");
            let stem = stem.strip_suffix(".png").unwrap_or(&stem);
            let path = out_dir.join(format!("{stem}_grid.png"));
            write_png(&path, w, h, c, &bytes)?;
            written += 1;
        }
        start += batch_n;
    }
    println!("recon: {written} grids -> {}", out_dir.display());
    Ok(())
}

/// Pull the `# config_hash=` comment out of one of our CSV outputs.
fn read_embedded_hash(path: &Path) -> Option<String> {
    let text = fs::read_to_string(path).ok()?;
    text.lines().find_map(|l| {
        l.strip_prefix("# config_hash=")
            .map(|v| v.trim().to_string())
    })
}
