//! End-to-end CLI pipeline at toy scale: synth -> train -> score -> eval ->
//! recon, exit-code contracts, and byte-level determinism of every artifact.

use std::fs;
use std::path::{Path, PathBuf};

use cvad::cli;
use cvad::data::DatasetManifest;
use cvad::scoring::read_score_csv;
use cvad::training::{Checkpoint, Stage};

fn run(args: &[&str]) -> i32 {
    let owned: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    cli::run(&owned)
}

fn work_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cvad_pipeline_{tag}"));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_mini_config(dir: &Path) -> PathBuf {
    let path = dir.join("mini.cfg");
    fs::write(
        &path,
        "arch.image_size = 32\n\
         arch.base_channels = 8\n\
         arch.depth = 4\n\
         arch.latent_dim = 16\n\
         arch.branch_channels = 16\n\
         train.epochs_stage1 = 2\n\
         train.epochs_stage2 = 1\n\
         train.batch_size = 16\n\
         data.id_count = 80\n\
         data.id_test_count = 20\n\
         data.intra_count = 16\n\
         data.inter1_count = 16\n\
         data.inter2_count = 16\n\
         data.inter3_count = 16\n\
         data.lesion_size = 4\n",
    )
    .unwrap();
    path
}

/// One full pipeline pass; returns (ckpt bytes, score bytes, report bytes).
fn full_pipeline(dir: &Path, cfg: &Path, seed: &str) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let data = dir.join("data");
    let ckpt = dir.join("model.ckpt");
    let scores = dir.join("scores.csv");
    let report = dir.join("report.csv");
    let cfg_s = cfg.to_str().unwrap();
    assert_eq!(
        run(&[
            "synth",
            "--config",
            cfg_s,
            "--seed",
            seed,
            "--out",
            data.to_str().unwrap()
        ]),
        0
    );
    assert_eq!(
        run(&[
            "train",
            "--config",
            cfg_s,
            "--seed",
            seed,
            "--data",
            data.to_str().unwrap(),
            "--out",
            ckpt.to_str().unwrap(),
            "--deterministic",
        ]),
        0
    );
    assert_eq!(
        run(&[
            "score",
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            scores.to_str().unwrap(),
        ]),
        0
    );
    assert_eq!(
        run(&[
            "eval",
            "--scores",
            scores.to_str().unwrap(),
            "--out",
            report.to_str().unwrap(),
            "--rounds",
            "10",
            "--seed",
            seed,
            "--plot",
        ]),
        0
    );
    (
        fs::read(&ckpt).unwrap(),
        fs::read(&scores).unwrap(),
        fs::read(&report).unwrap(),
    )
}

#[test]
fn pipeline_runs_and_is_bit_deterministic() {
    let dir_a = work_dir("det_a");
    let cfg = write_mini_config(&dir_a);
    let (ckpt_a, scores_a, report_a) = full_pipeline(&dir_a, &cfg, "11");

    let dir_b = work_dir("det_b");
    let cfg_b = write_mini_config(&dir_b);
    let (ckpt_b, scores_b, report_b) = full_pipeline(&dir_b, &cfg_b, "11");

    assert_eq!(ckpt_a, ckpt_b, "checkpoints differ across identical runs");
    assert_eq!(
        scores_a, scores_b,
        "score CSVs differ across identical runs"
    );
    assert_eq!(report_a, report_b, "reports differ across identical runs");

    // A different seed must genuinely change the model.
    let dir_c = work_dir("det_c");
    let cfg_c = write_mini_config(&dir_c);
    let (ckpt_c, _, _) = full_pipeline(&dir_c, &cfg_c, "12");
    assert_ne!(ckpt_a, ckpt_c);
}

#[test]
fn artifacts_honor_their_contracts() {
    let dir = work_dir("contracts");
    let cfg = write_mini_config(&dir);
    let (_, _, report) = full_pipeline(&dir, &cfg, "5");

    // Checkpoint: stage=full, calibrated, byte-identical re-save.
    let ckpt_path = dir.join("model.ckpt");
    let ckpt = Checkpoint::load(&ckpt_path).unwrap();
    assert_eq!(ckpt.stage, Stage::Full);
    let cal = ckpt.calibration.expect("full training calibrates");
    assert!(cal.lg_min <= cal.lg_max);
    let resaved = dir.join("resaved.ckpt");
    ckpt.save(&resaved).unwrap();
    assert_eq!(fs::read(&ckpt_path).unwrap(), fs::read(&resaved).unwrap());

    // Scores: test-split rows only, S recomputable bit-exactly, both classes.
    let manifest = DatasetManifest::read(&dir.join("data").join("manifest.csv")).unwrap();
    let records = read_score_csv(&dir.join("scores.csv")).unwrap();
    assert_eq!(records.len(), manifest.eval_entries().len());
    let test_paths: std::collections::BTreeSet<String> = manifest
        .eval_entries()
        .iter()
        .map(|e| e.path.clone())
        .collect();
    for r in &records {
        assert!(
            test_paths.contains(&r.sample_id),
            "{} is not a test entry",
            r.sample_id
        );
        assert_eq!(r.s, 0.5 * (r.s_g + r.s_d));
    }
    assert!(records.iter().any(|r| r.label == 0));
    assert!(records.iter().any(|r| r.label == 1));

    // Report: three blocks (S_G, S_D, S), one row per OOD role each.
    let report = String::from_utf8(report).unwrap();
    for block in ["# score=S_G", "# score=S_D", "# score=S"] {
        assert!(report.contains(block), "missing {block}");
    }
    let header_count = report.lines().filter(|l| *l == cli::REPORT_HEADER).count();
    assert_eq!(header_count, 3);
    for role in ["intra_ood", "inter_ood_1", "inter_ood_2", "inter_ood_3"] {
        assert_eq!(report.lines().filter(|l| l.starts_with(role)).count(), 3);
    }

    // Plot emitted next to the report.
    assert!(dir.join("report.png").is_file());

    // Training log: stage-1 train/val rows plus stage-2 disc rows.
    let log = fs::read_to_string(dir.join("model.log.csv")).unwrap();
    assert!(log.starts_with("# config_hash="));
    assert_eq!(log.lines().filter(|l| l.contains(",train,")).count(), 2);
    assert_eq!(log.lines().filter(|l| l.contains(",val,")).count(), 2);
    assert_eq!(log.lines().filter(|l| l.contains(",disc,")).count(), 1);
}

#[test]
fn recon_grids_have_the_documented_layout() {
    let dir = work_dir("recon");
    let cfg = write_mini_config(&dir);
    let _ = full_pipeline(&dir, &cfg, "3");
    let grids = dir.join("grids");
    assert_eq!(
        run(&[
            "recon",
            "--ckpt",
            dir.join("model.ckpt").to_str().unwrap(),
            "--data",
            dir.join("data").to_str().unwrap(),
            "--out",
            grids.to_str().unwrap(),
            "--count",
            "3",
        ]),
        0
    );
    let files: Vec<_> = fs::read_dir(&grids)
        .unwrap()
        .filter_map(|e| e.ok())
        .collect();
    assert_eq!(files.len(), 3);
    let raw = cvad::data::read_png(&files[0].path()).unwrap();
    assert_eq!(raw.width, 4 * 32 + 3 * 2); // four panels + 2 px separators
    assert_eq!(raw.height, 32);
}

#[test]
fn paper_preset_tap_shapes() {
    // Full-scale layer schedule: 256x256, K=512, branch latent 2048.
    let cfg = cvad::models::ArchConfig::paper();
    let mut rng = cvad::rng::Rng::new(2);
    let gen: cvad::models::Generator<f32> = cvad::models::Generator::init(cfg, &mut rng).unwrap();
    let mut x = cvad::tensor::Tensor::<f32>::zeros(&[1, 1, 256, 256]);
    for v in x.data_mut() {
        *v = rng.uniform() as f32;
    }
    let (mu1, _, e11) = gen.encode_primary(&x).unwrap();
    assert_eq!(mu1.shape(), &[1, 512]);
    assert_eq!(e11.shape(), &[1, 64, 32, 32]);
    let (x1, d11) = gen.decode_primary(&mu1).unwrap();
    assert_eq!(x1.shape(), &[1, 1, 256, 256]);
    assert_eq!(d11.shape(), &[1, 32, 64, 64]);
    let f = gen.branch_input(&e11, &d11).unwrap();
    assert_eq!(f.shape(), &[1, 96, 32, 32]);
    let (mu2, _) = gen.encode_branch(&f).unwrap();
    assert_eq!(mu2.shape(), &[1, 2048]);
    let x2 = gen.decode_branch(&mu2).unwrap();
    assert_eq!(x2.shape(), &[1, 1, 256, 256]);
}

#[test]
fn exit_codes_are_stable() {
    let dir = work_dir("exit");
    let cfg = write_mini_config(&dir);

    // 2: config errors
    assert_eq!(
        run(&[
            "synth",
            "--preset",
            "nope",
            "--out",
            dir.join("x").to_str().unwrap()
        ]),
        2
    );
    assert_eq!(run(&["score"]), 2);
    let bad_cfg = dir.join("bad.cfg");
    fs::write(&bad_cfg, "train.unknown_key = 1\n").unwrap();
    assert_eq!(
        run(&[
            "synth",
            "--config",
            bad_cfg.to_str().unwrap(),
            "--out",
            dir.join("y").to_str().unwrap()
        ]),
        2
    );

    // 3: missing out_dir parent
    assert_eq!(
        run(&[
            "synth",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.join("no/such/parent/ds").to_str().unwrap(),
        ]),
        3
    );

    // Build a real pipeline for the stateful error paths.
    let data = dir.join("data");
    assert_eq!(
        run(&[
            "synth",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            data.to_str().unwrap()
        ]),
        0
    );
    let gen_ckpt = dir.join("gen.ckpt");
    assert_eq!(
        run(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            gen_ckpt.to_str().unwrap(),
            "--stage",
            "generator",
        ]),
        0
    );
    // 5: scoring a generator-stage checkpoint
    assert_eq!(
        run(&[
            "score",
            "--ckpt",
            gen_ckpt.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            dir.join("s.csv").to_str().unwrap(),
        ]),
        5
    );
    // generator-stage checkpoint loads and carries no discriminator
    let ckpt = Checkpoint::load(&gen_ckpt).unwrap();
    assert_eq!(ckpt.stage, Stage::Generator);
    assert!(ckpt.calibration.is_none());
    assert!(ckpt.discriminator().is_err());

    // 5: calibrated-mode scoring without calibration
    let full_ckpt = dir.join("full.ckpt");
    assert_eq!(
        run(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            full_ckpt.to_str().unwrap(),
        ]),
        0
    );
    let mut uncalibrated = Checkpoint::load(&full_ckpt).unwrap();
    uncalibrated.calibration = None;
    let uncal_path = dir.join("uncal.ckpt");
    uncalibrated.save(&uncal_path).unwrap();
    assert_eq!(
        run(&[
            "score",
            "--ckpt",
            uncal_path.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            dir.join("s2.csv").to_str().unwrap(),
            "--mode",
            "calibrated",
        ]),
        5
    );
    // calibrated mode works on the calibrated checkpoint
    assert_eq!(
        run(&[
            "score",
            "--ckpt",
            full_ckpt.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            dir.join("s3.csv").to_str().unwrap(),
            "--mode",
            "calibrated",
        ]),
        0
    );

    // 6: eval over a single-class score file
    let single = dir.join("single.csv");
    fs::write(
        &single,
        "# config_hash=x\nsample_id,label,role,L_G,S_G,S_D,S\na.png,1,intra_ood,1,0.5,0.5,0.5\n",
    )
    .unwrap();
    assert_eq!(
        run(&[
            "eval",
            "--scores",
            single.to_str().unwrap(),
            "--out",
            dir.join("r.csv").to_str().unwrap()
        ]),
        6
    );
}
