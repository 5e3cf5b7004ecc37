//! Two-stage training plus calibration at toy scale, end to end through the
//! library API: synthesize data, train the generator, train the
//! discriminator against frozen reconstructions, calibrate, save, reload.
//!
//! ```bash
//! cargo run --release -p cvad --example train_pipeline
//! ```

use cvad::config::RunConfig;
use cvad::data::{load_entries, synth_generate, DatasetManifest, Split};
use cvad::training::{calibrate, train_discriminator, train_generator};

fn main() {
    let mut cfg = RunConfig::preset("desk").unwrap();
    cfg.apply_text(
        "arch.image_size = 32\n\
         arch.base_channels = 8\n\
         arch.depth = 4\n\
         arch.latent_dim = 16\n\
         arch.branch_channels = 16\n\
         train.epochs_stage1 = 4\n\
         train.epochs_stage2 = 2\n\
         train.batch_size = 16\n\
         data.id_count = 120\n\
         data.id_test_count = 30\n\
         data.intra_count = 30\n\
         data.inter1_count = 30\n\
         data.inter2_count = 30\n\
         data.inter3_count = 30\n\
         data.lesion_size = 4\n",
    )
    .unwrap();
    cfg.validate().unwrap();

    let dir = std::env::temp_dir().join("cvad_example_train");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let data_dir = dir.join("data");

    println!("synthesizing toy dataset ...");
    let manifest = synth_generate(&cfg.synth_spec(), &data_dir).unwrap();
    let load = |split| {
        let entries = manifest.select(split, None);
        load_entries(
            &data_dir,
            &entries,
            cfg.arch.image_size,
            cfg.arch.in_channels,
        )
        .unwrap()
    };
    let train_set = load(Split::Train);
    let val_set = load(Split::Val);

    println!(
        "stage 1: generator ({} epochs) ...",
        cfg.train.epochs_stage1
    );
    let (ckpt, rows) = train_generator(&train_set, &val_set, &cfg, |_| {}).unwrap();
    for row in rows.iter().filter(|r| r.split == "val") {
        println!(
            "  epoch {:>2} val: total {:8.1}  recon1 {:8.1}  kl1 {:6.1}  recon2 {:8.1}  kl2 {:6.1}",
            row.epoch, row.loss_total, row.recon1, row.kl1, row.recon2, row.kl2
        );
    }

    println!(
        "stage 2: discriminator ({} epochs) ...",
        cfg.train.epochs_stage2
    );
    let (mut full, disc_rows) = train_discriminator(&ckpt, &train_set, &cfg, |_| {}).unwrap();
    for row in &disc_rows {
        println!(
            "  epoch {:>2} disc: bce {:.4}  train acc {:.3}",
            row.epoch,
            row.loss_total,
            row.disc_acc.unwrap()
        );
    }

    calibrate(&mut full, &val_set).unwrap();
    let cal = full.calibration.unwrap();
    println!(
        "calibration: L_G in [{:.1}, {:.1}] over the val split",
        cal.lg_min, cal.lg_max
    );

    let ckpt_path = dir.join("toy.ckpt");
    full.save(&ckpt_path).unwrap();
    let reloaded = cvad::training::Checkpoint::load(&ckpt_path).unwrap();
    println!(
        "checkpoint {} ({} tensors, stage={}) round-trips",
        ckpt_path.display(),
        reloaded.tensors.len(),
        reloaded.stage.as_str()
    );
    let _ = DatasetManifest::read(&data_dir.join(DatasetManifest::FILE_NAME)).unwrap();
}
