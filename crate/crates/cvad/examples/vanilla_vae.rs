//! The degenerate configuration: branch disabled, which reduces the cascade
//! generator to a standard convolutional VAE. Useful as a baseline and as a
//! sanity check that the branch is a strict superset of the plain model.
//!
//! ```bash
//! cargo run --release -p cvad --example vanilla_vae
//! ```

use cvad::config::RunConfig;
use cvad::data::{load_entries, synth_generate, Split};
use cvad::losses::generator_loss;
use cvad::training::train_generator;

fn main() {
    let mut cfg = RunConfig::preset("desk").unwrap();
    cfg.apply_text(
        "arch.image_size = 32\n\
         arch.base_channels = 8\n\
         arch.depth = 4\n\
         arch.latent_dim = 16\n\
         arch.branch_enabled = false\n\
         train.epochs_stage1 = 5\n\
         train.batch_size = 16\n\
         data.id_count = 120\n\
         data.id_test_count = 10\n\
         data.intra_count = 10\n\
         data.inter1_count = 10\n\
         data.inter2_count = 10\n\
         data.inter3_count = 10\n\
         data.lesion_size = 4\n",
    )
    .unwrap();

    let dir = std::env::temp_dir().join("cvad_example_vanilla");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let data_dir = dir.join("data");

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
    let (train_set, val_set) = (load(Split::Train), load(Split::Val));

    println!("training a branch-disabled (vanilla VAE) generator ...");
    let (ckpt, rows) = train_generator(&train_set, &val_set, &cfg, |_| {}).unwrap();
    for row in rows.iter().filter(|r| r.split == "val") {
        println!(
            "  epoch {:>2} val: total {:8.1} (recon {:8.1}, kl {:6.1})",
            row.epoch, row.loss_total, row.recon1, row.kl1
        );
        assert_eq!(row.recon2, 0.0);
        assert_eq!(row.kl2, 0.0);
    }

    let gen = ckpt.generator().unwrap();
    let x = val_set.batch(0, 4.min(val_set.len()));
    let out = gen.forward_eval(&x, None, None).unwrap();
    assert!(out.x2_logits.is_none() && out.latent2.is_none());
    let loss = generator_loss(&out, &x, &cfg.train.weights().unwrap()).unwrap();
    println!("\nbranch outputs are absent; per-sample loss is recon1 + kl1 only:");
    for i in 0..loss.total.len() {
        let lhs = loss.total[i];
        let rhs = loss.recon1[i] + loss.kl1[i];
        println!("  sample {i}: total {lhs:9.2} = recon1 + kl1 = {rhs:9.2}");
    }
}
