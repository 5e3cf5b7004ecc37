//! Deterministic synthetic benchmark with the ID / intra-OOD / inter-OOD
//! structure.
//!
//! ID images are smooth gradient backgrounds with one filled ellipse plus
//! Gaussian pixel noise. Intra-class OOD re-renders an ID image and adds one
//! small high-intensity square "lesion", so the anomaly is purely local. The
//! three inter-class roles differ globally: checkerboard texture, vertical
//! stripes, and uniform noise. Every file is generated from its own RNG
//! stream keyed by (seed, role, index), so generation parallelizes and the
//! output is bit-identical for a fixed spec.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::image_io::{quantize, write_png};
use super::manifest::{DatasetManifest, ManifestEntry, Role, Split};
use super::split_train_val;
use crate::config::fnv1a64;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub image_size: usize,
    pub id_count: usize,
    pub id_test_count: usize,
    pub intra_count: usize,
    pub inter1_count: usize,
    pub inter2_count: usize,
    pub inter3_count: usize,
    pub lesion_size: usize,
    pub lesion_delta: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 16 || !self.image_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "synth image_size must be a power of two >= 16, got {}",
                self.image_size
            )));
        }
        for (name, count) in [
            ("id_count", self.id_count),
            ("id_test_count", self.id_test_count),
            ("intra_count", self.intra_count),
            ("inter1_count", self.inter1_count),
            ("inter2_count", self.inter2_count),
            ("inter3_count", self.inter3_count),
        ] {
            if count < 1 {
                return Err(Error::Config(format!("synth {name} must be >= 1")));
            }
        }
        // The lesion must stay smaller than the main shape (smallest semi-minor
        // axis is 0.16 * image_size, i.e. diameter 0.32 * image_size).
        if self.lesion_size < 2 || self.lesion_size > self.image_size / 4 {
            return Err(Error::Config(format!(
                "lesion_size must be in [2, image_size/4], got {}",
                self.lesion_size
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_std) || !(0.0..=1.0).contains(&self.lesion_delta) {
            return Err(Error::Config(
                "noise_std and lesion_delta must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Canonical key=value string; hashed into the manifest.
    pub fn canonical_string(&self) -> String {
        format!(
            "image_size={} id_count={} id_test_count={} intra_count={} inter1_count={} \
             inter2_count={} inter3_count={} lesion_size={} lesion_delta={} noise_std={} seed={}",
            self.image_size,
            self.id_count,
            self.id_test_count,
            self.intra_count,
            self.inter1_count,
            self.inter2_count,
            self.inter3_count,
            self.lesion_size,
            self.lesion_delta,
            self.noise_std,
            self.seed
        )
    }

    pub fn hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical_string().as_bytes()))
    }
}

const TAG_ID: u64 = 1;
const TAG_ID_TEST: u64 = 2;
const TAG_INTRA: u64 = 3;
const TAG_INTER1: u64 = 4;
const TAG_INTER2: u64 = 5;
const TAG_INTER3: u64 = 6;
const TAG_SPLIT: u64 = 7;

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
}

/// Gradient background + one filled ellipse + pixel noise; the parameter
/// draws and the row-major noise draws are the stream contract intra-class
/// renders rely on.
fn render_base(spec: &SynthSpec, rng: &mut Rng) -> (Vec<f32>, Ellipse) {
    let s = spec.image_size;
    let sf = s as f64;
    let theta = rng.range(0.0, std::f64::consts::PI);
    let (dx, dy) = (theta.cos(), theta.sin());
    let b0 = rng.range(0.14, 0.20);
    let b1 = rng.range(0.14, 0.20);
    let cx = rng.range(0.40, 0.60) * sf;
    let cy = rng.range(0.40, 0.60) * sf;
    let a = rng.range(0.20, 0.28) * sf;
    let b = rng.range(0.16, 0.24) * sf;
    let phi = rng.range(0.0, std::f64::consts::PI);
    let intensity = rng.range(0.60, 0.75);
    let (cphi, sphi) = (phi.cos(), phi.sin());

    // Projection range over the image corners normalizes the gradient.
    let corners = [(0.0, 0.0), (sf, 0.0), (0.0, sf), (sf, sf)];
    let (mut tmin, mut tmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in corners {
        let t = x * dx + y * dy;
        tmin = tmin.min(t);
        tmax = tmax.max(t);
    }
    let tspan = (tmax - tmin).max(1e-9);

    let mut img = vec![0f32; s * s];
    for y in 0..s {
        for x in 0..s {
            let px = x as f64 + 0.5;
            let py = y as f64 + 0.5;
            let proj = ((px * dx + py * dy) - tmin) / tspan;
            let bg = b0 + (b1 - b0) * proj;
            let rx = px - cx;
            let ry = py - cy;
            let u = (rx * cphi + ry * sphi) / a;
            let v = (-rx * sphi + ry * cphi) / b;
            let f = u * u + v * v;
            let alpha = ((1.08 - f) / 0.16).clamp(0.0, 1.0);
            img[y * s + x] = (bg + (intensity - bg) * alpha) as f32;
        }
    }
    for v in img.iter_mut() {
        *v = (*v + (spec.noise_std * rng.normal()) as f32).clamp(0.0, 1.0);
    }
    (img, Ellipse { cx, cy, a, b })
}

fn render_id(spec: &SynthSpec, rng: &mut Rng) -> Vec<f32> {
    render_base(spec, rng).0
}

/// Square lesion bounding box: (x0, y0) and side length.
type LesionBox = (usize, usize, usize);

fn render_intra(spec: &SynthSpec, rng: &mut Rng) -> (Vec<f32>, LesionBox) {
    let (mut img, ell) = render_base(spec, rng);
    let s = spec.image_size;
    let side = spec.lesion_size;
    // The lesion sits on the dark background just outside the shape, where a
    // high-intensity square actually raises the reconstruction NLL (on the
    // bright interior it would saturate and mostly trade entropy for misfit).
    let angle = rng.range(0.0, std::f64::consts::TAU);
    let reach = rng.range(1.25, 1.55);
    let lx = (ell.cx + reach * ell.a * angle.cos() - side as f64 / 2.0).round();
    let ly = (ell.cy + reach * ell.b * angle.sin() - side as f64 / 2.0).round();
    let x0 = (lx.max(0.0) as usize).min(s - side);
    let y0 = (ly.max(0.0) as usize).min(s - side);
    let delta = spec.lesion_delta as f32;
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            let p = &mut img[y * s + x];
            *p = (*p + delta).clamp(0.0, 1.0);
        }
    }
    (img, (x0, y0, side))
}

fn render_checker(spec: &SynthSpec, rng: &mut Rng) -> Vec<f32> {
    let s = spec.image_size;
    let cell = (4 + 2 * rng.below(7)) as usize; // 4..16
    let ox = rng.below(cell as u64) as usize;
    let oy = rng.below(cell as u64) as usize;
    let lo = rng.range(0.05, 0.30) as f32;
    let hi = rng.range(0.60, 0.95) as f32;
    let mut img = vec![0f32; s * s];
    for y in 0..s {
        for x in 0..s {
            let parity = ((x + ox) / cell + (y + oy) / cell) % 2;
            img[y * s + x] = if parity == 0 { lo } else { hi };
        }
    }
    for v in img.iter_mut() {
        *v = (*v + (spec.noise_std * rng.normal()) as f32).clamp(0.0, 1.0);
    }
    img
}

fn render_stripes(spec: &SynthSpec, rng: &mut Rng) -> Vec<f32> {
    let s = spec.image_size;
    let period = (6 + rng.below(11)) as usize; // 6..17
    let phase = rng.below(period as u64) as usize;
    let lo = rng.range(0.05, 0.30) as f32;
    let hi = rng.range(0.60, 0.95) as f32;
    let mut img = vec![0f32; s * s];
    for y in 0..s {
        for x in 0..s {
            let on = ((x + phase) / (period / 2).max(1)).is_multiple_of(2);
            img[y * s + x] = if on { hi } else { lo };
        }
    }
    for v in img.iter_mut() {
        *v = (*v + (spec.noise_std * rng.normal()) as f32).clamp(0.0, 1.0);
    }
    img
}

fn render_uniform(spec: &SynthSpec, rng: &mut Rng) -> Vec<f32> {
    (0..spec.image_size * spec.image_size)
        .map(|_| rng.uniform() as f32)
        .collect()
}

fn render_for(spec: &SynthSpec, tag: u64, index: u64) -> Vec<f32> {
    let mut rng = Rng::stream(spec.seed, &[tag, index]);
    match tag {
        TAG_ID | TAG_ID_TEST => render_id(spec, &mut rng),
        TAG_INTRA => render_intra(spec, &mut rng).0,
        TAG_INTER1 => render_checker(spec, &mut rng),
        TAG_INTER2 => render_stripes(spec, &mut rng),
        TAG_INTER3 => render_uniform(spec, &mut rng),
        _ => unreachable!("unknown render tag"),
    }
}

/// Generate the dataset under `out_dir` and write `manifest.csv` there.
///
/// `out_dir` itself is created, but its parent must already exist.
pub fn synth_generate(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    match fs::create_dir(out_dir) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {}
        Err(e) => return Err(Error::io(out_dir, e)),
    }
    for role in Role::ALL {
        fs::create_dir_all(out_dir.join(role.as_str()))
            .map_err(|e| Error::io(out_dir.join(role.as_str()), e))?;
    }

    // (role, tag, file index within role dir, stream index)
    let mut jobs: Vec<(Role, u64, usize, u64)> = Vec::new();
    for i in 0..spec.id_count {
        jobs.push((Role::Id, TAG_ID, i, i as u64));
    }
    for i in 0..spec.id_test_count {
        jobs.push((Role::Id, TAG_ID_TEST, spec.id_count + i, i as u64));
    }
    for i in 0..spec.intra_count {
        jobs.push((Role::IntraOod, TAG_INTRA, i, i as u64));
    }
    for i in 0..spec.inter1_count {
        jobs.push((Role::InterOod1, TAG_INTER1, i, i as u64));
    }
    for i in 0..spec.inter2_count {
        jobs.push((Role::InterOod2, TAG_INTER2, i, i as u64));
    }
    for i in 0..spec.inter3_count {
        jobs.push((Role::InterOod3, TAG_INTER3, i, i as u64));
    }

    jobs.par_iter()
        .try_for_each(|&(role, tag, file_idx, stream_idx)| -> Result<()> {
            let img = render_for(spec, tag, stream_idx);
            let bytes = quantize(&img);
            let path = out_dir
                .join(role.as_str())
                .join(format!("{file_idx:05}.png"));
            write_png(&path, spec.image_size, spec.image_size, 1, &bytes)
        })?;

    // Manifest rows: ID pool split 80/20, ID test and all OOD in the test split.
    let id_indices: Vec<usize> = (0..spec.id_count).collect();
    let (train_ids, val_ids) = split_train_val(
        &id_indices,
        0.8,
        Rng::stream(spec.seed, &[TAG_SPLIT]).next_u64(),
    );
    let mut entries = Vec::new();
    let mut push = |role: Role, idx: usize, split: Split| {
        entries.push(ManifestEntry {
            path: format!("{}/{idx:05}.png", role.as_str()),
            split,
            role,
            label: role.label(),
        });
    };
    for &i in &train_ids {
        push(Role::Id, i, Split::Train);
    }
    for &i in &val_ids {
        push(Role::Id, i, Split::Val);
    }
    for i in 0..spec.id_test_count {
        push(Role::Id, spec.id_count + i, Split::Test);
    }
    for (role, count) in [
        (Role::IntraOod, spec.intra_count),
        (Role::InterOod1, spec.inter1_count),
        (Role::InterOod2, spec.inter2_count),
        (Role::InterOod3, spec.inter3_count),
    ] {
        for i in 0..count {
            push(role, i, Split::Test);
        }
    }

    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        seed: spec.seed,
        spec_hash: spec.hash(),
        entries,
    };
    manifest.validate()?;
    manifest.write(&out_dir.join(DatasetManifest::FILE_NAME))?;
    Ok(manifest)
}
