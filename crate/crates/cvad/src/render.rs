//! Raster outputs: per-sample reconstruction grids and ROC plots.

use crate::data::{planar_to_interleaved, quantize};
use crate::error::Result;
use crate::metrics::RocCurve;
use crate::models::GeneratorOutput;
use crate::nn::sigmoid;
use crate::tensor::Tensor;

/// Separator width between grid panels, in pixels.
pub const GRID_SEP: usize = 2;

/// Build the 4-panel grid for sample `idx` of a batch forward pass:
/// branch reconstruction sigmoid(x2'), primary reconstruction sigmoid(x1'),
/// combined x', original x. Returns (width, height, interleaved bytes).
pub fn recon_grid(
    out: &GeneratorOutput<f32>,
    x: &Tensor<f32>,
    idx: usize,
) -> (usize, usize, usize, Vec<u8>) {
    let [_, c, h, w] = x.dims4("recon_grid").expect("rank-4 batch");
    let per = c * h * w;
    let slice = |t: &Tensor<f32>| t.data()[idx * per..(idx + 1) * per].to_vec();

    let x2_panel = match &out.x2_logits {
        Some(x2) => {
            let t = Tensor::from_vec(&[1, c, h, w], slice(x2)).expect("panel shape");
            sigmoid(&t).into_data()
        }
        // Branch disabled: the branch contributes zero logits.
        None => vec![0.5f32; per],
    };
    let x1_panel = {
        let t = Tensor::from_vec(&[1, c, h, w], slice(&out.x1_logits)).expect("panel shape");
        sigmoid(&t).into_data()
    };
    let panels = [x2_panel, x1_panel, slice(&out.x_recon), slice(x)];

    let grid_w = 4 * w + 3 * GRID_SEP;
    let mut planar = vec![255u8; c * h * grid_w];
    for (p, panel) in panels.iter().enumerate() {
        let bytes = quantize(panel);
        let x_off = p * (w + GRID_SEP);
        for ch in 0..c {
            for row in 0..h {
                let dst = ch * h * grid_w + row * grid_w + x_off;
                let src = ch * h * w + row * w;
                planar[dst..dst + w].copy_from_slice(&bytes[src..src + w]);
            }
        }
    }
    (grid_w, h, c, planar_to_interleaved(&planar, grid_w, h, c))
}

const PLOT_SIZE: usize = 512;
const PLOT_MARGIN: usize = 48;

const PALETTE: [[u8; 3]; 6] = [
    [204, 51, 51],
    [51, 102, 204],
    [51, 153, 51],
    [204, 153, 0],
    [153, 51, 204],
    [0, 153, 153],
];

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<u8>,
}

impl Canvas {
    fn new(w: usize, h: usize) -> Self {
        Canvas {
            w,
            h,
            px: vec![255; w * h * 3],
        }
    }

    fn set(&mut self, x: i64, y: i64, rgb: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.w && (y as usize) < self.h {
            let at = (y as usize * self.w + x as usize) * 3;
            self.px[at..at + 3].copy_from_slice(&rgb);
        }
    }

    fn line(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, rgb: [u8; 3]) {
        let (dx, sx) = ((x1 - x0).abs(), if x0 < x1 { 1 } else { -1 });
        let (dy, sy) = (-(y1 - y0).abs(), if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.set(x, y, rgb);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }
}

/// Render ROC curves (FPR on x, TPR on y) into an RGB image. One color per
/// named curve; the chance diagonal is drawn dashed in gray.
pub fn roc_plot(curves: &[(String, RocCurve)]) -> Result<(usize, usize, Vec<u8>)> {
    let size = PLOT_SIZE;
    let m = PLOT_MARGIN as i64;
    let span = (size - 2 * PLOT_MARGIN) as f64;
    let mut canvas = Canvas::new(size, size);
    let to_px = |fpr: f64, tpr: f64| -> (i64, i64) {
        let x = m + (fpr * span) as i64;
        let y = (size as i64 - m) - (tpr * span) as i64;
        (x, y)
    };

    let black = [0u8, 0, 0];
    let gray = [180u8, 180, 180];
    // axes
    let (x0, y0) = to_px(0.0, 0.0);
    let (x1, _) = to_px(1.0, 0.0);
    let (_, y1) = to_px(0.0, 1.0);
    canvas.line(x0, y0, x1, y0, black);
    canvas.line(x0, y0, x0, y1, black);
    // ticks at 0.25 steps
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let (tx, _) = to_px(t, 0.0);
        canvas.line(tx, y0, tx, y0 + 4, black);
        let (_, ty) = to_px(0.0, t);
        canvas.line(x0, ty, x0 - 4, ty, black);
    }
    // chance diagonal, dashed
    for i in 0..64 {
        if i % 2 == 0 {
            let a = i as f64 / 64.0;
            let b = (i + 1) as f64 / 64.0;
            let (ax, ay) = to_px(a, a);
            let (bx, by) = to_px(b, b);
            canvas.line(ax, ay, bx, by, gray);
        }
    }
    for (k, (_, curve)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        // legend swatch
        let ly = m + 8 * k as i64;
        canvas.line(x1 - 40, ly, x1 - 24, ly, color);
        let mut prev: Option<(i64, i64)> = None;
        // points run from (1,1) to (0,0) along increasing threshold
        for p in &curve.points {
            let (px, py) = to_px(p.fpr, p.tpr);
            if let Some((qx, qy)) = prev {
                canvas.line(qx, qy, px, py, color);
            }
            prev = Some((px, py));
        }
    }
    Ok((size, size, canvas.px))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{roc_curve, LabeledScores};

    #[test]
    fn grid_layout_contract() {
        let cfg = crate::models::ArchConfig {
            image_size: 32,
            in_channels: 1,
            base_channels: 4,
            depth: 4,
            latent_dim: 8,
            branch_enabled: true,
            branch_channels: 8,
        };
        let mut rng = crate::rng::Rng::new(5);
        let gen: crate::models::Generator<f32> =
            crate::models::Generator::init(cfg, &mut rng).unwrap();
        let mut x = Tensor::zeros(&[2, 1, 32, 32]);
        for v in x.data_mut() {
            *v = rng.uniform() as f32;
        }
        let out = gen.forward_eval(&x, None, None).unwrap();
        let (w, h, c, bytes) = recon_grid(&out, &x, 1);
        assert_eq!(w, 4 * 32 + 3 * GRID_SEP);
        assert_eq!((h, c), (32, 1));
        assert_eq!(bytes.len(), w * h);
        // last panel is the original input, byte for byte
        let x_bytes = quantize(&x.data()[32 * 32..2 * 32 * 32]);
        let x_off = 3 * (32 + GRID_SEP);
        for row in 0..32 {
            assert_eq!(
                &bytes[row * w + x_off..row * w + x_off + 32],
                &x_bytes[row * 32..(row + 1) * 32]
            );
        }
    }

    #[test]
    fn plot_has_plausible_ink() {
        let ls = LabeledScores::new(vec![0.1, 0.9, 0.4, 0.8], vec![0, 1, 0, 1]).unwrap();
        let curve = roc_curve(&ls).unwrap();
        let (w, h, px) = roc_plot(&[("s".to_string(), curve)]).unwrap();
        assert_eq!(px.len(), w * h * 3);
        let non_white = px.chunks(3).filter(|c| c != &[255, 255, 255]).count();
        assert!(
            non_white > 500,
            "plot looks empty: {non_white} colored pixels"
        );
    }
}
