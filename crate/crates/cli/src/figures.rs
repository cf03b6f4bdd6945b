//! SVG figures. Every figure is a pure function of its JSON-serializable inputs.

use std::fmt::Write;

use base64::Engine;
use breathnet_core::evaluation::{ConfusionMatrix, RocCurve};
use breathnet_core::training::EpochLog;
use breathnet_core::{Class, N_CLASSES};

pub const OVERLAY_ALPHA: f64 = 0.45;

const PALETTE: [&str; N_CLASSES] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];

// viridis sampled at nine evenly spaced points
const VIRIDIS: [[f64; 3]; 9] = [
    [68.0, 1.0, 84.0],
    [71.0, 44.0, 122.0],
    [59.0, 81.0, 139.0],
    [44.0, 113.0, 142.0],
    [33.0, 144.0, 141.0],
    [39.0, 173.0, 129.0],
    [92.0, 200.0, 99.0],
    [170.0, 220.0, 50.0],
    [253.0, 231.0, 37.0],
];

pub fn viridis(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (VIRIDIS.len() - 1) as f64;
    let i = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let f = x - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (VIRIDIS[i][c] * (1.0 - f) + VIRIDIS[i + 1][c] * f).round() as u8;
    }
    out
}

pub fn grayscale(t: f64) -> [u8; 3] {
    let v = (if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 } * 255.0).round() as u8;
    [v, v, v]
}

/// 24-bit bottom-up BMP. `values` are row-major with row 0 drawn at the bottom.
pub fn bmp(values: &[f64], rows: usize, cols: usize, lo: f64, hi: f64, cmap: fn(f64) -> [u8; 3]) -> Vec<u8> {
    let stride = (cols * 3).div_ceil(4) * 4;
    let size = 54 + stride * rows;
    let mut b = Vec::with_capacity(size);
    b.extend_from_slice(b"BM");
    b.extend_from_slice(&(size as u32).to_le_bytes());
    b.extend_from_slice(&[0; 4]);
    b.extend_from_slice(&54u32.to_le_bytes());
    b.extend_from_slice(&40u32.to_le_bytes());
    b.extend_from_slice(&(cols as i32).to_le_bytes());
    b.extend_from_slice(&(rows as i32).to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&24u16.to_le_bytes());
    b.extend_from_slice(&[0; 24]);
    let span = if hi > lo { hi - lo } else { 1.0 };
    for r in 0..rows {
        for c in 0..cols {
            let [red, g, bl] = cmap((values[r * cols + c] - lo) / span);
            b.extend_from_slice(&[bl, g, red]);
        }
        b.resize(b.len() + stride - cols * 3, 0);
    }
    b
}

fn data_uri(bmp: &[u8]) -> String {
    format!("data:image/bmp;base64,{}", base64::engine::general_purpose::STANDARD.encode(bmp))
}

fn range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

pub fn confusion_svg(cm: &ConfusionMatrix, title: &str) -> String {
    let cell = 64.0;
    let (x0, y0) = (110.0, 50.0);
    let mut s = open(x0 + cell * 5.0 + 30.0, y0 + cell * 5.0 + 70.0);
    let _ = writeln!(s, "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>", x0 + cell * 2.5, esc(title));
    for (i, row) in cm.counts.iter().enumerate() {
        let total = cm.row_sum(i).max(1) as f64;
        for (j, &n) in row.iter().enumerate() {
            let frac = n as f64 / total;
            let [r, g, b] = viridis(frac);
            let (x, y) = (x0 + j as f64 * cell, y0 + i as f64 * cell);
            let ink = if frac > 0.6 { "black" } else { "white" };
            let _ = writeln!(
                s,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell:.1}\" height=\"{cell:.1}\" fill=\"rgb({r},{g},{b})\" stroke=\"white\"/>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"{ink}\">{n}</text>",
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    for c in Class::ALL {
        let k = c.index() as f64;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            x0 - 8.0,
            y0 + k * cell + cell / 2.0 + 4.0,
            c.name(),
            x0 + k * cell + cell / 2.0,
            y0 + 5.0 * cell + 18.0,
            c.name()
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">Predicted</text>\n<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">True</text>",
        x0 + cell * 2.5,
        y0 + 5.0 * cell + 44.0,
        y0 + cell * 2.5,
        y0 + cell * 2.5
    );
    s.push_str("</svg>\n");
    s
}

struct Axes {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Axes {
    fn px(&self, v: f64) -> f64 {
        self.x + (v - self.xr.0) / (self.xr.1 - self.xr.0).max(1e-12) * self.w
    }

    fn py(&self, v: f64) -> f64 {
        self.y + self.h - (v - self.yr.0) / (self.yr.1 - self.yr.0).max(1e-12) * self.h
    }

    fn frame(&self, s: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            s,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>",
            self.x, self.y, self.w, self.h
        );
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"14\">{}</text>", self.x + self.w / 2.0, self.y - 10.0, esc(title));
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", self.x + self.w / 2.0, self.y + self.h + 34.0, esc(xlabel));
        let (lx, ly) = (self.x - 42.0, self.y + self.h / 2.0);
        let _ = writeln!(s, "<text x=\"{lx:.1}\" y=\"{ly:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 {lx:.1} {ly:.1})\">{}</text>", esc(ylabel));
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = self.xr.0 + f * (self.xr.1 - self.xr.0);
            let yv = self.yr.0 + f * (self.yr.1 - self.yr.0);
            let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"10\">{}</text>", self.px(xv), self.y + self.h + 16.0, tick(xv));
            let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"10\">{}</text>", self.x - 5.0, self.py(yv) + 3.0, tick(yv));
        }
    }

    fn polyline(&self, s: &mut String, pts: impl Iterator<Item = (f64, f64)>, color: &str, dash: bool) {
        let p: Vec<String> = pts.map(|(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        let d = if dash { " stroke-dasharray=\"5 4\"" } else { "" };
        let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"{d}/>", p.join(" "));
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || (v.fract() == 0.0 && v.abs() >= 1.0) {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn legend(s: &mut String, x: f64, y: f64, items: &[(String, &str, bool)]) {
    for (i, (label, color, dash)) in items.iter().enumerate() {
        let yy = y + i as f64 * 16.0;
        let d = if *dash { " stroke-dasharray=\"5 4\"" } else { "" };
        let _ = writeln!(
            s,
            "<line x1=\"{x:.1}\" y1=\"{yy:.1}\" x2=\"{:.1}\" y2=\"{yy:.1}\" stroke=\"{color}\" stroke-width=\"2\"{d}/>\n<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\">{}</text>",
            x + 20.0,
            x + 25.0,
            yy + 4.0,
            esc(label)
        );
    }
}

pub fn roc_svg(curves: &[RocCurve], title: &str) -> String {
    let ax = Axes {
        x: 70.0,
        y: 40.0,
        w: 360.0,
        h: 360.0,
        xr: (0.0, 1.0),
        yr: (0.0, 1.0),
    };
    let mut s = open(640.0, 460.0);
    ax.frame(&mut s, title, "False positive rate", "True positive rate");
    ax.polyline(&mut s, [(0.0, 0.0), (1.0, 1.0)].into_iter(), "#999999", true);
    let mut items = Vec::new();
    for c in curves {
        let color = PALETTE[c.class.index()];
        ax.polyline(&mut s, c.points.iter().map(|p| (p.fpr, p.tpr)), color, false);
        let auc = c.auc.map_or("n/a".to_string(), |a| format!("{a:.4}"));
        items.push((format!("{} (AUC {auc})", c.class.name()), color, false));
    }
    legend(&mut s, 445.0, 60.0, &items);
    s.push_str("</svg>\n");
    s
}

pub fn learning_curves_svg(logs: &[EpochLog], title: &str) -> String {
    let n = logs.len().max(2) as f64;
    let losses: Vec<f64> = logs.iter().flat_map(|l| [l.train_loss, l.val_loss]).collect();
    let (_, hi) = range(&losses);
    let loss_ax = Axes {
        x: 70.0,
        y: 50.0,
        w: 330.0,
        h: 260.0,
        xr: (1.0, n),
        yr: (0.0, if hi > 0.0 { hi * 1.05 } else { 1.0 }),
    };
    let acc_ax = Axes {
        x: 500.0,
        y: 50.0,
        w: 330.0,
        h: 260.0,
        xr: (1.0, n),
        yr: (0.0, 1.0),
    };
    let mut s = open(1000.0, 370.0);
    let _ = writeln!(s, "<text x=\"450\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">{}</text>", esc(title));
    loss_ax.frame(&mut s, "Loss", "Epoch", "Loss");
    acc_ax.frame(&mut s, "Accuracy and macro-F1", "Epoch", "Score");
    let ep = |l: &EpochLog| l.epoch as f64;
    loss_ax.polyline(&mut s, logs.iter().map(|l| (ep(l), l.train_loss)), PALETTE[0], false);
    loss_ax.polyline(&mut s, logs.iter().map(|l| (ep(l), l.val_loss)), PALETTE[1], true);
    acc_ax.polyline(&mut s, logs.iter().map(|l| (ep(l), l.train_accuracy)), PALETTE[0], false);
    acc_ax.polyline(&mut s, logs.iter().map(|l| (ep(l), l.val_accuracy)), PALETTE[1], true);
    acc_ax.polyline(&mut s, logs.iter().map(|l| (ep(l), l.val_macro_f1)), PALETTE[2], true);
    for l in logs.iter().filter(|l| l.lr_reduced) {
        let x = loss_ax.px(ep(l));
        let _ = writeln!(s, "<line x1=\"{x:.2}\" y1=\"50\" x2=\"{x:.2}\" y2=\"310\" stroke=\"#bbbbbb\" stroke-dasharray=\"2 3\"/>");
    }
    legend(
        &mut s,
        845.0,
        70.0,
        &[
            ("train loss / acc".into(), PALETTE[0], false),
            ("val loss / acc".into(), PALETTE[1], true),
            ("val macro-F1".into(), PALETTE[2], true),
        ],
    );
    s.push_str("</svg>\n");
    s
}

/// One panel of an attribution overlay.
pub struct Panel<'a> {
    pub title: String,
    /// Attribution map drawn over the spectrogram; `None` shows the spectrogram alone.
    pub heat: Option<&'a [f64]>,
}

/// Spectrogram panels with optional heat overlays, plus an optional SHAP bar chart.
pub fn overlay_svg(
    title: &str,
    mel: &[f64],
    rows: usize,
    cols: usize,
    panels: &[Panel],
    bars: Option<(&[String], &[f64])>,
) -> String {
    let (pw, ph) = (cols as f64 * 1.2, rows as f64 * 1.6);
    let gap = 30.0;
    let n_bars = bars.map_or(0, |(n, _)| n.len());
    let width = 40.0 + panels.len() as f64 * (pw + gap) + if n_bars > 0 { 420.0 } else { 0.0 };
    let height = (ph + 90.0).max(60.0 + n_bars as f64 * 18.0 + 40.0);
    let mut s = open(width, height);
    let _ = writeln!(s, "<text x=\"20\" y=\"22\" font-size=\"15\">{}</text>", esc(title));
    let (lo, hi) = range(mel);
    let base = data_uri(&bmp(mel, rows, cols, lo, hi, grayscale));
    for (i, p) in panels.iter().enumerate() {
        let x = 40.0 + i as f64 * (pw + gap);
        let y = 50.0;
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", x + pw / 2.0, y - 8.0, esc(&p.title));
        let _ = writeln!(s, "<image x=\"{x:.1}\" y=\"{y:.1}\" width=\"{pw:.1}\" height=\"{ph:.1}\" preserveAspectRatio=\"none\" href=\"{base}\"/>");
        if let Some(h) = p.heat {
            let m = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let scaled: Vec<f64> = h.iter().map(|v| if m > 0.0 { v.abs() / m } else { 0.0 }).collect();
            let uri = data_uri(&bmp(&scaled, rows, cols, 0.0, 1.0, viridis));
            let _ = writeln!(s, "<image x=\"{x:.1}\" y=\"{y:.1}\" width=\"{pw:.1}\" height=\"{ph:.1}\" preserveAspectRatio=\"none\" opacity=\"{OVERLAY_ALPHA}\" href=\"{uri}\"/>");
        }
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"10\">time frame</text>", x + pw / 2.0, y + ph + 16.0);
    }
    if let Some((names, vals)) = bars {
        let x0 = 40.0 + panels.len() as f64 * (pw + gap) + 150.0;
        let m = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let mid = x0 + 110.0;
        let _ = writeln!(s, "<text x=\"{mid:.1}\" y=\"42\" text-anchor=\"middle\">SHAP (handcrafted)</text>");
        let _ = writeln!(s, "<line x1=\"{mid:.1}\" y1=\"50\" x2=\"{mid:.1}\" y2=\"{:.1}\" stroke=\"black\"/>", 50.0 + n_bars as f64 * 18.0);
        for (i, (n, &v)) in names.iter().zip(vals).enumerate() {
            let y = 52.0 + i as f64 * 18.0;
            let len = v.abs() / m * 100.0;
            let (x, color) = if v >= 0.0 { (mid, "#d62728") } else { (mid - len, "#1f77b4") };
            let _ = writeln!(
                s,
                "<rect x=\"{x:.2}\" y=\"{y:.1}\" width=\"{len:.2}\" height=\"14\" fill=\"{color}\"/>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"10\">{}</text>",
                x0 - 5.0,
                y + 11.0,
                esc(n)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bmp_geometry() {
        let b = bmp(&[0.0, 0.5, 1.0, 0.25, 0.75, 1.0], 2, 3, 0.0, 1.0, viridis);
        assert_eq!(&b[..2], b"BM");
        assert_eq!(b.len(), 54 + 2 * 12);
        assert_eq!(u32::from_le_bytes(b[2..6].try_into().unwrap()) as usize, b.len());
        // first pixel is the low end of viridis, stored BGR
        assert_eq!(&b[54..57], &[84, 1, 68]);
    }

    #[test]
    fn colormap_is_monotone_in_luminance() {
        let lum = |c: [u8; 3]| 0.2126 * c[0] as f64 + 0.7152 * c[1] as f64 + 0.0722 * c[2] as f64;
        let mut prev = -1.0;
        for k in 0..=50 {
            let l = lum(viridis(k as f64 / 50.0));
            assert!(l > prev);
            prev = l;
        }
    }

    #[test]
    fn figures_are_deterministic() {
        let mut cm = ConfusionMatrix::default();
        cm.counts[0][0] = 3;
        cm.counts[1][0] = 1;
        assert_eq!(confusion_svg(&cm, "t"), confusion_svg(&cm, "t"));
        assert!(confusion_svg(&cm, "t").starts_with("<svg"));
    }
}
