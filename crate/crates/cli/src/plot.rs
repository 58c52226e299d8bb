//! Minimal SVG rendering of a ROC curve with its bootstrap band.

use std::fmt::Write;

use trueimage_core::training::HeadEvaluation;

const SIZE: f64 = 360.0;
const PAD: f64 = 40.0;

fn x(fpr: f64) -> f64 {
    PAD + fpr * SIZE
}

fn y(tpr: f64) -> f64 {
    PAD + (1.0 - tpr) * SIZE
}

/// `None` for heads that could not be evaluated.
pub fn roc_svg(eval: &HeadEvaluation) -> Option<String> {
    let roc = eval.roc.as_ref()?;
    let full = SIZE + 2.0 * PAD;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full}" height="{full}" viewBox="0 0 {full} {full}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="{PAD}" y="{PAD}" width="{SIZE}" height="{SIZE}" fill="white" stroke="black"/>"#);
    let _ = writeln!(
        s,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999" stroke-dasharray="4 4"/>"##,
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    );
    if let Some(band) = &eval.band {
        let mut pts: Vec<String> = band.fpr_grid.iter().zip(&band.upper).map(|(f, t)| format!("{:.2},{:.2}", x(*f), y(*t))).collect();
        pts.extend(band.fpr_grid.iter().zip(&band.lower).rev().map(|(f, t)| format!("{:.2},{:.2}", x(*f), y(*t))));
        let _ = writeln!(s, r##"<polygon points="{}" fill="#4a90d9" fill-opacity="0.25" stroke="none"/>"##, pts.join(" "));
    }
    let curve: Vec<String> = roc.points.iter().map(|p| format!("{:.2},{:.2}", x(p.fpr), y(p.tpr))).collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#1f4e8c" stroke-width="2"/>"##, curve.join(" "));
    for p in &eval.profile_points {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#d9534f"><title>{} (fpr {:.3}, tpr {:.3})</title></circle>"##,
            x(p.fpr),
            y(p.tpr),
            p.profile,
            p.fpr,
            p.tpr
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{PAD}" y="{}">{} AUC {:.3}</text>"#,
        PAD - 12.0,
        eval.head.as_str(),
        roc.auc
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">false positive rate</text>"#, PAD + SIZE / 2.0, full - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">true positive rate</text>"#,
        PAD + SIZE / 2.0,
        PAD + SIZE / 2.0
    );
    s.push_str("</svg>\n");
    Some(s)
}
