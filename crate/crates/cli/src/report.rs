use std::fmt::Write as _;

use lidarnas::search::HistoryRecord;

pub const FITNESS_HEADER: &str = "index,fitness,best_so_far,quality,latency_ms";

fn num(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        Some(x) if x > 0.0 => "inf".into(),
        Some(_) => "-inf".into(),
        None => String::new(),
    }
}

fn best_so_far(records: &[HistoryRecord]) -> Vec<f64> {
    let mut best = f64::NEG_INFINITY;
    records
        .iter()
        .map(|r| {
            best = best.max(r.fitness);
            best
        })
        .collect()
}

/// One row per evaluation; failures carry `-inf` fitness and empty metrics.
pub fn fitness_csv(records: &[HistoryRecord]) -> String {
    let mut out = String::from(FITNESS_HEADER);
    out.push('\n');
    for (r, b) in records.iter().zip(best_so_far(records)) {
        let _ = writeln!(out, "{},{},{},{},{}", r.index, num(Some(r.fitness)), num(Some(b)), num(r.quality), num(r.latency_ms));
    }
    out
}

/// Best-so-far fitness against evaluation index as a single SVG polyline.
pub fn best_so_far_svg(records: &[HistoryRecord]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 48.0;
    let pts: Vec<(f64, f64)> = best_so_far(records)
        .into_iter()
        .enumerate()
        .filter(|(_, f)| f.is_finite())
        .map(|(i, f)| (i as f64, f))
        .collect();
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{M} {M} L{M} {y0} L{x1} {y0}" fill="none" stroke="black" stroke-width="1"/>"#,
        y0 = H - M,
        x1 = W - M
    );
    if let (Some(lo), Some(hi)) = (
        pts.iter().map(|p| p.1).reduce(f64::min),
        pts.iter().map(|p| p.1).reduce(f64::max),
    ) {
        let span = if hi > lo { hi - lo } else { 1.0 };
        let xmax = (records.len().max(2) - 1) as f64;
        let sx = |i: f64| M + i / xmax * (W - 2.0 * M);
        let sy = |f: f64| H - M - (f - lo) / span * (H - 2.0 * M);
        let coords: Vec<String> = pts.iter().map(|&(i, f)| format!("{:.2},{:.2}", sx(i), sy(f))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, coords.join(" "));
        let _ = writeln!(svg, r#"<text x="{M}" y="{:.0}" font-size="12" font-family="sans-serif">{hi:.3}</text>"#, M - 8.0);
        let _ = writeln!(svg, r#"<text x="{M}" y="{:.0}" font-size="12" font-family="sans-serif">{lo:.3}</text>"#, H - M + 16.0);
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.0}" y="{:.0}" font-size="12" font-family="sans-serif" text-anchor="end">evaluations: {}</text>"#,
        W - M,
        H - M + 16.0,
        records.len()
    );
    svg.push_str("</svg>\n");
    svg
}
