//! Minimal standalone SVG rendering: line charts and heatmap rasters.

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 40.0;

/// Multi-series line chart; each series is (label, points).
pub fn line_chart(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().cloned()).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if pts.is_empty() || !(x0.is_finite() && y0.is_finite()) {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        xml_escape(title)
    );
    // axes
    s.push_str(&format!(
        "<line x1=\"{PAD}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{0}\" stroke=\"black\"/>\n\
         <text x=\"{PAD}\" y=\"{2}\" font-size=\"10\">{x0:.3}</text>\n\
         <text x=\"{1}\" y=\"{2}\" text-anchor=\"end\" font-size=\"10\">{x1:.3}</text>\n\
         <text x=\"5\" y=\"{0}\" font-size=\"10\">{y0:.3}</text>\n\
         <text x=\"5\" y=\"{PAD}\" font-size=\"10\">{y1:.3}</text>\n",
        H - PAD,
        W - PAD,
        H - PAD + 15.0
    ));
    for (i, (label, points)) in series.iter().enumerate() {
        let color = palette[i % palette.len()];
        let path: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"10\" fill=\"{color}\">{}</text>\n",
            path.join(" "),
            W - PAD + 4.0,
            PAD + 14.0 * i as f64,
            xml_escape(label)
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// Heatmap of a row-major n x n raster; NaN cells are left blank.
pub fn heatmap(title: &str, raster: &[f64], n: usize) -> String {
    let finite: Vec<f64> = raster.iter().cloned().filter(|v| v.is_finite()).collect();
    let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cell = 12.0;
    let w = n as f64 * cell;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" \
         viewBox=\"0 0 {0} {1}\">\n<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n\
         <text x=\"{2}\" y=\"16\" text-anchor=\"middle\" font-size=\"12\">{3}</text>\n",
        w,
        w + 24.0,
        w / 2.0,
        xml_escape(title)
    );
    for r in 0..n {
        for c in 0..n {
            let v = raster[r * n + c];
            if !v.is_finite() {
                continue;
            }
            let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            // blue -> white -> red
            let (red, green, blue) = if t < 0.5 {
                let u = t * 2.0;
                ((255.0 * u) as u8, (255.0 * u) as u8, 255)
            } else {
                let u = (1.0 - t) * 2.0;
                (255, (255.0 * u) as u8, (255.0 * u) as u8)
            };
            s.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{cell}\" height=\"{cell}\" \
                 fill=\"rgb({red},{green},{blue})\"/>\n",
                c as f64 * cell,
                // row 0 is the lowest y coordinate: draw bottom-up
                24.0 + (n - 1 - r) as f64 * cell
            ));
        }
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
