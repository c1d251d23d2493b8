//! Regularity reports: per-check defect values, estimated constants, and
//! pass/fail verdicts, serialized as self-describing key: value blocks,
//! plus a minimal log-log SVG plot for defect-vs-h refinement studies.

use std::fmt;

/// One check outcome. `metrics` holds named measured values (defects,
/// constants, exponents); the verdict compares the headline value against
/// `tolerance`.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub metrics: Vec<(String, f64)>,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckResult {
    pub fn new(name: &str, tolerance: f64) -> Self {
        CheckResult {
            name: name.to_string(),
            metrics: Vec::new(),
            tolerance,
            pass: true,
        }
    }

    pub fn metric(mut self, key: &str, value: f64) -> Self {
        self.metrics.push((key.to_string(), value));
        self
    }

    /// Adds the headline metric and sets the verdict: value ≤ tolerance.
    pub fn headline(mut self, key: &str, value: f64) -> Self {
        self.pass = value <= self.tolerance;
        self.metrics.push((key.to_string(), value));
        self
    }

    pub fn fail_if(mut self, condition: bool) -> Self {
        if condition {
            self.pass = false;
        }
        self
    }
}

/// Aggregated verification report. All defect fields are ≥ 0 by
/// construction (positive-part aggregates); `passed()` is the overall
/// verdict.
#[derive(Debug, Clone, Default)]
pub struct RegularityReport {
    /// Free-form header entries (domain, eps, h, refinements, ...).
    pub header: Vec<(String, String)>,
    pub checks: Vec<CheckResult>,
}

impl RegularityReport {
    pub fn push(&mut self, check: CheckResult) {
        self.checks.push(check);
    }

    pub fn header_entry(&mut self, key: &str, value: impl fmt::Display) {
        self.header.push((key.to_string(), value.to_string()));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for RegularityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# regularity report")?;
        for (k, v) in &self.header {
            writeln!(f, "{k}: {v}")?;
        }
        for c in &self.checks {
            writeln!(f)?;
            writeln!(f, "check: {}", c.name)?;
            for (k, v) in &c.metrics {
                writeln!(f, "  {k}: {v:.6e}")?;
            }
            writeln!(f, "  tolerance: {:.6e}", c.tolerance)?;
            writeln!(f, "  verdict: {}", if c.pass { "pass" } else { "FAIL" })?;
        }
        Ok(())
    }
}

/// Writes a log-log scatter/line plot of one or more (x, y) series.
/// Hand-rolled SVG: axes, decade gridlines, polylines with markers.
pub fn loglog_svg(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    const W: f64 = 560.0;
    const H: f64 = 420.0;
    const MARGIN: f64 = 60.0;
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.1.iter().copied())
        .filter(|&(x, y)| x > 0.0 && y > 0.0)
        .collect();
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        W / 2.0
    ));
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x0 = x0.min(x.log10());
        x1 = x1.max(x.log10());
        y0 = y0.min(y.log10());
        y1 = y1.max(y.log10());
    }
    let pad = |lo: &mut f64, hi: &mut f64| {
        if (*hi - *lo).abs() < 1e-12 {
            *lo -= 0.5;
            *hi += 0.5;
        } else {
            let m = 0.08 * (*hi - *lo);
            *lo -= m;
            *hi += m;
        }
    };
    pad(&mut x0, &mut x1);
    pad(&mut y0, &mut y1);
    let sx = |x: f64| MARGIN + (x.log10() - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y.log10() - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    // decade gridlines
    for e in (x0.floor() as i64)..=(x1.ceil() as i64) {
        let x = sx(10f64.powi(e as i32));
        if (MARGIN..=W - MARGIN).contains(&x) {
            svg.push_str(&format!(
                "<line x1=\"{x:.1}\" y1=\"{MARGIN}\" x2=\"{x:.1}\" y2=\"{:.1}\" \
                 stroke=\"#ddd\"/>\n<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\" \
                 font-size=\"11\">1e{e}</text>\n",
                H - MARGIN,
                H - MARGIN + 16.0
            ));
        }
    }
    for e in (y0.floor() as i64)..=(y1.ceil() as i64) {
        let y = sy(10f64.powi(e as i32));
        if (MARGIN..=H - MARGIN).contains(&y) {
            svg.push_str(&format!(
                "<line x1=\"{MARGIN}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
                 stroke=\"#ddd\"/>\n<text x=\"{:.1}\" y=\"{y:.1}\" text-anchor=\"end\" \
                 font-size=\"11\">1e{e}</text>\n",
                W - MARGIN,
                MARGIN - 6.0
            ));
        }
    }
    svg.push_str(&format!(
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" \
         stroke=\"black\"/>\n",
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    ));

    const COLORS: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
    for (si, (label, data)) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        let path: Vec<String> = data
            .iter()
            .filter(|&&(x, y)| x > 0.0 && y > 0.0)
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        if path.len() > 1 {
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                path.join(" ")
            ));
        }
        for p in &path {
            let (px, py) = p.split_once(',').unwrap();
            svg.push_str(&format!(
                "<circle cx=\"{px}\" cy=\"{py}\" r=\"3\" fill=\"{color}\"/>\n"
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"{color}\">{label}</text>\n",
            W - MARGIN - 150.0,
            MARGIN + 16.0 + 16.0 * si as f64
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_roundtrip_text() {
        let mut rep = RegularityReport::default();
        rep.header_entry("domain", "ball r=1");
        rep.push(
            CheckResult::new("concavity", 0.3)
                .metric("h", 0.03)
                .headline("defect", 0.01),
        );
        rep.push(CheckResult::new("gradient", 0.0).fail_if(true));
        let text = rep.to_string();
        assert!(text.contains("check: concavity"));
        assert!(text.contains("verdict: pass"));
        assert!(text.contains("verdict: FAIL"));
        assert!(!rep.passed());
    }

    #[test]
    fn svg_has_points() {
        let svg = loglog_svg(
            "defect vs h",
            &[("concavity".into(), vec![(0.1, 0.01), (0.05, 0.004)])],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.matches("<circle").count() == 2);
        assert!(svg.ends_with("</svg>\n"));
    }
}
