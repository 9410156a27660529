//! Minimal hand-written SVG charts for the explore outputs.

use std::fmt::Write;

use polylogit::{CorrespondenceResult, ProfileRow};

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Linear map from a data interval onto a pixel interval.
struct Scale {
    lo: f64,
    hi: f64,
    p0: f64,
    p1: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, p0: f64, p1: f64) -> Self {
        let (lo, hi) = if hi - lo > 1e-12 { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
        Self { lo, hi, p0, p1 }
    }

    fn at(&self, x: f64) -> f64 {
        self.p0 + (x - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)
    }
}

fn header(out: &mut String, width: u32, height: u32, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2,
        escape(title)
    );
}

/// Symmetric CA map of the first two dimensions: rows as circles, columns as
/// squares. A single-dimension solution is drawn on the horizontal axis.
pub fn biplot(ca: &CorrespondenceResult) -> String {
    let (w, h, m) = (640.0, 560.0, 60.0);
    let rows: Vec<(f64, f64)> = (0..ca.row_labels.len())
        .map(|i| (ca.row_coord(i, 0), ca.row_coord(i, 1)))
        .collect();
    let cols: Vec<(f64, f64)> = (0..ca.col_labels.len())
        .map(|j| (ca.col_coord(j, 0), ca.col_coord(j, 1)))
        .collect();
    let points: Vec<(f64, f64)> = rows.iter().chain(&cols).copied().collect();
    let span = |f: fn(&(f64, f64)) -> f64| {
        let lo = points.iter().map(f).fold(0.0f64, f64::min);
        let hi = points.iter().map(f).fold(0.0f64, f64::max);
        let pad = 0.12 * (hi - lo).max(1e-9);
        (lo - pad, hi + pad)
    };
    let (x0, x1) = span(|p| p.0);
    let (y0, y1) = span(|p| p.1);
    let sx = Scale::new(x0, x1, m, w - m);
    let sy = Scale::new(y0, y1, h - m, m);
    let share = |d: usize| 100.0 * ca.inertia_share.get(d).copied().unwrap_or(0.0);

    let mut out = String::new();
    header(&mut out, w as u32, h as u32, "Correspondence analysis (symmetric map)");
    let _ = writeln!(
        out,
        r##"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="#999"/>"##,
        w - 2.0 * m,
        h - 2.0 * m
    );
    let _ = writeln!(
        out,
        r##"<line x1="{m}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#bbb" stroke-dasharray="4 3"/>"##,
        w - m,
        y = sy.at(0.0)
    );
    let _ = writeln!(
        out,
        r##"<line x1="{x:.2}" y1="{m}" x2="{x:.2}" y2="{}" stroke="#bbb" stroke-dasharray="4 3"/>"##,
        h - m,
        x = sx.at(0.0)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">Dimension 1 ({:.1}%)</text>"#,
        w / 2.0,
        h - m / 2.0 + 8.0,
        share(0)
    );
    let _ = writeln!(
        out,
        r#"<text x="{x}" y="{y}" text-anchor="middle" transform="rotate(-90 {x} {y})">Dimension 2 ({:.1}%)</text>"#,
        share(1),
        x = m / 2.0 - 8.0,
        y = h / 2.0
    );
    for (i, label) in ca.row_labels.iter().enumerate() {
        let (x, y) = (sx.at(rows[i].0), sy.at(rows[i].1));
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{}"/><text x="{:.2}" y="{:.2}" fill="{}">{}</text>"#,
            PALETTE[0],
            x + 6.0,
            y - 4.0,
            PALETTE[0],
            escape(label)
        );
    }
    for (i, label) in ca.col_labels.iter().enumerate() {
        let (x, y) = (sx.at(cols[i].0), sy.at(cols[i].1));
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="{}"/><text x="{:.2}" y="{:.2}" fill="{}">{}</text>"#,
            x - 4.0,
            y - 4.0,
            PALETTE[1],
            x + 6.0,
            y - 4.0,
            PALETTE[1],
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Category proportions over weeks, one panel per group.
pub fn profiles(rows: &[ProfileRow]) -> String {
    let mut weeks: Vec<&str> = Vec::new();
    let mut groups: Vec<&str> = Vec::new();
    let mut cats: Vec<&str> = Vec::new();
    for r in rows {
        for (list, v) in [(&mut weeks, &r.week), (&mut groups, &r.group), (&mut cats, &r.category)] {
            if !list.contains(&v.as_str()) {
                list.push(v);
            }
        }
    }
    let (w, panel_h, m, legend) = (640.0, 220.0, 50.0, 150.0);
    let h = 40.0 + groups.len() as f64 * (panel_h + 20.0);
    let mut out = String::new();
    header(&mut out, (w + legend) as u32, h as u32, "Mean profiles");
    for (g, group) in groups.iter().enumerate() {
        let top = 40.0 + g as f64 * (panel_h + 20.0);
        let sx = Scale::new(0.0, (weeks.len().max(2) - 1) as f64, m, w - 20.0);
        let sy = Scale::new(0.0, 1.0, top + panel_h - 30.0, top + 10.0);
        let _ = writeln!(
            out,
            r##"<rect x="{m}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#999"/>"##,
            top + 10.0,
            w - 20.0 - m,
            panel_h - 40.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{m}" y="{:.2}">{}</text>"#,
            top + 5.0,
            escape(group)
        );
        for tick in [0.0, 0.5, 1.0] {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{tick:.1}</text>"#,
                m - 4.0,
                sy.at(tick) + 4.0
            );
        }
        for (k, week) in weeks.iter().enumerate() {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                sx.at(k as f64),
                top + panel_h - 14.0,
                escape(week)
            );
        }
        for (c, cat) in cats.iter().enumerate() {
            let color = PALETTE[c % PALETTE.len()];
            // Weeks without observations split the line.
            let mut segments: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
            for (k, week) in weeks.iter().enumerate() {
                let p = rows
                    .iter()
                    .find(|r| r.group == *group && r.week == *week && r.category == *cat)
                    .and_then(|r| r.proportion);
                match p {
                    Some(p) => segments.last_mut().unwrap().push((sx.at(k as f64), sy.at(p))),
                    None => segments.push(Vec::new()),
                }
            }
            for seg in segments.iter().filter(|s| !s.is_empty()) {
                let pts: Vec<String> = seg.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    out,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    pts.join(" ")
                );
                for (x, y) in seg {
                    let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"#);
                }
            }
        }
    }
    for (c, cat) in cats.iter().enumerate() {
        let y = 50.0 + 16.0 * c as f64;
        let color = PALETTE[c % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{tx}" y="{ty}">{}</text>"#,
            escape(cat),
            x0 = w + 5.0,
            x1 = w + 25.0,
            tx = w + 30.0,
            ty = y + 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use polylogit::explore::correspondence;
    use polylogit::Contingency;

    #[test]
    fn labels_are_escaped() {
        assert_eq!(escape(r#"a<b & "c">'"#), "a&lt;b &amp; &quot;c&quot;&gt;&apos;");
    }

    #[test]
    fn one_dimensional_biplot_is_well_formed() {
        let mut t = Contingency::from_rows(&[vec![10.0, 20.0], vec![20.0, 10.0]]).unwrap();
        t.row_labels = vec!["<m>".into(), "f&f".into()];
        let svg = biplot(&correspondence(&t).unwrap());
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("circle")).count(), 2);
        assert!(svg.contains("Dimension 2 (0.0%)"));
    }

    #[test]
    fn empty_weeks_split_profile_lines() {
        let row = |week: &str, p: Option<f64>| ProfileRow {
            week: week.into(),
            group: "g".into(),
            category: "c".into(),
            count: 0,
            total: p.map_or(0, |_| 1),
            proportion: p,
        };
        let rows = [row("1", Some(0.2)), row("2", Some(0.4)), row("3", None), row("4", Some(0.1))];
        let svg = profiles(&rows);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count(), 2);
    }
}
