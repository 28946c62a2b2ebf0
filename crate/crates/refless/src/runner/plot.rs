//! Gold-vs-predicted per-system charts as standalone SVG files.

use std::path::Path;

use crate::corpus::{SystemScoreTable, QUALITY_NAMES};
use crate::error::{Error, Result};

const WIDTH_PER_SYSTEM: f64 = 24.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 56.0;
const PLOT_HEIGHT: f64 = 260.0;

/// Systems shared by both tables, sorted by descending gold score for
/// the quality (ties by system id).
fn shared_systems_sorted(
    pred: &SystemScoreTable,
    gold: &SystemScoreTable,
    quality: usize,
) -> Vec<String> {
    let mut shared: Vec<String> = gold
        .rows
        .keys()
        .filter(|sys| pred.rows.contains_key(*sys))
        .cloned()
        .collect();
    shared.sort_by(|a, b| {
        let ga = gold.rows[a].get(quality);
        let gb = gold.rows[b].get(quality);
        gb.partial_cmp(&ga).unwrap().then_with(|| a.cmp(b))
    });
    shared
}

fn polyline(points: &[(f64, f64)]) -> String {
    points
        .iter()
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Render one quality's chart: per-system gold and predicted means,
/// systems on the x-axis in descending gold order, y-axis spanning the
/// full 1..5 score range.
pub fn plot_gold_vs_predicted(
    pred: &SystemScoreTable,
    gold: &SystemScoreTable,
    quality: usize,
    path: &Path,
) -> Result<()> {
    if quality >= 5 {
        return Err(Error::Config(format!("quality index {quality} outside 0..=4")));
    }
    let systems = shared_systems_sorted(pred, gold, quality);
    if systems.len() < 2 {
        return Err(Error::Validation(format!(
            "plotting needs at least 2 shared systems, got {}",
            systems.len()
        )));
    }
    let n = systems.len();
    let width = MARGIN_LEFT + MARGIN_RIGHT + WIDTH_PER_SYSTEM * n as f64;
    let height = MARGIN_TOP + MARGIN_BOTTOM + PLOT_HEIGHT;
    let x_of = |i: usize| MARGIN_LEFT + WIDTH_PER_SYSTEM * (i as f64 + 0.5);
    // Score 5 at the top, score 1 at the bottom.
    let y_of = |score: f64| MARGIN_TOP + PLOT_HEIGHT * (5.0 - score) / 4.0;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.0}\" y=\"20\" font-size=\"14\" font-family=\"sans-serif\">{} — gold vs predicted per system</text>\n",
        MARGIN_LEFT,
        QUALITY_NAMES[quality]
    ));
    // Axes and horizontal gridlines at each integer score.
    for tick in 1..=5 {
        let y = y_of(tick as f64);
        svg.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n",
            MARGIN_LEFT,
            width - MARGIN_RIGHT
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"end\">{tick}</text>\n",
            MARGIN_LEFT - 8.0,
            y + 4.0
        ));
    }
    svg.push_str(&format!(
        "  <line x1=\"{l:.1}\" y1=\"{t:.1}\" x2=\"{l:.1}\" y2=\"{b:.1}\" stroke=\"#333\"/>\n",
        l = MARGIN_LEFT,
        t = y_of(5.0),
        b = y_of(1.0)
    ));
    svg.push_str(&format!(
        "  <line x1=\"{l:.1}\" y1=\"{b:.1}\" x2=\"{r:.1}\" y2=\"{b:.1}\" stroke=\"#333\"/>\n",
        l = MARGIN_LEFT,
        r = width - MARGIN_RIGHT,
        b = y_of(1.0)
    ));

    let gold_points: Vec<(f64, f64)> = systems
        .iter()
        .enumerate()
        .map(|(i, sys)| (x_of(i), y_of(gold.rows[sys].get(quality))))
        .collect();
    let pred_points: Vec<(f64, f64)> = systems
        .iter()
        .enumerate()
        .map(|(i, sys)| (x_of(i), y_of(pred.rows[sys].get(quality))))
        .collect();
    svg.push_str(&format!(
        "  <polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n",
        polyline(&gold_points)
    ));
    svg.push_str(&format!(
        "  <polyline points=\"{}\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\" stroke-dasharray=\"4 3\"/>\n",
        polyline(&pred_points)
    ));
    for (x, y) in &gold_points {
        svg.push_str(&format!(
            "  <circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"#1f77b4\"/>\n"
        ));
    }
    for (x, y) in &pred_points {
        svg.push_str(&format!(
            "  <rect x=\"{:.2}\" y=\"{:.2}\" width=\"5\" height=\"5\" fill=\"#d62728\"/>\n",
            x - 2.5,
            y - 2.5
        ));
    }
    // System labels along the x-axis.
    for (i, sys) in systems.iter().enumerate() {
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"9\" font-family=\"sans-serif\" \
             text-anchor=\"end\" transform=\"rotate(-60 {:.1} {:.1})\">{sys}</text>\n",
            x_of(i),
            y_of(1.0) + 14.0,
            x_of(i),
            y_of(1.0) + 14.0
        ));
    }
    // Legend.
    svg.push_str(&format!(
        "  <circle cx=\"{:.1}\" cy=\"30\" r=\"3\" fill=\"#1f77b4\"/>\n  <text x=\"{:.1}\" y=\"34\" font-size=\"11\" font-family=\"sans-serif\">gold</text>\n",
        width - 150.0,
        width - 142.0
    ));
    svg.push_str(&format!(
        "  <rect x=\"{:.1}\" y=\"27.5\" width=\"5\" height=\"5\" fill=\"#d62728\"/>\n  <text x=\"{:.1}\" y=\"34\" font-size=\"11\" font-family=\"sans-serif\">predicted</text>\n",
        width - 90.0,
        width - 80.0
    ));
    svg.push_str("</svg>\n");

    std::fs::write(path, svg).map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::QualityVector;
    use std::collections::BTreeMap;

    fn table(values: &[(&str, f64)]) -> SystemScoreTable {
        let rows: BTreeMap<String, QualityVector> = values
            .iter()
            .map(|(s, v)| {
                (
                    s.to_string(),
                    QualityVector::new([*v, 3.0, 3.0, 3.0, 3.0]).unwrap(),
                )
            })
            .collect();
        SystemScoreTable {
            dataset_id: "d".into(),
            coverage: rows.keys().map(|k| (k.clone(), 1)).collect(),
            rows,
        }
    }

    #[test]
    fn identical_tables_draw_coincident_series() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q1.svg");
        let gold = table(&[("a", 4.0), ("b", 3.0), ("c", 2.0)]);
        plot_gold_vs_predicted(&gold, &gold, 0, &path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        let polylines: Vec<&str> = svg
            .lines()
            .filter(|l| l.contains("<polyline"))
            .collect();
        assert_eq!(polylines.len(), 2);
        let extract = |line: &str| {
            let start = line.find("points=\"").unwrap() + 8;
            let end = line[start..].find('"').unwrap();
            line[start..start + end].to_string()
        };
        assert_eq!(extract(polylines[0]), extract(polylines[1]));
    }

    #[test]
    fn systems_sort_by_descending_gold() {
        let gold = table(&[("low", 1.5), ("high", 4.5), ("mid", 3.0)]);
        let pred = table(&[("low", 2.0), ("high", 4.0), ("mid", 3.0)]);
        let order = shared_systems_sorted(&pred, &gold, 0);
        assert_eq!(order, vec!["high", "mid", "low"]);
    }

    #[test]
    fn thirty_two_systems_get_thirty_two_positions() {
        let values: Vec<(String, f64)> = (0..32)
            .map(|i| (format!("s{i:02}"), 1.0 + 4.0 * (i as f64) / 31.0))
            .collect();
        let refs: Vec<(&str, f64)> = values.iter().map(|(s, v)| (s.as_str(), *v)).collect();
        let gold = table(&refs);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.svg");
        plot_gold_vs_predicted(&gold, &gold, 0, &path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert_eq!(svg.matches("<circle").count(), 32 + 1); // 32 points + legend
    }

    #[test]
    fn fewer_than_two_systems_is_an_error() {
        let gold = table(&[("only", 3.0)]);
        let dir = tempfile::tempdir().unwrap();
        assert!(plot_gold_vs_predicted(&gold, &gold, 0, &dir.path().join("x.svg")).is_err());
    }
}
