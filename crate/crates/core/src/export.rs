//! CSV and GraphML writers for the pipeline's tabular outputs.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! inputs always give byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::corpus::{format_timestamp, ArticleSet};
use crate::netreconstruct::{generations, nodes_of, Edge, SpreadNetwork, ThresholdCurve, WindowSweep};
use crate::sirmodel::{DailyCounts, LambdaPoint};
use crate::stats::Bin;
use crate::{Error, Result};

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `infector_id,infected_id,similarity,lag_hours`; similarity is blank for
/// simulated edges.
pub fn write_edges_csv(net: &SpreadNetwork, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["infector_id", "infected_id", "similarity", "lag_hours"])?;
    for e in net.edges() {
        w.write_record([
            net.nodes()[e.infector].id.as_str(),
            net.nodes()[e.infected].id.as_str(),
            &opt(e.similarity),
            &e.lag_hours.to_string(),
        ])?;
    }
    finish(w)
}

/// Reads an edge list written by [`write_edges_csv`] over the articles of `set`.
pub fn read_edges_csv(path: impl AsRef<Path>, set: &ArticleSet) -> Result<SpreadNetwork> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let index = set.index_by_id();
    let mut edges = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let bad = |m: String| Error::Malformed { line, message: m };
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", rec.len())));
        }
        let node = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| bad(format!("unknown article id {id}")))
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("not a number: {s}")));
        edges.push(Edge {
            infector: node(&rec[0])?,
            infected: node(&rec[1])?,
            similarity: if rec[2].is_empty() { None } else { Some(num(&rec[2])?) },
            lag_hours: num(&rec[3])?,
            step: None,
        });
    }
    SpreadNetwork::new(nodes_of(set), edges)
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Directed GraphML with node attributes publisher, published_at and
/// generation, and edge attributes similarity and lag_hours.
pub fn write_graphml(net: &SpreadNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let levels = generations(net)?;
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let mut body = String::new();
    body.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    body.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    body.push_str("  <key id=\"publisher\" for=\"node\" attr.name=\"publisher\" attr.type=\"string\"/>\n");
    body.push_str("  <key id=\"published_at\" for=\"node\" attr.name=\"published_at\" attr.type=\"string\"/>\n");
    body.push_str("  <key id=\"generation\" for=\"node\" attr.name=\"generation\" attr.type=\"int\"/>\n");
    body.push_str("  <key id=\"similarity\" for=\"edge\" attr.name=\"similarity\" attr.type=\"double\"/>\n");
    body.push_str("  <key id=\"lag_hours\" for=\"edge\" attr.name=\"lag_hours\" attr.type=\"double\"/>\n");
    body.push_str("  <graph id=\"spread\" edgedefault=\"directed\">\n");
    for (n, level) in net.nodes().iter().zip(&levels) {
        body.push_str(&format!(
            "    <node id=\"{}\"><data key=\"publisher\">{}</data><data key=\"published_at\">{}</data><data key=\"generation\">{}</data></node>\n",
            xml_escape(&n.id),
            xml_escape(&n.publisher),
            format_timestamp(&n.published_at),
            level
        ));
    }
    for e in net.edges() {
        let sim = e
            .similarity
            .map(|s| format!("<data key=\"similarity\">{s}</data>"))
            .unwrap_or_default();
        body.push_str(&format!(
            "    <edge source=\"{}\" target=\"{}\">{}<data key=\"lag_hours\">{}</data></edge>\n",
            xml_escape(&net.nodes()[e.infector].id),
            xml_escape(&net.nodes()[e.infected].id),
            sim,
            e.lag_hours
        ));
    }
    body.push_str("  </graph>\n</graphml>\n");
    w.write_all(body.as_bytes()).map_err(io)?;
    w.flush().map_err(io)
}

pub fn write_threshold_csv(curve: &ThresholdCurve, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rho", "giant_fraction"])?;
    for (rho, g) in &curve.points {
        w.write_record([rho.to_string(), g.to_string()])?;
    }
    finish(w)
}

/// One summary row per window; lag columns are blank when a window saw no lags.
pub fn write_window_csv(sweep: &WindowSweep, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["window_hours", "p50_lag", "p95_lag", "max_lag"])?;
    for win in &sweep.windows {
        w.write_record([
            win.window_hours.to_string(),
            opt(win.p50()),
            opt(win.p95()),
            opt(win.max()),
        ])?;
    }
    finish(w)
}

/// Raw lags per window, long form `window_hours,lag_hours`.
pub fn write_window_lags_csv(sweep: &WindowSweep, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["window_hours", "lag_hours"])?;
    for win in &sweep.windows {
        for lag in &win.lags {
            w.write_record([win.window_hours.to_string(), lag.to_string()])?;
        }
    }
    finish(w)
}

pub fn write_lambda_csv(curve: &[LambdaPoint], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["lambda", "peak_per_day", "peak_time_days"])?;
    for p in curve {
        w.write_record([
            p.lambda.to_string(),
            p.peak_per_day.to_string(),
            p.peak_time_days.to_string(),
        ])?;
    }
    finish(w)
}

pub fn write_histogram_csv(bins: &[Bin], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_low", "bin_high", "count"])?;
    for b in bins {
        w.write_record([b.low.to_string(), b.high.to_string(), b.count.to_string()])?;
    }
    finish(w)
}

/// `day,date,count` with `day` counted from the first publication date.
pub fn write_daily_counts_csv(counts: &DailyCounts, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["day", "date", "count"])?;
    for (d, c) in counts.counts.iter().enumerate() {
        let date = counts
            .first_day
            .and_then(|f| f.checked_add_days(chrono::Days::new(d as u64)))
            .map(|x| x.to_string())
            .unwrap_or_default();
        w.write_record([d.to_string(), date, c.to_string()])?;
    }
    finish(w)
}

/// Reads `day,date,count` back into day-indexed counts.
pub fn read_daily_counts_csv(path: impl AsRef<Path>) -> Result<Vec<u64>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let count = rec.get(2).and_then(|c| c.parse().ok()).ok_or(Error::Malformed {
            line: k + 2,
            message: "expected day,date,count".into(),
        })?;
        out.push(count);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    #[test]
    fn edges_round_trip() {
        let c = generate(&SynthConfig {
            n_cascades: 2,
            articles_per_cascade: 6,
            ..SynthConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("edges.csv");
        write_edges_csv(&c.truth, &p).unwrap();
        let back = read_edges_csv(&p, &c.articles).unwrap();
        assert_eq!(back.edge_ids(), c.truth.edge_ids());
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("infector_id,infected_id,similarity,lag_hours\n"));
        assert!(text.lines().nth(1).unwrap().contains(",,"));
    }

    #[test]
    fn graphml_has_generations() {
        let c = generate(&SynthConfig {
            n_cascades: 1,
            articles_per_cascade: 3,
            ..SynthConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.graphml");
        write_graphml(&c.truth, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.matches("<node ").count(), 3);
        assert_eq!(text.matches("<edge ").count(), 2);
        assert!(text.contains("<data key=\"generation\">0</data>"));
        assert!(text.contains("<data key=\"generation\">1</data>"));
    }

    #[test]
    fn escapes_markup() {
        assert_eq!(xml_escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }

    #[test]
    fn daily_counts_round_trip() {
        let counts = DailyCounts {
            first_day: chrono::NaiveDate::from_ymd_opt(2015, 1, 7),
            counts: vec![2, 0, 5],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("daily.csv");
        write_daily_counts_csv(&counts, &p).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().contains("2,2015-01-09,5"));
        assert_eq!(read_daily_counts_csv(&p).unwrap(), vec![2, 0, 5]);
    }
}
