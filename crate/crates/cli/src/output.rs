//! CSV, SVG and table emitters. All output is a pure function of its input.

use std::fmt::Write as _;
use std::io::Write;

use ladder_kv::{LadderConfig, PatternKind, RetentionMask, SweepResult, Trace};

pub const CELL_PX: usize = 8;

/// `step,event,layer,occupancy,n_compactions`
pub fn write_trace_csv<W: Write>(trace: &Trace, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "event", "layer", "occupancy", "n_compactions"])?;
    for r in &trace.rows {
        w.write_record([
            r.step.to_string(),
            r.event.to_string(),
            r.layer.to_string(),
            r.occupancy.to_string(),
            r.n_compactions.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `event_index,layer,token_id`, one row per retained entry after each
/// compaction. Writes only the header when survival was not recorded.
pub fn write_survival_csv<W: Write>(trace: &Trace, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["event_index", "layer", "token_id"])?;
    for (i, rec) in trace.survival.iter().flatten().enumerate() {
        for (layer, ids) in rec.retained.iter().enumerate() {
            for id in ids {
                w.write_record([i.to_string(), layer.to_string(), id.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `label,cache_cells,min_coverage,on_front`
pub fn write_sweep_csv<W: Write>(result: &SweepResult, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "cache_cells", "min_coverage", "on_front"])?;
    for (p, on_front) in result.points.iter().zip(&result.on_front) {
        w.write_record([
            p.label.clone(),
            p.cache_cells.to_string(),
            p.min_coverage.to_string(),
            on_front.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Cell class by slot: sinks, the recent tail, and the body (named after
/// the policy that shaped it).
fn cell_class(cfg: &LadderConfig, kind: PatternKind, slot: usize, slots: usize) -> &'static str {
    if slot < cfg.sinks {
        "sink"
    } else if slot + cfg.recent_exempt >= slots {
        "recent"
    } else {
        match kind {
            PatternKind::Ladder => "ladder",
            PatternKind::Streaming => "window",
            PatternKind::Full => "full",
            PatternKind::Random(_) => "random",
        }
    }
}

/// Retention grid: x is the slot, y the layer (layer 0 on top), one
/// `CELL_PX` square per retained cell, then a legend of the classes used.
pub fn render_svg(mask: &RetentionMask, cfg: &LadderConfig, kind: PatternKind) -> String {
    let (layers, slots) = (mask.layers(), mask.slots());
    let grid_w = slots * CELL_PX;
    let grid_h = layers * CELL_PX;
    let legend_y = grid_h + CELL_PX;
    let width = grid_w.max(320);
    let height = legend_y + 2 * CELL_PX;

    let mut used: Vec<&str> = Vec::new();
    let mut cells = String::new();
    for layer in 0..layers {
        for slot in mask.row(layer).iter_ones() {
            let class = cell_class(cfg, kind, slot, slots);
            if !used.contains(&class) {
                used.push(class);
            }
            let _ = writeln!(
                cells,
                r#"<rect class="{class}" data-layer="{layer}" data-slot="{slot}" x="{}" y="{}" width="{CELL_PX}" height="{CELL_PX}"/>"#,
                slot * CELL_PX,
                layer * CELL_PX
            );
        }
    }
    let order = ["sink", "ladder", "window", "full", "random", "recent"];
    used.sort_by_key(|c| order.iter().position(|o| o == c));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    svg.push_str(
        "<style>.grid{fill:#f3f3f3}.sink{fill:#1f4e79}.ladder{fill:#3a8f5c}.window{fill:#8e6bb8}\
.full{fill:#7a7a7a}.random{fill:#c0763a}.recent{fill:#d9a520}text{font:10px sans-serif}</style>\n",
    );
    let _ = writeln!(svg, r#"<title>{kind} retention, {layers} layers x {slots} slots</title>"#);
    let _ = writeln!(svg, r#"<rect class="grid" x="0" y="0" width="{grid_w}" height="{grid_h}"/>"#);
    svg.push_str("<g id=\"cells\">\n");
    svg.push_str(&cells);
    svg.push_str("</g>\n<g id=\"legend\">\n");
    for (i, class) in used.iter().enumerate() {
        let x = i * 80;
        let _ = writeln!(
            svg,
            r#"<rect class="{class}" x="{x}" y="{legend_y}" width="{CELL_PX}" height="{CELL_PX}"/><text x="{}" y="{}">{class}</text>"#,
            x + CELL_PX + 4,
            legend_y + CELL_PX
        );
    }
    svg.push_str("</g>\n</svg>\n");
    svg
}

/// Aligned comparison table, one row per trace.
pub fn compare_table(traces: &[Trace]) -> String {
    let header = ["policy", "compactions", "distinct_tokens", "min_coverage", "mean_coverage", "budget_event"];
    let rows: Vec<[String; 6]> = traces
        .iter()
        .map(|t| {
            [
                t.policy.to_string(),
                t.n_compactions().to_string(),
                t.final_coverage.distinct_tokens.to_string(),
                t.final_coverage.min_coverage.to_string(),
                format!("{:.3}", t.final_coverage.mean_coverage),
                match t.exhausted_at {
                    Some(step) => format!("OOM-analog at step {step}"),
                    None => "-".into(),
                },
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let mut line = |cols: Vec<&str>| {
        let cells: Vec<String> = cols
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec());
    for r in &rows {
        line(r.iter().map(String::as_str).collect());
    }
    out
}
