//! Deterministic SVG rendering of a world with overlaid episode traces.
//!
//! Graph changes picked up from the traces are color coded: green marks
//! additions, blue marks removals, red marks objects that moved between
//! carriers. Identical inputs produce byte-identical output.

use std::fmt::Write as _;

use crate::simworld::WorldModel;
use crate::trace::TraceLine;
use crate::Vec2;

const SCALE: f64 = 60.0;
const MARGIN: f64 = 20.0;
const LEGEND_H: f64 = 96.0;

/// Colors cycled across trace files for the walked paths.
const PATH_COLORS: [&str; 6] = ["#7b3fa9", "#2a7de1", "#1e9e6e", "#d58f1f", "#c24a6b", "#54707e"];

struct Canvas {
    svg: String,
    height_m: f64,
    origin: Vec2,
}

impl Canvas {
    fn x(&self, wx: f64) -> f64 {
        MARGIN + (wx - self.origin.x) * SCALE
    }

    fn y(&self, wy: f64) -> f64 {
        /* SVG y grows downward */
        MARGIN + (self.height_m - (wy - self.origin.y)) * SCALE
    }
}

fn esc(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders the world and any number of trace files into one SVG document.
pub fn render_svg(world: &WorldModel, traces: &[Vec<TraceLine>]) -> String {
    let grid = &world.grid;
    let width_m = grid.resolution * grid.width as f64;
    let height_m = grid.resolution * grid.height as f64;
    let width_px = width_m * SCALE + 2.0 * MARGIN;
    let height_px = height_m * SCALE + 2.0 * MARGIN + LEGEND_H;
    let mut c = Canvas { svg: String::new(), height_m, origin: grid.origin };

    let _ = write!(
        c.svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        fmt(width_px),
        fmt(height_px),
        fmt(width_px),
        fmt(height_px)
    );
    let _ = write!(
        c.svg,
        "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#fbfaf7\"/>\n",
        fmt(width_px),
        fmt(height_px)
    );

    // Blocked cells.
    for cy in 0..grid.height {
        for cx in 0..grid.width {
            if !grid.is_occupied(cx, cy) {
                continue;
            }
            let wx = grid.origin.x + cx as f64 * grid.resolution;
            let wy = grid.origin.y + (cy + 1) as f64 * grid.resolution;
            let _ = write!(
                c.svg,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#d8d4cc\"/>\n",
                fmt(c.x(wx)),
                fmt(c.y(wy)),
                fmt(grid.resolution * SCALE),
                fmt(grid.resolution * SCALE)
            );
        }
    }

    // Room outlines and names.
    for room in &world.rooms {
        let points: Vec<String> = room
            .vertices
            .iter()
            .map(|v| format!("{},{}", fmt(c.x(v.x)), fmt(c.y(v.y))))
            .collect();
        let _ = write!(
            c.svg,
            "<polygon points=\"{}\" fill=\"none\" stroke=\"#9a938a\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>\n",
            points.join(" ")
        );
        let cx = room.vertices.iter().map(|v| v.x).sum::<f64>() / room.vertices.len() as f64;
        let cy = room.vertices.iter().map(|v| v.y).sum::<f64>() / room.vertices.len() as f64;
        let _ = write!(
            c.svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#9a938a\" text-anchor=\"middle\">{}</text>\n",
            fmt(c.x(cx)),
            fmt(c.y(cy)),
            esc(&room.name)
        );
    }

    // Objects at their current world positions.
    for (id, wo) in &world.objects {
        let b = &wo.record.aabb;
        let mean = wo.record.appearance.mean_rgb();
        let (r, g, bl) = (mean[0].round() as u8, mean[1].round() as u8, mean[2].round() as u8);
        let fill = format!("#{r:02x}{g:02x}{bl:02x}");
        if wo.carrier.is_none() {
            let _ = write!(
                c.svg,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" fill-opacity=\"0.55\" stroke=\"#5d564e\" stroke-width=\"1\"/>\n",
                fmt(c.x(b.min.x)),
                fmt(c.y(b.max.y)),
                fmt((b.max.x - b.min.x) * SCALE),
                fmt((b.max.y - b.min.y) * SCALE),
                fill
            );
            let _ = write!(
                c.svg,
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#3b352e\" text-anchor=\"middle\">{}</text>\n",
                fmt(c.x(wo.record.centroid.x)),
                fmt(c.y(wo.record.centroid.y) + 3.0),
                esc(id)
            );
        } else {
            let _ = write!(
                c.svg,
                "<circle cx=\"{}\" cy=\"{}\" r=\"5\" fill=\"{}\" stroke=\"#3b352e\" stroke-width=\"1\"/>\n",
                fmt(c.x(wo.record.centroid.x)),
                fmt(c.y(wo.record.centroid.y)),
                fill
            );
        }
    }

    // Start pose.
    let _ = write!(
        c.svg,
        "<circle cx=\"{}\" cy=\"{}\" r=\"6\" fill=\"none\" stroke=\"#444\" stroke-width=\"2\"/>\n",
        fmt(c.x(world.start.position.x)),
        fmt(c.y(world.start.position.y))
    );

    // Walked paths and graph deltas from the traces.
    for (t, lines) in traces.iter().enumerate() {
        let color = PATH_COLORS[t % PATH_COLORS.len()];
        let mut points: Vec<String> = Vec::new();
        for line in lines {
            let step = match line {
                TraceLine::Step(step) => step,
                TraceLine::Summary(_) => continue,
            };
            for wp in &step.waypoints {
                points.push(format!("{},{}", fmt(c.x(wp.x)), fmt(c.y(wp.y))));
            }
        }
        if points.len() > 1 {
            let _ = write!(
                c.svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\" stroke-opacity=\"0.8\"/>\n",
                points.join(" "),
                color
            );
        }
        for line in lines {
            let step = match line {
                TraceLine::Step(step) => step,
                TraceLine::Summary(_) => continue,
            };
            for added in &step.graph_delta.added {
                let p = added.object.centroid;
                let _ = write!(
                    c.svg,
                    "<circle cx=\"{}\" cy=\"{}\" r=\"7\" fill=\"none\" stroke=\"#1e9e3a\" stroke-width=\"2.5\"/>\n",
                    fmt(c.x(p.x)),
                    fmt(c.y(p.y))
                );
            }
            for removed in &step.graph_delta.removed {
                let p = removed.last_centroid;
                let (x, y) = (c.x(p.x), c.y(p.y));
                let _ = write!(
                    c.svg,
                    "<path d=\"M {} {} L {} {} M {} {} L {} {}\" stroke=\"#2458d6\" stroke-width=\"2.5\"/>\n",
                    fmt(x - 6.0),
                    fmt(y - 6.0),
                    fmt(x + 6.0),
                    fmt(y + 6.0),
                    fmt(x - 6.0),
                    fmt(y + 6.0),
                    fmt(x + 6.0),
                    fmt(y - 6.0)
                );
            }
            for moved in &step.graph_delta.moved {
                let from = moved.from_centroid;
                let to = moved.to_centroid;
                let _ = write!(
                    c.svg,
                    "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#d62b2b\" stroke-width=\"1.5\" stroke-dasharray=\"4 3\"/>\n",
                    fmt(c.x(from.x)),
                    fmt(c.y(from.y)),
                    fmt(c.x(to.x)),
                    fmt(c.y(to.y))
                );
                let _ = write!(
                    c.svg,
                    "<circle cx=\"{}\" cy=\"{}\" r=\"7\" fill=\"none\" stroke=\"#d62b2b\" stroke-width=\"2.5\"/>\n",
                    fmt(c.x(to.x)),
                    fmt(c.y(to.y))
                );
            }
        }
    }

    // Legend.
    let ly = height_m * SCALE + 2.0 * MARGIN;
    let legend = [
        ("#1e9e3a", "added to a carrier"),
        ("#2458d6", "removed from a carrier"),
        ("#d62b2b", "moved between carriers"),
    ];
    let _ = write!(
        c.svg,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#3b352e\">{}</text>\n",
        fmt(MARGIN),
        fmt(ly + 14.0),
        esc(&world.building)
    );
    for (i, (color, label)) in legend.iter().enumerate() {
        let y = ly + 34.0 + i as f64 * 18.0;
        let _ = write!(
            c.svg,
            "<circle cx=\"{}\" cy=\"{}\" r=\"5\" fill=\"none\" stroke=\"{}\" stroke-width=\"2.5\"/>\n",
            fmt(MARGIN + 6.0),
            fmt(y - 4.0),
            color
        );
        let _ = write!(
            c.svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#3b352e\">{}</text>\n",
            fmt(MARGIN + 18.0),
            fmt(y),
            label
        );
    }

    c.svg.push_str("</svg>\n");
    c.svg
}
