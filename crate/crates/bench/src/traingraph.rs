//! Time-distance diagrams: one polyline per train, time on the horizontal
//! axis, position along a chosen node corridor on the vertical axis.

use railsched_core::error::{Error, Result};
use railsched_core::model::{HorizonVector, Solution, SystemState};
use railsched_core::network::{Network, TrainSpec};

/// Plot-ready trajectory of one train: nodes visited with departure times.
#[derive(Debug, Clone)]
pub struct TrainPlot {
    pub id: String,
    /// Visited node ids within the schedule, in order.
    pub nodes: Vec<String>,
    /// Departure time from each node except the last.
    pub departures: Vec<f64>,
    /// Travel time of each hop.
    pub travel: Vec<f64>,
}

const PALETTE: [&str; 8] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];

fn fmt(x: f64) -> String {
    format!("{:.2}", x)
}

/// Render an SVG train graph over the given corridor (ordered node ids).
/// Every polyline vertex is an (arrival or departure, corridor position)
/// pair; trains that never touch the corridor are an error.
pub fn render_train_graph(plots: &[TrainPlot], corridor: &[String]) -> Result<String> {
    let pos_of = |node: &str| corridor.iter().position(|c| c == node);
    // Gather points per train first so the time range is known.
    let mut polylines: Vec<(String, Vec<(f64, usize)>)> = Vec::new();
    let mut t_max = 0.0f64;
    for plot in plots {
        let mut points: Vec<(f64, usize)> = Vec::new();
        let mut arrival = 0.0f64;
        for (k, node) in plot.nodes.iter().enumerate() {
            let departure = plot.departures.get(k).copied();
            if let Some(p) = pos_of(node) {
                points.push((arrival, p));
                if let Some(d) = departure {
                    points.push((d, p));
                }
            }
            if let Some(d) = departure {
                arrival = d + plot.travel[k];
                t_max = t_max.max(arrival);
            }
        }
        if points.is_empty() {
            return Err(Error::ProjectionMismatch(plot.id.clone()));
        }
        polylines.push((plot.id.clone(), points));
    }
    t_max = t_max.max(1.0);

    let (w, h) = (800.0, 480.0);
    let (ml, mr, mt, mb) = (60.0, 20.0, 20.0, 40.0);
    let px = |t: f64| ml + (w - ml - mr) * (t / t_max);
    let py = |p: usize| {
        let span = (corridor.len().saturating_sub(1)).max(1) as f64;
        mt + (h - mt - mb) * (p as f64 / span)
    };
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for (p, node) in corridor.iter().enumerate() {
        let y = py(p);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>\n",
            fmt(ml),
            fmt(y),
            fmt(w - mr),
            fmt(y)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            fmt(ml - 6.0),
            fmt(y + 4.0),
            node
        ));
    }
    for tick in 0..=6 {
        let t = t_max * tick as f64 / 6.0;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            fmt(px(t)),
            fmt(h - mb + 16.0),
            fmt(t)
        ));
    }
    for (i, (id, points)) in polylines.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> =
            points.iter().map(|&(t, p)| format!("{},{}", fmt(px(t)), fmt(py(p)))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n",
            color,
            coords.join(" ")
        ));
        let &(t, p) = points.last().unwrap();
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{}\">{}</text>\n",
            fmt(px(t) + 4.0),
            fmt(py(p) - 4.0),
            color,
            id
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Build plot trajectories from a solved problem.
pub fn plots_from_solution(
    network: &Network,
    trains: &[TrainSpec],
    state: &SystemState,
    horizons: &HorizonVector,
    solution: &Solution,
) -> Vec<TrainPlot> {
    trains
        .iter()
        .zip(&state.positions)
        .enumerate()
        .filter(|(_, (_, pos))| !pos.arrived)
        .map(|(i, (train, pos))| {
            let f = horizons[i];
            let nodes = train.node_path[pos.progress..=pos.progress + f]
                .iter()
                .map(|&n| network.node_id(n).to_string())
                .collect();
            let mut travel: Vec<f64> =
                train.travel_times[pos.progress..pos.progress + f].to_vec();
            if pos.on_edge() && f > 0 {
                travel[0] *= 1.0 - pos.edge_fraction;
            }
            TrainPlot {
                id: train.id.clone(),
                nodes,
                departures: solution.y[i].clone(),
                travel,
            }
        })
        .collect()
}

/// End-to-end convenience: project a schedule on a corridor of node ids.
pub fn emit_train_graph(
    network: &Network,
    trains: &[TrainSpec],
    state: &SystemState,
    horizons: &HorizonVector,
    solution: &Solution,
    corridor: &[String],
) -> Result<String> {
    let plots = plots_from_solution(network, trains, state, horizons, solution);
    render_train_graph(&plots, corridor)
}
