//! Trajectory CSV rows and static SVG rendering.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use safeinit_core::dynamics::VehicleState;
use safeinit_core::safety_policy::Mode;
use safeinit_core::simulator::{count_step_violations, SimResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajRow {
    pub t: f64,
    pub vehicle: usize,
    pub qx: f64,
    pub qy: f64,
    pub theta: f64,
    /// `goal`, `avoid:<j>`, or `none` after the vehicle stopped.
    pub mode: String,
    pub active: bool,
}

fn mode_label(m: Option<Mode>) -> String {
    match m {
        Some(Mode::Goal) => "goal".into(),
        Some(Mode::Avoid(j)) => format!("avoid:{j}"),
        None => "none".into(),
    }
}

/// Step-major rows: every vehicle at step 0, then step 1, ...
pub fn rows_from_result(res: &SimResult) -> Vec<TrajRow> {
    let steps = res.trajectories.first().map_or(0, Vec::len);
    let mut rows = Vec::with_capacity(steps * res.trajectories.len());
    for k in 0..steps {
        for (v, traj) in res.trajectories.iter().enumerate() {
            let p = &traj[k];
            rows.push(TrajRow {
                t: p.t,
                vehicle: v,
                qx: p.state.qx,
                qy: p.state.qy,
                theta: p.state.theta,
                mode: mode_label(p.mode),
                active: p.active,
            });
        }
    }
    rows
}

pub fn write_csv(rows: &[TrajRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner()?)
}

pub fn read_csv(bytes: &[u8]) -> Result<Vec<TrajRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    r.deserialize()
        .enumerate()
        .map(|(k, row)| row.with_context(|| format!("trajectory row {}", k + 1)))
        .collect()
}

/// Per-vehicle series recovered from step-major rows.
fn series(rows: &[TrajRow]) -> Result<Vec<Vec<&TrajRow>>> {
    let n = rows.iter().map(|r| r.vehicle + 1).max().unwrap_or(0);
    let mut out: Vec<Vec<&TrajRow>> = vec![Vec::new(); n];
    for r in rows {
        out[r.vehicle].push(r);
    }
    if out.iter().any(|s| s.len() != out[0].len()) {
        bail!("vehicles have different numbers of trajectory rows");
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marker {
    pub step: usize,
    pub i: usize,
    pub j: usize,
    pub x: f64,
    pub y: f64,
}

/// Recomputes the violation log from the recorded positions and flags.
pub fn violations(rows: &[TrajRow], rc: f64) -> Result<Vec<Marker>> {
    let s = series(rows)?;
    let steps = s.first().map_or(0, Vec::len);
    let mut out = Vec::new();
    for k in 0..steps {
        let states: Vec<VehicleState> = s.iter().map(|v| VehicleState::new(v[k].qx, v[k].qy, v[k].theta)).collect();
        let active: Vec<bool> = s.iter().map(|v| v[k].active).collect();
        for (i, j) in count_step_violations(&states, &active, rc) {
            out.push(Marker {
                step: k,
                i,
                j,
                x: 0.5 * (states[i].qx + states[j].qx),
                y: 0.5 * (states[i].qy + states[j].qy),
            });
        }
    }
    Ok(out)
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#d62728",
];

/// Paths, start dots, danger-zone circles at the final positions, goal
/// crosses and one marker per violation. y points up.
pub fn render_svg(rows: &[TrajRow], goals: Option<&[[f64; 2]]>, rc: f64) -> Result<String> {
    let s = series(rows)?;
    let marks = violations(rows, rc)?;
    let mut xs: Vec<f64> = rows.iter().map(|r| r.qx).collect();
    let mut ys: Vec<f64> = rows.iter().map(|r| r.qy).collect();
    for g in goals.unwrap_or(&[]) {
        xs.push(g[0]);
        ys.push(g[1]);
    }
    if xs.is_empty() {
        bail!("nothing to plot");
    }
    let pad = rc + 2.0;
    let lo = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min) - pad;
    let hi = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + pad;
    let (x0, x1, y0, y1) = (lo(&xs), hi(&xs), lo(&ys), hi(&ys));
    let (w, h) = (x1 - x0, y1 - y0);
    let px = 800.0 / w.max(h);

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="{:.3} {:.3} {:.3} {:.3}">"#,
        w * px,
        h * px,
        x0,
        -y1,
        w,
        h
    )?;
    writeln!(out, r#"<rect x="{x0:.3}" y="{:.3}" width="{w:.3}" height="{h:.3}" fill="white"/>"#, -y1)?;
    let sw = 0.004 * w.max(h);
    for (v, traj) in s.iter().enumerate() {
        let color = PALETTE[v % PALETTE.len()];
        let mut pts = String::new();
        for (k, r) in traj.iter().enumerate() {
            if k > 0 {
                pts.push(' ');
            }
            write!(pts, "{:.3},{:.3}", r.qx, -r.qy)?;
        }
        writeln!(
            out,
            r#"<polyline class="path" data-vehicle="{v}" points="{pts}" fill="none" stroke="{color}" stroke-width="{sw:.3}"/>"#
        )?;
        if let (Some(first), Some(last)) = (traj.first(), traj.last()) {
            writeln!(
                out,
                r#"<circle class="start" cx="{:.3}" cy="{:.3}" r="{:.3}" fill="{color}"/>"#,
                first.qx,
                -first.qy,
                3.0 * sw
            )?;
            writeln!(
                out,
                r#"<circle class="danger-zone" cx="{:.3}" cy="{:.3}" r="{rc:.3}" fill="none" stroke="{color}" stroke-width="{:.3}" stroke-dasharray="{:.3}"/>"#,
                last.qx,
                -last.qy,
                0.5 * sw,
                4.0 * sw
            )?;
        }
    }
    for (v, g) in goals.unwrap_or(&[]).iter().enumerate() {
        let color = PALETTE[v % PALETTE.len()];
        let d = 4.0 * sw;
        let (gx, gy) = (g[0], -g[1]);
        writeln!(
            out,
            r#"<path class="goal" d="M{:.3},{:.3}L{:.3},{:.3}M{:.3},{:.3}L{:.3},{:.3}" stroke="{color}" stroke-width="{sw:.3}"/>"#,
            gx - d,
            gy - d,
            gx + d,
            gy + d,
            gx - d,
            gy + d,
            gx + d,
            gy - d
        )?;
    }
    for m in &marks {
        writeln!(
            out,
            r#"<circle class="violation" data-step="{}" data-pair="{}-{}" cx="{:.3}" cy="{:.3}" r="{:.3}" fill="red" fill-opacity="0.6"/>"#,
            m.step,
            m.i,
            m.j,
            m.x,
            -m.y,
            5.0 * sw
        )?;
    }
    writeln!(out, "</svg>")?;
    Ok(out)
}
