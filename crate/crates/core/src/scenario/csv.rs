//! Columnar audit format: one row per scenario, node and period.

use std::io::{BufRead, Write};

use super::{Psd, Scenario};
use crate::error::{Error, Result};
use crate::plant::MoistureLevel;

const HEADER: &str = "scenario,node,period,level,bale_density,moisture,density,p10,p50,p90,bypass,operating";

pub fn write_scenarios_csv(scenarios: &[Scenario], levels: &[MoistureLevel], mut w: impl Write) -> Result<()> {
    writeln!(w, "{HEADER}")?;
    for (s, sc) in scenarios.iter().enumerate() {
        for node in 0..sc.moisture.len() {
            for t in 0..sc.horizon() {
                let (p10, p50, p90) = match sc.psd[node].get(t) {
                    Some(p) => (format!("{:?}", p.p10), format!("{:?}", p.p50), format!("{:?}", p.p90)),
                    None => (String::new(), String::new(), String::new()),
                };
                writeln!(
                    w,
                    "{s},{node},{t},{},{:?},{:?},{:?},{p10},{p50},{p90},{:?},{}",
                    levels[t].symbol(),
                    sc.bale_density[t],
                    sc.moisture[node][t],
                    sc.density[node][t],
                    sc.bypass[t],
                    u8::from(sc.operating[node][t]),
                )?;
            }
        }
    }
    Ok(())
}

fn parse_err(line: usize, what: &str) -> Error {
    Error::Config(format!("scenario csv line {line}: {what}"))
}

/// Read scenarios back; rows may come in any order but must cover a full grid.
pub fn read_scenarios_csv(r: impl BufRead) -> Result<(Vec<Scenario>, Vec<MoistureLevel>)> {
    struct RowData {
        s: usize,
        node: usize,
        t: usize,
        level: MoistureLevel,
        vals: [f64; 3],
        psd: Option<Psd>,
        bypass: f64,
        up: bool,
    }
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != HEADER {
                return Err(parse_err(1, "unexpected header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(parse_err(i + 1, "expected 12 fields"));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|_| parse_err(i + 1, "bad number"));
        let idx = |k: usize| f[k].parse::<usize>().map_err(|_| parse_err(i + 1, "bad index"));
        let level = match f[3] {
            "L" => MoistureLevel::Low,
            "M" => MoistureLevel::Medium,
            "H" => MoistureLevel::High,
            _ => return Err(parse_err(i + 1, "bad moisture level")),
        };
        let psd = if f[8].is_empty() {
            None
        } else {
            Some(Psd { p10: num(7)?, p50: num(8)?, p90: num(9)? })
        };
        rows.push(RowData {
            s: idx(0)?,
            node: idx(1)?,
            t: idx(2)?,
            level,
            vals: [num(4)?, num(5)?, num(6)?],
            psd,
            bypass: num(10)?,
            up: f[11] == "1",
        });
    }
    let count = rows.iter().map(|r| r.s + 1).max().unwrap_or(0);
    let nodes = rows.iter().map(|r| r.node + 1).max().unwrap_or(0);
    let horizon = rows.iter().map(|r| r.t + 1).max().unwrap_or(0);
    if rows.len() != count * nodes * horizon {
        return Err(parse_err(0, "rows do not cover the scenario/node/period grid"));
    }
    let mut levels = vec![MoistureLevel::Low; horizon];
    let mut out: Vec<Scenario> = (0..count)
        .map(|_| Scenario {
            bale_density: vec![0.0; horizon],
            moisture: vec![vec![0.0; horizon]; nodes],
            density: vec![vec![0.0; horizon]; nodes],
            psd: vec![Vec::new(); nodes],
            bypass: vec![0.0; horizon],
            operating: vec![vec![true; horizon]; nodes],
        })
        .collect();
    let mut psd_cells: Vec<Vec<Vec<Option<Psd>>>> = vec![vec![vec![None; horizon]; nodes]; count];
    for r in rows {
        let sc = &mut out[r.s];
        levels[r.t] = r.level;
        sc.bale_density[r.t] = r.vals[0];
        sc.moisture[r.node][r.t] = r.vals[1];
        sc.density[r.node][r.t] = r.vals[2];
        sc.bypass[r.t] = r.bypass;
        sc.operating[r.node][r.t] = r.up;
        psd_cells[r.s][r.node][r.t] = r.psd;
    }
    for (sc, cells) in out.iter_mut().zip(psd_cells) {
        for (node, col) in cells.into_iter().enumerate() {
            if col.iter().all(Option::is_some) {
                sc.psd[node] = col.into_iter().flatten().collect();
            }
        }
    }
    Ok((out, levels))
}
