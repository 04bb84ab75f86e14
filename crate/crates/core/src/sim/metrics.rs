//! Per-tick, per-VM output series and its CSV form.
//!
//! Rows quantize their floating-point fields to six decimals on creation
//! and the CSV writes exactly six decimals, so writing and re-parsing a
//! series reproduces it bit for bit.

use std::io::Write;

use crate::{Tick, VmId};

pub const CSV_HEADER: &str =
    "tick,vm,offered_pct,alpha,level,clamp,admitted_pct,attacker_share_pct,blocked";

/// Rounds to six decimals, folding negative zero into zero so formatting
/// stays sign-stable.
pub fn q6(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub tick: Tick,
    pub vm: u16,
    pub offered_pct: f64,
    pub alpha: f64,
    pub level: u8,
    pub clamp: f64,
    pub admitted_pct: f64,
    pub attacker_share_pct: f64,
    /// Packets removed by the IDPS filter this tick.
    pub blocked: u64,
}

impl Row {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        tick: Tick,
        vm: VmId,
        offered_pct: f64,
        alpha: f64,
        level: u8,
        clamp: f64,
        admitted_pct: f64,
        attacker_share_pct: f64,
        blocked: u64,
    ) -> Self {
        Row {
            tick,
            vm: vm.0,
            offered_pct: q6(offered_pct),
            alpha: q6(alpha),
            level,
            clamp: q6(clamp),
            admitted_pct: q6(admitted_pct),
            attacker_share_pct: q6(attacker_share_pct),
            blocked,
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{},{:.6},{:.6},{:.6},{}",
            self.tick,
            self.vm,
            self.offered_pct,
            self.alpha,
            self.level,
            self.clamp,
            self.admitted_pct,
            self.attacker_share_pct,
            self.blocked
        )
    }
}

/// Renders the whole series, header first, one line per row.
pub fn to_csv(rows: &[Row]) -> String {
    let mut out = String::with_capacity((rows.len() + 1) * 64);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv());
        out.push('\n');
    }
    out
}

pub fn write_csv(rows: &[Row], mut w: impl Write) -> std::io::Result<()> {
    w.write_all(to_csv(rows).as_bytes())
}

/// Parses CSV produced by [`to_csv`]; the round trip is exact.
pub fn parse_csv(text: &str) -> Result<Vec<Row>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(format!("bad header: {other:?}")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(format!("row {}: {} fields, expected 9", i + 1, fields.len()));
        }
        let err = |what: &str| format!("row {}: bad {what}", i + 1);
        rows.push(Row {
            tick: fields[0].parse().map_err(|_| err("tick"))?,
            vm: fields[1].parse().map_err(|_| err("vm"))?,
            offered_pct: fields[2].parse().map_err(|_| err("offered_pct"))?,
            alpha: fields[3].parse().map_err(|_| err("alpha"))?,
            level: fields[4].parse().map_err(|_| err("level"))?,
            clamp: fields[5].parse().map_err(|_| err("clamp"))?,
            admitted_pct: fields[6].parse().map_err(|_| err("admitted_pct"))?,
            attacker_share_pct: fields[7].parse().map_err(|_| err("attacker_share_pct"))?,
            blocked: fields[8].parse().map_err(|_| err("blocked"))?,
        });
    }
    Ok(rows)
}
