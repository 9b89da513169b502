//! Plain CSV writers. Every float is written as `{:.16e}` (17 significant digits).

use std::fmt::Write as _;

use grand_core::{Configuration, PackingSet, SystemState};

pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Column label for one configuration, e.g. `1_0_2`.
pub fn config_label(k: &Configuration) -> String {
    k.counts().iter().map(u32::to_string).collect::<Vec<_>>().join("_")
}

/// Keeps free text inside one CSV field.
pub fn field(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

pub fn join(cells: impl IntoIterator<Item = String>) -> String {
    cells.into_iter().collect::<Vec<_>>().join(",")
}

/// Header for a state snapshot: `X_k` in canonical order, then `Z`.
pub fn snapshot_header(ps: &PackingSet) -> String {
    let mut cells: Vec<String> = ps.configs().iter().map(|k| format!("X_{}", config_label(k))).collect();
    cells.push("Z".into());
    join(cells)
}

pub fn snapshot_row(st: &SystemState) -> String {
    let mut out = String::new();
    for c in st.counts() {
        let _ = write!(out, "{c},");
    }
    let _ = write!(out, "{}", st.z());
    out
}
