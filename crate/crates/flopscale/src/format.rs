//! Human-readable number formatting.

/// Five significant digits in exponent form, e.g. `4.0676e8`.
pub fn eng(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    format!("{v:.4e}")
}

/// Exact integer rendering for integral values, shortest round-trip form otherwise.
pub fn exact(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e21 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

/// `exact (eng)`.
pub fn both(v: f64) -> String {
    format!("{} ({})", exact(v), eng(v))
}

pub const NATS_PER_BIT: f64 = std::f64::consts::LN_2;

/// Loss in the display unit.
pub fn loss(v: f64, bits: bool) -> String {
    if bits {
        format!("{:.6} bits", v / NATS_PER_BIT)
    } else {
        format!("{v:.6} nats")
    }
}

/// Left-aligned label column followed by values.
pub fn table(rows: &[(String, String)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
}
