//! CSV output: header row, one provenance comment, 17 significant digits, LF.

use std::io;
use std::path::Path;

use crate::config::RunConfig;

/// Scientific notation with 17 significant digits (round-trips every f64).
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Semicolon-separated list inside a single field.
pub fn list(values: &[f64]) -> String {
    values.iter().map(|&v| num(v)).collect::<Vec<_>>().join(";")
}

pub fn render(cfg: &RunConfig, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = format!("# config_sha256={} seed={}\n", cfg.hash(), cfg.seed);
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write(
    path: &Path,
    cfg: &RunConfig,
    header: &[&str],
    rows: &[Vec<String>],
) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, render(cfg, header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_with_17_digits() {
        for v in [0.1, 1.0 / 3.0, 3.622, -2.5e-17, 12345.678901234567] {
            let s = num(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17, "{s}");
        }
    }

    #[test]
    fn layout() {
        let cfg = RunConfig::default();
        let text = render(&cfg, &["a", "b"], &[vec!["1".into(), list(&[1.0, 2.0])]]);
        let lines: Vec<&str> = text.split('\n').collect();
        assert!(lines[0].starts_with("# config_sha256=") && lines[0].ends_with("seed=0"));
        assert_eq!(lines[1], "a,b");
        assert!(lines[2].contains(';'));
        assert!(!text.contains('\r'));
        assert!(text.ends_with('\n'));
    }
}
