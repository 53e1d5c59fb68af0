//! Number formatting and small file helpers shared by the writers.

use std::fmt::Write as _;
use std::path::Path;

/// `%.15g`: 15 significant digits, trailing zeros removed, exponent form
/// outside `[1e-4, 1e15)`.
pub fn g15(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.14e}", x);
    let (mant, exp) = sci.split_once('e').unwrap();
    let e: i32 = exp.parse().unwrap();
    if !(-4..15).contains(&e) {
        let m = strip_zeros(mant);
        let sign = if e < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", e.abs());
    }
    let decimals = (14 - e).max(0) as usize;
    strip_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Columns of equal length as CSV with the given header.
pub fn csv_columns(header: &[&str], cols: &[&[f64]]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    let n = cols.first().map(|c| c.len()).unwrap_or(0);
    for i in 0..n {
        for (j, c) in cols.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            let _ = write!(s, "{}", g15(c[i]));
        }
        s.push('\n');
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, text)
}

/// A gnuplot script plotting columns of a CSV data file against the first one.
pub fn gnuplot_script(
    data_file: &str,
    title: &str,
    xlabel: &str,
    columns: &[(usize, &str)],
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set title '{title}'");
    let _ = writeln!(s, "set xlabel '{xlabel}'");
    let _ = writeln!(s, "set grid");
    let parts: Vec<String> = columns
        .iter()
        .map(|(col, label)| format!("'{data_file}' using 1:{col} with lines title '{label}'"))
        .collect();
    let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    s
}
