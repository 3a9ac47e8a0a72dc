use std::io::Write;

use super::SweepRow;

pub const CSV_HEADER: [&str; 8] = [
    "param",
    "value",
    "vanilla_err",
    "layered_err",
    "layered_err_analytic",
    "exhausted",
    "quality",
    "mean_calls",
];

/// Formats like C's `%.{digits}g`: the shorter of fixed and scientific
/// notation, trailing zeros removed.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes one CSV row per sweep point. Rates come from the Monte Carlo run
/// except `layered_err_analytic`.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        let g = |x: f64| format_sig(x, 6);
        w.write_record([
            row.param.name().to_string(),
            g(row.value),
            g(row.simulated.vanilla_error_rate),
            g(row.simulated.layered_error_rate),
            g(row.analytic.layered_error_rate),
            g(row.simulated.exhausted_rate),
            g(row.simulated.quality),
            g(row.simulated.mean_backend_calls),
        ])?;
    }
    w.flush()?;
    Ok(())
}
