//! Number formatting and sampling grids shared by the CSV writers.

/// Ten significant digits, scientific below 1e-4, trailing zeros trimmed.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    if x.abs() < 1e-4 {
        let s = format!("{x:.9e}");
        let (mantissa, exp) = s.split_once('e').expect("scientific format has an exponent");
        return format!("{}e{exp}", trim(mantissa));
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (9 - magnitude).max(0) as usize;
    trim(&format!("{x:.decimals$}")).to_string()
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Integers in `1..=t_max` spaced evenly in log10, at most `per_decade` per
/// decade, always including both ends.
pub fn log_grid(t_max: u64, per_decade: u32) -> Vec<u64> {
    let mut out = vec![1];
    let step = 1.0 / f64::from(per_decade);
    let mut j = 1_u64;
    loop {
        let t = 10f64.powf(j as f64 * step).round() as u64;
        if t >= t_max {
            break;
        }
        if t > *out.last().unwrap() {
            out.push(t);
        }
        j += 1;
    }
    if t_max > 1 {
        out.push(t_max);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats() {
        assert_eq!(num(0.05), "0.05");
        assert_eq!(num(1.959963984540054), "1.959963985");
        assert_eq!(num(5e-5), "5e-5");
        assert_eq!(num(1.2345678901234e-7), "1.23456789e-7");
        assert_eq!(num(12.0), "12");
        assert_eq!(num(0.0001), "0.0001");
        assert_eq!(num(0.0), "0");
    }

    #[test]
    fn grid() {
        assert_eq!(log_grid(1, 400), vec![1]);
        assert_eq!(log_grid(10, 400), (1..=10).collect::<Vec<_>>());
        let g = log_grid(1_000_000_000, 400);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*g.last().unwrap(), 1_000_000_000);
        assert!(g.len() <= 9 * 400 + 1);
    }
}
