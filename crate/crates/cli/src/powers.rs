//! Power grids written as `start:stop:count` with an optional `:log` suffix.

pub fn parse_power_grid(text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(':').collect();
    let log = match parts.len() {
        3 => false,
        4 if parts[3] == "log" => true,
        4 => return Err(format!("unknown grid suffix `{}` (only `log` is accepted)", parts[3])),
        _ => return Err(format!("power grid `{text}` must look like start:stop:count[:log]")),
    };
    let num = |s: &str, what: &str| s.trim().parse::<f64>().map_err(|_| format!("{what} `{s}` is not a number"));
    let start = num(parts[0], "start")?;
    let stop = num(parts[1], "stop")?;
    let count: usize =
        parts[2].trim().parse().map_err(|_| format!("count `{}` is not a positive integer", parts[2]))?;
    if !(start > 0.0 && start.is_finite()) {
        return Err(format!("powers must be positive, start is {start}"));
    }
    if !(stop >= start && stop.is_finite()) {
        return Err(format!("stop {stop} must be finite and at least start {start}"));
    }
    if count == 0 {
        return Err("count must be positive".into());
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let step = 1.0 / (count - 1) as f64;
    Ok((0..count)
        .map(|k| {
            let u = k as f64 * step;
            if log {
                (start.ln() + u * (stop / start).ln()).exp()
            } else {
                start + u * (stop - start)
            }
        })
        .collect())
}
