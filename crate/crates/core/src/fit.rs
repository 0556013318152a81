//! Small fitting helpers.

/// Ordinary least-squares line `y ≈ slope·x + intercept`.
pub fn least_squares_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Observed convergence order from errors at successively halved spacings.
pub fn convergence_order(errors: &[f64]) -> f64 {
    let xs: Vec<f64> = (0..errors.len()).map(|k| -(k as f64) * std::f64::consts::LN_2).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    least_squares_line(&xs, &ys).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let (m, b) = least_squares_line(&xs, &ys);
        assert!((m - 2.0).abs() < 1e-14 && (b + 1.0).abs() < 1e-14);
    }

    #[test]
    fn second_order_errors() {
        let errs = [1.0, 0.25, 0.0625];
        assert!((convergence_order(&errs) - 2.0).abs() < 1e-12);
    }
}
