//! Otsu's threshold over a 256-bin quantization.

use super::PreprocessError;

/// Threshold bin t in [0, 254] maximizing the between-class variance
/// w0(t) * w1(t) * (mu0(t) - mu1(t))^2, with foreground = bins > t.
/// Ties break toward the lowest t.
pub fn otsu_threshold(bins: &[u8]) -> Result<u8, PreprocessError> {
    if bins.is_empty() {
        return Err(PreprocessError::DegenerateImage);
    }
    let mut hist = [0u64; 256];
    for &b in bins {
        hist[b as usize] += 1;
    }
    if hist.iter().filter(|&&h| h > 0).count() < 2 {
        return Err(PreprocessError::DegenerateImage);
    }
    let total = bins.len() as f64;
    let total_sum: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &h)| i as f64 * h as f64)
        .sum();

    let mut best_t = 0u8;
    let mut best_var = f64::NEG_INFINITY;
    let mut count0 = 0.0f64;
    let mut sum0 = 0.0f64;
    for t in 0..=254usize {
        count0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let count1 = total - count0;
        if count0 == 0.0 || count1 == 0.0 {
            continue;
        }
        let w0 = count0 / total;
        let w1 = count1 / total;
        let mu0 = sum0 / count0;
        let mu1 = (total_sum - sum0) / count1;
        let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    Ok(best_t)
}

/// Quantize a [0,1] image to 256 uniform bins.
pub fn quantize_256(values: &[f64]) -> Vec<u8> {
    values
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}
