//! Static renderings of rationales: highlighted-token HTML for text,
//! score-overlay PPM images for grids. Plain self-contained formats only.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::token_text;

fn minmax_normalize(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo).is_finite() || hi - lo <= 0.0 {
        return vec![0.0; scores.len()];
    }
    scores.iter().map(|&s| (s - lo) / (hi - lo)).collect()
}

fn escape_html(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Self-contained HTML page with each token's background opacity
/// proportional to its min-max normalized score.
pub fn html_for_tokens(tokens: &[u32], scores: &[f64], title: &str) -> Result<String> {
    if tokens.len() != scores.len() {
        return Err(Error::shape(
            format!("{} tokens", tokens.len()),
            format!("{} scores", scores.len()),
        ));
    }
    let norm = minmax_normalize(scores);
    let mut body = String::new();
    for (tok, a) in tokens.iter().zip(norm) {
        body.push_str(&format!(
            "<span class=\"t\" style=\"background-color: rgba(255, 160, 0, {a:.4})\">{}</span>\n",
            escape_html(&token_text(*tok))
        ));
    }
    Ok(format!(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\"/>\n<title>{}</title>\n<style>\nbody {{ font-family: monospace; line-height: 1.8; margin: 2em; }}\n.t {{ padding: 1px 2px; border-radius: 2px; }}\n</style>\n</head>\n<body>\n<p>\n{body}</p>\n</body>\n</html>\n",
        escape_html(title)
    ))
}

pub fn render_text_html(
    tokens: &[u32],
    scores: &[f64],
    title: &str,
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(path, html_for_tokens(tokens, scores, title)?)?;
    Ok(())
}

/// Binary PPM (P6): the grayscale input composited toward red by the
/// min-max normalized score.
pub fn ppm_for_grid(
    height: usize,
    width: usize,
    values: &[f64],
    scores: &[f64],
) -> Result<Vec<u8>> {
    if values.len() != height * width || scores.len() != height * width {
        return Err(Error::shape(
            format!("{height}x{width} grid"),
            format!("{} values / {} scores", values.len(), scores.len()),
        ));
    }
    let norm = minmax_normalize(scores);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    let to_byte = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    for (v, a) in values.iter().zip(norm) {
        let g = v.clamp(0.0, 1.0);
        out.push(to_byte(g * (1.0 - a) + a)); // red channel carries the heat
        out.push(to_byte(g * (1.0 - a)));
        out.push(to_byte(g * (1.0 - a)));
    }
    Ok(out)
}

pub fn render_heatmap(
    height: usize,
    width: usize,
    values: &[f64],
    scores: &[f64],
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(path, ppm_for_grid(height, width, values, scores)?)?;
    Ok(())
}
