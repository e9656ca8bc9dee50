//! Static SVG overlays: amplitude wiggles per trace, reference picks as
//! red circles, predicted picks as blue dots.

use fbpick_core::types::{Gather, PickSet1D, UNLABELED};

const TRACE_SPACING: f64 = 14.0;
const SAMPLE_SPACING: f64 = 2.0;
const MARGIN: f64 = 24.0;
const WIGGLE_GAIN: f64 = 10.0;

/// Renders one gather with two pick overlays. Traces run left to right,
/// time runs downward.
pub fn gather_overlay(
    gather: &Gather,
    reference: &PickSet1D,
    predicted: &PickSet1D,
    title: &str,
) -> String {
    let m = gather.num_samples();
    let n = gather.num_traces();
    let width = MARGIN * 2.0 + TRACE_SPACING * n as f64;
    let height = MARGIN * 2.0 + SAMPLE_SPACING * m as f64;

    let mut out = String::with_capacity(m * n * 8);
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\">\n"
    ));
    out.push_str(&format!(
        "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{MARGIN}\" y=\"16\" font-family=\"monospace\" font-size=\"12\">{title}</text>\n"
    ));

    // normalize the wiggle gain to the gather's largest amplitude
    let max_abs = gather
        .amplitude
        .iter()
        .fold(0.0f64, |acc, &v| acc.max((v as f64).abs()))
        .max(1e-12);
    for k in 0..n {
        let x0 = MARGIN + TRACE_SPACING * (k as f64 + 0.5);
        let mut d = String::with_capacity(m * 12);
        for i in 0..m {
            let x = x0 + gather.amplitude[[i, k]] as f64 / max_abs * WIGGLE_GAIN;
            let y = MARGIN + SAMPLE_SPACING * i as f64;
            d.push_str(if i == 0 { "M" } else { "L" });
            d.push_str(&format!("{x:.2},{y:.2}"));
        }
        out.push_str(&format!(
            "<path d=\"{d}\" fill=\"none\" stroke=\"#444444\" stroke-width=\"0.7\"/>\n"
        ));
    }

    // red circles: reference picks; blue dots: predicted picks
    for k in 0..n {
        let x0 = MARGIN + TRACE_SPACING * (k as f64 + 0.5);
        if k < reference.len() && reference.get(k) != UNLABELED {
            let y = MARGIN + SAMPLE_SPACING * reference.get(k) as f64;
            out.push_str(&format!(
                "<circle cx=\"{x0:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"none\" \
                 stroke=\"red\" stroke-width=\"1.2\"/>\n"
            ));
        }
        if k < predicted.len() && predicted.get(k) != UNLABELED {
            let y = MARGIN + SAMPLE_SPACING * predicted.get(k) as f64;
            out.push_str(&format!(
                "<circle cx=\"{x0:.2}\" cy=\"{y:.2}\" r=\"2\" fill=\"blue\"/>\n"
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}
