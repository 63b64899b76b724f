use std::path::Path;

use iar_core::armodel::StepLoss;
use plotters::prelude::*;

/// Loss curves (type, diffusion) as a standalone SVG.
pub fn loss_curve_svg(trace: &[StepLoss], path: &Path) -> Result<(), String> {
    let root = SVGBackend::new(path, (800, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| e.to_string())?;
    let max_step = trace.last().map_or(1, |s| s.step.max(1)) as f64;
    let max_loss = trace
        .iter()
        .flat_map(|s| [s.loss_type, s.loss_diff])
        .filter(|v| v.is_finite())
        .fold(1e-9f64, f64::max);
    let mut chart = ChartBuilder::on(&root)
        .caption("training loss", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(52)
        .build_cartesian_2d(0.0..max_step, 0.0..max_loss * 1.05)
        .map_err(|e| e.to_string())?;
    chart
        .configure_mesh()
        .x_desc("step")
        .y_desc("loss")
        .draw()
        .map_err(|e| e.to_string())?;
    let series: [(&str, RGBColor, fn(&StepLoss) -> f64); 2] = [
        ("type", BLUE, |s| s.loss_type),
        ("diffusion", RED, |s| s.loss_diff),
    ];
    for (label, color, get) in series {
        chart
            .draw_series(LineSeries::new(
                trace.iter().map(|s| (s.step as f64, get(s))),
                color,
            ))
            .map_err(|e| e.to_string())?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| e.to_string())?;
    root.present().map_err(|e| e.to_string())
}
