//! Attention-behavior analyses: relative-distance histograms, attention
//! mass per lexical word class, selector SELECT rates, and CSV/SVG
//! emission for all of them.

use std::path::{Path, PathBuf};

use crate::data::{Dataset, LexiconLayout, WordClass};
use crate::error::{Error, Result};
use crate::model::{ForwardCtx, Model};
use crate::selector::GateMode;
use crate::tensor::{Tape, Tensor};

/// Relative-distance buckets: |query - key| of 0, 1, 2, 3-5, >5.
pub const DISTANCE_BUCKET_LABELS: [&str; 5] = ["0", "1", "2", "3-5", ">5"];

fn distance_bucket(distance: usize) -> usize {
    match distance {
        0 => 0,
        1 => 1,
        2 => 2,
        3..=5 => 3,
        _ => 4,
    }
}

/// Mean attention mass per relative-distance bucket; masses sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceHistogram {
    pub masses: [f64; 5],
}

impl DistanceHistogram {
    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// Bucket masses of a stream of row-stochastic attention matrices: every
/// query row spreads its unit mass over the buckets, and rows weigh
/// equally across the whole corpus.
pub fn histogram_from_weights<I>(weights: I) -> Result<DistanceHistogram>
where
    I: IntoIterator<Item = Tensor>,
{
    let mut sums = [0.0f64; 5];
    let mut rows = 0usize;
    for matrix in weights {
        let n = matrix.rows();
        for i in 0..n {
            for j in 0..n {
                sums[distance_bucket(i.abs_diff(j))] += matrix.get2(i, j);
            }
            rows += 1;
        }
    }
    if rows == 0 {
        return Err(Error::Input("no attention rows to analyze".into()));
    }
    let mut masses = [0.0f64; 5];
    for (m, s) in masses.iter_mut().zip(sums.iter()) {
        *m = s / rows as f64;
    }
    Ok(DistanceHistogram { masses })
}

/// Distance histogram of a trained model over a dataset at one layer
/// (1-based); heads averaged unless one is selected.
pub fn distance_histogram(
    model: &Model,
    dataset: &Dataset,
    layer: usize,
    head: Option<usize>,
) -> Result<DistanceHistogram> {
    histogram_from_weights(collect_layer_weights(model, dataset, layer, head)?)
}

fn collect_layer_weights(
    model: &Model,
    dataset: &Dataset,
    layer: usize,
    head: Option<usize>,
) -> Result<Vec<Tensor>> {
    if layer == 0 || layer > model.config.n_layers {
        return Err(Error::Config(format!(
            "layer {layer} outside [1, {}]",
            model.config.n_layers
        )));
    }
    if dataset.is_empty() {
        return Err(Error::Input("empty dataset".into()));
    }
    let mut out = Vec::with_capacity(dataset.len());
    for example in &dataset.examples {
        let mut tape = Tape::new();
        let trace = model.forward(&mut tape, &example.tokens, &mut ForwardCtx::Infer)?;
        let weights = &trace.attention[layer - 1];
        let matrix = match head {
            None => weights.mean_heads(),
            Some(h) => weights
                .heads
                .get(h)
                .cloned()
                .ok_or_else(|| Error::Config(format!("head {h} out of range")))?,
        };
        out.push(matrix);
    }
    Ok(out)
}

/// Attention mass received per lexical class, normalized per sentence and
/// averaged; class masses sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct WordClassAttention {
    /// Indexed per [`WordClass::ALL`].
    pub per_class: [f64; 7],
}

impl WordClassAttention {
    pub fn class_mass(&self, class: WordClass) -> f64 {
        self.per_class[class.index()]
    }

    pub fn content_total(&self) -> f64 {
        WordClass::ALL
            .iter()
            .filter(|c| c.is_content())
            .map(|c| self.class_mass(*c))
            .sum()
    }

    pub fn content_free_total(&self) -> f64 {
        WordClass::ALL
            .iter()
            .filter(|c| !c.is_content())
            .map(|c| self.class_mass(*c))
            .sum()
    }

    pub fn total(&self) -> f64 {
        self.per_class.iter().sum()
    }
}

/// Per-class received mass of one (tokens, attention) pair, normalized by
/// the number of query rows.
pub fn class_mass_from_weights(
    tokens: &[u32],
    weights: &Tensor,
    layout: &LexiconLayout,
) -> Result<[f64; 7]> {
    let n = tokens.len();
    if weights.rows() != n || weights.cols() != n {
        return Err(Error::Dimension {
            op: "class_mass_from_weights",
            lhs: weights.shape().to_vec(),
            rhs: vec![n, n],
        });
    }
    let mut masses = [0.0f64; 7];
    for (j, &token) in tokens.iter().enumerate() {
        let class = layout
            .token_class(token)
            .ok_or_else(|| Error::Input(format!("token {token} missing from lexicon")))?;
        let received: f64 = (0..n).map(|i| weights.get2(i, j)).sum();
        masses[class.index()] += received;
    }
    for m in &mut masses {
        *m /= n as f64;
    }
    Ok(masses)
}

/// Word-class attention of a model over a dataset at one layer.
pub fn word_class_attention(
    model: &Model,
    dataset: &Dataset,
    layer: usize,
    layout: &LexiconLayout,
    head: Option<usize>,
) -> Result<WordClassAttention> {
    if layout.vocab_size != dataset.vocab_size {
        return Err(Error::Input(format!(
            "lexicon covers {} tokens but dataset vocab is {}",
            layout.vocab_size, dataset.vocab_size
        )));
    }
    let weights = collect_layer_weights(model, dataset, layer, head)?;
    let mut per_class = [0.0f64; 7];
    for (example, matrix) in dataset.examples.iter().zip(&weights) {
        let masses = class_mass_from_weights(&example.tokens, matrix, layout)?;
        for (acc, m) in per_class.iter_mut().zip(masses.iter()) {
            *acc += m;
        }
    }
    for acc in &mut per_class {
        *acc /= dataset.len() as f64;
    }
    Ok(WordClassAttention { per_class })
}

/// Fraction of SELECT decisions at inference, overall and per key class.
#[derive(Debug, Clone)]
pub struct SelectionRate {
    pub overall: f64,
    /// (selected, total) gate entries whose key token belongs to the class.
    pub per_class: [(u64, u64); 7],
}

impl SelectionRate {
    pub fn class_rate(&self, class: WordClass) -> Option<f64> {
        let (selected, total) = self.per_class[class.index()];
        if total == 0 {
            None
        } else {
            Some(selected as f64 / total as f64)
        }
    }
}

/// Hard-gate SELECT rate of a selector model over a dataset.
pub fn selection_rate(
    model: &Model,
    dataset: &Dataset,
    layout: &LexiconLayout,
) -> Result<SelectionRate> {
    let Some(selector_layer) = model.config.selector_layer else {
        return Err(Error::Input("model has no selector layer".into()));
    };
    if dataset.is_empty() {
        return Err(Error::Input("empty dataset".into()));
    }
    let mut selected_total = 0u64;
    let mut entries_total = 0u64;
    let mut per_class = [(0u64, 0u64); 7];
    for example in &dataset.examples {
        let mut tape = Tape::new();
        let trace = model.forward(&mut tape, &example.tokens, &mut ForwardCtx::Infer)?;
        let gate = trace.gates[selector_layer - 1]
            .as_ref()
            .ok_or_else(|| Error::Contract("selector layer produced no gate".into()))?;
        debug_assert_eq!(gate.mode, GateMode::InferHard);
        let n = example.tokens.len();
        for j in 0..n {
            let class = layout
                .token_class(example.tokens[j])
                .ok_or_else(|| Error::Input(format!("token {} missing from lexicon", example.tokens[j])))?;
            for i in 0..n {
                let on = gate.sample.get2(i, j) == 1.0;
                selected_total += on as u64;
                entries_total += 1;
                per_class[class.index()].0 += on as u64;
                per_class[class.index()].1 += 1;
            }
        }
    }
    Ok(SelectionRate {
        overall: selected_total as f64 / entries_total as f64,
        per_class,
    })
}

// ── CSV + SVG emission ───────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub name: String,
    pub values: Vec<f64>,
}

/// Grouped-bar plot data: one value per (x label, series).
#[derive(Debug, Clone)]
pub struct PlotData {
    pub title: String,
    pub x_labels: Vec<String>,
    pub series: Vec<PlotSeries>,
}

impl PlotData {
    pub fn validate(&self) -> Result<()> {
        if self.x_labels.is_empty() || self.series.is_empty() {
            return Err(Error::Input("empty plot data".into()));
        }
        for series in &self.series {
            if series.values.len() != self.x_labels.len() {
                return Err(Error::Input(format!(
                    "series {} has {} values for {} labels",
                    series.name,
                    series.values.len(),
                    self.x_labels.len()
                )));
            }
        }
        Ok(())
    }
}

/// Write `<base>.csv` (canonical numbers) and `<base>.svg` (bar chart).
/// Identical input produces byte-identical files.
pub fn emit_plot(plot: &PlotData, base: &Path) -> Result<(PathBuf, PathBuf)> {
    plot.validate()?;
    let csv_path = base.with_extension("csv");
    let svg_path = base.with_extension("svg");

    let mut csv = String::new();
    csv.push_str("label");
    for series in &plot.series {
        csv.push(',');
        csv.push_str(&series.name);
    }
    csv.push('\n');
    for (i, label) in plot.x_labels.iter().enumerate() {
        csv.push_str(label);
        for series in &plot.series {
            csv.push(',');
            csv.push_str(&series.values[i].to_string());
        }
        csv.push('\n');
    }
    std::fs::write(&csv_path, csv)?;
    std::fs::write(&svg_path, render_svg(plot))?;
    Ok((csv_path, svg_path))
}

const SERIES_COLORS: [&str; 6] = [
    "#4878d0", "#ee854a", "#6acc64", "#d65f5f", "#956cb4", "#8c613c",
];

fn render_svg(plot: &PlotData) -> String {
    let width = 640.0;
    let height = 400.0;
    let margin_left = 60.0;
    let margin_bottom = 50.0;
    let margin_top = 40.0;
    let plot_w = width - margin_left - 20.0;
    let plot_h = height - margin_top - margin_bottom;

    let max_value = plot
        .series
        .iter()
        .flat_map(|s| s.values.iter())
        .fold(0.0f64, |a, &b| a.max(b))
        .max(1e-12);

    let groups = plot.x_labels.len();
    let group_w = plot_w / groups as f64;
    let bar_w = group_w * 0.8 / plot.series.len() as f64;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        width / 2.0,
        xml_escape(&plot.title)
    ));

    // Axes.
    let x0 = margin_left;
    let y0 = margin_top + plot_h;
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        x0 + plot_w
    ));
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{margin_top}\" stroke=\"black\"/>\n"
    ));
    // Y ticks at 0, max/2, max.
    for frac in [0.0, 0.5, 1.0] {
        let value = max_value * frac;
        let y = y0 - plot_h * frac;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.3}</text>\n",
            x0 - 6.0,
            y + 4.0,
            value
        ));
    }

    for (g, label) in plot.x_labels.iter().enumerate() {
        let group_x = x0 + g as f64 * group_w + group_w * 0.1;
        for (s, series) in plot.series.iter().enumerate() {
            let value = series.values[g];
            let h = plot_h * (value / max_value).clamp(0.0, 1.0);
            let x = group_x + s as f64 * bar_w;
            let y = y0 - h;
            svg.push_str(&format!(
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"{}\"><title>{}</title></rect>\n",
                bar_w * 0.92,
                SERIES_COLORS[s % SERIES_COLORS.len()],
                value
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            x0 + g as f64 * group_w + group_w / 2.0,
            y0 + 16.0,
            xml_escape(label)
        ));
    }

    // Legend.
    for (s, series) in plot.series.iter().enumerate() {
        let y = margin_top + 14.0 * s as f64;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n",
            x0 + plot_w - 120.0,
            y,
            SERIES_COLORS[s % SERIES_COLORS.len()]
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            x0 + plot_w - 106.0,
            y + 9.0,
            xml_escape(&series.name)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
