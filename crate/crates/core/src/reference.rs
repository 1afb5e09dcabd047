//! Published accuracy figures for six index markets, transcribed verbatim.
//!
//! Values are kept as the printed strings so that reports can reproduce them
//! exactly. They are never recomputed.

use crate::evaluation::Metric;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReferenceRow {
    pub market: &'static str,
    pub model: &'static str,
    pub metric: Metric,
    pub years: [&'static str; 6],
    pub average: &'static str,
}

const fn row(
    market: &'static str,
    model: &'static str,
    metric: Metric,
    years: [&'static str; 6],
    average: &'static str,
) -> ReferenceRow {
    ReferenceRow {
        market,
        model,
        metric,
        years,
        average,
    }
}

pub const MARKETS: [&str; 6] = ["CSI300", "DJIA", "HangSeng", "Nifty50", "Nikkei225", "SP500"];
pub const MODELS: [&str; 3] = ["WSAEs-LSTM", "C1D-LSTM", "C1D-ROC"];
/// Comparison model whose rows are reported as a baseline.
pub const BASELINE_MODEL: &str = "WSAEs-LSTM";

pub const REFERENCE_ROWS: [ReferenceRow; 54] = [
    row("CSI300", "WSAEs-LSTM", Metric::Mape, ["0.025", "0.014", "0.016", "0.011", "0.033", "0.016"], "0.019"),
    row("CSI300", "C1D-LSTM", Metric::Mape, ["0.015", "0.014", "0.017", "0.011", "0.051", "0.015"], "0.020"),
    row("CSI300", "C1D-ROC", Metric::Mape, ["0.015", "0.011", "0.013", "0.009", "0.025", "0.012"], "0.014"),
    row("CSI300", "WSAEs-LSTM", Metric::Correlation, ["0.861", "0.959", "0.955", "0.957", "0.975", "0.957"], "0.944"),
    row("CSI300", "C1D-LSTM", Metric::Correlation, ["0.961", "0.960", "0.951", "0.961", "0.976", "0.959"], "0.961"),
    row("CSI300", "C1D-ROC", Metric::Correlation, ["0.957", "0.969", "0.959", "0.974", "0.987", "0.969"], "0.969"),
    row("CSI300", "WSAEs-LSTM", Metric::TheilU, ["0.017", "0.009", "0.011", "0.007", "0.023", "0.011"], "0.013"),
    row("CSI300", "C1D-LSTM", Metric::TheilU, ["0.009", "0.009", "0.011", "0.007", "0.031", "0.011"], "0.013"),
    row("CSI300", "C1D-ROC", Metric::TheilU, ["0.010", "0.007", "0.010", "0.006", "0.017", "0.009"], "0.010"),
    row("DJIA", "WSAEs-LSTM", Metric::Mape, ["0.016", "0.013", "0.009", "0.008", "0.008", "0.010"], "0.011"),
    row("DJIA", "C1D-LSTM", Metric::Mape, ["0.011", "0.010", "0.010", "0.007", "0.010", "0.011"], "0.010"),
    row("DJIA", "C1D-ROC", Metric::Mape, ["0.011", "0.008", "0.007", "0.007", "0.009", "0.008"], "0.008"),
    row("DJIA", "WSAEs-LSTM", Metric::Correlation, ["0.922", "0.928", "0.984", "0.952", "0.953", "0.952"], "0.949"),
    row("DJIA", "C1D-LSTM", Metric::Correlation, ["0.958", "0.964", "0.982", "0.975", "0.939", "0.953"], "0.962"),
    row("DJIA", "C1D-ROC", Metric::Correlation, ["0.953", "0.975", "0.988", "0.969", "0.946", "0.972"], "0.967"),
    row("DJIA", "WSAEs-LSTM", Metric::TheilU, ["0.010", "0.009", "0.006", "0.005", "0.005", "0.006"], "0.007"),
    row("DJIA", "C1D-LSTM", Metric::TheilU, ["0.007", "0.006", "0.007", "0.005", "0.006", "0.007"], "0.006"),
    row("DJIA", "C1D-ROC", Metric::TheilU, ["0.008", "0.005", "0.005", "0.004", "0.006", "0.005"], "0.005"),
    row("HangSeng", "WSAEs-LSTM", Metric::Mape, ["0.016", "0.017", "0.012", "0.011", "0.021", "0.013"], "0.015"),
    row("HangSeng", "C1D-LSTM", Metric::Mape, ["0.017", "0.012", "0.009", "0.010", "0.022", "0.012"], "0.014"),
    row("HangSeng", "C1D-ROC", Metric::Mape, ["0.011", "0.011", "0.008", "0.009", "0.010", "0.011"], "0.010"),
    row("HangSeng", "WSAEs-LSTM", Metric::Correlation, ["0.944", "0.924", "0.920", "0.927", "0.904", "0.968"], "0.931"),
    row("HangSeng", "C1D-LSTM", Metric::Correlation, ["0.948", "0.956", "0.955", "0.951", "0.962", "0.975"], "0.958"),
    row("HangSeng", "C1D-ROC", Metric::Correlation, ["0.979", "0.964", "0.955", "0.952", "0.985", "0.979"], "0.969"),
    row("HangSeng", "WSAEs-LSTM", Metric::TheilU, ["0.011", "0.010", "0.008", "0.007", "0.018", "0.008"], "0.011"),
    row("HangSeng", "C1D-LSTM", Metric::TheilU, ["0.012", "0.008", "0.006", "0.007", "0.015", "0.008"], "0.009"),
    row("HangSeng", "C1D-ROC", Metric::TheilU, ["0.007", "0.007", "0.006", "0.006", "0.007", "0.007"], "0.007"),
    row("Nifty50", "WSAEs-LSTM", Metric::Mape, ["0.020", "0.016", "0.017", "0.014", "0.016", "0.018"], "0.017"),
    row("Nifty50", "C1D-LSTM", Metric::Mape, ["0.014", "0.014", "0.022", "0.015", "0.019", "0.014"], "0.016"),
    row("Nifty50", "C1D-ROC", Metric::Mape, ["0.012", "0.009", "0.010", "0.008", "0.008", "0.007"], "0.009"),
    row("Nifty50", "WSAEs-LSTM", Metric::Correlation, ["0.895", "0.927", "0.992", "0.885", "0.974", "0.951"], "0.937"),
    row("Nifty50", "C1D-LSTM", Metric::Correlation, ["0.946", "0.962", "0.992", "0.866", "0.971", "0.969"], "0.951"),
    row("Nifty50", "C1D-ROC", Metric::Correlation, ["0.973", "0.968", "0.903", "0.996", "0.960", "0.988"], "0.964"),
    row("Nifty50", "WSAEs-LSTM", Metric::TheilU, ["0.013", "0.010", "0.010", "0.009", "0.010", "0.011"], "0.011"),
    row("Nifty50", "C1D-LSTM", Metric::TheilU, ["0.010", "0.009", "0.014", "0.010", "0.012", "0.009"], "0.011"),
    row("Nifty50", "C1D-ROC", Metric::TheilU, ["0.007", "0.006", "0.007", "0.005", "0.005", "0.005"], "0.006"),
    row("Nikkei225", "WSAEs-LSTM", Metric::Mape, ["0.024", "0.019", "0.019", "0.019", "0.018", "0.017"], "0.019"),
    row("Nikkei225", "C1D-LSTM", Metric::Mape, ["0.016", "0.011", "0.010", "0.019", "0.012", "0.010"], "0.013"),
    row("Nikkei225", "C1D-ROC", Metric::Mape, ["0.013", "0.010", "0.013", "0.010", "0.013", "0.013"], "0.012"),
    row("Nikkei225", "WSAEs-LSTM", Metric::Correlation, ["0.878", "0.834", "0.665", "0.972", "0.774", "0.924"], "0.841"),
    row("Nikkei225", "C1D-LSTM", Metric::Correlation, ["0.960", "0.949", "0.913", "0.964", "0.905", "0.979"], "0.945"),
    row("Nikkei225", "C1D-ROC", Metric::Correlation, ["0.957", "0.972", "0.994", "0.943", "0.981", "0.969"], "0.969"),
    row("Nikkei225", "WSAEs-LSTM", Metric::TheilU, ["0.016", "0.013", "0.013", "0.013", "0.012", "0.012"], "0.013"),
    row("Nikkei225", "C1D-LSTM", Metric::TheilU, ["0.010", "0.007", "0.007", "0.017", "0.008", "0.006"], "0.009"),
    row("Nikkei225", "C1D-ROC", Metric::TheilU, ["0.009", "0.006", "0.009", "0.007", "0.008", "0.009"], "0.008"),
    row("SP500", "WSAEs-LSTM", Metric::Mape, ["0.012", "0.014", "0.010", "0.008", "0.011", "0.010"], "0.011"),
    row("SP500", "C1D-LSTM", Metric::Mape, ["0.011", "0.011", "0.009", "0.008", "0.013", "0.011"], "0.011"),
    row("SP500", "C1D-ROC", Metric::Mape, ["0.010", "0.009", "0.008", "0.006", "0.008", "0.007"], "0.008"),
    row("SP500", "WSAEs-LSTM", Metric::Correlation, ["0.944", "0.944", "0.984", "0.973", "0.880", "0.953"], "0.946"),
    row("SP500", "C1D-LSTM", Metric::Correlation, ["0.962", "0.973", "0.988", "0.986", "0.860", "0.958"], "0.955"),
    row("SP500", "C1D-ROC", Metric::Correlation, ["0.965", "0.979", "0.988", "0.982", "0.949", "0.976"], "0.973"),
    row("SP500", "WSAEs-LSTM", Metric::TheilU, ["0.009", "0.010", "0.006", "0.005", "0.008", "0.006"], "0.007"),
    row("SP500", "C1D-LSTM", Metric::TheilU, ["0.007", "0.007", "0.006", "0.005", "0.008", "0.007"], "0.007"),
    row("SP500", "C1D-ROC", Metric::TheilU, ["0.007", "0.006", "0.005", "0.004", "0.005", "0.005"], "0.005"),
];

/// Lower-cased alphanumerics, so `"S&P 500"` and `"sp500"` name the same market.
pub fn canonical_market(name: &str) -> String {
    name.chars().filter(char::is_ascii_alphanumeric).map(|c| c.to_ascii_lowercase()).collect()
}

/// Transcribed market id matching `name`, if any.
pub fn market_id(name: &str) -> Option<&'static str> {
    let key = canonical_market(name);
    MARKETS.iter().copied().find(|m| canonical_market(m) == key)
}

pub fn rows_for_market(name: &str) -> Vec<&'static ReferenceRow> {
    match market_id(name) {
        Some(id) => REFERENCE_ROWS.iter().filter(|r| r.market == id).collect(),
        None => Vec::new(),
    }
}

pub fn lookup(market: &str, model: &str, metric: Metric) -> Option<&'static ReferenceRow> {
    let id = market_id(market)?;
    REFERENCE_ROWS
        .iter()
        .find(|r| r.market == id && r.model == model && r.metric == metric)
}
