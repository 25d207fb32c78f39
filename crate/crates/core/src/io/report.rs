use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{format_number, write_json, write_text, IoError};
use crate::calibration::{CalibrationResult, DeviationRow, MarketRecord, Termination};
use crate::market::{Equilibrium, MarketNetwork};

/// Files written by [`Report::write`].
pub const REPORT_FILES: [&str; 6] = [
    "report.json",
    "deviations.csv",
    "anchors.csv",
    "theta.csv",
    "trace.csv",
    "iterations.csv",
];

/// A calibration result together with the ids needed to render it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub nodes: Vec<String>,
    pub periods: Vec<String>,
    pub traders: Vec<String>,
    pub result: CalibrationResult,
}

impl ResultFile {
    pub fn new(net: &MarketNetwork, result: CalibrationResult) -> Self {
        Self {
            nodes: net.nodes.clone(),
            periods: net.periods.clone(),
            traders: net.traders.iter().map(|t| t.id.clone()).collect(),
            result,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRow {
    pub node: String,
    pub period: String,
    pub s_ref: f64,
    pub lambda_ref: f64,
    pub lambda0: f64,
    pub eta_ref: f64,
    pub eta: f64,
    /// Reference price bounds after widening.
    pub lambda_lo: f64,
    pub lambda_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaRow {
    pub trader: String,
    pub node: String,
    pub period: String,
    pub theta: f64,
}

/// Rendered calibration report. Every statistic is recomputed from the
/// result's vectors when the report is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub iterations: usize,
    pub termination: Termination,
    pub deviations: Vec<DeviationRow>,
    pub anchors: Vec<AnchorRow>,
    pub theta: Vec<ThetaRow>,
    #[serde(skip)]
    trace_csv: String,
    #[serde(skip)]
    iterations_csv: String,
    #[serde(skip)]
    theta_csv: String,
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)
        .expect("writing to memory cannot fail");
    for row in rows {
        w.write_record(&row).expect("writing to memory cannot fail");
    }
    String::from_utf8(w.into_inner().expect("flushing to memory cannot fail"))
        .expect("CSV is UTF-8")
}

fn num(x: f64) -> String {
    format_number(x)
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

impl Report {
    pub fn build(file: &ResultFile) -> Self {
        let r = &file.result;
        let node = |n: usize| file.nodes[n].clone();
        let period = |t: usize| file.periods[t].clone();
        let mut anchors = Vec::new();
        let mut theta = Vec::new();
        for m in &r.markets {
            let (n, t) = (m.node, m.period);
            if let Some(a) = r.anchors.get(n, t) {
                anchors.push(AnchorRow {
                    node: node(n),
                    period: period(t),
                    s_ref: r.reference.s_ref.at(n, t),
                    lambda_ref: r.reference.lambda_ref.at(n, t),
                    lambda0: a.lambda0,
                    eta_ref: r.reference.eta_ref.at(n, t),
                    eta: a.eta,
                    lambda_lo: r.lambda_lo.at(n, t),
                    lambda_hi: r.lambda_hi.at(n, t),
                });
            }
            for &f in &m.traders {
                theta.push(ThetaRow {
                    trader: file.traders[f].clone(),
                    node: node(n),
                    period: period(t),
                    theta: r.theta.at(f, n, t),
                });
            }
        }

        // Traders as rows, markets as columns; blank where a trader cannot sell.
        let columns: Vec<String> = r
            .markets
            .iter()
            .map(|m| format!("{}/{}", node(m.node), period(m.period)))
            .collect();
        let mut header = vec!["trader"];
        header.extend(columns.iter().map(String::as_str));
        let theta_csv = csv_text(
            &header,
            (0..file.traders.len()).map(|f| {
                let mut row = vec![file.traders[f].clone()];
                row.extend(r.markets.iter().map(|m| {
                    if m.traders.contains(&f) {
                        num(r.theta.at(f, m.node, m.period))
                    } else {
                        String::new()
                    }
                }));
                row
            }),
        );
        let trace_csv = csv_text(
            &[
                "iteration",
                "node",
                "period",
                "range_lo",
                "range_hi",
                "lambda_lo",
                "lambda_hi",
                "lambda0",
                "eta",
                "minus_eta_hi",
                "lambda_satisfied",
                "eta_satisfied",
                "hit_lower",
                "hit_upper",
                "widened_lower",
                "widened_upper",
            ],
            r.trace.iter().flat_map(|it| {
                it.markets.iter().map(move |m| {
                    vec![
                        it.iteration.to_string(),
                        node(m.node),
                        period(m.period),
                        num(m.range.lo),
                        num(m.range.hi),
                        num(m.lambda_lo),
                        num(m.lambda_hi),
                        num(m.choice.lambda0),
                        num(m.choice.eta),
                        num(m.choice.minus_eta_hi),
                        flag(m.choice.lambda_satisfied),
                        flag(m.choice.eta_satisfied),
                        flag(m.choice.hit_lower),
                        flag(m.choice.hit_upper),
                        flag(m.widened_lower),
                        flag(m.widened_upper),
                    ]
                })
            }),
        );
        let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
        let iterations_csv = csv_text(
            &[
                "iteration",
                "markets",
                "satisfied",
                "widened",
                "consumption_check",
                "price_pinning",
            ],
            r.trace.iter().map(|it| {
                vec![
                    it.iteration.to_string(),
                    it.markets.len().to_string(),
                    it.satisfied_markets.to_string(),
                    it.widened.to_string(),
                    opt(it.consumption_check),
                    opt(it.price_pinning),
                ]
            }),
        );
        Self {
            iterations: r.iterations,
            termination: r.termination,
            deviations: r.compute_deviations(),
            anchors,
            theta,
            trace_csv,
            iterations_csv,
            theta_csv,
        }
    }

    pub fn deviations_csv(&self) -> String {
        csv_text(
            &[
                "value",
                "reference",
                "count",
                "min_abs",
                "max_abs",
                "min_rel",
                "max_rel",
                "mean",
                "median",
            ],
            self.deviations.iter().map(|d| {
                vec![
                    d.value.clone(),
                    d.reference.clone(),
                    d.count.to_string(),
                    num(d.min_abs),
                    num(d.max_abs),
                    num(d.min_rel),
                    num(d.max_rel),
                    num(d.mean),
                    num(d.median),
                ]
            }),
        )
    }

    pub fn anchors_csv(&self) -> String {
        csv_text(
            &[
                "node",
                "period",
                "s_ref",
                "lambda_ref",
                "lambda0",
                "eta_ref",
                "eta",
                "lambda_lo",
                "lambda_hi",
            ],
            self.anchors.iter().map(|a| {
                vec![
                    a.node.clone(),
                    a.period.clone(),
                    num(a.s_ref),
                    num(a.lambda_ref),
                    num(a.lambda0),
                    num(a.eta_ref),
                    num(a.eta),
                    num(a.lambda_lo),
                    num(a.lambda_hi),
                ]
            }),
        )
    }

    pub fn theta_csv(&self) -> &str {
        &self.theta_csv
    }

    pub fn trace_csv(&self) -> &str {
        &self.trace_csv
    }

    pub fn iterations_csv(&self) -> &str {
        &self.iterations_csv
    }

    /// Writes `report.json` and the CSV tables into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), IoError> {
        write_json(&dir.join(REPORT_FILES[0]), self)?;
        write_text(&dir.join(REPORT_FILES[1]), &self.deviations_csv())?;
        write_text(&dir.join(REPORT_FILES[2]), &self.anchors_csv())?;
        write_text(&dir.join(REPORT_FILES[3]), self.theta_csv())?;
        write_text(&dir.join(REPORT_FILES[4]), self.trace_csv())?;
        write_text(&dir.join(REPORT_FILES[5]), self.iterations_csv())
    }
}

/// Sales per (trader, node, period) and price and consumption per consumer
/// market.
pub fn equilibrium_tables(net: &MarketNetwork, eq: &Equilibrium) -> (String, String) {
    let mut sales = Vec::new();
    let mut prices = Vec::new();
    for t in 0..net.n_periods() {
        for n in net.consumer_nodes() {
            prices.push(vec![
                net.nodes[n].clone(),
                net.periods[t].clone(),
                num(eq.price.at(n, t)),
                num(eq.consumption.at(n, t)),
            ]);
            for f in net.traders_at(n) {
                sales.push(vec![
                    net.traders[f].id.clone(),
                    net.nodes[n].clone(),
                    net.periods[t].clone(),
                    num(eq.sales.at(f, n, t)),
                    num(eq.phi.at(f, n, t)),
                ]);
            }
        }
    }
    (
        csv_text(&["trader", "node", "period", "sales", "phi"], sales),
        csv_text(&["node", "period", "price", "consumption"], prices),
    )
}

/// Admissible price ranges and anchor choices per consumer market.
pub fn ranges_table(net: &MarketNetwork, records: &[MarketRecord]) -> String {
    csv_text(
        &[
            "node",
            "period",
            "lambda_lo",
            "lambda_hi",
            "lambda0",
            "minus_eta_hi",
            "eta",
            "satisfied",
        ],
        records.iter().map(|m| {
            vec![
                net.nodes[m.node].clone(),
                net.periods[m.period].clone(),
                num(m.range.lo),
                num(m.range.hi),
                num(m.choice.lambda0),
                num(m.choice.minus_eta_hi),
                num(m.choice.eta),
                flag(m.choice.satisfied()),
            ]
        }),
    )
}
