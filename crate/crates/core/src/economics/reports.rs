use serde::{Deserialize, Serialize};

use super::{congestion_costs, LmpVector, SettlementReport};
use crate::formulation::ModelKind;

/// Everything reported for one solved model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: ModelKind,
    /// currency per hour
    pub tc: f64,
    pub lmps: LmpVector,
    pub settlement: SettlementReport,
}

/// CSV documents carry full precision; text tables round currency to whole
/// units and prices to one decimal.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTables {
    pub cost_csv: String,
    pub cost_text: String,
    pub market_csv: String,
    pub market_text: String,
    /// columns bus_id, model, lmp
    pub lmp_csv: String,
}

#[derive(Clone, Copy)]
enum Unit {
    Currency,
    Price,
    Percent,
}

struct Table {
    columns: Vec<String>,
    rows: Vec<(&'static str, Unit, Vec<Option<f64>>)>,
}

impl Table {
    fn csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = std::iter::once("quantity").chain(self.columns.iter().map(String::as_str)).collect();
        w.write_record(&header).expect("in-memory write");
        for (name, _, values) in &self.rows {
            let cells: Vec<String> =
                std::iter::once(name.to_string()).chain(values.iter().map(|v| v.map_or(String::new(), |v| v.to_string()))).collect();
            w.write_record(&cells).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    fn text(&self) -> String {
        let first = self.rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(8);
        let width = self.columns.iter().map(String::len).max().unwrap_or(0).max(10) + 2;
        let mut out = format!("{:<first$}", "");
        for c in &self.columns {
            out += &format!("{c:>width$}");
        }
        out.push('\n');
        for (name, unit, values) in &self.rows {
            out += &format!("{name:<first$}");
            for v in values {
                let cell = match (v, unit) {
                    (None, _) => "-".to_string(),
                    // values that round to zero print without a sign
                    (Some(v), Unit::Currency) if v.abs() < 0.5 => "0".to_string(),
                    (Some(v), Unit::Currency) => format!("{v:.0}"),
                    (Some(v), Unit::Price) => format!("{v:.1}"),
                    (Some(v), Unit::Percent) => format!("{v:.1}%"),
                };
                out += &format!("{cell:>width$}");
            }
            out.push('\n');
        }
        out
    }
}

/// Cost and market tables with one column per model, in model order, plus
/// the per-bus price listing.
pub fn emit_reports(reports: &[ModelReport]) -> ReportTables {
    let mut reports: Vec<&ModelReport> = reports.iter().collect();
    reports.sort_by_key(|r| r.model);
    let columns: Vec<String> = reports.iter().map(|r| r.model.label().to_string()).collect();

    let tc = reports.iter().map(|r| (r.model, r.tc)).collect();
    let costs = congestion_costs(&tc).ok();
    let nr = costs.as_ref().and_then(|c| c.nr_reduction());
    let per_model = |f: &dyn Fn(&ModelReport) -> Option<f64>| reports.iter().map(|r| f(r)).collect::<Vec<_>>();
    let nr_cell = |f: &dyn Fn(&super::NrReduction) -> f64| {
        per_model(&|r| if r.model == ModelKind::ESopfNr { nr.as_ref().map(f) } else { None })
    };
    let cost_table = Table {
        columns: columns.clone(),
        rows: vec![
            ("TC", Unit::Currency, per_model(&|r| Some(r.tc))),
            ("TCC", Unit::Currency, per_model(&|r| costs.as_ref().and_then(|c| c.tcc.get(&r.model).copied()))),
            ("TCCC", Unit::Currency, per_model(&|r| costs.as_ref().and_then(|c| c.tccc.get(&r.model).copied()))),
            ("NR reduction", Unit::Currency, nr_cell(&|n| n.amount)),
            ("NR % of TCC", Unit::Percent, nr_cell(&|n| n.pct_of_tcc)),
            ("NR % of TCCC", Unit::Percent, nr_cell(&|n| n.pct_of_tccc)),
        ],
    };
    let s = |f: fn(&SettlementReport) -> f64| per_model(&|r| Some(f(&r.settlement)));
    let market_table = Table {
        columns,
        rows: vec![
            ("AvgLMP", Unit::Price, per_model(&|r| Some(r.lmps.avg))),
            ("AvgLMPw", Unit::Price, per_model(&|r| Some(r.lmps.avg_weighted))),
            ("LdPaymt", Unit::Currency, s(|x| x.load_payment)),
            ("ResGenRvn", Unit::Currency, s(|x| x.renewable_revenue)),
            ("GenRvn", Unit::Currency, s(|x| x.gen_revenue)),
            ("GenProfit", Unit::Currency, s(|x| x.gen_profit)),
            ("CongRvn", Unit::Currency, s(|x| x.congestion_revenue)),
        ],
    };

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bus_id", "model", "lmp"]).expect("in-memory write");
    for r in &reports {
        for (id, p) in r.lmps.bus_ids.iter().zip(&r.lmps.per_bus) {
            w.write_record([id.to_string(), r.model.short().to_string(), p.to_string()]).expect("in-memory write");
        }
    }
    let lmp_csv = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");

    ReportTables {
        cost_csv: cost_table.csv(),
        cost_text: cost_table.text(),
        market_csv: market_table.csv(),
        market_text: market_table.text(),
        lmp_csv,
    }
}

/// `(header, rows of (quantity, cells))`
pub type CsvTable = (Vec<String>, Vec<(String, Vec<Option<f64>>)>);

/// Reads a table written by [`emit_reports`] back; empty cells are `None`.
pub fn parse_csv_table(text: &str) -> Result<CsvTable, csv::Error> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let name = rec.get(0).unwrap_or_default().to_string();
        let cells = rec.iter().skip(1).map(|c| c.parse::<f64>().ok()).collect();
        rows.push((name, cells));
    }
    Ok((header, rows))
}
