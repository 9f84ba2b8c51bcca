use super::evaluate::PointResult;
use crate::error::Result;
use crate::metrics::MetricsReport;

/// One CSV row per point, failures included.
pub fn ledger_csv(results: &[PointResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = vec![
        "index",
        "dropout_kind",
        "dropout_param",
        "n_exit",
        "n_pass",
        "bitwidth",
        "channel_fraction",
        "mapping_engines",
        "threshold",
        "status",
        "error",
    ];
    // the point columns already carry these
    let dup = |name: &str| matches!(name, "n_exit" | "n_pass" | "threshold");
    let metric_cols: Vec<bool> = MetricsReport::csv_header().iter().map(|c| !dup(c)).collect();
    header.extend(MetricsReport::csv_header().into_iter().filter(|c| !dup(c)));
    header.extend(["latency_cycles", "latency_ms", "dsp", "bram", "lut", "ff", "fits"]);
    w.write_record(&header)?;
    for r in results {
        let p = &r.point;
        let mut rec = vec![
            r.index.to_string(),
            p.dropout_kind.as_str().to_string(),
            p.dropout_param.to_string(),
            p.n_exit.to_string(),
            p.n_pass.to_string(),
            p.bitwidth.map_or_else(|| "fp32".into(), |b| b.to_string()),
            p.channel_fraction.to_string(),
            p.mapping_engines.to_string(),
            p.threshold.map_or_else(String::new, |t| t.to_string()),
        ];
        match &r.outcome {
            Ok(e) => {
                rec.push("ok".into());
                rec.push(String::new());
                rec.extend(
                    e.metrics
                        .csv_record()
                        .into_iter()
                        .zip(&metric_cols)
                        .filter(|(_, keep)| **keep)
                        .map(|(v, _)| v),
                );
                let res = &e.resources.resources;
                rec.extend([
                    e.latency.cycles.to_string(),
                    e.latency.ms.to_string(),
                    res.dsp.to_string(),
                    res.bram.to_string(),
                    res.lut.to_string(),
                    res.ff.to_string(),
                    e.resources.fits.to_string(),
                ]);
            }
            Err(msg) => {
                rec.push("failed".into());
                rec.push(msg.clone());
                rec.resize(header.len(), String::new());
            }
        }
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::precondition(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// Structured form of the ledger.
pub fn ledger_json(results: &[PointResult]) -> String {
    serde_json::to_string_pretty(results).expect("ledger serializes") + "\n"
}
