use std::fmt::Write;

use super::plan::{AcceleratorPlan, DropoutUnit, DropoutUnitParams, LayerRecord, Section};
use crate::dropout::Granularity;
use crate::mapping::Resources;

fn shape(s: &[usize]) -> String {
    s.iter().map(ToString::to_string).collect::<Vec<_>>().join("x")
}

fn list(v: &[usize]) -> String {
    if v.is_empty() {
        "-".into()
    } else {
        v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
    }
}

fn binding(l: &LayerRecord) -> String {
    match (l.binding.main, l.binding.exits.is_empty()) {
        (true, true) => "main".into(),
        (true, false) => format!("main+exit[{}]@eng[{}]", list(&l.binding.exits), list(&l.binding.engines)),
        (false, _) => format!("exit[{}]@eng[{}]", list(&l.binding.exits), list(&l.binding.engines)),
    }
}

/// Index expression selecting the draw or mask column for element `i`.
fn column(size: usize, columns: usize) -> String {
    if columns == size {
        "i".into()
    } else {
        format!("i / {}", size / columns)
    }
}

/// Loop-level pseudocode of one dropout unit, one statement per line.
pub fn render_pseudocode(unit: &DropoutUnit) -> Vec<String> {
    let n = unit.size;
    match &unit.params {
        DropoutUnitParams::Mcd {
            keep_rate,
            granularity,
            inverted,
            rng,
        } => {
            let draw = match granularity {
                Granularity::Element => "i".to_string(),
                Granularity::Channel => column(n, rng.draws_per_sample),
            };
            let scale = if *inverted {
                format!("temp / {}", keep_rate)
            } else {
                format!("temp * {}", keep_rate)
            };
            vec![
                format!("mcd_layer {}(input[{}], keep_rate = {}) -> output[{}]", unit.layer_id, n, keep_rate, n),
                format!("  for i in 0..{}:  // #pragma PIPELINE", n),
                "    temp = input[i]".into(),
                format!(
                    "    uniform_random = philox4x32_10(counter = [({})/2, pass], key = [{:#010x}, {:#010x}])",
                    draw, rng.key[0], rng.key[1]
                ),
                format!("    if uniform_random > {}: temp = 0", keep_rate),
                format!("    output[i] = {}", scale),
            ]
        }
        DropoutUnitParams::Masksembles { masks } => {
            let mut out = vec![
                format!(
                    "masksembles_layer {}(input[{}], mask_index, generated_masks[{}][{}]) -> output[{}]",
                    unit.layer_id, n, masks.num_masks, masks.feature_count, n
                ),
                format!("  for i in 0..{}:  // #pragma PIPELINE", n),
                format!("    mask_value = generated_masks[mask_index][{}]", column(n, masks.feature_count)),
                "    if mask_value == 0: output[i] = 0".into(),
                "    else: output[i] = input[i]".into(),
                format!("  generated_masks (scale {}):", masks.scale),
            ];
            out.extend(masks.rows.iter().enumerate().map(|(i, r)| format!("    {:>3}: {}", i, r)));
            out
        }
    }
}

fn over_budget(used: &Resources, budget: &Resources) -> Vec<&'static str> {
    [
        ("dsp", used.dsp, budget.dsp),
        ("bram", used.bram, budget.bram),
        ("lut", used.lut, budget.lut),
        ("ff", used.ff, budget.ff),
    ]
    .into_iter()
    .filter(|(_, u, b)| u > b)
    .map(|(n, _, _)| n)
    .collect()
}

/// Fixed-layout text report: summary tables, one line per layer, then the
/// pseudocode of every dropout unit.
pub fn render_report(plan: &AcceleratorPlan) -> String {
    let mut s = String::new();
    let dp = &plan.design_point;
    let est = &plan.estimates;
    let res = &est.resources.resources;
    writeln!(s, "ACCELERATOR PLAN (schema {})", plan.schema_version).unwrap();
    writeln!(s, "design    {}", dp.label()).unwrap();
    writeln!(
        s,
        "mapping   {:?}: {} samples on {} engines in {} rounds",
        plan.mapping_plan.strategy, plan.mapping_plan.n_sample, plan.mapping_plan.n_engines, plan.mapping_plan.rounds
    )
    .unwrap();
    writeln!(s, "strategy  {} @ {} MHz", plan.strategy, plan.clock_mhz).unwrap();
    if !est.resources.fits {
        let over = over_budget(res, &plan.budget);
        writeln!(s).unwrap();
        writeln!(s, "!!! WARNING: OVER BUDGET ({}) - design does not fit the device !!!", over.join(", ")).unwrap();
    }

    writeln!(s, "\nLATENCY").unwrap();
    writeln!(s, "  cycles  {:.1}", est.latency.cycles).unwrap();
    writeln!(s, "  ms      {:.6}", est.latency.ms).unwrap();

    writeln!(s, "\nRESOURCES  {:>12} {:>12} {:>7}", "used", "budget", "util").unwrap();
    for (name, u, b) in [
        ("dsp", res.dsp, plan.budget.dsp),
        ("bram", res.bram, plan.budget.bram),
        ("lut", res.lut, plan.budget.lut),
        ("ff", res.ff, plan.budget.ff),
    ] {
        writeln!(s, "  {:<8} {:>12.0} {:>12.0} {:>6.1}%", name, u, b, 100.0 * u / b).unwrap();
    }

    writeln!(s, "\nFLOPS").unwrap();
    writeln!(s, "  main        {}", est.flops.flop_main).unwrap();
    writeln!(s, "  exit total  {}", est.flops.flop_exit_total).unwrap();
    writeln!(s, "  alpha       {:.6}", est.flops.alpha).unwrap();

    if let Some(m) = &est.metrics {
        writeln!(s, "\nMETRICS").unwrap();
        writeln!(s, "  accuracy        {:.4}", m.accuracy).unwrap();
        writeln!(s, "  ece             {:.4}", m.ece).unwrap();
        writeln!(s, "  ape (nats)      {:.4}", m.ape).unwrap();
        writeln!(s, "  flops fraction  {:.4}", m.flops_fraction).unwrap();
        if let Some(f) = m.exit_flops_fraction {
            writeln!(s, "  exit flops frac {:.4}", f).unwrap();
        }
    }

    writeln!(s, "\nLAYERS ({})", plan.layers.len()).unwrap();
    writeln!(
        s,
        "  {:<22} {:<15} {:<10} {:<12} {:>10} {:<26} {:<4} quant",
        "id", "kind", "section", "shape", "flops", "binding", "pipe"
    )
    .unwrap();
    for l in &plan.layers {
        let section = match l.section {
            Section::Trunk => "trunk",
            Section::ExitTrunk => "exit-trunk",
            Section::Head => "head",
        };
        let quant = l
            .quantization
            .map_or_else(|| "fp32".to_string(), |q| format!("Q{}.{}", q.integer_bits, q.frac_bits()));
        writeln!(
            s,
            "  {:<22} {:<15} {:<10} {:<12} {:>10} {:<26} {:<4} {}",
            l.id,
            l.kind.as_str(),
            section,
            shape(&l.output_shape),
            l.flops,
            binding(l),
            if l.pipeline { "yes" } else { "no" },
            quant
        )
        .unwrap();
    }

    writeln!(s, "\nDROPOUT UNITS ({})", plan.dropout_units.len()).unwrap();
    for u in &plan.dropout_units {
        writeln!(s).unwrap();
        for line in render_pseudocode(u) {
            writeln!(s, "  {}", line).unwrap();
        }
    }
    s
}
