//! Exact one-sided Wilcoxon signed-rank tests between the per-subject
//! accuracy columns, and a consistency check of their printed summaries.

use fingermi::harness::{summarize_table, table, wilcoxon_signed_rank};
use fingermi::Result;

fn main() -> Result<()> {
    let pairs = [
        ("fingernet", &table::FINGERNET, "eegnet", &table::EEGNET),
        ("fingernet", &table::FINGERNET, "deepconvnet", &table::DEEPCONVNET),
    ];
    for (a, xa, b, xb) in pairs {
        let w = wilcoxon_signed_rank(xa, xb)?;
        println!(
            "{a} > {b}: n={} W+={} p={}/{} = {:.5}",
            w.n,
            w.w_plus,
            w.p_greater.numerator,
            w.p_greater.denominator,
            w.p_greater.value()
        );
    }
    for s in summarize_table(&table::columns()) {
        println!("{:<12} mean {:.4} std {:.4} (n-1: {:.4})", s.name, s.mean, s.std, s.sample_std);
        for note in &s.notes {
            println!("  {note}");
        }
    }
    Ok(())
}
