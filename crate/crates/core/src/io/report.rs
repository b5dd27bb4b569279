//! Tab-separated tables of simulation results.

use std::fmt::Write as _;

use crate::sim::{PowerTable, TestKind, Type1Table};

/// Long type-I table: one row per design, test and level.
pub fn type1_long_tsv(tables: &[(String, Type1Table)]) -> String {
    let mut s = String::from("design\tK\trho\tn\treplicates\ttest\talpha\trate\tse\tfailures\n");
    for (name, t) in tables {
        for r in &t.rows {
            let _ = writeln!(
                s,
                "{name}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}",
                t.design.k, t.design.corr.rho, t.design.n, r.replicates, r.test, r.alpha, r.rate, r.se, r.failures
            );
        }
    }
    s
}

/// Wide type-I table: one row per level and design, one column per test.
pub fn type1_wide_tsv(tables: &[(String, Type1Table)], tests: &[TestKind]) -> String {
    let mut s = String::from("alpha\tdesign\tK\trho");
    for t in tests {
        let _ = write!(s, "\t{t}");
    }
    s.push('\n');
    let mut alphas: Vec<f64> = tables.iter().flat_map(|(_, t)| t.rows.iter().map(|r| r.alpha)).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    for a in alphas {
        for (name, t) in tables {
            let _ = write!(s, "{a}\t{name}\t{}\t{}", t.design.k, t.design.corr.rho);
            for &test in tests {
                match t.rate(test, a) {
                    Some(r) => {
                        let _ = write!(s, "\t{:.5}", r.rate);
                    }
                    None => s.push_str("\tNA"),
                }
            }
            s.push('\n');
        }
    }
    s
}

/// Power curves: one row per design, test and number of associated traits.
pub fn power_tsv(tables: &[(String, PowerTable)]) -> String {
    let mut s = String::from("design\tK\trho\tcorr\tn\teffect_size\treplicates\ttest\tn_assoc\tfraction\tpower\tse\tthreshold\n");
    for (name, t) in tables {
        let d = &t.design;
        for r in &t.rows {
            let _ = writeln!(
                s,
                "{name}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.6e}",
                d.k, d.corr.rho, d.corr.kind, d.n, d.effect_size, d.replicates, r.test, r.n_assoc, r.fraction, r.power, r.se, r.threshold
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assoc::WeightGrid;
    use crate::sim::{run_power_study, run_type1_study, CorrelationSpec, SimDesign, SimMode};

    #[test]
    fn table_shapes() {
        let tests = [TestKind::Fisher, TestKind::Manova];
        let mk = |rho: f64| {
            let d = SimDesign::null(200, 2, 0.2, CorrelationSpec::cs(rho), 50, 1);
            run_type1_study(&d, &tests, &[0.01, 0.05], &WeightGrid::default(), SimMode::CrossProducts).unwrap()
        };
        let tables = vec![("a".to_string(), mk(-0.8)), ("b".to_string(), mk(0.2))];
        let wide = type1_wide_tsv(&tables, &tests);
        let lines: Vec<&str> = wide.lines().collect();
        assert_eq!(lines[0], "alpha\tdesign\tK\trho\tfisher\tmanova");
        assert_eq!(lines.len(), 1 + 2 * 2);
        assert!(lines[1].starts_with("0.01\ta\t2\t-0.8\t"));
        assert_eq!(type1_long_tsv(&tables).lines().count(), 1 + 2 * 2 * 2);

        let d = SimDesign::null(200, 3, 0.2, CorrelationSpec::cs(0.3), 40, 1).with_effect(0.3, vec![0.0; 3]);
        let p = run_power_study(&d, &[0, 1, 2, 3], &tests, &WeightGrid::default(), 0.05, SimMode::CrossProducts).unwrap();
        let s = power_tsv(&[("c".to_string(), p)]);
        assert_eq!(s.lines().count(), 1 + 2 * 4);
        assert!(s.lines().nth(1).unwrap().starts_with("c\t3\t0.3\tcs\t200\t0.3\t40\tfisher\t0\t0.0000"));
    }
}
