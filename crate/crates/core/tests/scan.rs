//! End-to-end scans over small files.

use std::io::Write;
use std::path::Path;

use usat::assoc::marginal_tests;
use usat::covariates::{adjusted_manova, adjusted_usat, fit_null, CovariateMode};
use usat::io::{parse_covariates, parse_phenotypes, read_results, ScanConfig, ScanTest};
use usat::scan::run_scan;
use usat::sim::SyntheticGwas;
use usat::{build_sufficient_stats, fisher_combine, manova_test, minp_combine, ssu_test, usat_test, Error, GenotypeRecord, WeightGrid};

fn write(path: &Path, s: &str) {
    std::fs::File::create(path).unwrap().write_all(s.as_bytes()).unwrap();
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 5e-6 * b.abs().max(1e-300)
}

#[test]
fn single_variant_matches_library_calls() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        &d.join("p.tsv"),
        "sample_id\tt1\tt2\n\
         a\t1.2\t0.3\nb\t0.4\t-1.1\nc\t2.5\t1.9\nd\t-0.7\t0.2\ne\t0.1\t-0.4\nf\t1.8\t2.2\ng\t-1.3\t-0.9\nh\t0.9\t0.1\n",
    );
    write(&d.join("g.tsv"), "snp_id\tchrom\tpos\ta\tb\tc\td\te\tf\tg\th\nrs1\t3\t12345\t0\t1\t2\t0\t1\t2\t0\t1\n");
    let mut cfg = ScanConfig::new(d.join("p.tsv"), d.join("g.tsv"), d.join("o.tsv"));
    cfg.threads = Some(1);
    run_scan(&cfg).unwrap();
    let rows = read_results(d.join("o.tsv")).unwrap();
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert_eq!((r.snp_id.as_str(), r.chrom.as_str(), r.pos, r.n_used), ("rs1", "3", 12345, 8));
    assert_eq!(r.reason, "ok");

    let p = parse_phenotypes(d.join("p.tsv")).unwrap();
    let x = GenotypeRecord::from_dosage(vec![0., 1., 2., 0., 1., 2., 0., 1.]).unwrap();
    let st = build_sufficient_stats(&p.traits, &x).unwrap();
    let m = manova_test(&st).unwrap();
    let s = ssu_test(&st).unwrap();
    let u = usat_test(&st, &WeightGrid::default()).unwrap();
    let marg: Vec<f64> = marginal_tests(&p.traits, &x).unwrap().iter().map(|o| o.p_value).collect();
    assert!(rel_close(r.maf, x.maf()));
    assert!(rel_close(r.p_manova.unwrap(), m.p_value));
    assert!(rel_close(r.t_manova.unwrap(), m.statistic));
    assert!(rel_close(r.p_ssu.unwrap(), s.p_value));
    assert!(rel_close(r.t_ssu.unwrap(), s.statistic));
    assert!(rel_close(r.p_usat.unwrap(), u.p_value));
    assert_eq!(r.usat_omega_star, Some(u.usat_detail().unwrap().omega_star));
    assert!(rel_close(r.p_fisher.unwrap(), fisher_combine(&marg).unwrap().p_value));
    assert!(rel_close(r.p_minp.unwrap(), minp_combine(&marg).unwrap().p_value));
    for (a, b) in r.p_traits.iter().zip(&marg) {
        assert!(rel_close(a.unwrap(), *b));
    }
}

fn gwas(n_variants: usize, missing: f64) -> SyntheticGwas {
    let mut g = SyntheticGwas::pleiotropic(300, 3, n_variants, 3, 30.0, 11);
    g.missing_rate = missing;
    g.maf_min = 0.005;
    g
}

fn synthetic(dir: &Path, n_variants: usize, missing: f64) -> usat::sim::SyntheticFiles {
    gwas(n_variants, missing).write(dir).unwrap()
}

#[test]
fn output_identical_across_thread_counts_and_chunk_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let f = synthetic(dir.path(), 400, 0.05);
    let mut outputs = Vec::new();
    for (threads, chunk) in [(1, 256), (8, 7), (3, 1)] {
        let out = dir.path().join(format!("o{threads}.tsv"));
        let mut cfg = ScanConfig::new(&f.pheno, &f.geno, &out);
        cfg.threads = Some(threads);
        cfg.chunk_size = chunk;
        run_scan(&cfg).unwrap();
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert!(outputs.len() == 3 && outputs[0] == outputs[1] && outputs[1] == outputs[2]);
    // a rerun over an existing file replaces it with the same bytes
    let out = dir.path().join("o1.tsv");
    let mut cfg = ScanConfig::new(&f.pheno, &f.geno, &out);
    cfg.threads = Some(2);
    run_scan(&cfg).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), outputs[0]);
}

#[test]
fn filters_and_row_order() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let f = synthetic(d, 200, 0.15);
    let out = d.join("o.tsv");
    let mut cfg = ScanConfig::new(&f.pheno, &f.geno, &out);
    cfg.maf_min = 0.05;
    let s = run_scan(&cfg).unwrap();
    let rows = read_results(&out).unwrap();
    assert_eq!(s.variants_read, 200);
    assert_eq!(s.rows_written, rows.len());
    // every tenth variant has ~15% missing calls and is dropped
    assert!(s.skipped_missing >= 15, "{s:?}");
    assert!(s.skipped_maf > 0, "{s:?}");
    assert_eq!(s.rows_written + s.skipped_maf + s.skipped_missing, 200);
    assert!(rows.iter().all(|r| r.maf >= 0.05));
    let idx: Vec<usize> = rows.iter().map(|r| r.snp_id[3..].parse().unwrap()).collect();
    assert!(idx.windows(2).all(|w| w[0] < w[1]));
    assert!(!idx.iter().any(|i| i % 10 == 9));
}

#[test]
fn monomorphic_variant_gives_na_row_with_reason() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(&d.join("p.tsv"), "sample_id\tt1\tt2\na\t1\t2\nb\t3\t1\nc\t0\t5\nd\t2\t2\ne\t-1\t0.5\nf\t0.3\t4\n");
    write(
        &d.join("g.tsv"),
        "snp_id\tchrom\tpos\ta\tb\tc\td\te\tf\nmono\t1\t1\t1\t1\t1\t1\t1\t1\nnone\t1\t2\tNA\tNA\tNA\tNA\tNA\tNA\nok\t1\t3\t0\t1\t2\t1\t0\t2\n",
    );
    let out = d.join("o.tsv");
    let mut cfg = ScanConfig::new(d.join("p.tsv"), d.join("g.tsv"), &out);
    cfg.maf_min = 0.0;
    cfg.max_missing = 1.0;
    cfg.tests = vec![ScanTest::Manova, ScanTest::Usat, ScanTest::Marginal];
    let s = run_scan(&cfg).unwrap();
    let rows = read_results(&out).unwrap();
    assert_eq!(s.failed, 2, "{rows:?}");
    assert_eq!(rows.iter().map(|r| r.reason.as_str()).collect::<Vec<_>>(), ["monomorphic", "monomorphic", "ok"]);
    assert!(rows[0].p_manova.is_none() && rows[0].p_usat.is_none() && rows[0].p_traits.iter().all(Option::is_none));
    assert!(rows[2].p_manova.is_some() && rows[2].p_traits.iter().all(Option::is_some));
    // unselected tests stay NA
    assert!(rows[2].p_ssu.is_none() && rows[2].p_fisher.is_none());
}

#[test]
fn covariate_scan_matches_adjusted_library_calls() {
    let dir = tempfile::tempdir().unwrap();
    let f = synthetic(dir.path(), 20, 0.0);
    let out = dir.path().join("o.tsv");
    let mut cfg = ScanConfig::new(&f.pheno, &f.geno, &out);
    cfg.covar_path = Some(f.covar.clone());
    cfg.maf_min = 0.0;
    run_scan(&cfg).unwrap();
    let rows = read_results(&out).unwrap();
    assert_eq!(rows.len(), 20);
    let p = parse_phenotypes(&f.pheno).unwrap();
    let z = parse_covariates(&f.covar, &p.sample_ids).unwrap();
    let fit = fit_null(&p.traits, &z, CovariateMode::Shared).unwrap();
    let g = gwas(20, 0.0);
    for (i, r) in rows.iter().enumerate() {
        let x = GenotypeRecord::from_dosage(g.variant(i).1).unwrap();
        assert!(rel_close(r.p_manova.unwrap(), adjusted_manova(&fit, &x).unwrap().p_value));
        assert!(rel_close(r.p_usat.unwrap(), adjusted_usat(&fit, &x, &WeightGrid::default()).unwrap().p_value));
    }
}

#[test]
fn schema_and_parse_errors_abort_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(&d.join("p.tsv"), "sample_id\tt1\na\t1\nb\t3\nc\t0\n");
    write(&d.join("g_order.tsv"), "snp_id\tchrom\tpos\tb\ta\tc\nrs1\t1\t1\t0\t1\t2\n");
    write(&d.join("g_bad.tsv"), "snp_id\tchrom\tpos\ta\tb\tc\nrs1\t1\t1\t0\t1\t2\nrs2\t1\t2\t0\t2.5\t1\n");
    let out = d.join("o.tsv");
    let r = run_scan(&ScanConfig::new(d.join("p.tsv"), d.join("g_order.tsv"), &out));
    assert!(matches!(r, Err(Error::Schema { .. })), "{r:?}");
    let mut cfg = ScanConfig::new(d.join("p.tsv"), d.join("g_bad.tsv"), &out);
    cfg.maf_min = 0.0;
    let r = run_scan(&cfg);
    assert!(matches!(r, Err(Error::Parse { line: 3, .. })), "{r:?}");
    assert!(!out.exists());
    let leftovers: Vec<_> = std::fs::read_dir(d).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(leftovers.len(), 3, "{leftovers:?}");
}
