use fred::data::{average_ranks, gaussian_ranks, CountSeries, Frequency, NaiveDate};
use fred::models::binbar::BiNbarParams;
use fred::models::inar::InarParams;
use fred::models::nbar::NbarParams;
use fred::registry::{table1, table1_rho_grid, table1_u_grid, ModelSpec, MODEL_IDS};
use fred::scenario::{run_scenario, ScenarioSpec};
use fred::sim::simulate_series;
use fred::{FredError, Kind};
use serde_json::json;

fn weekly(body: &str) -> fred::Result<CountSeries> {
    CountSeries::from_reader(format!("date,a,b\n{body}").as_bytes(), Frequency::Weekly)
}

#[test]
fn ingest_accepts_regular_weekly_counts() {
    let s = weekly("2021-01-04,1,0\n2021-01-11,3,2\n2021-01-18,0,5\n").unwrap();
    assert_eq!(s.len(), 3);
    assert_eq!(s.labels, ["a", "b"]);
    assert_eq!(s.column(1), vec![0.0, 2.0, 5.0]);
    assert_eq!(s.column_index("b").unwrap(), 1);
    assert_eq!(s.column_index("0").unwrap(), 0);
    assert!(s.column_index("c").is_err());
}

fn row_of(e: FredError) -> usize {
    match e {
        FredError::Data { row, .. } => row,
        other => panic!("expected a data error, got {other:?}"),
    }
}

#[test]
fn ingest_errors_name_the_row() {
    assert_eq!(row_of(weekly("2021-01-04,1,0\n2021-01-11,3,2\n2021-01-25,0,5\n").unwrap_err()), 3);
    assert_eq!(row_of(weekly("2021-01-04,1,0\n2021-01-11,-3,2\n").unwrap_err()), 2);
    assert_eq!(row_of(weekly("2021-01-04,1.5,0\n").unwrap_err()), 1);
    assert_eq!(row_of(weekly("2021-01-04,1,0\n2021-01-11,,2\n").unwrap_err()), 2);
    assert_eq!(row_of(weekly("2021-01-04,1,0\n2021-01-04,1,0\n").unwrap_err()), 2);
    assert_eq!(row_of(weekly("2021-01-04,1\n").unwrap_err()), 1);
    assert!(weekly("").is_err());
    assert!(CountSeries::from_reader("".as_bytes(), Frequency::Weekly).is_err());
    assert!(CountSeries::from_reader("when,a\n2021-01-04,1\n".as_bytes(), Frequency::Weekly).is_err());
}

#[test]
fn frequencies_parse() {
    assert_eq!("Monthly".parse::<Frequency>().unwrap(), Frequency::Monthly);
    assert_eq!("q".parse::<Frequency>().unwrap(), Frequency::Quarterly);
    assert!("hourly".parse::<Frequency>().is_err());
    let d = NaiveDate::from_ymd_opt(2020, 11, 30).unwrap();
    assert_eq!(Frequency::Quarterly.next(d), NaiveDate::from_ymd_opt(2021, 2, 28));
}

#[test]
fn series_round_trip_through_csv() {
    let rows = simulate_series(&BiNbarParams::reference_admissible(), 60, 4);
    let start = NaiveDate::from_ymd_opt(2015, 3, 1).unwrap();
    let s = CountSeries::from_rows(start, Frequency::Monthly, vec!["x".into(), "y".into()], rows).unwrap();
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    assert_eq!(CountSeries::from_reader(buf.as_slice(), Frequency::Monthly).unwrap(), s);
    let f = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(f.path(), &buf).unwrap();
    assert_eq!(CountSeries::ingest(f.path(), Frequency::Monthly).unwrap(), s);
}

#[test]
fn simulated_nbar_counts_are_overdispersed() {
    let rows = simulate_series(&NbarParams::new(0.66, 1.69).unwrap(), 4000, 12);
    let start = NaiveDate::from_ymd_opt(2005, 1, 3).unwrap();
    let s = CountSeries::from_rows(start, Frequency::Weekly, vec!["n".into()], rows).unwrap();
    let sum = &s.summary()[0];
    assert!(sum.variance > 2.0 * sum.mean, "{sum:?}");
    assert!(sum.skewness > 0.0);
    // Stationary mean delta rho / (1 - rho).
    assert!((sum.mean - 1.69 * 0.66 / 0.34).abs() < 0.5, "{}", sum.mean);
}

#[test]
fn summary_moments_by_hand() {
    let s = weekly("2021-01-04,0,1\n2021-01-11,1,1\n2021-01-18,2,1\n2021-01-25,5,2\n").unwrap();
    let a = &s.summary()[0];
    // mean 2, deviations -2,-1,0,3.
    assert_eq!(a.mean, 2.0);
    assert!((a.variance - 14.0 / 3.0).abs() < 1e-12);
    let m2 = 14.0 / 4.0;
    assert!((a.skewness - (18.0 / 4.0) / f64::powf(m2, 1.5)).abs() < 1e-12);
    assert!((a.excess_kurtosis - (98.0 / 4.0) / (m2 * m2) + 3.0).abs() < 1e-12);
    assert_eq!(a.zeros, 1);
}

#[test]
fn ranks_of_increasing_column_are_ordered_quantiles() {
    let x: Vec<f64> = (0..9).map(|i| (i * i) as f64).collect();
    let g = gaussian_ranks(&x);
    assert!(g.windows(2).all(|w| w[0] < w[1]));
    // Rank 5 of 9 sits at the median.
    assert!(g[4].abs() < 1e-12);
    assert!((g[0] + g[8]).abs() < 1e-12);
    assert!((g[0] + 1.2815515655446004).abs() < 1e-9);
}

#[test]
fn identical_columns_give_diagonal_pairs_and_ties_average() {
    let x = [3.0, 1.0, 3.0, 2.0, 3.0];
    assert_eq!(average_ranks(&x), vec![4.0, 1.0, 4.0, 2.0, 4.0]);
    assert_eq!(gaussian_ranks(&x), gaussian_ranks(&x.to_vec()));
}

#[test]
fn independent_columns_have_uncorrelated_ranks() {
    let a: Vec<f64> = simulate_series(&InarParams::new(0.0, 3.0).unwrap(), 5000, 1).into_iter().map(|r| r[0]).collect();
    let b: Vec<f64> = simulate_series(&InarParams::new(0.0, 3.0).unwrap(), 5000, 2).into_iter().map(|r| r[0]).collect();
    let (ga, gb) = (gaussian_ranks(&a), gaussian_ranks(&b));
    let n = ga.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (ma, mb) = (mean(&ga), mean(&gb));
    let cov: f64 = ga.iter().zip(&gb).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    let sa = (ga.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n).sqrt();
    let sb = (gb.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n).sqrt();
    let r = cov / (sa * sb);
    assert!(r.abs() < 3.0 / n.sqrt(), "{r}");
}

#[test]
fn table1_corner_cells() {
    let g = table1(2.0, &table1_rho_grid(), &table1_u_grid()).unwrap();
    assert_eq!(g.len(), 10);
    assert_eq!(format!("{:.2}", g[0][0]), "0.01");
    assert_eq!(format!("{:.2}", g[9][9]), "74.43");
}

#[test]
fn table1_is_linear_in_lambda_and_matches_long_horizons() {
    let (rho, u) = (table1_rho_grid(), table1_u_grid());
    let one = table1(1.0, &rho, &u).unwrap();
    let two = table1(2.0, &rho, &u).unwrap();
    for i in 0..10 {
        for j in 0..10 {
            assert!((two[i][j] - 2.0 * one[i][j]).abs() < 1e-12 * two[i][j].max(1.0));
        }
    }
    // The closed-form limit agrees with the affine recursion at a long horizon.
    for (i, j) in [(0, 0), (4, 7), (9, 9)] {
        let m = InarParams::new(rho[i], 2.0).unwrap();
        let t = m.feld_table(u[j], 1.0, &[800]).unwrap();
        assert!((t.total(800).unwrap() - two[i][j]).abs() < 1e-8 * two[i][j], "cell ({i},{j})");
    }
    assert!(table1(2.0, &[], &u).is_err());
    assert!(table1(2.0, &rho, &[-1.0]).is_err());
}

#[test]
fn registry_builds_every_model() {
    let params = [
        json!({"p": 0.7, "lambda": 2.0}),
        json!({"beta": 0.5, "delta": 1.0}),
        json!({"rho": 0.66, "delta": 1.69}),
        serde_json::to_value(BiNbarParams::reference_admissible()).unwrap(),
        json!({"phi": [0.6, 0.1, 0.2, 0.5], "sigma": [1.0, 0.2, 0.2, 0.5]}),
        json!({"p": [0.9, 0.1, 0.2, 0.8], "n": 2}),
        json!({"pi": 0.3, "lambda": 0.5}),
        json!({"m": [0.5], "sigma": [1.0], "k_dof": 3.0}),
        json!({"phi": 0.5, "sigma": 1.0}),
    ];
    for (id, p) in MODEL_IDS.iter().zip(&params) {
        let m = ModelSpec::from_json(id, p).unwrap_or_else(|e| panic!("{id}: {e}"));
        assert_eq!(m.id(), *id);
        assert_eq!(m.as_simulate().model_id(), *id);
    }
    assert!(ModelSpec::from_json("garch", &json!({})).is_err());
    assert!(ModelSpec::from_json("inar", &json!({"p": 1.2, "lambda": 2.0})).is_err());
    assert!(ModelSpec::from_json("inar", &json!({"p": 0.2})).is_err());
}

#[test]
fn decompose_routes_and_rejects() {
    let inar = ModelSpec::from_json("inar", &json!({"p": 0.7, "lambda": 2.0})).unwrap();
    let hs: Vec<usize> = (1..=10).collect();
    let t = inar.decompose(Kind::Feld, &[3.0], &[3.0], &hs).unwrap();
    assert_eq!(t, InarParams::new(0.7, 2.0).unwrap().feld_table(3.0, 3.0, &hs).unwrap());
    let arg = ModelSpec::from_json("arg", &json!({"beta": 0.5, "delta": 1.0})).unwrap();
    let z = arg.decompose(Kind::Feld, &[0.0], &[2.0], &hs).unwrap();
    assert!(z.iter_terms().all(|(_, v)| v == 0.0) && hs.iter().all(|h| z.total(*h) == Some(0.0)));
    let cauchy = ModelSpec::from_json("cauchy", &json!({"phi": 0.5, "sigma": 1.0})).unwrap();
    assert!(matches!(cauchy.decompose(Kind::Fevd, &[], &[1.0], &hs), Err(FredError::Unsupported(_))));
    assert!(matches!(inar.decompose(Kind::Fekd, &[1.0], &[1.0], &hs), Err(FredError::Unsupported(_))));
    assert!(inar.decompose(Kind::Feld, &[1.0], &[1.0], &[]).is_err());
    assert!(inar.decompose(Kind::Feld, &[1.0, 2.0], &[1.0], &hs).is_err());
}

fn exercise(arguments: Vec<Vec<f64>>, states: Vec<Vec<f64>>) -> ScenarioSpec {
    ScenarioSpec {
        model: "nbar2".into(),
        params: Some(serde_json::to_value(BiNbarParams::reference_admissible()).unwrap()),
        fit: None,
        kind: Kind::Feld,
        arguments,
        states,
        horizon: 10,
    }
}

#[test]
fn scenario_totals_rise_with_aversion_and_counts() {
    let spec = exercise(vec![vec![2.0, 2.0], vec![0.5, 0.5]], vec![vec![5.0, 5.0], vec![0.0, 0.0]]);
    let out = run_scenario(&spec, &spec.model(None).unwrap()).unwrap();
    let labels: Vec<&str> = out.cells.iter().map(|c| c.label.as_str()).collect();
    assert_eq!(labels, ["arg=2,2;state=5,5", "arg=2,2;state=0,0", "arg=0.5,0.5;state=5,5", "arg=0.5,0.5;state=0,0"]);
    let tot: Vec<f64> = out.cells.iter().map(|c| c.table.total(10).unwrap()).collect();
    // Increasing in u at either state, increasing in Y at either u.
    assert!(tot[0] > tot[2] && tot[1] > tot[3], "{tot:?}");
    assert!(tot[0] > tot[1] && tot[2] > tot[3], "{tot:?}");
    // Risk aversion dominates: high u with zero counts beats low u with high counts.
    assert!(tot[1] > tot[2], "{tot:?}");
    let mut buf = Vec::new();
    out.write_comparison_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 11);
    let mut buf = Vec::new();
    out.write_shares_csv(&mut buf).unwrap();
    // 4 cells, sum over h of h terms.
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 4 * 55);
}

#[test]
fn single_cell_scenario_equals_decompose() {
    let spec = exercise(vec![vec![1.0, 0.5]], vec![vec![2.0, 1.0]]);
    let model = spec.model(None).unwrap();
    let out = run_scenario(&spec, &model).unwrap();
    assert_eq!(out.cells.len(), 1);
    let hs: Vec<usize> = (1..=10).collect();
    assert_eq!(out.cells[0].table, model.decompose(Kind::Feld, &[1.0, 0.5], &[2.0, 1.0], &hs).unwrap());
}

#[test]
fn scenario_rejects_negative_arguments_and_empty_grids() {
    let spec = exercise(vec![vec![1.0, 1.0], vec![-0.5, 1.0]], vec![vec![1.0, 1.0]]);
    assert!(run_scenario(&spec, &spec.model(None).unwrap()).is_err());
    let spec = exercise(vec![], vec![vec![1.0, 1.0]]);
    assert!(run_scenario(&spec, &spec.model(None).unwrap()).is_err());
    let mut spec = exercise(vec![vec![1.0, 1.0]], vec![vec![1.0, 1.0]]);
    spec.horizon = 0;
    assert!(run_scenario(&spec, &spec.model(None).unwrap()).is_err());
}

#[test]
fn scenario_reads_parameters_from_a_fit_file() {
    let dir = tempfile::tempdir().unwrap();
    let fit = json!({"theta": {"rho": 0.5, "delta": 2.0}, "std_errors": {}});
    std::fs::write(dir.path().join("fit.json"), fit.to_string()).unwrap();
    let spec: ScenarioSpec = serde_json::from_value(json!({
        "model": "nbar", "fit": "fit.json", "kind": "feld",
        "arguments": [[1.0]], "states": [[3.0]], "horizon": 4
    }))
    .unwrap();
    let model = spec.model(Some(dir.path())).unwrap();
    let out = run_scenario(&spec, &model).unwrap();
    let direct = NbarParams::new(0.5, 2.0).unwrap().feld_table(1.0, 3.0, &[1, 2, 3, 4]).unwrap();
    assert_eq!(out.cells[0].table, direct);
    assert!(spec.model(None).is_err());
}
