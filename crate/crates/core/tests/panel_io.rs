use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use parity_forecast::panel::{
    ingest_panel, GroupedPanel, PanelSeries, PanelUnit, UnitRecord, CASES_FILE, DEMOGRAPHICS_FILE, MOBILITY_FILE,
};
use parity_forecast::Error;
use proptest::prelude::*;

fn date(d: u64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 4, 1).unwrap() + chrono::Days::new(d)
}

fn write_toy(dir: &Path, units: usize, days: u64, with_mobility: bool) {
    let mut cases = String::from("unit_id,date,cases\n");
    let mut mob = String::from("unit_id,date,inflow\n");
    let mut demo = String::from("unit_id,population,frac_asian,frac_black,frac_hispanic,frac_white\n");
    for u in 0..units {
        for d in 0..days {
            cases.push_str(&format!("u{u},{},{}\n", date(d), (u as u64 * 3 + d) % 11));
            mob.push_str(&format!("u{u},{},{}\n", date(d), (d as f64 - 10.0) / 20.0));
        }
        demo.push_str(&format!("u{u},{},0.1,0.2,0.1,0.6\n", 1000 * (u + 1)));
    }
    fs::write(dir.join(CASES_FILE), cases).unwrap();
    fs::write(dir.join(DEMOGRAPHICS_FILE), demo).unwrap();
    if with_mobility {
        fs::write(dir.join(MOBILITY_FILE), mob).unwrap();
    }
}

#[test]
fn toy_panel_ingests_every_unit_and_day() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path(), 3, 30, true);
    let panel = GroupedPanel::read_dir(dir.path()).unwrap();
    assert_eq!(panel.len(), 3);
    for u in &panel.units {
        assert_eq!(u.series.len(), 30);
        assert_eq!(u.series.exog.as_ref().unwrap().len(), 30);
    }
}

#[test]
fn missing_mobility_leaves_exog_absent() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path(), 2, 10, false);
    let panel = GroupedPanel::read_dir(dir.path()).unwrap();
    assert!(panel.units.iter().all(|u| u.series.exog.is_none()));
}

#[test]
fn smoothing_spreads_a_single_spike() {
    let dir = tempfile::tempdir().unwrap();
    let mut cases = String::from("unit_id,date,cases\n");
    for (d, c) in [7, 0, 0, 0, 0, 0, 0].iter().enumerate() {
        cases.push_str(&format!("a,{},{c}\n", date(d as u64)));
    }
    fs::write(dir.path().join(CASES_FILE), cases).unwrap();
    fs::write(
        dir.path().join(DEMOGRAPHICS_FILE),
        "unit_id,population,frac_asian,frac_black,frac_hispanic,frac_white\na,10,0,0,0,1\n",
    )
    .unwrap();
    let panel = GroupedPanel::read_dir(dir.path()).unwrap();
    assert_eq!(panel.units[0].series.target_smoothed[6], 1.0);
}

#[test]
fn out_of_range_fraction_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path(), 1, 5, false);
    fs::write(
        dir.path().join(DEMOGRAPHICS_FILE),
        "unit_id,population,frac_asian,frac_black,frac_hispanic,frac_white\nu0,10,1.2,0,0,0\n",
    )
    .unwrap();
    assert!(GroupedPanel::read_dir(dir.path()).is_err());
}

#[test]
fn unit_without_demographics_is_referential() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path(), 2, 5, false);
    fs::write(
        dir.path().join(DEMOGRAPHICS_FILE),
        "unit_id,population,frac_asian,frac_black,frac_hispanic,frac_white\nu0,10,0,0,0,1\n",
    )
    .unwrap();
    let err = GroupedPanel::read_dir(dir.path()).unwrap_err();
    assert!(matches!(err, Error::Referential { ref unit, .. } if unit == "u1"), "{err}");
}

#[test]
fn date_gap_names_both_sides() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path(), 1, 5, false);
    let cases = format!("unit_id,date,cases\nu0,{},1\nu0,{},1\n", date(0), date(3));
    fs::write(dir.path().join(CASES_FILE), cases).unwrap();
    match GroupedPanel::read_dir(dir.path()).unwrap_err() {
        Error::DateGap { before, after, .. } => {
            assert_eq!(before, date(0));
            assert_eq!(after, date(3));
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn parse_errors_name_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path(), 1, 5, false);
    let cases = format!("unit_id,date,cases\nu0,{},1\nu0,{},many\n", date(0), date(1));
    fs::write(dir.path().join(CASES_FILE), cases).unwrap();
    match GroupedPanel::read_dir(dir.path()).unwrap_err() {
        Error::Parse { file, line, .. } => {
            assert!(file.ends_with(CASES_FILE));
            assert_eq!(line, 3);
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn missing_column_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path(), 1, 5, false);
    fs::write(dir.path().join(CASES_FILE), "unit_id,day,cases\n").unwrap();
    assert!(matches!(GroupedPanel::read_dir(dir.path()), Err(Error::Parse { .. })));
}

#[test]
fn missing_demographics_file_is_referential() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path(), 1, 5, false);
    let err = ingest_panel(&dir.path().join(CASES_FILE), &dir.path().join("nada.csv"), None).unwrap_err();
    assert!(matches!(err, Error::MissingPanelFile { ref path } if path.ends_with("nada.csv")));
    assert_eq!(err.category(), "referential");
}

fn arb_panel() -> impl Strategy<Value = GroupedPanel> {
    let unit = (
        1u64..10_000_000,
        prop::array::uniform4(0.0f64..0.25),
        prop::collection::vec(0.0f64..1e6, 1..40),
        any::<bool>(),
        any::<u64>(),
    );
    prop::collection::vec(unit, 1..5).prop_map(|units| {
        GroupedPanel::new(
            units
                .into_iter()
                .enumerate()
                .map(|(i, (pop, fr, raw, mob, salt))| {
                    let id = format!("unit{i}");
                    let exog = mob.then(|| {
                        raw.iter()
                            .enumerate()
                            .map(|(t, v)| (v - 5e5) * 1e-6 + (salt.wrapping_add(t as u64) % 97) as f64 / 7.0)
                            .collect()
                    });
                    PanelUnit {
                        record: UnitRecord::new(id.clone(), pop, fr).unwrap(),
                        series: PanelSeries::new(id, date(0), raw, exog).unwrap(),
                    }
                })
                .collect(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn csv_round_trip_is_lossless(panel in arb_panel()) {
        let dir = tempfile::tempdir().unwrap();
        panel.write_csvs(dir.path()).unwrap();
        let back = GroupedPanel::read_dir(dir.path()).unwrap();
        prop_assert_eq!(back.len(), panel.len());
        for (a, b) in back.units.iter().zip(&panel.units) {
            prop_assert_eq!(&a.record, &b.record);
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a.series.target_raw), bits(&b.series.target_raw));
            prop_assert_eq!(bits(&a.series.target_smoothed), bits(&b.series.target_smoothed));
            prop_assert_eq!(a.series.exog.as_deref().map(bits), b.series.exog.as_deref().map(bits));
        }
    }
}
