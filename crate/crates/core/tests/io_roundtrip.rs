use trajphd::filter::{FilterConfig, LScan, MmTphdFilter};
use trajphd::io::{
    mixture_from_json, mixture_to_json, read_estimates_csv, read_scans_csv, read_truth_csv,
    write_estimates_csv, write_scans_csv, write_truth_csv,
};
use trajphd::models::maneuvering_scenario;
use trajphd::sim::{simulate, ScenarioScript};

#[test]
fn simulated_run_survives_csv_and_json() {
    let sc = maneuvering_scenario();
    let script = ScenarioScript::maneuvering();
    let (truth, scans) = simulate(&sc, &script, 17).unwrap();

    let mut buf = Vec::new();
    write_truth_csv(&mut buf, &truth).unwrap();
    assert_eq!(read_truth_csv(buf.as_slice()).unwrap(), truth);

    let mut buf = Vec::new();
    write_scans_csv(&mut buf, &scans).unwrap();
    assert_eq!(read_scans_csv(buf.as_slice(), script.duration).unwrap(), scans);

    let cfg = FilterConfig::for_scenario(&sc.params).with_lscan(LScan::Window(2));
    let mut f =
        MmTphdFilter::new(sc.modes.clone(), sc.birth.clone(), sc.measurement.clone(), cfg).unwrap();
    let estimates: Vec<_> = scans.iter().take(30).map(|s| f.step(s).unwrap()).collect();

    let json = mixture_to_json(f.posterior()).unwrap();
    assert_eq!(&mixture_from_json(&json).unwrap(), f.posterior());

    let steps: Vec<_> = estimates
        .iter()
        .enumerate()
        .map(|(i, e)| (i + 1, e.as_slice()))
        .collect();
    let mut buf = Vec::new();
    write_estimates_csv(&mut buf, &steps).unwrap();
    let back = read_estimates_csv(buf.as_slice()).unwrap();
    for (k, e) in steps {
        assert_eq!(back.get(&k).map(Vec::as_slice).unwrap_or(&[]), e);
    }
}
