#![no_main]

//! Chart decoding and marginals over tables built from raw bytes.

use libfuzzer_sys::fuzz_target;
use nldm::charts;
use nldm::scoring::{EdgeScoreTable, Topology};

fuzz_target!(|data: &[u8]| {
    if data.len() < 3 {
        return;
    }
    let n = 1 + data[0] as usize % 8;
    let m = 1 + data[1] as usize % 3;
    let k = 1 + data[2] as usize % 8;
    let topology = [Topology::Full, Topology::RootOnly, Topology::ChainOnly][data[2] as usize / 8 % 3];
    let mut bytes = data[3..].iter().cycle();
    let Ok(table) = EdgeScoreTable::labeled(n, m, k, topology) else { return };
    let table = table.with_scores(|_, _, _, _| bytes.next().map_or(0.0, |&b| (b as i8) as f64 / 8.0));

    let parse = charts::labeled_max_decode(&table).expect("labeled tables admit a forest");
    parse.forest.validate().expect("decoded forest is projective");
    assert!(parse.forest.edges().all(|(h, d)| table.allowed(h, d)));
    assert!(parse.labels.iter().all(|&y| y < m));

    let marg = charts::labeled_marginals(&table).expect("marginals");
    for j in 1..=n {
        assert!((marg.dep_mass(j) - 1.0).abs() < 1e-6);
    }
    assert!(marg.log_z() >= parse.score - 1e-9);
});
