use genus2::gen::{generate, Flavor};
use genus2::gf::field_make;
use genus2::groups::{self, Mode};
use genus2::io::{FormsFile, WitnessFile};

#[test]
fn generated_pairs_survive_the_file_formats() {
    for (p, k, d, flavor) in [(5, 1, 8, Flavor::Sloped), (3, 2, 6, Flavor::Sloped), (7, 1, 7, Flavor::Flat), (2, 1, 9, Flavor::Mixed)] {
        let ctx = field_make(p, k, 0).unwrap();
        let inst = generate(&ctx, d, flavor, 42).unwrap();
        let a = FormsFile::parse(&FormsFile::new(inst.a.clone(), Some(42)).serialize()).unwrap();
        let b = FormsFile::parse(&FormsFile::new(inst.b.clone(), Some(42)).serialize()).unwrap();
        assert_eq!((a.seed, a.sys.forms.clone()), (Some(42), inst.a.forms.clone()));
        let w = groups::pseudo_isometry_test(&a.sys, &b.sys, Mode::Auto).unwrap().expect("planted pair");
        let file = WitnessFile::parse(&WitnessFile::new(&ctx, d, 2, vec![w, inst.planted.clone()]).serialize()).unwrap();
        assert_eq!(file.witnesses.len(), 2);
        assert!(file.verify(&inst.a, &inst.b));
    }
}

#[test]
fn modes_agree_on_fixtures_and_random_pairs() {
    let ctx = field_make(3, 1, 0).unwrap();
    let (h1, h2) = groups::heisenberg_pairs();
    let pairs = [
        (groups::equal_factor_pair(&ctx, true), groups::equal_factor_pair(&ctx, false)),
        (h1, h2),
        (generate(&ctx, 10, Flavor::Sloped, 1).unwrap().a, generate(&ctx, 10, Flavor::Sloped, 2).unwrap().a),
    ];
    for (a, b) in &pairs {
        let answers: Vec<bool> = [Mode::Auto, Mode::Pfaffian, Mode::Adjten]
            .into_iter()
            .map(|m| groups::pseudo_isometry_test(a, b, m).unwrap().map_or(false, |w| w.verify(a, b)))
            .collect();
        assert!(answers.iter().all(|&x| x == answers[0]), "{answers:?}");
    }
}
