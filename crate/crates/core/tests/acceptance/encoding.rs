use radgen_core::demographics::{DemographicEncoder, DemographicRecord, Gender};
use radgen_core::Error;

use crate::common::fail;
use crate::Outcome;

fn rec(gender: Gender, age: u32, ethnicity: &str) -> DemographicRecord {
    DemographicRecord {
        gender,
        age,
        ethnicity: ethnicity.into(),
    }
}

pub fn boundaries_hold() -> Outcome {
    let cats: Vec<String> = (0..5).map(|i| format!("cat{i}")).collect();
    let enc = DemographicEncoder::with_default_bounds(cats.clone()).map_err(fail("encoder"))?;
    let check = |r: DemographicRecord, want: &[f32]| -> Result<(), String> {
        let got = enc.encode(&r).map_err(fail("encode"))?;
        if got != want {
            return Err(format!("{r:?} encoded as {got:?}, expected {want:?}"));
        }
        Ok(())
    };
    check(rec(Gender::Female, 19, "cat0"), &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0])?;
    check(rec(Gender::Male, 91, "cat4"), &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0])?;
    check(rec(Gender::Male, 55, "cat2"), &[1.0, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0])?;
    check(rec(Gender::Female, 3, "cat1"), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])?;
    check(rec(Gender::Female, 120, "cat3"), &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0])?;
    let mut previous = -1.0f32;
    for age in 0..=130 {
        for (c, cat) in cats.iter().enumerate() {
            for gender in [Gender::Female, Gender::Male] {
                let v = enc.encode(&rec(gender, age, cat)).map_err(fail("encode"))?;
                let hot: Vec<usize> = (2..7).filter(|&i| v[i] != 0.0).collect();
                if hot != [2 + c] || v[2 + c] != 1.0 {
                    return Err(format!("one-hot for {cat} is {:?}", &v[2..]));
                }
                if v[0] != if gender == Gender::Male { 1.0 } else { 0.0 } {
                    return Err(format!("gender slot {}", v[0]));
                }
            }
        }
        let a = enc.normalize_age(age);
        if !(0.0..=1.0).contains(&a) || a < previous {
            return Err(format!("age {age} normalizes to {a} after {previous}"));
        }
        previous = a;
    }
    match enc.encode(&rec(Gender::Male, 40, "unlisted")) {
        Err(Error::Data(_)) => {}
        other => return Err(format!("unknown ethnicity in strict mode gave {other:?}")),
    }
    let lenient = enc.clone().lenient(true);
    let v = lenient
        .encode(&rec(Gender::Male, 40, "unlisted"))
        .map_err(fail("lenient"))?;
    if v[2..].iter().any(|&x| x != 0.0) {
        return Err(format!("lenient unknown ethnicity gave {v:?}"));
    }
    Ok("19 -> 0.0, 91 -> 1.0, female 0, male 1, one-hot valid for ages 0..=130".into())
}
