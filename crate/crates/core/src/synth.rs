//! Deterministic synthetic datasets shaped like an ICU database and an
//! OMOP-style observational database. Used for fixtures, tests and
//! benchmarks.

use std::fs;
use std::io;
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::store::{QueryStore, StoredQuery};
use crate::value::{MS_PER_DAY, MS_PER_HOUR, MS_PER_MINUTE};

/// Item id, label, linked table, unit, kind of value, relative frequency.
type Item = (i64, &'static str, &'static str, &'static str, ItemValue, u32);

#[derive(Clone, Copy)]
enum ItemValue {
    Normal(f64, f64),
    Choice(&'static [&'static str]),
    None,
}

const RHYTHMS: &[&str] = &["Sinus Rhythm", "Sinus Tachycardia", "Atrial Fibrillation", "Atrial Flutter", "Sinus Bradycardia"];
const DEVICES: &[&str] = &["None", "Nasal cannula", "Face tent", "Non-rebreather", "Endotracheal tube", "High flow neb"];

/// Chart and procedure items. Frequency 0 means the concept is catalogued
/// but never charted.
const D_ITEMS: &[Item] = &[
    (220045, "Heart Rate", "chartevents", "bpm", ItemValue::Normal(85.0, 15.0), 12),
    (220048, "Heart Rhythm", "chartevents", "", ItemValue::Choice(RHYTHMS), 4),
    (220210, "Respiratory Rate", "chartevents", "insp/min", ItemValue::Normal(18.0, 4.0), 8),
    (224690, "Resp Rate", "chartevents", "insp/min", ItemValue::Normal(19.0, 5.0), 3),
    (224689, "Respiratory Rate (spontaneous)", "chartevents", "insp/min", ItemValue::Normal(16.0, 4.0), 1),
    (224422, "Respiratory Rate (Total)", "chartevents", "insp/min", ItemValue::Normal(20.0, 5.0), 1),
    (224688, "Respiratory Rate (Set)", "chartevents", "insp/min", ItemValue::Normal(14.0, 2.0), 0),
    (220181, "Non Invasive Blood Pressure mean", "chartevents", "mmHg", ItemValue::Normal(78.0, 12.0), 6),
    (220179, "Non Invasive Blood Pressure systolic", "chartevents", "mmHg", ItemValue::Normal(120.0, 18.0), 4),
    (220180, "Non Invasive Blood Pressure diastolic", "chartevents", "mmHg", ItemValue::Normal(65.0, 10.0), 4),
    (220052, "Arterial Blood Pressure mean", "chartevents", "mmHg", ItemValue::Normal(80.0, 10.0), 2),
    (223761, "Temperature Fahrenheit", "chartevents", "°F", ItemValue::Normal(98.6, 1.2), 4),
    (223762, "Temperature Celsius", "chartevents", "°C", ItemValue::Normal(37.0, 0.7), 1),
    (220277, "O2 saturation pulseoxymetry", "chartevents", "%", ItemValue::Normal(96.0, 2.5), 6),
    (226732, "O2 Delivery Device(s)", "chartevents", "", ItemValue::Choice(DEVICES), 2),
    (225668, "Lactic Acid", "chartevents", "mmol/L", ItemValue::Normal(1.8, 0.9), 1),
    (220621, "Glucose (serum)", "chartevents", "mg/dL", ItemValue::Normal(130.0, 35.0), 1),
    (226512, "Admission Weight (Kg)", "chartevents", "kg", ItemValue::Normal(80.0, 18.0), 1),
    (226730, "Height (cm)", "chartevents", "cm", ItemValue::Normal(170.0, 10.0), 1),
    (221906, "Norepinephrine Rate", "chartevents", "mcg/kg/min", ItemValue::Normal(0.1, 0.05), 1),
    (220739, "GCS - Eye Opening", "chartevents", "", ItemValue::Normal(3.0, 0.8), 1),
    (223900, "GCS - Verbal Response", "chartevents", "", ItemValue::Normal(4.0, 1.0), 1),
    (223901, "GCS - Motor Response", "chartevents", "", ItemValue::Normal(5.0, 1.0), 1),
    (220224, "Arterial O2 pressure", "chartevents", "mmHg", ItemValue::Normal(95.0, 20.0), 0),
    (220235, "Arterial CO2 Pressure", "chartevents", "mmHg", ItemValue::Normal(40.0, 5.0), 0),
    (223835, "Inspired O2 Fraction", "chartevents", "%", ItemValue::Normal(40.0, 10.0), 0),
    (220339, "PEEP set", "chartevents", "cmH2O", ItemValue::Normal(5.0, 1.0), 0),
    (224685, "Tidal Volume (observed)", "chartevents", "mL", ItemValue::Normal(450.0, 60.0), 0),
    (224639, "Daily Weight", "chartevents", "kg", ItemValue::Normal(80.0, 18.0), 0),
    (227457, "Platelet Count (chart)", "chartevents", "K/uL", ItemValue::Normal(220.0, 70.0), 0),
    (220546, "WBC", "chartevents", "K/uL", ItemValue::Normal(9.0, 3.0), 0),
    (220615, "Creatinine (serum)", "chartevents", "mg/dL", ItemValue::Normal(1.1, 0.4), 0),
    (225624, "BUN", "chartevents", "mg/dL", ItemValue::Normal(20.0, 8.0), 0),
    (220645, "Sodium (serum)", "chartevents", "mEq/L", ItemValue::Normal(139.0, 3.0), 0),
    (227442, "Potassium (serum)", "chartevents", "mEq/L", ItemValue::Normal(4.1, 0.5), 0),
    (220228, "Hemoglobin", "chartevents", "g/dl", ItemValue::Normal(10.5, 1.8), 0),
    (226253, "SpO2 Desat Limit", "chartevents", "%", ItemValue::Normal(88.0, 2.0), 0),
    (224641, "Alarms On", "chartevents", "", ItemValue::None, 0),
    (228096, "Richmond-RAS Scale", "chartevents", "", ItemValue::Normal(-1.0, 1.0), 0),
    (223791, "Pain Level", "chartevents", "", ItemValue::Normal(2.0, 2.0), 0),
    (225792, "Invasive Ventilation", "procedureevents", "hour", ItemValue::None, 3),
    (225446, "Cardioversion/Defibrillation", "procedureevents", "None", ItemValue::None, 1),
    (225799, "IV Infusion", "procedureevents", "mL/hr", ItemValue::Normal(75.0, 25.0), 2),
    (225794, "Non-invasive Ventilation", "procedureevents", "hour", ItemValue::None, 1),
    (221907, "Norepinephrine", "inputevents", "mcg/kg/min", ItemValue::None, 0),
    (225158, "NaCl 0.9%", "inputevents", "mL", ItemValue::None, 0),
];

const D_LABITEMS: &[Item] = &[
    (51265, "Platelet Count", "Blood", "K/uL", ItemValue::Normal(220.0, 90.0), 4),
    (50813, "Lactate", "Blood", "mmol/L", ItemValue::Normal(1.9, 1.0), 3),
    (50931, "Glucose", "Blood", "mg/dL", ItemValue::Normal(125.0, 35.0), 4),
    (51222, "Hemoglobin", "Blood", "g/dL", ItemValue::Normal(10.8, 2.0), 4),
    (50912, "Creatinine", "Blood", "mg/dL", ItemValue::Normal(1.2, 0.6), 4),
    (50983, "Sodium", "Blood", "mEq/L", ItemValue::Normal(139.0, 4.0), 3),
    (50971, "Potassium", "Blood", "mEq/L", ItemValue::Normal(4.1, 0.6), 3),
    (51301, "White Blood Cells", "Blood", "K/uL", ItemValue::Normal(10.0, 4.0), 3),
    (50882, "Bicarbonate", "Blood", "mEq/L", ItemValue::Normal(24.0, 4.0), 2),
    (51006, "Urea Nitrogen", "Blood", "mg/dL", ItemValue::Normal(22.0, 10.0), 2),
    (50862, "Albumin", "Blood", "g/dL", ItemValue::Normal(3.2, 0.6), 0),
    (51237, "INR(PT)", "Blood", "", ItemValue::Normal(1.3, 0.3), 0),
];

const DIAGNOSES: &[(&str, u8)] = &[
    ("78552", 9),
    ("99591", 9),
    ("99592", 9),
    ("4019", 9),
    ("4011", 9),
    ("I10", 10),
    ("I110", 10),
    ("I130", 10),
    ("41401", 9),
    ("5849", 9),
    ("N179", 10),
    ("25000", 9),
    ("E119", 10),
    ("42731", 9),
    ("A419", 10),
    ("R6521", 10),
];

const CARE_UNITS: &[&str] = &["Medical Intensive Care Unit (MICU)", "Surgical Intensive Care Unit (SICU)", "Cardiac Vascular Intensive Care Unit (CVICU)", "Trauma SICU (TSICU)"];

/// Knobs for the ICU-style generator.
#[derive(Debug, Clone, Copy)]
pub struct MimicConfig {
    pub stays: usize,
    pub seed: u64,
    /// Mean number of chart events per stay.
    pub chart_events_per_stay: usize,
    /// Skip the lab, procedure and diagnosis files (benchmarks).
    pub chart_only: bool,
}

impl Default for MimicConfig {
    fn default() -> Self {
        MimicConfig { stays: 200, seed: 7, chart_events_per_stay: 60, chart_only: false }
    }
}

fn ts(ms: i64) -> String {
    DateTime::<Utc>::from_timestamp_millis(ms)
        .map(|d| d.format("%Y-%m-%d %H:%M:%S").to_string())
        .unwrap_or_default()
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    // Box–Muller; one draw per call keeps the stream simple.
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    mean + sd * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn round_to(x: f64, digits: i32) -> f64 {
    let p = 10f64.powi(digits);
    (x * p).round() / p
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

fn weighted<'a>(rng: &mut ChaCha8Rng, items: &'a [&'a Item]) -> &'a Item {
    let total: u32 = items.iter().map(|i| i.5).sum();
    let mut r = rng.random_range(0..total);
    for it in items {
        if r < it.5 {
            return it;
        }
        r -= it.5;
    }
    items[items.len() - 1]
}

fn writer(path: &Path) -> io::Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_writer(fs::File::create(path)?))
}

fn value_cells(rng: &mut ChaCha8Rng, v: ItemValue, digits: i32) -> (String, String) {
    match v {
        ItemValue::Normal(m, s) => {
            let x = round_to(normal(rng, m, s), digits);
            (crate::value::format_number(x), crate::value::format_number(x))
        }
        ItemValue::Choice(c) => (pick(rng, c).to_string(), String::new()),
        ItemValue::None => (String::new(), String::new()),
    }
}

/// Writes an ICU-style dataset (spec.json, source files and a small variable
/// store) under `dir`. Output is a pure function of the configuration.
pub fn generate_mimic(dir: &Path, cfg: &MimicConfig) -> io::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = 4_410_000_000_000i64; // 2109-09-29
    let n_patients = (cfg.stays * 4).div_ceil(5).max(1);

    let mut patients = writer(&dir.join("hosp/patients.csv"))?;
    patients.write_record(["subject_id", "gender", "anchor_age", "anchor_year", "dod"])?;
    for p in 0..n_patients {
        let dod = if rng.random_bool(0.1) { ts(base + rng.random_range(0..60 * 365) * MS_PER_DAY)[..10].to_string() } else { String::new() };
        patients.write_record([
            (10_000_000 + p).to_string(),
            if rng.random_bool(0.45) { "F".into() } else { "M".into() },
            rng.random_range(18..92).to_string(),
            rng.random_range(2110..2180).to_string(),
            dod,
        ])?;
    }
    patients.flush()?;

    struct Stay {
        subject: usize,
        hadm: i64,
        stay: i64,
        intime: i64,
        outtime: i64,
    }
    let mut stays = Vec::with_capacity(cfg.stays);
    let mut icu = writer(&dir.join("icu/icustays.csv"))?;
    icu.write_record(["subject_id", "hadm_id", "stay_id", "first_careunit", "intime", "outtime", "los"])?;
    for s in 0..cfg.stays {
        let subject = if s < n_patients { s } else { rng.random_range(0..n_patients) };
        let intime = base + rng.random_range(0..60 * 365 * 24) * MS_PER_HOUR + rng.random_range(0..60) * MS_PER_MINUTE;
        let los = rng.random_range(12 * 60..8 * 24 * 60) * MS_PER_MINUTE;
        let st = Stay { subject, hadm: 20_000_000 + s as i64, stay: 30_000_000 + s as i64, intime, outtime: intime + los };
        // A few stays lack a recorded discharge time.
        let out = if rng.random_bool(0.03) { String::new() } else { ts(st.outtime) };
        icu.write_record([
            (10_000_000 + subject).to_string(),
            st.hadm.to_string(),
            st.stay.to_string(),
            pick(&mut rng, CARE_UNITS).to_string(),
            ts(st.intime),
            out,
            format!("{:.4}", los as f64 / MS_PER_DAY as f64),
        ])?;
        stays.push(st);
    }
    icu.flush()?;

    let mut d_items = writer(&dir.join("icu/d_items.csv"))?;
    d_items.write_record(["itemid", "label", "linksto", "unitname"])?;
    for it in D_ITEMS {
        d_items.write_record([it.0.to_string(), it.1.to_string(), it.2.to_string(), it.3.to_string()])?;
    }
    d_items.flush()?;

    let chart_items: Vec<&Item> = D_ITEMS.iter().filter(|i| i.2 == "chartevents" && i.5 > 0).collect();
    let mut chart = writer(&dir.join("icu/chartevents.csv"))?;
    chart.write_record(["subject_id", "hadm_id", "stay_id", "charttime", "itemid", "value", "valuenum", "valueuom"])?;
    for (k, st) in stays.iter().enumerate() {
        let n = rng.random_range(cfg.chart_events_per_stay / 2..=cfg.chart_events_per_stay * 3 / 2);
        for _ in 0..n {
            let it = weighted(&mut rng, &chart_items);
            // Mostly inside the stay, occasionally up to six hours before it.
            let lead = 6 * MS_PER_HOUR;
            let t = st.intime - lead + rng.random_range(0..(st.outtime - st.intime + lead) / MS_PER_MINUTE) * MS_PER_MINUTE;
            let (value, valuenum) = value_cells(&mut rng, it.4, 1);
            chart.write_record([
                (10_000_000 + st.subject).to_string(),
                st.hadm.to_string(),
                st.stay.to_string(),
                ts(t),
                it.0.to_string(),
                value,
                valuenum,
                it.3.to_string(),
            ])?;
        }
        if k == 0 && !cfg.chart_only {
            // One malformed timestamp to exercise the ingestion report.
            chart.write_record([(10_000_000 + st.subject).to_string(), st.hadm.to_string(), st.stay.to_string(), "not a time".into(), "220045".into(), "80".into(), "80".into(), "bpm".into()])?;
        }
    }
    chart.flush()?;

    let spec = mimic_spec(cfg.chart_only);
    fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&spec).unwrap() + "\n")?;
    fs::write(dir.join("store.json"), mimic_store().to_json())?;
    if cfg.chart_only {
        return Ok(());
    }

    let mut d_lab = writer(&dir.join("hosp/d_labitems.csv"))?;
    d_lab.write_record(["itemid", "label", "fluid", "category"])?;
    for it in D_LABITEMS {
        d_lab.write_record([it.0.to_string(), it.1.to_string(), it.2.to_string(), "Chemistry".into()])?;
    }
    d_lab.flush()?;

    let lab_items: Vec<&Item> = D_LABITEMS.iter().filter(|i| i.5 > 0).collect();
    let mut lab = writer(&dir.join("hosp/labevents.csv"))?;
    lab.write_record(["labevent_id", "subject_id", "hadm_id", "itemid", "charttime", "value", "valuenum", "valueuom", "flag"])?;
    let mut lab_id = 1;
    for st in &stays {
        let n = rng.random_range(2..=cfg.chart_events_per_stay / 3 + 2);
        for _ in 0..n {
            let it = weighted(&mut rng, &lab_items);
            let t = st.intime - 12 * MS_PER_HOUR + rng.random_range(0..(st.outtime - st.intime + 12 * MS_PER_HOUR) / MS_PER_MINUTE) * MS_PER_MINUTE;
            let (mut value, mut valuenum) = value_cells(&mut rng, it.4, 2);
            if rng.random_bool(0.03) {
                value = "___".into();
                valuenum = String::new();
            }
            let flag = if rng.random_bool(0.2) { "abnormal" } else { "" };
            lab.write_record([lab_id.to_string(), (10_000_000 + st.subject).to_string(), st.hadm.to_string(), it.0.to_string(), ts(t), value, valuenum, it.3.to_string(), flag.to_string()])?;
            lab_id += 1;
        }
    }
    // Outpatient labs whose admission has no ICU stay are dropped by the join.
    for k in 0..3 {
        lab.write_record([lab_id.to_string(), "10000000".into(), (29_000_000 + k).to_string(), "50931".into(), ts(base), "101".into(), "101".into(), "mg/dL".into(), String::new()])?;
        lab_id += 1;
    }
    lab.flush()?;

    let proc_items: Vec<&Item> = D_ITEMS.iter().filter(|i| i.2 == "procedureevents" && i.5 > 0).collect();
    let mut proc = writer(&dir.join("icu/procedureevents.csv"))?;
    proc.write_record(["subject_id", "hadm_id", "stay_id", "starttime", "endtime", "itemid", "value", "valueuom"])?;
    for (k, st) in stays.iter().enumerate() {
        let n = rng.random_range(0..=4);
        for _ in 0..n {
            let it = weighted(&mut rng, &proc_items);
            let start = st.intime + rng.random_range(0..(st.outtime - st.intime) / MS_PER_MINUTE) * MS_PER_MINUTE;
            let dur = match it.1 {
                "Cardioversion/Defibrillation" => rng.random_range(0..3) * MS_PER_MINUTE,
                "IV Infusion" => rng.random_range(30..24 * 60) * MS_PER_MINUTE,
                _ => rng.random_range(60..72 * 60) * MS_PER_MINUTE,
            };
            let end = (start + dur).min(st.outtime + 2 * MS_PER_HOUR);
            let value = match it.4 {
                ItemValue::Normal(m, s) => crate::value::format_number(round_to(normal(&mut rng, m, s).abs(), 1)),
                _ => crate::value::format_number(round_to((end - start) as f64 / MS_PER_HOUR as f64, 3)),
            };
            proc.write_record([(10_000_000 + st.subject).to_string(), st.hadm.to_string(), st.stay.to_string(), ts(start), ts(end), it.0.to_string(), value, it.3.to_string()])?;
        }
        if k == 1 {
            // End before start: dropped at ingest.
            proc.write_record([(10_000_000 + st.subject).to_string(), st.hadm.to_string(), st.stay.to_string(), ts(st.intime + MS_PER_HOUR), ts(st.intime), "225792".into(), "1".into(), "hour".into()])?;
        }
    }
    proc.flush()?;

    let mut dx = writer(&dir.join("hosp/diagnoses_icd.csv"))?;
    dx.write_record(["subject_id", "hadm_id", "stay_id", "charttime", "seq_num", "icd_code", "icd_version"])?;
    for st in &stays {
        let n = rng.random_range(1..=4);
        for seq in 1..=n {
            let (code, version) = *pick(&mut rng, DIAGNOSES);
            dx.write_record([(10_000_000 + st.subject).to_string(), st.hadm.to_string(), st.stay.to_string(), ts(st.intime), seq.to_string(), code.to_string(), version.to_string()])?;
        }
    }
    dx.flush()?;
    Ok(())
}

fn mimic_spec(chart_only: bool) -> serde_json::Value {
    let chartevents = json!({
        "source": "icu.chartevents",
        "type": "event",
        "id_field": "stay_id",
        "time_field": "charttime",
        "concept_id_field": "itemid",
        "default_value_field": "value",
        "scope": "chartevents",
        "comment": "If a chart event sometimes has string values returned, use value field 'valuenum' to specify that only numeric results should be returned."
    });
    let icustays = json!({
        "source": "icu.icustays",
        "id_field": "stay_id",
        "scope": "ICU Stay",
        "attributes": {
            "Admit Time": {"value_field": "intime"},
            "Discharge Time": {"value_field": "outtime"},
            "First Care Unit": {"value_field": "first_careunit"}
        }
    });
    if chart_only {
        return json!({
            "tables": [icustays, chartevents],
            "vocabularies": [{
                "source": "icu.d_items",
                "concept_id_field": "itemid",
                "concept_name_field": "label",
                "scope_field": "linksto",
                "scopes": ["chartevents"]
            }],
            "joins": {}
        });
    }
    json!({
        "tables": [
            {
                "source": "hosp.patients",
                "id_field": "stay_id",
                "scope": "Patient",
                "attributes": {
                    "Gender": {"value_field": "gender"},
                    "Anchor Age": {"value_field": "anchor_age"},
                    "Anchor Year": {"value_field": "anchor_year", "value_transform": "year_to_timestamp"},
                    "Date of Death": {"value_field": "dod"}
                },
                "comment": "All dates have been shifted to protect patient confidentiality. Dates are internally consistent for the same patient. The patient's age at Anchor Year is Anchor Age."
            },
            icustays,
            chartevents,
            {
                "source": "hosp.labevents",
                "type": "event",
                "id_field": "stay_id",
                "time_field": "charttime",
                "concept_id_field": "itemid",
                "default_value_field": "valuenum",
                "scope": "Lab",
                "comment": "If a lab test has string values, use value field 'value' to return the strings. By default only numeric values are returned."
            },
            {
                "source": "icu.procedureevents",
                "type": "interval",
                "id_field": "stay_id",
                "start_time_field": "starttime",
                "end_time_field": "endtime",
                "concept_id_field": "itemid",
                "default_value_field": "value",
                "scope": "procedureevents"
            },
            {
                "source": "hosp.diagnoses_icd",
                "type": "event",
                "id_field": "stay_id",
                "time_field": "charttime",
                "default_value_field": "icd_code",
                "scope": "Diagnosis",
                "comment": "Event values are ICD-9 or ICD-10 codes without dots; icd_version tells which."
            }
        ],
        "vocabularies": [
            {
                "source": "hosp.d_labitems",
                "concept_id_field": "itemid",
                "concept_name_field": "label",
                "scope": "Lab"
            },
            {
                "source": "icu.d_items",
                "concept_id_field": "itemid",
                "concept_name_field": "label",
                "scope_field": "linksto",
                "scopes": ["chartevents", "inputevents", "outputevents", "procedureevents"]
            }
        ],
        "joins": {
            "hosp.patients": {"dest_table": "icu.icustays", "join_key": "subject_id"},
            "hosp.labevents": {"dest_table": "icu.icustays", "join_key": "hadm_id"}
        }
    })
}

fn mimic_store() -> QueryStore {
    store_of(&[
        ("HeartRate", "{Heart Rate; scope = chartevents}", None),
        ("LacticAcid", "{Lactic Acid; scope = chartevents}", Some("Charted lactic acid")),
        ("Norepinephrine", "{Norepinephrine Rate; scope = chartevents}", Some("Charted norepinephrine rate")),
    ])
}

fn store_of(entries: &[(&str, &str, Option<&str>)]) -> QueryStore {
    let mut store = QueryStore::default();
    for (name, query, description) in entries {
        store.queries.push(StoredQuery {
            name: name.to_string(),
            query: query.to_string(),
            description: description.map(str::to_string),
            updated_at: None,
        });
    }
    store
}

const OMOP_CONCEPTS: &[(i64, &str, &str, &str)] = &[
    (1, "semaglutide 0.25 MG/DOSE Injectable Solution", "Drug", "RxNorm"),
    (2, "semaglutide 3 MG Oral Tablet", "Drug", "RxNorm"),
    (3, "metformin hydrochloride 500 MG Oral Tablet", "Drug", "RxNorm"),
    (4, "insulin glargine 100 UNT/ML Injectable Solution", "Drug", "RxNorm"),
    (5, "lisinopril 10 MG Oral Tablet", "Drug", "RxNorm"),
    (10, "Acute kidney injury", "Condition", "SNOMED"),
    (11, "Acute kidney injury stage 2", "Condition", "SNOMED"),
    (12, "Type 2 diabetes mellitus", "Condition", "SNOMED"),
    (13, "Essential hypertension", "Condition", "SNOMED"),
    (14, "Sepsis", "Condition", "SNOMED"),
    (20, "Body temperature", "Measurement", "LOINC"),
    (21, "Respiratory rate", "Measurement", "LOINC"),
    (22, "Heart rate", "Measurement", "LOINC"),
    (23, "Body weight", "Measurement", "LOINC"),
    (24, "Lactate [Moles/volume] in Blood", "Measurement", "LOINC"),
    (25, "Bacteria identified in Blood by Culture", "Measurement", "LOINC"),
];

/// Writes an OMOP-style dataset with persons as trajectories.
pub fn generate_omop(dir: &Path, persons: usize, seed: u64) -> io::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = 1_577_836_800_000i64; // 2020-01-01

    let mut concept = writer(&dir.join("concept.csv"))?;
    concept.write_record(["concept_id", "concept_name", "domain_id", "vocabulary_id"])?;
    for c in OMOP_CONCEPTS {
        concept.write_record([c.0.to_string(), c.1.to_string(), c.2.to_string(), c.3.to_string()])?;
    }
    concept.flush()?;

    let mut person = writer(&dir.join("person.csv"))?;
    person.write_record(["person_id", "gender", "year_of_birth", "race"])?;
    let mut visit = writer(&dir.join("visit_occurrence.csv"))?;
    visit.write_record(["visit_occurrence_id", "person_id", "visit_start_datetime", "visit_end_datetime", "visit_type"])?;
    let mut drug = writer(&dir.join("drug_exposure.csv"))?;
    drug.write_record(["person_id", "drug_concept_id", "drug_exposure_start_datetime", "drug_exposure_end_datetime", "quantity"])?;
    let mut cond = writer(&dir.join("condition_occurrence.csv"))?;
    cond.write_record(["person_id", "condition_concept_id", "condition_start_datetime", "condition_status"])?;
    let mut meas = writer(&dir.join("measurement.csv"))?;
    meas.write_record(["person_id", "measurement_concept_id", "measurement_datetime", "value_as_number", "numeric_value", "unit"])?;

    let mut visit_id = 1;
    for p in 0..persons {
        let pid = (p + 1) as i64;
        person.write_record([
            pid.to_string(),
            if rng.random_bool(0.5) { "Female".into() } else { "Male".into() },
            rng.random_range(1930..2005).to_string(),
            pick(&mut rng, &["White", "Black", "Asian", "Other"]).to_string(),
        ])?;
        let mut t = base + rng.random_range(0..365) * MS_PER_DAY;
        for _ in 0..rng.random_range(1..=4) {
            let len = rng.random_range(0..6) * MS_PER_DAY + rng.random_range(1..24) * MS_PER_HOUR;
            visit.write_record([visit_id.to_string(), pid.to_string(), ts(t), ts(t + len), pick(&mut rng, &["Inpatient", "Outpatient", "Emergency"]).to_string()])?;
            visit_id += 1;
            for _ in 0..rng.random_range(2..10) {
                let c = pick(&mut rng, &OMOP_CONCEPTS[15..]).0;
                let c = if rng.random_bool(0.7) { 19 + rng.random_range(1..=5) } else { c };
                let at = t + rng.random_range(0..=len / MS_PER_MINUTE) * MS_PER_MINUTE;
                let v = match c {
                    20 => round_to(normal(&mut rng, 37.0, 0.8), 1),
                    21 => round_to(normal(&mut rng, 17.0, 4.0), 0),
                    22 => round_to(normal(&mut rng, 80.0, 12.0), 0),
                    23 => round_to(normal(&mut rng, 78.0, 15.0), 1),
                    24 => round_to(normal(&mut rng, 1.7, 0.8).abs(), 2),
                    _ => 0.0,
                };
                let num = crate::value::format_number(v);
                meas.write_record([pid.to_string(), c.to_string(), ts(at), num.clone(), num, String::new()])?;
            }
            t += len + rng.random_range(5..90) * MS_PER_DAY;
        }
        let horizon = t;
        for _ in 0..rng.random_range(0..4) {
            let c = rng.random_range(1..=5);
            let start = base + rng.random_range(0..(horizon - base) / MS_PER_DAY) * MS_PER_DAY;
            let end = start + rng.random_range(7..120) * MS_PER_DAY;
            drug.write_record([pid.to_string(), c.to_string(), ts(start), ts(end), rng.random_range(1..90).to_string()])?;
        }
        for _ in 0..rng.random_range(0..3) {
            let c = rng.random_range(10..=14);
            let at = base + rng.random_range(0..(horizon - base) / MS_PER_HOUR) * MS_PER_HOUR;
            cond.write_record([pid.to_string(), c.to_string(), ts(at), "confirmed".to_string()])?;
        }
    }
    for w in [&mut person, &mut visit, &mut drug, &mut cond, &mut meas] {
        w.flush()?;
    }

    let spec = json!({
        "tables": [
            {
                "source": "person",
                "id_field": "person_id",
                "scope": "Person",
                "attributes": {
                    "Gender": {"value_field": "gender"},
                    "Year of Birth": {"value_field": "year_of_birth", "value_transform": "year_to_timestamp"},
                    "Race": {"value_field": "race", "value_transform": "to_lowercase"}
                }
            },
            {
                "source": "visit_occurrence",
                "type": "interval",
                "id_field": "person_id",
                "start_time_field": "visit_start_datetime",
                "end_time_field": "visit_end_datetime",
                "default_value_field": "visit_type",
                "scope": "Visit"
            },
            {
                "source": "drug_exposure",
                "type": "interval",
                "id_field": "person_id",
                "start_time_field": "drug_exposure_start_datetime",
                "end_time_field": "drug_exposure_end_datetime",
                "concept_id_field": "drug_concept_id",
                "default_value_field": "quantity",
                "scope": "Drug"
            },
            {
                "source": "condition_occurrence",
                "type": "event",
                "id_field": "person_id",
                "time_field": "condition_start_datetime",
                "concept_id_field": "condition_concept_id",
                "default_value_field": "condition_status",
                "scope": "Condition"
            },
            {
                "source": "measurement",
                "type": "event",
                "id_field": "person_id",
                "time_field": "measurement_datetime",
                "concept_id_field": "measurement_concept_id",
                "default_value_field": "value_as_number",
                "scope": "Measurement"
            }
        ],
        "vocabularies": [{
            "source": "concept",
            "concept_id_field": "concept_id",
            "concept_name_field": "concept_name",
            "scope_field": "domain_id",
            "scopes": ["Drug", "Condition", "Measurement"]
        }],
        "joins": {}
    });
    fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&spec).unwrap() + "\n")?;
    let store = store_of(&[
        ("semaglutide_rx", "{name contains 'semaglutide'; scope = Drug}", Some("Semaglutide prescriptions")),
        ("aki_outcome", "{name contains /acute kidney/i; scope = Condition}", Some("Acute kidney injury diagnoses")),
        ("Culture", "{name contains /culture/i; scope = Measurement}", None),
        ("Weight", "last {Body weight; scope = Measurement} from #mintime to #maxtime", None),
    ]);
    fs::write(dir.join("store.json"), store.to_json())?;
    Ok(())
}
