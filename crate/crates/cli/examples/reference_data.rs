//! Regenerates the reference datasets shipped under `data/`.
//!
//! * `data/lucas/lucas0.csv`: 2000 draws from the LUCAS0 Bayesian network
//!   (published conditional probability tables), plus its schema and the
//!   ground-truth DAG.
//! * `data/osmi/osmi.csv`: 1259-row surrogate of the 2014 mental-health-in-tech
//!   survey. Columns and level sets follow the survey's data dictionary; the
//!   marginals follow the public survey. The generating process is a
//!   hand-written DAG, so it is a stand-in, not the survey itself.
//!
//! Usage: `cargo run -p causal-twin-cli --example reference_data [out_dir]`

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use causal_twin::graph::MixedGraph;
use causal_twin::stats::rng_for;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const LUCAS_SEED: u64 = 20_080_601;
const OSMI_SEED: u64 = 20_140_827;

fn main() -> anyhow::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"));
    write_lucas(&out.join("lucas"))?;
    write_osmi(&out.join("osmi"))?;
    Ok(())
}

fn bern(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

fn pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    weights.len() - 1
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------- LUCAS ----

const LUCAS_COLUMNS: [&str; 12] = [
    "Smoking",
    "Yellow_Fingers",
    "Anxiety",
    "Peer_Pressure",
    "Genetics",
    "Attention_Disorder",
    "Born_an_Even_Day",
    "Car_Accident",
    "Fatigue",
    "Allergy",
    "Coughing",
    "Lung_Cancer",
];

const LUCAS_EDGES: [(&str, &str); 12] = [
    ("Anxiety", "Smoking"),
    ("Peer_Pressure", "Smoking"),
    ("Smoking", "Yellow_Fingers"),
    ("Smoking", "Lung_Cancer"),
    ("Genetics", "Lung_Cancer"),
    ("Genetics", "Attention_Disorder"),
    ("Allergy", "Coughing"),
    ("Lung_Cancer", "Coughing"),
    ("Lung_Cancer", "Fatigue"),
    ("Coughing", "Fatigue"),
    ("Attention_Disorder", "Car_Accident"),
    ("Fatigue", "Car_Accident"),
];

fn lucas_row(rng: &mut ChaCha8Rng) -> [bool; 12] {
    let anxiety = bern(rng, 0.64277);
    let peer = bern(rng, 0.32997);
    let smoking = bern(
        rng,
        match (peer, anxiety) {
            (false, false) => 0.43118,
            (true, false) => 0.74591,
            (false, true) => 0.8686,
            (true, true) => 0.91576,
        },
    );
    let yellow = bern(rng, if smoking { 0.95372 } else { 0.23119 });
    let genetics = bern(rng, 0.15953);
    let cancer = bern(
        rng,
        match (genetics, smoking) {
            (false, false) => 0.23146,
            (true, false) => 0.86996,
            (false, true) => 0.83934,
            (true, true) => 0.99351,
        },
    );
    let attention = bern(rng, if genetics { 0.68706 } else { 0.28956 });
    let even_day = bern(rng, 0.5);
    let allergy = bern(rng, 0.32841);
    let coughing = bern(
        rng,
        match (allergy, cancer) {
            (false, false) => 0.1347,
            (true, false) => 0.64592,
            (false, true) => 0.7664,
            (true, true) => 0.99947,
        },
    );
    let fatigue = bern(
        rng,
        match (cancer, coughing) {
            (false, false) => 0.35212,
            (true, false) => 0.56514,
            (false, true) => 0.80016,
            (true, true) => 0.89589,
        },
    );
    let accident = bern(
        rng,
        match (attention, fatigue) {
            (false, false) => 0.2274,
            (true, false) => 0.779,
            (false, true) => 0.78861,
            (true, true) => 0.97169,
        },
    );
    [
        smoking, yellow, anxiety, peer, genetics, attention, even_day, accident, fatigue, allergy,
        coughing, cancer,
    ]
}

fn write_lucas(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    let mut rng = rng_for(LUCAS_SEED, 0);
    let rows = (0..2000)
        .map(|_| {
            lucas_row(&mut rng)
                .iter()
                .map(|&b| if b { "1" } else { "0" }.to_string())
                .collect()
        })
        .collect();
    Table {
        header: LUCAS_COLUMNS.to_vec(),
        rows,
    }
    .write(&dir.join("lucas0.csv"))?;

    let mut schema = String::new();
    for c in LUCAS_COLUMNS {
        let _ = writeln!(
            schema,
            "[[columns]]\nname = \"{c}\"\nkind = \"categorical\"\nlevels = [\"0\", \"1\"]\n"
        );
    }
    fs::write(dir.join("schema.toml"), schema)?;
    MixedGraph::from_edges(&LUCAS_COLUMNS, &LUCAS_EDGES)?.save(&dir.join("truth.toml"))?;
    Ok(())
}

// ----------------------------------------------------------------- OSMI ----

struct Col {
    name: &'static str,
    levels: &'static [&'static str],
}

const NY: &[&str] = &["No", "Yes"];
const NDY: &[&str] = &["No", "Don't know", "Yes"];
const NMY: &[&str] = &["No", "Maybe", "Yes"];

const OSMI: [Col; 23] = [
    Col { name: "Age", levels: &[] },
    Col { name: "Gender", levels: &["Female", "Male", "Other"] },
    Col { name: "self_employed", levels: NY },
    Col { name: "family_history", levels: NY },
    Col { name: "treatment", levels: NY },
    Col {
        name: "work_interfere",
        levels: &["No answer", "Never", "Rarely", "Sometimes", "Often"],
    },
    Col {
        name: "no_employees",
        levels: &["1-5", "6-25", "26-100", "100-500", "500-1000", "More than 1000"],
    },
    Col { name: "remote_work", levels: NY },
    Col { name: "tech_company", levels: NY },
    Col { name: "benefits", levels: NDY },
    Col { name: "care_options", levels: &["No", "Not sure", "Yes"] },
    Col { name: "wellness_program", levels: NDY },
    Col { name: "seek_help", levels: NDY },
    Col { name: "anonymity", levels: NDY },
    Col {
        name: "leave",
        levels: &["Very difficult", "Somewhat difficult", "Don't know", "Somewhat easy", "Very easy"],
    },
    Col { name: "mental_health_consequence", levels: NMY },
    Col { name: "phys_health_consequence", levels: NMY },
    Col { name: "coworkers", levels: &["No", "Some of them", "Yes"] },
    Col { name: "supervisor", levels: &["No", "Some of them", "Yes"] },
    Col { name: "mental_health_interview", levels: NMY },
    Col { name: "phys_health_interview", levels: NMY },
    Col { name: "mental_vs_physical", levels: NDY },
    Col { name: "obs_consequence", levels: NY },
];

const OSMI_ROWS: usize = 1259;

/// One respondent; categorical entries are level indices into `OSMI`.
fn osmi_row(rng: &mut ChaCha8Rng) -> (u32, [usize; 22]) {
    let young = Normal::new(29.0, 4.5).unwrap();
    let older = Normal::new(40.0, 7.0).unwrap();
    let age: f64 = if bern(rng, 0.75) {
        young.sample(rng)
    } else {
        older.sample(rng)
    };
    let age = age.round().clamp(18.0, 72.0) as u32;

    let gender = pick(rng, &[0.197, 0.79, 0.013]);
    let self_employed = pick(rng, &[0.885, 0.115]);
    let family_history = pick(rng, &[0.61, 0.39]);

    let no_employees = if self_employed == 1 {
        pick(rng, &[0.62, 0.2, 0.08, 0.04, 0.01, 0.05])
    } else {
        pick(rng, &[0.06, 0.24, 0.25, 0.16, 0.055, 0.255])
    };
    let tech_company = pick(rng, &[0.1 + 0.03 * no_employees as f64, 0.9 - 0.03 * no_employees as f64]);
    let remote_p = if self_employed == 1 {
        0.72
    } else {
        [0.45, 0.33, 0.27, 0.22, 0.2, 0.18][no_employees]
    };
    let remote_work = pick(rng, &[1.0 - remote_p, remote_p]);

    // benefits: larger employers and tech companies offer them more often
    let size = no_employees as f64 / 5.0;
    let benefits = pick(
        rng,
        &[
            0.45 - 0.3 * size + 0.05 * (1 - tech_company) as f64,
            0.35,
            0.2 + 0.45 * size,
        ],
    );
    let care_options = pick(
        rng,
        match benefits {
            0 => &[0.72, 0.18, 0.1],
            1 => &[0.4, 0.42, 0.18],
            _ => &[0.18, 0.2, 0.62],
        },
    );
    let wellness_program = pick(
        rng,
        match benefits {
            0 => &[0.85, 0.1, 0.05],
            1 => &[0.68, 0.22, 0.1],
            _ => &[0.5, 0.14, 0.36],
        },
    );
    let seek_help = pick(
        rng,
        match wellness_program {
            0 => &[0.66, 0.28, 0.06],
            1 => &[0.35, 0.55, 0.1],
            _ => &[0.15, 0.2, 0.65],
        },
    );
    let anonymity = pick(
        rng,
        match (seek_help, benefits) {
            (2, _) => &[0.03, 0.4, 0.57],
            (_, 2) => &[0.06, 0.6, 0.34],
            (1, _) => &[0.04, 0.82, 0.14],
            _ => &[0.07, 0.73, 0.2],
        },
    );
    let leave = pick(
        rng,
        match anonymity {
            0 => &[0.3, 0.25, 0.25, 0.13, 0.07],
            1 => &[0.06, 0.09, 0.6, 0.16, 0.09],
            _ => &[0.05, 0.08, 0.27, 0.28, 0.32],
        },
    );
    let mental_health_consequence = pick(
        rng,
        match leave {
            0 => &[0.12, 0.3, 0.58],
            1 => &[0.2, 0.42, 0.38],
            2 => &[0.38, 0.42, 0.2],
            3 => &[0.5, 0.35, 0.15],
            _ => &[0.65, 0.25, 0.1],
        },
    );
    let phys_health_consequence = pick(
        rng,
        match mental_health_consequence {
            0 => &[0.93, 0.06, 0.01],
            1 => &[0.65, 0.32, 0.03],
            _ => &[0.52, 0.3, 0.18],
        },
    );
    let coworkers = pick(
        rng,
        match mental_health_consequence {
            0 => &[0.12, 0.6, 0.28],
            1 => &[0.2, 0.67, 0.13],
            _ => &[0.38, 0.54, 0.08],
        },
    );
    let supervisor = pick(
        rng,
        match coworkers {
            0 => &[0.62, 0.2, 0.18],
            1 => &[0.26, 0.34, 0.4],
            _ => &[0.06, 0.1, 0.84],
        },
    );
    let mental_health_interview = pick(
        rng,
        match supervisor {
            0 => &[0.9, 0.09, 0.01],
            1 => &[0.8, 0.18, 0.02],
            _ => &[0.72, 0.2, 0.08],
        },
    );
    let phys_health_interview = pick(
        rng,
        match mental_health_interview {
            0 => &[0.45, 0.43, 0.12],
            1 => &[0.25, 0.6, 0.15],
            _ => &[0.1, 0.3, 0.6],
        },
    );
    let mental_vs_physical = pick(
        rng,
        match (benefits, wellness_program) {
            (_, 2) => &[0.14, 0.32, 0.54],
            (2, _) => &[0.22, 0.4, 0.38],
            (1, _) => &[0.22, 0.62, 0.16],
            _ => &[0.39, 0.4, 0.21],
        },
    );
    let obs_consequence = pick(
        rng,
        match mental_health_consequence {
            0 => &[0.93, 0.07],
            1 => &[0.86, 0.14],
            _ => &[0.7, 0.3],
        },
    );

    // work_interfere: "No answer" is the survey's skip for respondents
    // without a mental health condition.
    let mut wi = if family_history == 1 {
        [0.08, 0.12, 0.15, 0.48, 0.17]
    } else {
        [0.3, 0.2, 0.13, 0.29, 0.08]
    };
    if gender != 1 {
        wi[0] *= 0.55;
        wi[4] *= 1.3;
    }
    if age >= 40 {
        wi[1] *= 1.35;
    }
    let work_interfere = pick(rng, &wi);

    let z = [-2.9, -2.0, 0.6, 0.9, 1.4][work_interfere]
        + 0.8 * family_history as f64
        + [-0.45, -0.2, 0.55][care_options]
        + [-0.2, -0.25, 0.35][benefits]
        + [-0.2, 0.0, 0.35][coworkers]
        + [0.5, 0.0, 0.6][gender];
    let treatment = usize::from(bern(rng, logistic(z)));

    (
        age,
        [
            gender,
            self_employed,
            family_history,
            treatment,
            work_interfere,
            no_employees,
            remote_work,
            tech_company,
            benefits,
            care_options,
            wellness_program,
            seek_help,
            anonymity,
            leave,
            mental_health_consequence,
            phys_health_consequence,
            coworkers,
            supervisor,
            mental_health_interview,
            phys_health_interview,
            mental_vs_physical,
            obs_consequence,
        ],
    )
}

fn write_osmi(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    let mut rng = rng_for(OSMI_SEED, 0);
    let rows = (0..OSMI_ROWS)
        .map(|_| {
            let (age, cats) = osmi_row(&mut rng);
            let mut row = vec![age.to_string()];
            for (c, &k) in OSMI[1..].iter().zip(&cats) {
                // blank cell for the skipped question, as in the survey export
                let label = if c.name == "work_interfere" && k == 0 { "" } else { c.levels[k] };
                row.push(label.to_string());
            }
            row
        })
        .collect();
    Table {
        header: OSMI.iter().map(|c| c.name).collect(),
        rows,
    }
    .write(&dir.join("osmi.csv"))?;

    let mut schema = String::from(
        "[[columns]]\nname = \"Age\"\nkind = \"numeric\"\nnormalization = [18.0, 72.0]\n\n",
    );
    for c in &OSMI[1..] {
        let levels = c
            .levels
            .iter()
            .map(|l| format!("\"{l}\""))
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(schema, "[[columns]]\nname = \"{}\"\nkind = \"categorical\"\nlevels = [{levels}]", c.name);
        if c.name == "work_interfere" {
            schema.push_str("missing = \"No answer\"\n");
        }
        schema.push('\n');
    }
    fs::write(dir.join("schema.toml"), schema)?;
    Ok(())
}
