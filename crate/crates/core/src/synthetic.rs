//! A small seeded corpus with queries, judgments and word vectors.
//!
//! The single task asks for wind speed data. Five relevant tables record
//! wind speed in a column with an empty header and never mention the topic
//! in their title or description; their sibling columns match six source
//! tables that carry a `wind_speed` header. Eight distractors mention wind or
//! speed in their text only, and eleven unrelated tables fill the rest.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{normalize_label, tokenize_text, Column, Corpus, Dataset, TaskSet};
use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};
use crate::eval::Qrels;

pub const TOY_TASK: &str = "T1";
pub const TOY_VECTOR_DIM: usize = 16;

const QUERIES: [&str; 3] = ["wind speed", "average wind speed", "wind speed by month"];

#[derive(Clone, Copy)]
enum Values {
    Code(&'static str),
    Month,
    Decimal(f64, f64),
    Int(i64, i64),
    Pick(&'static [&'static str]),
    Date,
    Money(i64, i64),
}

impl Values {
    fn sample(self, rng: &mut ChaCha8Rng) -> String {
        const MONTHS: [&str; 12] = [
            "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
        ];
        match self {
            Values::Code(prefix) => format!("{prefix}-{:03}", rng.random_range(1..400)),
            Values::Month => MONTHS[rng.random_range(0..12)].to_string(),
            Values::Decimal(lo, hi) => format!("{:.2}", rng.random_range(lo..hi)),
            Values::Int(lo, hi) => rng.random_range(lo..=hi).to_string(),
            Values::Pick(opts) => opts[rng.random_range(0..opts.len())].to_string(),
            Values::Date => format!(
                "20{:02}-{:02}-{:02}",
                rng.random_range(10..24),
                rng.random_range(1..13),
                rng.random_range(1..29)
            ),
            Values::Money(lo, hi) => {
                let v = rng.random_range(lo..=hi);
                format!("${},{:03}", v / 1000, v % 1000)
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Target,
    Source,
    Distractor,
    Filler,
}

impl Role {
    fn grade(self) -> Option<u8> {
        match self {
            Role::Target => Some(3),
            Role::Source => Some(1),
            Role::Distractor => Some(0),
            Role::Filler => None,
        }
    }
}

struct Template {
    role: Role,
    title: &'static str,
    description: &'static str,
    columns: Vec<(Option<&'static str>, Values)>,
}

const WIND: Values = Values::Decimal(3.0, 40.0);
const STREETS: &[&str] = &["Main St", "Oak Ave", "Elm St", "Pine Rd", "Lake Dr", "Hill St"];
const CITIES: &[&str] = &["Springfield", "Riverton", "Lakeside", "Fairview", "Greenville"];
const MAKERS: &[&str] = &["Vestas", "Siemens", "Nordex", "Enercon"];
const SCHOOLS: &[&str] = &["Lincoln Elementary", "Roosevelt High", "Kennedy Middle", "Adams Academy"];
const VENDORS: &[&str] = &["Acme Supply", "Metro Office", "Delta Services", "Prime Paving"];
const DEPTS: &[&str] = &["Parks", "Police", "Library", "Public Works"];
const ISPS: &[&str] = &["FastNet", "CityFiber", "AirLink"];
const ROUTES: &[&str] = &["Red Line", "Blue Line", "Route 9", "Crosstown"];

fn templates() -> Vec<Template> {
    use Role::*;
    use Values::*;
    let t = |role, title, description, columns| Template {
        role,
        title,
        description,
        columns,
    };
    let mut out = vec![
        t(Target, "Coastal station observations", "Monthly records collected at coastal monitoring sites.",
          vec![(Some("station"), Code("CS")), (Some("month"), Month), (Some("temperature"), Int(-10, 35)), (None, WIND)]),
        t(Target, "Harbor monitoring log", "Entries from harbor sensors grouped by station.",
          vec![(Some("station"), Code("HB")), (Some("month"), Month), (Some("temperature"), Int(-10, 35)), (None, WIND)]),
        t(Target, "Mountain pass sensor archive", "Archive of readings from alpine sensor posts.",
          vec![(Some("station"), Code("MP")), (Some("month"), Month), (Some("temperature"), Int(-10, 35)), (None, WIND)]),
        t(Target, "Airport field data 2018", "Field data gathered at regional airfields.",
          vec![(Some("station"), Code("AP")), (Some("month"), Month), (Some("temperature"), Int(-10, 35)), (None, WIND)]),
        t(Target, "Island outpost summaries", "Summaries reported by remote island outposts.",
          vec![(Some("station"), Code("IS")), (Some("month"), Month), (Some("temperature"), Int(-10, 35)), (None, WIND)]),
    ];
    let source_titles = [
        ("Inland climate network", "Observations from the inland climate network."),
        ("Valley observatory records", "Records kept by the valley observatory."),
        ("Prairie weather stations", "Hourly observations across prairie stations."),
        ("Lakeshore climate archive", "Archive of lakeshore climate observations."),
        ("Northern research stations", "Measurements from northern research posts."),
        ("Desert climate survey", "Survey of desert climate observations."),
    ];
    for (title, description) in source_titles {
        out.push(t(Source, title, description, vec![
            (Some("station"), Code("ST")),
            (Some("month"), Month),
            (Some("wind_speed"), WIND),
            (Some("temperature"), Int(-10, 35)),
            (Some("humidity"), Int(20, 100)),
        ]));
    }
    out.extend([
        t(Distractor, "Wind turbine inventory", "Inventory of wind turbines and their manufacturers.",
          vec![(Some("turbine_id"), Code("WT")), (Some("manufacturer"), Pick(MAKERS)), (Some("capacityMW"), Decimal(1.5, 3.0)), (Some("install_year"), Int(2000, 2020))]),
        t(Distractor, "Wind energy projects", "Planned wind energy projects by city.",
          vec![(Some("project"), Code("PRJ")), (Some("city"), Pick(CITIES)), (Some("budget"), Money(100000, 900000))]),
        t(Distractor, "Offshore wind leases", "Lease areas for offshore wind development.",
          vec![(Some("lease_id"), Code("OCS")), (Some("acres"), Int(1000, 90000)), (Some("lease_date"), Date)]),
        t(Distractor, "Speed camera locations", "Locations of speed cameras on city streets.",
          vec![(Some("camera_id"), Code("CAM")), (Some("street"), Pick(STREETS)), (Some("fines_issued"), Int(0, 5000))]),
        t(Distractor, "Posted speed limits", "Posted speed limits for each road segment.",
          vec![(Some("road_name"), Pick(STREETS)), (Some("speedLimit"), Int(20, 70)), (Some("county"), Pick(CITIES))]),
        t(Distractor, "Internet speed survey", "Household internet speed test results.",
          vec![(Some("provider"), Pick(ISPS)), (Some("download_mbps"), Int(5, 900)), (Some("test_date"), Date)]),
        t(Distractor, "Wind damage claims", "Insurance claims after wind storms.",
          vec![(Some("claim_id"), Code("CLM")), (Some("amount"), Money(1000, 80000)), (Some("claim_date"), Date)]),
        t(Distractor, "Average speed of buses", "Average speed of city buses by route.",
          vec![(Some("route"), Pick(ROUTES)), (Some("avg_mph"), Int(8, 30)), (Some("weekday"), Pick(&["Mon", "Tue", "Wed", "Thu", "Fri"]))]),
        t(Filler, "School enrollment", "Enrollment counts for public schools.",
          vec![(Some("school_name"), Pick(SCHOOLS)), (Some("enrollment"), Int(100, 2000)), (Some("district"), Pick(CITIES))]),
        t(Filler, "School lunch program", "Meals served under the lunch program.",
          vec![(Some("school_name"), Pick(SCHOOLS)), (Some("meals_served"), Int(1000, 40000)), (Some("report_date"), Date)]),
        t(Filler, "Teacher salaries", "Salaries of teachers by school.",
          vec![(Some("school_name"), Pick(SCHOOLS)), (Some("salary"), Money(30000, 90000)), (Some("hire_date"), Date)]),
        t(Filler, "Transit ridership", "Daily ridership by route.",
          vec![(Some("route"), Pick(ROUTES)), (Some("ridership"), Int(1000, 90000)), (Some("service_date"), Date)]),
        t(Filler, "Bus stop inventory", "Bus stops with shelters and benches.",
          vec![(Some("stop_id"), Code("BS")), (Some("street"), Pick(STREETS)), (Some("shelter"), Pick(&["yes", "no"]))]),
        t(Filler, "City vendor payments", "Payments to vendors by department.",
          vec![(Some("vendor"), Pick(VENDORS)), (Some("department"), Pick(DEPTS)), (Some("amount"), Money(500, 90000))]),
        t(Filler, "Department budgets", "Annual budget by department.",
          vec![(Some("department"), Pick(DEPTS)), (Some("fiscal_year"), Int(2010, 2023)), (Some("budget"), Money(100000, 900000))]),
        t(Filler, "Purchase orders", "Open purchase orders.",
          vec![(Some("po_number"), Code("PO")), (Some("vendor"), Pick(VENDORS)), (Some("amount"), Money(500, 90000))]),
        t(Filler, "Library circulation", "Books checked out per branch.",
          vec![(Some("branch"), Pick(CITIES)), (Some("checkouts"), Int(100, 9000)), (Some("report_date"), Date)]),
        t(Filler, "Park facilities", "Facilities available in city parks.",
          vec![(Some("park_name"), Pick(&["Central Park", "River Park", "Hill Park"])), (Some("facility"), Pick(&["pool", "court", "field"])), (Some("city"), Pick(CITIES))]),
        t(Filler, "Clinic visits", "Patient visits to community clinics.",
          vec![(Some("clinic"), Code("CL")), (Some("visits"), Int(50, 3000)), (Some("visit_date"), Date)]),
    ]);
    out
}

/// Corpus, task set, judgments and vectors, all as in-memory values and
/// their file representations.
#[derive(Debug, Clone)]
pub struct ToyBundle {
    pub corpus: Corpus,
    /// `task_id<TAB>query` lines.
    pub queries: String,
    /// `task_id<TAB>description` lines.
    pub descriptions: String,
    /// TREC qrels.
    pub qrels: String,
    /// Text vector file.
    pub vectors: String,
    /// Ids of the five label-only relevant tables.
    pub targets: Vec<String>,
}

/// Paths of a bundle written to disk.
#[derive(Debug, Clone)]
pub struct ToyPaths {
    pub corpus: PathBuf,
    pub queries: PathBuf,
    pub descriptions: PathBuf,
    pub qrels: PathBuf,
    pub vectors: PathBuf,
}

pub fn toy_bundle(seed: u64) -> ToyBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let templates = templates();
    let mut numbers: Vec<usize> = (1..=templates.len()).collect();
    numbers.shuffle(&mut rng);

    let mut datasets = Vec::new();
    let mut qrels = String::new();
    let mut targets = Vec::new();
    for (tpl, n) in templates.iter().zip(numbers) {
        let id = format!("ds{n:02}");
        let rows = rng.random_range(20..40);
        let columns = tpl
            .columns
            .iter()
            .map(|&(header, values)| {
                let cells = (0..rows).map(|_| values.sample(&mut rng)).collect();
                Column::new(header.map(str::to_string), cells)
            })
            .collect();
        if let Some(g) = tpl.role.grade() {
            qrels.push_str(&format!("{TOY_TASK} 0 {id} {g}\n"));
        }
        if tpl.role == Role::Target {
            targets.push(id.clone());
        }
        datasets.push(Dataset::new(id, tpl.title, tpl.description, columns));
    }
    datasets.sort_by(|a, b| a.id.cmp(&b.id));
    targets.sort();

    let mut vocab: Vec<String> = templates
        .iter()
        .flat_map(|t| t.columns.iter().filter_map(|c| c.0))
        .flat_map(normalize_label)
        .chain(QUERIES.iter().flat_map(|q| tokenize_text(q)))
        .collect();
    vocab.sort();
    vocab.dedup();
    let mut vectors = format!("{} {TOY_VECTOR_DIM}\n", vocab.len());
    for token in &vocab {
        vectors.push_str(token);
        for _ in 0..TOY_VECTOR_DIM {
            vectors.push_str(&format!(" {:.6}", rng.random_range(-1.0..1.0)));
        }
        vectors.push('\n');
    }

    ToyBundle {
        corpus: Corpus::new(datasets),
        queries: QUERIES.iter().map(|q| format!("{TOY_TASK}\t{q}\n")).collect(),
        descriptions: format!("{TOY_TASK}\tFind tables that report wind speed observations at weather stations.\n"),
        qrels,
        vectors,
        targets,
    }
}

impl ToyBundle {
    pub fn tasks(&self) -> TaskSet {
        TaskSet::from_strings(&self.queries, Some(&self.descriptions)).expect("bundled queries parse")
    }

    pub fn qrels(&self) -> Qrels {
        Qrels::parse(&self.qrels).expect("bundled qrels parse")
    }

    pub fn store(&self) -> EmbeddingStore {
        EmbeddingStore::from_reader(self.vectors.as_bytes()).expect("bundled vectors parse")
    }

    /// Write the corpus directories and the side files under `dir`.
    pub fn write(&self, dir: &Path) -> Result<ToyPaths> {
        let corpus = dir.join("corpus");
        for ds in &self.corpus.datasets {
            let d = corpus.join(&ds.id);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            let csv_path = d.join("data.csv");
            let mut w = csv::Writer::from_path(&csv_path)
                .map_err(|e| Error::io(&csv_path, std::io::Error::other(e)))?;
            let header: Vec<&str> = ds.columns.iter().map(|c| c.raw_label.as_deref().unwrap_or("")).collect();
            let io = |e: csv::Error| Error::io(&csv_path, std::io::Error::other(e));
            w.write_record(&header).map_err(io)?;
            for r in 0..ds.row_count() {
                w.write_record(ds.columns.iter().map(|c| c.values[r].as_str())).map_err(io)?;
            }
            w.flush().map_err(|e| Error::io(&csv_path, e))?;
            let meta = serde_json::json!({"id": ds.id, "title": ds.title, "description": ds.description});
            let meta_path = d.join("meta.json");
            fs::write(&meta_path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&meta_path, e))?;
        }
        let side = |name: &str, text: &str| -> Result<PathBuf> {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
            Ok(p)
        };
        Ok(ToyPaths {
            corpus,
            queries: side("queries.tsv", &self.queries)?,
            descriptions: side("descriptions.tsv", &self.descriptions)?,
            qrels: side("qrels.txt", &self.qrels)?,
            vectors: side("vectors.txt", &self.vectors)?,
        })
    }
}
