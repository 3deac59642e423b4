//! Appliance sample corpora and the per-class appliance profiles fitted
//! from them.
//!
//! On-disk layout: a directory holding one file per appliance plus a
//! manifest. An appliance file starts with `appliance,<name>` followed by
//! one watt reading per line. The manifest lists `class,<A|B|C>` headers,
//! each followed by the appliance file names for that class, one per line.
//! Blank lines and lines starting with `#` are ignored in both.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::consumption::{hourly_draw, ApplianceModel, ApplianceSamples};
use crate::error::{Error, Result};
use crate::home::{build_dm, DisconnectivityMatrix, HomeClass};

pub const MANIFEST_FILE: &str = "manifest.csv";

/// Appliance samples grouped by home class.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub classes: BTreeMap<HomeClass, Vec<ApplianceSamples>>,
}

struct SyntheticAppliance {
    name: &'static str,
    on_watts: f64,
    beta_a: f64,
    beta_b: f64,
}

const fn appliance(name: &'static str, on_watts: f64, beta_a: f64, beta_b: f64) -> SyntheticAppliance {
    SyntheticAppliance {
        name,
        on_watts,
        beta_a,
        beta_b,
    }
}

// Class A uses the first 7, class B the first 10, class C all 13.
const SYNTHETIC_APPLIANCES: [SyntheticAppliance; 13] = [
    appliance("lights", 80.0, 5.0, 3.0),
    appliance("ceiling_fan", 80.0, 6.0, 2.0),
    appliance("pedestal_fan", 65.0, 4.0, 3.0),
    appliance("television", 120.0, 3.0, 4.0),
    appliance("refrigerator", 180.0, 5.0, 4.0),
    appliance("phone_chargers", 25.0, 3.0, 3.0),
    appliance("rice_cooker", 55.0, 2.0, 5.0),
    appliance("water_pump", 150.0, 2.0, 6.0),
    appliance("iron", 170.0, 2.0, 7.0),
    appliance("washing_machine", 150.0, 2.0, 6.0),
    appliance("air_cooler", 125.0, 5.0, 2.0),
    appliance("microwave", 130.0, 2.0, 8.0),
    appliance("computer", 75.0, 4.0, 3.0),
];

const SYNTHETIC_SAMPLES: usize = 2000;
const SYNTHETIC_SPIKES: usize = 5;

impl Corpus {
    /// Bundled synthetic corpus. Each appliance's hourly average is its
    /// on-power scaled by a Beta-distributed duty cycle, with a handful of
    /// metering spikes mixed in for the outlier filter to catch.
    pub fn synthetic(seed: u64) -> Corpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all: Vec<ApplianceSamples> = SYNTHETIC_APPLIANCES
            .iter()
            .map(|spec| {
                let duty = Beta::new(spec.beta_a, spec.beta_b).expect("valid beta parameters");
                let mut samples: Vec<f64> = (0..SYNTHETIC_SAMPLES)
                    .map(|_| round2(spec.on_watts * duty.sample(&mut rng)))
                    .collect();
                for _ in 0..SYNTHETIC_SPIKES {
                    let at = rng.random_range(0..samples.len());
                    samples[at] = round2(spec.on_watts * 4.0);
                }
                ApplianceSamples {
                    appliance_name: spec.name.to_string(),
                    samples,
                }
            })
            .collect();
        let classes = HomeClass::ALL
            .into_iter()
            .map(|c| (c, all[..c.appliance_count()].to_vec()))
            .collect();
        Corpus { classes }
    }

    /// Loads a corpus from a manifest file; appliance files are resolved
    /// relative to the manifest's directory.
    pub fn load(manifest: &Path) -> Result<Corpus> {
        let manifest = if manifest.is_dir() {
            manifest.join(MANIFEST_FILE)
        } else {
            manifest.to_path_buf()
        };
        let dir = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
        let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;

        let mut classes: BTreeMap<HomeClass, Vec<ApplianceSamples>> = BTreeMap::new();
        let mut current: Option<HomeClass> = None;
        let mut cache: BTreeMap<PathBuf, ApplianceSamples> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(label) = line.strip_prefix("class,") {
                let class: HomeClass = label.parse()?;
                if classes.contains_key(&class) {
                    return Err(Error::Corpus(format!("class {class} listed twice in manifest")));
                }
                classes.insert(class, Vec::new());
                current = Some(class);
                continue;
            }
            let class = current.ok_or_else(|| {
                Error::Corpus(format!(
                    "{}:{}: appliance file before any class header",
                    manifest.display(),
                    lineno + 1
                ))
            })?;
            let path = dir.join(line);
            let samples = match cache.get(&path) {
                Some(s) => s.clone(),
                None => {
                    let s = read_appliance_file(&path)?;
                    cache.insert(path, s.clone());
                    s
                }
            };
            classes.get_mut(&class).expect("class inserted").push(samples);
        }

        for class in HomeClass::ALL {
            match classes.get(&class) {
                None => return Err(Error::Corpus(format!("manifest has no class {class}"))),
                Some(list) if list.len() != class.appliance_count() => {
                    return Err(Error::Corpus(format!(
                        "class {class} lists {} appliances, expected {}",
                        list.len(),
                        class.appliance_count()
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(Corpus { classes })
    }

    /// Writes the corpus in the on-disk layout. Appliances shared between
    /// classes are written once.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::new();
        let mut written: BTreeMap<String, &ApplianceSamples> = BTreeMap::new();
        for (class, appliances) in &self.classes {
            manifest.push_str(&format!("class,{class}\n"));
            for a in appliances {
                let file = format!("{}.csv", a.appliance_name);
                if let Some(prev) = written.get(&file) {
                    if *prev != a {
                        return Err(Error::Corpus(format!(
                            "two different appliances named {}",
                            a.appliance_name
                        )));
                    }
                } else {
                    let mut body = format!("appliance,{}\n", a.appliance_name);
                    for w in &a.samples {
                        body.push_str(&format!("{w}\n"));
                    }
                    let path = dir.join(&file);
                    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
                    written.insert(file.clone(), a);
                }
                manifest.push_str(&file);
                manifest.push('\n');
            }
        }
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn read_appliance_file(path: &Path) -> Result<ApplianceSamples> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .map(str::trim)
        .enumerate()
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let name = match lines.next() {
        Some((_, header)) => header
            .strip_prefix("appliance,")
            .map(|n| n.trim().to_string())
            .filter(|n| !n.is_empty())
            .ok_or_else(|| {
                Error::Corpus(format!("{}: missing `appliance,<name>` header", path.display()))
            })?,
        None => return Err(Error::Corpus(format!("{}: empty appliance file", path.display()))),
    };
    let mut samples = Vec::new();
    for (lineno, line) in lines {
        let w: f64 = line.parse().map_err(|_| {
            Error::Corpus(format!("{}:{}: bad reading {line:?}", path.display(), lineno + 1))
        })?;
        samples.push(w);
    }
    if samples.is_empty() {
        return Err(Error::Corpus(format!("{}: no readings", path.display())));
    }
    ApplianceSamples::new(name, samples)
}

/// Fitted appliances, disconnectivity matrix and draw scaling for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProfile {
    pub class: HomeClass,
    pub appliances: Vec<ApplianceModel>,
    pub dm: DisconnectivityMatrix,
    /// Applied to every draw so the rated appliance draws fit the meter
    /// rating. 1.0 unless the corpus overshoots the rating.
    pub scale: f64,
}

impl ClassProfile {
    pub fn fit(class: HomeClass, samples: &[ApplianceSamples], bandwidth: Option<f64>) -> Result<Self> {
        if samples.len() != class.appliance_count() {
            return Err(Error::Corpus(format!(
                "class {class} needs {} appliances, got {}",
                class.appliance_count(),
                samples.len()
            )));
        }
        let appliances = samples
            .iter()
            .map(|s| ApplianceModel::fit(s, bandwidth))
            .collect::<Result<Vec<_>>>()?;
        let rated_sum: f64 = appliances.iter().map(|a| a.rated).sum();
        let scale = if rated_sum > class.rating() {
            class.rating() / rated_sum
        } else {
            1.0
        };
        let ratings: Vec<f64> = appliances.iter().map(|a| a.rated * scale).collect();
        let dm = build_dm(class, &ratings);
        Ok(ClassProfile {
            class,
            appliances,
            dm,
            scale,
        })
    }

    /// Effective per-appliance ratings after scaling.
    pub fn ratings(&self) -> Vec<f64> {
        self.appliances.iter().map(|a| a.rated * self.scale).collect()
    }

    /// Draws one hour of per-appliance average consumption. Each draw is
    /// capped at the appliance's rated draw so level caps hold every hour.
    pub fn draw_hour<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.appliances
            .iter()
            .map(|a| {
                let w = hourly_draw(&a.cdf, rng).expect("u drawn from [0, 1)");
                w.min(a.rated) * self.scale
            })
            .collect()
    }
}

/// Profiles for all three classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCatalog {
    profiles: Vec<ClassProfile>,
}

impl ClassCatalog {
    pub fn fit(corpus: &Corpus, bandwidth: Option<f64>) -> Result<Self> {
        let profiles = HomeClass::ALL
            .into_iter()
            .map(|class| {
                let samples = corpus
                    .classes
                    .get(&class)
                    .ok_or_else(|| Error::Corpus(format!("corpus has no class {class}")))?;
                ClassProfile::fit(class, samples, bandwidth)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ClassCatalog { profiles })
    }

    pub fn profile(&self, class: HomeClass) -> &ClassProfile {
        &self.profiles[class.index()]
    }
}
