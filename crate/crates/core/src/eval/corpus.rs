//! Seeded synthetic report corpus with gold labels assigned by construction.
//!
//! Each scenario family writes positive reports with varied wording plus the
//! confounders that make a naive query imprecise: negated mentions, placement
//! reports that recommend later removal, the same device in another organ, and so
//! on. A few "unlisted" reports read exactly like positives but are labelled
//! negative, standing in for cases a curated database never collected.

use std::collections::BTreeSet;

use chrono::{DateTime, TimeDelta, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GoldStandardScenario;
use crate::schema::{names, ReportDocument};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    AnoxicBrainInjury,
    HepaticArterialInfusionPump,
    IvcFilterRetrieval,
    IvcStent,
    PalmazStent,
}

/// (findings, impression)
type Template = (&'static str, &'static str);

/// (study description, modality)
type Study = (&'static str, &'static str);

struct FamilyText {
    positive_studies: &'static [Study],
    negative_studies: &'static [Study],
    positives: &'static [Template],
    confounders: &'static [Template],
}

const ANOXIC: FamilyText = FamilyText {
    positive_studies: &[("MRI BRAIN WO CONTRAST", "MR"), ("CT HEAD WO CONTRAST", "CT")],
    negative_studies: &[("MRI BRAIN WO CONTRAST", "MR"), ("CT HEAD WO CONTRAST", "CT"), ("XR CHEST 1 VIEW", "CR")],
    positives: &[
        ("Diffuse restricted diffusion within the bilateral basal ganglia and cortex.", "Findings consistent with anoxic brain injury."),
        ("Loss of gray-white matter differentiation throughout both cerebral hemispheres.", "Diffuse cerebral edema compatible with global hypoxic injury."),
        ("Symmetric cortical laminar necrosis pattern.", "Hypoxic ischemic encephalopathy."),
        ("Restricted diffusion in the hippocampi and occipital cortex.", "Pattern most compatible with anoxic injury following cardiac arrest."),
        ("Reversal sign with relatively hyperdense cerebellum.", "Severe hypoxic-ischemic brain injury."),
        ("Diffuse cortical diffusion signal abnormality.", "Anoxic encephalopathy."),
    ],
    confounders: &[
        ("Gray-white matter differentiation is preserved. Ventricles are normal in size.", "No evidence of anoxic injury."),
        ("No restricted diffusion. No mass effect.", "No evidence of hypoxic ischemic injury."),
        ("Study performed after cardiac arrest. Normal diffusion imaging.", "No imaging findings of anoxic brain injury."),
        ("Clinical history: evaluate for hypoxic injury after prolonged resuscitation. Normal brain MRI.", "Normal MRI of the brain. Specifically, no findings to suggest anoxic injury."),
        ("Unremarkable noncontrast head CT.", "Unremarkable head CT without evidence of hypoxic injury."),
        ("Bilateral airspace opacities. Endotracheal tube in good position.", "Diffuse bilateral airspace disease in patient with hypoxic respiratory failure."),
    ],
};

const PUMP: FamilyText = FamilyText {
    positive_studies: &[("NM HEPATIC ARTERIAL PUMP STUDY", "NM"), ("CT ABDOMEN PELVIS W CONTRAST", "CT")],
    negative_studies: &[("CT ABDOMEN PELVIS W CONTRAST", "CT"), ("US LIVER DOPPLER", "US"), ("XR ABDOMEN 1 VIEW", "CR")],
    positives: &[
        ("Hepatic arterial infusion pump in the left lower quadrant with catheter terminating in the gastroduodenal artery.", "Hepatic arterial infusion pump catheter in expected position."),
        ("Tc-99m MAA injected via the HAI pump side port. Activity distributes to both hepatic lobes without extrahepatic perfusion.", "Satisfactory HAI pump perfusion study."),
        ("Subcutaneous infusion pump in the abdominal wall with catheter in the common hepatic artery.", "Hepatic artery infusion pump without extrahepatic perfusion."),
        ("Pump pocket without fluid collection. Chemotherapy pump catheter tip in the proper hepatic artery.", "Intact hepatic pump system."),
    ],
    confounders: &[
        ("Insulin pump device overlies the left abdomen.", "No acute abdominal process. Incidental insulin pump."),
        ("Intrathecal baclofen pump in the right abdominal wall with catheter entering the spinal canal at L3.", "Intrathecal pump catheter intact."),
        ("Liver transplant. Hepatic artery is patent with normal resistive index.", "Patent hepatic artery and portal vein."),
        ("Left ventricular assist device pump in place. Hepatic congestion.", "Hepatic congestion. LVAD pump noted."),
        ("Hepatic infusion pump was removed in 2012. Multiple hepatic metastases.", "Progressive hepatic metastatic disease."),
    ],
};

const FILTER: FamilyText = FamilyText {
    positive_studies: &[("IR IVC FILTER RETRIEVAL", "XA")],
    negative_studies: &[("IR IVC FILTER PLACEMENT", "XA"), ("CT ABDOMEN W CONTRAST", "CT")],
    positives: &[
        ("Right internal jugular venous access. Cavagram demonstrates no thrombus within the filter. The IVC filter was snared and retrieved through a sheath.", "Successful IVC filter retrieval."),
        ("Infrarenal inferior vena cava filter removed intact using loop snare technique.", "Successful retrieval of inferior vena cava filter."),
        ("Tilted IVC filter with embedded hook. Filter removed with endobronchial forceps.", "Complex IVC filter retrieval, successful."),
        ("IVC filter inserted 3 months prior for trauma. Filter retrieved without complication.", "IVC filter removal. Post-retrieval cavagram shows no extravasation."),
    ],
    confounders: &[
        ("Successful placement of infrarenal IVC filter. Filter may be retrieved when anticoagulation can be resumed; the patient will be scheduled in IR clinic for filter retrieval.", "Successful IVC filter placement. Recommend retrieval when clinically appropriate."),
        ("Infrarenal IVC filter deployed via right femoral approach.", "IVC filter placement. The filter is retrievable; recommend removal within 3 months."),
        ("Multiple attempts at IVC filter retrieval were unsuccessful due to embedded filter hook.", "Unsuccessful IVC filter retrieval; filter left in place."),
        ("IVC filter in place with struts extending beyond the caval wall. Recommend evaluation for filter removal.", "IVC filter strut penetration."),
        ("Infrarenal IVC filter deployed. Recommend filter retrieval once contraindication to anticoagulation resolves.", "Uncomplicated filter deployment."),
    ],
};

const STENT: FamilyText = FamilyText {
    positive_studies: &[("IR VENOGRAM IVC STENT", "XA"), ("CT VENOGRAM ABDOMEN PELVIS", "CT")],
    negative_studies: &[("CT ABDOMEN PELVIS W CONTRAST", "CT"), ("CT VENOGRAM ABDOMEN PELVIS", "CT"), ("XR ABDOMEN 1 VIEW", "CR")],
    positives: &[
        ("Chronic occlusion of the infrarenal IVC recanalized. Two overlapping Wallstents deployed from the IVC into the common iliac veins.", "Successful IVC stent reconstruction."),
        ("Inferior vena cava stent placed across the suprarenal stenosis.", "Successful inferior vena cava stent placement."),
        ("Follow-up venogram: IVC stent is widely patent.", "Patent IVC stent."),
        ("Caval stent extending to the confluence without in-stent thrombus.", "Patent caval stent."),
    ],
    confounders: &[
        ("IVC filter in place. Left common iliac vein stent is patent.", "Patent left iliac venous stent. IVC filter unchanged."),
        ("Biliary stent in place. IVC is patent.", "Biliary stent in expected position."),
        ("Ureteral stent on the right. Retrocaval ureter adjacent to the IVC.", "Right ureteral stent in good position."),
        ("Stent graft repair of abdominal aortic aneurysm. IVC is normal in caliber.", "Stable endovascular stent graft without endoleak."),
        ("IVC stent was considered but not placed due to extensive thrombus.", "Extensive IVC thrombus. Stent not placed."),
    ],
};

const PALMAZ: FamilyText = FamilyText {
    positive_studies: &[("IR RENAL ARTERY STENT", "XA"), ("CTA ABDOMEN PELVIS", "CT")],
    negative_studies: &[("IR PERIPHERAL ANGIOGRAM", "XA"), ("CTA ABDOMEN PELVIS", "CT")],
    positives: &[
        ("Balloon expandable Palmaz stent deployed across the left renal artery ostium.", "Successful Palmaz stent placement in the left renal artery."),
        ("Palmaz Genesis stent in the right external iliac artery is patent.", "Patent Palmaz stent."),
        ("Transjugular intrahepatic shunt extended with a Palmaz stent.", "Shunt revision with Palmaz stent extension."),
        ("Palmaz-Schatz stent in the proximal left anterior descending artery.", "Palmaz-Schatz coronary stent."),
    ],
    confounders: &[
        ("A Palmaz stent was available but a self expanding stent was chosen.", "Self expanding stent placed in the superficial femoral artery."),
        ("Palmaz stent removed during surgical revision.", "Status post Palmaz stent explant."),
    ],
};

const FILLER: &[&str] = &[
    "Visualized lung bases are clear.",
    "No acute osseous abnormality.",
    "Degenerative changes of the lumbar spine.",
    "Small hiatal hernia.",
    "Atherosclerotic calcification of the aorta.",
    "Limited evaluation due to motion artifact.",
    "Comparison is made to the prior examination.",
    "Sinuses and mastoid air cells are clear.",
    "Mild bibasilar atelectasis.",
    "Scattered colonic diverticula without diverticulitis.",
];

const BACKGROUND: FamilyText = FamilyText {
    positive_studies: &[
        ("XR CHEST 2 VIEWS", "CR"),
        ("MRI KNEE WO CONTRAST", "MR"),
        ("CT CHEST W CONTRAST", "CT"),
        ("US ABDOMEN COMPLETE", "US"),
        ("MRI LUMBAR SPINE WO", "MR"),
    ],
    negative_studies: &[],
    positives: &[
        ("Lungs are clear. Heart size is normal.", "No acute cardiopulmonary process."),
        ("Intact anterior cruciate ligament. Small joint effusion.", "Small knee joint effusion. Ligaments intact."),
        ("Few scattered pulmonary nodules measuring up to 4 mm.", "Small pulmonary nodules, likely benign."),
        ("Liver is normal in size and echotexture. Gallbladder without stones.", "Normal abdominal ultrasound."),
        ("Disc bulge at L4-L5 with mild neural foraminal narrowing.", "Mild lumbar spondylosis."),
        ("Mildly displaced fracture of the distal radius.", "Distal radius fracture."),
        ("Right lower lobe consolidation.", "Right lower lobe pneumonia."),
    ],
    confounders: &[],
};

const FIRST_NAMES: &[&str] = &["Alice", "Bruno", "Chen", "Dolores", "Emeka", "Farah", "Gustav", "Hana", "Ivan", "Jamila", "Kenji", "Lucia", "Mateo", "Nadia", "Omar", "Priya"];
const LAST_NAMES: &[&str] = &["Abbott", "Barros", "Castellano", "Dubois", "Eriksen", "Fujita", "Gallagher", "Haddad", "Ibarra", "Jansen", "Kowalski", "Lindqvist", "Moreau", "Nakamura", "Okafor", "Petrov"];
const AUTHORS: &[&str] = &["Avery Quinn MD", "Blake Romero MD", "Casey Sato MD", "Devon Ueda MD", "Emerson Vale MD", "Finley Walsh MD"];

fn text(family: Family) -> &'static FamilyText {
    match family {
        Family::AnoxicBrainInjury => &ANOXIC,
        Family::HepaticArterialInfusionPump => &PUMP,
        Family::IvcFilterRetrieval => &FILTER,
        Family::IvcStent => &STENT,
        Family::PalmazStent => &PALMAZ,
    }
}

/// One scenario of the synthetic evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub family: Family,
    pub positives: usize,
    /// Confounder reports, spread evenly over the family's confounder patterns.
    pub hard_negatives: usize,
    /// Positive-looking reports that are not in the gold list.
    #[serde(default)]
    pub unlisted: usize,
    /// Unrelated reports that belong to this scenario's universe.
    pub background: usize,
    pub refinements: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub scenarios: Vec<ScenarioSpec>,
    /// Unrelated reports outside every scenario universe.
    #[serde(default)]
    pub extra_background: usize,
    #[serde(default = "default_start")]
    pub start: DateTime<Utc>,
    #[serde(default = "default_span_days")]
    pub span_days: u32,
}

fn default_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2002, 1, 1, 0, 0, 0).unwrap()
}

fn default_span_days() -> u32 {
    17 * 365
}

fn queries(qs: &[&str]) -> Vec<String> {
    qs.iter().map(|s| s.to_string()).collect()
}

impl Default for CorpusSpec {
    /// Five scenarios with 300 + 48 + 160 + 40 + 88 = 636 positives.
    fn default() -> Self {
        let anoxic = queries(&[
            "anoxic",
            "anoxic OR hypoxic",
            "(anoxic OR hypoxic) NOT \"no evidence of anoxic\" NOT \"no evidence of hypoxic\"",
            "(anoxic OR hypoxic) NOT \"no evidence of anoxic\" NOT \"no evidence of hypoxic\" NOT \"respiratory failure\"",
            "(anoxic OR hypoxic) NOT \"no evidence of anoxic\" NOT \"no evidence of hypoxic\" NOT \"respiratory failure\" NOT \"without evidence of hypoxic\"",
            "(anoxic OR hypoxic) NOT \"no evidence of anoxic\" NOT \"no evidence of hypoxic\" NOT \"respiratory failure\" NOT \"without evidence of hypoxic\" NOT \"no findings to suggest\"",
            "(anoxic OR hypoxic) NOT \"no evidence of anoxic\" NOT \"no evidence of hypoxic\" NOT \"respiratory failure\" NOT \"without evidence of hypoxic\" NOT \"no findings to suggest\" NOT \"no imaging findings\"",
        ]);
        let pump = queries(&[
            "\"hepatic arterial infusion pump\"",
            "hepatic AND pump",
            "hepatic AND pump NOT LVAD",
            "hepatic AND pump NOT LVAD NOT \"was removed\"",
        ]);
        let filter = queries(&[
            "\"filter retrieval\"",
            "\"filter retrieval\" OR \"filter removal\"",
            "filter AND (retriev* OR remov*)",
            "filter AND (retriev* OR remov*) NOT \"filter placement\"",
            "filter AND (retriev* OR remov*) NOT \"filter placement\" NOT unsuccessful",
            "filter AND (retriev* OR remov*) NOT \"filter placement\" NOT unsuccessful NOT strut",
            "filter AND (retriev* OR remov*) NOT \"filter placement\" NOT unsuccessful NOT strut NOT deploy*",
        ]);
        let stent = queries(&[
            "\"IVC stent\"",
            "stent (IVC OR cava OR caval)",
            "stent (IVC OR cava OR caval) NOT filter",
            "stent (IVC OR cava OR caval) NOT filter NOT biliary",
            "stent (IVC OR cava OR caval) NOT filter NOT biliary NOT ureteral",
            "stent (IVC OR cava OR caval) NOT filter NOT biliary NOT ureteral NOT graft",
            "stent (IVC OR cava OR caval) NOT filter NOT biliary NOT ureteral NOT graft NOT \"not placed\"",
        ]);
        let palmaz = queries(&["palmaz", "palmaz NOT \"self expanding\"", "palmaz NOT \"self expanding\" NOT explant"]);
        let s = |name: &str, family, positives, hard_negatives, unlisted, background, refinements| ScenarioSpec {
            name: name.into(),
            family,
            positives,
            hard_negatives,
            unlisted,
            background,
            refinements,
        };
        CorpusSpec {
            scenarios: vec![
                s("anoxic_brain_injury", Family::AnoxicBrainInjury, 300, 150, 8, 150, anoxic),
                s("hepatic_arterial_infusion_pump", Family::HepaticArterialInfusionPump, 48, 30, 0, 24, pump),
                s("ivc_filter_retrieval", Family::IvcFilterRetrieval, 160, 90, 6, 80, filter),
                s("ivc_stent", Family::IvcStent, 40, 40, 3, 20, stent),
                s("palmaz_stent", Family::PalmazStent, 88, 20, 0, 44, palmaz),
            ],
            extra_background: 1000,
            start: default_start(),
            span_days: default_span_days(),
        }
    }
}

impl CorpusSpec {
    pub fn total_positives(&self) -> usize {
        self.scenarios.iter().map(|s| s.positives).sum()
    }

    pub fn total_docs(&self) -> usize {
        self.extra_background
            + self.scenarios.iter().map(|s| s.positives + s.hard_negatives + s.unlisted + s.background).sum::<usize>()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub docs: Vec<ReportDocument>,
    pub scenarios: Vec<GoldStandardScenario>,
}

struct Writer<'a> {
    rng: ChaCha8Rng,
    spec: &'a CorpusSpec,
    docs: Vec<ReportDocument>,
}

impl Writer<'_> {
    fn report(&mut self, studies: &[Study], template: Template) -> String {
        let rng = &mut self.rng;
        let (description, modality) = *studies.choose(rng).unwrap();
        let mut findings = String::new();
        for _ in 0..rng.gen_range(0..=2) {
            findings.push_str(FILLER.choose(rng).unwrap());
            findings.push(' ');
        }
        findings.push_str(template.0);
        if rng.gen_bool(0.5) {
            findings.push(' ');
            findings.push_str(FILLER.choose(rng).unwrap());
        }
        let offset = TimeDelta::seconds(rng.gen_range(0..i64::from(self.spec.span_days) * 86_400));
        let study = self.spec.start + offset;
        let uploaded = study + TimeDelta::minutes(rng.gen_range(10..600));
        let dob = study - TimeDelta::days(rng.gen_range(18 * 365..90 * 365));
        let patient = format!("{:07}", rng.gen_range(0..10_000_000u32));
        let name = format!("{}, {}", LAST_NAMES.choose(rng).unwrap(), FIRST_NAMES.choose(rng).unwrap());
        let author = *AUTHORS.choose(rng).unwrap();
        let id = format!("E{:07}", self.docs.len() + 1);
        let doc = ReportDocument::new(id.clone())
            .with_identifier(names::PATIENT_ID, format!("MRN{patient}"))
            .with_text(names::PATIENT_NAME, name)
            .with_datetime(names::PATIENT_DOB, dob.date_naive().and_hms_opt(0, 0, 0).unwrap().and_utc())
            .with_text(names::STUDY_DESCRIPTION, description)
            .with_text(names::AUTHOR, author)
            .with_text(names::FINDINGS, findings)
            .with_text(names::IMPRESSION, template.1)
            .with_identifier(names::MODALITY, modality)
            .with_datetime(names::STUDY_DATETIME, study)
            .with_datetime(names::REPORT_UPLOAD_DATETIME, uploaded);
        self.docs.push(doc);
        id
    }

    fn batch(&mut self, studies: &[Study], templates: &[Template], n: usize) -> Vec<String> {
        (0..n).map(|i| self.report(studies, templates[i % templates.len()])).collect()
    }
}

/// Builds the corpus and gold standards. The same spec and seed always produce the
/// same documents in the same order.
pub fn generate_corpus(spec: &CorpusSpec, seed: u64) -> SyntheticCorpus {
    let mut w = Writer { rng: ChaCha8Rng::seed_from_u64(seed), spec, docs: Vec::with_capacity(spec.total_docs()) };
    let mut scenarios = Vec::new();
    for s in &spec.scenarios {
        let family = text(s.family);
        let positives = w.batch(family.positive_studies, family.positives, s.positives);
        let mut universe: BTreeSet<String> = positives.iter().cloned().collect();
        if !family.confounders.is_empty() {
            universe.extend(w.batch(family.negative_studies, family.confounders, s.hard_negatives));
        }
        universe.extend(w.batch(family.positive_studies, family.positives, s.unlisted));
        universe.extend(w.batch(BACKGROUND.positive_studies, BACKGROUND.positives, s.background));
        scenarios.push(GoldStandardScenario {
            name: s.name.clone(),
            positive_doc_ids: positives.into_iter().collect(),
            universe_doc_ids: universe,
            refinement_sequence: s.refinements.clone(),
        });
    }
    w.batch(BACKGROUND.positive_studies, BACKGROUND.positives, spec.extra_background);
    SyntheticCorpus { docs: w.docs, scenarios }
}
