#include <algorithm>
#include <cmath>
#include <set>

#include "ehrq/database.hpp"
#include "ehrq/errors.hpp"
#include "ehrq/util.hpp"

namespace ehrq {

namespace {

constexpr std::int64_t kAnchorSubject = 10054277;
constexpr std::int64_t kAnchorHadm = 27607912;
constexpr std::int64_t kDay = 86400;

struct Code {
    const char* code;
    std::int64_t version;
    const char* title;
};

const std::vector<Code>& diagnosis_codes() {
    static const std::vector<Code> v = {
        {"R109", 10, "Abdominal Pain"},
        {"78900", 9, "Abdominal Pain"},
        {"I10", 10, "Hypertension"},
        {"4019", 9, "Hypertension"},
        {"E119", 10, "Type 2 Diabetes Mellitus"},
        {"J189", 10, "Pneumonia"},
        {"I509", 10, "Congestive Heart Failure"},
        {"N179", 10, "Acute Kidney Failure"},
        {"A419", 10, "Sepsis"},
        {"I4891", 10, "Atrial Fibrillation"},
        {"J449", 10, "Chronic Obstructive Pulmonary Disease"},
        {"N390", 10, "Urinary Tract Infection"},
        {"D649", 10, "Anemia"},
        {"E785", 10, "Hyperlipidemia"},
        {"K509", 10, "Crohn's Disease"},
    };
    return v;
}

const std::vector<Code>& procedure_codes() {
    static const std::vector<Code> v = {
        {"0BH17EZ", 10, "Insertion of Endotracheal Airway"},
        {"5A1955Z", 10, "Mechanical Ventilation"},
        {"02HV33Z", 10, "Central Venous Catheter Placement"},
        {"0DJ08ZZ", 10, "Upper Gastrointestinal Endoscopy"},
        {"3E0G76Z", 10, "Enteral Nutrition"},
        {"B246ZZZ", 10, "Echocardiography"},
        {"0W9G3ZZ", 10, "Paracentesis"},
        {"0W993ZZ", 10, "Thoracentesis"},
    };
    return v;
}

struct Drug {
    const char* name;
    const char* unit;
    const char* route;
    std::vector<double> doses;
};

const std::vector<Drug>& drugs() {
    static const std::vector<Drug> v = {
        {"Acetaminophen", "mg", "po", {325, 650, 1000}},
        {"Heparin", "UNIT", "sc", {5000}},
        {"Insulin", "UNIT", "sc", {2, 4, 6, 10}},
        {"Furosemide", "mg", "iv", {20, 40, 80}},
        {"Metoprolol", "mg", "po", {12.5, 25, 50}},
        {"Aspirin", "mg", "po", {81, 325}},
        {"Vancomycin", "mg", "iv", {750, 1000, 1250}},
        {"Ondansetron", "mg", "iv", {4, 8}},
        {"Pantoprazole", "mg", "po", {40}},
        {"Lisinopril", "mg", "po", {5, 10, 20}},
        {"Atorvastatin", "mg", "po", {10, 40, 80}},
        {"Warfarin", "mg", "po", {1, 2.5, 5}},
    };
    return v;
}

struct MicroTest {
    const char* name;
    const char* specimen;
};

const std::vector<MicroTest>& micro_tests() {
    static const std::vector<MicroTest> v = {
        {"Blood Culture", "Blood"},       {"Urine Culture", "Urine"},   {"MRSA Screen", "Swab"},
        {"Sputum Culture", "Sputum"},     {"C. Difficile Toxin", "Stool"}, {"Gram Stain", "Sputum"},
    };
    return v;
}

struct Item {
    std::int64_t itemid;
    const char* label;
    const char* abbreviation;
    const char* category;
    const char* unit;
    double lo, hi;
};

const std::vector<Item>& input_items() {
    static const std::vector<Item> v = {
        {220949, "Dextrose 5%", "D5W", "Fluids/Intake", "mL", 50, 1000},
        {225158, "NaCl 0.9%", "NS", "Fluids/Intake", "mL", 100, 1000},
        {221906, "Norepinephrine", "Levophed", "Medications", "mg", 0.5, 8},
        {222168, "Propofol", "Propofol", "Medications", "mg", 10, 400},
    };
    return v;
}

const std::vector<Item>& output_items() {
    static const std::vector<Item> v = {
        {226559, "Foley", "Foley", "Output", "mL", 50, 800},
        {226560, "Void", "Void", "Output", "mL", 100, 600},
    };
    return v;
}

const std::vector<Item>& chart_items() {
    static const std::vector<Item> v = {
        {220045, "Heart Rate", "HR", "Routine Vital Signs", "bpm", 50, 130},
        {220210, "Respiratory Rate", "RR", "Respiratory", "insp/min", 10, 32},
        {220277, "O2 Saturation Pulse Oximetry", "SpO2", "Respiratory", "%", 86, 100},
        {223761, "Temperature Fahrenheit", "Temp F", "Routine Vital Signs", "F", 96, 103},
    };
    return v;
}

const std::vector<std::string> kAdmissionTypes = {"emergency", "urgent", "elective", "observation"};
const std::vector<std::string> kAdmitLocations = {"emergency room", "clinic referral", "transfer from hospital",
                                                  "physician referral"};
const std::vector<std::string> kDischargeLocations = {"home", "home health care", "skilled nursing facility",
                                                      "rehab"};
const std::vector<std::string> kInsurance = {"medicare", "medicaid", "other"};
const std::vector<std::string> kMarital = {"married", "single", "widowed", "divorced"};
const std::vector<std::string> kRace = {"white", "black/african american", "hispanic/latino", "asian", "other"};
const std::vector<std::string> kCareUnits = {"medical intensive care unit (micu)", "surgical intensive care unit (sicu)",
                                             "cardiac vascular intensive care unit (cvicu)"};
const std::vector<std::string> kIndications = {"Shortness of breath.", "Fever.", "Chest pain.", "Cough.",
                                               "Hypoxia.", "Evaluate for interval change."};
const std::vector<std::string> kComplaints = {"shortness of breath", "abdominal pain", "chest pain", "fever",
                                              "fatigue", "altered mental status", "dizziness", "cough"};
const std::vector<std::string> kAllergies = {"No Known Allergies / Adverse Drug Reactions", "Penicillins",
                                             "Sulfa (Sulfonamide Antibiotics)", "Codeine"};
const std::vector<std::string> kFamilyHistory = {"Mother with hypertension. Father with coronary artery disease.",
                                                 "Noncontributory.", "Father with diabetes.",
                                                 "Sister with breast cancer."};
const std::vector<std::string> kCourseOutcome = {"improved", "gradually improved", "remained stable"};
const std::vector<std::string> kConditions = {"Improving.", "Stable.", "Fair, improving.", "Guarded."};

std::string finding_sentence(const std::string& f, Rng& rng) {
    if (f == "effusion") return rng.chance(0.5) ? "Small left pleural effusion is present." : "Moderate right pleural effusion.";
    if (f == "pneumothorax") return "Small apical pneumothorax on the right.";
    if (f == "atelectasis") return "Bibasilar atelectasis.";
    if (f == "cardiomegaly") return "Mild cardiomegaly.";
    if (f == "edema") return "Mild pulmonary edema.";
    return "Focal consolidation in the right lower lobe.";
}

std::string capitalize(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

std::string cxr_report(Rng& rng) {
    std::vector<std::string> abnormal(findings_vocabulary().begin(), findings_vocabulary().end() - 1);
    std::string text = "FINAL REPORT\nEXAMINATION: CHEST (PA AND LAT)\nINDICATION: " + rng.pick(kIndications) +
                       "\nCOMPARISON: None.\n\nFINDINGS:\n";
    if (rng.chance(0.3)) {
        text += "The lungs are clear. The cardiomediastinal silhouette is within normal limits.\n\nIMPRESSION:\nNo acute findings.\n";
        return text;
    }
    rng.shuffle(abnormal);
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 3));
    std::vector<std::string> found(abnormal.begin(), abnormal.begin() + static_cast<std::ptrdiff_t>(n));
    std::sort(found.begin(), found.end(), [](const std::string& a, const std::string& b) {
        const auto& v = findings_vocabulary();
        return std::find(v.begin(), v.end(), a) < std::find(v.begin(), v.end(), b);
    });
    for (const auto& f : found) text += finding_sentence(f, rng) + "\n";
    text += "\nIMPRESSION:\n";
    std::vector<std::string> caps;
    for (const auto& f : found) caps.push_back(f);
    text += capitalize(join(caps, ", ")) + ".\n";
    return text;
}

double round_to(double v, int decimals) {
    const double f = std::pow(10.0, decimals);
    return std::round(v * f) / f;
}

struct LabDraw {
    const LabReference* ref;
    std::int64_t time;
    double value;
};

std::string lab_line_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s(buf);
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
    return s;
}

std::string hour_of(std::int64_t t) {
    std::int64_t s = ((t % kDay) + kDay) % kDay;
    int h = static_cast<int>(s / 3600), m = static_cast<int>(s / 60 % 60);
    const char* ampm = h < 12 ? "AM" : "PM";
    int h12 = h % 12 == 0 ? 12 : h % 12;
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d:%02d%s", h12, m, ampm);
    return buf;
}

}  // namespace

Database generate_synthetic(std::uint64_t seed, const SynthScale& scale) {
    scale.validate();
    const std::int64_t window_start = days_from_civil(static_cast<int>(scale.year_window.lo), 1, 1) * kDay;
    const std::int64_t window_end = days_from_civil(static_cast<int>(scale.year_window.hi) + 1, 1, 1) * kDay;
    const std::int64_t window_days = (window_end - window_start) / kDay;
    if (window_days / scale.admissions_per_patient.hi < 14)
        throw ConfigError("invalid scale: year_window too short for admissions_per_patient");

    Rng rng(seed);
    Database db;
    db.rng_seed = seed;
    db.scale = scale;

    auto make = [&](const std::string& name) -> Table& {
        Table t;
        t.name = name;
        for (const auto& c : table_description(name).columns) t.columns.push_back(c.name);
        return db.tables.emplace(name, std::move(t)).first->second;
    };
    for (const auto& d : ehr_schema()) make(d.table_name);
    auto& patients = db.tables["patients"].rows;
    auto& admissions = db.tables["admissions"].rows;
    auto& diagnoses = db.tables["diagnoses"].rows;
    auto& procedures = db.tables["procedures"].rows;
    auto& labevents = db.tables["labevents"].rows;
    auto& micro = db.tables["microbiology"].rows;
    auto& rx = db.tables["prescriptions"].rows;
    auto& icu = db.tables["icustays"].rows;
    auto& inputs = db.tables["inputevents"].rows;
    auto& outputs = db.tables["outputevents"].rows;
    auto& charts = db.tables["chartevents"].rows;
    auto& cxr_meta = db.tables["cxr_metadata"].rows;
    auto& cxr_list = db.tables["cxr_record_list"].rows;
    auto& discharge = db.tables["discharge"].rows;

    for (const auto& c : diagnosis_codes())
        db.tables["d_icd_diagnoses"].rows.push_back({std::string(c.code), c.version, std::string(c.title)});
    for (const auto& c : procedure_codes())
        db.tables["d_icd_procedures"].rows.push_back({std::string(c.code), c.version, std::string(c.title)});
    for (const auto& l : lab_references())
        db.tables["d_labitems"].rows.push_back({l.itemid, l.label, l.fluid, l.category});
    for (const auto* group : {&input_items(), &output_items(), &chart_items()})
        for (const auto& it : *group)
            db.tables["d_items"].rows.push_back({it.itemid, std::string(it.label), std::string(it.abbreviation),
                                                 std::string(it.category), std::string(it.unit)});

    std::int64_t admission_counter = 0, stay_counter = 0, study_counter = 0;
    std::set<std::int64_t> used_subjects{kAnchorSubject};

    for (std::int64_t p = 0; p < scale.n_patients; ++p) {
        std::int64_t subject_id = kAnchorSubject;
        if (p > 0) {
            subject_id = 10000000 + p * 1000 + rng.uniform_int(0, 999);
            while (used_subjects.count(subject_id)) ++subject_id;
            used_subjects.insert(subject_id);
        }
        const std::string gender = rng.chance(0.5) ? "F" : "M";
        const std::int64_t age = rng.uniform_int(18, 89);
        const std::int64_t n_adm = p == 0 ? 1 : rng.uniform_int(scale.admissions_per_patient.lo, scale.admissions_per_patient.hi);
        const std::string marital = rng.pick(kMarital);
        const std::string race = rng.pick(kRace);
        const std::string insurance = rng.pick(kInsurance);

        const std::int64_t slot_days = window_days / n_adm;
        std::int64_t first_hadm = 0, first_admit = 0, last_disch = 0;
        for (std::int64_t a = 0; a < n_adm; ++a) {
            const std::int64_t hadm_id = p == 0 ? kAnchorHadm : 20000001 + admission_counter * 37;
            const std::int64_t admit = window_start + (a * slot_days + rng.uniform_int(0, slot_days - 12)) * kDay +
                                       rng.uniform_int(0, kDay - 1);
            const std::int64_t disch = admit + rng.uniform_int(2, 9) * kDay + rng.uniform_int(0, 12 * 3600);
            if (a == 0) {
                first_hadm = hadm_id;
                first_admit = admit;
            }
            last_disch = disch;
            const std::string adm_type = rng.pick(kAdmissionTypes);
            const std::string disch_loc = rng.pick(kDischargeLocations);
            admissions.push_back({subject_id, hadm_id, format_timestamp(admit), format_timestamp(disch), adm_type,
                                  rng.pick(kAdmitLocations), disch_loc, insurance, marital, race});
            auto during = [&](std::int64_t lo_pad = 0) { return rng.uniform_int(admit + lo_pad, disch - 1); };

            // Diagnoses and procedures.
            std::vector<std::size_t> dx_idx(diagnosis_codes().size());
            for (std::size_t i = 0; i < dx_idx.size(); ++i) dx_idx[i] = i;
            rng.shuffle(dx_idx);
            const auto n_dx = static_cast<std::size_t>(rng.uniform_int(1, 4));
            std::vector<std::string> dx_titles;
            for (std::size_t i = 0; i < n_dx; ++i) {
                const auto& c = diagnosis_codes()[dx_idx[i]];
                diagnoses.push_back({subject_id, hadm_id, std::string(c.code), c.version});
                dx_titles.push_back(c.title);
            }
            std::vector<std::size_t> pr_idx(procedure_codes().size());
            for (std::size_t i = 0; i < pr_idx.size(); ++i) pr_idx[i] = i;
            rng.shuffle(pr_idx);
            const auto n_pr = static_cast<std::size_t>(rng.uniform_int(0, 2));
            for (std::size_t i = 0; i < n_pr; ++i) {
                const auto& c = procedure_codes()[pr_idx[i]];
                procedures.push_back({subject_id, hadm_id, std::string(c.code), c.version});
            }

            // Labs, in strictly increasing chart time.
            const auto n_labs = rng.uniform_int(scale.labs_per_admission.lo, scale.labs_per_admission.hi);
            std::vector<LabDraw> labs;
            std::vector<std::int64_t> times;
            for (std::int64_t i = 0; i < n_labs; ++i) times.push_back(during(1800));
            std::sort(times.begin(), times.end());
            for (std::size_t i = 1; i < times.size(); ++i) times[i] = std::max(times[i], times[i - 1] + 60);
            for (std::int64_t i = 0; i < n_labs; ++i) {
                const auto& ref = rng.pick(lab_references());
                double v;
                const double u = rng.uniform();
                if (rng.chance(0.7)) v = ref.ref_range_lower + u * (ref.ref_range_upper - ref.ref_range_lower);
                else if (rng.chance(0.5)) v = ref.ref_range_lower * (0.5 + 0.5 * u);
                else v = ref.ref_range_upper * (1.0 + u);
                v = round_to(v, ref.ref_range_upper >= 1.0 ? 2 : 3);
                labs.push_back({&ref, times[static_cast<std::size_t>(i)], v});
                labevents.push_back({subject_id, hadm_id, ref.itemid, format_timestamp(times[static_cast<std::size_t>(i)]), v,
                                     ref.valueuom, ref.ref_range_lower, ref.ref_range_upper});
            }

            // Microbiology; early admissions cycle through every test so the
            // dictionary values all occur in the data.
            auto n_micro = rng.uniform_int(0, 2);
            if (admission_counter < static_cast<std::int64_t>(micro_tests().size())) n_micro = std::max<std::int64_t>(n_micro, 1);
            for (std::int64_t i = 0; i < n_micro; ++i) {
                const auto& t = (i == 0 && admission_counter < static_cast<std::int64_t>(micro_tests().size()))
                                    ? micro_tests()[static_cast<std::size_t>(admission_counter)]
                                    : rng.pick(micro_tests());
                micro.push_back({subject_id, hadm_id, format_timestamp(during()), std::string(t.specimen), std::string(t.name)});
            }

            // Prescriptions; the first drug cycles through the formulary.
            std::vector<std::size_t> drug_idx(drugs().size());
            for (std::size_t i = 0; i < drug_idx.size(); ++i) drug_idx[i] = i;
            rng.shuffle(drug_idx);
            const auto cyc = static_cast<std::size_t>(admission_counter) % drugs().size();
            std::iter_swap(drug_idx.begin(), std::find(drug_idx.begin(), drug_idx.end(), cyc));
            const auto n_rx = static_cast<std::size_t>(rng.uniform_int(1, 4));
            std::vector<std::string> discharge_meds;
            for (std::size_t i = 0; i < n_rx; ++i) {
                const auto& d = drugs()[drug_idx[i]];
                const std::int64_t start = during();
                Cell stop = rng.chance(0.1) ? Cell{} : Cell{format_timestamp(start + rng.uniform_int(1, 3) * kDay)};
                const double dose = rng.pick(d.doses);
                rx.push_back({subject_id, hadm_id, format_timestamp(start), stop, std::string(d.name), dose,
                              std::string(d.unit), std::string(d.route)});
                discharge_meds.push_back(std::to_string(i + 1) + ". " + d.name + " " + lab_line_value(dose) + " " +
                                         d.unit + " " + capitalize(d.route) + " DAILY");
            }

            // ICU stay with charted events.
            if (rng.chance(0.45)) {
                const std::int64_t stay_id = 30000000 + stay_counter++;
                const std::int64_t in = rng.uniform_int(admit, admit + (disch - admit) / 3);
                const std::int64_t out = rng.uniform_int(in + 6 * 3600, disch);
                const std::string unit = rng.pick(kCareUnits);
                icu.push_back({subject_id, hadm_id, stay_id, unit, rng.chance(0.8) ? unit : rng.pick(kCareUnits),
                               format_timestamp(in), format_timestamp(out), round_to(static_cast<double>(out - in) / kDay, 2)});
                const auto weight = round_to(50.0 + rng.uniform() * 60.0, 1);
                for (std::int64_t i = rng.uniform_int(0, 3); i > 0; --i) {
                    const auto& it = rng.pick(input_items());
                    inputs.push_back({subject_id, hadm_id, stay_id, format_timestamp(rng.uniform_int(in, out)), it.itemid,
                                      round_to(it.lo + rng.uniform() * (it.hi - it.lo), 2), std::string(it.unit), weight});
                }
                for (std::int64_t i = rng.uniform_int(0, 3); i > 0; --i) {
                    const auto& it = rng.pick(output_items());
                    outputs.push_back({subject_id, hadm_id, stay_id, format_timestamp(rng.uniform_int(in, out)), it.itemid,
                                       round_to(it.lo + rng.uniform() * (it.hi - it.lo), 1), std::string(it.unit)});
                }
                for (std::int64_t i = rng.uniform_int(2, 6); i > 0; --i) {
                    const auto& it = rng.pick(chart_items());
                    charts.push_back({subject_id, hadm_id, stay_id, format_timestamp(rng.uniform_int(in, out)), it.itemid,
                                      round_to(it.lo + rng.uniform() * (it.hi - it.lo), 1), std::string(it.unit)});
                }
            }

            // Chest X-ray studies inside the admission window.
            for (std::int64_t i = rng.uniform_int(0, scale.notes_per_admission); i > 0; --i) {
                const std::int64_t study_id = 50000000 + study_counter;
                const std::int64_t dicom_id = 60000000 + study_counter;
                ++study_counter;
                const std::int64_t t = during();
                cxr_meta.push_back({subject_id, study_id, dicom_id, format_date(t), format_time_of_day(t)});
                const std::string path = "notes/cxr/p" + std::to_string(subject_id) + "/s" + std::to_string(study_id) + ".txt";
                cxr_list.push_back({subject_id, study_id, dicom_id, path});
                db.notes.emplace(path, cxr_report(rng));
            }

            // Discharge summary; admission-lab timestamps are redacted.
            std::string lab_lines;
            std::size_t shown = 0;
            for (const auto& l : labs) {
                if (shown % 4 == 0) lab_lines += (shown ? "\n___ " : "___ ") + hour_of(l.time) + " BLOOD";
                const bool abnormal = l.value < l.ref->ref_range_lower || l.value > l.ref->ref_range_upper;
                lab_lines += " " + l.ref->abbreviation + "-" + lab_line_value(l.value) + (abnormal ? "*" : "");
                if (++shown == 8) break;
            }
            if (lab_lines.empty()) lab_lines = "None.";
            const std::string complaint = rng.pick(kComplaints);
            const std::string on_admission = drugs()[rng.index(drugs().size())].name;
            std::string text;
            text += "Name:  ___                 Unit No:   ___\n\n";
            text += "Admission Date:  ___              Discharge Date:   ___\n\n";
            text += "Sex:   " + gender + "\n\nService: MEDICINE\n\n";
            text += "Allergies:\n" + rng.pick(kAllergies) + "\n\n";
            text += "Chief Complaint:\n" + capitalize(complaint) + "\n\n";
            text += "History of Present Illness:\n" + std::string(gender == "F" ? "Ms." : "Mr.") + " ___ is a " +
                    std::to_string(age) + " year old " + (gender == "F" ? "woman" : "man") + " with a history of " +
                    to_lower(dx_titles.back()) + " who presents with " + complaint + ".\n\n";
            text += "Family History:\n" + rng.pick(kFamilyHistory) + "\n\n";
            text += "Medications on Admission:\n1. " + on_admission + " DAILY\n\n";
            text += "Pertinent Results:\nADMISSION LABS:\n" + lab_lines + "\n\n";
            text += "Brief Hospital Course:\nThe patient was treated for " + to_lower(dx_titles.front()) + ". Symptoms " +
                    rng.pick(kCourseOutcome) + " during the stay.\n\n";
            text += "Discharge Medications:\n" + join(discharge_meds, "\n") + "\n\n";
            text += "Discharge Disposition:\n" + capitalize(disch_loc) + "\n\n";
            text += "Discharge Diagnosis:\n" + join(dx_titles, "\n") + "\n\n";
            text += "Discharge Condition:\n" + rng.pick(kConditions) + "\n";
            discharge.push_back({subject_id, hadm_id, format_timestamp(disch),
                                 format_timestamp(disch + rng.uniform_int(3600, 20 * 3600)), text});
            ++admission_counter;
        }
        int year;
        unsigned m, d;
        civil_from_days(first_admit / kDay, year, m, d);
        Cell dod = rng.chance(0.08) ? Cell{format_date(last_disch + rng.uniform_int(1, 400) * kDay)} : Cell{};
        patients.push_back({subject_id, first_hadm, gender, age, static_cast<std::int64_t>(year), dod});
    }
    return db;
}

}  // namespace ehrq
