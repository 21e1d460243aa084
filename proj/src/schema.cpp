#include "ehrq/schema.hpp"

#include <algorithm>
#include <stdexcept>

namespace ehrq {

std::string_view to_string(SemanticType t) {
    switch (t) {
        case SemanticType::id: return "id";
        case SemanticType::timestamp: return "timestamp";
        case SemanticType::numeric: return "numeric+unit";
        case SemanticType::categorical: return "categorical";
        case SemanticType::free_text: return "free_text";
        case SemanticType::note_path: return "note_path";
    }
    return "unknown";
}

std::optional<std::size_t> TableDescription::column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i].name == name) return i;
    return std::nullopt;
}

namespace {

using ST = SemanticType;

ColumnDescription col(std::string name, ST type, std::string description, bool nullable = false) {
    return ColumnDescription{std::move(name), type, std::move(description), nullable};
}

const char* kSubject = "A unique identifier for each patient in the dataset. Each patient only has one subject_id.";
const char* kHadm =
    "Hospital admission ID, a unique identifier for each hospital admission. This ID enables "
    "differentiation between multiple admissions for the same patient.";
const char* kStay = "ICU stay ID, a unique identifier for each stay in an intensive care unit.";

std::vector<TableDescription> build_schema() {
    std::vector<TableDescription> s;
    auto add = [&](std::string name, std::string summary, std::vector<ColumnDescription> cols) {
        s.push_back(TableDescription{name, name + ".csv", std::move(summary), std::move(cols)});
    };

    add("patients", "Demographics for each patient, one row per patient.",
        {col("subject_id", ST::id, kSubject),
         col("hadm_id", ST::id, "The patient's first hospital admission ID."),
         col("gender", ST::categorical, "Genotypical sex of the patient, 'F' or 'M'."),
         col("anchor_age", ST::numeric, "Patient age in years in the anchor year."),
         col("anchor_year", ST::numeric, "Shifted calendar year the anchor age refers to."),
         col("dod", ST::timestamp, "Date of death; empty when the patient is not known to have died.", true)});

    add("admissions", "Hospital admissions, one row per admission.",
        {col("subject_id", ST::id, kSubject),
         col("hadm_id", ST::id, kHadm),
         col("admittime", ST::timestamp,
             "Timestamp for the exact date and time when the patient was admitted to the hospital. This "
             "helps establish the start of a hospital stay."),
         col("dischtime", ST::timestamp,
             "Timestamp for the date and time when the patient was discharged from the hospital, marking the "
             "end of a specific admission period."),
         col("admission_type", ST::categorical,
             "Categorical field indicating the type of admission, such as \"emergency,\" \"urgent,\" or "
             "\"elective.\" This provides context on the reason or urgency of admission."),
         col("admission_location", ST::categorical,
             "Describes the location from which the patient was admitted, such as \"clinic referral,\" "
             "\"emergency department,\" or \"transfer from another facility.\""),
         col("discharge_location", ST::categorical, "Where the patient went after discharge, such as home or a skilled nursing facility."),
         col("insurance", ST::categorical, "Insurance category of the admission."),
         col("marital_status", ST::categorical, "Marital status recorded at admission."),
         col("race", ST::categorical, "Self-reported race.")});

    add("diagnoses", "Billed ICD diagnoses for each admission.",
        {col("subject_id", ST::id, kSubject), col("hadm_id", ST::id, kHadm),
         col("icd_code", ST::categorical, "ICD diagnosis code; join with d_icd_diagnoses on icd_code and icd_version."),
         col("icd_version", ST::id, "ICD version of the code, 9 or 10.")});

    add("d_icd_diagnoses", "Dictionary of ICD diagnosis codes.",
        {col("icd_code", ST::categorical, "ICD diagnosis code."),
         col("icd_version", ST::id, "ICD version of the code, 9 or 10."),
         col("long_title", ST::free_text, "Lowercase human-readable name of the diagnosis.")});

    add("labevents", "Laboratory measurements taken during admissions.",
        {col("subject_id", ST::id, kSubject), col("hadm_id", ST::id, kHadm),
         col("itemid", ST::id, "Lab test identifier; join with d_labitems on itemid to get the test name."),
         col("charttime", ST::timestamp, "Time the specimen was taken."),
         col("valuenum", ST::numeric, "Numeric result of the test."),
         col("valueuom", ST::categorical, "Unit of measurement of valuenum."),
         col("ref_range_lower", ST::numeric, "Lower bound of the normal reference range."),
         col("ref_range_upper", ST::numeric, "Upper bound of the normal reference range.")});

    add("d_labitems", "Dictionary of laboratory tests.",
        {col("itemid", ST::id, "Lab test identifier."),
         col("label", ST::free_text, "Lowercase canonical name of the lab test, e.g. red blood cell."),
         col("fluid", ST::categorical, "Specimen fluid, e.g. blood."),
         col("category", ST::categorical, "Lab category, e.g. hematology or chemistry.")});

    add("microbiology", "Microbiology tests and cultures.",
        {col("subject_id", ST::id, kSubject), col("hadm_id", ST::id, kHadm),
         col("charttime", ST::timestamp, "Time the specimen was taken."),
         col("spec_type_desc", ST::free_text, "Specimen type, e.g. blood or urine."),
         col("test_name", ST::free_text, "Lowercase name of the microbiology test.")});

    add("prescriptions", "Medication orders.",
        {col("subject_id", ST::id, kSubject), col("hadm_id", ST::id, kHadm),
         col("starttime", ST::timestamp, "Time the prescription started."),
         col("stoptime", ST::timestamp, "Time the prescription stopped; empty when still active at discharge.", true),
         col("drug", ST::free_text, "Lowercase generic drug name."),
         col("dose_val_rx", ST::numeric, "Prescribed dose amount."),
         col("dose_unit_rx", ST::categorical, "Unit of the prescribed dose."),
         col("route", ST::categorical, "Administration route, e.g. po or iv.")});

    add("procedures", "Billed ICD procedures for each admission.",
        {col("subject_id", ST::id, kSubject), col("hadm_id", ST::id, kHadm),
         col("icd_code", ST::categorical, "ICD procedure code; join with d_icd_procedures on icd_code and icd_version."),
         col("icd_version", ST::id, "ICD version of the code, 9 or 10.")});

    add("d_icd_procedures", "Dictionary of ICD procedure codes.",
        {col("icd_code", ST::categorical, "ICD procedure code."),
         col("icd_version", ST::id, "ICD version of the code, 9 or 10."),
         col("long_title", ST::free_text, "Lowercase human-readable name of the procedure.")});

    add("icustays", "ICU stays within hospital admissions.",
        {col("subject_id", ST::id, kSubject), col("hadm_id", ST::id, kHadm), col("stay_id", ST::id, kStay),
         col("first_careunit", ST::categorical, "First ICU care unit of the stay."),
         col("last_careunit", ST::categorical, "Last ICU care unit of the stay."),
         col("intime", ST::timestamp, "Time the patient entered the ICU."),
         col("outtime", ST::timestamp, "Time the patient left the ICU."),
         col("los", ST::numeric, "ICU length of stay in fractional days.")});

    add("inputevents", "Fluids and medications administered in the ICU.",
        {col("subject_id", ST::id, kSubject), col("hadm_id", ST::id, kHadm), col("stay_id", ST::id, kStay),
         col("starttime", ST::timestamp, "Time the input started."),
         col("itemid", ST::id, "Item identifier; join with d_items on itemid."),
         col("amount", ST::numeric, "Amount administered."),
         col("amountuom", ST::categorical, "Unit of amount."),
         col("patientweight", ST::numeric, "Patient weight in kg.")});

    add("d_items", "Dictionary of ICU charted, input and output items.",
        {col("itemid", ST::id, "Item identifier."),
         col("label", ST::free_text, "Lowercase name of the item."),
         col("abbreviation", ST::categorical, "Short name of the item."),
         col("category", ST::categorical, "Item category."),
         col("unitname", ST::categorical, "Unit of the item.")});

    add("outputevents", "Patient outputs recorded in the ICU.",
        {col("subject_id", ST::id, kSubject), col("hadm_id", ST::id, kHadm), col("stay_id", ST::id, kStay),
         col("charttime", ST::timestamp, "Time of the measurement."),
         col("itemid", ST::id, "Item identifier; join with d_items on itemid."),
         col("value", ST::numeric, "Measured output."),
         col("valueuom", ST::categorical, "Unit of value.")});

    add("chartevents", "Charted ICU observations such as vital signs.",
        {col("subject_id", ST::id, kSubject), col("hadm_id", ST::id, kHadm), col("stay_id", ST::id, kStay),
         col("charttime", ST::timestamp, "Time of the observation."),
         col("itemid", ST::id, "Item identifier; join with d_items on itemid."),
         col("value", ST::numeric, "Observed value."),
         col("valueuom", ST::categorical, "Unit of value.")});

    add("cxr_metadata", "Chest X-ray study metadata; link to admissions by subject_id and studydate within the admission.",
        {col("subject_id", ST::id, kSubject),
         col("study_id", ST::id, "Chest X-ray study identifier."),
         col("dicom_id", ST::id, "Image identifier within the study."),
         col("studydate", ST::timestamp, "Date of the study, YYYY-MM-DD."),
         col("studytime", ST::timestamp, "Time of the study, HH:MM:SS.")});

    add("cxr_record_list", "Chest X-ray report locations.",
        {col("subject_id", ST::id, kSubject),
         col("study_id", ST::id, "Chest X-ray study identifier; join with cxr_metadata on study_id."),
         col("dicom_id", ST::id, "Image identifier within the study."),
         col("path", ST::note_path, "Path of the radiology report text; read it with text_func(path, question).")});

    add("discharge", "Discharge summaries, one per admission.",
        {col("subject_id", ST::id, kSubject), col("hadm_id", ST::id, kHadm),
         col("charttime", ST::timestamp, "Time the note was charted."),
         col("storetime", ST::timestamp, "Time the note was stored."),
         col("text", ST::free_text, "Full discharge summary text; read it with text_func(text, question).")});
    return s;
}

std::vector<ForeignKey> build_foreign_keys() {
    std::vector<ForeignKey> fks;
    for (const auto& t : ehr_schema()) {
        if (t.table_name == "patients" || t.table_name.rfind("d_", 0) == 0) continue;
        if (t.column_index("subject_id")) fks.push_back({t.table_name, {"subject_id"}, "patients", {"subject_id"}});
        if (t.column_index("hadm_id") && t.table_name != "admissions")
            fks.push_back({t.table_name, {"hadm_id"}, "admissions", {"hadm_id"}});
        if (t.column_index("stay_id") && t.table_name != "icustays")
            fks.push_back({t.table_name, {"stay_id"}, "icustays", {"stay_id"}});
    }
    fks.push_back({"patients", {"hadm_id"}, "admissions", {"hadm_id"}});
    fks.push_back({"diagnoses", {"icd_code", "icd_version"}, "d_icd_diagnoses", {"icd_code", "icd_version"}});
    fks.push_back({"procedures", {"icd_code", "icd_version"}, "d_icd_procedures", {"icd_code", "icd_version"}});
    fks.push_back({"labevents", {"itemid"}, "d_labitems", {"itemid"}});
    for (const char* t : {"inputevents", "outputevents", "chartevents"})
        fks.push_back({t, {"itemid"}, "d_items", {"itemid"}});
    fks.push_back({"cxr_record_list", {"study_id"}, "cxr_metadata", {"study_id"}});
    return fks;
}

}  // namespace

const std::vector<TableDescription>& ehr_schema() {
    static const std::vector<TableDescription> schema = build_schema();
    return schema;
}

const TableDescription& table_description(std::string_view table_name) {
    for (const auto& t : ehr_schema())
        if (t.table_name == table_name) return t;
    throw std::out_of_range("unknown table: " + std::string(table_name));
}

bool is_ehr_table(std::string_view table_name) {
    const auto& s = ehr_schema();
    return std::any_of(s.begin(), s.end(), [&](const auto& t) { return t.table_name == table_name; });
}

const std::vector<ForeignKey>& foreign_keys() {
    static const std::vector<ForeignKey> fks = build_foreign_keys();
    return fks;
}

const std::vector<MergedView>& merged_views() {
    static const std::vector<MergedView> views = {
        {"diagnoses_merged", "diagnoses", "d_icd_diagnoses", {"icd_code", "icd_version"}, {"long_title"}},
        {"procedures_merged", "procedures", "d_icd_procedures", {"icd_code", "icd_version"}, {"long_title"}},
        {"labevents_merged", "labevents", "d_labitems", {"itemid"}, {"label", "fluid", "category"}},
    };
    return views;
}

const std::vector<LabReference>& lab_references() {
    static const std::vector<LabReference> labs = {
        {51279, "Red Blood Cell", "RBC", 4.2, 5.9, "m/uL", "Blood", "Hematology"},
        {51222, "Hemoglobin", "Hgb", 12.0, 17.5, "g/dL", "Blood", "Hematology"},
        {51221, "Hematocrit", "Hct", 36.0, 52.0, "%", "Blood", "Hematology"},
        {51301, "White Blood Cells", "WBC", 4.0, 11.0, "K/uL", "Blood", "Hematology"},
        {51265, "Platelet Count", "Plt", 150.0, 440.0, "K/uL", "Blood", "Hematology"},
        {50931, "Glucose", "Glucose", 70.0, 100.0, "mg/dL", "Blood", "Chemistry"},
        {50912, "Creatinine", "Creat", 0.5, 1.2, "mg/dL", "Blood", "Chemistry"},
        {50983, "Sodium", "Na", 133.0, 145.0, "mEq/L", "Blood", "Chemistry"},
        {50971, "Potassium", "Potassium", 3.3, 5.1, "mEq/L", "Blood", "Chemistry"},
        {51006, "Urea Nitrogen", "UreaN", 6.0, 20.0, "mg/dL", "Blood", "Chemistry"},
        {50902, "Chloride", "Cl", 96.0, 108.0, "mEq/L", "Blood", "Chemistry"},
        {50882, "Bicarbonate", "HCO3", 22.0, 32.0, "mEq/L", "Blood", "Chemistry"},
        {50893, "Calcium", "Calcium", 8.4, 10.3, "mg/dL", "Blood", "Chemistry"},
        {50970, "Phosphate", "Phos", 2.7, 4.5, "mg/dL", "Blood", "Chemistry"},
        {51003, "Troponin T", "cTropnT", 0.01, 0.04, "ng/mL", "Blood", "Chemistry"},
        {50813, "Lactate", "Lactate", 0.5, 2.0, "mmol/L", "Blood", "Blood Gas"},
        {50862, "Albumin", "Albumin", 3.5, 5.2, "g/dL", "Blood", "Chemistry"},
        {51237, "International Normalized Ratio", "INR", 0.9, 1.1, "ratio", "Blood", "Hematology"},
    };
    return labs;
}

const std::vector<std::string>& findings_vocabulary() {
    static const std::vector<std::string> v = {"effusion",  "pneumothorax",  "atelectasis",      "cardiomegaly",
                                               "edema",     "consolidation", "no acute findings"};
    return v;
}

}  // namespace ehrq
