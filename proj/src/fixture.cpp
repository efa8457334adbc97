// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#include "cbrsql/fixture.hpp"

#include <array>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "cbrsql/sql.hpp"
#include "cbrsql/util.hpp"

namespace cbrsql {

using nlohmann::json;

namespace {

constexpr int kValuesPerPool = 12;
constexpr int kCorpusValues = 10;  // values 10 and 11 are held out

// Entity pools. Each pool fills one lookup-eligible column; value i occupies
// exactly i+1 database rows, so counts, extrema and averages all separate the
// values. The variant spelling stays off-database and shares at least one
// token with its canonical form.
struct PoolSpec {
  const char* category;
  const char* table;
  const char* column;
  int subject_base;  // SUBJECT_ID block start; HADM_ID = SUBJECT_ID + 50000
  std::array<const char*, kValuesPerPool> values;
  std::array<const char*, kValuesPerPool> variants;
};

enum PoolId {
  kDrug = 0,
  kCondA,
  kCondB,
  kProc,
  kMeas,
  kEth,
  kLoc,
  kName,
  kPoolCount
};

const std::array<PoolSpec, kPoolCount> kPools = {{
    {"DRUG",
     "PRESCRIPTIONS",
     "DRUG",
     1000,
     {"Aspirin", "Warfarin", "Heparin", "Insulin", "Metformin", "Digoxin",
      "Furosemide", "Amiodarone", "Clopidogrel", "Atorvastatin", "Prednisone",
      "Lisinopril"},
     {"aspirin ec", "warfarin sodium", "heparin flush", "insulin human",
      "metformin hcl", "digoxin elixir", "furosemide inj", "amiodarone hcl",
      "clopidogrel tab", "atorvastatin oral", "prednisone taper",
      "lisinopril daily"}},
    {"CONDITION",
     "DEMOGRAPHIC",
     "DIAGNOSIS",
     2000,
     {"Sepsis", "Pneumonia", "Stroke", "Asthma", "Cirrhosis", "Pancreatitis",
      "Endocarditis", "Meningitis", "Appendicitis", "Cellulitis",
      "Hypertension", "Bronchitis"},
     {"sepsis syndrome", "pneumonia bacterial", "stroke ischemic",
      "asthma flare", "cirrhosis liver", "pancreatitis acute",
      "endocarditis infective", "meningitis viral", "appendicitis sudden",
      "cellulitis leg", "hypertension benign", "bronchitis chronic"}},
    {"CONDITION",
     "DIAGNOSES",
     "SHORT_TITLE",
     3000,
     {"Acute kidney failure", "Chronic heart failure", "Atrial fibrillation",
      "Diabetes mellitus", "Urinary tract infection", "Respiratory failure",
      "Anemia of chronic disease", "Pleural effusion", "Cardiac arrest",
      "Septic shock", "Acute pancreatitis", "Intestinal obstruction"},
     {"acute kidney failure nos", "chronic heart failure nos",
      "atrial fibrillation paroxysmal", "diabetes mellitus type",
      "urinary tract infection site", "respiratory failure sudden",
      "anemia of chronic illness", "pleural effusion left",
      "cardiac arrest witnessed", "septic shock severe",
      "acute pancreatitis gallstone", "intestinal obstruction partial"}},
    {"PROCEDURE",
     "PROCEDURES",
     "LONG_TITLE",
     4000,
     {"Venous catheterization", "Coronary artery bypass", "Hip replacement",
      "Knee arthroscopy", "Cardiac pacemaker insertion", "Spinal fusion",
      "Gastric bypass", "Appendectomy", "Cholecystectomy", "Tracheostomy",
      "Hemodialysis", "Thoracentesis"},
     {"venous catheterization nec", "coronary artery bypass graft",
      "hip replacement total", "knee arthroscopy repair",
      "cardiac pacemaker insertion dual", "spinal fusion lumbar",
      "gastric bypass open", "appendectomy laparoscopic",
      "cholecystectomy open", "tracheostomy temporary",
      "hemodialysis session", "thoracentesis guided"}},
    {"MEASUREMENT",
     "LAB",
     "LABEL",
     5000,
     {"Glucose", "Creatinine", "Hemoglobin", "Platelet Count", "Potassium",
      "Sodium", "Lactate", "Bilirubin", "Troponin", "Albumin", "Ferritin",
      "Amylase"},
     {"glucose serum", "creatinine blood", "hemoglobin level",
      "platelet count auto", "potassium whole", "sodium serum",
      "lactate arterial", "bilirubin total", "troponin level",
      "albumin serum", "ferritin level", "amylase fluid"}},
    {"ETHNICITY",
     "DEMOGRAPHIC",
     "ETHNICITY",
     7000,
     {"HISPANIC", "ASIAN", "PORTUGUESE", "CARIBBEAN", "POLISH", "BRAZILIAN",
      "KOREAN", "VIETNAMESE", "RUSSIAN", "GREEK", "ALBANIAN", "FILIPINO"},
     {"hispanic latino", "asian pacific", "portuguese european",
      "caribbean island", "polish speaking", "brazilian south",
      "korean speaking", "vietnamese american", "russian federation",
      "greek orthodox", "albanian balkan", "filipino islander"}},
    {"LOCATION",
     "DEMOGRAPHIC",
     "ADMISSION_LOCATION",
     8000,
     {"EMERGENCY ROOM ADMIT", "TRANSFER FROM HOSPITAL", "CLINIC REFERRAL",
      "PHYS REFERRAL", "TRANSFER FROM SKILLED NURSING", "HMO REFERRAL",
      "WALK IN ADMIT", "TRSF WITHIN FACILITY", "INFO NOT AVAILABLE",
      "OBSERVATION UNIT", "DIRECT ADMIT", "AMBULANCE ARRIVAL"},
     {"emergency room admission", "transfer from hospital ward",
      "clinic referral premature", "phys referral normal",
      "transfer from skilled nurse", "hmo referral sick",
      "walk in admission", "trsf within this facility",
      "info not available yet", "observation unit stay",
      "direct admit bed", "ambulance arrival night"}},
    {"NAME",
     "DEMOGRAPHIC",
     "NAME",
     9000,
     {"Aaron Webster", "Bianca Moreno", "Colin Hartley", "Dora Quimby",
      "Elias Fontaine", "Farah Osman", "Gideon Pratt", "Helena Vargas",
      "Ivo Santana", "June Okafor", "Kofi Mensah", "Lena Petrova"},
     {"aaron webster jr", "bianca moreno diaz", "colin hartley ii",
      "dora quimby rose", "elias fontaine sr", "farah osman ali",
      "gideon pratt lee", "helena vargas cruz", "ivo santana reyes",
      "june okafor ada", "kofi mensah jr", "lena petrova anna"}},
}};

// The 20 SQL structures. {v} is replaced by the entity value — lowercased in
// the question, verbatim in the SQL. Structures sharing a pool differ in
// aggregation, selected columns, joined tables or constant filters so their
// masked forms stay far apart.
struct StructureSpec {
  int pool;
  const char* question;
  const char* sql;
};

const std::array<StructureSpec, 20> kStructures = {{
    {kDrug, "how many patients were prescribed {v}?",
     "SELECT COUNT ( DISTINCT PRESCRIPTIONS.\"SUBJECT_ID\" ) FROM PRESCRIPTIONS "
     "WHERE PRESCRIPTIONS.\"DRUG\" = \"{v}\""},
    {kDrug, "what dose of {v} was prescribed to patients?",
     "SELECT DRUG_DOSE FROM PRESCRIPTIONS WHERE DRUG = \"{v}\" AND DRUG_TYPE = "
     "\"BASE\""},
    {kDrug, "what is the highest dose value of {v} given to male patients?",
     "SELECT MAX ( PRESCRIPTIONS.\"DOSE_VAL\" ) FROM PRESCRIPTIONS INNER JOIN "
     "DEMOGRAPHIC ON PRESCRIPTIONS.HADM_ID = DEMOGRAPHIC.HADM_ID WHERE "
     "PRESCRIPTIONS.\"DRUG\" = \"{v}\" AND DEMOGRAPHIC.\"GENDER\" = \"M\""},
    {kCondA, "how many patients had a primary disease of {v}?",
     "SELECT COUNT ( DISTINCT DEMOGRAPHIC.\"SUBJECT_ID\" ) FROM DEMOGRAPHIC "
     "WHERE DEMOGRAPHIC.\"DIAGNOSIS\" = \"{v}\""},
    {kCondA, "list the age and insurance of patients diagnosed with {v}.",
     "SELECT AGE , INSURANCE FROM DEMOGRAPHIC WHERE DIAGNOSIS = \"{v}\""},
    {kCondA,
     "what is the average age of patients admitted under emergency for {v}?",
     "SELECT AVG ( DEMOGRAPHIC.\"AGE\" ) FROM DEMOGRAPHIC WHERE "
     "DEMOGRAPHIC.\"DIAGNOSIS\" = \"{v}\" AND DEMOGRAPHIC.\"ADMISSION_TYPE\" = "
     "\"EMERGENCY\""},
    {kCondB, "count the number of patients whose diagnosis short title is {v}.",
     "SELECT COUNT ( DISTINCT DIAGNOSES.\"SUBJECT_ID\" ) FROM DIAGNOSES WHERE "
     "DIAGNOSES.\"SHORT_TITLE\" = \"{v}\""},
    {kCondB, "what is the minimum age of patients diagnosed with {v}?",
     "SELECT MIN ( DEMOGRAPHIC.\"AGE\" ) FROM DEMOGRAPHIC INNER JOIN DIAGNOSES "
     "ON DEMOGRAPHIC.HADM_ID = DIAGNOSES.HADM_ID WHERE DIAGNOSES.\"SHORT_TITLE\" "
     "= \"{v}\""},
    {kProc, "how many patients underwent {v}?",
     "SELECT COUNT ( DISTINCT PROCEDURES.\"SUBJECT_ID\" ) FROM PROCEDURES WHERE "
     "PROCEDURES.\"LONG_TITLE\" = \"{v}\""},
    {kProc, "what is the icd9 code of the procedure {v}?",
     "SELECT ICD9_CODE FROM PROCEDURES WHERE LONG_TITLE = \"{v}\""},
    {kProc,
     "what is the longest stay in days among patients who underwent {v}?",
     "SELECT MAX ( DEMOGRAPHIC.\"DAYS_STAY\" ) FROM DEMOGRAPHIC INNER JOIN "
     "PROCEDURES ON DEMOGRAPHIC.HADM_ID = PROCEDURES.HADM_ID WHERE "
     "PROCEDURES.\"LONG_TITLE\" = \"{v}\""},
    {kMeas, "how many patients had the lab test {v}?",
     "SELECT COUNT ( DISTINCT LAB.\"SUBJECT_ID\" ) FROM LAB WHERE LAB.\"LABEL\" "
     "= \"{v}\""},
    {kMeas, "show the chart time and flag of the lab test {v}.",
     "SELECT CHARTTIME , FLAG FROM LAB WHERE LABEL = \"{v}\""},
    {kMeas, "what is the number of abnormal {v} results?",
     "SELECT COUNT ( ITEMID ) FROM LAB WHERE LABEL = \"{v}\" AND FLAG = "
     "\"ABNORMAL\""},
    {kEth, "how many patients of {v} ethnicity did not expire in hospital?",
     "SELECT COUNT ( DISTINCT DEMOGRAPHIC.\"SUBJECT_ID\" ) FROM DEMOGRAPHIC "
     "WHERE DEMOGRAPHIC.\"ETHNICITY\" = \"{v}\" AND DEMOGRAPHIC.\"EXPIRE_FLAG\" "
     "= 0"},
    {kEth, "what are the birth years of patients in the {v} ethnic group?",
     "SELECT DEMOGRAPHIC.\"DOB_YEAR\" FROM DEMOGRAPHIC WHERE "
     "DEMOGRAPHIC.\"ETHNICITY\" = \"{v}\""},
    {kLoc, "how many female patients were admitted from {v}?",
     "SELECT COUNT ( DISTINCT DEMOGRAPHIC.\"SUBJECT_ID\" ) FROM DEMOGRAPHIC "
     "WHERE DEMOGRAPHIC.\"ADMISSION_LOCATION\" = \"{v}\" AND "
     "DEMOGRAPHIC.\"GENDER\" = \"F\""},
    {kLoc,
     "what is the average number of days of stay for admissions from {v}?",
     "SELECT AVG ( DEMOGRAPHIC.\"DAYS_STAY\" ) FROM DEMOGRAPHIC WHERE "
     "DEMOGRAPHIC.\"ADMISSION_LOCATION\" = \"{v}\""},
    {kName, "what is the age and gender of the patient named {v}?",
     "SELECT AGE , GENDER FROM DEMOGRAPHIC WHERE NAME = \"{v}\""},
    {kName, "how many drugs were prescribed to the patient named {v}?",
     "SELECT COUNT ( PRESCRIPTIONS.\"DRUG\" ) FROM PRESCRIPTIONS INNER JOIN "
     "DEMOGRAPHIC ON PRESCRIPTIONS.HADM_ID = DEMOGRAPHIC.HADM_ID WHERE "
     "DEMOGRAPHIC.\"NAME\" = \"{v}\""},
}};

int tri(int i) { return i * (i + 1) / 2; }

std::string replace_all(std::string text, std::string_view from,
                        std::string_view to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// SQL-dump string literal (single quotes, doubled embedded quotes).
std::string sq(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    out += c;
    if (c == '\'') out += '\'';
  }
  out += "'";
  return out;
}

std::string two_digits(int v) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02d", v);
  return buf;
}

// All 17 DEMOGRAPHIC columns, in CREATE TABLE order.
struct DemoRow {
  int subject_id = 0;
  int hadm_id = 0;
  std::string name = "Ward Patient";
  std::string marital_status = "MARRIED";
  int age = 40;
  int dob_year = 1900;
  std::string gender = "M";
  std::string language = "ENGL";
  std::string religion = "CATHOLIC";
  std::string admission_type = "ELECTIVE";
  int days_stay = 5;
  std::string insurance = "Private";
  std::string ethnicity = "UNKNOWN";
  int expire_flag = 0;
  std::string admission_location = "UNSPECIFIED";
  std::string discharge_location = "HOME";
  std::string diagnosis = "UNLISTED";

  std::string to_insert() const {
    std::ostringstream out;
    out << "INSERT INTO DEMOGRAPHIC VALUES (" << subject_id << ", " << hadm_id
        << ", " << sq(name) << ", " << sq(marital_status) << ", " << age << ", "
        << dob_year << ", " << sq(gender) << ", " << sq(language) << ", "
        << sq(religion) << ", " << sq(admission_type) << ", " << days_stay
        << ", " << sq(insurance) << ", " << sq(ethnicity) << ", " << expire_flag
        << ", " << sq(admission_location) << ", " << sq(discharge_location)
        << ", " << sq(diagnosis) << ");";
    return out.str();
  }
};

SchemaDescriptor build_schema() {
  auto text = [](const char* name, bool eligible = false) {
    return ColumnDesc{name, ColumnKind::Text, eligible};
  };
  auto num = [](const char* name) {
    return ColumnDesc{name, ColumnKind::Integer, false};
  };
  SchemaDescriptor schema;
  schema.tables.push_back(TableDesc{
      "DEMOGRAPHIC",
      {num("SUBJECT_ID"), num("HADM_ID"), text("NAME", true),
       text("MARITAL_STATUS"), num("AGE"), num("DOB_YEAR"), text("GENDER"),
       text("LANGUAGE"), text("RELIGION"), text("ADMISSION_TYPE"),
       num("DAYS_STAY"), text("INSURANCE"), text("ETHNICITY", true),
       num("EXPIRE_FLAG"), text("ADMISSION_LOCATION", true),
       text("DISCHARGE_LOCATION"), text("DIAGNOSIS", true)}});
  schema.tables.push_back(
      TableDesc{"DIAGNOSES",
                {num("SUBJECT_ID"), num("HADM_ID"), text("ICD9_CODE", true),
                 text("SHORT_TITLE", true), text("LONG_TITLE")}});
  schema.tables.push_back(
      TableDesc{"PROCEDURES",
                {num("SUBJECT_ID"), num("HADM_ID"), text("ICD9_CODE", true),
                 text("SHORT_TITLE"), text("LONG_TITLE", true)}});
  schema.tables.push_back(TableDesc{
      "PRESCRIPTIONS",
      {num("SUBJECT_ID"), num("HADM_ID"), num("ICUSTAY_ID"), text("DRUG_TYPE"),
       text("DRUG", true), text("FORMULARY_DRUG_CD"), text("ROUTE"),
       text("DRUG_DOSE"), num("DOSE_VAL")}});
  schema.tables.push_back(TableDesc{
      "LAB", {num("SUBJECT_ID"), num("HADM_ID"), text("ITEMID", true),
              text("CHARTTIME"), text("FLAG"), text("VALUE_UNIT"),
              text("LABEL", true), text("FLUID"), text("CATEGORY")}});
  return schema;
}

std::string build_dump() {
  std::vector<std::string> stmts;
  stmts.push_back(
      "CREATE TABLE DEMOGRAPHIC (\"SUBJECT_ID\" INTEGER, \"HADM_ID\" INTEGER, "
      "\"NAME\" TEXT, \"MARITAL_STATUS\" TEXT, \"AGE\" INTEGER, \"DOB_YEAR\" "
      "INTEGER, \"GENDER\" TEXT, \"LANGUAGE\" TEXT, \"RELIGION\" TEXT, "
      "\"ADMISSION_TYPE\" TEXT, \"DAYS_STAY\" INTEGER, \"INSURANCE\" TEXT, "
      "\"ETHNICITY\" TEXT, \"EXPIRE_FLAG\" INTEGER, \"ADMISSION_LOCATION\" "
      "TEXT, \"DISCHARGE_LOCATION\" TEXT, \"DIAGNOSIS\" TEXT);");
  stmts.push_back(
      "CREATE TABLE DIAGNOSES (\"SUBJECT_ID\" INTEGER, \"HADM_ID\" INTEGER, "
      "\"ICD9_CODE\" TEXT, \"SHORT_TITLE\" TEXT, \"LONG_TITLE\" TEXT);");
  stmts.push_back(
      "CREATE TABLE PROCEDURES (\"SUBJECT_ID\" INTEGER, \"HADM_ID\" INTEGER, "
      "\"ICD9_CODE\" TEXT, \"SHORT_TITLE\" TEXT, \"LONG_TITLE\" TEXT);");
  stmts.push_back(
      "CREATE TABLE PRESCRIPTIONS (\"SUBJECT_ID\" INTEGER, \"HADM_ID\" "
      "INTEGER, \"ICUSTAY_ID\" INTEGER, \"DRUG_TYPE\" TEXT, \"DRUG\" TEXT, "
      "\"FORMULARY_DRUG_CD\" TEXT, \"ROUTE\" TEXT, \"DRUG_DOSE\" TEXT, "
      "\"DOSE_VAL\" INTEGER);");
  stmts.push_back(
      "CREATE TABLE LAB (\"SUBJECT_ID\" INTEGER, \"HADM_ID\" INTEGER, "
      "\"ITEMID\" TEXT, \"CHARTTIME\" TEXT, \"FLAG\" TEXT, \"VALUE_UNIT\" "
      "TEXT, \"LABEL\" TEXT, \"FLUID\" TEXT, \"CATEGORY\" TEXT);");

  // Walk a pool block: value i (0-based) gets rows j = 0..i at block offset
  // tri(i)+j — a triangular layout that makes the row count per value i+1.
  auto for_block = [&](PoolId pool, auto&& emit) {
    const PoolSpec& spec = kPools[static_cast<std::size_t>(pool)];
    for (int i = 0; i < kValuesPerPool; ++i) {
      for (int j = 0; j <= i; ++j) {
        int idx = tri(i) + j;
        int sid = spec.subject_base + idx + 1;
        int hadm = sid + 50000;
        emit(spec.values[static_cast<std::size_t>(i)], i, idx, sid, hadm);
      }
    }
  };

  // Prescriptions plus male demographic companions (the dose-value structure
  // filters on gender through a join).
  for_block(kDrug, [&](const char* value, int /*i*/, int idx, int sid,
                       int hadm) {
    std::ostringstream out;
    out << "INSERT INTO PRESCRIPTIONS VALUES (" << sid << ", " << hadm << ", "
        << 70000 + sid << ", 'BASE', " << sq(value) << ", "
        << sq("FD" + std::to_string(sid)) << ", 'PO', "
        << sq(std::to_string(5 * (idx + 1)) + "mg") << ", " << 5 * (idx + 1)
        << ");";
    stmts.push_back(out.str());
    DemoRow hub;
    hub.subject_id = sid;
    hub.hadm_id = hadm;
    hub.gender = "M";
    stmts.push_back(hub.to_insert());
  });

  // Primary-diagnosis block: row-unique ages and stays, all emergency, all
  // female, rotating insurance so the projection structure returns distinct
  // row sets per value.
  for_block(kCondA, [&](const char* value, int /*i*/, int idx, int sid,
                        int hadm) {
    DemoRow row;
    row.subject_id = sid;
    row.hadm_id = hadm;
    row.diagnosis = value;
    row.age = 20 + idx;
    row.dob_year = 1920 + idx;
    row.days_stay = 3 + idx;
    row.gender = "F";
    row.admission_type = "EMERGENCY";
    static const std::array<const char*, 4> kInsurance = {
        "Medicare", "Private", "Medicaid", "Government"};
    row.insurance = kInsurance[static_cast<std::size_t>(idx % 4)];
    stmts.push_back(row.to_insert());
  });

  // Coded-diagnosis block plus demographic companions carrying row-unique
  // ages for the minimum-age join structure.
  for_block(kCondB, [&](const char* value, int i, int idx, int sid, int hadm) {
    std::ostringstream out;
    out << "INSERT INTO DIAGNOSES VALUES (" << sid << ", " << hadm << ", "
        << sq("D58" + two_digits(i)) << ", " << sq(value) << ", 'UNSPECIFIED');";
    stmts.push_back(out.str());
    DemoRow hub;
    hub.subject_id = sid;
    hub.hadm_id = hadm;
    hub.age = 20 + idx;
    stmts.push_back(hub.to_insert());
  });

  // Procedure block plus demographic companions carrying row-unique stays for
  // the longest-stay join structure.
  for_block(kProc, [&](const char* value, int i, int idx, int sid, int hadm) {
    std::ostringstream out;
    out << "INSERT INTO PROCEDURES VALUES (" << sid << ", " << hadm << ", "
        << sq("P36" + two_digits(i)) << ", 'ROUTINE', " << sq(value) << ");";
    stmts.push_back(out.str());
    DemoRow hub;
    hub.subject_id = sid;
    hub.hadm_id = hadm;
    hub.days_stay = 3 + idx;
    stmts.push_back(hub.to_insert());
  });

  // Lab block: every row abnormal, chart times row-unique.
  for_block(kMeas, [&](const char* value, int i, int idx, int sid, int hadm) {
    std::ostringstream out;
    out << "INSERT INTO LAB VALUES (" << sid << ", " << hadm << ", "
        << sq("LX508" + two_digits(i)) << ", "
        << sq("2105-03-" + two_digits(idx / 24 + 1) + " " +
              two_digits(idx % 24) + ":00:00")
        << ", 'ABNORMAL', 'mg/dL', " << sq(value) << ", 'Blood', 'CHEMISTRY');";
    stmts.push_back(out.str());
    DemoRow hub;
    hub.subject_id = sid;
    hub.hadm_id = hadm;
    stmts.push_back(hub.to_insert());
  });

  // Ethnicity block: nobody expired, birth years row-unique.
  for_block(kEth, [&](const char* value, int /*i*/, int idx, int sid,
                      int hadm) {
    DemoRow row;
    row.subject_id = sid;
    row.hadm_id = hadm;
    row.ethnicity = value;
    row.age = 20 + idx;
    row.dob_year = 1920 + idx;
    row.days_stay = 3 + idx;
    row.gender = "F";
    row.expire_flag = 0;
    stmts.push_back(row.to_insert());
  });

  // Admission-location block: all female, stays row-unique so averages
  // separate the locations.
  for_block(kLoc, [&](const char* value, int /*i*/, int idx, int sid,
                      int hadm) {
    DemoRow row;
    row.subject_id = sid;
    row.hadm_id = hadm;
    row.admission_location = value;
    row.days_stay = 3 + idx;
    row.age = 20 + idx;
    row.gender = "F";
    row.admission_type = "URGENT";
    stmts.push_back(row.to_insert());
  });

  // Named-patient block plus prescription companions (the drug-count
  // structure counts prescriptions through a join; value i has i+1 rows).
  for_block(kName, [&](const char* value, int /*i*/, int idx, int sid,
                       int hadm) {
    DemoRow row;
    row.subject_id = sid;
    row.hadm_id = hadm;
    row.name = value;
    row.age = 20 + idx;
    row.dob_year = 1920 + idx;
    row.gender = (idx % 2 == 0) ? "M" : "F";
    stmts.push_back(row.to_insert());
    std::ostringstream out;
    out << "INSERT INTO PRESCRIPTIONS VALUES (" << sid << ", " << hadm << ", "
        << 70000 + sid << ", 'MAIN', 'Saline Flush', 'FDSAL', 'IV', '1ml', 1);";
    stmts.push_back(out.str());
  });

  std::string dump;
  for (const auto& s : stmts) {
    dump += s;
    dump += '\n';
  }
  return dump;
}

QuestionSqlPair make_pair(std::string id, int structure,
                          std::string_view surface,
                          std::string_view canonical) {
  const StructureSpec& spec = kStructures[static_cast<std::size_t>(structure)];
  QuestionSqlPair pair;
  pair.id = std::move(id);
  pair.question = replace_all(spec.question, "{v}", lower(surface));
  pair.sql = replace_all(spec.sql, "{v}", std::string(canonical));
  return pair;
}

std::string build_gazetteer() {
  std::string out;
  for (const auto& pool : kPools) {
    for (int i = 0; i < kValuesPerPool; ++i) {
      out += pool.values[static_cast<std::size_t>(i)];
      out += '\t';
      out += pool.category;
      out += '\n';
      out += pool.variants[static_cast<std::size_t>(i)];
      out += '\t';
      out += pool.category;
      out += '\n';
    }
  }
  return out;
}

json build_lookup_map() {
  json map = json::object();
  for (const auto& pool : kPools) {
    std::string location = std::string(pool.table) + "." + pool.column;
    auto& list = map[pool.category];
    if (!list.is_array()) list = json::array();
    bool present = false;
    for (const auto& entry : list)
      if (entry.get<std::string>() == location) present = true;
    if (!present) list.push_back(location);
  }
  // Code columns are lookup-eligible but never asked about by the fixture
  // questions; they keep the value table realistic.
  map["CODE"] = {"DIAGNOSES.ICD9_CODE", "PROCEDURES.ICD9_CODE", "LAB.ITEMID"};
  return map;
}

json build_run_config() {
  json cfg;
  cfg["seed"] = 7;
  cfg["paths"] = {{"schema", "schema.json"},
                  {"db_dump", "ehr.sql"},
                  {"corpus", "corpus.jsonl"},
                  {"eval_dataset", "heldout.jsonl"},
                  {"gazetteer", "gazetteer.tsv"},
                  {"lookup_map", "lookup_map.json"},
                  {"out_dir", "out"}};
  cfg["services"] = {
      {"chat",
       {{"provider", "stub"},
        {"model", "stub-chat-v1"},
        {"endpoint", ""},
        {"api_key_env", "CBRSQL_API_KEY"},
        {"retry_base_ms", 100}}},
      {"general_embedder",
       {{"provider", "stub"},
        {"model", "stub-embed-general"},
        {"endpoint", ""},
        {"api_key_env", "CBRSQL_API_KEY"},
        {"dim", 512},
        {"retry_base_ms", 100}}},
      {"medical_embedder",
       {{"provider", "stub"},
        {"model", "stub-embed-medical"},
        {"endpoint", ""},
        {"api_key_env", "CBRSQL_API_KEY"},
        {"dim", 512},
        {"retry_base_ms", 100}}},
      {"tagger", "gazetteer"}};
  cfg["retrieval"] = {{"k", 5},
                      {"top_semantic", 100},
                      {"top_final", 5},
                      {"hook_overfetch", 0}};
  cfg["pipeline"] = {{"variant", "full"},
                     {"include_draft_in_revision", false},
                     {"levenshtein_case_insensitive", true}};
  cfg["dropout"] = {
      {"p_top", 1.0}, {"k", 5}, {"seed", 11}, {"trials", 3}, {"refill", false}};
  cfg["clustering"] = {{"min_cluster_size", 2},
                       {"epsilon", 0.1},
                       {"min_samples", 0},
                       {"selection_seed", 13}};
  cfg["report"] = {{"label", "fixture"}, {"include_traces", false}};
  return cfg;
}

}  // namespace

std::size_t fixture_structure_count() { return kStructures.size(); }

const std::vector<FixtureEntity>& fixture_entities() {
  static const std::vector<FixtureEntity> entities = [] {
    std::vector<FixtureEntity> out;
    for (const auto& pool : kPools) {
      for (int i = 0; i < kValuesPerPool; ++i) {
        out.push_back(FixtureEntity{pool.category,
                                    pool.values[static_cast<std::size_t>(i)],
                                    pool.variants[static_cast<std::size_t>(i)],
                                    pool.table, pool.column});
      }
    }
    return out;
  }();
  return entities;
}

FixtureBundle make_fixture() {
  FixtureBundle bundle;
  bundle.schema_json = schema_to_json(build_schema());
  bundle.ehr_dump_sql = build_dump();

  for (int s = 0; s < static_cast<int>(kStructures.size()); ++s) {
    const PoolSpec& pool = kPools[static_cast<std::size_t>(
        kStructures[static_cast<std::size_t>(s)].pool)];
    for (int v = 0; v < kCorpusValues; ++v) {
      bundle.corpus.push_back(
          make_pair("s" + two_digits(s) + "-v" + two_digits(v), s,
                    pool.values[static_cast<std::size_t>(v)],
                    pool.values[static_cast<std::size_t>(v)]));
    }
    // Held-out values alternate between the two unseen pool entries so
    // adjacent structures over the same pool use different targets.
    int held = kCorpusValues + (s % 2);
    bundle.heldout.push_back(
        make_pair("held-s" + two_digits(s), s,
                  pool.values[static_cast<std::size_t>(held)],
                  pool.values[static_cast<std::size_t>(held)]));
    bundle.heldout_variant.push_back(
        make_pair("vary-s" + two_digits(s), s,
                  pool.variants[static_cast<std::size_t>(held)],
                  pool.values[static_cast<std::size_t>(held)]));
  }

  bundle.gazetteer_tsv = build_gazetteer();
  bundle.lookup_map = build_lookup_map();
  bundle.run_config = build_run_config();
  return bundle;
}

void write_fixture(const FixtureBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto path = [&](const char* name) { return (dir / name).string(); };
  write_file(path("schema.json"), bundle.schema_json);
  write_file(path("ehr.sql"), bundle.ehr_dump_sql);
  save_dataset(bundle.corpus, path("corpus.jsonl"));
  save_dataset(bundle.heldout, path("heldout.jsonl"));
  save_dataset(bundle.heldout_variant, path("heldout_variant.jsonl"));
  write_file(path("gazetteer.tsv"), bundle.gazetteer_tsv);
  write_file(path("lookup_map.json"), bundle.lookup_map.dump(2) + "\n");
  write_file(path("config.json"), bundle.run_config.dump(2) + "\n");
}

}  // namespace cbrsql
