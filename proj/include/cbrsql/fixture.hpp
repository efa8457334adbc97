// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbrsql/datamodel.hpp"

namespace cbrsql {

// One lookup-eligible entity the fixture plants: its canonical database
// spelling, a misspelled/extended surface variant used by the robustness
// suite, and the cell it lives in.
struct FixtureEntity {
  std::string category;
  std::string canonical;
  std::string variant;
  std::string table;
  std::string column;
};

// A synthetic five-table clinical database with a planted question corpus.
//
// The corpus holds 20 SQL structures x 10 entity values = 200 pairs. Two
// further values per structure are present in the database but never used by
// the corpus; the held-out suite asks about them with canonical spellings,
// and the variant suite asks the same questions with off-database surface
// forms. Per-value row counts and payload cells are arranged so that every
// structure's answer differs for every entity value, which makes
// copied-from-neighbor predictions execute incorrectly.
struct FixtureBundle {
  std::string schema_json;
  std::string ehr_dump_sql;
  std::vector<QuestionSqlPair> corpus;           // 200 pairs, values 0..9
  std::vector<QuestionSqlPair> heldout;          // 20 pairs, values 10..11
  std::vector<QuestionSqlPair> heldout_variant;  // same gold, variant surfaces
  std::string gazetteer_tsv;
  nlohmann::json lookup_map;   // category -> ["TABLE.COLUMN", ...]
  nlohmann::json run_config;   // ready-to-use configuration for the CLI
};

FixtureBundle make_fixture();

// All planted entities (structure pools only, no filler values).
const std::vector<FixtureEntity>& fixture_entities();

// Number of distinct SQL structures in the corpus.
std::size_t fixture_structure_count();

// Writes schema.json, ehr.sql, corpus.jsonl, heldout.jsonl,
// heldout_variant.jsonl, gazetteer.tsv, lookup_map.json and config.json.
void write_fixture(const FixtureBundle& bundle, const std::filesystem::path& dir);

}  // namespace cbrsql
