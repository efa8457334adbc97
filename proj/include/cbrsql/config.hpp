// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "cbrsql/evalkit.hpp"
#include "cbrsql/idb.hpp"
#include "cbrsql/inference.hpp"

namespace cbrsql {

// One chat or embedding backend. "stub" runs the deterministic in-process
// fakes; "http" talks to an OpenAI-style JSON endpoint.
struct ServiceConfig {
  std::string provider = "stub";
  std::string model;
  std::string endpoint;
  std::string api_key_env = "CBRSQL_API_KEY";
  int dim = 256;  // embedding width; ignored by chat services
  int retry_base_ms = 100;

  void validate(const std::string& which) const;
};

// Everything a run needs, loaded from one JSON file. Relative paths inside
// the file are resolved against the file's own directory, so a fixture
// directory is self-contained and relocatable.
struct RunConfig {
  std::uint64_t seed = 0;

  std::string schema_path;
  std::string db_dump_path;
  std::string corpus_path;
  std::string eval_dataset_path;
  std::string gazetteer_path;
  std::string lookup_map_path;
  std::string out_dir;

  ServiceConfig chat;
  ServiceConfig general_embedder;
  ServiceConfig medical_embedder;
  std::string tagger = "gazetteer";  // "gazetteer" | "llm"

  RetrievalConfig retrieval;
  std::string pipeline_variant = "full";  // full | replace-template-construction
                                          // | no-source-discovery
  bool include_draft_in_revision = false;
  bool levenshtein_case_insensitive = true;

  DropoutPolicy dropout;
  bool dropout_refill = false;  // re-extend retrieval so survivors refill to k

  ClusteringConfig clustering;

  std::string report_label = "run";
  bool report_include_traces = false;

  // Parses a config object; relative paths are resolved against base_dir.
  static RunConfig from_json(const nlohmann::json& doc,
                             const std::string& base_dir);
  // Reads the file and resolves paths against its parent directory.
  static RunConfig load(const std::string& path);

  nlohmann::json to_json() const;
  void validate() const;

  // Throws a single-line ConfigError naming the field if the given path is
  // empty; `field` is the dotted config key (e.g. "paths.corpus").
  static void require_path(const std::string& value, const std::string& field);
};

// Applies one "dotted.key=value" override to a config document. The value is
// parsed as JSON when possible (numbers, booleans, null) and kept as a string
// otherwise. Intermediate objects are created as needed.
void apply_config_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace cbrsql
