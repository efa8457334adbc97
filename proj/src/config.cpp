// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#include "cbrsql/config.hpp"

#include <filesystem>

#include "cbrsql/util.hpp"

namespace cbrsql {

using nlohmann::json;

namespace {

std::string resolve_path(const std::string& base_dir, const std::string& path) {
  if (path.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_absolute()) return p.lexically_normal().string();
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

const json* find(const json& doc, const char* key) {
  auto it = doc.find(key);
  return it == doc.end() ? nullptr : &*it;
}

template <typename T>
void read_field(const json& doc, const char* key, T& out) {
  if (const json* v = find(doc, key)) {
    try {
      out = v->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("config field '") + key +
                        "' has the wrong type");
    }
  }
}

ServiceConfig read_service(const json& doc, const char* key,
                           const ServiceConfig& defaults) {
  ServiceConfig svc = defaults;
  if (const json* node = find(doc, key)) {
    if (!node->is_object())
      throw ConfigError(std::string("config field 'services.") + key +
                        "' must be an object");
    read_field(*node, "provider", svc.provider);
    read_field(*node, "model", svc.model);
    read_field(*node, "endpoint", svc.endpoint);
    read_field(*node, "api_key_env", svc.api_key_env);
    read_field(*node, "dim", svc.dim);
    read_field(*node, "retry_base_ms", svc.retry_base_ms);
  }
  return svc;
}

json service_to_json(const ServiceConfig& svc) {
  return json{{"provider", svc.provider},     {"model", svc.model},
              {"endpoint", svc.endpoint},     {"api_key_env", svc.api_key_env},
              {"dim", svc.dim},               {"retry_base_ms", svc.retry_base_ms}};
}

}  // namespace

void ServiceConfig::validate(const std::string& which) const {
  if (provider != "stub" && provider != "http")
    throw ConfigError("services." + which + ".provider must be 'stub' or 'http'");
  if (provider == "http" && endpoint.empty())
    throw ConfigError("services." + which + ".endpoint is required for the http provider");
  if (dim < 1) throw ConfigError("services." + which + ".dim must be >= 1");
  if (retry_base_ms < 0)
    throw ConfigError("services." + which + ".retry_base_ms must be >= 0");
}

RunConfig RunConfig::from_json(const json& doc, const std::string& base_dir) {
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
  RunConfig cfg;
  read_field(doc, "seed", cfg.seed);

  if (const json* paths = find(doc, "paths")) {
    if (!paths->is_object())
      throw ConfigError("config field 'paths' must be an object");
    read_field(*paths, "schema", cfg.schema_path);
    read_field(*paths, "db_dump", cfg.db_dump_path);
    read_field(*paths, "corpus", cfg.corpus_path);
    read_field(*paths, "eval_dataset", cfg.eval_dataset_path);
    read_field(*paths, "gazetteer", cfg.gazetteer_path);
    read_field(*paths, "lookup_map", cfg.lookup_map_path);
    read_field(*paths, "out_dir", cfg.out_dir);
  }
  for (std::string* p : {&cfg.schema_path, &cfg.db_dump_path, &cfg.corpus_path,
                         &cfg.eval_dataset_path, &cfg.gazetteer_path,
                         &cfg.lookup_map_path, &cfg.out_dir})
    *p = resolve_path(base_dir, *p);

  if (const json* services = find(doc, "services")) {
    if (!services->is_object())
      throw ConfigError("config field 'services' must be an object");
    cfg.chat = read_service(*services, "chat", cfg.chat);
    cfg.general_embedder =
        read_service(*services, "general_embedder", cfg.general_embedder);
    cfg.medical_embedder =
        read_service(*services, "medical_embedder", cfg.medical_embedder);
    read_field(*services, "tagger", cfg.tagger);
  }

  if (const json* retrieval = find(doc, "retrieval")) {
    read_field(*retrieval, "k", cfg.retrieval.k);
    read_field(*retrieval, "top_semantic", cfg.retrieval.top_semantic);
    read_field(*retrieval, "top_final", cfg.retrieval.top_final);
    read_field(*retrieval, "hook_overfetch", cfg.retrieval.hook_overfetch);
  }

  if (const json* pipeline = find(doc, "pipeline")) {
    read_field(*pipeline, "variant", cfg.pipeline_variant);
    read_field(*pipeline, "include_draft_in_revision",
               cfg.include_draft_in_revision);
    read_field(*pipeline, "levenshtein_case_insensitive",
               cfg.levenshtein_case_insensitive);
  }

  if (const json* dropout = find(doc, "dropout")) {
    read_field(*dropout, "p_top", cfg.dropout.p_top);
    read_field(*dropout, "k", cfg.dropout.k);
    read_field(*dropout, "seed", cfg.dropout.seed);
    read_field(*dropout, "trials", cfg.dropout.trials);
    read_field(*dropout, "refill", cfg.dropout_refill);
  }

  if (const json* clustering = find(doc, "clustering")) {
    read_field(*clustering, "min_cluster_size", cfg.clustering.min_cluster_size);
    read_field(*clustering, "epsilon", cfg.clustering.epsilon);
    read_field(*clustering, "min_samples", cfg.clustering.min_samples);
    read_field(*clustering, "selection_seed", cfg.clustering.selection_seed);
  }

  if (const json* report = find(doc, "report")) {
    read_field(*report, "label", cfg.report_label);
    read_field(*report, "include_traces", cfg.report_include_traces);
  }

  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return from_json(doc, std::filesystem::path(path).parent_path().string());
}

json RunConfig::to_json() const {
  json doc;
  doc["seed"] = seed;
  doc["paths"] = json{{"schema", schema_path},
                      {"db_dump", db_dump_path},
                      {"corpus", corpus_path},
                      {"eval_dataset", eval_dataset_path},
                      {"gazetteer", gazetteer_path},
                      {"lookup_map", lookup_map_path},
                      {"out_dir", out_dir}};
  doc["services"] = json{{"chat", service_to_json(chat)},
                         {"general_embedder", service_to_json(general_embedder)},
                         {"medical_embedder", service_to_json(medical_embedder)},
                         {"tagger", tagger}};
  doc["retrieval"] = json{{"k", retrieval.k},
                          {"top_semantic", retrieval.top_semantic},
                          {"top_final", retrieval.top_final},
                          {"hook_overfetch", retrieval.hook_overfetch}};
  doc["pipeline"] = json{{"variant", pipeline_variant},
                         {"include_draft_in_revision", include_draft_in_revision},
                         {"levenshtein_case_insensitive",
                          levenshtein_case_insensitive}};
  doc["dropout"] = json{{"p_top", dropout.p_top},
                        {"k", dropout.k},
                        {"seed", dropout.seed},
                        {"trials", dropout.trials},
                        {"refill", dropout_refill}};
  doc["clustering"] = json{{"min_cluster_size", clustering.min_cluster_size},
                           {"epsilon", clustering.epsilon},
                           {"min_samples", clustering.min_samples},
                           {"selection_seed", clustering.selection_seed}};
  doc["report"] = json{{"label", report_label},
                       {"include_traces", report_include_traces}};
  return doc;
}

void RunConfig::validate() const {
  chat.validate("chat");
  general_embedder.validate("general_embedder");
  medical_embedder.validate("medical_embedder");
  if (tagger != "gazetteer" && tagger != "llm")
    throw ConfigError("services.tagger must be 'gazetteer' or 'llm'");
  retrieval.validate();
  if (pipeline_variant != "full" &&
      pipeline_variant != "replace-template-construction" &&
      pipeline_variant != "no-source-discovery")
    throw ConfigError(
        "pipeline.variant must be 'full', 'replace-template-construction' or "
        "'no-source-discovery'");
  dropout.validate();
  clustering.validate();
}

void RunConfig::require_path(const std::string& value, const std::string& field) {
  if (value.empty())
    throw ConfigError("config path '" + field + "' is required for this command");
}

void apply_config_override(json& doc, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' must look like key.path=value");
  std::string key = assignment.substr(0, eq);
  std::string raw = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // unquoted strings stay strings
  }

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    std::size_t dot = key.find('.', start);
    std::string part = key.substr(start, dot - start);
    if (part.empty())
      throw ConfigError("override key '" + key + "' has an empty segment");
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    json& next = (*node)[part];
    if (!next.is_object()) {
      if (!next.is_null())
        throw ConfigError("override key '" + key +
                          "' descends into a non-object value at '" + part + "'");
      next = json::object();
    }
    node = &next;
    start = dot + 1;
  }
}

}  // namespace cbrsql
