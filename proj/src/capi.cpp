// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#include "cbrsql/cbrsql.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "cbrsql/engine.hpp"
#include "cbrsql/fixture.hpp"
#include "cbrsql/levenshtein.hpp"
#include "cbrsql/sql.hpp"
#include "cbrsql/util.hpp"

// The opaque handle the header forward-declares.
struct cbrsql_engine {
  cbrsql::Engine engine;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

// Runs the body, mapping the library's exception taxonomy onto status codes.
template <typename Fn>
cbrsql_status guarded(Fn&& body) {
  try {
    body();
    g_last_error.clear();
    return CBRSQL_OK;
  } catch (const cbrsql::ConfigError& e) {
    g_last_error = e.what();
    return CBRSQL_ERROR_CONFIG;
  } catch (const cbrsql::IoError& e) {
    g_last_error = e.what();
    return CBRSQL_ERROR_IO;
  } catch (const cbrsql::SqlParseError& e) {
    g_last_error = e.what();
    return CBRSQL_ERROR_PARSE;
  } catch (const cbrsql::ServiceError& e) {
    g_last_error = e.what();
    return CBRSQL_ERROR_SERVICE;
  } catch (const cbrsql::PipelineError& e) {
    g_last_error = e.what();
    return CBRSQL_ERROR_PIPELINE;
  } catch (const cbrsql::EvalError& e) {
    g_last_error = e.what();
    return CBRSQL_ERROR_EVAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CBRSQL_ERROR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return CBRSQL_ERROR_INTERNAL;
  }
}

cbrsql_status require(bool ok, const char* message) {
  if (ok) return CBRSQL_OK;
  g_last_error = message;
  return CBRSQL_ERROR_CONFIG;
}

}  // namespace

extern "C" {

const char* cbrsql_last_error(void) { return g_last_error.c_str(); }

void cbrsql_free(char* buffer) { std::free(buffer); }

cbrsql_status cbrsql_engine_create(const char* config_path,
                                   const char* const* overrides,
                                   size_t override_count,
                                   cbrsql_engine** out_engine) {
  if (cbrsql_status s = require(config_path != nullptr, "config_path is NULL");
      s != CBRSQL_OK)
    return s;
  if (cbrsql_status s = require(out_engine != nullptr, "out_engine is NULL");
      s != CBRSQL_OK)
    return s;
  if (cbrsql_status s =
          require(override_count == 0 || overrides != nullptr,
                  "overrides is NULL but override_count is nonzero");
      s != CBRSQL_OK)
    return s;
  *out_engine = nullptr;
  return guarded([&] {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(cbrsql::read_file(config_path));
    } catch (const nlohmann::json::exception& e) {
      throw cbrsql::ConfigError(std::string("config file ") + config_path +
                                " is not valid JSON: " + e.what());
    }
    for (size_t i = 0; i < override_count; ++i) {
      if (overrides[i] == nullptr)
        throw cbrsql::ConfigError("override " + std::to_string(i) + " is NULL");
      cbrsql::apply_config_override(doc, overrides[i]);
    }
    std::filesystem::path base =
        std::filesystem::path(config_path).parent_path();
    cbrsql::RunConfig config = cbrsql::RunConfig::from_json(doc, base.string());
    *out_engine = new cbrsql_engine{cbrsql::Engine(std::move(config))};
  });
}

void cbrsql_engine_destroy(cbrsql_engine* engine) { delete engine; }

cbrsql_status cbrsql_engine_config(cbrsql_engine* engine, char** out_json) {
  if (cbrsql_status s = require(engine != nullptr && out_json != nullptr,
                                "engine or out_json is NULL");
      s != CBRSQL_OK)
    return s;
  return guarded([&] {
    *out_json = dup_string(engine->engine.config().to_json().dump(2));
  });
}

cbrsql_status cbrsql_retain(cbrsql_engine* engine, char** out_json) {
  if (cbrsql_status s = require(engine != nullptr && out_json != nullptr,
                                "engine or out_json is NULL");
      s != CBRSQL_OK)
    return s;
  return guarded([&] { *out_json = dup_string(engine->engine.retain().dump(2)); });
}

cbrsql_status cbrsql_build_lookup(cbrsql_engine* engine, char** out_json) {
  if (cbrsql_status s = require(engine != nullptr && out_json != nullptr,
                                "engine or out_json is NULL");
      s != CBRSQL_OK)
    return s;
  return guarded(
      [&] { *out_json = dup_string(engine->engine.build_lookup().dump(2)); });
}

cbrsql_status cbrsql_build_idb(cbrsql_engine* engine, char** out_json) {
  if (cbrsql_status s = require(engine != nullptr && out_json != nullptr,
                                "engine or out_json is NULL");
      s != CBRSQL_OK)
    return s;
  return guarded([&] {
    *out_json = dup_string(engine->engine.build_idb_corpus().dump(2));
  });
}

cbrsql_status cbrsql_query(cbrsql_engine* engine, const char* question,
                           const char* pipeline, int k, const char* trace_path,
                           char** out_json) {
  if (cbrsql_status s = require(engine != nullptr && question != nullptr &&
                                    pipeline != nullptr && out_json != nullptr,
                                "engine, question, pipeline or out_json is NULL");
      s != CBRSQL_OK)
    return s;
  return guarded([&] {
    std::optional<int> k_opt;
    if (k > 0) k_opt = k;
    *out_json = dup_string(
        engine->engine
            .query(question, pipeline, k_opt,
                   trace_path == nullptr ? std::string() : trace_path)
            .dump(2));
  });
}

cbrsql_status cbrsql_eval(cbrsql_engine* engine, const char* pipeline,
                          char** out_json) {
  if (cbrsql_status s = require(engine != nullptr && out_json != nullptr,
                                "engine or out_json is NULL");
      s != CBRSQL_OK)
    return s;
  return guarded([&] {
    *out_json = dup_string(
        engine->engine.eval(pipeline == nullptr ? "both" : pipeline).dump(2));
  });
}

cbrsql_status cbrsql_brittleness(cbrsql_engine* engine, const char* pipeline,
                                 const double* p_top, const uint64_t* seed,
                                 char** out_json) {
  if (cbrsql_status s = require(engine != nullptr && pipeline != nullptr &&
                                    out_json != nullptr,
                                "engine, pipeline or out_json is NULL");
      s != CBRSQL_OK)
    return s;
  return guarded([&] {
    std::optional<double> p_opt;
    if (p_top != nullptr) p_opt = *p_top;
    std::optional<std::uint64_t> seed_opt;
    if (seed != nullptr) seed_opt = *seed;
    *out_json = dup_string(
        engine->engine.brittleness(pipeline, p_opt, seed_opt).dump(2));
  });
}

cbrsql_status cbrsql_tag_stats(cbrsql_engine* engine, char** out_json) {
  if (cbrsql_status s = require(engine != nullptr && out_json != nullptr,
                                "engine or out_json is NULL");
      s != CBRSQL_OK)
    return s;
  return guarded(
      [&] { *out_json = dup_string(engine->engine.tag_stats().dump(2)); });
}

cbrsql_status cbrsql_write_fixture(const char* dir, char** out_json) {
  if (cbrsql_status s = require(dir != nullptr, "dir is NULL"); s != CBRSQL_OK)
    return s;
  return guarded([&] {
    cbrsql::FixtureBundle bundle = cbrsql::make_fixture();
    cbrsql::write_fixture(bundle, dir);
    nlohmann::json summary{
        {"dir", dir},
        {"corpus_pairs", bundle.corpus.size()},
        {"heldout_pairs", bundle.heldout.size()},
        {"variant_pairs", bundle.heldout_variant.size()},
        {"structures", cbrsql::fixture_structure_count()},
        {"config", (std::filesystem::path(dir) / "config.json").string()}};
    if (out_json != nullptr) *out_json = dup_string(summary.dump(2));
  });
}

cbrsql_status cbrsql_parse_canonical(const char* sql_text,
                                     char** out_canonical) {
  if (cbrsql_status s = require(sql_text != nullptr && out_canonical != nullptr,
                                "sql_text or out_canonical is NULL");
      s != CBRSQL_OK)
    return s;
  return guarded([&] {
    *out_canonical = dup_string(cbrsql::sql::render(cbrsql::sql::parse_sql(sql_text)));
  });
}

cbrsql_status cbrsql_levenshtein(const char* a, const char* b,
                                 int case_insensitive, size_t* out_distance) {
  if (cbrsql_status s = require(a != nullptr && b != nullptr &&
                                    out_distance != nullptr,
                                "a, b or out_distance is NULL");
      s != CBRSQL_OK)
    return s;
  return guarded(
      [&] { *out_distance = cbrsql::levenshtein(a, b, case_insensitive != 0); });
}

cbrsql_status cbrsql_rank_dropout_probs(int k, double p_top,
                                        double* out_probs) {
  if (cbrsql_status s = require(out_probs != nullptr, "out_probs is NULL");
      s != CBRSQL_OK)
    return s;
  return guarded([&] {
    std::vector<double> probs = cbrsql::rank_dropout_probs(k, p_top);
    for (std::size_t i = 0; i < probs.size(); ++i) out_probs[i] = probs[i];
  });
}

}  // extern "C"
