// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
//
// Command-line front end. Everything goes through the C API of the shared
// library; this translation unit deliberately knows nothing about the C++
// internals.
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cbrsql/cbrsql.h"

namespace {

int fail(cbrsql_status status) {
  std::fprintf(stderr, "error: %s\n", cbrsql_last_error());
  return static_cast<int>(status);
}

int print_and_free(char* json) {
  if (json != nullptr) {
    std::fputs(json, stdout);
    std::fputc('\n', stdout);
    cbrsql_free(json);
  }
  return 0;
}

// RAII for the engine handle so every exit path destroys it.
struct EngineHandle {
  cbrsql_engine* ptr = nullptr;
  ~EngineHandle() { cbrsql_engine_destroy(ptr); }
};

cbrsql_status open_engine(const std::string& config_path,
                          const std::vector<std::string>& overrides,
                          EngineHandle& handle) {
  std::vector<const char*> raw;
  raw.reserve(overrides.size());
  for (const auto& s : overrides) raw.push_back(s.c_str());
  return cbrsql_engine_create(config_path.c_str(),
                              raw.empty() ? nullptr : raw.data(), raw.size(),
                              &handle.ptr);
}

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON configuration file")
      ->required();
  cmd->add_option("--set", args.overrides,
                  "config override as dotted.key=value (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"case-based text-to-SQL over clinical records"};
  app.require_subcommand(1);

  // fixture
  auto* fixture_cmd = app.add_subcommand(
      "fixture", "write the synthetic database/corpus bundle");
  std::string fixture_dir;
  fixture_cmd->add_option("--out", fixture_dir, "output directory")->required();

  // retain
  CommonArgs retain_args;
  auto* retain_cmd = app.add_subcommand(
      "retain", "mask and index the corpus (case base + pair base)");
  add_common(retain_cmd, retain_args);

  // build-lookup
  CommonArgs lookup_args;
  auto* lookup_cmd = app.add_subcommand(
      "build-lookup", "index distinct database cell values for source discovery");
  add_common(lookup_cmd, lookup_args);

  // build-idb
  CommonArgs idb_args;
  auto* idb_cmd = app.add_subcommand(
      "build-idb", "cluster the corpus by SQL structure and keep representatives");
  add_common(idb_cmd, idb_args);

  // query
  CommonArgs query_args;
  auto* query_cmd = app.add_subcommand("query", "answer a single question");
  add_common(query_cmd, query_args);
  std::string question;
  std::string query_pipeline = "cbr";
  int query_k = 0;
  std::string trace_out;
  query_cmd->add_option("--question", question, "natural-language question")
      ->required();
  query_cmd->add_option("--pipeline", query_pipeline, "cbr or rag");
  query_cmd->add_option("--k", query_k, "retrieval depth override (>0)");
  query_cmd->add_option("--trace-out", trace_out, "file for the pipeline trace");

  // eval
  CommonArgs eval_args;
  auto* eval_cmd =
      app.add_subcommand("eval", "score pipelines on the evaluation dataset");
  add_common(eval_cmd, eval_args);
  std::string eval_pipeline = "both";
  eval_cmd->add_option("--pipeline", eval_pipeline, "cbr, rag or both");

  // brittleness
  CommonArgs brittle_args;
  auto* brittle_cmd = app.add_subcommand(
      "brittleness", "accuracy drop under rank-weighted exemplar dropout");
  add_common(brittle_cmd, brittle_args);
  std::string brittle_pipeline = "cbr";
  double p_top = 0.0;
  std::uint64_t seed = 0;
  brittle_cmd->add_option("--pipeline", brittle_pipeline, "cbr or rag");
  auto* p_top_opt =
      brittle_cmd->add_option("--p-top", p_top, "dropout probability at rank 1");
  auto* seed_opt = brittle_cmd->add_option("--seed", seed, "dropout RNG seed");

  // tag-stats
  CommonArgs tag_args;
  auto* tag_cmd =
      app.add_subcommand("tag-stats", "entity tag histogram over the corpus");
  add_common(tag_cmd, tag_args);

  CLI11_PARSE(app, argc, argv);

  if (fixture_cmd->parsed()) {
    char* json = nullptr;
    cbrsql_status st = cbrsql_write_fixture(fixture_dir.c_str(), &json);
    if (st != CBRSQL_OK) return fail(st);
    return print_and_free(json);
  }

  auto run_simple = [](const CommonArgs& args,
                       cbrsql_status (*fn)(cbrsql_engine*, char**)) {
    EngineHandle engine;
    cbrsql_status st = open_engine(args.config_path, args.overrides, engine);
    if (st != CBRSQL_OK) return fail(st);
    char* json = nullptr;
    st = fn(engine.ptr, &json);
    if (st != CBRSQL_OK) return fail(st);
    return print_and_free(json);
  };

  if (retain_cmd->parsed()) return run_simple(retain_args, cbrsql_retain);
  if (lookup_cmd->parsed()) return run_simple(lookup_args, cbrsql_build_lookup);
  if (idb_cmd->parsed()) return run_simple(idb_args, cbrsql_build_idb);
  if (tag_cmd->parsed()) return run_simple(tag_args, cbrsql_tag_stats);

  if (query_cmd->parsed()) {
    EngineHandle engine;
    cbrsql_status st = open_engine(query_args.config_path, query_args.overrides,
                                   engine);
    if (st != CBRSQL_OK) return fail(st);
    char* json = nullptr;
    st = cbrsql_query(engine.ptr, question.c_str(), query_pipeline.c_str(),
                      query_k, trace_out.empty() ? nullptr : trace_out.c_str(),
                      &json);
    if (st != CBRSQL_OK) return fail(st);
    return print_and_free(json);
  }

  if (eval_cmd->parsed()) {
    EngineHandle engine;
    cbrsql_status st =
        open_engine(eval_args.config_path, eval_args.overrides, engine);
    if (st != CBRSQL_OK) return fail(st);
    char* json = nullptr;
    st = cbrsql_eval(engine.ptr, eval_pipeline.c_str(), &json);
    if (st != CBRSQL_OK) return fail(st);
    return print_and_free(json);
  }

  if (brittle_cmd->parsed()) {
    EngineHandle engine;
    cbrsql_status st =
        open_engine(brittle_args.config_path, brittle_args.overrides, engine);
    if (st != CBRSQL_OK) return fail(st);
    char* json = nullptr;
    const double* p_top_arg = p_top_opt->count() > 0 ? &p_top : nullptr;
    const std::uint64_t* seed_arg = seed_opt->count() > 0 ? &seed : nullptr;
    st = cbrsql_brittleness(engine.ptr, brittle_pipeline.c_str(), p_top_arg,
                            seed_arg, &json);
    if (st != CBRSQL_OK) return fail(st);
    return print_and_free(json);
  }

  return 0;
}
