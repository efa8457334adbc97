// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#include "cbrsql/engine.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <utility>

#include "cbrsql/util.hpp"

namespace cbrsql {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Removes the tracked artifact paths unless the step committed, so a failed
// step never leaves half-written snapshots behind.
class ArtifactGuard {
 public:
  ~ArtifactGuard() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& p : paths_) fs::remove_all(p, ec);
  }
  void track(fs::path p) { paths_.push_back(std::move(p)); }
  void commit() { committed_ = true; }

 private:
  std::vector<fs::path> paths_;
  bool committed_ = false;
};

std::string api_key_for(const ServiceConfig& svc, const std::string& which) {
  const char* key = std::getenv(svc.api_key_env.c_str());
  if (key == nullptr || *key == '\0')
    throw ConfigError("environment variable " + svc.api_key_env +
                      " is required by services." + which);
  return key;
}

std::unique_ptr<Embedder> make_embedder(const ServiceConfig& svc,
                                        const std::string& which,
                                        const std::string& variant) {
  if (svc.provider == "stub")
    return std::make_unique<StubEmbedder>(svc.dim, variant);
  return std::make_unique<HttpEmbedder>(svc.endpoint, svc.model,
                                        api_key_for(svc, which), svc.dim,
                                        svc.retry_base_ms);
}

json spans_to_json(const std::vector<EntitySpan>& spans) {
  json out = json::array();
  for (const auto& s : spans)
    out.push_back(json{{"text", s.text},
                       {"start", s.start},
                       {"end", s.end},
                       {"category", s.category}});
  return out;
}

}  // namespace

Engine::Engine(RunConfig config) : config_(std::move(config)) {
  config_.validate();
}

const Gazetteer& Engine::gazetteer() {
  if (!gazetteer_) {
    RunConfig::require_path(config_.gazetteer_path, "paths.gazetteer");
    gazetteer_ = Gazetteer::load(config_.gazetteer_path);
  }
  return *gazetteer_;
}

ChatClient& Engine::chat() {
  if (!chat_) {
    if (config_.chat.provider == "stub") {
      // The scripted model answers tagging requests with whatever the
      // configured gazetteer finds; without one it reports no entities.
      StubChatClient::TagFn tag_fn;
      if (!config_.gazetteer_path.empty()) {
        const Gazetteer* g = &gazetteer();
        tag_fn = [g](const std::string& question) {
          return spans_to_json(g->tag(question));
        };
      }
      chat_ = std::make_unique<StubChatClient>(std::move(tag_fn));
    } else {
      chat_ = std::make_unique<HttpChatClient>(
          config_.chat.endpoint, config_.chat.model,
          api_key_for(config_.chat, "chat"), config_.chat.retry_base_ms);
    }
  }
  return *chat_;
}

Embedder& Engine::general() {
  if (!general_)
    general_ = make_embedder(config_.general_embedder, "general_embedder",
                             "general");
  return *general_;
}

Embedder& Engine::medical() {
  if (!medical_)
    medical_ = make_embedder(config_.medical_embedder, "medical_embedder",
                             "medical");
  return *medical_;
}

Tagger& Engine::tagger() {
  if (!tagger_) {
    if (config_.tagger == "gazetteer") {
      tagger_ = std::make_unique<GazetteerTagger>(gazetteer());
    } else {
      const Gazetteer* fallback =
          config_.gazetteer_path.empty() ? nullptr : &gazetteer();
      tagger_ = std::make_unique<LlmTagger>(chat(), fallback);
    }
  }
  return *tagger_;
}

const EhrDb& Engine::db() {
  if (!db_) {
    RunConfig::require_path(config_.db_dump_path, "paths.db_dump");
    db_ = EhrDb::load_dump(config_.db_dump_path);
  }
  return *db_;
}

const SchemaDescriptor& Engine::schema() {
  if (!schema_) {
    RunConfig::require_path(config_.schema_path, "paths.schema");
    schema_ = load_schema(config_.schema_path);
  }
  return *schema_;
}

VectorStore& Engine::case_base() {
  if (!case_base_) {
    fs::path dir = fs::path(config_.out_dir) / "case_base";
    if (!fs::exists(dir / "manifest.json"))
      throw IoError("case base snapshot missing at " + dir.string() +
                    " (run the retain step first)");
    case_base_ = VectorStore::load(dir);
    case_base_->require_compatible(general());
  }
  return *case_base_;
}

VectorStore& Engine::pair_base() {
  if (!pair_base_) {
    fs::path dir = fs::path(config_.out_dir) / "pair_base";
    if (!fs::exists(dir / "manifest.json"))
      throw IoError("pair base snapshot missing at " + dir.string() +
                    " (run the retain step first)");
    pair_base_ = VectorStore::load(dir);
    pair_base_->require_compatible(general());
  }
  return *pair_base_;
}

VectorStore& Engine::lookup_store() {
  if (!lookup_) {
    fs::path dir = fs::path(config_.out_dir) / "lookup";
    if (!fs::exists(dir / "manifest.json"))
      throw IoError("lookup snapshot missing at " + dir.string() +
                    " (run the build-lookup step first)");
    lookup_ = VectorStore::load(dir);
    lookup_->require_compatible(medical());
  }
  return *lookup_;
}

std::map<std::string, std::vector<std::string>> Engine::category_columns() {
  RunConfig::require_path(config_.lookup_map_path, "paths.lookup_map");
  json doc;
  try {
    doc = json::parse(read_file(config_.lookup_map_path));
  } catch (const json::exception& e) {
    throw ConfigError("lookup map " + config_.lookup_map_path +
                      " is not valid JSON: " + e.what());
  }
  if (!doc.is_object())
    throw ConfigError("lookup map must be an object of category -> columns");
  std::map<std::string, std::vector<std::string>> map;
  for (const auto& [category, columns] : doc.items()) {
    if (!columns.is_array())
      throw ConfigError("lookup map entry '" + category +
                        "' must be an array of TABLE.COLUMN strings");
    for (const auto& c : columns)
      map[category].push_back(c.get<std::string>());
  }
  return map;
}

PipelineContext Engine::context_for(const std::string& pipeline) {
  PipelineContext ctx;
  ctx.schema = &schema();
  ctx.chat = &chat();
  ctx.general_embedder = &general();
  ctx.retrieval = config_.retrieval;
  if (config_.dropout_refill)
    ctx.retrieval.hook_overfetch =
        std::max(ctx.retrieval.hook_overfetch, config_.dropout.k);
  ctx.levenshtein_case_insensitive = config_.levenshtein_case_insensitive;
  ctx.include_draft_in_revision = config_.include_draft_in_revision;

  if (pipeline == "rag") {
    ctx.pair_base = &pair_base();
    return ctx;
  }
  if (pipeline != "cbr")
    throw ConfigError("pipeline must be 'cbr' or 'rag', got '" + pipeline + "'");

  PipelineVariant variant = parse_variant(config_.pipeline_variant);
  ctx.tagger = &tagger();
  ctx.case_base = &case_base();
  if (variant == PipelineVariant::ReplaceTemplateConstruction)
    ctx.pair_base = &pair_base();
  if (variant != PipelineVariant::NoSourceDiscovery) {
    ctx.lookup = &lookup_store();
    ctx.medical_embedder = &medical();
  }
  return ctx;
}

PipelineFn Engine::pipeline_fn(const std::string& pipeline) {
  PipelineContext ctx = context_for(pipeline);
  if (pipeline == "cbr") {
    PipelineVariant variant = parse_variant(config_.pipeline_variant);
    return [ctx, variant](const QuestionSqlPair& pair, const RetrievalHook* hook) {
      return run_cbr(ctx, pair.question, pair.id, hook, variant);
    };
  }
  return [ctx](const QuestionSqlPair& pair, const RetrievalHook* hook) {
    return run_rag(ctx, pair.question, pair.id, hook);
  };
}

json Engine::retain() {
  RunConfig::require_path(config_.corpus_path, "paths.corpus");
  RunConfig::require_path(config_.out_dir, "paths.out_dir");
  auto corpus = load_dataset(config_.corpus_path);

  CaseBaseReport report;
  VectorStore cases = build_case_base(corpus, tagger(), general(), &report);
  VectorStore raw_pairs = build_pair_base(corpus, general());

  fs::create_directories(config_.out_dir);
  fs::path case_dir = fs::path(config_.out_dir) / "case_base";
  fs::path pair_dir = fs::path(config_.out_dir) / "pair_base";
  ArtifactGuard guard;
  guard.track(case_dir);
  guard.track(pair_dir);
  cases.save(case_dir);
  raw_pairs.save(pair_dir);
  guard.commit();

  case_base_ = std::move(cases);
  pair_base_ = std::move(raw_pairs);

  return json{{"pairs", report.pairs},
              {"tagger_failures", report.tagger_failures},
              {"unmatched_spans", report.unmatched_spans},
              {"embedder", case_base_->embedder_id()},
              {"dim", case_base_->dim()},
              {"case_base", case_dir.string()},
              {"pair_base", pair_dir.string()}};
}

json Engine::build_lookup() {
  RunConfig::require_path(config_.out_dir, "paths.out_dir");
  VectorStore store =
      build_lookup_table(db(), schema(), category_columns(), medical());

  fs::create_directories(config_.out_dir);
  fs::path dir = fs::path(config_.out_dir) / "lookup";
  ArtifactGuard guard;
  guard.track(dir);
  store.save(dir);
  guard.commit();

  lookup_ = std::move(store);
  return json{{"entries", lookup_->size()},
              {"embedder", lookup_->embedder_id()},
              {"dim", lookup_->dim()},
              {"path", dir.string()}};
}

json Engine::build_idb_corpus() {
  RunConfig::require_path(config_.corpus_path, "paths.corpus");
  RunConfig::require_path(config_.out_dir, "paths.out_dir");
  auto corpus = load_dataset(config_.corpus_path);

  IdbResult result =
      build_idb(corpus, category_columns(), general(), config_.clustering);

  fs::path dir = fs::path(config_.out_dir) / "idb";
  fs::create_directories(dir);
  ArtifactGuard guard;
  fs::path reduced_path = dir / "corpus.jsonl";
  fs::path clusters_path = dir / "clusters.json";
  guard.track(reduced_path);
  guard.track(clusters_path);

  save_dataset(result.retained, reduced_path);
  json clusters;
  clusters["stats"] = result.stats.to_json();
  clusters["assignments"] = json::array();
  for (std::size_t i = 0; i < result.assignments.size(); ++i) {
    clusters["assignments"].push_back(
        json{{"id", result.assignments[i].first},
             {"cluster", result.assignments[i].second},
             {"masked_sql", result.masked_sql[i]}});
  }
  write_file(clusters_path, clusters.dump(2) + "\n");
  guard.commit();

  json out = result.stats.to_json();
  out["reduced_corpus"] = reduced_path.string();
  out["clusters"] = clusters_path.string();
  return out;
}

json Engine::query(const std::string& question, const std::string& pipeline,
                   std::optional<int> k, const std::string& trace_path) {
  PipelineContext ctx = context_for(pipeline);
  if (k) {
    ctx.retrieval.k = *k;
    ctx.retrieval.validate();
  }

  PipelineResult result;
  if (pipeline == "cbr") {
    result = run_cbr(ctx, question, "adhoc", nullptr,
                     parse_variant(config_.pipeline_variant));
  } else {
    result = run_rag(ctx, question, "adhoc");
  }

  if (!trace_path.empty())
    write_file(trace_path, result.trace.to_json().dump(2) + "\n");

  return json{{"ok", result.ok()},
              {"pipeline", pipeline},
              {"question", question},
              {"sql", result.ok() ? sql::render(*result.query) : ""},
              {"error", result.trace.error},
              {"error_stage", result.trace.error_stage}};
}

json Engine::eval(const std::string& pipeline) {
  RunConfig::require_path(config_.eval_dataset_path, "paths.eval_dataset");
  RunConfig::require_path(config_.out_dir, "paths.out_dir");
  auto dataset = load_dataset(config_.eval_dataset_path);

  std::vector<std::string> pipelines;
  if (pipeline == "both" || pipeline.empty())
    pipelines = {"cbr", "rag"};
  else if (pipeline == "cbr" || pipeline == "rag")
    pipelines = {pipeline};
  else
    throw ConfigError("pipeline must be 'cbr', 'rag' or 'both', got '" +
                      pipeline + "'");

  json report_doc;
  report_doc["label"] = config_.report_label;
  report_doc["config"] = config_.to_json();
  report_doc["pipelines"] = json::object();
  std::string text;
  std::string traces;
  for (const auto& p : pipelines) {
    EvalReport report = evaluate(pipeline_fn(p), dataset, db(),
                                 config_.report_label + "/" + p);
    report_doc["pipelines"][p] = report.to_json(config_.report_include_traces);
    text += report.to_text_table();
    for (const auto& q : report.per_query) {
      traces +=
          json{{"pipeline", p}, {"id", q.id}, {"trace", q.trace}}.dump();
      traces += '\n';
    }
  }

  fs::create_directories(config_.out_dir);
  fs::path json_path = fs::path(config_.out_dir) / "report.json";
  fs::path text_path = fs::path(config_.out_dir) / "report.txt";
  fs::path traces_path = fs::path(config_.out_dir) / "traces.jsonl";
  ArtifactGuard guard;
  guard.track(json_path);
  guard.track(text_path);
  guard.track(traces_path);
  write_file(json_path, report_doc.dump(2) + "\n");
  write_file(text_path, text);
  write_file(traces_path, traces);
  guard.commit();

  report_doc["artifacts"] = json{{"report_json", json_path.string()},
                                 {"report_txt", text_path.string()},
                                 {"traces", traces_path.string()}};
  return report_doc;
}

json Engine::brittleness(const std::string& pipeline, std::optional<double> p_top,
                         std::optional<std::uint64_t> seed) {
  RunConfig::require_path(config_.eval_dataset_path, "paths.eval_dataset");
  RunConfig::require_path(config_.out_dir, "paths.out_dir");
  if (pipeline != "cbr" && pipeline != "rag")
    throw ConfigError("pipeline must be 'cbr' or 'rag', got '" + pipeline + "'");
  auto dataset = load_dataset(config_.eval_dataset_path);

  DropoutPolicy policy = config_.dropout;
  if (p_top) policy.p_top = *p_top;
  if (seed) policy.seed = *seed;
  policy.validate();

  BrittlenessReport report =
      cbrsql::brittleness(pipeline_fn(pipeline), dataset, db(), policy,
                          config_.report_label + "/" + pipeline);

  json doc = report.to_json();
  doc["pipeline"] = pipeline;

  fs::create_directories(config_.out_dir);
  fs::path path =
      fs::path(config_.out_dir) / ("brittleness_" + pipeline + ".json");
  ArtifactGuard guard;
  guard.track(path);
  write_file(path, doc.dump(2) + "\n");
  guard.commit();

  doc["artifact"] = path.string();
  return doc;
}

json Engine::tag_stats() {
  RunConfig::require_path(config_.corpus_path, "paths.corpus");
  auto corpus = load_dataset(config_.corpus_path);
  std::vector<std::string> questions;
  questions.reserve(corpus.size());
  for (const auto& pair : corpus) questions.push_back(pair.question);

  std::size_t failures = 0;
  auto freq = tag_frequency(questions, tagger(), &failures);
  json tags = json::object();
  for (const auto& [tag, count] : freq) tags[tag] = count;
  return json{{"questions", questions.size()},
              {"tagger_failures", failures},
              {"tags", tags}};
}

}  // namespace cbrsql
