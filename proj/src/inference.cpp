// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#include "cbrsql/inference.hpp"

#include <algorithm>
#include <sstream>

#include "cbrsql/prompts.hpp"

namespace cbrsql {

using nlohmann::json;

PipelineVariant parse_variant(const std::string& name) {
  std::string n = to_lower(name);
  for (char& c : n)
    if (c == '-') c = '_';
  if (n == "full") return PipelineVariant::Full;
  if (n == "replace_template_construction")
    return PipelineVariant::ReplaceTemplateConstruction;
  if (n == "no_source_discovery") return PipelineVariant::NoSourceDiscovery;
  throw ConfigError("unknown pipeline variant '" + name +
                    "' (expected full, replace_template_construction, or "
                    "no_source_discovery)");
}

const char* variant_name(PipelineVariant variant) {
  switch (variant) {
    case PipelineVariant::Full: return "full";
    case PipelineVariant::ReplaceTemplateConstruction:
      return "replace_template_construction";
    case PipelineVariant::NoSourceDiscovery: return "no_source_discovery";
  }
  return "full";
}

json PipelineTrace::to_json() const {
  json out;
  out["query_id"] = query_id;
  out["question"] = question;
  out["stages"] = stages;
  out["error"] = error;
  out["error_stage"] = error_stage;
  out["usage"] = json{{"prompt_tokens", usage.prompt_tokens},
                      {"completion_tokens", usage.completion_tokens},
                      {"wall_latency_seconds", usage.wall_latency_seconds}};
  return out;
}

std::vector<Candidate> rerank_candidates(const std::string& element,
                                         const std::vector<SearchHit>& hits,
                                         const VectorStore& lookup,
                                         const RetrievalConfig& cfg,
                                         bool case_insensitive) {
  std::vector<Candidate> out;
  out.reserve(hits.size());
  for (const auto& hit : hits) {
    Candidate c;
    c.entry = lookup_entry_from_payload(lookup.payload(hit.id));
    c.semantic_score = hit.score;
    c.edit_distance = levenshtein(element, c.entry.value, case_insensitive);
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    if (a.edit_distance != b.edit_distance) return a.edit_distance < b.edit_distance;
    if (a.semantic_score != b.semantic_score) return a.semantic_score > b.semantic_score;
    if (a.entry.value != b.entry.value) return a.entry.value < b.entry.value;
    if (a.entry.table != b.entry.table) return a.entry.table < b.entry.table;
    return a.entry.column < b.entry.column;
  });
  if (out.size() > static_cast<std::size_t>(cfg.top_final))
    out.resize(static_cast<std::size_t>(cfg.top_final));
  return out;
}

namespace {

struct UsageSnapshot {
  UsageRecord chat, general, medical;
};

UsageSnapshot snapshot_usage(const PipelineContext& ctx) {
  UsageSnapshot s;
  if (ctx.chat) s.chat = ctx.chat->usage().total();
  if (ctx.general_embedder) s.general = ctx.general_embedder->usage().total();
  if (ctx.medical_embedder) s.medical = ctx.medical_embedder->usage().total();
  return s;
}

UsageRecord usage_delta(const UsageRecord& after, const UsageRecord& before) {
  UsageRecord d;
  d.prompt_tokens = after.prompt_tokens - before.prompt_tokens;
  d.completion_tokens = after.completion_tokens - before.completion_tokens;
  d.wall_latency_seconds = after.wall_latency_seconds - before.wall_latency_seconds;
  return d;
}

void finish_usage(const PipelineContext& ctx, const UsageSnapshot& before,
                  PipelineTrace& trace) {
  UsageSnapshot after = snapshot_usage(ctx);
  trace.usage = UsageRecord{};
  trace.usage += usage_delta(after.chat, before.chat);
  trace.usage += usage_delta(after.general, before.general);
  trace.usage += usage_delta(after.medical, before.medical);
}

json hits_to_json(const std::vector<SearchHit>& hits) {
  json out = json::array();
  for (const auto& h : hits) out.push_back(json{{"id", h.id}, {"score", h.score}});
  return out;
}

struct TemplateStage {
  sql::ParameterizedSql tmpl;
  std::vector<EntitySpan> spans;
  json exemplars = json::array();
};

// Throws PipelineError after the single reprompt fails; records raw outputs.
sql::ParameterizedSql draft_with_retry(const PipelineContext& ctx, ChatRequest req,
                                       json& stage, const char* what) {
  ChatResponse resp = ctx.chat->chat(req);
  stage["output"] = resp.text;
  try {
    return sql::parse_template(resp.text);
  } catch (const SqlParseError& first) {
    req.user_text += "\n\nThe previous answer failed to parse: " +
                     std::string(first.what()) + "\nPrevious answer: " + resp.text +
                     "\nReturn only the corrected SQL.";
    ChatResponse second = ctx.chat->chat(req);
    stage["reprompt_output"] = second.text;
    try {
      return sql::parse_template(second.text);
    } catch (const SqlParseError& again) {
      throw PipelineError(std::string(what) + " produced unparsable SQL twice; last: " +
                          again.what());
    }
  }
}

TemplateStage construct_template(const PipelineContext& ctx, const std::string& question,
                                 const std::string& query_id, const RetrievalHook* hook,
                                 PipelineVariant variant, PipelineTrace& trace) {
  TemplateStage result;
  const bool replaced = variant == PipelineVariant::ReplaceTemplateConstruction;
  const VectorStore* store = replaced ? ctx.pair_base : ctx.case_base;
  if (!store)
    throw PipelineError(replaced ? "pair base is not loaded" : "case base is not loaded");

  std::string retrieval_text = question;
  json tag_stage{{"stage", "tagging"}};
  if (!replaced) {
    std::vector<EntitySpan> spans;
    try {
      spans = resolve_overlaps(ctx.tagger->tag(question));
    } catch (const std::exception& e) {
      tag_stage["tagger_error"] = e.what();
    }
    MaskedQuestion masked = mask_question(question, spans);
    result.spans = masked.spans;
    retrieval_text = masked.masked_text;
    tag_stage["masked_question"] = masked.masked_text;
    json spans_json = json::array();
    for (const auto& s : result.spans)
      spans_json.push_back(json{{"text", s.text},
                                {"start", s.start},
                                {"end", s.end},
                                {"category", s.category}});
    tag_stage["spans"] = spans_json;
    trace.stages.push_back(tag_stage);
  }

  Embedding qvec = ctx.general_embedder->embed_one(retrieval_text);
  const std::size_t fetch = static_cast<std::size_t>(
      ctx.retrieval.k + (hook ? ctx.retrieval.hook_overfetch : 0));
  std::vector<SearchHit> hits = store->search(qvec.values, fetch);
  json retr_stage{{"stage", "retrieval"},
                  {"store", store->kind()},
                  {"hits", hits_to_json(hits)}};
  if (hook) {
    hits = (*hook)(std::move(hits), query_id);
    if (hits.size() > static_cast<std::size_t>(ctx.retrieval.k))
      hits.resize(static_cast<std::size_t>(ctx.retrieval.k));
    retr_stage["post_hook_hits"] = hits_to_json(hits);
  }
  trace.stages.push_back(retr_stage);

  std::ostringstream user;
  json exemplars = json::array();
  if (replaced) {
    user << "Solved examples:\n";
    for (std::size_t i = 0; i < hits.size(); ++i) {
      const json& p = store->payload(hits[i].id);
      user << "[" << (i + 1) << "] Question: " << p.value("question", "") << "\n"
           << "    SQL: " << p.value("sql", "") << "\n";
      // The scripted model reads exemplars under uniform keys; the raw SQL
      // contains no masks, so it passes through mask rewriting untouched.
      exemplars.push_back(json{{"id", hits[i].id},
                               {"masked_question", p.value("question", "")},
                               {"masked_sql", p.value("sql", "")}});
    }
    user << "Schema:\n" << ctx.schema->summary();
    user << "Question: " << question << "\nSQL:";
  } else {
    user << prompts::kTemplateUserPrefix;
    for (std::size_t i = 0; i < hits.size(); ++i) {
      const json& p = store->payload(hits[i].id);
      user << "[" << (i + 1) << "] Question: " << p.value("masked_question", "") << "\n"
           << "    SQL: " << p.value("masked_sql", "") << "\n";
      exemplars.push_back(json{{"id", hits[i].id},
                               {"masked_question", p.value("masked_question", "")},
                               {"masked_sql", p.value("masked_sql", "")}});
    }
    user << "Schema:\n" << ctx.schema->summary();
    user << "Masked question: " << retrieval_text << "\nSQL template:";
  }

  ChatRequest req;
  req.task = replaced ? ChatTask::RagGenerate : ChatTask::Template;
  req.system_text = replaced ? prompts::kRagSystem : prompts::kTemplateSystem;
  req.user_text = user.str();
  json spans_payload = json::array();
  for (const auto& s : result.spans)
    spans_payload.push_back(json{{"text", s.text}, {"category", s.category}});
  if (replaced) {
    req.stub_payload = json{{"exemplars", json::array()}};
    for (const auto& e : exemplars)
      req.stub_payload["exemplars"].push_back(
          json{{"question", e["masked_question"]}, {"sql", e["masked_sql"]}});
  } else {
    req.stub_payload = json{{"masked_question", retrieval_text},
                            {"spans", spans_payload},
                            {"exemplars", exemplars}};
  }

  json draft_stage{{"stage", "template"},
                   {"system", req.system_text},
                   {"user", req.user_text}};
  try {
    result.tmpl = draft_with_retry(ctx, req, draft_stage, "template drafting");
    draft_stage["template"] = sql::render(result.tmpl);
    trace.stages.push_back(draft_stage);
  } catch (const PipelineError&) {
    trace.stages.push_back(draft_stage);
    throw;
  }
  result.exemplars = exemplars;
  return result;
}

struct DiscoveryPlan {
  std::vector<CandidateSet> sets;
  sql::BindingMap bindings;  // pre-filled fallback/raw bindings
  bool needs_revision = false;
};

DiscoveryPlan plan_sources(const PipelineContext& ctx, const sql::ParameterizedSql& tmpl,
                           PipelineVariant variant) {
  DiscoveryPlan plan;
  for (const auto& ref : sql::list_placeholders(tmpl)) {
    CandidateSet set;
    set.ordinal = ref.ordinal;
    set.element = ref.placeholder.element;
    set.tag = ref.placeholder.tag;
    set.slot = ref.placeholder.slot;
    if (variant == PipelineVariant::NoSourceDiscovery ||
        ref.placeholder.slot != sql::Placeholder::Slot::Value) {
      set.fallback_raw = true;
      sql::Binding b;
      if (ref.placeholder.slot == sql::Placeholder::Slot::Value)
        b.value = ref.placeholder.element;
      plan.bindings[ref.ordinal] = std::move(b);
      plan.sets.push_back(std::move(set));
      continue;
    }
    if (!ctx.lookup) throw PipelineError("lookup table is not loaded");
    Embedding evec = ctx.medical_embedder->embed_one(ref.placeholder.element);
    std::vector<SearchHit> hits = ctx.lookup->search(
        evec.values, static_cast<std::size_t>(ctx.retrieval.top_semantic));
    set.candidates = rerank_candidates(ref.placeholder.element, hits, *ctx.lookup,
                                       ctx.retrieval, ctx.levenshtein_case_insensitive);
    if (set.candidates.empty()) {
      // No discovered source; fall back to the question's surface form.
      set.fallback_raw = true;
      sql::Binding b;
      b.value = ref.placeholder.element;
      plan.bindings[ref.ordinal] = std::move(b);
    } else {
      plan.needs_revision = true;
    }
    plan.sets.push_back(std::move(set));
  }
  return plan;
}

json candidate_sets_to_json(const std::vector<CandidateSet>& sets) {
  json out = json::array();
  for (const auto& set : sets) {
    json js{{"ordinal", set.ordinal},
            {"element", set.element},
            {"tag", set.tag},
            {"fallback_raw", set.fallback_raw}};
    js["candidates"] = json::array();
    for (const auto& c : set.candidates)
      js["candidates"].push_back(json{{"value", c.entry.value},
                                      {"table", c.entry.table},
                                      {"column", c.entry.column},
                                      {"semantic_score", c.semantic_score},
                                      {"edit_distance", c.edit_distance}});
    out.push_back(std::move(js));
  }
  return out;
}

// Parses the revision response and checks each binding copies a listed
// candidate. Throws PipelineError on violations.
void apply_revision(const json& structured, const std::vector<CandidateSet>& sets,
                    sql::BindingMap& bindings) {
  if (!structured.is_object() || !structured.contains("bindings"))
    throw PipelineError("revision response lacks a bindings array");
  std::map<int, json> by_ordinal;
  for (const auto& b : structured["bindings"]) {
    if (!b.contains("ordinal")) throw PipelineError("revision binding lacks an ordinal");
    by_ordinal[b["ordinal"].get<int>()] = b;
  }
  for (const auto& set : sets) {
    if (set.fallback_raw || set.candidates.empty()) continue;
    auto it = by_ordinal.find(set.ordinal);
    if (it == by_ordinal.end())
      throw PipelineError("revision response misses placeholder #" +
                          std::to_string(set.ordinal));
    const json& b = it->second;
    const std::string value = b.value("value", "");
    const std::string table = b.value("table", "");
    const std::string column = b.value("column", "");
    bool listed = false;
    for (const auto& c : set.candidates)
      if (c.entry.value == value && iequals(c.entry.table, table) &&
          iequals(c.entry.column, column))
        listed = true;
    if (!listed)
      throw PipelineError("revision binding for placeholder #" +
                          std::to_string(set.ordinal) +
                          " is not one of the offered candidates");
    sql::Binding binding;
    binding.value = value;
    binding.table = table;
    binding.column = column;
    bindings[set.ordinal] = std::move(binding);
  }
}

sql::SqlQuery discover_sources(const PipelineContext& ctx,
                               const sql::ParameterizedSql& tmpl,
                               const std::string& question, PipelineVariant variant,
                               PipelineTrace& trace) {
  DiscoveryPlan plan = plan_sources(ctx, tmpl, variant);
  json stage{{"stage", "source_discovery"},
             {"placeholders", candidate_sets_to_json(plan.sets)}};

  if (!plan.needs_revision) {
    // Raw bindings only: substitute directly; there is no model to reprompt.
    try {
      sql::SqlQuery query = sql::substitute(tmpl, plan.bindings, *ctx.schema);
      stage["sql"] = sql::render(query);
      trace.stages.push_back(stage);
      return query;
    } catch (const PipelineError&) {
      trace.stages.push_back(stage);
      throw;
    }
  }

  ChatRequest req;
  req.task = ChatTask::Revise;
  req.system_text = prompts::kReviseSystem;
  std::ostringstream user;
  user << "Question: " << question << "\n";
  if (ctx.include_draft_in_revision) user << "Draft SQL: " << sql::render(tmpl) << "\n";
  user << "Schema:\n" << ctx.schema->summary();
  json payload_placeholders = json::array();
  for (const auto& set : plan.sets) {
    if (set.fallback_raw || set.candidates.empty()) continue;
    user << "Placeholder #" << set.ordinal << " [\"" << set.element << "\"]@[" << set.tag
         << "] candidates:\n";
    json cands = json::array();
    for (const auto& c : set.candidates) {
      user << "  - \"" << c.entry.value << "\" in " << c.entry.table << "."
           << c.entry.column << "\n";
      cands.push_back(json{{"value", c.entry.value},
                           {"table", c.entry.table},
                           {"column", c.entry.column}});
    }
    payload_placeholders.push_back(json{{"ordinal", set.ordinal},
                                        {"element", set.element},
                                        {"tag", set.tag},
                                        {"candidates", cands}});
  }
  req.user_text = user.str();
  req.response_schema = json{{"name", "bindings"}};
  req.stub_payload = json{{"placeholders", payload_placeholders}};
  stage["system"] = req.system_text;
  stage["user"] = req.user_text;

  auto attempt = [&](const ChatRequest& request, const char* key) -> sql::SqlQuery {
    ChatResponse resp = ctx.chat->chat(request);
    stage[key] = resp.structured.is_null() ? json(resp.text) : resp.structured;
    sql::BindingMap bindings = plan.bindings;
    apply_revision(resp.structured.is_null() ? json::parse(resp.text) : resp.structured,
                   plan.sets, bindings);
    stage["bindings"] = json::array();
    for (const auto& [ordinal, b] : bindings)
      stage["bindings"].push_back(json{{"ordinal", ordinal},
                                       {"value", b.value},
                                       {"table", b.table ? json(*b.table) : json()},
                                       {"column", b.column ? json(*b.column) : json()}});
    return sql::substitute(tmpl, bindings, *ctx.schema);
  };

  try {
    try {
      sql::SqlQuery query = attempt(req, "output");
      stage["sql"] = sql::render(query);
      trace.stages.push_back(stage);
      return query;
    } catch (const std::exception& first) {
      // One reprompt with the failure spelled out, then give up.
      ChatRequest retry = req;
      retry.user_text += "\n\nThe previous bindings were rejected: " +
                         std::string(first.what()) +
                         "\nPick candidates exactly as listed and respond with the "
                         "same JSON shape.";
      sql::SqlQuery query = attempt(retry, "reprompt_output");
      stage["sql"] = sql::render(query);
      trace.stages.push_back(stage);
      return query;
    }
  } catch (const std::exception& e) {
    trace.stages.push_back(stage);
    throw PipelineError(std::string("source discovery failed: ") + e.what());
  }
}

}  // namespace

PipelineResult run_cbr(const PipelineContext& ctx, const std::string& question,
                       const std::string& query_id, const RetrievalHook* hook,
                       PipelineVariant variant) {
  ctx.retrieval.validate();
  PipelineResult result;
  result.trace.query_id = query_id;
  result.trace.question = question;
  UsageSnapshot before = snapshot_usage(ctx);
  std::string stage_name = "template_construction";
  try {
    TemplateStage drafted =
        construct_template(ctx, question, query_id, hook, variant, result.trace);
    stage_name = "source_discovery";
    sql::SqlQuery query =
        discover_sources(ctx, drafted.tmpl, question, variant, result.trace);
    result.trace.stages.push_back(json{{"stage", "final"}, {"sql", sql::render(query)}});
    result.query = std::move(query);
  } catch (const std::exception& e) {
    result.trace.error = e.what();
    result.trace.error_stage = stage_name;
  }
  finish_usage(ctx, before, result.trace);
  return result;
}

PipelineResult run_rag(const PipelineContext& ctx, const std::string& question,
                       const std::string& query_id, const RetrievalHook* hook) {
  ctx.retrieval.validate();
  PipelineResult result;
  result.trace.query_id = query_id;
  result.trace.question = question;
  UsageSnapshot before = snapshot_usage(ctx);
  try {
    if (!ctx.pair_base) throw PipelineError("pair base is not loaded");
    Embedding qvec = ctx.general_embedder->embed_one(question);
    const std::size_t fetch = static_cast<std::size_t>(
        ctx.retrieval.k + (hook ? ctx.retrieval.hook_overfetch : 0));
    std::vector<SearchHit> hits = ctx.pair_base->search(qvec.values, fetch);
    json retr_stage{{"stage", "retrieval"},
                    {"store", ctx.pair_base->kind()},
                    {"hits", hits_to_json(hits)}};
    if (hook) {
      hits = (*hook)(std::move(hits), query_id);
      if (hits.size() > static_cast<std::size_t>(ctx.retrieval.k))
        hits.resize(static_cast<std::size_t>(ctx.retrieval.k));
      retr_stage["post_hook_hits"] = hits_to_json(hits);
    }
    result.trace.stages.push_back(retr_stage);

    std::ostringstream user;
    user << "Solved examples:\n";
    json exemplars = json::array();
    for (std::size_t i = 0; i < hits.size(); ++i) {
      const json& p = ctx.pair_base->payload(hits[i].id);
      user << "[" << (i + 1) << "] Question: " << p.value("question", "") << "\n"
           << "    SQL: " << p.value("sql", "") << "\n";
      exemplars.push_back(json{{"question", p.value("question", "")},
                               {"sql", p.value("sql", "")}});
    }
    user << "Schema:\n" << ctx.schema->summary();
    user << "Question: " << question << "\nSQL:";

    ChatRequest req;
    req.task = ChatTask::RagGenerate;
    req.system_text = prompts::kRagSystem;
    req.user_text = user.str();
    req.stub_payload = json{{"exemplars", exemplars}};

    json draft_stage{{"stage", "generate"},
                     {"system", req.system_text},
                     {"user", req.user_text}};
    try {
      sql::ParameterizedSql tmpl = draft_with_retry(ctx, req, draft_stage, "generation");
      sql::SqlQuery query = sql::to_concrete(tmpl);
      draft_stage["sql"] = sql::render(query);
      result.trace.stages.push_back(draft_stage);
      result.query = std::move(query);
    } catch (const std::exception&) {
      result.trace.stages.push_back(draft_stage);
      throw;
    }
  } catch (const std::exception& e) {
    result.trace.error = e.what();
    result.trace.error_stage = "generate";
  }
  finish_usage(ctx, before, result.trace);
  return result;
}

}  // namespace cbrsql
