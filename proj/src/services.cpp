// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#include "cbrsql/services.hpp"

#include <chrono>
#include <cmath>
#include <regex>
#include <thread>

#include <httplib.h>

#include "cbrsql/levenshtein.hpp"

namespace cbrsql {

using nlohmann::json;

void l2_normalize(std::vector<float>& values) {
  double norm = 0.0;
  for (float v : values) norm += static_cast<double>(v) * v;
  norm = std::sqrt(norm);
  if (norm <= 0.0) return;
  for (float& v : values) v = static_cast<float>(v / norm);
}

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw ConfigError("cosine: dimension mismatch " + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()));
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  if (dot > 1.0) dot = 1.0;
  if (dot < -1.0) dot = -1.0;
  return dot;
}

namespace {

UsageRecord stub_usage(const ChatRequest& req, const std::string& output) {
  UsageRecord u;
  u.prompt_tokens = count_ws_tokens(req.system_text) + count_ws_tokens(req.user_text);
  u.completion_tokens = count_ws_tokens(output);
  u.wall_latency_seconds = 0.0;
  return u;
}

std::string stub_template_output(const json& payload) {
  if (!payload.contains("exemplars") || payload["exemplars"].empty()) return "";
  std::string sql = payload["exemplars"][0].value("masked_sql", std::string());
  // n-th span of a tag, in question order.
  std::map<std::string, std::vector<std::string>> by_tag;
  if (payload.contains("spans"))
    for (const auto& s : payload["spans"])
      by_tag[s.value("category", "")].push_back(s.value("text", ""));
  static const std::regex mask_re(R"(\[([A-Z][A-Z0-9_]*)#([0-9]+)\])");
  std::string out;
  std::sregex_iterator it(sql.begin(), sql.end(), mask_re), end;
  std::size_t last = 0;
  for (; it != end; ++it) {
    const std::smatch& m = *it;
    out.append(sql, last, static_cast<std::size_t>(m.position()) - last);
    const std::string tag = m[1].str();
    const std::size_t n = static_cast<std::size_t>(std::stoi(m[2].str()));
    auto found = by_tag.find(tag);
    if (found != by_tag.end() && n >= 1 && n <= found->second.size()) {
      std::string element = found->second[n - 1];
      std::string quoted;
      for (char c : element) {
        if (c == '"') quoted.push_back('"');
        quoted.push_back(c);
      }
      out += "[\"" + quoted + "\"]@[" + tag + "]";
    } else {
      out += m.str();  // unmatched masks stay put
    }
    last = static_cast<std::size_t>(m.position() + m.length());
  }
  out.append(sql, last, sql.size() - last);
  return out;
}

json stub_revise_output(const json& payload) {
  json bindings = json::array();
  if (payload.contains("placeholders")) {
    for (const auto& ph : payload["placeholders"]) {
      const std::string element = ph.value("element", "");
      const json& cands = ph.contains("candidates") ? ph["candidates"] : json::array();
      if (cands.empty()) continue;
      std::size_t best = 0;
      auto rank = [&](const json& c) {
        return std::make_tuple(levenshtein(element, c.value("value", ""), true),
                               c.value("value", ""), c.value("table", ""),
                               c.value("column", ""));
      };
      for (std::size_t i = 1; i < cands.size(); ++i)
        if (rank(cands[i]) < rank(cands[best])) best = i;
      json b;
      b["ordinal"] = ph.value("ordinal", 0);
      b["value"] = cands[best].value("value", "");
      b["table"] = cands[best].value("table", "");
      b["column"] = cands[best].value("column", "");
      bindings.push_back(b);
    }
  }
  json out;
  out["bindings"] = bindings;
  return out;
}

}  // namespace

ChatResponse StubChatClient::chat(const ChatRequest& request) {
  ChatResponse resp;
  switch (request.task) {
    case ChatTask::Tag: {
      json out;
      out["spans"] = tag_fn_ ? tag_fn_(request.stub_payload.value("question", ""))
                             : json::array();
      resp.structured = out;
      resp.text = out.dump();
      break;
    }
    case ChatTask::Template:
      resp.text = stub_template_output(request.stub_payload);
      break;
    case ChatTask::Revise: {
      resp.structured = stub_revise_output(request.stub_payload);
      resp.text = resp.structured.dump();
      break;
    }
    case ChatTask::RagGenerate: {
      const json& payload = request.stub_payload;
      if (payload.contains("exemplars") && !payload["exemplars"].empty())
        resp.text = payload["exemplars"][0].value("sql", std::string());
      break;
    }
  }
  resp.usage = stub_usage(request, resp.text);
  usage_.append(resp.usage);
  return resp;
}

namespace {

struct ParsedUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // prefix like /v1
};

ParsedUrl split_url(const std::string& endpoint) {
  auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos)
    throw ConfigError("endpoint must start with http:// or https://: " + endpoint);
  auto path_start = endpoint.find('/', scheme_end + 3);
  ParsedUrl out;
  if (path_start == std::string::npos) {
    out.base = endpoint;
  } else {
    out.base = endpoint.substr(0, path_start);
    out.path = endpoint.substr(path_start);
    while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  }
  return out;
}

// POSTs with up to 3 attempts; retries transport failures and 5xx.
json post_json(const std::string& endpoint, const std::string& route,
               const std::string& api_key, const json& body, int retry_base_ms,
               double* latency_seconds) {
  ParsedUrl url = split_url(endpoint);
  httplib::Client client(url.base);
  client.set_read_timeout(120, 0);
  client.set_connection_timeout(10, 0);
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
  const std::string payload = body.dump();
  std::string last_error;
  for (int attempt = 0; attempt < 3; ++attempt) {
    if (attempt > 0) {
      int delay = retry_base_ms * (1 << (attempt - 1));
      std::this_thread::sleep_for(std::chrono::milliseconds(std::min(delay, 1000)));
    }
    auto start = std::chrono::steady_clock::now();
    httplib::Result res = client.Post(url.path + route, headers, payload,
                                      "application/json");
    auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start);
    if (latency_seconds) *latency_seconds += elapsed.count();
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "server error " + std::to_string(res->status) + ": " + res->body;
      continue;
    }
    if (res->status != 200)
      throw ServiceError("request to " + route + " failed with status " +
                         std::to_string(res->status) + ": " + res->body);
    try {
      return json::parse(res->body);
    } catch (const json::exception& e) {
      throw ServiceError("malformed JSON from " + route + ": " + e.what());
    }
  }
  throw ServiceError("request to " + route + " failed after 3 attempts; last: " +
                     last_error);
}

UsageRecord usage_from_response(const json& resp, double latency) {
  UsageRecord u;
  if (resp.contains("usage")) {
    u.prompt_tokens = resp["usage"].value("prompt_tokens", 0L);
    u.completion_tokens = resp["usage"].value("completion_tokens", 0L);
  }
  u.wall_latency_seconds = latency;
  return u;
}

}  // namespace

HttpChatClient::HttpChatClient(std::string endpoint, std::string model,
                               std::string api_key, int retry_base_ms)
    : endpoint_(std::move(endpoint)),
      model_(std::move(model)),
      api_key_(std::move(api_key)),
      retry_base_ms_(retry_base_ms) {}

ChatResponse HttpChatClient::chat(const ChatRequest& request) {
  json body;
  body["model"] = model_;
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  body["messages"] = json::array({
      json{{"role", "system"}, {"content", request.system_text}},
      json{{"role", "user"}, {"content", request.user_text}},
  });
  if (!request.response_schema.is_null())
    body["response_format"] =
        json{{"type", "json_schema"}, {"json_schema", request.response_schema}};
  double latency = 0.0;
  json resp = post_json(endpoint_, "/chat/completions", api_key_, body, retry_base_ms_,
                        &latency);
  ChatResponse out;
  try {
    out.text = resp.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ServiceError(std::string("chat response missing content: ") + e.what());
  }
  if (!request.response_schema.is_null()) {
    try {
      out.structured = json::parse(out.text);
    } catch (const json::exception& e) {
      throw ServiceError(std::string("structured chat output is not valid JSON: ") +
                         e.what());
    }
  }
  out.usage = usage_from_response(resp, latency);
  usage_.append(out.usage);
  return out;
}

StubEmbedder::StubEmbedder(int dim, std::string variant)
    : dim_(dim), variant_(std::move(variant)) {
  if (dim_ <= 0) throw ConfigError("embedding dimension must be positive");
}

std::vector<Embedding> StubEmbedder::embed_batch(std::span<const std::string> texts) {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  const std::uint64_t salt = fnv1a64(variant_);
  long tokens = 0;
  for (const auto& text : texts) {
    Embedding e;
    e.values.assign(static_cast<std::size_t>(dim_), 0.0f);
    for (const auto& tok : word_tokens(text)) {
      std::uint64_t h = fnv1a64(tok, salt);
      e.values[h % static_cast<std::uint64_t>(dim_)] += 1.0f;
      ++tokens;
    }
    l2_normalize(e.values);
    out.push_back(std::move(e));
  }
  UsageRecord u;
  u.prompt_tokens = tokens;
  u.wall_latency_seconds = 0.0;
  usage_.append(u);
  return out;
}

HttpEmbedder::HttpEmbedder(std::string endpoint, std::string model, std::string api_key,
                           int dim, int retry_base_ms)
    : endpoint_(std::move(endpoint)),
      model_(std::move(model)),
      api_key_(std::move(api_key)),
      dim_(dim),
      retry_base_ms_(retry_base_ms) {
  if (dim_ <= 0) throw ConfigError("embedding dimension must be positive");
}

std::vector<Embedding> HttpEmbedder::embed_batch(std::span<const std::string> texts) {
  json body;
  body["model"] = model_;
  body["input"] = json::array();
  for (const auto& t : texts) body["input"].push_back(t);
  double latency = 0.0;
  json resp = post_json(endpoint_, "/embeddings", api_key_, body, retry_base_ms_, &latency);
  std::vector<Embedding> out;
  try {
    for (const auto& item : resp.at("data")) {
      Embedding e;
      e.values = item.at("embedding").get<std::vector<float>>();
      if (static_cast<int>(e.values.size()) != dim_)
        throw ConfigError("embedding dimension mismatch: endpoint returned " +
                          std::to_string(e.values.size()) + ", configured " +
                          std::to_string(dim_));
      l2_normalize(e.values);
      out.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ServiceError(std::string("embeddings response malformed: ") + e.what());
  }
  if (out.size() != texts.size())
    throw ServiceError("embeddings response count mismatch");
  usage_.append(usage_from_response(resp, latency));
  return out;
}

}  // namespace cbrsql
