// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbrsql/util.hpp"

namespace cbrsql {

struct UsageRecord {
  long prompt_tokens = 0;
  long completion_tokens = 0;
  double wall_latency_seconds = 0.0;

  UsageRecord& operator+=(const UsageRecord& other) {
    prompt_tokens += other.prompt_tokens;
    completion_tokens += other.completion_tokens;
    wall_latency_seconds += other.wall_latency_seconds;
    return *this;
  }
};

// Append-only, thread-safe usage ledger shared by the service clients.
class UsageLog {
 public:
  void append(const UsageRecord& rec) {
    std::lock_guard<std::mutex> lock(mu_);
    records_.push_back(rec);
  }
  UsageRecord total() const {
    std::lock_guard<std::mutex> lock(mu_);
    UsageRecord sum;
    for (const auto& r : records_) sum += r;
    return sum;
  }
  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return records_.size();
  }

 private:
  mutable std::mutex mu_;
  std::vector<UsageRecord> records_;
};

enum class ChatTask { Tag, Template, Revise, RagGenerate };

// A chat call. stub_payload mirrors the prompt content as structured JSON;
// the scripted stub consumes only that mirror, remote clients ignore it.
struct ChatRequest {
  ChatTask task = ChatTask::Template;
  std::string system_text;
  std::string user_text;
  nlohmann::json response_schema;  // null = free text expected
  nlohmann::json stub_payload;
  double temperature = 0.0;
  int max_tokens = 1024;
};

struct ChatResponse {
  std::string text;
  nlohmann::json structured;  // parsed JSON when response_schema was set
  UsageRecord usage;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatResponse chat(const ChatRequest& request) = 0;
  virtual std::string model_id() const = 0;
  UsageLog& usage() { return usage_; }

 protected:
  UsageLog usage_;
};

// Fully scripted offline chat model. Behaviors by task:
//   Tag: delegates to the injected tagger callback over payload.question.
//   Template: takes the first exemplar's SQL and rewrites each [TAG#n] mask
//     to a value placeholder using the n-th question span of that tag;
//     unmatched masks are left in place. No exemplars -> empty output.
//   Revise: binds each placeholder to the candidate with minimal
//     case-insensitive edit distance to its element, ties broken by value,
//     then table, then column.
//   RagGenerate: echoes the first exemplar's SQL verbatim.
// Reported latency is always 0.0 so offline runs are byte-reproducible.
class StubChatClient : public ChatClient {
 public:
  using TagFn =
      std::function<nlohmann::json(const std::string& question)>;  // -> spans array
  explicit StubChatClient(TagFn tag_fn = nullptr) : tag_fn_(std::move(tag_fn)) {}
  ChatResponse chat(const ChatRequest& request) override;
  std::string model_id() const override { return "stub-chat-v1"; }

 private:
  TagFn tag_fn_;
};

// Remote chat-completions client (OpenAI wire format). Transport errors and
// 5xx responses are retried up to 3 attempts with doubling backoff.
class HttpChatClient : public ChatClient {
 public:
  HttpChatClient(std::string endpoint, std::string model, std::string api_key,
                 int retry_base_ms = 100);
  ChatResponse chat(const ChatRequest& request) override;
  std::string model_id() const override { return model_; }

 private:
  std::string endpoint_;
  std::string model_;
  std::string api_key_;
  int retry_base_ms_;
};

struct Embedding {
  std::vector<float> values;
};

// Unit-normalizes in place; an all-zero vector is left as zeros.
void l2_normalize(std::vector<float>& values);
double cosine(std::span<const float> a, std::span<const float> b);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<Embedding> embed_batch(std::span<const std::string> texts) = 0;
  virtual std::string model_id() const = 0;
  virtual int dim() const = 0;
  Embedding embed_one(const std::string& text) {
    std::vector<std::string> batch{text};
    return embed_batch(batch).front();
  }
  UsageLog& usage() { return usage_; }

 protected:
  UsageLog usage_;
};

// Deterministic hashed bag-of-tokens embedding: lowercase alphanumeric
// tokens, FNV-1a 64 bucket, counts, L2-normalized. The variant string keys
// separate "generalist" and "medical" embedding spaces.
class StubEmbedder : public Embedder {
 public:
  explicit StubEmbedder(int dim = 256, std::string variant = "general");
  std::vector<Embedding> embed_batch(std::span<const std::string> texts) override;
  std::string model_id() const override { return "stub-embed-" + variant_; }
  int dim() const override { return dim_; }

 private:
  int dim_;
  std::string variant_;
};

// Remote embeddings client (OpenAI wire format), same retry policy as chat.
class HttpEmbedder : public Embedder {
 public:
  HttpEmbedder(std::string endpoint, std::string model, std::string api_key, int dim,
               int retry_base_ms = 100);
  std::vector<Embedding> embed_batch(std::span<const std::string> texts) override;
  std::string model_id() const override { return model_; }
  int dim() const override { return dim_; }

 private:
  std::string endpoint_;
  std::string model_;
  std::string api_key_;
  int dim_;
  int retry_base_ms_;
};

}  // namespace cbrsql
