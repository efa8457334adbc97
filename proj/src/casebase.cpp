// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#include "cbrsql/casebase.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "cbrsql/sql.hpp"

namespace cbrsql {

using nlohmann::json;

VectorStore::VectorStore(std::string kind, std::string embedder_id, int dim)
    : kind_(std::move(kind)), embedder_id_(std::move(embedder_id)), dim_(dim) {
  if (dim_ <= 0) throw ConfigError("vector store dimension must be positive");
}

void VectorStore::add(const std::string& id, const Embedding& embedding, json payload) {
  if (static_cast<int>(embedding.values.size()) != dim_)
    throw ConfigError("vector dimension mismatch: got " +
                      std::to_string(embedding.values.size()) + ", store is " +
                      std::to_string(dim_));
  if (index_.count(id)) throw ConfigError("duplicate id in vector store: " + id);
  std::vector<float> v = embedding.values;
  l2_normalize(v);
  index_[id] = ids_.size();
  ids_.push_back(id);
  vectors_.insert(vectors_.end(), v.begin(), v.end());
  payloads_.push_back(std::move(payload));
}

std::span<const float> VectorStore::vector(std::size_t index) const {
  return {vectors_.data() + index * static_cast<std::size_t>(dim_),
          static_cast<std::size_t>(dim_)};
}

std::vector<SearchHit> VectorStore::search(std::span<const float> query_vector,
                                           std::size_t k) const {
  if (k == 0) throw ConfigError("search requires k >= 1");
  if (static_cast<int>(query_vector.size()) != dim_)
    throw ConfigError("query vector dimension mismatch");
  std::vector<float> q(query_vector.begin(), query_vector.end());
  l2_normalize(q);
  std::vector<SearchHit> hits;
  hits.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i)
    hits.push_back({ids_[i], cosine(vector(i), q)});
  std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

const json& VectorStore::payload(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ConfigError("unknown id in vector store: " + id);
  return payloads_[it->second];
}

void VectorStore::require_compatible(const Embedder& embedder) const {
  if (embedder.model_id() != embedder_id_)
    throw ConfigError("snapshot was built with embedder '" + embedder_id_ +
                      "' but the configured embedder is '" + embedder.model_id() +
                      "'; rebuild the snapshot or switch embedders");
  if (embedder.dim() != dim_)
    throw ConfigError("snapshot dimension " + std::to_string(dim_) +
                      " does not match embedder dimension " +
                      std::to_string(embedder.dim()));
}

void VectorStore::save(const std::filesystem::path& dir) const {
  namespace fs = std::filesystem;
  // Stage into a temp dir, then swap in, so failures never leave partial
  // snapshots behind.
  fs::path tmp = dir;
  tmp += ".tmp";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  try {
    fs::create_directories(tmp);
    json manifest;
    manifest["kind"] = kind_;
    manifest["embedder_id"] = embedder_id_;
    manifest["dim"] = dim_;
    manifest["count"] = ids_.size();
    write_file(tmp / "manifest.json", manifest.dump(2) + "\n");
    std::ostringstream lines;
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      json rec;
      rec["id"] = ids_[i];
      rec["payload"] = payloads_[i];
      lines << rec.dump() << "\n";
    }
    write_file(tmp / "payloads.jsonl", lines.str());
    std::ofstream bin(tmp / "vectors.bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw IoError("cannot write vectors.bin");
    bin.write(reinterpret_cast<const char*>(vectors_.data()),
              static_cast<std::streamsize>(vectors_.size() * sizeof(float)));
    if (!bin) throw IoError("short write on vectors.bin");
    bin.close();
    fs::remove_all(dir, ec);
    fs::rename(tmp, dir);
  } catch (...) {
    fs::remove_all(tmp, ec);
    throw;
  }
}

VectorStore VectorStore::load(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw IoError("snapshot manifest malformed: " + std::string(e.what()));
  }
  VectorStore store(manifest.value("kind", std::string("unknown")),
                    manifest.at("embedder_id").get<std::string>(),
                    manifest.at("dim").get<int>());
  const std::size_t count = manifest.at("count").get<std::size_t>();
  const std::string bin = read_file(dir / "vectors.bin");
  const std::size_t expected = count * static_cast<std::size_t>(store.dim_) * sizeof(float);
  if (bin.size() != expected)
    throw IoError("snapshot vectors.bin is " + std::to_string(bin.size()) +
                  " bytes, manifest implies " + std::to_string(expected));
  std::ifstream lines(dir / "payloads.jsonl");
  if (!lines) throw IoError("cannot open snapshot payloads");
  std::string line;
  std::size_t row = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError("snapshot payload line " + std::to_string(row + 1) + " malformed: " +
                    e.what());
    }
    if (row >= count) throw IoError("snapshot has more payload rows than manifest count");
    Embedding e;
    const float* base = reinterpret_cast<const float*>(bin.data()) +
                        row * static_cast<std::size_t>(store.dim_);
    e.values.assign(base, base + store.dim_);
    store.add(rec.at("id").get<std::string>(), e, rec.value("payload", json::object()));
    ++row;
  }
  if (row != count)
    throw IoError("snapshot payload rows (" + std::to_string(row) +
                  ") do not match manifest count (" + std::to_string(count) + ")");
  return store;
}

VectorStore build_case_base(const std::vector<QuestionSqlPair>& pairs, Tagger& tagger,
                            Embedder& embedder, CaseBaseReport* report) {
  CaseBaseReport local;
  local.pairs = pairs.size();
  std::vector<json> payloads;
  std::vector<std::string> texts;
  payloads.reserve(pairs.size());
  texts.reserve(pairs.size());
  for (const auto& pair : pairs) {
    std::vector<EntitySpan> spans;
    try {
      spans = resolve_overlaps(tagger.tag(pair.question));
    } catch (const std::exception&) {
      spans.clear();
      ++local.tagger_failures;
    }
    MaskedQuestion mq = mask_question(pair.question, spans);
    std::vector<sql::SpanValue> values;
    for (const auto& s : spans) values.push_back({s.text, s.category});
    sql::MaskResult masked = sql::mask_sql(sql::parse_sql(pair.sql), values);
    local.unmatched_spans += masked.unmatched;
    json payload;
    payload["pair_id"] = pair.id;
    payload["masked_question"] = mq.masked_text;
    payload["masked_sql"] = masked.text;
    payload["spans"] = json::array();
    for (const auto& s : spans)
      payload["spans"].push_back(json{{"text", s.text},
                                      {"start", s.start},
                                      {"end", s.end},
                                      {"category", s.category}});
    payloads.push_back(std::move(payload));
    texts.push_back(mq.masked_text);
  }
  std::vector<Embedding> vectors = embedder.embed_batch(texts);
  VectorStore store("case_base", embedder.model_id(), embedder.dim());
  for (std::size_t i = 0; i < pairs.size(); ++i)
    store.add(pairs[i].id, vectors[i], std::move(payloads[i]));
  if (report) *report = local;
  return store;
}

VectorStore build_pair_base(const std::vector<QuestionSqlPair>& pairs, Embedder& embedder) {
  std::vector<std::string> texts;
  texts.reserve(pairs.size());
  for (const auto& pair : pairs) texts.push_back(pair.question);
  std::vector<Embedding> vectors = embedder.embed_batch(texts);
  VectorStore store("pair_base", embedder.model_id(), embedder.dim());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    json payload;
    payload["pair_id"] = pairs[i].id;
    payload["question"] = pairs[i].question;
    payload["sql"] = pairs[i].sql;
    store.add(pairs[i].id, vectors[i], std::move(payload));
  }
  return store;
}

MaskedCase masked_case_from_payload(const json& payload) {
  MaskedCase c;
  c.pair_id = payload.value("pair_id", "");
  c.masked_question = payload.value("masked_question", "");
  c.masked_sql = payload.value("masked_sql", "");
  if (payload.contains("spans"))
    for (const auto& s : payload["spans"])
      c.spans.push_back({s.value("text", ""), s.value("start", std::size_t{0}),
                         s.value("end", std::size_t{0}), s.value("category", "")});
  return c;
}

VectorStore build_lookup_table(
    const EhrDb& db, const SchemaDescriptor& schema,
    const std::map<std::string, std::vector<std::string>>& category_columns,
    Embedder& medical_embedder) {
  std::vector<LookupEntry> entries;
  std::set<std::string> seen;
  for (const auto& [category, columns] : category_columns) {
    if (!valid_tag(category))
      throw ConfigError("lookup map category '" + category + "' is not a valid tag");
    for (const auto& qualified : columns) {
      auto dot = qualified.find('.');
      if (dot == std::string::npos)
        throw ConfigError("lookup map column '" + qualified + "' must be TABLE.COLUMN");
      std::string table = qualified.substr(0, dot);
      std::string column = qualified.substr(dot + 1);
      const ColumnDesc* col = schema.find_column(table, column);
      if (!col) throw ConfigError("lookup map column " + qualified + " not in schema");
      if (!col->lookup_eligible)
        throw ConfigError("lookup map column " + qualified + " is not lookup-eligible");
      for (auto& value : db.distinct_values(table, column)) {
        std::string key = table + "\x1f" + column + "\x1f" + value;
        if (!seen.insert(to_upper(key)).second) continue;
        entries.push_back({std::move(value), table, column});
      }
    }
  }
  std::vector<std::string> texts;
  texts.reserve(entries.size());
  for (const auto& e : entries) texts.push_back(e.value);
  std::vector<Embedding> vectors = medical_embedder.embed_batch(texts);
  VectorStore store("lookup", medical_embedder.model_id(), medical_embedder.dim());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    json payload;
    payload["value"] = entries[i].value;
    payload["table"] = entries[i].table;
    payload["column"] = entries[i].column;
    store.add(std::to_string(i), vectors[i], std::move(payload));
  }
  return store;
}

LookupEntry lookup_entry_from_payload(const json& payload) {
  return {payload.value("value", ""), payload.value("table", ""),
          payload.value("column", "")};
}

}  // namespace cbrsql
