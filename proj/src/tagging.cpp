// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#include "cbrsql/tagging.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "cbrsql/datamodel.hpp"

namespace cbrsql {

using nlohmann::json;

std::string MaskedQuestion::unmask() const {
  std::string out = masked_text;
  std::map<std::string, int> counts;
  std::size_t from = 0;
  for (const auto& span : spans) {
    const int n = ++counts[span.category];
    const std::string token = "[" + span.category + "#" + std::to_string(n) + "]";
    std::size_t at = out.find(token, from);
    if (at == std::string::npos)
      throw std::invalid_argument("mask token " + token + " missing from masked text");
    out.replace(at, token.size(), span.text);
    from = at + span.text.size();
  }
  return out;
}

MaskedQuestion mask_question(const std::string& question,
                             const std::vector<EntitySpan>& spans) {
  std::size_t prev_end = 0;
  bool first = true;
  for (const auto& span : spans) {
    if (span.end > question.size() || span.start >= span.end)
      throw std::invalid_argument("span out of bounds");
    if (!first && span.start < prev_end)
      throw std::invalid_argument("overlapping spans");
    if (question.compare(span.start, span.end - span.start, span.text) != 0)
      throw std::invalid_argument("span text does not match question substring");
    if (!valid_tag(span.category))
      throw std::invalid_argument("invalid category tag '" + span.category + "'");
    prev_end = span.end;
    first = false;
  }
  MaskedQuestion out;
  out.spans = spans;
  std::map<std::string, int> counts;
  std::string text;
  std::size_t cursor = 0;
  for (const auto& span : spans) {
    text.append(question, cursor, span.start - cursor);
    const int n = ++counts[span.category];
    text += "[" + span.category + "#" + std::to_string(n) + "]";
    cursor = span.end;
  }
  text.append(question, cursor, question.size() - cursor);
  out.masked_text = std::move(text);
  return out;
}

std::vector<EntitySpan> resolve_overlaps(std::vector<EntitySpan> spans) {
  std::stable_sort(spans.begin(), spans.end(), [](const EntitySpan& a, const EntitySpan& b) {
    if (a.start != b.start) return a.start < b.start;
    return (a.end - a.start) > (b.end - b.start);
  });
  std::vector<EntitySpan> out;
  for (auto& span : spans) {
    if (!out.empty() && span.start < out.back().end) {
      if (span.end - span.start > out.back().end - out.back().start &&
          span.start >= (out.size() > 1 ? out[out.size() - 2].end : 0)) {
        out.back() = std::move(span);
      }
      continue;
    }
    out.push_back(std::move(span));
  }
  return out;
}

Gazetteer Gazetteer::load(const std::filesystem::path& path) {
  return from_text(read_file(path));
}

Gazetteer Gazetteer::from_text(const std::string& tsv_text) {
  Gazetteer g;
  std::istringstream in(tsv_text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw IoError("gazetteer line " + std::to_string(lineno) + ": missing tab separator");
    std::string term = line.substr(0, tab);
    std::string category = line.substr(tab + 1);
    if (term.empty() || !valid_tag(category))
      throw IoError("gazetteer line " + std::to_string(lineno) + ": bad term or category");
    g.add(term, category);
  }
  return g;
}

void Gazetteer::add(const std::string& term, const std::string& category) {
  if (!valid_tag(category)) throw ConfigError("invalid category tag '" + category + "'");
  std::string lower = to_lower(term);
  auto toks = word_tokens(lower);
  if (toks.empty()) throw ConfigError("gazetteer term has no word characters: " + term);
  auto& bucket = by_first_token_[toks[0]];
  bucket.push_back({std::move(lower), category});
  // Longest-first within the bucket makes the scan prefer longer spans.
  std::stable_sort(bucket.begin(), bucket.end(), [](const Entry& a, const Entry& b) {
    return a.term_lower.size() > b.term_lower.size();
  });
  ++count_;
}

std::vector<EntitySpan> Gazetteer::tag(const std::string& question) const {
  std::vector<EntitySpan> out;
  const std::string lower = to_lower(question);
  std::size_t i = 0;
  while (i < lower.size()) {
    if (!is_word_char(lower[i]) || (i > 0 && is_word_char(lower[i - 1]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < lower.size() && is_word_char(lower[j])) ++j;
    auto bucket = by_first_token_.find(lower.substr(i, j - i));
    if (bucket != by_first_token_.end()) {
      bool matched = false;
      for (const auto& entry : bucket->second) {
        const std::size_t len = entry.term_lower.size();
        if (i + len > lower.size()) continue;
        if (lower.compare(i, len, entry.term_lower) != 0) continue;
        if (i + len < lower.size() && is_word_char(lower[i + len])) continue;
        out.push_back({question.substr(i, len), i, i + len, entry.category});
        i += len;
        matched = true;
        break;
      }
      if (matched) continue;
    }
    i = j;
  }
  return out;
}

std::vector<EntitySpan> LlmTagger::tag(const std::string& question) {
  ChatRequest req;
  req.task = ChatTask::Tag;
  req.system_text =
      "You label entity mentions in clinical questions. Return JSON with a "
      "\"spans\" array of {text, start, end, category} objects, using uppercase "
      "category tags.";
  req.user_text = "Question: " + question;
  req.response_schema = json{{"name", "entity_spans"}};
  req.stub_payload = json{{"question", question}};
  json spans_json;
  try {
    ChatResponse resp = chat_.chat(req);
    spans_json = resp.structured.is_object() && resp.structured.contains("spans")
                     ? resp.structured["spans"]
                     : json::parse(resp.text).at("spans");
  } catch (const std::exception&) {
    ++fallback_uses_;
    return fallback_ ? fallback_->tag(question) : std::vector<EntitySpan>{};
  }
  std::vector<EntitySpan> spans;
  for (const auto& s : spans_json) {
    EntitySpan span;
    span.text = s.value("text", "");
    span.category = s.value("category", "");
    if (span.text.empty() || !valid_tag(span.category)) {
      ++dropped_spans_;
      continue;
    }
    long start = s.value("start", -1L);
    long end = s.value("end", -1L);
    bool anchored = start >= 0 && end > start &&
                    static_cast<std::size_t>(end) <= question.size() &&
                    question.compare(static_cast<std::size_t>(start), span.text.size(),
                                     span.text) == 0 &&
                    static_cast<std::size_t>(end - start) == span.text.size();
    if (!anchored) {
      // Repair: first occurrence, exact then case-insensitive.
      std::size_t at = question.find(span.text);
      if (at == std::string::npos) {
        const std::string lq = to_lower(question), lt = to_lower(span.text);
        std::size_t lat = lq.find(lt);
        if (lat == std::string::npos) {
          ++dropped_spans_;
          continue;
        }
        at = lat;
        span.text = question.substr(at, lt.size());
      }
      start = static_cast<long>(at);
      end = start + static_cast<long>(span.text.size());
    }
    span.start = static_cast<std::size_t>(start);
    span.end = static_cast<std::size_t>(end);
    spans.push_back(std::move(span));
  }
  return resolve_overlaps(std::move(spans));
}

std::map<std::string, std::size_t> tag_frequency(const std::vector<std::string>& questions,
                                                 Tagger& tagger, std::size_t* failures) {
  std::map<std::string, std::size_t> freq;
  std::size_t failed = 0;
  for (const auto& q : questions) {
    try {
      for (const auto& span : tagger.tag(q)) ++freq[span.category];
    } catch (const std::exception&) {
      ++failed;
    }
  }
  if (failures) *failures = failed;
  return freq;
}

}  // namespace cbrsql
