// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cbrsql/services.hpp"
#include "cbrsql/util.hpp"

namespace cbrsql {

// [start, end) byte span of an entity mention in a question.
struct EntitySpan {
  std::string text;  // exact substring of the question
  std::size_t start = 0;
  std::size_t end = 0;
  std::string category;
};

// Question with entity mentions replaced by [TAG#n] tokens, n counting
// occurrences of TAG in span order. Replacing the k-th mask token with
// spans[k].text reconstructs the original question exactly.
struct MaskedQuestion {
  std::string masked_text;
  std::vector<EntitySpan> spans;

  std::string unmask() const;
};

// Throws std::invalid_argument unless spans are sorted, non-overlapping,
// in-bounds, and each matches its substring of the question.
MaskedQuestion mask_question(const std::string& question,
                             const std::vector<EntitySpan>& spans);

// Sorts by start; on overlap keeps the longer span (earlier wins ties).
std::vector<EntitySpan> resolve_overlaps(std::vector<EntitySpan> spans);

// Term list mapping surface forms to category tags. Matching is
// case-insensitive, requires word boundaries, and prefers the longest term
// at each position; matched regions never overlap.
class Gazetteer {
 public:
  // TSV lines: term<TAB>CATEGORY. '#' lines and blank lines are skipped.
  static Gazetteer load(const std::filesystem::path& path);
  static Gazetteer from_text(const std::string& tsv_text);

  void add(const std::string& term, const std::string& category);
  std::vector<EntitySpan> tag(const std::string& question) const;
  std::size_t size() const { return count_; }

 private:
  struct Entry {
    std::string term_lower;
    std::string category;
  };
  // Bucketed by first token to keep the scan near-linear.
  std::map<std::string, std::vector<Entry>> by_first_token_;
  std::size_t count_ = 0;
};

class Tagger {
 public:
  virtual ~Tagger() = default;
  virtual std::vector<EntitySpan> tag(const std::string& question) = 0;
};

class GazetteerTagger : public Tagger {
 public:
  explicit GazetteerTagger(Gazetteer gazetteer) : gazetteer_(std::move(gazetteer)) {}
  std::vector<EntitySpan> tag(const std::string& question) override {
    return gazetteer_.tag(question);
  }

 private:
  Gazetteer gazetteer_;
};

// Chat-model tagger. Offsets returned by the model are trusted only when
// they reproduce the span text; otherwise the span is re-anchored at the
// first (case-sensitive, then case-insensitive) occurrence, or dropped.
class LlmTagger : public Tagger {
 public:
  LlmTagger(ChatClient& chat, const Gazetteer* fallback = nullptr)
      : chat_(chat), fallback_(fallback) {}
  std::vector<EntitySpan> tag(const std::string& question) override;

  std::size_t dropped_spans() const { return dropped_spans_; }
  std::size_t fallback_uses() const { return fallback_uses_; }

 private:
  ChatClient& chat_;
  const Gazetteer* fallback_;
  std::size_t dropped_spans_ = 0;
  std::size_t fallback_uses_ = 0;
};

// Tag histogram over a question list; per-question tagger failures are
// counted, not fatal.
std::map<std::string, std::size_t> tag_frequency(const std::vector<std::string>& questions,
                                                 Tagger& tagger,
                                                 std::size_t* failures = nullptr);

}  // namespace cbrsql
