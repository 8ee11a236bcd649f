// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors

#include "claimscope/document.hpp"

#include <algorithm>

#include <unicode/uchar.h>

#include "claimscope/error.hpp"
#include "claimscope/text.hpp"

namespace claimscope {
namespace {

bool is_terminal(char32_t c) { return c == U'.' || c == U'!' || c == U'?'; }

bool is_closer(char32_t c) {
  switch (c) {
    case U'"': case U'\'': case U')': case U']': case U'}':
    case U'’': case U'”': case U'»':
      return true;
    default:
      return false;
  }
}

bool is_opener(char32_t c) {
  switch (c) {
    case U'"': case U'\'': case U'(': case U'[': case U'{':
    case U'‘': case U'“': case U'«':
      return true;
    default:
      return false;
  }
}

// The word ending right before the period at `dot`, lowercased, with leading
// openers stripped.
std::string word_before(const std::u32string& cps, std::size_t dot) {
  std::size_t begin = dot;
  while (begin > 0 && !text::is_space(cps[begin - 1])) --begin;
  while (begin < dot && is_opener(cps[begin])) ++begin;
  std::u32string word;
  for (std::size_t i = begin; i < dot; ++i) {
    word.push_back(static_cast<char32_t>(u_tolower(static_cast<UChar32>(cps[i]))));
  }
  return text::to_utf8(word);
}

bool is_abbreviation(const std::u32string& cps, std::size_t dot,
                     const SegmenterOptions& options) {
  std::string word = word_before(cps, dot);
  if (word.empty()) return false;
  if (options.abbreviations.count(word) > 0) return true;
  // Single-letter initials ("J. Smith").
  std::size_t begin = dot;
  while (begin > 0 && !text::is_space(cps[begin - 1]) && !is_opener(cps[begin - 1])) {
    --begin;
  }
  return dot - begin == 1 && text::is_upper(cps[begin]);
}

}  // namespace

std::size_t TokenAlignment::non_special_count() const {
  return static_cast<std::size_t>(
      std::count(special_token_mask.begin(), special_token_mask.end(), false));
}

std::set<std::string> SegmenterOptions::default_abbreviations() {
  return {"mr",   "mrs",  "ms",   "dr",   "prof", "sr",   "jr",   "st",
          "mt",   "vs",   "e.g",  "i.e",  "cf",   "fig",  "figs", "vol",
          "approx", "inc", "ltd", "corp", "dept", "gen",  "gov",  "sen",
          "rep",  "capt", "lt",   "col",  "sgt",  "jan",  "feb",  "mar",
          "apr",  "jun",  "jul",  "aug",  "sep",  "sept", "oct",  "nov",
          "dec",  "u.s",  "u.k",  "ph.d", "al",   "eq",   "eqs",  "ch",
          "sec",  "ave",  "blvd", "pp"};
}

const SentenceSpan& Document::sentence(std::size_t index) const {
  if (index >= sentences_.size()) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "sentence index " + std::to_string(index) + " out of range (document has " +
                    std::to_string(sentences_.size()) + " sentences)");
  }
  return sentences_[index];
}

std::string Document::sentence_text(std::size_t index) const {
  const SentenceSpan& s = sentence(index);
  return text::to_utf8(std::u32string_view(codepoints_).substr(
      s.char_start, s.char_end - s.char_start));
}

std::size_t Document::token_count() const {
  return aligned_ && !sentences_.empty() ? sentences_.back().token_end : 0;
}

Document segment(std::string_view input, const SegmenterOptions& options) {
  Document doc;
  doc.text_ = text::normalize_document(input);
  doc.codepoints_ = text::to_u32(doc.text_);
  doc.doc_id_ = text::hex(text::sha256(doc.text_));
  if (doc.codepoints_.empty()) {
    throw Error(ErrorCode::kEmptyDocument, "document has no sentence-worthy content",
                Stage::kSegmentation);
  }

  const std::u32string& cps = doc.codepoints_;
  const std::size_t n = cps.size();
  auto push = [&](std::size_t start, std::size_t end) {
    doc.sentences_.push_back({doc.sentences_.size(), start, end, 0, 0});
  };

  // Normalized text starts and ends with non-whitespace.
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < n) {
    if (text::is_space(cps[i])) {
      std::size_t ws_end = i;
      int newlines = 0;
      while (ws_end < n && text::is_space(cps[ws_end])) {
        if (cps[ws_end] == U'\n') ++newlines;
        ++ws_end;
      }
      if (options.paragraph_breaks && newlines >= 2) {
        push(start, i);
        start = ws_end;
      }
      i = ws_end;
      continue;
    }
    if (!is_terminal(cps[i])) {
      ++i;
      continue;
    }
    std::size_t dot = i;
    std::size_t end = i;
    while (end < n && is_terminal(cps[end])) ++end;
    while (end < n && is_closer(cps[end])) ++end;
    i = end;
    if (end >= n || !text::is_space(cps[end])) continue;
    std::size_t next = end;
    while (next < n && text::is_space(cps[next])) ++next;
    std::size_t probe = next;
    while (probe < n && is_opener(cps[probe])) ++probe;
    if (probe >= n || !text::is_upper(cps[probe])) continue;
    if (cps[dot] == U'.' && end == dot + 1 && is_abbreviation(cps, dot, options)) continue;
    push(start, end);
    start = next;
    i = next;
  }
  push(start, n);
  return doc;
}

Document align(const Document& doc, const TokenAlignment& alignment) {
  if (alignment.token_char_offsets.size() != alignment.special_token_mask.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "token offsets and special-token mask differ in length");
  }
  if (doc.sentences_.empty()) {
    throw Error(ErrorCode::kEmptyDocument, "document has no sentences");
  }
  Document out = doc;
  for (auto& s : out.sentences_) s.token_start = s.token_end = 0;

  const std::size_t length = doc.length();
  std::vector<std::size_t> counts(doc.sentences_.size(), 0);
  std::size_t sentence = 0;
  std::uint32_t last_start = 0;
  for (std::size_t t = 0; t < alignment.size(); ++t) {
    const TokenOffset& off = alignment.token_char_offsets[t];
    if (off.char_start > off.char_end || off.char_end > length) {
      throw Error(ErrorCode::kOffsetOutOfBounds,
                  "token " + std::to_string(t) + " offsets [" + std::to_string(off.char_start) +
                      "," + std::to_string(off.char_end) + ") exceed text length " +
                      std::to_string(length));
    }
    if (alignment.special_token_mask[t]) continue;
    if (off.char_start < last_start) {
      throw Error(ErrorCode::kInvalidArgument,
                  "token offsets are not monotonically non-decreasing at token " +
                      std::to_string(t));
    }
    last_start = off.char_start;
    while (sentence + 1 < doc.sentences_.size() &&
           off.char_start >= doc.sentences_[sentence].char_end) {
      ++sentence;
    }
    ++counts[sentence];
  }

  std::size_t cursor = 0;
  for (std::size_t s = 0; s < counts.size(); ++s) {
    if (counts[s] == 0) {
      throw Error(ErrorCode::kAlignmentGap,
                  "sentence " + std::to_string(s) + " received no tokens");
    }
    out.sentences_[s].token_start = cursor;
    cursor += counts[s];
    out.sentences_[s].token_end = cursor;
  }
  out.aligned_ = true;
  return out;
}

std::size_t find_sentence(const Document& doc, std::size_t char_offset) {
  if (char_offset >= doc.length()) {
    throw Error(ErrorCode::kOffsetOutOfBounds,
                "offset " + std::to_string(char_offset) + " outside text of length " +
                    std::to_string(doc.length()));
  }
  const auto& spans = doc.sentences();
  auto it = std::upper_bound(spans.begin(), spans.end(), char_offset,
                             [](std::size_t off, const SentenceSpan& s) { return off < s.char_end; });
  // Normalized text ends inside the last sentence, so `it` is always valid.
  return static_cast<std::size_t>(it - spans.begin());
}

TokenAlignment word_tokenize(const Document& doc, bool leading_bos) {
  TokenAlignment out;
  if (leading_bos) {
    out.token_char_offsets.push_back({0, 0});
    out.special_token_mask.push_back(true);
  }
  const auto& cps = doc.codepoints();
  std::size_t i = 0;
  while (i < cps.size()) {
    if (text::is_space(cps[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < cps.size() && !text::is_space(cps[j])) ++j;
    out.token_char_offsets.push_back(
        {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
    out.special_token_mask.push_back(false);
    i = j;
  }
  return out;
}

nlohmann::json to_json(const Document& doc) {
  nlohmann::json sentences = nlohmann::json::array();
  for (const auto& s : doc.sentences()) {
    sentences.push_back({{"index", s.index},
                         {"char_start", s.char_start},
                         {"char_end", s.char_end},
                         {"token_start", s.token_start},
                         {"token_end", s.token_end}});
  }
  return {{"doc_id", doc.doc_id()}, {"text", doc.text()}, {"sentences", sentences}};
}

Document document_from_json(const nlohmann::json& j) {
  Document doc;
  try {
    doc.text_ = j.at("text").get<std::string>();
    if (text::normalize_document(doc.text_) != doc.text_) {
      throw Error(ErrorCode::kInvalidArgument, "document text is not normalized");
    }
    doc.codepoints_ = text::to_u32(doc.text_);
    doc.doc_id_ = text::hex(text::sha256(doc.text_));
    if (j.contains("doc_id") && j.at("doc_id").get<std::string>() != doc.doc_id_) {
      throw Error(ErrorCode::kStaleCache, "doc_id does not match document text");
    }
    std::size_t prev_end = 0;
    std::size_t prev_token_end = 0;
    bool any_tokens = false;
    for (const auto& js : j.at("sentences")) {
      SentenceSpan s;
      s.index = js.at("index").get<std::size_t>();
      s.char_start = js.at("char_start").get<std::size_t>();
      s.char_end = js.at("char_end").get<std::size_t>();
      s.token_start = js.value("token_start", std::size_t{0});
      s.token_end = js.value("token_end", std::size_t{0});
      if (s.index != doc.sentences_.size() || s.char_start >= s.char_end ||
          s.char_start < prev_end || s.char_end > doc.codepoints_.size() ||
          s.token_start < prev_token_end || s.token_end < s.token_start) {
        throw Error(ErrorCode::kInvalidArgument,
                    "sentence " + std::to_string(doc.sentences_.size()) + " violates span invariants");
      }
      any_tokens = any_tokens || s.token_end > 0;
      prev_end = s.char_end;
      prev_token_end = s.token_end;
      doc.sentences_.push_back(s);
    }
    if (doc.sentences_.empty()) {
      throw Error(ErrorCode::kEmptyDocument, "document has no sentences");
    }
    doc.aligned_ = any_tokens;
    if (doc.aligned_) {
      for (const auto& s : doc.sentences_) {
        if (s.token_end == s.token_start) {
          throw Error(ErrorCode::kAlignmentGap,
                      "sentence " + std::to_string(s.index) + " has no tokens");
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed document JSON: ") + e.what());
  }
  return doc;
}

}  // namespace claimscope
