// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace claimscope {

// Character offsets throughout are Unicode code point indices into the
// normalized document text. Token ranges index the sequence of non-special
// tokens only.
struct SentenceSpan {
  std::size_t index = 0;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  std::size_t token_start = 0;
  std::size_t token_end = 0;

  std::size_t token_count() const { return token_end - token_start; }
  bool operator==(const SentenceSpan&) const = default;
};

struct TokenOffset {
  std::uint32_t char_start = 0;
  std::uint32_t char_end = 0;
  bool operator==(const TokenOffset&) const = default;
};

struct TokenAlignment {
  std::vector<TokenOffset> token_char_offsets;
  // true = BOS/EOS/padding style token, excluded from sentence aggregation.
  std::vector<bool> special_token_mask;

  std::size_t size() const { return token_char_offsets.size(); }
  std::size_t non_special_count() const;
  bool operator==(const TokenAlignment&) const = default;
};

struct SegmenterOptions {
  // Lowercase, without the trailing period ("dr", "e.g", "u.s").
  std::set<std::string> abbreviations = default_abbreviations();
  // A blank line always ends a sentence, punctuation or not.
  bool paragraph_breaks = true;

  static std::set<std::string> default_abbreviations();
};

class Document {
 public:
  const std::string& text() const { return text_; }
  const std::u32string& codepoints() const { return codepoints_; }
  std::size_t length() const { return codepoints_.size(); }
  const std::string& doc_id() const { return doc_id_; }

  const std::vector<SentenceSpan>& sentences() const { return sentences_; }
  std::size_t size() const { return sentences_.size(); }
  const SentenceSpan& sentence(std::size_t index) const;
  std::string sentence_text(std::size_t index) const;

  bool aligned() const { return aligned_; }
  // Number of non-special tokens covered by the alignment (0 if unaligned).
  std::size_t token_count() const;

  bool operator==(const Document& other) const {
    return doc_id_ == other.doc_id_ && sentences_ == other.sentences_ &&
           aligned_ == other.aligned_;
  }

 private:
  friend Document segment(std::string_view, const SegmenterOptions&);
  friend Document align(const Document&, const TokenAlignment&);
  friend Document document_from_json(const nlohmann::json&);

  std::string text_;
  std::u32string codepoints_;
  std::string doc_id_;
  std::vector<SentenceSpan> sentences_;
  bool aligned_ = false;
};

// Normalizes (NFC, trimmed) and splits on terminal punctuation followed by
// whitespace and a capital letter, honoring the abbreviation list.
// Throws Error(kEmptyDocument).
Document segment(std::string_view text, const SegmenterOptions& options = {});

// Assigns every non-special token to the sentence holding its first
// character; tokens starting in inter-sentence whitespace go to the following
// sentence, tokens past the last sentence to the last one.
// Throws Error(kOffsetOutOfBounds), Error(kAlignmentGap).
Document align(const Document& doc, const TokenAlignment& alignment);

// Index of the sentence containing `char_offset`, or of the nearest following
// sentence when the offset sits in whitespace between sentences.
std::size_t find_sentence(const Document& doc, std::size_t char_offset);

// Whitespace-delimited word tokenization, used by the synthetic and fixture
// attention backends.
TokenAlignment word_tokenize(const Document& doc, bool leading_bos = false);

nlohmann::json to_json(const Document& doc);
Document document_from_json(const nlohmann::json& j);

}  // namespace claimscope
