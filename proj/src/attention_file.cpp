// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors

#include <bit>
#include <fstream>
#include <iterator>
#include <limits>

#include "claimscope/attention.hpp"
#include "claimscope/error.hpp"

namespace claimscope {
namespace {

constexpr std::size_t kHeaderBytes = 4 + 2 + 4 + 2 + 1;
constexpr std::size_t kTokenBytes = 4 + 4 + 1;

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(std::string_view bytes, std::size_t& pos) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes[pos + i])) << (8 * i);
  }
  pos += sizeof(T);
  return static_cast<T>(v);
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

text::Digest parse_digest(std::string_view hex) {
  text::Digest out{};
  if (hex.size() != out.size() * 2) {
    throw Error(ErrorCode::kInvalidArgument, "doc_id must be 64 hex characters");
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int hi = hex_value(hex[2 * i]);
    const int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(ErrorCode::kInvalidArgument, "doc_id is not hex");
    out[i] = static_cast<std::uint8_t>(hi * 16 + lo);
  }
  return out;
}

std::string encode_attention(const TokenAttention& att, const TokenAlignment& alignment,
                             const text::Digest& doc_id) {
  if (att.n == 0) throw Error(ErrorCode::kInvalidAttention, "cannot export an empty attention matrix");
  if (att.n > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::kInvalidAttention, "attention matrix too large for the file format");
  }
  validate_attention(att, /*row_stochastic=*/false);
  if (alignment.size() != att.n || alignment.special_token_mask.size() != att.n) {
    throw Error(ErrorCode::kDimensionMismatch, "alignment has " + std::to_string(alignment.size()) +
                                                   " tokens, attention has " + std::to_string(att.n));
  }
  if (att.layer_index < 0 || att.layer_index > 0xFFFF) {
    throw Error(ErrorCode::kInvalidArgument,
                "layer index " + std::to_string(att.layer_index) + " not representable as u16");
  }

  std::string out;
  out.reserve(kHeaderBytes + att.n * att.n * 4 + att.n * kTokenBytes + doc_id.size());
  out.append("ATTN");
  put_le<std::uint16_t>(out, kAttentionFileVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(att.n));
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(att.layer_index));
  put_le<std::uint8_t>(out, att.head_reduction.encode());
  for (float v : att.matrix) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  for (std::size_t t = 0; t < att.n; ++t) {
    put_le<std::uint32_t>(out, alignment.token_char_offsets[t].char_start);
    put_le<std::uint32_t>(out, alignment.token_char_offsets[t].char_end);
    put_le<std::uint8_t>(out, alignment.special_token_mask[t] ? 1 : 0);
  }
  out.append(reinterpret_cast<const char*>(doc_id.data()), doc_id.size());
  return out;
}

AttentionFile decode_attention(std::string_view bytes) {
  if (bytes.size() < kHeaderBytes || bytes.substr(0, 4) != "ATTN") {
    throw Error(ErrorCode::kCorruptFile, "not an attention file (bad magic)");
  }
  std::size_t pos = 4;
  const auto version = get_le<std::uint16_t>(bytes, pos);
  if (version != kAttentionFileVersion) {
    throw Error(ErrorCode::kUnsupportedVersion,
                "attention file version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kAttentionFileVersion) + ")");
  }
  const auto n = static_cast<std::size_t>(get_le<std::uint32_t>(bytes, pos));
  const auto layer = get_le<std::uint16_t>(bytes, pos);
  const auto reduction = get_le<std::uint8_t>(bytes, pos);
  const std::size_t expected = kHeaderBytes + n * n * 4 + n * kTokenBytes + 32;
  if (n == 0) throw Error(ErrorCode::kInvalidAttention, "attention file declares zero tokens");
  if (bytes.size() != expected) {
    throw Error(ErrorCode::kCorruptFile, "attention file size " + std::to_string(bytes.size()) +
                                             " does not match N=" + std::to_string(n));
  }

  AttentionFile file;
  TokenAttention& att = file.attention;
  att.n = n;
  att.layer_index = layer;
  att.head_reduction = HeadReduction::decode(reduction);
  att.provider_id = "file";
  att.matrix.resize(n * n);
  for (float& v : att.matrix) v = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos));
  file.alignment.token_char_offsets.resize(n);
  file.alignment.special_token_mask.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    file.alignment.token_char_offsets[t].char_start = get_le<std::uint32_t>(bytes, pos);
    file.alignment.token_char_offsets[t].char_end = get_le<std::uint32_t>(bytes, pos);
    const auto special = get_le<std::uint8_t>(bytes, pos);
    if (special > 1) throw Error(ErrorCode::kCorruptFile, "special-token flag must be 0 or 1");
    file.alignment.special_token_mask[t] = special == 1;
  }
  att.special_token_mask = file.alignment.special_token_mask;
  for (auto& b : file.doc_id) b = get_le<std::uint8_t>(bytes, pos);
  validate_attention(att, /*row_stochastic=*/false);
  return file;
}

void export_attention(const TokenAttention& att, const TokenAlignment& alignment,
                      std::string_view doc_id_hex, const std::filesystem::path& path) {
  const std::string bytes = encode_attention(att, alignment, parse_digest(doc_id_hex));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIOFailure, "could not write " + path.string());
}

AttentionFile import_attention(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIOFailure, "could not open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kIOFailure, "could not read " + path.string());
  return decode_attention(bytes);
}

}  // namespace claimscope
