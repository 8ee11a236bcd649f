// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "claimscope/document.hpp"
#include "claimscope/text.hpp"

namespace claimscope {

enum class HeadReductionKind : std::uint8_t { kMean, kMax, kSingle };

// How the heads of one layer were collapsed into a single matrix.
struct HeadReduction {
  HeadReductionKind kind = HeadReductionKind::kMean;
  std::uint8_t head = 0;  // only meaningful for kSingle

  static HeadReduction mean() { return {}; }
  static HeadReduction max() { return {HeadReductionKind::kMax, 0}; }
  static HeadReduction single(std::uint8_t h) { return {HeadReductionKind::kSingle, h}; }

  // Wire byte: 0 = mean, 1 = max, 2 + h = single head h (h <= 253).
  std::uint8_t encode() const;
  static HeadReduction decode(std::uint8_t byte);

  // "mean", "max", "single:<h>"
  std::string str() const;
  static HeadReduction parse(std::string_view s);

  bool operator==(const HeadReduction&) const = default;
};

// Square token-to-token attention (row = attending token), already reduced
// over heads of a single layer. Stored as float32, row-major.
struct TokenAttention {
  std::size_t n = 0;
  std::vector<float> matrix;
  int layer_index = 0;
  HeadReduction head_reduction;
  std::string provider_id;
  std::vector<bool> special_token_mask;

  float at(std::size_t k, std::size_t l) const { return matrix[k * n + l]; }
  std::span<const float> row(std::size_t k) const {
    return std::span<const float>(matrix).subspan(k * n, n);
  }
};

// Throws Error(kInvalidAttention) on shape mismatch, negative or non-finite
// entries, or mass above the diagonal. With `row_stochastic`, also requires
// every row to sum to 1 within 1e-4.
void validate_attention(const TokenAttention& att, bool row_stochastic);

struct UniformPattern {
  std::size_t n = 0;
};

// Row `from` is one-hot at column `to`; every other row is uniform-causal.
struct DeltaPattern {
  std::size_t n = 0;
  std::size_t from = 0;
  std::size_t to = 0;
};

// Rows of sentence `from_sentence` put `weight` mass uniformly on the tokens
// of `to_sentence` and the rest uniformly on their other visible tokens.
// Every other row is uniform-causal.
struct BlockPattern {
  std::vector<std::pair<std::size_t, std::size_t>> sentence_tokens;  // half-open ranges
  std::size_t from_sentence = 0;
  std::size_t to_sentence = 0;
  double weight = 0.0;
};

using AttentionPattern = std::variant<UniformPattern, DeltaPattern, BlockPattern>;

// Throws Error(kInfeasiblePattern) when the pattern would need attention to a
// future token or is otherwise malformed.
TokenAttention synthesize_attention(const AttentionPattern& pattern);

enum class AttentionBackend { kModel, kFile, kSynthetic };

std::string_view to_string(AttentionBackend backend);
AttentionBackend parse_attention_backend(std::string_view s);

inline constexpr std::string_view kDefaultAttentionModel = "Qwen/Qwen3-1.7B";

struct ProviderConfig {
  AttentionBackend backend = AttentionBackend::kSynthetic;
  std::string model_id{kDefaultAttentionModel};
  int layer_index = -1;  // negative counts from the last layer
  HeadReduction head_reduction;
  std::size_t max_tokens = 4096;
  std::string device = "cpu";

  // File backend: a single .attn file, or a directory indexed by doc_id.
  std::filesystem::path attention_path;
  // File backend with a directory: documents without a file get uniform
  // synthetic attention instead of an error.
  bool synthesize_missing = false;

  // Synthetic backend: prepend a special BOS token.
  bool synthetic_bos = false;

  // Model backend helper process.
  std::string python = "python3";
  std::filesystem::path helper_script = std::filesystem::path(CLAIMSCOPE_TOOLS_DIR) / "hf_attention.py";
};

struct AttentionResult {
  TokenAttention attention;
  TokenAlignment alignment;
};

class AttentionProvider {
 public:
  virtual ~AttentionProvider() = default;

  // Throws Error(kDocumentTooLong), Error(kBackendUnavailable).
  virtual AttentionResult get_attention(const Document& doc) = 0;
  virtual std::string id() const = 0;
  virtual std::string model_id() const = 0;
  virtual bool available() const { return true; }
};

std::unique_ptr<AttentionProvider> make_attention_provider(const ProviderConfig& config);

// One-shot convenience over make_attention_provider().
AttentionResult get_attention(const Document& doc, const ProviderConfig& config);

// Binary attention file, little-endian:
//   "ATTN" | version u16 | N u32 | layer u16 | head_reduction u8
//   | N*N float32 row-major
//   | N * {char_start u32, char_end u32, special u8}
//   | doc_id (32 raw SHA-256 bytes)
inline constexpr std::uint16_t kAttentionFileVersion = 1;

struct AttentionFile {
  TokenAttention attention;
  TokenAlignment alignment;
  text::Digest doc_id{};

  std::string doc_id_hex() const { return text::hex(doc_id); }
};

std::string encode_attention(const TokenAttention& att, const TokenAlignment& alignment,
                             const text::Digest& doc_id);
// Throws Error(kCorruptFile), Error(kUnsupportedVersion), Error(kInvalidAttention).
AttentionFile decode_attention(std::string_view bytes);

// Throws Error(kIOFailure) in addition to the encode/decode errors.
void export_attention(const TokenAttention& att, const TokenAlignment& alignment,
                      std::string_view doc_id_hex, const std::filesystem::path& path);
AttentionFile import_attention(const std::filesystem::path& path);

text::Digest parse_digest(std::string_view hex);

}  // namespace claimscope
