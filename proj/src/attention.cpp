// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors

#include "claimscope/attention.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "claimscope/error.hpp"
#include "claimscope/subprocess.hpp"

namespace claimscope {
namespace {

TokenAttention uniform_causal(std::size_t n) {
  TokenAttention att;
  att.n = n;
  att.matrix.assign(n * n, 0.0f);
  att.special_token_mask.assign(n, false);
  att.provider_id = "synthetic";
  for (std::size_t k = 0; k < n; ++k) {
    const float v = static_cast<float>(1.0 / static_cast<double>(k + 1));
    for (std::size_t l = 0; l <= k; ++l) att.matrix[k * n + l] = v;
  }
  return att;
}

[[noreturn]] void infeasible(const std::string& why) {
  throw Error(ErrorCode::kInfeasiblePattern, why);
}

TokenAttention synthesize(const UniformPattern& p) {
  if (p.n == 0) infeasible("uniform pattern needs at least one token");
  return uniform_causal(p.n);
}

TokenAttention synthesize(const DeltaPattern& p) {
  if (p.from >= p.n || p.to >= p.n) infeasible("delta pattern index outside matrix");
  if (p.to > p.from) {
    infeasible("delta(" + std::to_string(p.from) + "->" + std::to_string(p.to) +
               ") attends to a future token");
  }
  TokenAttention att = uniform_causal(p.n);
  for (std::size_t l = 0; l < p.n; ++l) att.matrix[p.from * p.n + l] = 0.0f;
  att.matrix[p.from * p.n + p.to] = 1.0f;
  return att;
}

TokenAttention synthesize(const BlockPattern& p) {
  const auto& ranges = p.sentence_tokens;
  if (ranges.empty()) infeasible("block pattern needs sentence token ranges");
  std::size_t cursor = 0;
  for (const auto& [start, end] : ranges) {
    if (start != cursor || end <= start) infeasible("sentence token ranges must tile [0, n)");
    cursor = end;
  }
  if (p.from_sentence >= ranges.size() || p.to_sentence >= ranges.size()) {
    infeasible("block pattern sentence index out of range");
  }
  if (p.to_sentence >= p.from_sentence) {
    infeasible("block pattern target sentence is not entirely in the past");
  }
  if (!(p.weight >= 0.0 && p.weight <= 1.0)) infeasible("block weight must lie in [0, 1]");

  const std::size_t n = cursor;
  TokenAttention att = uniform_causal(n);
  const auto [to_start, to_end] = ranges[p.to_sentence];
  const auto [from_start, from_end] = ranges[p.from_sentence];
  const double to_size = static_cast<double>(to_end - to_start);
  for (std::size_t k = from_start; k < from_end; ++k) {
    const double others = static_cast<double>(k + 1) - to_size;
    for (std::size_t l = 0; l <= k; ++l) {
      const bool in_target = l >= to_start && l < to_end;
      att.matrix[k * n + l] =
          static_cast<float>(in_target ? p.weight / to_size : (1.0 - p.weight) / others);
    }
  }
  return att;
}

void check_length(std::size_t n, std::size_t max_tokens) {
  if (n > max_tokens) {
    throw Error(ErrorCode::kDocumentTooLong,
                "document has " + std::to_string(n) + " tokens, limit is " +
                    std::to_string(max_tokens));
  }
}

class SyntheticProvider final : public AttentionProvider {
 public:
  explicit SyntheticProvider(ProviderConfig config) : config_(std::move(config)) {}

  AttentionResult get_attention(const Document& doc) override {
    AttentionResult out;
    out.alignment = word_tokenize(doc, config_.synthetic_bos);
    check_length(out.alignment.size(), config_.max_tokens);
    out.attention = uniform_causal(out.alignment.size());
    out.attention.special_token_mask = out.alignment.special_token_mask;
    out.attention.layer_index = 0;
    return out;
  }
  std::string id() const override { return "synthetic"; }
  std::string model_id() const override { return "synthetic-uniform"; }

 private:
  ProviderConfig config_;
};

// Reads only the trailing doc_id of an attention file.
std::string peek_doc_id(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) return {};
  const auto size = static_cast<std::streamoff>(in.tellg());
  if (size < 32 + 13) return {};
  in.seekg(size - 32);
  text::Digest digest{};
  in.read(reinterpret_cast<char*>(digest.data()), digest.size());
  return in ? text::hex(digest) : std::string{};
}

class FileProvider final : public AttentionProvider {
 public:
  explicit FileProvider(ProviderConfig config) : config_(std::move(config)) {
    if (std::filesystem::is_directory(config_.attention_path)) reindex();
  }

  AttentionResult get_attention(const Document& doc) override {
    std::filesystem::path path = locate(doc.doc_id());
    if (path.empty()) {
      if (config_.synthesize_missing) {
        ProviderConfig fallback = config_;
        fallback.backend = AttentionBackend::kSynthetic;
        AttentionResult out = SyntheticProvider(fallback).get_attention(doc);
        out.attention.provider_id = "synthetic:fallback";
        return out;
      }
      throw Error(ErrorCode::kBackendUnavailable,
                  "no attention file for document " + doc.doc_id() + " under " +
                      config_.attention_path.string());
    }
    AttentionFile file = import_attention(path);
    if (file.doc_id_hex() != doc.doc_id()) {
      throw Error(ErrorCode::kDocumentMismatch,
                  "attention file " + path.string() + " belongs to document " + file.doc_id_hex() +
                      ", not " + doc.doc_id());
    }
    check_length(file.attention.n, config_.max_tokens);
    file.attention.provider_id = "file:" + path.filename().string();
    return {std::move(file.attention), std::move(file.alignment)};
  }

  std::string id() const override { return "file"; }
  std::string model_id() const override { return "fixture"; }
  bool available() const override { return std::filesystem::exists(config_.attention_path); }

 private:
  std::filesystem::path locate(const std::string& doc_id) {
    if (!std::filesystem::is_directory(config_.attention_path)) {
      return std::filesystem::exists(config_.attention_path) ? config_.attention_path
                                                             : std::filesystem::path{};
    }
    std::lock_guard<std::mutex> lock(mu_);
    auto it = index_.find(doc_id);
    if (it == index_.end()) {
      reindex_locked();
      it = index_.find(doc_id);
    }
    return it == index_.end() ? std::filesystem::path{} : it->second;
  }

  void reindex() {
    std::lock_guard<std::mutex> lock(mu_);
    reindex_locked();
  }

  void reindex_locked() {
    index_.clear();
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(config_.attention_path, ec)) {
      if (entry.path().extension() != ".attn") continue;
      std::string id = peek_doc_id(entry.path());
      if (!id.empty()) index_[id] = entry.path();
    }
  }

  ProviderConfig config_;
  std::mutex mu_;
  std::map<std::string, std::filesystem::path> index_;
};

// Runs the Python helper (transformers, eager attention) in a child process
// and reads back the attention file it writes. One request at a time.
class ModelProvider final : public AttentionProvider {
 public:
  explicit ModelProvider(ProviderConfig config) : config_(std::move(config)) {}

  AttentionResult get_attention(const Document& doc) override {
    std::lock_guard<std::mutex> lock(mu_);
    TempDir scratch;
    const auto input = scratch.path() / "doc.txt";
    const auto output = scratch.path() / "doc.attn";
    {
      std::ofstream f(input, std::ios::binary);
      f << doc.text();
      if (!f) throw Error(ErrorCode::kIOFailure, "could not write " + input.string());
    }
    ProcessResult r = run_process({config_.python, config_.helper_script.string(), "--model",
                                   config_.model_id, "--layer", std::to_string(config_.layer_index),
                                   "--reduction", config_.head_reduction.str(), "--max-tokens",
                                   std::to_string(config_.max_tokens), "--device", config_.device,
                                   "--input", input.string(), "--output", output.string()});
    if (r.exit_code == 3) {
      throw Error(ErrorCode::kDocumentTooLong, trimmed(r.err));
    }
    if (r.exit_code != 0) {
      throw Error(ErrorCode::kBackendUnavailable,
                  "attention helper failed (exit " + std::to_string(r.exit_code) + "): " +
                      trimmed(r.err));
    }
    AttentionFile file = import_attention(output);
    if (file.doc_id_hex() != doc.doc_id()) {
      throw Error(ErrorCode::kDocumentMismatch, "attention helper hashed a different text");
    }
    validate_attention(file.attention, /*row_stochastic=*/true);
    file.attention.provider_id = "model:" + config_.model_id;
    return {std::move(file.attention), std::move(file.alignment)};
  }

  std::string id() const override { return "model"; }
  std::string model_id() const override { return config_.model_id; }

  bool available() const override {
    std::lock_guard<std::mutex> lock(probe_mu_);
    if (!probed_) {
      probed_ = true;
      ready_ = std::filesystem::exists(config_.helper_script) &&
               run_process({config_.python, "-c", "import torch, transformers"}).exit_code == 0;
    }
    return ready_;
  }

 private:
  static std::string trimmed(const std::string& s) {
    constexpr std::size_t kMax = 2000;
    return s.size() <= kMax ? s : s.substr(s.size() - kMax);
  }

  ProviderConfig config_;
  std::mutex mu_;
  mutable std::mutex probe_mu_;
  mutable bool probed_ = false;
  mutable bool ready_ = false;
};

}  // namespace

std::uint8_t HeadReduction::encode() const {
  switch (kind) {
    case HeadReductionKind::kMean: return 0;
    case HeadReductionKind::kMax: return 1;
    case HeadReductionKind::kSingle:
      if (head > 253) throw Error(ErrorCode::kInvalidArgument, "head index above 253");
      return static_cast<std::uint8_t>(2 + head);
  }
  return 0;
}

HeadReduction HeadReduction::decode(std::uint8_t byte) {
  if (byte == 0) return mean();
  if (byte == 1) return max();
  if (byte == 255) throw Error(ErrorCode::kCorruptFile, "invalid head reduction byte 255");
  return single(static_cast<std::uint8_t>(byte - 2));
}

std::string HeadReduction::str() const {
  switch (kind) {
    case HeadReductionKind::kMean: return "mean";
    case HeadReductionKind::kMax: return "max";
    case HeadReductionKind::kSingle: return "single:" + std::to_string(head);
  }
  return "mean";
}

HeadReduction HeadReduction::parse(std::string_view s) {
  if (s == "mean") return mean();
  if (s == "max") return max();
  if (s.rfind("single:", 0) == 0) {
    const std::string digits(s.substr(7));
    if (!digits.empty() && digits.size() <= 3 &&
        digits.find_first_not_of("0123456789") == std::string::npos) {
      const int h = std::stoi(digits);
      if (h <= 253) return single(static_cast<std::uint8_t>(h));
    }
  }
  throw Error(ErrorCode::kInvalidArgument,
              "head reduction must be mean, max or single:<h>, got '" + std::string(s) + "'");
}

void validate_attention(const TokenAttention& att, bool row_stochastic) {
  const std::size_t n = att.n;
  if (att.matrix.size() != n * n || att.special_token_mask.size() != n) {
    throw Error(ErrorCode::kInvalidAttention, "attention matrix is not " + std::to_string(n) +
                                                  "x" + std::to_string(n) + " with a matching mask");
  }
  for (std::size_t k = 0; k < n; ++k) {
    double sum = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      const float v = att.matrix[k * n + l];
      if (!std::isfinite(v) || v < 0.0f) {
        throw Error(ErrorCode::kInvalidAttention, "entry (" + std::to_string(k) + "," +
                                                      std::to_string(l) + ") is negative or not finite");
      }
      if (l > k && v != 0.0f) {
        throw Error(ErrorCode::kInvalidAttention, "entry (" + std::to_string(k) + "," +
                                                      std::to_string(l) + ") violates the causal mask");
      }
      sum += v;
    }
    if (row_stochastic && std::abs(sum - 1.0) > 1e-4) {
      throw Error(ErrorCode::kInvalidAttention,
                  "row " + std::to_string(k) + " sums to " + std::to_string(sum));
    }
  }
}

TokenAttention synthesize_attention(const AttentionPattern& pattern) {
  TokenAttention att = std::visit([](const auto& p) { return synthesize(p); }, pattern);
  att.layer_index = 0;
  return att;
}

std::string_view to_string(AttentionBackend backend) {
  switch (backend) {
    case AttentionBackend::kModel: return "model";
    case AttentionBackend::kFile: return "file";
    case AttentionBackend::kSynthetic: return "synthetic";
  }
  return "synthetic";
}

AttentionBackend parse_attention_backend(std::string_view s) {
  if (s == "model") return AttentionBackend::kModel;
  if (s == "file") return AttentionBackend::kFile;
  if (s == "synthetic") return AttentionBackend::kSynthetic;
  throw Error(ErrorCode::kInvalidArgument, "unknown attention backend '" + std::string(s) + "'");
}

std::unique_ptr<AttentionProvider> make_attention_provider(const ProviderConfig& config) {
  if (config.max_tokens == 0) throw Error(ErrorCode::kInvalidArgument, "max_tokens must be > 0");
  switch (config.backend) {
    case AttentionBackend::kModel: return std::make_unique<ModelProvider>(config);
    case AttentionBackend::kFile: return std::make_unique<FileProvider>(config);
    case AttentionBackend::kSynthetic: return std::make_unique<SyntheticProvider>(config);
  }
  return nullptr;
}

AttentionResult get_attention(const Document& doc, const ProviderConfig& config) {
  return make_attention_provider(config)->get_attention(doc);
}

}  // namespace claimscope
