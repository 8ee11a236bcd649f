// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "claimscope/attention.hpp"
#include "claimscope/document.hpp"
#include "claimscope/nli.hpp"
#include "claimscope/saliency.hpp"

namespace claimscope {

struct Annotation {
  std::size_t index = 0;
  Relation role = Relation::kPremise;
  double saliency = 0.0;
  double nli_confidence = 0.0;
  bool passed_fusion = false;

  bool operator==(const Annotation&) const = default;
};

struct StageTimings {
  double attention_ms = 0.0;
  double saliency_ms = 0.0;
  double nli_ms = 0.0;
};

struct AnalysisResult {
  std::string doc_id;
  std::size_t target = 0;
  // NLI-labeled sentences in index order, passing or not.
  std::vector<Annotation> annotations;
  ThresholdPolicy policy;
  SaliencyStats stats;
  double tau_effective = 0.0;
  StageTimings timings;
  // Candidates whose NLI classification failed.
  std::map<std::size_t, std::string> failures;
  // Both verdicts of every classified candidate, so threshold changes can be
  // replayed without inference. Not part of the JSON form.
  std::map<std::size_t, CandidateVerdicts> verdicts;

  bool complete() const { return failures.empty(); }
  std::vector<Annotation> passing() const;
};

// Equality over everything the JSON form carries except timings.
bool equivalent(const AnalysisResult& a, const AnalysisResult& b);

// The conjunction gate: a labeled sentence passes when its saliency is
// positive, clears the policy's effective threshold (and tau_confirm, when
// set), and for top_m belongs to the selected set.
bool passes_fusion(const SaliencyMatrix& sal, std::size_t target, std::size_t index,
                   const ThresholdPolicy& policy);

// Candidate selection, NLI over the candidates, fusion gate. `doc` must be
// aligned and `sal` its aggregate. Errors carry the stage they came from.
AnalysisResult analyze(const Document& doc, const SaliencyMatrix& sal, std::size_t target,
                       NliEngine& nli, const ThresholdPolicy& policy = {});

// Full pipeline from a segmented document: attention, alignment,
// aggregation, then the overload above.
AnalysisResult analyze(const Document& doc, std::size_t target, AttentionProvider& attention,
                       NliEngine& nli, const ThresholdPolicy& policy = {},
                       StatsRule rule = StatsRule::kOffDiagonalNonzero);

// Re-applies a new policy using the verdicts already in `result`; only
// sentences newly admitted by the policy go to NLI.
// Throws Error(kStaleCache) when `result` does not belong to `doc`/`sal`.
AnalysisResult refilter(const AnalysisResult& result, const Document& doc,
                        const SaliencyMatrix& sal, const ThresholdPolicy& policy, NliEngine& nli);

enum class RenderFormat { kJson, kHtml, kTerminal };

RenderFormat parse_render_format(std::string_view s);
std::string render_annotations(const AnalysisResult& result, const Document& doc, RenderFormat format);

nlohmann::json to_json(const AnalysisResult& result);
AnalysisResult result_from_json(const nlohmann::json& j);

// Schema check for the canonical result JSON; empty when valid.
std::vector<std::string> validate_result_json(const nlohmann::json& j);

}  // namespace claimscope
