// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors

#include "claimscope/fusion.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include "claimscope/error.hpp"

namespace claimscope {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

template <typename Fn>
auto in_stage(Stage stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.stage() != Stage::kNone) throw;
    throw e.with_stage(stage);
  }
}

// Rebuilds annotations from stored verdicts under `policy`.
void fuse(AnalysisResult& result, const SaliencyMatrix& sal, const NliEngine& nli) {
  result.annotations.clear();
  for (const auto& [index, verdicts] : result.verdicts) {
    auto link = nli.decide(verdicts);
    if (!link) continue;
    Annotation a;
    a.index = index;
    a.role = link->relation;
    a.saliency = saliency(sal, result.target, index, result.policy.direction);
    a.nli_confidence = link->confidence;
    a.passed_fusion = passes_fusion(sal, result.target, index, result.policy);
    result.annotations.push_back(a);
  }
}

}  // namespace

std::vector<Annotation> AnalysisResult::passing() const {
  std::vector<Annotation> out;
  std::copy_if(annotations.begin(), annotations.end(), std::back_inserter(out),
               [](const Annotation& a) { return a.passed_fusion; });
  return out;
}

bool equivalent(const AnalysisResult& a, const AnalysisResult& b) {
  return a.doc_id == b.doc_id && a.target == b.target && a.annotations == b.annotations &&
         a.policy == b.policy && a.stats == b.stats && a.tau_effective == b.tau_effective &&
         a.failures == b.failures;
}

bool passes_fusion(const SaliencyMatrix& sal, std::size_t target, std::size_t index,
                   const ThresholdPolicy& policy) {
  const double s = saliency(sal, target, index, policy.direction);
  if (!(s > 0.0)) return false;
  if (policy.tau_confirm && s < *policy.tau_confirm) return false;
  if (policy.mode == ThresholdMode::kTopM) {
    const auto selected = select_candidates(sal, target, policy);
    return std::any_of(selected.begin(), selected.end(),
                       [&](const Candidate& c) { return c.index == index; });
  }
  return s >= selection_threshold(sal, target, policy);
}

AnalysisResult analyze(const Document& doc, const SaliencyMatrix& sal, std::size_t target,
                       NliEngine& nli, const ThresholdPolicy& policy) {
  AnalysisResult result;
  result.doc_id = doc.doc_id();
  result.target = target;
  result.policy = policy;
  result.stats = sal.stats();

  auto t0 = Clock::now();
  const auto candidates = in_stage(Stage::kSaliency, [&] {
    if (sal.n() != doc.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "saliency matrix does not match the document");
    }
    if (target >= doc.size()) {
      throw Error(ErrorCode::kIndexOutOfRange, "target " + std::to_string(target) +
                                                   " out of range for " + std::to_string(doc.size()) +
                                                   " sentences");
    }
    result.tau_effective = selection_threshold(sal, target, policy);
    return select_candidates(sal, target, policy);
  });
  result.timings.saliency_ms = elapsed_ms(t0);

  t0 = Clock::now();
  std::vector<std::size_t> indices;
  for (const auto& c : candidates) indices.push_back(c.index);
  RelationshipMatrix rel =
      in_stage(Stage::kNli, [&] { return nli.classify_candidates(doc, target, indices); });
  result.timings.nli_ms = elapsed_ms(t0);

  result.verdicts = std::move(rel.classified);
  result.failures = std::move(rel.failures);
  fuse(result, sal, nli);
  return result;
}

AnalysisResult analyze(const Document& doc, std::size_t target, AttentionProvider& attention,
                       NliEngine& nli, const ThresholdPolicy& policy, StatsRule rule) {
  auto t0 = Clock::now();
  AttentionResult att = in_stage(Stage::kAttention, [&] { return attention.get_attention(doc); });
  const double attention_ms = elapsed_ms(t0);

  const Document aligned =
      in_stage(Stage::kSegmentation, [&] { return align(doc, att.alignment); });
  t0 = Clock::now();
  const SaliencyMatrix sal =
      in_stage(Stage::kSaliency, [&] { return aggregate(att.attention, aligned, rule); });
  const double aggregate_ms = elapsed_ms(t0);

  AnalysisResult result = analyze(aligned, sal, target, nli, policy);
  result.timings.attention_ms = attention_ms;
  result.timings.saliency_ms += aggregate_ms;
  return result;
}

AnalysisResult refilter(const AnalysisResult& previous, const Document& doc,
                        const SaliencyMatrix& sal, const ThresholdPolicy& policy, NliEngine& nli) {
  if (previous.doc_id != doc.doc_id() || sal.n() != doc.size()) {
    throw Error(ErrorCode::kStaleCache, "cached analysis does not belong to document " + doc.doc_id());
  }
  AnalysisResult result = previous;
  result.policy = policy;
  result.stats = sal.stats();
  result.timings = {previous.timings.attention_ms, 0.0, 0.0};

  auto t0 = Clock::now();
  const auto candidates = in_stage(Stage::kSaliency, [&] {
    result.tau_effective = selection_threshold(sal, previous.target, policy);
    return select_candidates(sal, previous.target, policy);
  });
  result.timings.saliency_ms = elapsed_ms(t0);

  std::vector<std::size_t> missing;
  for (const auto& c : candidates) {
    if (result.verdicts.count(c.index) == 0) missing.push_back(c.index);
  }
  result.failures.clear();
  if (!missing.empty()) {
    t0 = Clock::now();
    RelationshipMatrix rel =
        in_stage(Stage::kNli, [&] { return nli.classify_candidates(doc, previous.target, missing); });
    result.timings.nli_ms = elapsed_ms(t0);
    result.verdicts.merge(rel.classified);
    result.failures = std::move(rel.failures);
  }
  fuse(result, sal, nli);
  return result;
}

}  // namespace claimscope
