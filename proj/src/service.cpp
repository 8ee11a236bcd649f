// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors

#include "claimscope/service.hpp"

#include <chrono>
#include <cstdlib>

#include "claimscope/error.hpp"

namespace claimscope {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

nlohmann::json error_body(std::string_view code, std::string_view stage, std::string_view message) {
  return {{"error", {{"code", code}, {"stage", stage}, {"message", message}}}};
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kIndexOutOfRange:
    case ErrorCode::kOffsetOutOfBounds:
    case ErrorCode::kSelfPair:
      return 400;
    case ErrorCode::kDocumentTooLong:
      return 413;
    case ErrorCode::kEmptyDocument:
    case ErrorCode::kAlignmentGap:
    case ErrorCode::kTextTooLong:
      return 422;
    case ErrorCode::kBackendUnavailable:
      return 503;
    default:
      return 500;
  }
}

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

std::size_t env_size(const char* name, std::size_t fallback) {
  auto v = env(name);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const unsigned long long parsed = std::stoull(*v, &used);
    if (used == v->size()) return static_cast<std::size_t>(parsed);
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kInvalidArgument, std::string(name) + " must be a non-negative integer");
}

nlohmann::json parse_body(const httplib::Request& req) {
  nlohmann::json body = nlohmann::json::parse(req.body, nullptr, /*allow_exceptions=*/false);
  if (body.is_discarded() || !body.is_object()) {
    throw Error(ErrorCode::kInvalidArgument, "request body must be a JSON object");
  }
  return body;
}

}  // namespace

ServiceConfig ServiceConfig::from_env() {
  ServiceConfig c;
  if (auto v = env("BIND_ADDR")) c.bind_addr = *v;
  c.cache_bytes = env_size("CACHE_BYTES", c.cache_bytes);
  c.max_body_bytes = env_size("MAX_BODY_BYTES", c.max_body_bytes);
  c.max_tokens = env_size("MAX_TOKENS", c.max_tokens);
  if (auto v = env("BACKEND_MODE")) c.backend_mode = *v;
  if (auto v = env("ATTN_MODEL_ID")) c.attn_model_id = *v;
  if (auto v = env("NLI_MODEL_ID")) c.nli_model_id = *v;
  if (auto v = env("FIXTURE_DIR")) c.fixture_dir = *v;
  if (auto v = env("VERDICT_CACHE")) c.verdict_cache = *v;
  if (c.backend_mode != "model" && c.backend_mode != "fixture") {
    throw Error(ErrorCode::kInvalidArgument, "BACKEND_MODE must be model or fixture");
  }
  return c;
}

std::size_t SessionCache::estimate_bytes(const SessionEntry& e) {
  return sizeof(SessionEntry) + e.doc.text().size() + e.doc.length() * sizeof(char32_t) +
         e.doc.size() * sizeof(SentenceSpan) + e.attention.matrix.size() * sizeof(float) +
         e.attention.n / 8 + e.saliency.values().size() * sizeof(double);
}

std::shared_ptr<SessionEntry> SessionCache::get(const std::string& doc_id) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find(doc_id);
  if (it == entries_.end()) return nullptr;
  lru_.splice(lru_.begin(), lru_, it->second.second);
  return it->second.first;
}

void SessionCache::put(std::shared_ptr<SessionEntry> entry) {
  std::lock_guard<std::mutex> lock(mu_);
  const std::string id = entry->doc.doc_id();
  if (auto it = entries_.find(id); it != entries_.end()) {
    bytes_ -= it->second.first->bytes;
    lru_.erase(it->second.second);
    entries_.erase(it);
  }
  lru_.push_front(id);
  bytes_ += entry->bytes;
  entries_.emplace(id, std::make_pair(std::move(entry), lru_.begin()));
  while (bytes_ > capacity_ && lru_.size() > 1) {
    auto victim = entries_.find(lru_.back());
    bytes_ -= victim->second.first->bytes;
    entries_.erase(victim);
    lru_.pop_back();
  }
}

std::size_t SessionCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.size();
}

std::size_t SessionCache::bytes() const {
  std::lock_guard<std::mutex> lock(mu_);
  return bytes_;
}

Service::Service(ServiceConfig config, std::shared_ptr<AttentionProvider> attention,
                 std::shared_ptr<NliBackend> nli, std::shared_ptr<VerdictCache> verdicts)
    : config_(std::move(config)),
      attention_(std::move(attention)),
      nli_(std::move(nli)),
      verdicts_(verdicts ? std::move(verdicts) : std::make_shared<VerdictCache>()),
      cache_(config_.cache_bytes) {
  install_routes();
}

std::unique_ptr<Service> Service::from_config(const ServiceConfig& config) {
  std::shared_ptr<AttentionProvider> attention;
  std::shared_ptr<NliBackend> nli;
  if (config.backend_mode == "fixture") {
    ProviderConfig pc;
    pc.backend = AttentionBackend::kFile;
    pc.attention_path = config.fixture_dir;
    pc.synthesize_missing = true;
    pc.max_tokens = config.max_tokens;
    attention = make_attention_provider(pc);
    nli = std::make_shared<FixtureNliBackend>(config.fixture_dir / "nli_fixture.jsonl");
  } else {
    ProviderConfig pc;
    pc.backend = AttentionBackend::kModel;
    pc.model_id = config.attn_model_id;
    pc.max_tokens = config.max_tokens;
    attention = make_attention_provider(pc);
    NliConfig nc;
    nc.backend = NliBackendKind::kModel;
    nc.model_id = config.nli_model_id;
    nli = make_nli_backend(nc);
  }
  std::shared_ptr<VerdictCache> verdicts;
  if (!config.verdict_cache.empty()) verdicts = std::make_shared<VerdictCache>(config.verdict_cache);
  return std::make_unique<Service>(config, std::move(attention), std::move(nli), std::move(verdicts));
}

bool Service::listen() {
  const auto colon = config_.bind_addr.rfind(':');
  if (colon == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "BIND_ADDR must look like host:port");
  }
  const std::string host = config_.bind_addr.substr(0, colon);
  const int port = std::stoi(config_.bind_addr.substr(colon + 1));
  return server_.listen(host, port);
}

int Service::bind_ephemeral(const std::string& host) { return server_.bind_to_any_port(host); }

void Service::install_routes() {
  // Bodies are size-checked in the handler so oversized uploads still get a
  // JSON 413; the transport limit only guards against runaway uploads.
  server_.set_payload_max_length(std::max<std::size_t>(config_.max_body_bytes * 16, std::size_t{64} << 20));

  auto wrap = [this](auto route) {
    return [this, route](const httplib::Request& req, httplib::Response& res) {
      Reply reply;
      try {
        reply = (this->*route)(req);
      } catch (const Error& e) {
        reply.status = status_for(e.code());
        reply.body = error_body(to_string(e.code()), to_string(e.stage()), e.what());
      } catch (const std::exception& e) {
        reply.status = 500;
        reply.body = error_body("Internal", "", e.what());
      }
      res.status = reply.status;
      res.set_content(reply.body.dump(), "application/json");
    };
  };

  server_.Post("/v1/documents", wrap(&Service::ingest));
  server_.Post("/v1/documents/:doc_id/analyze", wrap(&Service::analyze_route));
  server_.Post("/v1/documents/:doc_id/refilter", wrap(&Service::refilter_route));
  server_.Get("/v1/documents/:doc_id/saliency", wrap(&Service::saliency_route));
  server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    Reply reply = health_route();
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  });
  server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
    std::string code = res.status == 404 ? "NotFound"
                       : res.status == 413 ? "PayloadTooLarge"
                                           : "HttpError";
    res.set_content(error_body(code, "", httplib::status_message(res.status)).dump(),
                    "application/json");
    return httplib::Server::HandlerResponse::Handled;
  });
}

std::shared_ptr<SessionEntry> Service::build_entry(const Document& doc) {
  AttentionResult att;
  {
    std::lock_guard<std::mutex> lock(attention_mu_);
    ++attention_calls_;
    try {
      att = attention_->get_attention(doc);
    } catch (const Error& e) {
      throw e.with_stage(Stage::kAttention);
    }
  }
  auto entry = std::make_shared<SessionEntry>();
  try {
    entry->doc = align(doc, att.alignment);
  } catch (const Error& e) {
    throw e.with_stage(Stage::kSegmentation);
  }
  try {
    entry->saliency = aggregate(att.attention, entry->doc);
  } catch (const Error& e) {
    throw e.with_stage(Stage::kSaliency);
  }
  entry->attention = std::move(att.attention);
  entry->bytes = SessionCache::estimate_bytes(*entry);
  return entry;
}

Service::Reply Service::ingest(const httplib::Request& req) {
  if (req.body.size() > config_.max_body_bytes) {
    return {413, error_body("PayloadTooLarge", "",
                            "body of " + std::to_string(req.body.size()) + " bytes exceeds the " +
                                std::to_string(config_.max_body_bytes) + " byte limit")};
  }
  const auto t0 = Clock::now();
  const nlohmann::json body = parse_body(req);
  if (!body.contains("text") || !body["text"].is_string()) {
    return {422, error_body("EmptyDocument", "segmentation", "body needs a non-empty \"text\" string")};
  }
  Document doc;
  try {
    doc = segment(body["text"].get<std::string>());
  } catch (const Error& e) {
    throw e.with_stage(Stage::kSegmentation);
  }
  const double segmentation_ms = elapsed_ms(t0);

  bool cached = true;
  std::shared_ptr<SessionEntry> entry = cache_.get(doc.doc_id());
  const auto t1 = Clock::now();
  if (!entry) {
    std::shared_future<std::shared_ptr<SessionEntry>> pending;
    bool leader = false;
    std::promise<std::shared_ptr<SessionEntry>> promise;
    {
      std::lock_guard<std::mutex> lock(inflight_mu_);
      // Re-check under the lock: a leader may have finished meanwhile.
      entry = cache_.get(doc.doc_id());
      if (!entry) {
        auto it = inflight_.find(doc.doc_id());
        if (it == inflight_.end()) {
          leader = true;
          pending = promise.get_future().share();
          inflight_.emplace(doc.doc_id(), pending);
        } else {
          pending = it->second;
        }
      }
    }
    if (leader) {
      cached = false;
      try {
        auto built = build_entry(doc);
        cache_.put(built);
        promise.set_value(built);
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
      std::lock_guard<std::mutex> lock(inflight_mu_);
      inflight_.erase(doc.doc_id());
    }
    if (!entry) entry = pending.get();
  }

  nlohmann::json response = to_json(entry->doc);
  for (std::size_t i = 0; i < entry->doc.size(); ++i) {
    response["sentences"][i]["text"] = entry->doc.sentence_text(i);
  }
  response["cached"] = cached;
  response["timings"] = {{"segmentation_ms", segmentation_ms},
                         {"attention_ms", cached ? 0.0 : elapsed_ms(t1)}};
  return {200, response};
}

std::unique_ptr<NliEngine> Service::engine_for(const nlohmann::json& overrides) {
  NliConfig config;
  if (!overrides.is_null()) {
    if (!overrides.is_object()) throw Error(ErrorCode::kInvalidArgument, "nli_config must be an object");
    try {
      if (overrides.contains("min_confidence")) {
        config.min_confidence = overrides["min_confidence"].get<double>();
      }
      if (overrides.contains("batch_size")) config.batch_size = overrides["batch_size"].get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kInvalidArgument, std::string("bad nli_config: ") + e.what());
    }
  }
  return std::make_unique<NliEngine>(nli_, config, verdicts_);
}

namespace {

ThresholdPolicy policy_or_default(const nlohmann::json& body) {
  if (!body.contains("policy") || body["policy"].is_null()) return ThresholdPolicy{};
  return policy_from_json(body["policy"]);
}

}  // namespace

Service::Reply Service::analyze_route(const httplib::Request& req) {
  const std::string doc_id = req.path_params.at("doc_id");
  auto entry = cache_.get(doc_id);
  if (!entry) return {404, error_body("NotFound", "", "unknown document " + doc_id)};
  const nlohmann::json body = parse_body(req);

  std::size_t target = 0;
  if (body.contains("target_index")) {
    const auto& t = body["target_index"];
    if (!t.is_number_integer() || t.get<long long>() < 0 ||
        static_cast<std::size_t>(t.get<long long>()) >= entry->doc.size()) {
      return {400, error_body("IndexOutOfRange", "", "target_index must address one of the " +
                                                         std::to_string(entry->doc.size()) + " sentences")};
    }
    target = t.get<std::size_t>();
  } else if (body.contains("target_char_offset")) {
    const auto& t = body["target_char_offset"];
    if (!t.is_number_integer() || t.get<long long>() < 0) {
      return {400, error_body("OffsetOutOfBounds", "", "target_char_offset must be a non-negative integer")};
    }
    target = find_sentence(entry->doc, t.get<std::size_t>());
  } else {
    return {400, error_body("InvalidArgument", "", "body needs target_index or target_char_offset")};
  }

  const ThresholdPolicy policy = policy_or_default(body);
  auto engine = engine_for(body.value("nli_config", nlohmann::json()));
  AnalysisResult result = analyze(entry->doc, entry->saliency, target, *engine, policy);
  nli_calls_ += engine->backend_calls();
  {
    std::lock_guard<std::mutex> lock(entry->mu);
    entry->analyses[target] = result;
    entry->last_target = target;
  }
  if (!result.complete()) {
    nlohmann::json out = error_body("BackendUnavailable", "nli",
                                    result.failures.begin()->second);
    out["partial"] = to_json(result);
    return {503, out};
  }
  return {200, to_json(result)};
}

Service::Reply Service::refilter_route(const httplib::Request& req) {
  const std::string doc_id = req.path_params.at("doc_id");
  auto entry = cache_.get(doc_id);
  if (!entry) return {404, error_body("NotFound", "", "unknown document " + doc_id)};
  const nlohmann::json body = parse_body(req);
  if (!body.contains("policy")) {
    return {400, error_body("InvalidArgument", "", "body needs a policy")};
  }
  const ThresholdPolicy policy = policy_from_json(body["policy"]);

  AnalysisResult previous;
  {
    std::lock_guard<std::mutex> lock(entry->mu);
    std::optional<std::size_t> target = entry->last_target;
    if (body.contains("target_index")) {
      if (!body["target_index"].is_number_unsigned()) {
        return {400, error_body("InvalidArgument", "", "target_index must be a non-negative integer")};
      }
      target = body["target_index"].get<std::size_t>();
    }
    auto it = target ? entry->analyses.find(*target) : entry->analyses.end();
    if (it == entry->analyses.end()) {
      return {409, error_body("NoPriorAnalysis", "", "analyze this document and target before refiltering")};
    }
    previous = it->second;
  }

  auto engine = engine_for(body.value("nli_config", nlohmann::json()));
  AnalysisResult result = refilter(previous, entry->doc, entry->saliency, policy, *engine);
  nli_calls_ += engine->backend_calls();
  {
    std::lock_guard<std::mutex> lock(entry->mu);
    entry->analyses[result.target] = result;
    entry->last_target = result.target;
  }
  if (!result.complete()) {
    nlohmann::json out = error_body("BackendUnavailable", "nli", result.failures.begin()->second);
    out["partial"] = to_json(result);
    return {503, out};
  }
  return {200, to_json(result)};
}

Service::Reply Service::saliency_route(const httplib::Request& req) {
  const std::string doc_id = req.path_params.at("doc_id");
  auto entry = cache_.get(doc_id);
  if (!entry) return {404, error_body("NotFound", "", "unknown document " + doc_id)};
  return {200, to_json(entry->saliency)};
}

Service::Reply Service::health_route() {
  const bool attention_ok = attention_->available();
  const bool nli_ok = nli_->available();
  const bool fixture = config_.backend_mode == "fixture";
  return {200,
          {{"status", attention_ok && nli_ok ? "ok" : "degraded"},
           {"backends",
            {{"attention", attention_ok ? "ok" : "unavailable"}, {"nli", nli_ok ? "ok" : "unavailable"}}},
           {"models",
            {{"attention_model_id", fixture ? std::string("fixture") : attention_->model_id()},
             {"nli_model_id", fixture ? std::string("fixture") : nli_->model_id()}}}}};
}

}  // namespace claimscope
