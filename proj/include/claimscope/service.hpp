// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors

#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <future>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include <httplib.h>

#include "claimscope/attention.hpp"
#include "claimscope/document.hpp"
#include "claimscope/fusion.hpp"
#include "claimscope/nli.hpp"
#include "claimscope/saliency.hpp"

namespace claimscope {

struct ServiceConfig {
  std::string bind_addr = "127.0.0.1:8080";
  std::size_t cache_bytes = std::size_t{256} << 20;
  std::size_t max_body_bytes = std::size_t{1} << 20;
  std::size_t max_tokens = 4096;
  std::string backend_mode = "fixture";  // model | fixture
  std::string attn_model_id{kDefaultAttentionModel};
  std::string nli_model_id{kDefaultNliModel};
  std::filesystem::path fixture_dir = std::filesystem::path(CLAIMSCOPE_DATA_DIR) / "fixtures";
  // Optional persistent NLI verdict cache (JSON lines).
  std::filesystem::path verdict_cache;

  // Reads BIND_ADDR, CACHE_BYTES, MAX_BODY_BYTES, MAX_TOKENS, BACKEND_MODE,
  // ATTN_MODEL_ID, NLI_MODEL_ID, FIXTURE_DIR, VERDICT_CACHE.
  static ServiceConfig from_env();
};

// Per-document state, evicted as a unit.
struct SessionEntry {
  Document doc;  // aligned
  TokenAttention attention;
  SaliencyMatrix saliency;
  std::size_t bytes = 0;

  std::mutex mu;  // guards the fields below
  std::map<std::size_t, AnalysisResult> analyses;
  std::optional<std::size_t> last_target;
};

// LRU by approximate byte size. The most recently inserted entry is never
// evicted, even if it alone exceeds the cap.
class SessionCache {
 public:
  explicit SessionCache(std::size_t capacity_bytes) : capacity_(capacity_bytes) {}

  std::shared_ptr<SessionEntry> get(const std::string& doc_id);
  void put(std::shared_ptr<SessionEntry> entry);
  std::size_t size() const;
  std::size_t bytes() const;

  static std::size_t estimate_bytes(const SessionEntry& entry);

 private:
  using Lru = std::list<std::string>;

  mutable std::mutex mu_;
  std::size_t capacity_;
  std::size_t bytes_ = 0;
  Lru lru_;  // front = most recent
  std::unordered_map<std::string, std::pair<std::shared_ptr<SessionEntry>, Lru::iterator>> entries_;
};

class Service {
 public:
  Service(ServiceConfig config, std::shared_ptr<AttentionProvider> attention,
          std::shared_ptr<NliBackend> nli, std::shared_ptr<VerdictCache> verdicts = nullptr);

  // Wires the backends named by config.backend_mode.
  static std::unique_ptr<Service> from_config(const ServiceConfig& config);

  httplib::Server& http() { return server_; }
  const ServiceConfig& config() const { return config_; }
  const SessionCache& cache() const { return cache_; }
  // Ordered NLI pairs sent to the backend so far.
  std::uint64_t nli_backend_calls() const { return nli_calls_.load(); }
  std::uint64_t attention_calls() const { return attention_calls_.load(); }

  // Blocks serving on config.bind_addr ("host:port").
  bool listen();
  // Binds an ephemeral port on `host` and returns it; serve with run().
  int bind_ephemeral(const std::string& host = "127.0.0.1");
  bool run() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }

 private:
  struct Reply {
    int status = 200;
    nlohmann::json body;
  };

  void install_routes();
  Reply ingest(const httplib::Request& req);
  Reply analyze_route(const httplib::Request& req);
  Reply refilter_route(const httplib::Request& req);
  Reply saliency_route(const httplib::Request& req);
  Reply health_route();

  std::shared_ptr<SessionEntry> build_entry(const Document& doc);
  std::unique_ptr<NliEngine> engine_for(const nlohmann::json& overrides);

  ServiceConfig config_;
  std::shared_ptr<AttentionProvider> attention_;
  std::shared_ptr<NliBackend> nli_;
  std::shared_ptr<VerdictCache> verdicts_;
  SessionCache cache_;
  httplib::Server server_;

  std::mutex attention_mu_;
  std::mutex inflight_mu_;
  std::unordered_map<std::string, std::shared_future<std::shared_ptr<SessionEntry>>> inflight_;
  std::atomic<std::uint64_t> nli_calls_{0};
  std::atomic<std::uint64_t> attention_calls_{0};
};

}  // namespace claimscope
