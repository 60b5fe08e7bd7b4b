#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>

#include "planforge/checkpoint.hpp"
#include "planforge/serialization.hpp"

namespace httplib {
class Server;
}

namespace planforge {

/// Keyed JSON session records.
class SessionStore {
 public:
  virtual ~SessionStore() = default;
  virtual std::optional<Json> get(const std::string& id) const = 0;
  /// Inserts or replaces a record.
  virtual void put(const std::string& id, const Json& record) = 0;
};

class MemorySessionStore : public SessionStore {
 public:
  std::optional<Json> get(const std::string& id) const override;
  void put(const std::string& id, const Json& record) override;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, Json> records_;
};

/// Whole store in one JSON file, rewritten atomically on every put.
class JsonFileSessionStore : public SessionStore {
 public:
  explicit JsonFileSessionStore(std::string path);
  std::optional<Json> get(const std::string& id) const override;
  void put(const std::string& id, const Json& record) override;

 private:
  std::string path_;
  mutable std::mutex mutex_;
  std::map<std::string, Json> records_;
};

struct HttpResponse {
  int status = 200;
  std::string contentType = "application/json";
  std::string body;
};

struct ServiceOptions {
  std::chrono::milliseconds generationTimeout{60'000};
};

/// Version 1 REST API over a loaded model (possibly none) and a session store.
///   POST /v1/sessions                   diagram -> 201 {sessionId}
///   POST /v1/sessions/{id}/generate     -> GenerationResult with candidate ids
///   POST /v1/sessions/{id}/refine       {candidateId, edits, iters}
///   POST /v1/sessions/{id}/select       {candidateId}
///   GET  /v1/sessions/{id}              full record
///   GET  /v1/render/{candidateId}.svg
///   GET  /v1/health, GET /v1/spec
class PlanService {
 public:
  PlanService(std::shared_ptr<const ModelBundle> model, std::shared_ptr<SessionStore> store,
              ServiceOptions options = {});

  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body);

  /// Routes every /v1 endpoint of `server` to handle() with JSON access logs
  /// written to `accessLog` when non-null.
  void mount(httplib::Server& server, std::ostream* accessLog = nullptr);

  bool model_loaded() const { return model_ != nullptr; }

 private:
  HttpResponse create_session(const std::string& body);
  HttpResponse generate(const std::string& sessionId, const std::string& body);
  HttpResponse refine(const std::string& sessionId, const std::string& body);
  HttpResponse select(const std::string& sessionId, const std::string& body);
  HttpResponse get_session(const std::string& sessionId);
  HttpResponse render(const std::string& candidateId);
  HttpResponse health() const;

  std::string new_session_id();
  const Vocabulary& vocab() const;

  std::shared_ptr<const ModelBundle> model_;
  std::shared_ptr<SessionStore> store_;
  ServiceOptions options_;
  std::mutex commitMutex_;
  std::mutex idMutex_;
  std::mt19937_64 idRng_;
};

/// OpenAPI 3 description of the /v1 endpoints.
Json openapi_document();

}  // namespace planforge
