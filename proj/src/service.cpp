#include "planforge/service.hpp"

#include <ctime>
#include <filesystem>
#include <fstream>
#include <future>
#include <ostream>
#include <regex>
#include <thread>

#include "planforge/connectivity.hpp"
#include "planforge/evaluation.hpp"
#include "planforge/inference.hpp"

// After Eigen: resolv.h defines _res.
#include <httplib.h>

namespace planforge {

namespace {

HttpResponse json_response(int status, const Json& body) { return {status, "application/json", body.dump()}; }

HttpResponse error_response(int status, const std::string& message) {
  return json_response(status, {{"error", message}});
}

HttpResponse validation_response(const ValidationError& e) {
  Json errors = Json::array();
  for (const auto& f : e.errors()) errors.push_back({{"field", f.field}, {"message", f.message}});
  return json_response(422, {{"error", "validation failed"}, {"errors", std::move(errors)}});
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Parses a request body; an empty body reads as an empty object.
std::optional<Json> parse_body(const std::string& body) {
  if (body.find_first_not_of(" \t\r\n") == std::string::npos) return Json::object();
  try {
    return Json::parse(body);
  } catch (const Json::parse_error&) {
    return std::nullopt;
  }
}

std::map<std::string, Box> boxes_from_json(const Json& j, const std::string& field) {
  std::map<std::string, Box> out;
  if (j.is_null()) return out;
  if (!j.is_object()) throw ValidationError(field, "must map room ids to boxes");
  std::vector<FieldError> errors;
  for (const auto& [id, box] : j.items()) {
    try {
      out[id] = box_from_json(box, field + "." + id);
    } catch (const ValidationError& e) {
      errors.insert(errors.end(), e.errors().begin(), e.errors().end());
    }
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
  return out;
}

/// Candidate ids are "<sessionId>-c<n>".
std::optional<std::pair<std::string, std::string>> split_candidate_id(const std::string& candidateId) {
  const auto pos = candidateId.rfind("-c");
  if (pos == std::string::npos || pos == 0 || pos + 2 >= candidateId.size()) return std::nullopt;
  return std::make_pair(candidateId.substr(0, pos), candidateId);
}

/// Every stored candidate of a session: generated ones and refinement results.
const Json* find_candidate(const Json& record, const std::string& candidateId) {
  for (const auto& gen : record.at("history"))
    for (const auto& c : gen.at("candidates"))
      if (c.at("candidateId") == candidateId) return &c;
  for (const auto& e : record.at("edits"))
    if (e.at("result").at("candidateId") == candidateId) return &e.at("result");
  return nullptr;
}

int next_candidate_number(const Json& record) { return record.value("candidateCount", 0); }

}  // namespace

std::optional<Json> MemorySessionStore::get(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = records_.find(id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

void MemorySessionStore::put(const std::string& id, const Json& record) {
  std::lock_guard lock(mutex_);
  records_[id] = record;
}

JsonFileSessionStore::JsonFileSessionStore(std::string path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) return;
  std::ifstream is(path_);
  Json all;
  try {
    all = Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw ParseError("session store " + path_ + ": " + e.what(), static_cast<long>(e.byte));
  }
  if (!all.is_object()) throw ParseError("session store " + path_ + ": expected an object of sessions");
  for (const auto& [id, record] : all.items()) records_[id] = record;
}

std::optional<Json> JsonFileSessionStore::get(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = records_.find(id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

void JsonFileSessionStore::put(const std::string& id, const Json& record) {
  std::lock_guard lock(mutex_);
  records_[id] = record;
  Json all = Json::object();
  for (const auto& [key, value] : records_) all[key] = value;
  const std::string tmp = path_ + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw ConfigError("session store: cannot write " + tmp);
    os << all.dump();
  }
  std::filesystem::rename(tmp, path_);
}

PlanService::PlanService(std::shared_ptr<const ModelBundle> model, std::shared_ptr<SessionStore> store,
                         ServiceOptions options)
    : model_(std::move(model)), store_(std::move(store)), options_(options), idRng_(std::random_device{}()) {
  if (!store_) throw ConfigError("service: a session store is required");
}

const Vocabulary& PlanService::vocab() const { return model_ ? model_->vocab : Vocabulary::residential(); }

std::string PlanService::new_session_id() {
  std::uint64_t hi, lo;
  {
    std::lock_guard lock(idMutex_);
    hi = idRng_();
    lo = idRng_();
  }
  // RFC 4122 version 4, variant 1.
  hi = (hi & 0xffffffffffff0fffULL) | 0x0000000000004000ULL;
  lo = (lo & 0x3fffffffffffffffULL) | 0x8000000000000000ULL;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%08llx-%04llx-%04llx-%04llx-%012llx", static_cast<unsigned long long>(hi >> 32),
                static_cast<unsigned long long>((hi >> 16) & 0xffff), static_cast<unsigned long long>(hi & 0xffff),
                static_cast<unsigned long long>(lo >> 48), static_cast<unsigned long long>(lo & 0xffffffffffffULL));
  return buf;
}

HttpResponse PlanService::handle(const std::string& method, const std::string& path, const std::string& body) {
  static const std::regex sessionAction("^/v1/sessions/([^/]+)/(generate|refine|select)$");
  static const std::regex session("^/v1/sessions/([^/]+)$");
  static const std::regex renderRoute("^/v1/render/([^/]+)\\.svg$");
  std::smatch m;
  try {
    if (path == "/v1/sessions") {
      if (method != "POST") return error_response(405, "method not allowed");
      return create_session(body);
    }
    if (std::regex_match(path, m, sessionAction)) {
      if (method != "POST") return error_response(405, "method not allowed");
      if (m[2] == "generate") return generate(m[1], body);
      if (m[2] == "refine") return refine(m[1], body);
      return select(m[1], body);
    }
    if (std::regex_match(path, m, session)) {
      if (method != "GET") return error_response(405, "method not allowed");
      return get_session(m[1]);
    }
    if (std::regex_match(path, m, renderRoute)) {
      if (method != "GET") return error_response(405, "method not allowed");
      return render(m[1]);
    }
    if (path == "/v1/health") {
      if (method != "GET") return error_response(405, "method not allowed");
      return health();
    }
    if (path == "/v1/spec") {
      if (method != "GET") return error_response(405, "method not allowed");
      return json_response(200, openapi_document());
    }
    return error_response(404, "no route for " + path);
  } catch (const ValidationError& e) {
    return validation_response(e);
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

HttpResponse PlanService::create_session(const std::string& body) {
  const auto j = parse_body(body);
  if (!j) return error_response(400, "request body is not valid JSON");
  BubbleDiagram bd = diagram_from_json(*j, vocab());
  validate(bd, vocab());
  const std::string id = new_session_id();
  Json record = {{"sessionId", id},
                 {"createdAt", utc_timestamp()},
                 {"diagram", to_json(bd, vocab())},
                 {"history", Json::array()},
                 {"edits", Json::array()},
                 {"selectedCandidateId", nullptr},
                 {"candidateCount", 0}};
  {
    std::lock_guard lock(commitMutex_);
    store_->put(id, record);
  }
  return json_response(201, {{"sessionId", id}, {"diagram", record["diagram"]}});
}

HttpResponse PlanService::generate(const std::string& sessionId, const std::string& body) {
  const auto record = store_->get(sessionId);
  if (!record) return error_response(404, "unknown session " + sessionId);
  if (!model_) return error_response(409, "no model loaded");
  const auto j = parse_body(body);
  if (!j) return error_response(400, "request body is not valid JSON");
  const BubbleDiagram bd = diagram_from_json(record->at("diagram"), vocab());
  GenerationRequest req = generation_request_from_json(*j, bd);
  validate(req, vocab());

  // Detached so a timed-out request returns without waiting for the worker.
  std::packaged_task<GenerationResult()> task([model = model_, req] { return planforge::generate(req, *model); });
  auto future = task.get_future();
  std::thread(std::move(task)).detach();
  if (future.wait_for(options_.generationTimeout) != std::future_status::ready)
    return error_response(504, "generation exceeded the configured timeout");
  const GenerationResult result = future.get();

  Json payload = to_json(result, vocab());
  std::lock_guard lock(commitMutex_);
  Json current = *store_->get(sessionId);
  int next = next_candidate_number(current);
  for (auto& c : payload["candidates"]) {
    c["candidateId"] = sessionId + "-c" + std::to_string(next++);
    c["svgUrl"] = "/v1/render/" + c["candidateId"].get<std::string>() + ".svg";
  }
  payload["createdAt"] = utc_timestamp();
  current["history"].push_back(payload);
  current["candidateCount"] = next;
  store_->put(sessionId, current);
  return json_response(200, payload);
}

HttpResponse PlanService::refine(const std::string& sessionId, const std::string& body) {
  const auto record = store_->get(sessionId);
  if (!record) return error_response(404, "unknown session " + sessionId);
  const auto j = parse_body(body);
  if (!j) return error_response(400, "request body is not valid JSON");
  if (!j->is_object()) throw ValidationError("body", "must be a JSON object");
  if (!j->contains("candidateId") || !j->at("candidateId").is_string())
    throw ValidationError("candidateId", "must be a string");
  const std::string candidateId = j->at("candidateId").get<std::string>();
  const Json* candidate = find_candidate(*record, candidateId);
  if (!candidate) return error_response(404, "unknown candidate " + candidateId);
  if (!model_) return error_response(409, "no model loaded");
  int iters = kDefaultRefineIters;
  if (j->contains("iters")) {
    if (!j->at("iters").is_number_integer()) throw ValidationError("iters", "must be an integer");
    iters = j->at("iters").get<int>();
  }
  const auto edits = boxes_from_json(j->value("edits", Json::object()), "edits");
  const BubbleDiagram bd = diagram_from_json(record->at("diagram"), vocab());
  const Floorplan fp = floorplan_from_json(candidate->at("plan"), vocab());
  const RefinementTrace trace = edit_and_refine(fp, edits, bd, iters, *model_);

  Json editsJson = Json::object();
  for (const auto& [id, b] : edits) editsJson[id] = to_json(b);
  std::lock_guard lock(commitMutex_);
  Json current = *store_->get(sessionId);
  const int next = next_candidate_number(current);
  const std::string resultId = sessionId + "-c" + std::to_string(next);
  Json result = {{"candidateId", resultId},
                 {"sourceCandidateId", candidateId},
                 {"plan", to_json(trace.final().plan, vocab())},
                 {"trace", to_json(trace, vocab())},
                 {"compatibility", compatibility(bd, trace.final().plan, vocab()).distance},
                 {"svgUrl", "/v1/render/" + resultId + ".svg"}};
  current["edits"].push_back(
      {{"timestamp", utc_timestamp()}, {"candidateId", candidateId}, {"edits", editsJson}, {"iters", iters}, {"result", result}});
  current["candidateCount"] = next + 1;
  store_->put(sessionId, current);
  return json_response(200, result);
}

HttpResponse PlanService::select(const std::string& sessionId, const std::string& body) {
  const auto record = store_->get(sessionId);
  if (!record) return error_response(404, "unknown session " + sessionId);
  const auto j = parse_body(body);
  if (!j) return error_response(400, "request body is not valid JSON");
  if (!j->is_object() || !j->contains("candidateId") || !j->at("candidateId").is_string())
    throw ValidationError("candidateId", "must be a string");
  const std::string candidateId = j->at("candidateId").get<std::string>();
  if (!find_candidate(*record, candidateId)) return error_response(404, "unknown candidate " + candidateId);
  std::lock_guard lock(commitMutex_);
  Json current = *store_->get(sessionId);
  current["selectedCandidateId"] = candidateId;
  store_->put(sessionId, current);
  return json_response(200, {{"sessionId", sessionId}, {"selectedCandidateId", candidateId}});
}

HttpResponse PlanService::get_session(const std::string& sessionId) {
  const auto record = store_->get(sessionId);
  if (!record) return error_response(404, "unknown session " + sessionId);
  return json_response(200, *record);
}

HttpResponse PlanService::render(const std::string& candidateId) {
  const auto ids = split_candidate_id(candidateId);
  if (!ids) return error_response(404, "unknown candidate " + candidateId);
  const auto record = store_->get(ids->first);
  if (!record) return error_response(404, "unknown candidate " + candidateId);
  const Json* candidate = find_candidate(*record, candidateId);
  if (!candidate) return error_response(404, "unknown candidate " + candidateId);
  return {200, "image/svg+xml", render_svg(floorplan_from_json(candidate->at("plan"), vocab()), vocab())};
}

HttpResponse PlanService::health() const {
  if (!model_) return json_response(200, {{"status", "degraded"}, {"reason", "no model loaded"}});
  return json_response(200, {{"status", "ok"}, {"modelHash", model_->model_hash()}, {"vocabHash", model_->vocab.hash()}});
}

void PlanService::mount(httplib::Server& server, std::ostream* accessLog) {
  auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    const HttpResponse r = handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, r.contentType);
  };
  server.Get(R"(/v1/.*)", forward);
  server.Post(R"(/v1/.*)", forward);
  if (accessLog) {
    auto mutex = std::make_shared<std::mutex>();
    server.set_logger([accessLog, mutex](const httplib::Request& req, const httplib::Response& res) {
      const Json line = {{"ts", utc_timestamp()}, {"method", req.method}, {"path", req.path},
                         {"status", res.status}, {"bytes", res.body.size()}, {"remote", req.remote_addr}};
      std::lock_guard lock(*mutex);
      *accessLog << line.dump() << std::endl;
    });
  }
}

Json openapi_document() {
  const Json box = {{"type", "array"}, {"items", {{"type", "integer"}, {"minimum", 0}, {"maximum", 255}}},
                    {"minItems", 4}, {"maxItems", 4}};
  const Json boxMap = {{"type", "object"}, {"additionalProperties", {{"$ref", "#/components/schemas/Box"}}}};
  const Json errorRef = {{"$ref", "#/components/responses/Error"}};
  auto jsonBody = [](const std::string& ref) {
    return Json{{"required", true}, {"content", {{"application/json", {{"schema", {{"$ref", ref}}}}}}}};
  };
  auto ok = [](const std::string& description, const std::string& ref) {
    return Json{{"description", description}, {"content", {{"application/json", {{"schema", {{"$ref", ref}}}}}}}};
  };
  Json doc = {
      {"openapi", "3.0.3"},
      {"info", {{"title", "planforge"}, {"version", "1"}}},
      {"paths",
       {{"/v1/sessions",
         {{"post",
           {{"summary", "Create a session from a bubble diagram"},
            {"requestBody", jsonBody("#/components/schemas/BubbleDiagram")},
            {"responses", {{"201", ok("Session created", "#/components/schemas/SessionCreated")}, {"400", errorRef}, {"422", errorRef}}}}}}},
        {"/v1/sessions/{sessionId}",
         {{"get",
           {{"summary", "Full session record, history in insertion order"},
            {"parameters", {{{"name", "sessionId"}, {"in", "path"}, {"required", true}, {"schema", {{"type", "string"}}}}}},
            {"responses", {{"200", ok("Session", "#/components/schemas/Session")}, {"404", errorRef}}}}}}},
        {"/v1/sessions/{sessionId}/generate",
         {{"post",
           {{"summary", "Generate candidates for the session diagram"},
            {"parameters", {{{"name", "sessionId"}, {"in", "path"}, {"required", true}, {"schema", {{"type", "string"}}}}}},
            {"requestBody", jsonBody("#/components/schemas/GenerateRequest")},
            {"responses",
             {{"200", ok("Generation result", "#/components/schemas/GenerationResult")},
              {"404", errorRef}, {"409", errorRef}, {"422", errorRef}, {"504", errorRef}}}}}}},
        {"/v1/sessions/{sessionId}/refine",
         {{"post",
           {{"summary", "Apply box edits to a candidate and refine with them held fixed"},
            {"parameters", {{{"name", "sessionId"}, {"in", "path"}, {"required", true}, {"schema", {{"type", "string"}}}}}},
            {"requestBody", jsonBody("#/components/schemas/RefineRequest")},
            {"responses", {{"200", ok("Refined candidate", "#/components/schemas/RefineResult")}, {"404", errorRef}, {"409", errorRef}, {"422", errorRef}}}}}}},
        {"/v1/sessions/{sessionId}/select",
         {{"post",
           {{"summary", "Mark a candidate as selected"},
            {"parameters", {{{"name", "sessionId"}, {"in", "path"}, {"required", true}, {"schema", {{"type", "string"}}}}}},
            {"requestBody", jsonBody("#/components/schemas/SelectRequest")},
            {"responses", {{"200", {{"description", "Selection stored"}}}, {"404", errorRef}, {"422", errorRef}}}}}}},
        {"/v1/render/{candidateId}.svg",
         {{"get",
           {{"summary", "SVG rendering of a stored candidate"},
            {"parameters", {{{"name", "candidateId"}, {"in", "path"}, {"required", true}, {"schema", {{"type", "string"}}}}}},
            {"responses",
             {{"200", {{"description", "SVG document"}, {"content", {{"image/svg+xml", {{"schema", {{"type", "string"}}}}}}}}},
              {"404", errorRef}}}}}}},
        {"/v1/health",
         {{"get", {{"summary", "Service status and model hashes"}, {"responses", {{"200", ok("Health", "#/components/schemas/Health")}}}}}}},
        {"/v1/spec", {{"get", {{"summary", "This document"}, {"responses", {{"200", {{"description", "OpenAPI document"}}}}}}}}}}},
      {"components",
       {{"responses",
         {{"Error",
           {{"description", "Error with optional field-level details"},
            {"content", {{"application/json", {{"schema", {{"$ref", "#/components/schemas/Error"}}}}}}}}}}},
        {"schemas",
         {{"Box", box},
          {"Error",
           {{"type", "object"},
            {"required", {"error"}},
            {"properties",
             {{"error", {{"type", "string"}}},
              {"errors", {{"type", "array"}, {"items", {{"type", "object"}, {"properties", {{"field", {{"type", "string"}}}, {"message", {{"type", "string"}}}}}}}}}}}}},
          {"BubbleDiagram",
           {{"type", "object"},
            {"required", {"nodes"}},
            {"properties",
             {{"nodes",
               {{"type", "array"},
                {"items", {{"type", "object"}, {"required", {"id", "category"}}, {"properties", {{"id", {{"type", "string"}}}, {"category", {{"type", "string"}}}}}}}}},
              {"edges", {{"type", "array"}, {"items", {{"type", "array"}, {"items", {{"type", "string"}}}, {"minItems", 2}, {"maxItems", 2}}}}}}}}},
          {"Floorplan",
           {{"type", "object"},
            {"required", {"vocab_version", "elements"}},
            {"properties",
             {{"vocab_version", {{"type", "string"}}},
              {"elements",
               {{"type", "array"},
                {"items",
                 {{"type", "object"},
                  {"required", {"room_index", "category", "box"}},
                  {"properties", {{"room_index", {{"type", "integer"}}}, {"category", {{"type", "string"}}}, {"box", {{"$ref", "#/components/schemas/Box"}}}}}}}}}}}}},
          {"Trace",
           {{"type", "array"},
            {"items",
             {{"type", "object"},
              {"properties", {{"iteration", {{"type", "integer"}}}, {"plan", {{"$ref", "#/components/schemas/Floorplan"}}}}}}}}},
          {"SessionCreated", {{"type", "object"}, {"properties", {{"sessionId", {{"type", "string"}, {"format", "uuid"}}}, {"diagram", {{"$ref", "#/components/schemas/BubbleDiagram"}}}}}}},
          {"GenerateRequest",
           {{"type", "object"},
            {"properties",
             {{"numCandidates", {{"type", "integer"}, {"minimum", 1}, {"default", 1}}},
              {"seed", {{"type", "integer"}, {"minimum", 0}, {"default", 0}}},
              {"topK", {{"type", "integer"}, {"minimum", 1}, {"maximum", 256}, {"default", kDefaultTopK}}},
              {"refineIters", {{"type", "integer"}, {"minimum", 0}, {"default", kDefaultRefineIters}}},
              {"locks", boxMap}}}}},
          {"Candidate",
           {{"type", "object"},
            {"properties",
             {{"candidateId", {{"type", "string"}}},
              {"index", {{"type", "integer"}}},
              {"seed", {{"type", "integer"}}},
              {"plan", {{"$ref", "#/components/schemas/Floorplan"}}},
              {"trace", {{"$ref", "#/components/schemas/Trace"}}},
              {"compatibility", {{"type", "integer"}}},
              {"compatibilityExact", {{"type", "boolean"}}},
              {"svgUrl", {{"type", "string"}}}}}}},
          {"GenerationResult",
           {{"type", "object"},
            {"properties",
             {{"request", {{"type", "object"}}},
              {"candidates", {{"type", "array"}, {"items", {{"$ref", "#/components/schemas/Candidate"}}}}},
              {"modelHash", {{"type", "string"}}},
              {"vocabHash", {{"type", "string"}}},
              {"createdAt", {{"type", "string"}}}}}}},
          {"RefineRequest",
           {{"type", "object"},
            {"required", {"candidateId"}},
            {"properties",
             {{"candidateId", {{"type", "string"}}},
              {"edits", boxMap},
              {"iters", {{"type", "integer"}, {"minimum", 0}, {"default", kDefaultRefineIters}}}}}}},
          {"RefineResult",
           {{"type", "object"},
            {"properties",
             {{"candidateId", {{"type", "string"}}},
              {"sourceCandidateId", {{"type", "string"}}},
              {"plan", {{"$ref", "#/components/schemas/Floorplan"}}},
              {"trace", {{"$ref", "#/components/schemas/Trace"}}},
              {"compatibility", {{"type", "integer"}}},
              {"svgUrl", {{"type", "string"}}}}}}},
          {"SelectRequest", {{"type", "object"}, {"required", {"candidateId"}}, {"properties", {{"candidateId", {{"type", "string"}}}}}}},
          {"Session",
           {{"type", "object"},
            {"properties",
             {{"sessionId", {{"type", "string"}}},
              {"createdAt", {{"type", "string"}}},
              {"diagram", {{"$ref", "#/components/schemas/BubbleDiagram"}}},
              {"history", {{"type", "array"}, {"items", {{"$ref", "#/components/schemas/GenerationResult"}}}}},
              {"edits", {{"type", "array"}, {"items", {{"type", "object"}}}}},
              {"selectedCandidateId", {{"type", "string"}, {"nullable", true}}},
              {"candidateCount", {{"type", "integer"}}}}}}},
          {"Health",
           {{"type", "object"},
            {"properties",
             {{"status", {{"type", "string"}, {"enum", {"ok", "degraded"}}}},
              {"modelHash", {{"type", "string"}}},
              {"vocabHash", {{"type", "string"}}}}}}}}}}}};
  return doc;
}

}  // namespace planforge
