#include "csd/service.hpp"

#include <cctype>
#include <fstream>

#include "httplib.h"

#include "csd/text.hpp"

namespace csd {

using nlohmann::json;

int ServiceError::http_status() const {
  switch (kind_) {
    case Kind::BadRequest: return 400;
    case Kind::SessionNotFound: return 404;
    case Kind::GenerationError: return 422;
    case Kind::Unavailable: return 503;
    case Kind::BindError: return 500;
  }
  return 500;
}

json ChatTurnResult::to_json() const {
  return {{"session_id", session_id},
          {"response_text", response_text},
          {"cs", std::string(to_string(labels.cs))},
          {"emo", std::string(to_string(labels.emo))},
          {"strategy", std::string(to_string(labels.strategy))},
          {"latency_ms", latency_ms},
          {"seed", seed},
          {"turn", turn}};
}

json labels_json() {
  json out = json::object();
  for (Taxonomy t : kTaxonomies) {
    json names = json::array();
    for (int i = 0; i < label_count(t); ++i) names.push_back(std::string(label_name(t, i)));
    out[std::string(taxonomy_name(t))] = names;
  }
  json explain = json::array();
  for (auto e : kCSExplanations) explain.push_back(std::string(e));
  out["cs_explanations"] = explain;
  return out;
}

namespace {

[[noreturn]] void bad_request(const std::string& m) { throw ServiceError(ServiceError::Kind::BadRequest, m); }

template <typename T>
T typed_field(const json& obj, const char* key) {
  const json& v = obj.at(key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) bad_request(std::string("params.") + key + " must be a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) bad_request(std::string("params.") + key + " must be an integer");
    if (std::is_unsigned_v<T> && !v.is_number_unsigned() && v.get<long long>() < 0) {
      bad_request(std::string("params.") + key + " must be non-negative");
    }
    if (!std::is_unsigned_v<T>) {
      const auto x = v.get<long long>();
      if (x > 1000000 || x < -1000000) bad_request(std::string("params.") + key + " is out of range");
    }
  } else {
    if (!v.is_number()) bad_request(std::string("params.") + key + " must be a number");
  }
  return v.get<T>();
}

bool valid_session_id(const std::string& id) {
  if (id.empty() || id.size() > 128) return false;
  for (char c : id) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' || c == ':')) return false;
  }
  return true;
}

std::string clean_message(const std::string& raw) {
  std::string s = raw;
  for (char& c : s) {
    if (c == '\n' || c == '\r' || c == '\t') c = ' ';
  }
  return text::trim(s);
}

ChatService::Response error_response(int status, const std::string& message) {
  return {status, json{{"error", {{"status", status}, {"message", message}}}}};
}

}  // namespace

GenerationParams apply_params(const GenerationParams& base, const json& params, bool* seed_pinned) {
  if (seed_pinned != nullptr) *seed_pinned = false;
  if (params.is_null()) return base;
  if (!params.is_object()) bad_request("params must be an object");
  GenerationParams p = base;
  for (const auto& [k, v] : params.items()) {
    if (k == "temperature") {
      p.temperature = typed_field<double>(params, "temperature");
    } else if (k == "top_k") {
      p.top_k = typed_field<int>(params, "top_k");
    } else if (k == "top_p") {
      p.top_p = typed_field<double>(params, "top_p");
    } else if (k == "max_new_tokens") {
      p.max_new_tokens = typed_field<int>(params, "max_new_tokens");
    } else if (k == "greedy") {
      p.greedy = typed_field<bool>(params, "greedy");
    } else if (k == "seed") {
      p.seed = typed_field<std::uint64_t>(params, "seed");
      if (seed_pinned != nullptr) *seed_pinned = true;
    } else {
      bad_request("unknown params key '" + k + "'");
    }
  }
  if (p.max_new_tokens > 256) bad_request("params.max_new_tokens must be at most 256");
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    bad_request(std::string("params: ") + e.what());
  }
  return p;
}

ChatService::ChatService(std::shared_ptr<ModelBundle> bundle, ServiceOptions opts)
    : bundle_(std::move(bundle)), opts_(std::move(opts)), seed_counter_(opts_.seed_base) {
  if (!bundle_) throw std::invalid_argument("ChatService needs a model bundle");
  opts_.defaults.validate();
  version_ = bundle_->version();
}

ChatService::~ChatService() = default;

ChatTurnResult ChatService::respond(const std::string& session_id, const std::string& message,
                                    const json* params) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!valid_session_id(session_id)) bad_request("session_id must be 1-128 characters of [A-Za-z0-9._:-]");
  if (message.size() > opts_.max_message_bytes) bad_request("message is too long");
  Utterance speaker;
  speaker.role = Role::Speaker;
  speaker.text = clean_message(message);
  try {
    validate_utterance(speaker);
  } catch (const CorpusError& e) {
    bad_request(std::string("message rejected: ") + e.what());
  }

  std::shared_ptr<Session> s;
  std::uint64_t ticket = 0;
  {
    std::lock_guard<std::mutex> lk(sessions_m_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) {
      if (sessions_.size() >= opts_.max_sessions) {
        throw ServiceError(ServiceError::Kind::Unavailable, "too many live sessions");
      }
      s = std::make_shared<Session>();
      s->id = session_id;
      s->params = opts_.defaults;
      s->created_at = std::chrono::system_clock::now();
      sessions_.emplace(session_id, s);
    } else {
      s = it->second;
    }
    // Tickets are drawn under the registry lock, so arrival order is the
    // order in which requests reached this point.
    std::lock_guard<std::mutex> slk(s->m);
    ticket = s->next_ticket++;
  }

  std::unique_lock<std::mutex> lk(s->m);
  s->cv.wait(lk, [&] { return s->serving == ticket; });
  struct Release {
    Session& s;
    std::unique_lock<std::mutex>& lk;
    ~Release() {
      if (!lk.owns_lock()) lk.lock();
      ++s.serving;
      lk.unlock();
      s.cv.notify_all();
    }
  } release{*s, lk};
  if (s->closed) throw ServiceError(ServiceError::Kind::SessionNotFound, "session was closed");

  bool pinned = false;
  const GenerationParams p = apply_params(s->params, params != nullptr ? *params : json(), &pinned);
  GenerationParams run = p;
  if (!pinned) run.seed = seed_counter_.fetch_add(1);

  Conversation conv = s->history;
  std::vector<LabelTriple> labels = s->labels;
  const std::size_t turn = conv.utterances.size() / 2;
  lk.unlock();

  // The ticket grants exclusive access to this session's state while the
  // model runs without holding the mutex.
  ChatTurnResult result;
  try {
    ModelBundle& b = *bundle_;
    conv.utterances.push_back(speaker);
    const LabelTriple sl = b.classifiers.predict(conv, conv.utterances.size() - 1, b.vocab);
    conv.utterances.back().set_labels(sl);
    labels.push_back(sl);
    const GeneratedResponse g = sample_response(conv, b, run, labels);
    Utterance listener;
    listener.role = Role::Listener;
    listener.text = g.text;
    validate_utterance(listener);
    conv.utterances.push_back(listener);
    const LabelTriple ll = b.classifiers.predict(conv, conv.utterances.size() - 1, b.vocab);
    conv.utterances.back().set_labels(ll);
    labels.push_back(ll);
    result.labels = g.labels;
    result.response_text = g.text;
  } catch (const ServiceError&) {
    throw;
  } catch (const std::exception& e) {
    throw ServiceError(ServiceError::Kind::GenerationError, std::string("generation failed: ") + e.what());
  }

  lk.lock();
  s->history = std::move(conv);
  s->labels = std::move(labels);
  s->params = p;
  result.session_id = session_id;
  result.seed = run.seed;
  result.turn = turn;
  result.latency_ms = static_cast<int>(
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count());
  return result;
}

void ChatService::persist(const Session& s) {
  if (opts_.transcript_path.empty() || s.history.utterances.size() < 2) return;
  Corpus c;
  c.conversations.push_back(s.history);
  const std::string text = serialize_corpus(c);
  std::lock_guard<std::mutex> lk(transcript_m_);
  std::ofstream out(opts_.transcript_path, std::ios::app | std::ios::binary);
  if (out) out << text;
}

bool ChatService::close_session(const std::string& session_id) {
  std::shared_ptr<Session> s;
  {
    std::lock_guard<std::mutex> lk(sessions_m_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) return false;
    s = it->second;
    sessions_.erase(it);
  }
  std::unique_lock<std::mutex> lk(s->m);
  // Wait for turns already queued ahead of the close, then persist.
  const std::uint64_t ticket = s->next_ticket++;
  s->cv.wait(lk, [&] { return s->serving == ticket; });
  s->closed = true;
  persist(*s);
  ++s->serving;
  lk.unlock();
  s->cv.notify_all();
  return true;
}

std::optional<Conversation> ChatService::history(const std::string& session_id) const {
  std::shared_ptr<Session> s;
  {
    std::lock_guard<std::mutex> lk(sessions_m_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) return std::nullopt;
    s = it->second;
  }
  std::lock_guard<std::mutex> lk(s->m);
  return s->history;
}

std::size_t ChatService::session_count() const {
  std::lock_guard<std::mutex> lk(sessions_m_);
  return sessions_.size();
}

void ChatService::flush() {
  std::vector<std::string> ids;
  {
    std::lock_guard<std::mutex> lk(sessions_m_);
    for (const auto& [id, _] : sessions_) ids.push_back(id);
  }
  for (const auto& id : ids) close_session(id);
}

ChatService::Response ChatService::handle(const std::string& method, const std::string& raw_path,
                                          const std::string& body) {
  try {
    const std::string path = raw_path.substr(0, raw_path.find('?'));
    if (path == "/api/health") {
      if (method != "GET") return error_response(405, "use GET");
      return {200, json{{"status", "ok"}, {"model_version", version_}, {"sessions", session_count()}}};
    }
    if (path == "/api/labels") {
      if (method != "GET") return error_response(405, "use GET");
      return {200, labels_json()};
    }
    if (path == "/api/chat") {
      if (method != "POST") return error_response(405, "use POST");
      json req;
      try {
        req = json::parse(body);
      } catch (const json::exception&) {
        return error_response(400, "body is not valid JSON");
      }
      if (!req.is_object()) return error_response(400, "body must be a JSON object");
      for (const auto& [k, v] : req.items()) {
        if (k != "session_id" && k != "message" && k != "params") {
          return error_response(400, "unknown field '" + k + "'");
        }
      }
      if (!req.contains("session_id") || !req["session_id"].is_string()) {
        return error_response(400, "session_id must be a string");
      }
      if (!req.contains("message") || !req["message"].is_string()) {
        return error_response(400, "message must be a string");
      }
      const json* params = req.contains("params") ? &req["params"] : nullptr;
      const ChatTurnResult r = respond(req["session_id"].get<std::string>(), req["message"].get<std::string>(), params);
      return {200, r.to_json()};
    }
    const std::string prefix = "/api/session/";
    if (path.rfind(prefix, 0) == 0) {
      const std::string id = path.substr(prefix.size());
      if (!valid_session_id(id)) return error_response(400, "malformed session id");
      if (method == "DELETE") {
        if (!close_session(id)) return error_response(404, "no such session");
        return {200, json{{"session_id", id}, {"closed", true}}};
      }
      if (method == "GET") {
        const auto h = history(id);
        if (!h) return error_response(404, "no such session");
        json turns = json::array();
        for (const auto& u : h->utterances) {
          turns.push_back({{"role", std::string(to_string(u.role))},
                           {"text", u.text},
                           {"cs", std::string(to_string(u.cs))},
                           {"emo", std::string(to_string(u.emo))},
                           {"strategy", std::string(to_string(u.strategy))}});
        }
        return {200, json{{"session_id", id}, {"history", turns}}};
      }
      return error_response(405, "use GET or DELETE");
    }
    return error_response(404, "no such endpoint");
  } catch (const ServiceError& e) {
    return error_response(e.http_status(), e.what());
  } catch (const std::exception& e) {
    return error_response(500, std::string("internal error: ") + e.what());
  } catch (...) {
    return error_response(500, "internal error");
  }
}

// --- HTTP front end ---------------------------------------------------------

HttpServer::HttpServer(ChatService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  const int threads = std::max(1, service_.options().threads);
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
  server_->set_payload_max_length(1 << 20);
  // Plain SO_REUSEADDR only: the library default also sets SO_REUSEPORT,
  // which would let a second instance silently share the port.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
  });
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    const ChatService::Response r = service_.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
  };
  server_->Get(".*", route);
  server_->Post(".*", route);
  server_->Put(".*", route);
  server_->Patch(".*", route);
  server_->Delete(".*", route);
  server_->Options(".*", route);
  // Covers failures raised by the HTTP layer itself, such as an oversized
  // payload. Bodies already written by the router are kept.
  server_->set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      res.set_content(json{{"error", {{"status", res.status}, {"message", httplib::status_message(res.status)}}}}.dump(),
                      "application/json");
    }
    return httplib::Server::HandlerResponse::Handled;
  });
  server_->set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
    res.status = 500;
    res.set_content(json{{"error", {{"status", 500}, {"message", "internal error"}}}}.dump(), "application/json");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  if (thread_.joinable()) throw ServiceError(ServiceError::Kind::BindError, "server already running");
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    port_ = server_->bind_to_port(host, port) ? port : -1;
  }
  if (port_ <= 0) throw ServiceError(ServiceError::Kind::BindError, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void HttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace csd
