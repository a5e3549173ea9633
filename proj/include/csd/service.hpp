#ifndef CSD_SERVICE_HPP
#define CSD_SERVICE_HPP

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "csd/bundle.hpp"
#include "csd/corpus.hpp"
#include "csd/generation.hpp"

namespace httplib {
class Server;
}

namespace csd {

class ServiceError : public std::runtime_error {
 public:
  enum class Kind { BadRequest, SessionNotFound, GenerationError, Unavailable, BindError };
  ServiceError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }
  int http_status() const;

 private:
  Kind kind_;
};

struct ChatTurnResult {
  std::string session_id;
  std::string response_text;
  LabelTriple labels;  // the labels that conditioned this response
  int latency_ms = 0;
  std::uint64_t seed = 0;
  /// Zero-based index of this exchange within the session.
  std::size_t turn = 0;

  nlohmann::json to_json() const;
};

struct ServiceOptions {
  GenerationParams defaults;
  /// Sessions are appended here in CSConv form when closed or flushed.
  std::string transcript_path;
  /// First value of the per-request seed counter.
  std::uint64_t seed_base = 0;
  std::size_t max_message_bytes = 2000;
  std::size_t max_sessions = 4096;
  int threads = 16;
};

/// Live chat sessions over a shared read-only model bundle. Requests for
/// different sessions run in parallel. Requests for one session run one at a
/// time in the order they arrived.
class ChatService {
 public:
  struct Response {
    int status = 200;
    nlohmann::json body;
  };

  ChatService(std::shared_ptr<ModelBundle> bundle, ServiceOptions opts = {});
  ~ChatService();
  ChatService(const ChatService&) = delete;
  ChatService& operator=(const ChatService&) = delete;

  /// Routing core shared by the HTTP server and in-process callers. Never
  /// throws; every response body is a JSON object.
  Response handle(const std::string& method, const std::string& path, const std::string& body);

  /// Appends the user's SPEAKER turn, generates the LISTENER reply and
  /// appends it. Creates the session when it does not exist yet.
  /// `params` overrides the session's generation knobs; without a pinned seed
  /// the server counter supplies one.
  ChatTurnResult respond(const std::string& session_id, const std::string& message,
                         const nlohmann::json* params = nullptr);

  /// Persists and removes the session. Returns false if it did not exist.
  bool close_session(const std::string& session_id);
  std::optional<Conversation> history(const std::string& session_id) const;
  std::size_t session_count() const;
  /// Writes every open session to the transcript file and closes it.
  void flush();

  std::string model_version() const { return version_; }
  const ServiceOptions& options() const { return opts_; }

 private:
  struct Session {
    std::string id;
    Conversation history;
    std::vector<LabelTriple> labels;  // one triple per history utterance
    GenerationParams params;
    std::chrono::system_clock::time_point created_at;
    std::mutex m;
    std::condition_variable cv;
    std::uint64_t next_ticket = 0;
    std::uint64_t serving = 0;
    bool closed = false;
  };

  void persist(const Session& s);

  std::shared_ptr<ModelBundle> bundle_;
  ServiceOptions opts_;
  std::string version_;
  mutable std::mutex sessions_m_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex transcript_m_;
  std::atomic<std::uint64_t> seed_counter_;
};

/// Applies a JSON "params" object on top of `base`. Throws
/// ServiceError(BadRequest) for unknown keys, wrong types or bad ranges.
GenerationParams apply_params(const GenerationParams& base, const nlohmann::json& params, bool* seed_pinned);

/// The three label taxonomies as served by /api/labels.
nlohmann::json labels_json();

/// HTTP front end. start() binds and serves on a background thread.
class HttpServer {
 public:
  explicit HttpServer(ChatService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port; throws
  /// ServiceError(BindError) on failure.
  int start(const std::string& host, int port);
  void stop();
  int port() const { return port_; }

 private:
  ChatService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace csd

#endif  // CSD_SERVICE_HPP
