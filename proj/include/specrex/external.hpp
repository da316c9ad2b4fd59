#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <string>
#include <thread>

#include "specrex/classify.hpp"
#include "specrex/io.hpp"

extern char** environ;

namespace specrex {

inline constexpr std::chrono::milliseconds kDefaultRequestTimeout{30'000};

/// Client side of the newline-delimited JSON protocol spoken by an external
/// model process over its stdin/stdout. One request in flight at a time.
class ExternalClassifier : public Classifier {
 public:
  ExternalClassifier(const std::string& command, const WavenumberAxis& axis, int n_classes,
                     std::chrono::milliseconds timeout = kDefaultRequestTimeout)
      : n_classes_(n_classes), n_bins_(axis.size()), timeout_(timeout) {
    if (n_classes < 2) throw Error(ErrorCode::BadArgument, "n_classes must be >= 2");
    spawn(command);
    try {
      handshake(axis);
    } catch (...) {
      shutdown();
      throw;
    }
  }

  ExternalClassifier(const ExternalClassifier&) = delete;
  ExternalClassifier& operator=(const ExternalClassifier&) = delete;

  ~ExternalClassifier() override { shutdown(); }

  Prediction predict(std::span<const double> intensities) override {
    if (intensities.size() != n_bins_)
      throw Error(ErrorCode::AxisMismatch, "request length does not match handshake axis");
    const std::uint64_t id = next_id_++;
    std::string req = "{\"type\":\"classify\",\"id\":" + std::to_string(id) + ",\"intensities\":[";
    for (std::size_t i = 0; i < intensities.size(); ++i) {
      if (i) req += ',';
      req += format_double(intensities[i]);
    }
    req += "]}\n";
    send(req);

    const json resp = receive("prediction");
    Prediction p;
    try {
      if (resp.at("type").get<std::string>() != "prediction")
        throw Error(ErrorCode::ExternalProtocolError,
                    "expected prediction, got '" + resp.at("type").get<std::string>() + "'");
      const auto rid = resp.at("id").get<std::uint64_t>();
      if (rid != id)
        throw Error(ErrorCode::ExternalProtocolError,
                    "response id " + std::to_string(rid) + " does not match request id " +
                        std::to_string(id));
      p.label = resp.at("label").get<ClassId>();
      if (resp.contains("probabilities") && !resp.at("probabilities").is_null())
        p.probabilities = resp.at("probabilities").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ExternalProtocolError, std::string("malformed response: ") + e.what());
    }
    check_prediction(p, n_classes_);
    return p;
  }

  int n_classes() const override { return n_classes_; }
  pid_t pid() const { return pid_; }

 private:
  void spawn(const std::string& command) {
    // Writes to a dead child must surface as EPIPE, not kill us.
    ::signal(SIGPIPE, SIG_IGN);
    int in_pipe[2], out_pipe[2];
    if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0)
      throw Error(ErrorCode::SpawnError, std::string("pipe: ") + std::strerror(errno));
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_adddup2(&fa, in_pipe[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&fa, out_pipe[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&fa, in_pipe[1]);
    posix_spawn_file_actions_addclose(&fa, out_pipe[0]);
    std::string sh = "/bin/sh", dash_c = "-c", cmd = command;
    char* argv[] = {sh.data(), dash_c.data(), cmd.data(), nullptr};
    const int rc = posix_spawn(&pid_, "/bin/sh", &fa, nullptr, argv, environ);
    posix_spawn_file_actions_destroy(&fa);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    if (rc != 0) {
      ::close(in_pipe[1]);
      ::close(out_pipe[0]);
      pid_ = -1;
      throw Error(ErrorCode::SpawnError, "cannot spawn '" + command + "': " + std::strerror(rc));
    }
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    ::fcntl(to_child_, F_SETFD, FD_CLOEXEC);
    ::fcntl(from_child_, F_SETFD, FD_CLOEXEC);
    command_ = command;
  }

  void handshake(const WavenumberAxis& axis) {
    json hello = {{"type", "hello"}, {"axis", to_json(axis)}, {"n_classes", n_classes_}};
    try {
      send(hello.dump() + "\n");
      const json r = receive("ready");
      if (r.value("type", "") != "ready")
        throw Error(ErrorCode::HandshakeError, "expected ready, got: " + r.dump());
      if (r.value("n_classes", -1) != n_classes_)
        throw Error(ErrorCode::HandshakeError, "server reports n_classes " +
                                                   std::to_string(r.value("n_classes", -1)) +
                                                   ", expected " + std::to_string(n_classes_));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::HandshakeError) throw;
      if (child_exit_code() == 127)
        throw Error(ErrorCode::SpawnError, "command not found: '" + command_ + "'");
      throw Error(ErrorCode::HandshakeError, e.what());
    }
  }

  void send(const std::string& line) {
    std::size_t off = 0;
    while (off < line.size()) {
      const ssize_t w = ::write(to_child_, line.data() + off, line.size() - off);
      if (w < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::ExternalProtocolError, "connection closed (write failed)");
      }
      off += static_cast<std::size_t>(w);
    }
  }

  json receive(const char* expecting) {
    const std::string line = read_line();
    try {
      return json::parse(line);
    } catch (const json::parse_error&) {
      throw Error(ErrorCode::ExternalProtocolError,
                  std::string("malformed JSON while expecting ") + expecting + ": " + line.substr(0, 200));
    }
  }

  std::string read_line() {
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw Error(ErrorCode::ExternalProtocolError, "timeout waiting for response");
      pollfd pfd{from_child_, POLLIN, 0};
      const int pr = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (pr < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::ExternalProtocolError, std::string("poll: ") + std::strerror(errno));
      }
      if (pr == 0) continue;
      char chunk[65536];
      const ssize_t r = ::read(from_child_, chunk, sizeof chunk);
      if (r < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::ExternalProtocolError, std::string("read: ") + std::strerror(errno));
      }
      if (r == 0) throw Error(ErrorCode::ExternalProtocolError, "connection closed");
      buffer_.append(chunk, static_cast<std::size_t>(r));
    }
  }

  // Exit code of the child if it has already exited (waits briefly).
  int child_exit_code() {
    if (pid_ <= 0) return exit_code_;
    for (int i = 0; i < 100; ++i) {
      int status = 0;
      const pid_t r = ::waitpid(pid_, &status, WNOHANG);
      if (r == pid_) {
        pid_ = -1;
        exit_code_ = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        return exit_code_;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    return -1;
  }

  void shutdown() {
    if (to_child_ >= 0) ::close(to_child_);
    to_child_ = -1;
    if (pid_ > 0) {
      bool reaped = false;
      for (int i = 0; i < 200 && !reaped; ++i) {
        int status = 0;
        if (::waitpid(pid_, &status, WNOHANG) == pid_) reaped = true;
        else std::this_thread::sleep_for(std::chrono::milliseconds(5));
      }
      if (!reaped) {
        ::kill(pid_, SIGKILL);
        int status = 0;
        ::waitpid(pid_, &status, 0);
      }
      pid_ = -1;
    }
    if (from_child_ >= 0) ::close(from_child_);
    from_child_ = -1;
  }

  int n_classes_;
  std::size_t n_bins_;
  std::chrono::milliseconds timeout_;
  std::string command_;
  pid_t pid_ = -1;
  int exit_code_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::uint64_t next_id_ = 1;
};

inline ClassifierHandle open_external(const std::string& command, const WavenumberAxis& axis,
                                      int n_classes,
                                      std::chrono::milliseconds timeout = kDefaultRequestTimeout,
                                      QueryCounter counter = make_query_counter()) {
  return ClassifierHandle(std::make_shared<ExternalClassifier>(command, axis, n_classes, timeout),
                          axis, ClassifierHandle::Kind::External, std::move(counter));
}

}  // namespace specrex
