#pragma once

#include <atomic>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"

#include "delsmooth/classifier.hpp"
#include "delsmooth/errors.hpp"

extern char** environ;

namespace delsmooth {

// A child process started through /bin/sh that exchanges one line of text
// per request on its standard streams.
class LineProcess {
 public:
  LineProcess(const std::string& command, std::chrono::milliseconds timeout) : timeout_(timeout) {
    static const bool sigpipe_ignored = [] {
      std::signal(SIGPIPE, SIG_IGN);
      return true;
    }();
    (void)sigpipe_ignored;

    int in_pipe[2], out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw TransportError(std::string("pipe: ") + std::strerror(errno));
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
      ::close(in_pipe[0]);
      ::close(in_pipe[1]);
      throw TransportError(std::string("pipe: ") + std::strerror(errno));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
    std::string sh = "/bin/sh", dash_c = "-c", cmd = command;
    char* argv[] = {sh.data(), dash_c.data(), cmd.data(), nullptr};
    const int rc = ::posix_spawn(&pid_, "/bin/sh", &actions, nullptr, argv, environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    if (rc != 0) {
      close_pipes();
      throw TransportError("cannot start external classifier: " + std::string(std::strerror(rc)));
    }
  }

  LineProcess(const LineProcess&) = delete;
  LineProcess& operator=(const LineProcess&) = delete;

  ~LineProcess() {
    close_pipes();
    if (pid_ <= 0) return;
    for (int i = 0; i < 100; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) == pid_) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
  }

  // Sends `line` (a newline is appended) and returns the next response line.
  std::string exchange(const std::string& line) {
    write_all(line + "\n");
    return read_line();
  }

 private:
  void close_pipes() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    to_child_ = from_child_ = -1;
  }

  void write_all(const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::write(to_child_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("write to external classifier failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line() {
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    while (true) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw TransportError("external classifier timed out");
      pollfd pfd{from_child_, POLLIN, 0};
      const int pr = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (pr < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("poll failed: ") + std::strerror(errno));
      }
      if (pr == 0) throw TransportError("external classifier timed out");
      char chunk[65536];
      const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("read from external classifier failed: ") + std::strerror(errno));
      }
      if (n == 0) throw TransportError("external classifier exited");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::chrono::milliseconds timeout_;
};

// Adapter for any classifier speaking the newline-delimited JSON protocol:
//   request:  {"id": <integer>, "texts": [<string>, ...]}
//   response: {"id": <same integer>, "labels": [<integer>, ...]}
// A pool of identical child processes serves concurrent batches; each child
// handles one request at a time.
class ExternalClassifier final : public BaseClassifier {
 public:
  ExternalClassifier(const std::string& command, std::size_t num_classes, std::size_t pool_size = 1,
                     std::chrono::milliseconds timeout = std::chrono::seconds(60))
      : classes_(num_classes) {
    if (num_classes < 2) throw UsageError("external classifier needs at least two classes");
    if (pool_size < 1) throw UsageError("pool size must be at least 1");
    for (std::size_t i = 0; i < pool_size; ++i) {
      workers_.push_back(std::make_unique<Worker>(command, timeout));
    }
  }

  std::size_t num_classes() const override { return classes_; }

  std::vector<Label> classify_batch(std::span<const std::string> texts) const override {
    if (texts.empty()) return {};
    const std::uint64_t id = next_id_++;
    Worker& w = *workers_[id % workers_.size()];
    nlohmann::json req = {{"id", id}, {"texts", nlohmann::json::array()}};
    for (const auto& t : texts) req["texts"].push_back(t);

    std::string line;
    {
      std::lock_guard lock(w.mutex);
      // UTF-8 errors in user text are replaced rather than aborting the batch.
      line = w.process.exchange(req.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace));
    }
    return parse_response(line, id, texts.size());
  }

  // Parses one response line; exposed for protocol tests.
  std::vector<Label> parse_response(const std::string& line, std::uint64_t id, std::size_t expected) const {
    nlohmann::json resp;
    try {
      resp = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw ProtocolError("malformed response from external classifier: " + line.substr(0, 200));
    }
    if (!resp.is_object() || !resp.contains("id") || !resp["id"].is_number_integer() || !resp.contains("labels") ||
        !resp["labels"].is_array()) {
      throw ProtocolError("response lacks integer 'id' or array 'labels'");
    }
    if (resp["id"].get<std::int64_t>() != static_cast<std::int64_t>(id)) {
      throw ProtocolError("response id " + resp["id"].dump() + " does not match request id " + std::to_string(id));
    }
    const auto& labels = resp["labels"];
    if (labels.size() != expected) {
      throw ProtocolError("response has " + std::to_string(labels.size()) + " labels for " + std::to_string(expected) +
                          " texts");
    }
    std::vector<Label> out;
    out.reserve(expected);
    for (const auto& l : labels) {
      if (!l.is_number_integer() || l.get<std::int64_t>() < 0 || l.get<std::uint64_t>() >= classes_) {
        throw ProtocolError("response label " + l.dump() + " is not a class index");
      }
      out.push_back(l.get<Label>());
    }
    return out;
  }

 private:
  struct Worker {
    Worker(const std::string& command, std::chrono::milliseconds timeout) : process(command, timeout) {}
    std::mutex mutex;
    LineProcess process;
  };

  std::size_t classes_;
  std::vector<std::unique_ptr<Worker>> workers_;
  mutable std::atomic<std::uint64_t> next_id_{0};
};

}  // namespace delsmooth
