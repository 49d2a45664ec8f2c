#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "lanemerge/predictors.hpp"

namespace lanemerge {

struct ExternalPredictor::Process {
  pid_t pid = -1;
  int to_child = -1;
  int from_child = -1;
  std::string buffer;

  ~Process() {
    if (to_child >= 0) ::close(to_child);
    if (from_child >= 0) ::close(from_child);
    if (pid > 0) {
      ::kill(pid, SIGTERM);
      ::waitpid(pid, nullptr, 0);
    }
  }

  void write_all(const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::write(to_child, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw PredictorError(std::string("write to predictor failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  // Next complete line, or nullopt once the deadline passes.
  std::optional<std::string> read_line(std::chrono::steady_clock::time_point deadline) {
    for (;;) {
      const auto nl = buffer.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer.substr(0, nl);
        buffer.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd pfd{from_child, POLLIN, 0};
      const int r = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (r < 0) {
        if (errno == EINTR) continue;
        throw PredictorError(std::string("poll failed: ") + std::strerror(errno));
      }
      if (r == 0) return std::nullopt;
      char chunk[65536];
      const ssize_t n = ::read(from_child, chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw PredictorError(std::string("read from predictor failed: ") + std::strerror(errno));
      }
      if (n == 0) throw PredictorError("predictor process closed its output");
      buffer.append(chunk, static_cast<std::size_t>(n));
    }
  }
};

ExternalPredictor::ExternalPredictor(ExternalPredictorOptions options)
    : options_(std::move(options)) {
  if (options_.command.empty()) throw std::invalid_argument("external predictor: empty command");
  if (options_.t_pred < 1) throw std::invalid_argument("external predictor: t_pred must be >= 1");
  ::signal(SIGPIPE, SIG_IGN);

  int in_pipe[2];
  int out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw PredictorError("pipe failed");
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw PredictorError("pipe failed");
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    throw PredictorError("fork failed");
  }
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", options_.command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  process_ = std::make_unique<Process>();
  process_->pid = pid;
  process_->to_child = in_pipe[1];
  process_->from_child = out_pipe[0];
}

ExternalPredictor::~ExternalPredictor() = default;

std::unique_ptr<Predictor> ExternalPredictor::clone() const {
  return std::make_unique<ExternalPredictor>(options_);
}

PredictionSheet ExternalPredictor::predict(const ObservationWindow& window,
                                           std::span<const Point2> ego_plan) {
  if (!window.full()) throw WarmupError("observation window is not full");
  if (static_cast<int>(ego_plan.size()) > options_.t_pred) {
    throw std::invalid_argument("ego plan longer than the prediction horizon");
  }
  const std::uint64_t id = ++next_request_;
  const auto deadline = std::chrono::steady_clock::now() + options_.deadline;
  process_->write_all(encode_request(window, ego_plan, options_.t_pred, id) + "\n");
  for (;;) {
    auto line = process_->read_line(deadline);
    if (!line) throw DeadlineExceeded("external predictor missed its deadline");
    std::uint64_t got = 0;
    PredictionSheet sheet;
    try {
      sheet = decode_response(*line, window, options_.t_pred, &got);
    } catch (const PredictorError&) {
      if (got != 0 && got != id) continue;
      throw;
    }
    // Late answers to earlier, already abandoned requests are dropped.
    if (got != 0 && got != id) continue;
    if (window.ego_index >= 0 && !ego_plan.empty()) {
      auto& ego = sheet.tracks[window.ego_index];
      std::copy(ego_plan.begin(), ego_plan.end(), ego.begin());
    }
    return sheet;
  }
}

}  // namespace lanemerge
