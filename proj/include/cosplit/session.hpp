// Copyright 2026 The cosplit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef COSPLIT_SESSION_HPP_
#define COSPLIT_SESSION_HPP_

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <thread>
#include <vector>

#include "cosplit/dp.hpp"
#include "cosplit/keygen.hpp"
#include "cosplit/network.hpp"
#include "cosplit/wire.hpp"

namespace cosplit {

// A pre-trained classifier partitioned at split_index: a trainable front-end,
// a frozen back-end, and an untouched copy of the original front-end.
class SplitModel {
 public:
  SplitModel(const Network& full, std::size_t split_index);

  Network& front() { return front_; }
  const Network& front() const { return front_; }
  const Network& back() const { return back_; }
  const Network& original_front() const { return original_front_; }

  std::size_t split_index() const { return split_index_; }
  std::size_t ir_width() const { return ir_width_; }
  std::size_t input_width() const { return input_width_; }
  std::size_t n_classes() const { return n_classes_; }

  // Current front followed by the back-end, as a single network.
  Network full() const;

 private:
  Network front_;
  Network back_;
  Network original_front_;
  std::size_t split_index_;
  std::size_t ir_width_ = 0;
  std::size_t input_width_ = 0;
  std::size_t n_classes_ = 0;
};

enum class SessionOutcome {
  kClosed,        // peer closed cleanly
  kErrorReplied,  // ERROR sent, then closed
  kDropped,       // closed without reply (oversized frame or dead transport)
};

struct EdgeStats {
  std::atomic<std::uint64_t> sessions{0};
  std::atomic<std::uint64_t> forwards{0};
  std::atomic<std::uint64_t> errors{0};
};

// Serves the frozen back-end. Sessions are independent and may run on
// separate threads; the back-end is never modified.
class EdgeServer {
 public:
  explicit EdgeServer(Network back_end, std::uint32_t batch_max = kBatchMax);

  const Network& back_end() const { return back_; }
  std::size_t ir_width() const { return ir_width_; }
  std::size_t n_classes() const { return n_classes_; }

  // Runs one session until the peer closes or an error ends it. Never throws.
  SessionOutcome serve_session(Transport& t) const;

  // Accepts and serves connections concurrently until stop becomes true or
  // max_sessions connections (0 = unlimited) have been accepted, then waits
  // for the running sessions to finish.
  void serve(TcpListener& listener, const std::atomic<bool>& stop,
             std::size_t max_sessions = 0) const;

  const EdgeStats& stats() const { return stats_; }

 private:
  Network back_;
  std::size_t ir_width_;
  std::size_t n_classes_;
  std::uint32_t batch_max_;
  mutable EdgeStats stats_;
};

enum class DevicePhase { kIdle, kHello, kForwardSent, kLogitsReceived, kLossSent, kGradReceived };

// Device end of the wire protocol: enforces message order and maps ERROR
// replies back to typed errors.
class DeviceSession {
 public:
  DeviceSession(std::unique_ptr<Transport> transport, std::size_t ir_width,
                std::size_t n_classes);
  ~DeviceSession();
  DeviceSession(DeviceSession&&) noexcept = default;

  void hello();
  Tensor forward(const Tensor& ir);
  Tensor backward(double loss, const Tensor& logits_grad);
  std::vector<std::uint32_t> infer(const Tensor& ir);
  void close();

  DevicePhase phase() const { return phase_; }
  Transport& transport() { return *transport_; }

 private:
  Frame expect(MsgType type);
  void ensure_hello();

  std::unique_ptr<Transport> transport_;
  std::size_t ir_width_;
  std::size_t n_classes_;
  DevicePhase phase_ = DevicePhase::kIdle;
  std::size_t last_batch_ = 0;
};

struct DeviceRound {
  DpForward dp;   // local DP transform state (backward needs it)
  Tensor logits;  // returned by the edge
};

// Device-side split operations over a front-end owned by the caller.
class SplitDevice {
 public:
  SplitDevice(DeviceSession& session, Network& front, DpConfig cfg);

  // DP-transform x_l, upload the IR, receive h*(IR).
  const DeviceRound& forward(const Tensor& x_l, Rng& rng);
  // Upload the loss gradient, receive dL/dIR, chain it through the front.
  // extra_ir_grad (optional) is added to the edge gradient at the IR before
  // chaining, for loss terms computed on the device.
  BackwardResult backward(double loss, const Tensor& logits_grad,
                          const Tensor* extra_ir_grad = nullptr);
  // Decrypted class per row: key^{-1}(argmax h*(IR)).
  std::vector<std::uint32_t> infer(const Tensor& x_l, const Permutation& key, Rng& rng);

  const DpConfig& config() const { return cfg_; }
  const std::optional<DeviceRound>& last_round() const { return round_; }
  Network& front() { return front_; }

 private:
  DeviceSession& session_;
  Network& front_;
  DpConfig cfg_;
  std::optional<DeviceRound> round_;
};

std::vector<std::uint32_t> ArgmaxRows(const Tensor& t);

// An edge server running on a background thread behind an in-process
// loopback transport. All traffic still goes through the wire format.
class LoopbackEdge {
 public:
  explicit LoopbackEdge(Network back_end);
  ~LoopbackEdge();
  LoopbackEdge(const LoopbackEdge&) = delete;
  LoopbackEdge& operator=(const LoopbackEdge&) = delete;

  DeviceSession& session() { return *session_; }
  const EdgeServer& server() const { return server_; }
  // Closes the device side and waits for the edge thread.
  SessionOutcome finish();

 private:
  EdgeServer server_;
  std::unique_ptr<Transport> edge_end_;
  std::unique_ptr<DeviceSession> session_;
  std::thread thread_;
  SessionOutcome outcome_ = SessionOutcome::kClosed;
  bool finished_ = false;
};

}  // namespace cosplit

#endif  // COSPLIT_SESSION_HPP_
