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

#include "cosplit/session.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <string>
#include <thread>

#include "cosplit/error.hpp"

namespace cosplit {

std::vector<std::uint32_t> ArgmaxRows(const Tensor& t) {
  std::vector<std::uint32_t> out(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto row = t.row(r);
    out[r] = static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

SplitModel::SplitModel(const Network& full, std::size_t split_index)
    : front_(full.slice(0, split_index)),
      back_(full.slice(split_index, full.depth())),
      original_front_(front_),
      split_index_(split_index) {
  if (split_index == 0 || split_index >= full.depth()) {
    throw Error(Errc::kInvalidArgument, "split index must leave layers on both sides");
  }
  front_.set_trainable(true);
  back_.set_trainable(false);
  original_front_.set_trainable(false);
  const auto ir_out = front_.output_dim();
  const auto ir_in = back_.input_dim();
  const auto in = front_.input_dim();
  const auto classes = back_.output_dim();
  if (!ir_out || !ir_in || !in || !classes) {
    throw Error(Errc::kInvalidArgument, "both partitions need an affine layer");
  }
  if (*ir_out != *ir_in) {
    throw Error(Errc::kDimensionMismatch, "front output width != back input width");
  }
  ir_width_ = *ir_out;
  input_width_ = *in;
  n_classes_ = *classes;
}

Network SplitModel::full() const { return Network::Concat(front_, back_); }

// ---------------------------------------------------------------------------
// Edge

EdgeServer::EdgeServer(Network back_end, std::uint32_t batch_max)
    : back_(std::move(back_end)), batch_max_(batch_max) {
  back_.set_trainable(false);
  const auto in = back_.input_dim();
  const auto out = back_.output_dim();
  if (!in || !out) throw Error(Errc::kInvalidArgument, "back-end needs an affine layer");
  ir_width_ = *in;
  n_classes_ = *out;
}

namespace {

enum class EdgePhase { kAwaitHello, kReady, kLogitsSent };

void SendError(Transport& t, const std::string& text) {
  try {
    WriteFrame(t, MsgType::kError,
               std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                             text.size()));
  } catch (const Error&) {
    // peer already gone
  }
}

}  // namespace

SessionOutcome EdgeServer::serve_session(Transport& t) const {
  stats_.sessions.fetch_add(1, std::memory_order_relaxed);
  EdgePhase phase = EdgePhase::kAwaitHello;
  std::optional<ForwardResult> cached;
  const auto fail = [&](const std::string& text) {
    stats_.errors.fetch_add(1, std::memory_order_relaxed);
    spdlog::debug("edge session error: {}", text);
    SendError(t, text);
    t.close();
    return SessionOutcome::kErrorReplied;
  };
  const auto check_ir = [&](const Tensor& ir) {
    if (ir.rank() != 2 || ir.cols() != ir_width_) {
      throw Error(Errc::kDimensionMismatch, "IR " + ir.shape_string() + " but back-end expects width " +
                                                std::to_string(ir_width_));
    }
    if (ir.rows() > batch_max_) throw Error(Errc::kTooLarge, "batch exceeds limit");
    if (!ir.all_finite()) throw Error(Errc::kNonFinite, "IR contains non-finite values");
  };

  for (;;) {
    std::optional<Frame> frame;
    try {
      frame = ReadFrame(t);
    } catch (const Error& e) {
      if (e.code() == Errc::kTooLarge || e.code() == Errc::kTransportClosed) {
        t.close();
        return SessionOutcome::kDropped;
      }
      return fail(e.what());
    }
    if (!frame) {
      t.close();
      return SessionOutcome::kClosed;
    }
    try {
      switch (frame->type) {
        case MsgType::kHello: {
          if (phase != EdgePhase::kAwaitHello) {
            throw Error(Errc::kProtocolViolation, "duplicate HELLO");
          }
          const Hello h = DecodeHello(frame->payload);
          if (h.ir_width != ir_width_) {
            throw Error(Errc::kDimensionMismatch, "HELLO ir_width " + std::to_string(h.ir_width) +
                                                      " != " + std::to_string(ir_width_));
          }
          if (h.n_classes != n_classes_) {
            throw Error(Errc::kDimensionMismatch, "HELLO n_classes mismatch");
          }
          const Hello reply{static_cast<std::uint32_t>(ir_width_),
                            static_cast<std::uint32_t>(n_classes_),
                            std::min(batch_max_, h.batch_max == 0 ? batch_max_ : h.batch_max)};
          WriteFrame(t, MsgType::kHello, EncodeHello(reply));
          phase = EdgePhase::kReady;
          break;
        }
        case MsgType::kForward: {
          if (phase == EdgePhase::kAwaitHello) {
            throw Error(Errc::kProtocolViolation, "FORWARD before HELLO");
          }
          const Tensor ir = DecodeTensorPayload(frame->payload);
          check_ir(ir);
          cached = Forward(back_, ir);
          WriteFrame(t, MsgType::kLogits, EncodeTensorPayload(cached->output));
          stats_.forwards.fetch_add(1, std::memory_order_relaxed);
          phase = EdgePhase::kLogitsSent;
          break;
        }
        case MsgType::kLoss: {
          if (phase != EdgePhase::kLogitsSent || !cached) {
            throw Error(Errc::kProtocolViolation, "LOSS without a preceding FORWARD");
          }
          const LossReport loss = DecodeLoss(frame->payload);
          if (loss.logits_grad.rank() != 2 ||
              loss.logits_grad.shape() != cached->output.shape()) {
            throw Error(Errc::kDimensionMismatch, "loss gradient shape does not match logits");
          }
          if (!loss.logits_grad.all_finite()) {
            throw Error(Errc::kNonFinite, "loss gradient contains non-finite values");
          }
          const BackwardResult back = Backward(back_, cached->tape, loss.logits_grad, false);
          WriteFrame(t, MsgType::kGrad, EncodeTensorPayload(back.input_grad));
          cached.reset();
          phase = EdgePhase::kReady;
          break;
        }
        case MsgType::kInfer: {
          if (phase == EdgePhase::kAwaitHello) {
            throw Error(Errc::kProtocolViolation, "INFER before HELLO");
          }
          const Tensor ir = DecodeTensorPayload(frame->payload);
          check_ir(ir);
          const auto classes = ArgmaxRows(Predict(back_, ir));
          WriteFrame(t, MsgType::kPrediction, EncodePrediction(classes));
          cached.reset();
          phase = EdgePhase::kReady;
          break;
        }
        case MsgType::kError:
          t.close();
          return SessionOutcome::kClosed;
        default:
          throw Error(Errc::kProtocolViolation,
                      std::string("unexpected ") + MsgTypeName(frame->type) + " from device");
      }
    } catch (const Error& e) {
      if (e.code() == Errc::kTransportClosed) {
        t.close();
        return SessionOutcome::kDropped;
      }
      return fail(e.what());
    } catch (const std::exception& e) {
      return fail(std::string("InternalError: ") + e.what());
    }
  }
}

void EdgeServer::serve(TcpListener& listener, const std::atomic<bool>& stop,
                       std::size_t max_sessions) const {
  struct Worker {
    std::shared_ptr<std::atomic<bool>> done;
    std::jthread thread;
  };
  std::vector<Worker> workers;
  std::size_t accepted = 0;
  while (!stop.load() && (max_sessions == 0 || accepted < max_sessions)) {
    std::unique_ptr<Transport> conn = listener.accept(100);
    std::erase_if(workers, [](const Worker& w) { return w.done->load(); });
    if (!conn) continue;
    ++accepted;
    auto done = std::make_shared<std::atomic<bool>>(false);
    workers.push_back({done, std::jthread([this, done, c = std::move(conn)]() mutable {
                         const SessionOutcome outcome = serve_session(*c);
                         spdlog::debug("edge session finished ({})", static_cast<int>(outcome));
                         done->store(true);
                       })});
  }
}

// ---------------------------------------------------------------------------
// Device

DeviceSession::DeviceSession(std::unique_ptr<Transport> transport, std::size_t ir_width,
                             std::size_t n_classes)
    : transport_(std::move(transport)), ir_width_(ir_width), n_classes_(n_classes) {}

DeviceSession::~DeviceSession() {
  if (transport_) transport_->close();
}

Frame DeviceSession::expect(MsgType type) {
  std::optional<Frame> f = ReadFrame(*transport_);
  if (!f) throw Error(Errc::kTransportClosed, "edge closed the session");
  if (f->type == MsgType::kError) {
    const std::string text(f->payload.begin(), f->payload.end());
    transport_->close();
    phase_ = DevicePhase::kIdle;
    if (text.rfind("DimensionMismatch", 0) == 0) throw Error(Errc::kDimensionMismatch, text);
    throw Error(Errc::kProtocolViolation, "edge error: " + text);
  }
  if (f->type != type) {
    throw Error(Errc::kProtocolViolation, std::string("expected ") + MsgTypeName(type) + ", got " +
                                              MsgTypeName(f->type));
  }
  return std::move(*f);
}

void DeviceSession::hello() {
  if (phase_ != DevicePhase::kIdle) throw Error(Errc::kProtocolViolation, "HELLO already sent");
  WriteFrame(*transport_, MsgType::kHello,
             EncodeHello({static_cast<std::uint32_t>(ir_width_),
                          static_cast<std::uint32_t>(n_classes_), kBatchMax}));
  const Hello reply = DecodeHello(expect(MsgType::kHello).payload);
  if (reply.ir_width != ir_width_ || reply.n_classes != n_classes_) {
    throw Error(Errc::kDimensionMismatch, "edge HELLO disagrees on dimensions");
  }
  phase_ = DevicePhase::kHello;
}

void DeviceSession::ensure_hello() {
  if (phase_ == DevicePhase::kIdle) hello();
  if (phase_ == DevicePhase::kForwardSent || phase_ == DevicePhase::kLossSent) {
    throw Error(Errc::kProtocolViolation, "a reply is still outstanding");
  }
}

Tensor DeviceSession::forward(const Tensor& ir) {
  ensure_hello();
  if (ir.cols() != ir_width_) {
    throw Error(Errc::kDimensionMismatch, "IR width " + std::to_string(ir.cols()) +
                                              " != " + std::to_string(ir_width_));
  }
  WriteFrame(*transport_, MsgType::kForward, EncodeTensorPayload(ir.as_matrix()));
  phase_ = DevicePhase::kForwardSent;
  Tensor logits = DecodeTensorPayload(expect(MsgType::kLogits).payload);
  if (logits.rows() != ir.rows() || logits.cols() != n_classes_) {
    throw Error(Errc::kProtocolViolation, "LOGITS shape does not match the request");
  }
  last_batch_ = ir.rows();
  phase_ = DevicePhase::kLogitsReceived;
  return logits;
}

Tensor DeviceSession::backward(double loss, const Tensor& logits_grad) {
  if (phase_ != DevicePhase::kLogitsReceived) {
    throw Error(Errc::kProtocolViolation, "LOSS requires logits from this round");
  }
  if (logits_grad.rows() != last_batch_ || logits_grad.cols() != n_classes_) {
    throw Error(Errc::kDimensionMismatch, "loss gradient shape does not match logits");
  }
  WriteFrame(*transport_, MsgType::kLoss, EncodeLoss({loss, logits_grad.as_matrix()}));
  phase_ = DevicePhase::kLossSent;
  Tensor grad = DecodeTensorPayload(expect(MsgType::kGrad).payload);
  if (grad.rows() != last_batch_ || grad.cols() != ir_width_) {
    throw Error(Errc::kProtocolViolation, "GRAD shape does not match the uploaded IR");
  }
  phase_ = DevicePhase::kGradReceived;
  return grad;
}

std::vector<std::uint32_t> DeviceSession::infer(const Tensor& ir) {
  ensure_hello();
  if (ir.cols() != ir_width_) throw Error(Errc::kDimensionMismatch, "IR width mismatch");
  WriteFrame(*transport_, MsgType::kInfer, EncodeTensorPayload(ir.as_matrix()));
  phase_ = DevicePhase::kForwardSent;
  auto classes = DecodePrediction(expect(MsgType::kPrediction).payload);
  if (classes.size() != ir.rows()) throw Error(Errc::kProtocolViolation, "PREDICTION size");
  for (std::uint32_t c : classes) {
    if (c >= n_classes_) throw Error(Errc::kProtocolViolation, "PREDICTION class out of range");
  }
  phase_ = DevicePhase::kHello;
  return classes;
}

void DeviceSession::close() {
  transport_->close();
  phase_ = DevicePhase::kIdle;
}

SplitDevice::SplitDevice(DeviceSession& session, Network& front, DpConfig cfg)
    : session_(session), front_(front), cfg_(cfg) {
  cfg_.validate(front_.depth());
}

const DeviceRound& SplitDevice::forward(const Tensor& x_l, Rng& rng) {
  round_.reset();
  DpForward dp = DpTransform(front_, x_l, cfg_, rng);
  Tensor logits = session_.forward(dp.output);
  round_ = DeviceRound{std::move(dp), std::move(logits)};
  return *round_;
}

BackwardResult SplitDevice::backward(double loss, const Tensor& logits_grad,
                                     const Tensor* extra_ir_grad) {
  if (!round_) throw Error(Errc::kProtocolViolation, "backward without a forward round");
  if (round_->dp.f1_tape.network_version != front_.version() ||
      round_->dp.f1_tape.network_uid != front_.uid()) {
    throw Error(Errc::kStaleTape, "front-end changed since the forward pass");
  }
  Tensor ir_grad = session_.backward(loss, logits_grad);
  if (extra_ir_grad) {
    if (extra_ir_grad->size() != ir_grad.size()) {
      throw Error(Errc::kDimensionMismatch, "extra IR gradient shape");
    }
    for (std::size_t i = 0; i < ir_grad.size(); ++i) ir_grad[i] += (*extra_ir_grad)[i];
  }
  BackwardResult res = DpBackward(front_, round_->dp, cfg_, ir_grad);
  round_.reset();
  return res;
}

std::vector<std::uint32_t> SplitDevice::infer(const Tensor& x_l, const Permutation& key,
                                              Rng& rng) {
  round_.reset();
  const DpForward dp = DpTransform(front_, x_l, cfg_, rng);
  auto classes = session_.infer(dp.output);
  for (auto& c : classes) c = key.decrypt(c);
  return classes;
}

LoopbackEdge::LoopbackEdge(Network back_end) : server_(std::move(back_end)) {
  auto [device_end, edge_end] = MakeLoopbackPair();
  edge_end_ = std::move(edge_end);
  session_ = std::make_unique<DeviceSession>(std::move(device_end), server_.ir_width(),
                                             server_.n_classes());
  thread_ = std::thread([this] { outcome_ = server_.serve_session(*edge_end_); });
}

SessionOutcome LoopbackEdge::finish() {
  if (!finished_) {
    session_->close();
    if (thread_.joinable()) thread_.join();
    finished_ = true;
  }
  return outcome_;
}

LoopbackEdge::~LoopbackEdge() { finish(); }

}  // namespace cosplit
