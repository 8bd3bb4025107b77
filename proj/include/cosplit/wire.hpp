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

#ifndef COSPLIT_WIRE_HPP_
#define COSPLIT_WIRE_HPP_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cosplit/tensor.hpp"

namespace cosplit {

enum class MsgType : std::uint8_t {
  kHello = 0x01,
  kForward = 0x02,
  kLogits = 0x03,
  kLoss = 0x04,
  kGrad = 0x05,
  kInfer = 0x06,
  kPrediction = 0x07,
  kError = 0x7f,
};

const char* MsgTypeName(MsgType t);
bool IsKnownMsgType(std::uint8_t b);

inline constexpr std::size_t kFrameHeaderSize = 10;  // magic 4, version 1, type 1, len 4
inline constexpr std::uint8_t kWireVersion = 0x01;
inline constexpr std::size_t kMaxPayload = 64u << 20;
inline constexpr std::uint32_t kBatchMax = 4096;
inline constexpr std::uint32_t kIrWidthMax = 65536;

struct Frame {
  MsgType type;
  std::vector<std::uint8_t> payload;
};

struct Hello {
  std::uint32_t ir_width = 0;
  std::uint32_t n_classes = 0;
  std::uint32_t batch_max = kBatchMax;
};

// LOSS body: the scalar loss (f64) followed by the per-sample gradient of the
// loss with respect to the returned logits.
struct LossReport {
  double loss = 0.0;
  Tensor logits_grad;
};

std::vector<std::uint8_t> EncodeFrame(MsgType type, std::span<const std::uint8_t> payload);

std::vector<std::uint8_t> EncodeTensorPayload(const Tensor& t);
Tensor DecodeTensorPayload(std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> EncodeHello(const Hello& h);
Hello DecodeHello(std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> EncodeLoss(const LossReport& l);
LossReport DecodeLoss(std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> EncodePrediction(std::span<const std::uint32_t> classes);
std::vector<std::uint32_t> DecodePrediction(std::span<const std::uint8_t> payload);

// Reliable ordered byte stream.
class Transport {
 public:
  virtual ~Transport() = default;
  // Throws Errc::kTransportClosed if the peer is gone.
  virtual void write_all(std::span<const std::uint8_t> bytes) = 0;
  // Blocks for at least one byte; returns 0 at end of stream.
  virtual std::size_t read_some(std::span<std::uint8_t> buf) = 0;
  // Ends our write direction and stops accepting reads.
  virtual void close() = 0;
};

void WriteFrame(Transport& t, MsgType type, std::span<const std::uint8_t> payload);
// nullopt on a clean end of stream between frames. Throws kProtocolViolation
// for bad magic/version/type, kTooLarge for payloads over 64 MiB and
// kTransportClosed when the stream ends mid-frame.
std::optional<Frame> ReadFrame(Transport& t);

// Parses every complete frame in a captured byte stream (trailing partial
// data is ignored).
std::vector<Frame> SplitFrames(std::span<const std::uint8_t> bytes);

// Connected in-process pair.
std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> MakeLoopbackPair();

// Wraps another transport and keeps a copy of every byte in each direction.
class TappedTransport : public Transport {
 public:
  explicit TappedTransport(std::unique_ptr<Transport> inner) : inner_(std::move(inner)) {}
  void write_all(std::span<const std::uint8_t> bytes) override;
  std::size_t read_some(std::span<std::uint8_t> buf) override;
  void close() override { inner_->close(); }

  std::vector<std::uint8_t> sent() const;
  std::vector<std::uint8_t> received() const;

 private:
  std::unique_ptr<Transport> inner_;
  mutable std::mutex mu_;
  std::vector<std::uint8_t> sent_;
  std::vector<std::uint8_t> received_;
};

class TcpListener {
 public:
  // Binds host:port (port 0 picks a free port).
  TcpListener(const std::string& host, std::uint16_t port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  // Waits up to timeout_ms; nullptr on timeout.
  std::unique_ptr<Transport> accept(int timeout_ms);
  void close();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

std::unique_ptr<Transport> TcpConnect(const std::string& host, std::uint16_t port);
// "host:port" -> pair; throws kInvalidArgument.
std::pair<std::string, std::uint16_t> ParseAddress(const std::string& addr);

}  // namespace cosplit

#endif  // COSPLIT_WIRE_HPP_
