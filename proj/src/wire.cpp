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

#include "cosplit/wire.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>

#include "cosplit/error.hpp"
#include "cosplit/io.hpp"

namespace cosplit {

const char* MsgTypeName(MsgType t) {
  switch (t) {
    case MsgType::kHello: return "HELLO";
    case MsgType::kForward: return "FORWARD";
    case MsgType::kLogits: return "LOGITS";
    case MsgType::kLoss: return "LOSS";
    case MsgType::kGrad: return "GRAD";
    case MsgType::kInfer: return "INFER";
    case MsgType::kPrediction: return "PREDICTION";
    case MsgType::kError: return "ERROR";
  }
  return "UNKNOWN";
}

bool IsKnownMsgType(std::uint8_t b) { return (b >= 0x01 && b <= 0x07) || b == 0x7f; }

std::vector<std::uint8_t> EncodeFrame(MsgType type, std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxPayload) throw Error(Errc::kTooLarge, "payload exceeds 64 MiB");
  ByteWriter w;
  w.text("RLTE");
  w.u8(kWireVersion);
  w.u8(static_cast<std::uint8_t>(type));
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.bytes(payload);
  return w.take();
}

std::vector<std::uint8_t> EncodeTensorPayload(const Tensor& t) {
  ByteWriter w;
  WriteTensor(w, t);
  return w.take();
}

Tensor DecodeTensorPayload(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  Tensor t = ReadTensor(r);
  if (!r.done()) throw Error(Errc::kParseError, "trailing bytes after tensor");
  return t;
}

std::vector<std::uint8_t> EncodeHello(const Hello& h) {
  ByteWriter w;
  w.u32(h.ir_width);
  w.u32(h.n_classes);
  w.u32(h.batch_max);
  return w.take();
}

Hello DecodeHello(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  Hello h{r.u32(), r.u32(), r.u32()};
  if (!r.done()) throw Error(Errc::kParseError, "trailing bytes after HELLO");
  return h;
}

std::vector<std::uint8_t> EncodeLoss(const LossReport& l) {
  ByteWriter w;
  w.f64(l.loss);
  WriteTensor(w, l.logits_grad);
  return w.take();
}

LossReport DecodeLoss(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  LossReport l;
  l.loss = r.f64();
  l.logits_grad = ReadTensor(r);
  if (!r.done()) throw Error(Errc::kParseError, "trailing bytes after LOSS");
  return l;
}

std::vector<std::uint8_t> EncodePrediction(std::span<const std::uint32_t> classes) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(classes.size()));
  for (std::uint32_t c : classes) w.u32(c);
  return w.take();
}

std::vector<std::uint32_t> DecodePrediction(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  const std::uint32_t n = r.u32();
  if (n > r.remaining() / 4) throw Error(Errc::kTruncated, "PREDICTION body");
  std::vector<std::uint32_t> out(n);
  for (auto& c : out) c = r.u32();
  if (!r.done()) throw Error(Errc::kParseError, "trailing bytes after PREDICTION");
  return out;
}

void WriteFrame(Transport& t, MsgType type, std::span<const std::uint8_t> payload) {
  t.write_all(EncodeFrame(type, payload));
}

namespace {

// Returns false on EOF before the first byte; throws on EOF after it.
bool ReadExact(Transport& t, std::span<std::uint8_t> buf, bool eof_ok) {
  std::size_t got = 0;
  while (got < buf.size()) {
    const std::size_t n = t.read_some(buf.subspan(got));
    if (n == 0) {
      if (got == 0 && eof_ok) return false;
      throw Error(Errc::kTransportClosed, "stream ended mid-frame");
    }
    got += n;
  }
  return true;
}

struct Header {
  MsgType type;
  std::uint32_t length;
};

Header ParseHeader(std::span<const std::uint8_t> h) {
  if (std::memcmp(h.data(), "RLTE", 4) != 0) {
    throw Error(Errc::kProtocolViolation, "bad frame magic");
  }
  if (h[4] != kWireVersion) throw Error(Errc::kProtocolViolation, "unsupported wire version");
  if (!IsKnownMsgType(h[5])) throw Error(Errc::kProtocolViolation, "unknown message type");
  ByteReader r(h.subspan(6, 4));
  const std::uint32_t len = r.u32();
  if (len > kMaxPayload) throw Error(Errc::kTooLarge, "payload exceeds 64 MiB");
  return {static_cast<MsgType>(h[5]), len};
}

}  // namespace

std::optional<Frame> ReadFrame(Transport& t) {
  std::uint8_t header[kFrameHeaderSize];
  if (!ReadExact(t, header, /*eof_ok=*/true)) return std::nullopt;
  const Header h = ParseHeader(header);
  Frame f{h.type, std::vector<std::uint8_t>(h.length)};
  ReadExact(t, f.payload, /*eof_ok=*/false);
  return f;
}

std::vector<Frame> SplitFrames(std::span<const std::uint8_t> bytes) {
  std::vector<Frame> out;
  std::size_t pos = 0;
  while (bytes.size() - pos >= kFrameHeaderSize) {
    const Header h = ParseHeader(bytes.subspan(pos, kFrameHeaderSize));
    if (bytes.size() - pos - kFrameHeaderSize < h.length) break;
    const auto body = bytes.subspan(pos + kFrameHeaderSize, h.length);
    out.push_back(Frame{h.type, {body.begin(), body.end()}});
    pos += kFrameHeaderSize + h.length;
  }
  return out;
}

namespace {

struct Pipe {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::uint8_t> data;
  bool writer_closed = false;
  bool reader_closed = false;
};

class LoopbackEnd : public Transport {
 public:
  LoopbackEnd(std::shared_ptr<Pipe> in, std::shared_ptr<Pipe> out)
      : in_(std::move(in)), out_(std::move(out)) {}
  ~LoopbackEnd() override { close(); }

  void write_all(std::span<const std::uint8_t> bytes) override {
    std::lock_guard lock(out_->mu);
    if (out_->writer_closed || out_->reader_closed) {
      throw Error(Errc::kTransportClosed, "loopback peer closed");
    }
    out_->data.insert(out_->data.end(), bytes.begin(), bytes.end());
    out_->cv.notify_all();
  }

  std::size_t read_some(std::span<std::uint8_t> buf) override {
    std::unique_lock lock(in_->mu);
    in_->cv.wait(lock, [&] {
      return !in_->data.empty() || in_->writer_closed || in_->reader_closed;
    });
    if (in_->data.empty()) return 0;
    const std::size_t n = std::min(buf.size(), in_->data.size());
    std::copy_n(in_->data.begin(), n, buf.begin());
    in_->data.erase(in_->data.begin(), in_->data.begin() + static_cast<std::ptrdiff_t>(n));
    return n;
  }

  void close() override {
    {
      std::lock_guard lock(out_->mu);
      out_->writer_closed = true;
      out_->cv.notify_all();
    }
    std::lock_guard lock(in_->mu);
    in_->reader_closed = true;
    in_->data.clear();
    in_->cv.notify_all();
  }

 private:
  std::shared_ptr<Pipe> in_;
  std::shared_ptr<Pipe> out_;
};

class TcpStream : public Transport {
 public:
  explicit TcpStream(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~TcpStream() override {
    if (fd_ >= 0) ::close(fd_);
  }

  void write_all(std::span<const std::uint8_t> bytes) override {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
      const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(Errc::kTransportClosed, std::string("send: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  std::size_t read_some(std::span<std::uint8_t> buf) override {
    for (;;) {
      const ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
      if (n >= 0) return static_cast<std::size_t>(n);
      if (errno == EINTR) continue;
      if (errno == ECONNRESET) return 0;
      throw Error(Errc::kTransportClosed, std::string("recv: ") + std::strerror(errno));
    }
  }

  void close() override {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_;
};

}  // namespace

std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> MakeLoopbackPair() {
  auto a_to_b = std::make_shared<Pipe>();
  auto b_to_a = std::make_shared<Pipe>();
  return {std::make_unique<LoopbackEnd>(b_to_a, a_to_b),
          std::make_unique<LoopbackEnd>(a_to_b, b_to_a)};
}

void TappedTransport::write_all(std::span<const std::uint8_t> bytes) {
  inner_->write_all(bytes);
  std::lock_guard lock(mu_);
  sent_.insert(sent_.end(), bytes.begin(), bytes.end());
}

std::size_t TappedTransport::read_some(std::span<std::uint8_t> buf) {
  const std::size_t n = inner_->read_some(buf);
  std::lock_guard lock(mu_);
  received_.insert(received_.end(), buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(n));
  return n;
}

std::vector<std::uint8_t> TappedTransport::sent() const {
  std::lock_guard lock(mu_);
  return sent_;
}

std::vector<std::uint8_t> TappedTransport::received() const {
  std::lock_guard lock(mu_);
  return received_;
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (::getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &res) != 0) {
    throw Error(Errc::kIo, "cannot resolve " + host);
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (fd_ < 0 || ::bind(fd_, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd_, 64) != 0) {
    const std::string why = std::strerror(errno);
    ::freeaddrinfo(res);
    if (fd_ >= 0) ::close(fd_);
    throw Error(Errc::kIo, "cannot listen on " + host + ":" + service + ": " + why);
  }
  ::freeaddrinfo(res);
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

TcpListener::~TcpListener() { close(); }

void TcpListener::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

std::unique_ptr<Transport> TcpListener::accept(int timeout_ms) {
  pollfd p{fd_, POLLIN, 0};
  const int ready = ::poll(&p, 1, timeout_ms);
  if (ready <= 0) return nullptr;
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) return nullptr;
  return std::make_unique<TcpStream>(fd);
}

std::unique_ptr<Transport> TcpConnect(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (::getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0) {
    throw Error(Errc::kIo, "cannot resolve " + host);
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0 || ::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
    const std::string why = std::strerror(errno);
    ::freeaddrinfo(res);
    if (fd >= 0) ::close(fd);
    throw Error(Errc::kTransportClosed, "cannot connect to " + host + ":" + service + ": " + why);
  }
  ::freeaddrinfo(res);
  return std::make_unique<TcpStream>(fd);
}

std::pair<std::string, std::uint16_t> ParseAddress(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw Error(Errc::kInvalidArgument, "address must be host:port");
  try {
    const int port = std::stoi(addr.substr(colon + 1));
    if (port < 0 || port > 65535) throw std::out_of_range("port");
    return {addr.substr(0, colon), static_cast<std::uint16_t>(port)};
  } catch (const std::exception&) {
    throw Error(Errc::kInvalidArgument, "bad port in address " + addr);
  }
}

}  // namespace cosplit
