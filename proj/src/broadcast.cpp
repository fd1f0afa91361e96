#include "mtrack/broadcast.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <json.hpp>
#include <thread>

#include "mtrack/error.hpp"

namespace mtrack {
namespace {

double finite_or(double v, double fallback) { return std::isfinite(v) ? v : fallback; }

std::int64_t system_now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

}  // namespace

PositionPacket make_packet(const TrackerState& state, std::uint64_t seq, std::int64_t wall_ms) {
  PositionPacket p;
  p.seq = seq;
  p.wall_ms = wall_ms;
  p.position_ref_ms = state.position_ref_ms;
  p.tempo_ratio = state.tempo_ratio;
  p.confidence = state.confidence;
  p.phase = state.phase;
  return p;
}

std::string encode_packet(const PositionPacket& packet) {
  nlohmann::ordered_json j;
  j["seq"] = packet.seq;
  j["wall_ms"] = packet.wall_ms;
  j["position_ref_ms"] = finite_or(packet.position_ref_ms, 0.0);
  j["tempo_ratio"] = finite_or(packet.tempo_ratio, 1.0);
  j["confidence"] = std::clamp(finite_or(packet.confidence, 0.0), 0.0, 1.0);
  j["phase"] = to_string(packet.phase);
  return j.dump();
}

std::string encode_packet(const TrackerState& state, std::uint64_t seq, std::int64_t wall_ms) {
  return encode_packet(make_packet(state, seq, wall_ms));
}

PositionPacket decode_packet(const std::string& bytes) {
  if (bytes.size() > kMaxPacketBytes) throw Error(Errc::MalformedFile, "packet too large");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedFile, std::string("packet is not JSON: ") + e.what());
  }
  if (!j.is_object() || j.size() != 6) throw Error(Errc::MalformedFile, "packet must be an object with 6 keys");
  auto need = [&](const char* key) -> const nlohmann::json& {
    auto it = j.find(key);
    if (it == j.end()) throw Error(Errc::MalformedFile, std::string("packet lacks ") + key);
    return *it;
  };
  PositionPacket p;
  const auto& seq = need("seq");
  const auto& wall = need("wall_ms");
  if (!seq.is_number_unsigned()) throw Error(Errc::MalformedFile, "seq must be a non-negative integer");
  if (!wall.is_number_integer()) throw Error(Errc::MalformedFile, "wall_ms must be an integer");
  p.seq = seq.get<std::uint64_t>();
  p.wall_ms = wall.get<std::int64_t>();
  for (auto [key, field] : {std::pair{"position_ref_ms", &p.position_ref_ms}, std::pair{"tempo_ratio", &p.tempo_ratio},
                            std::pair{"confidence", &p.confidence}}) {
    const auto& v = need(key);
    if (!v.is_number()) throw Error(Errc::MalformedFile, std::string(key) + " must be a number");
    *field = v.get<double>();
  }
  if (p.confidence < 0.0 || p.confidence > 1.0) throw Error(Errc::MalformedFile, "confidence out of [0, 1]");
  if (p.tempo_ratio <= 0.0) throw Error(Errc::MalformedFile, "tempo_ratio must be positive");
  const auto& phase = need("phase");
  if (phase == "waiting") {
    p.phase = TrackerPhase::Waiting;
  } else if (phase == "tracking") {
    p.phase = TrackerPhase::Tracking;
  } else {
    throw Error(Errc::MalformedFile, "unknown phase");
  }
  return p;
}

UdpTarget parse_udp_target(const std::string& spec) {
  const auto colon = spec.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == spec.size()) {
    throw Error(Errc::InvalidParam, "UDP target must be host:port, got '" + spec + "'");
  }
  UdpTarget t;
  t.host = spec.substr(0, colon);
  const std::string port = spec.substr(colon + 1);
  if (port.find_first_not_of("0123456789") != std::string::npos || port.size() > 5) {
    throw Error(Errc::InvalidParam, "bad UDP port '" + port + "'");
  }
  const int value = std::stoi(port);
  if (value < 1 || value > 65535) throw Error(Errc::InvalidParam, "UDP port out of range");
  t.port = static_cast<std::uint16_t>(value);
  return t;
}

UdpSender::UdpSender(const UdpTarget& target) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_DGRAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(target.port);
  if (int rc = getaddrinfo(target.host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw Error(Errc::SocketError, "cannot resolve " + target.host + ": " + gai_strerror(rc));
  }
  addr_.assign(reinterpret_cast<const std::uint8_t*>(res->ai_addr),
               reinterpret_cast<const std::uint8_t*>(res->ai_addr) + res->ai_addrlen);
  freeaddrinfo(res);
  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw Error(Errc::SocketError, std::string("socket: ") + std::strerror(errno));
}

UdpSender::~UdpSender() {
  if (fd_ >= 0) ::close(fd_);
}

bool UdpSender::send(const std::string& payload) {
  if (payload.size() > kMaxPacketBytes) return false;
  const auto n = ::sendto(fd_, payload.data(), payload.size(), MSG_DONTWAIT,
                          reinterpret_cast<const sockaddr*>(addr_.data()), static_cast<socklen_t>(addr_.size()));
  return n == static_cast<ssize_t>(payload.size());
}

UdpReceiver::UdpReceiver(std::uint16_t port, const std::string& host) {
  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw Error(Errc::SocketError, std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw Error(Errc::SocketError, "bad bind address " + host);
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string msg = std::strerror(errno);
    ::close(fd_);
    throw Error(Errc::SocketError, "bind: " + msg);
  }
  socklen_t len = sizeof addr;
  getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

UdpReceiver::~UdpReceiver() {
  if (fd_ >= 0) ::close(fd_);
}

std::optional<std::string> UdpReceiver::receive(std::chrono::milliseconds timeout) {
  pollfd pfd{fd_, POLLIN, 0};
  if (::poll(&pfd, 1, static_cast<int>(timeout.count())) <= 0) return std::nullopt;
  char buf[2048];
  const auto n = ::recv(fd_, buf, sizeof buf, 0);
  if (n < 0) return std::nullopt;
  return std::string(buf, static_cast<std::size_t>(n));
}

void StateMailbox::publish(TrackerState state) {
  auto next = std::make_shared<const TrackerState>(std::move(state));
  std::lock_guard lock(mutex_);
  state_ = std::move(next);
}

std::shared_ptr<const TrackerState> StateMailbox::latest() const {
  std::lock_guard lock(mutex_);
  return state_;
}

BroadcastStats run_broadcaster(const StateMailbox& source, const UdpTarget& target, const BroadcastOptions& options,
                               std::stop_token stop) {
  if (!(options.period_ms > 0.0)) throw Error(Errc::InvalidParam, "broadcast period must be positive");
  UdpSender sender(target);
  const auto wall = options.wall_clock_ms ? options.wall_clock_ms : std::function<std::int64_t()>(system_now_ms);
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const auto period = std::chrono::duration<double, std::milli>(options.period_ms);

  BroadcastStats stats;
  for (std::uint64_t seq = 0;; ++seq) {
    const auto due = start + std::chrono::duration_cast<Clock::duration>(period * static_cast<double>(seq));
    if (options.duration_ms &&
        std::chrono::duration<double, std::milli>(due - start).count() >= *options.duration_ms) {
      break;
    }
    std::this_thread::sleep_until(due);
    if (stop.stop_requested()) break;
    const std::string payload = encode_packet(*source.latest(), seq, wall());
    const double at = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    if (sender.send(payload)) {
      ++stats.sent;
    } else {
      ++stats.send_errors;
    }
    stats.send_times_ms.push_back(at);
    if (options.on_packet) options.on_packet(payload);
  }
  return stats;
}

}  // namespace mtrack
