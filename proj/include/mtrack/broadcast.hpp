#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include "mtrack/tracker.hpp"

namespace mtrack {

inline constexpr std::size_t kMaxPacketBytes = 512;
inline constexpr int kPacketSchemaVersion = 1;

/// Wire message for the position link. Keys are serialized in declaration
/// order: seq, wall_ms, position_ref_ms, tempo_ratio, confidence, phase.
struct PositionPacket {
  std::uint64_t seq = 0;
  std::int64_t wall_ms = 0;
  double position_ref_ms = 0.0;
  double tempo_ratio = 1.0;
  double confidence = 0.0;
  TrackerPhase phase = TrackerPhase::Waiting;

  bool operator==(const PositionPacket&) const = default;
};

PositionPacket make_packet(const TrackerState& state, std::uint64_t seq, std::int64_t wall_ms);
/// Non-finite fields are replaced before serialization (tempo 1, others 0).
std::string encode_packet(const PositionPacket& packet);
std::string encode_packet(const TrackerState& state, std::uint64_t seq, std::int64_t wall_ms);
/// Throws MalformedFile on anything that is not a valid packet.
PositionPacket decode_packet(const std::string& bytes);

struct UdpTarget {
  std::string host;
  std::uint16_t port = 0;
};

/// Parses "host:port".
UdpTarget parse_udp_target(const std::string& spec);

/// Connected-less UDP sender. Throws SocketError on setup failure.
class UdpSender {
 public:
  explicit UdpSender(const UdpTarget& target);
  ~UdpSender();
  UdpSender(const UdpSender&) = delete;
  UdpSender& operator=(const UdpSender&) = delete;

  bool send(const std::string& payload);

 private:
  int fd_ = -1;
  std::vector<std::uint8_t> addr_;
};

/// Bound UDP socket for tests and the downstream receiver side.
class UdpReceiver {
 public:
  /// Port 0 picks a free port.
  explicit UdpReceiver(std::uint16_t port = 0, const std::string& host = "127.0.0.1");
  ~UdpReceiver();
  UdpReceiver(const UdpReceiver&) = delete;
  UdpReceiver& operator=(const UdpReceiver&) = delete;

  std::uint16_t port() const { return port_; }
  std::optional<std::string> receive(std::chrono::milliseconds timeout);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Latest immutable tracker snapshot, shared between the tracker (writer)
/// and the broadcaster (reader).
class StateMailbox {
 public:
  void publish(TrackerState state);
  std::shared_ptr<const TrackerState> latest() const;

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const TrackerState> state_ = std::make_shared<const TrackerState>();
};

struct BroadcastStats {
  std::uint64_t sent = 0;
  std::uint64_t send_errors = 0;
  std::vector<double> send_times_ms;  // relative to session start
};

struct BroadcastOptions {
  double period_ms = 20.0;
  // Session ends after this long, or when the stop token fires.
  std::optional<double> duration_ms;
  std::function<std::int64_t()> wall_clock_ms;  // defaults to system clock
  std::function<void(const std::string&)> on_packet;
};

/// Sends the latest state every period on an absolute schedule until stopped.
BroadcastStats run_broadcaster(const StateMailbox& source, const UdpTarget& target, const BroadcastOptions& options,
                               std::stop_token stop = {});

}  // namespace mtrack
