#ifndef FEDCLUST_FEDRUNTIME_HPP
#define FEDCLUST_FEDRUNTIME_HPP

#include "fedclust/linalg.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace fedclust {

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SolverKind { FedCAvg, FedCGds, FedCPALM, PALM, KMeansPP };

std::string_view to_string(SolverKind kind);
/// Accepts "fedcavg", "fedcgds", "fedcpalm", "palm", "kmeanspp".
SolverKind parse_solver_kind(std::string_view tag);

// Messages ------------------------------------------------------------------

inline constexpr std::uint32_t kServerId = 0xFFFFFFFFu;

struct BroadcastW { Matrix w; };
struct UploadW { Matrix w; };
struct UploadDiff { Matrix u; Matrix v; };  // u: K x K, v: M x K

struct Message {
  std::uint32_t round = 0;
  std::uint32_t sender = kServerId;
  std::variant<BroadcastW, UploadW, UploadDiff> payload;

  std::uint8_t tag() const { return std::uint8_t(payload.index() + 1); }
  /// Number of real values carried by the payload.
  std::size_t real_value_count() const;
};

/// Wire layout, little-endian throughout:
///   u8 tag (1 BroadcastW, 2 UploadW, 3 UploadDiff), u32 round, u32 sender,
///   u32 rows, u32 cols, then f64 payload in column-major order.
/// For UploadDiff, rows x cols are the dimensions of V (M x K); the payload
/// is U (cols x cols) followed by V.
std::vector<std::uint8_t> encode(const Message& message);
Message decode(std::span<const std::uint8_t> bytes);

// Transport -----------------------------------------------------------------

/// Point-to-point message channel between the server and clients.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(std::uint32_t to, const Message& message) = 0;
  virtual std::optional<Message> recv(std::uint32_t at) = 0;
};

/// Queue-backed transport. Every message is serialized to its wire form on
/// send and decoded on receipt; the byte log records traffic in send order.
class InMemoryTransport final : public Transport {
 public:
  void send(std::uint32_t to, const Message& message) override;
  std::optional<Message> recv(std::uint32_t at) override;

  struct Envelope {
    std::uint32_t to;
    std::vector<std::uint8_t> bytes;
  };
  const std::vector<Envelope>& log() const { return log_; }
  void keep_log(bool on) { keep_log_ = on; }

 private:
  std::map<std::uint32_t, std::deque<std::vector<std::uint8_t>>> queues_;
  std::vector<Envelope> log_;
  bool keep_log_ = false;
};

// Accounting ----------------------------------------------------------------

/// Counts real values uploaded to the server. Downlink is not metered.
class CostMeter {
 public:
  void begin_round() { per_round_.push_back(0); }
  void record_uplink(const Message& message);

  std::uint64_t uplink_total() const { return total_; }
  const std::vector<std::uint64_t>& per_round() const { return per_round_; }

 private:
  std::uint64_t total_ = 0;
  std::vector<std::uint64_t> per_round_;
};

/// Uplink cost after s rounds: M K P s for model averaging (FedCAvg and
/// FedCPALM), (M K + K^2) m s for gradient sharing, 0 for centralized solvers.
std::uint64_t closed_form_cost(SolverKind kind, std::uint64_t m_features, std::uint64_t k,
                               std::uint64_t clients, std::uint64_t rounds);
std::uint64_t closed_form_cost(std::string_view tag, std::uint64_t m_features,
                               std::uint64_t k, std::uint64_t clients, std::uint64_t rounds);
/// One-time upload that seeds the gradient-sharing accumulators.
std::uint64_t bootstrap_cost(std::uint64_t m_features, std::uint64_t k, std::uint64_t clients);

// Rounds --------------------------------------------------------------------

struct MessageShape {
  std::uint8_t tag = 0;
  Index rows = 0;
  Index cols = 0;
};

/// Steps of one communication round. `broadcast` may be empty (bootstrap).
/// Client work runs in `phases` lockstep phases; `barrier(phase)` runs after
/// every active client finished that phase. Barriers are a side channel and
/// carry no metered traffic.
struct RoundPlan {
  std::optional<Message> broadcast;
  int phases = 1;
  std::function<void(int phase, std::size_t client, const Message* broadcast)> client_compute;
  std::function<void(int phase)> barrier;
  std::function<Message(std::size_t client)> client_upload;
  MessageShape expected_upload;
  std::function<void(const std::vector<Message>& uploads)> server_step;
};

struct RoundRecord {
  std::uint32_t round = 0;
  std::vector<std::size_t> active;
  std::uint64_t uplink_round = 0;
  std::uint64_t uplink_total = 0;
};

/// Owns the transport and the meter and sequences broadcast, client work,
/// uploads and server aggregation for one round at a time.
class Runtime {
 public:
  explicit Runtime(std::size_t clients);

  RoundRecord run_round(std::uint32_t round, const std::vector<std::size_t>& active,
                        const RoundPlan& plan);

  std::size_t clients() const { return clients_; }
  const CostMeter& meter() const { return meter_; }
  InMemoryTransport& transport() { return transport_; }
  const InMemoryTransport& transport() const { return transport_; }

 private:
  std::size_t clients_;
  InMemoryTransport transport_;
  CostMeter meter_;
};

}  // namespace fedclust

#endif  // FEDCLUST_FEDRUNTIME_HPP
