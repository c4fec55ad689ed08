#include "fedclust/fedruntime.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <set>

namespace fedclust {

std::string_view to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::FedCAvg: return "fedcavg";
    case SolverKind::FedCGds: return "fedcgds";
    case SolverKind::FedCPALM: return "fedcpalm";
    case SolverKind::PALM: return "palm";
    case SolverKind::KMeansPP: return "kmeanspp";
  }
  return "unknown";
}

SolverKind parse_solver_kind(std::string_view tag) {
  for (auto kind : {SolverKind::FedCAvg, SolverKind::FedCGds, SolverKind::FedCPALM,
                    SolverKind::PALM, SolverKind::KMeansPP}) {
    if (tag == to_string(kind)) return kind;
  }
  throw std::invalid_argument("unknown algorithm tag '" + std::string(tag) + "'");
}

std::size_t Message::real_value_count() const {
  return std::visit(
      [](const auto& p) -> std::size_t {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, UploadDiff>) {
          return std::size_t(p.u.size() + p.v.size());
        } else {
          return std::size_t(p.w.size());
        }
      },
      payload);
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "wire encoding assumes a little-endian host");

constexpr std::size_t kHeaderBytes = 1 + 4 * 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(in[at + i]) << (8 * i);
  return v;
}

void put_matrix(std::vector<std::uint8_t>& out, const Matrix& a) {
  const auto bytes = std::size_t(a.size()) * sizeof(double);
  const auto at = out.size();
  out.resize(at + bytes);
  if (bytes) std::memcpy(out.data() + at, a.data(), bytes);
}

Matrix get_matrix(std::span<const std::uint8_t> in, std::size_t at, Index rows, Index cols) {
  Matrix a(rows, cols);
  const auto bytes = std::size_t(a.size()) * sizeof(double);
  if (bytes) std::memcpy(a.data(), in.data() + at, bytes);
  return a;
}

}  // namespace

std::vector<std::uint8_t> encode(const Message& message) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + message.real_value_count() * sizeof(double));
  out.push_back(message.tag());
  put_u32(out, message.round);
  put_u32(out, message.sender);
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, UploadDiff>) {
          if (p.u.rows() != p.v.cols() || p.u.cols() != p.v.cols()) {
            throw ProtocolError("UploadDiff: U must be K x K with K = cols(V)");
          }
          put_u32(out, std::uint32_t(p.v.rows()));
          put_u32(out, std::uint32_t(p.v.cols()));
          put_matrix(out, p.u);
          put_matrix(out, p.v);
        } else {
          put_u32(out, std::uint32_t(p.w.rows()));
          put_u32(out, std::uint32_t(p.w.cols()));
          put_matrix(out, p.w);
        }
      },
      message.payload);
  return out;
}

Message decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) throw ProtocolError("message shorter than header");
  Message m;
  const std::uint8_t tag = bytes[0];
  m.round = get_u32(bytes, 1);
  m.sender = get_u32(bytes, 5);
  const Index rows = get_u32(bytes, 9);
  const Index cols = get_u32(bytes, 13);
  const std::size_t values =
      tag == 3 ? std::size_t(cols * cols + rows * cols) : std::size_t(rows * cols);
  if (bytes.size() != kHeaderBytes + values * sizeof(double)) {
    throw ProtocolError("message payload length does not match header");
  }
  switch (tag) {
    case 1: m.payload = BroadcastW{get_matrix(bytes, kHeaderBytes, rows, cols)}; break;
    case 2: m.payload = UploadW{get_matrix(bytes, kHeaderBytes, rows, cols)}; break;
    case 3: {
      Matrix u = get_matrix(bytes, kHeaderBytes, cols, cols);
      Matrix v = get_matrix(bytes, kHeaderBytes + std::size_t(cols * cols) * sizeof(double),
                            rows, cols);
      m.payload = UploadDiff{std::move(u), std::move(v)};
      break;
    }
    default: throw ProtocolError("unknown message tag " + std::to_string(tag));
  }
  return m;
}

void InMemoryTransport::send(std::uint32_t to, const Message& message) {
  auto bytes = encode(message);
  if (keep_log_) log_.push_back({to, bytes});
  queues_[to].push_back(std::move(bytes));
}

std::optional<Message> InMemoryTransport::recv(std::uint32_t at) {
  auto it = queues_.find(at);
  if (it == queues_.end() || it->second.empty()) return std::nullopt;
  auto bytes = std::move(it->second.front());
  it->second.pop_front();
  return decode(bytes);
}

void CostMeter::record_uplink(const Message& message) {
  const auto values = message.real_value_count();
  total_ += values;
  if (per_round_.empty()) per_round_.push_back(0);
  per_round_.back() += values;
}

std::uint64_t closed_form_cost(SolverKind kind, std::uint64_t m_features, std::uint64_t k,
                               std::uint64_t clients, std::uint64_t rounds) {
  switch (kind) {
    case SolverKind::FedCAvg:
    case SolverKind::FedCPALM: return m_features * k * clients * rounds;
    case SolverKind::FedCGds: return (m_features * k + k * k) * clients * rounds;
    case SolverKind::PALM:
    case SolverKind::KMeansPP: return 0;
  }
  throw std::invalid_argument("unknown algorithm tag");
}

std::uint64_t closed_form_cost(std::string_view tag, std::uint64_t m_features, std::uint64_t k,
                               std::uint64_t clients, std::uint64_t rounds) {
  return closed_form_cost(parse_solver_kind(tag), m_features, k, clients, rounds);
}

std::uint64_t bootstrap_cost(std::uint64_t m_features, std::uint64_t k, std::uint64_t clients) {
  return (m_features * k + k * k) * clients;
}

Runtime::Runtime(std::size_t clients) : clients_(clients) {
  if (clients == 0) throw std::invalid_argument("runtime needs at least one client");
}

RoundRecord Runtime::run_round(std::uint32_t round, const std::vector<std::size_t>& active,
                               const RoundPlan& plan) {
  if (active.empty()) throw std::invalid_argument("round needs at least one active client");
  std::set<std::size_t> seen;
  for (auto c : active) {
    if (c >= clients_) throw std::invalid_argument("active client id out of range");
    if (!seen.insert(c).second) throw std::invalid_argument("duplicate active client id");
  }
  if (!plan.client_upload || !plan.server_step) {
    throw std::invalid_argument("round plan needs client_upload and server_step");
  }

  meter_.begin_round();

  if (plan.broadcast) {
    for (auto c : active) transport_.send(std::uint32_t(c), *plan.broadcast);
  }
  std::vector<std::optional<Message>> received(active.size());
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (plan.broadcast) {
      received[i] = transport_.recv(std::uint32_t(active[i]));
      if (!received[i]) throw ProtocolError("client did not receive the broadcast");
    }
  }
  for (int phase = 0; phase < plan.phases; ++phase) {
    if (plan.client_compute) {
      for (std::size_t i = 0; i < active.size(); ++i) {
        plan.client_compute(phase, active[i], received[i] ? &*received[i] : nullptr);
      }
    }
    if (plan.barrier) plan.barrier(phase);
  }

  for (auto c : active) {
    Message up = plan.client_upload(c);
    up.round = round;
    up.sender = std::uint32_t(c);
    transport_.send(kServerId, up);
  }

  std::vector<Message> uploads;
  uploads.reserve(active.size());
  while (auto msg = transport_.recv(kServerId)) {
    const auto& e = plan.expected_upload;
    Index rows = 0, cols = 0;
    if (const auto* w = std::get_if<UploadW>(&msg->payload)) {
      rows = w->w.rows();
      cols = w->w.cols();
    } else if (const auto* d = std::get_if<UploadDiff>(&msg->payload)) {
      rows = d->v.rows();
      cols = d->v.cols();
    } else {
      throw ProtocolError("server received a broadcast message");
    }
    if (msg->tag() != e.tag || rows != e.rows || cols != e.cols) {
      throw ProtocolError("upload from client " + std::to_string(msg->sender) +
                          " has unexpected kind or shape");
    }
    meter_.record_uplink(*msg);
    uploads.push_back(std::move(*msg));
  }
  if (uploads.size() != active.size()) throw ProtocolError("missing client uploads");

  plan.server_step(uploads);

  RoundRecord rec;
  rec.round = round;
  rec.active = active;
  rec.uplink_round = meter_.per_round().back();
  rec.uplink_total = meter_.uplink_total();
  return rec;
}

}  // namespace fedclust
